#pragma once

// Synthetic paired data: procedural pages, smooth warps with exact backward
// maps, shading fields and backgrounds.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "doctr/fields/backward_map.hpp"
#include "doctr/image.hpp"
#include "doctr/numerics/rng.hpp"
#include "doctr/segmenter/segmenter.hpp"

namespace doctr {

inline constexpr int kGlyphWidth = 5;
inline constexpr int kGlyphHeight = 7;

/// Characters the built-in 5 x 7 glyph set can render, space included.
const std::string& glyph_alphabet();
/// Row bitmaps, top row first, bit 4 is the leftmost column. Unknown characters throw ArgumentError.
const std::array<std::uint8_t, kGlyphHeight>& glyph_rows(char c);

struct TextLine {
  int x = 0;  // left edge of the first cell
  int y = 0;  // top edge of the cells
  std::string text;
};

struct PageLayout {
  int height = 0;
  int width = 0;
  int scale = 1;  // pixels per glyph dot
  std::vector<TextLine> lines;

  int cell_width() const { return (kGlyphWidth + 1) * scale; }
  int cell_height() const { return kGlyphHeight * scale; }
};

struct Page {
  Image image;  // 3 channels
  std::string text;
  PageLayout layout;
};

/// Glyph scale used when none is given: one dot per 64 pixels of the shorter side, at least 1.
int default_glyph_scale(int height, int width);

/// Procedural page: ruled text lines and filled figures on a tinted paper tone,
/// with all ink kept at least 6% of each extent away from the border. The text
/// is the rendered lines joined by '\n'.
Page render_document(std::uint64_t seed, int height, int width, int glyph_scale = 0);

/// Reads the text back by nearest-template matching of every cell in `layout`.
std::string read_text(const Image& page, const PageLayout& layout);

struct Fold {
  bool horizontal = true;  // displaces u as a function of u, else v as a function of v
  double amplitude = 0.0;
  double frequency = 1.0;  // cycles across the page
  double phase = 0.0;
};

struct WarpParams {
  /// Distance of the undistorted page corners from the frame border, normalized.
  double inset = 0.0;
  double jitter = 0.0;
  /// Unit offsets (dx, dy) for the TL, TR, BR, BL corners, scaled by `jitter`.
  std::array<double, 8> corner_offsets{};
  std::vector<Fold> folds;
  /// Vertical bow of horizontal lines, v += curl * sin(pi u).
  double curl = 0.0;

  static WarpParams random(Rng& rng, double strength = 1.0);
  WarpParams damped(double factor) const;
};

/// Distorted-frame position (normalized) of the page point (u, v).
std::array<double, 2> warp_point(const WarpParams& p, double u, double v);

/// Smallest Jacobian determinant of warp_point over an n x n grid of the unit square.
double min_jacobian(const WarpParams& p, int n = 32);

inline constexpr double kMinJacobian = 0.05;

/// Backward map of the warp sampled at every pixel of an H x W page. When the
/// Jacobian check fails the amplitudes are halved, up to five times, after which
/// ContractError is thrown. `used` receives the accepted parameters.
BackwardMap gen_warp(const WarpParams& params, int height, int width, WarpParams* used = nullptr);

/// For every pixel of an H x W distorted frame, the page coordinate mapping onto it,
/// by 20 Newton iterations on warp_point. Entries are NaN when the iteration did not
/// converge to within 1e-6.
BackwardMap invert_warp(const WarpParams& params, int height, int width);

/// Smooth multiplicative single-channel field in [0.4, 1]: a low-frequency
/// variation plus up to two soft shadow bands.
Image gen_shading(std::uint64_t seed, int height, int width);

/// Dark textured clutter the page is composited onto.
Image gen_background(std::uint64_t seed, int height, int width);

struct SynthConfig {
  int height = 128;
  int width = 128;
  int glyph_scale = 0;
  double warp_strength = 1.0;
  bool shading = true;
};

struct SampleRecord {
  std::uint64_t seed = 0;
  Image distorted;  // page warped, shaded and composited, H x W x 3
  BackwardMap map;  // rectified pixel -> distorted-frame coordinate
  DocMask mask;     // page footprint in the distorted frame
  Image clean;      // undistorted, unshaded page
  Image shading;    // page-domain shading field, 1 channel
  std::string text;
};

SampleRecord gen_sample(std::uint64_t seed, const SynthConfig& cfg = {});

/// MS-SSIM between the clean page and the distorted image unwarped by the
/// ground-truth map with the page-domain shading divided out.
double round_trip_score(const SampleRecord& r);

inline constexpr double kRoundTripThreshold = 0.9;

}  // namespace doctr
