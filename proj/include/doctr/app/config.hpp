#pragma once

// Run configuration shared by every command: defaults, named profiles, key=value
// parsing and the verbatim echo written next to each run's artifacts.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "doctr/geotr/geotr.hpp"
#include "doctr/illtr/illtr.hpp"
#include "doctr/segmenter/segmenter.hpp"
#include "doctr/synthdata/synthdata.hpp"

namespace doctr {

struct RunConfig {
  std::string command;
  std::string profile = "desk";
  std::uint64_t seed = 0;
  std::string data;
  std::string out;

  // synth
  int count = 8;
  int synth_height = 128;
  int synth_width = 128;
  bool synth_shading = true;
  double warp_strength = 1.0;

  // geometric model
  int geo_input = 128;
  int geo_cg = 128;
  int geo_depth = 4;
  int geo_heads = 4;
  int geo_ffn = 4;
  std::array<int, 3> geo_head_channels{32, 64, 96};
  int geo_tail_channels = 128;
  bool use_encoder = true;
  bool use_decoder = true;
  bool learned_upsample = true;
  std::string decoder_residual = "previous";  // or "after_self_attention"
  bool use_segmenter = true;

  // segmenter
  int seg_c0 = 16;
  int seg_c1 = 32;
  int seg_c2 = 64;
  double tau = 0.5;
  std::string seg_reduction = "sum";  // or "mean"

  // geometric training
  int geo_steps = 2000;
  int geo_batch = 8;
  double geo_lr = 1e-4;
  int geo_warmup = 700;
  double geo_weight_decay = 1e-4;

  // segmenter training
  int seg_epochs = 45;
  int seg_batch = 32;
  double seg_lr = 1e-4;
  int seg_decay_epoch = 30;
  double seg_decay = 0.1;

  // illumination model
  int ill_patch = 128;
  int ill_mini = 4;
  int ill_ci = 16;
  int ill_depth = 6;
  int ill_heads = 8;
  int ill_ffn = 4;
  double ill_overlap = 0.125;
  double alpha = 1e-5;
  bool ill_use_encoder = true;
  bool ill_use_decoder = true;

  // illumination training
  int ill_epochs = 35;
  int ill_batch = 24;
  double ill_lr = 1e-4;
  int ill_decay_epoch = 20;
  double ill_decay = 0.3;
  double ill_weight_decay = 1e-4;
  int ill_crops = 4;
  bool ill_random_crops = true;

  // bookkeeping
  int log_every = 1;
  int checkpoint_every = 500;
  std::string resume;

  // rectify
  std::string input;
  std::string geo_ckpt;
  std::string ill_ckpt;
  bool skip_ill = false;
  std::string dump_bmap;

  // evaluate
  std::string pred;
  std::string gt;
  std::string text;
  std::string metrics = "ld,ms_ssim,ed,cer";

  GeoConfig geo_config() const;
  SegConfig seg_config() const;
  IllConfig ill_config() const;
  SynthConfig synth_config() const;
};

/// Names accepted by apply_profile.
std::vector<std::string> profile_names();
/// Resets every model and recipe field to the named preset. Throws ConfigError for
/// an unknown name.
void apply_profile(RunConfig& cfg, const std::string& name);

/// Every key in a fixed order.
std::vector<std::string> config_keys();
std::string get_value(const RunConfig& cfg, const std::string& key);
/// Throws ConfigError for an unknown key or a malformed value.
void set_value(RunConfig& cfg, const std::string& key, const std::string& value);

/// Ordered key=value pairs covering every field.
std::vector<std::pair<std::string, std::string>> to_pairs(const RunConfig& cfg);
std::string to_text(const RunConfig& cfg);
/// Parses key=value lines; blank lines and lines starting with '#' are skipped.
std::vector<std::pair<std::string, std::string>> parse_pairs(const std::string& text);
RunConfig from_pairs(const std::vector<std::pair<std::string, std::string>>& pairs);
RunConfig read_config(const std::filesystem::path& path);
void write_config(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace doctr
