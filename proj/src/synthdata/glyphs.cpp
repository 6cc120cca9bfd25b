#include <algorithm>
#include <limits>
#include <map>

#include "doctr/numerics/errors.hpp"
#include "doctr/synthdata/synthdata.hpp"

namespace doctr {

namespace {

using Rows = std::array<std::uint8_t, kGlyphHeight>;

const std::map<char, Rows>& glyph_table() {
  static const std::map<char, Rows> table{
      {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}}, {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
      {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}}, {'D', {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E}},
      {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}}, {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
      {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}}, {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}}, {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
      {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}}, {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
      {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}}, {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
      {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
      {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}}, {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
      {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}}, {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
      {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
      {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}}, {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
      {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}}, {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}}, {',', {0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08}},
      {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}}, {' ', {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00}},
  };
  return table;
}

}  // namespace

const std::string& glyph_alphabet() {
  static const std::string alphabet = [] {
    std::string s;
    for (const auto& [c, rows] : glyph_table()) s += c;
    return s;
  }();
  return alphabet;
}

const std::array<std::uint8_t, kGlyphHeight>& glyph_rows(char c) {
  const auto& t = glyph_table();
  const auto it = t.find(c);
  if (it == t.end()) throw ArgumentError(std::string("no glyph for character '") + c + "'");
  return it->second;
}

std::string read_text(const Image& page, const PageLayout& layout) {
  if (page.height != layout.height || page.width != layout.width)
    throw DimensionError("read_text: page extent does not match the layout");
  const Image gray = page.channels == 1 ? page : to_gray(page);
  const int s = layout.scale;
  std::string out;
  for (std::size_t li = 0; li < layout.lines.size(); ++li) {
    if (li) out += '\n';
    const TextLine& line = layout.lines[li];
    for (std::size_t k = 0; k < line.text.size(); ++k) {
      const int x0 = line.x + static_cast<int>(k) * layout.cell_width();
      // Ink coverage per glyph dot, normalized so the cell's brightest dot is paper.
      std::array<double, kGlyphWidth * kGlyphHeight> dots{};
      double paper = 0.0, ink = 1.0;
      for (int r = 0; r < kGlyphHeight; ++r)
        for (int c = 0; c < kGlyphWidth; ++c) {
          double sum = 0.0;
          for (int dy = 0; dy < s; ++dy)
            for (int dx = 0; dx < s; ++dx) {
              const int y = std::clamp(line.y + r * s + dy, 0, gray.height - 1);
              const int x = std::clamp(x0 + c * s + dx, 0, gray.width - 1);
              sum += gray.at(y, x);
            }
          const double v = sum / (s * s);
          dots[static_cast<std::size_t>(r * kGlyphWidth + c)] = v;
          paper = std::max(paper, v);
          ink = std::min(ink, v);
        }
      const double span = paper - ink;
      char best = ' ';
      double best_cost = std::numeric_limits<double>::infinity();
      for (const auto& [ch, rows] : glyph_table()) {
        double cost = 0.0;
        for (int r = 0; r < kGlyphHeight; ++r)
          for (int c = 0; c < kGlyphWidth; ++c) {
            const bool on = (rows[static_cast<std::size_t>(r)] >> (kGlyphWidth - 1 - c)) & 1;
            // Coverage in [0, 1]; a cell with no contrast reads as blank.
            const double cov = span > 0.15 ? (paper - dots[static_cast<std::size_t>(r * kGlyphWidth + c)]) / span : 0.0;
            cost += std::abs(cov - (on ? 1.0 : 0.0));
          }
        if (cost < best_cost) {
          best_cost = cost;
          best = ch;
        }
      }
      out += best;
    }
  }
  return out;
}

}  // namespace doctr
