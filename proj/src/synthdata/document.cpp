#include <algorithm>
#include <cmath>

#include "doctr/numerics/errors.hpp"
#include "doctr/synthdata/synthdata.hpp"

namespace doctr {

namespace {

constexpr double kMarginFraction = 0.06;

void fill_rect(Image& img, int y0, int x0, int h, int w, const std::array<float, 3>& color) {
  for (int y = std::max(y0, 0); y < std::min(y0 + h, img.height); ++y)
    for (int x = std::max(x0, 0); x < std::min(x0 + w, img.width); ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[static_cast<std::size_t>(c)];
}

std::string random_line(Rng& rng, int capacity) {
  static const std::string letters = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
  static const std::string punct = ".,-";
  const int target = std::max(1, static_cast<int>(std::lround(capacity * rng.uniform(0.5, 1.0))));
  std::string s;
  while (true) {
    const int len = rng.uniform_int(2, 7);
    std::string word;
    for (int i = 0; i < len; ++i) word += letters[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(letters.size()) - 1))];
    if (rng.uniform() < 0.15) word += punct[static_cast<std::size_t>(rng.uniform_int(0, 2))];
    const std::size_t need = s.empty() ? word.size() : s.size() + 1 + word.size();
    if (static_cast<int>(need) > target) {
      if (s.empty()) s = word.substr(0, static_cast<std::size_t>(target));
      break;
    }
    if (!s.empty()) s += ' ';
    s += word;
  }
  return s;
}

}  // namespace

int default_glyph_scale(int height, int width) { return std::max(1, std::min(height, width) / 64); }

Page render_document(std::uint64_t seed, int height, int width, int glyph_scale) {
  if (height < 1 || width < 1) throw ArgumentError("render_document: extents must be positive");
  Rng rng(seed);
  Page page;
  PageLayout& layout = page.layout;
  layout.height = height;
  layout.width = width;
  layout.scale = glyph_scale > 0 ? glyph_scale : default_glyph_scale(height, width);
  const int s = layout.scale;

  const double tone = rng.uniform(0.9, 0.98);
  std::array<float, 3> paper{};
  for (auto& c : paper) c = static_cast<float>(std::min(1.0, tone + rng.uniform(-0.03, 0.03)));
  const double ink_tone = rng.uniform(0.05, 0.2);
  std::array<float, 3> ink{};
  for (auto& c : ink) c = static_cast<float>(ink_tone + rng.uniform(-0.03, 0.03));
  std::array<float, 3> rule{};
  for (int c = 0; c < 3; ++c) rule[static_cast<std::size_t>(c)] = 0.75f * paper[static_cast<std::size_t>(c)];

  page.image = Image(height, width, 3);
  fill_rect(page.image, 0, 0, height, width, paper);

  const int mx = static_cast<int>(std::ceil(kMarginFraction * width));
  const int my = static_cast<int>(std::ceil(kMarginFraction * height));
  const int right = width - mx, bottom = height - my;
  const int capacity = (right - mx + s) / layout.cell_width();
  const int line_h = layout.cell_height() + 2 * s + 1;
  int y = my;
  std::vector<std::string> texts;
  while (true) {
    const bool figure = !page.layout.lines.empty() && rng.uniform() < 0.2;
    if (figure) {
      const int fh = static_cast<int>(height * rng.uniform(0.12, 0.25));
      const int fw = static_cast<int>((right - mx) * rng.uniform(0.4, 1.0));
      if (y + fh > bottom || fw < 2) break;
      const int fx = mx + rng.uniform_int(0, right - mx - fw);
      const double shade = rng.uniform(0.45, 0.8);
      std::array<float, 3> fill{};
      for (auto& c : fill) c = static_cast<float>(shade + rng.uniform(-0.1, 0.1));
      fill_rect(page.image, y, fx, fh, fw, ink);
      fill_rect(page.image, y + s, fx + s, fh - 2 * s, fw - 2 * s, fill);
      y += fh + 3 * s;
      continue;
    }
    if (capacity < 1 || y + line_h > bottom) break;
    TextLine line{mx, y, random_line(rng, capacity)};
    for (std::size_t k = 0; k < line.text.size(); ++k) {
      const auto& rows = glyph_rows(line.text[k]);
      const int x0 = line.x + static_cast<int>(k) * layout.cell_width();
      for (int r = 0; r < kGlyphHeight; ++r)
        for (int c = 0; c < kGlyphWidth; ++c)
          if ((rows[static_cast<std::size_t>(r)] >> (kGlyphWidth - 1 - c)) & 1)
            fill_rect(page.image, y + r * s, x0 + c * s, s, s, ink);
    }
    fill_rect(page.image, y + layout.cell_height() + s, mx, 1, right - mx, rule);
    texts.push_back(line.text);
    layout.lines.push_back(std::move(line));
    y += line_h + s;
  }
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (i) page.text += '\n';
    page.text += texts[i];
  }
  return page;
}

}  // namespace doctr
