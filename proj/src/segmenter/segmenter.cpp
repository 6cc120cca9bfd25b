#include "doctr/segmenter/segmenter.hpp"

#include <algorithm>
#include <cmath>

namespace doctr {

void SegConfig::validate() const {
  if (input_size < 4 || input_size % 4 != 0) {
    throw ConfigError("segmenter input size must be a positive multiple of 4, got " + std::to_string(input_size));
  }
  if (c0 < 1 || c1 < 1 || c2 < 1) throw ConfigError("segmenter channel counts must be positive");
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("segmenter threshold must lie in (0, 1)");
}

double DocMask::area_fraction() const {
  if (m.empty()) return 0.0;
  std::size_t n = 0;
  for (auto v : m) n += v;
  return static_cast<double>(n) / static_cast<double>(m.size());
}

template <typename T>
Segmenter<T>::Segmenter(const SegConfig& cfg, std::uint64_t seed, const std::string& prefix) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const std::string p = prefix + ".";
  e0a_ = Conv<T>::create(params_, p + "enc0a", 3, 3, cfg.c0, 1, true, rng);
  e0b_ = Conv<T>::create(params_, p + "enc0b", 3, cfg.c0, cfg.c0, 1, true, rng);
  e1a_ = Conv<T>::create(params_, p + "enc1a", 3, cfg.c0, cfg.c1, 2, true, rng);
  e1b_ = Conv<T>::create(params_, p + "enc1b", 3, cfg.c1, cfg.c1, 1, true, rng);
  e2a_ = Conv<T>::create(params_, p + "enc2a", 3, cfg.c1, cfg.c2, 2, true, rng);
  e2b_ = Conv<T>::create(params_, p + "enc2b", 3, cfg.c2, cfg.c2, 1, true, rng);
  u1_ = Conv<T>::create(params_, p + "dec1", 3, cfg.c2 + cfg.c1, cfg.c1, 1, true, rng);
  u0_ = Conv<T>::create(params_, p + "dec0", 3, cfg.c1 + cfg.c0, cfg.c0, 1, true, rng);
  out_ = Conv<T>::create(params_, p + "out", 1, cfg.c0, 1, 1, true, rng);
}

template <typename T>
Tensor<T> Segmenter<T>::forward(const Tensor<T>& image) const {
  if (image.rank() != 3 || image.dim(0) != cfg_.input_size || image.dim(1) != cfg_.input_size || image.dim(2) != 3) {
    throw DimensionError("segmenter expects " + std::to_string(cfg_.input_size) + " x " +
                         std::to_string(cfg_.input_size) + " x 3 input, got " + shape_string(image.shape()));
  }
  auto s0 = relu(e0b_(relu(e0a_(image))));
  auto s1 = relu(e1b_(relu(e1a_(s0))));
  auto b = relu(e2b_(relu(e2a_(s1))));
  auto d1 = relu(u1_(concat_last<T>({upsample_nearest2(b), s1})));
  auto d0 = relu(u0_(concat_last<T>({upsample_nearest2(d1), s0})));
  return sigmoid(out_(d0));
}

template class Segmenter<float>;
template class Segmenter<double>;

ConfidenceMap segment(const Image& image, const Segmenter<float>& model) {
  if (image.channels != 3) throw DimensionError("segment expects a 3-channel image");
  NoGradGuard guard;
  const auto p = model.forward(image_to_tensor<float>(image));
  ConfidenceMap c;
  c.height = image.height;
  c.width = image.width;
  c.p.assign(p.data().begin(), p.data().end());
  return c;
}

DocMask binarize(const ConfidenceMap& conf, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ArgumentError("binarize: tau must lie in (0, 1)");
  DocMask m{conf.height, conf.width, std::vector<std::uint8_t>(conf.p.size())};
  for (std::size_t i = 0; i < conf.p.size(); ++i) m.m[i] = static_cast<double>(conf.p[i]) >= tau ? 1 : 0;
  return m;
}

Image remove_background(const Image& image, const DocMask& mask) {
  if (image.height != mask.height || image.width != mask.width) {
    throw DimensionError("remove_background: image " + std::to_string(image.height) + "x" +
                         std::to_string(image.width) + " vs mask " + std::to_string(mask.height) + "x" +
                         std::to_string(mask.width));
  }
  Image out = image;
  for (std::size_t i = 0; i < mask.m.size(); ++i) {
    if (mask.m[i]) continue;
    for (int c = 0; c < image.channels; ++c) out.data[i * static_cast<std::size_t>(image.channels) + c] = 0.0f;
  }
  return out;
}

double bce(const ConfidenceMap& pred, const DocMask& gt, Reduction reduction, double eps) {
  if (pred.height != gt.height || pred.width != gt.width) throw DimensionError("bce: extent mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.p.size(); ++i) {
    const double p = std::clamp(static_cast<double>(pred.p[i]), eps, 1.0 - eps);
    s -= gt.m[i] ? std::log(p) : std::log(1.0 - p);
  }
  return reduction == Reduction::Mean ? s / static_cast<double>(pred.p.size()) : s;
}

ConfidenceMap mask_as_confidence(const DocMask& mask) {
  ConfidenceMap c{mask.height, mask.width, std::vector<float>(mask.m.size())};
  for (std::size_t i = 0; i < mask.m.size(); ++i) c.p[i] = mask.m[i] ? 1.0f : 0.0f;
  return c;
}

Tensor<float> mask_to_tensor(const DocMask& mask) {
  std::vector<float> d(mask.m.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = mask.m[i] ? 1.0f : 0.0f;
  return Tensor<float>(Shape{mask.height, mask.width, 1}, std::move(d));
}

DocMask resize_mask(const DocMask& mask, int height, int width) {
  if (height < 1 || width < 1) throw ArgumentError("resize_mask: target extent must be positive");
  DocMask out{height, width, std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width)};
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(mask.height - 1, static_cast<int>((y + 0.5) * mask.height / height));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(mask.width - 1, static_cast<int>((x + 0.5) * mask.width / width));
      out.m[static_cast<std::size_t>(y) * width + x] = mask.m[static_cast<std::size_t>(sy) * mask.width + sx];
    }
  }
  return out;
}

void write_mask_pgm(const std::filesystem::path& path, const DocMask& mask) {
  Image img(mask.height, mask.width, 1);
  for (std::size_t i = 0; i < mask.m.size(); ++i) img.data[i] = mask.m[i] ? 1.0f : 0.0f;
  write_pnm(path, img);
}

DocMask read_mask_pgm(const std::filesystem::path& path) {
  const Image img = read_pnm(path);
  if (img.channels != 1) throw IoError(path.string() + " is not a single-channel graymap");
  DocMask m{img.height, img.width, std::vector<std::uint8_t>(img.data.size())};
  for (std::size_t i = 0; i < img.data.size(); ++i) m.m[i] = img.data[i] >= 0.5f ? 1 : 0;
  return m;
}

}  // namespace doctr
