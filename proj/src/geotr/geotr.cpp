#include "doctr/geotr/geotr.hpp"

#include "doctr/fields/resample.hpp"

namespace doctr {

void GeoConfig::validate() const {
  if (input_size < 8 || input_size % 8 != 0) {
    throw ConfigError("geo input size must be a positive multiple of 8, got " + std::to_string(input_size));
  }
  if (depth < 0) throw ConfigError("geo depth must be non-negative, got " + std::to_string(depth));
  if (heads < 1 || c_g % heads != 0) {
    throw ConfigError("geo width " + std::to_string(c_g) + " is not divisible by " + std::to_string(heads) + " heads");
  }
  if (ffn_mult < 1 || tail_channels < 1) throw ConfigError("geo ffn multiplier and tail width must be positive");
  for (int c : head_channels)
    if (c < 1) throw ConfigError("geo head channels must be positive");
}

template <typename T>
ResidualBlock<T> ResidualBlock<T>::create(ParameterSet<T>& ps, const std::string& name, std::int64_t cin,
                                          std::int64_t cout, int stride, Rng& rng) {
  ResidualBlock b;
  b.conv1 = Conv<T>::create(ps, name + ".conv1", 3, cin, cout, stride, true, rng);
  b.conv2 = Conv<T>::create(ps, name + ".conv2", 3, cout, cout, 1, true, rng);
  if (stride != 1 || cin != cout) b.skip = Conv<T>::create(ps, name + ".skip", 1, cin, cout, stride, true, rng);
  return b;
}

template <typename T>
Tensor<T> ResidualBlock<T>::operator()(const Tensor<T>& x) const {
  auto y = relu(instance_norm(conv1(x)));
  y = instance_norm(conv2(y));
  auto s = skip ? instance_norm((*skip)(x)) : x;
  return relu(add(s, y));
}

template <typename T>
GeoTr<T>::GeoTr(const GeoConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const auto& ch = cfg_.head_channels;
  stem_ = Conv<T>::create(params_, "geo.head.stem", 3, 3, ch[0], 1, true, rng);
  std::int64_t cin = ch[0];
  for (int stage = 0; stage < 3; ++stage) {
    for (int k = 0; k < 2; ++k) {
      const std::string name = "geo.head.block" + std::to_string(2 * stage + k);
      blocks_.push_back(ResidualBlock<T>::create(params_, name, cin, ch[stage], k == 0 ? 2 : 1, rng));
      cin = ch[stage];
    }
  }
  proj_ = Conv<T>::create(params_, "geo.head.proj", 3, cin, cfg_.c_g, 1, true, rng);
  const std::int64_t n = cfg_.tokens(), c = cfg_.c_g;
  e_p_ = params_.normal("geo.pos_embed", {n, c}, 0.02, rng);
  if (cfg_.use_decoder) e_d_ = params_.normal("geo.query_embed", {n, c}, 0.02, rng);
  if (cfg_.use_encoder) {
    for (int i = 0; i < cfg_.depth; ++i) {
      enc_.push_back(EncoderLayer<T>::create(params_, "geo.enc" + std::to_string(i), c, cfg_.ffn_mult * c, rng));
    }
  }
  if (cfg_.use_decoder) {
    for (int i = 0; i < cfg_.depth; ++i) {
      dec_.push_back(DecoderLayer<T>::create(params_, "geo.dec" + std::to_string(i), c, cfg_.ffn_mult * c, rng));
    }
  }
  flow1_ = Conv<T>::create(params_, "geo.tail.flow1", 3, c, cfg_.tail_channels, 1, true, rng);
  flow2_ = Conv<T>::create(params_, "geo.tail.flow2", 3, cfg_.tail_channels, 2, 1, true, rng);
  // Start close to the identity map.
  for (auto& v : flow2_.kernel.mutable_data()) v *= T(0.1);
  if (cfg_.learned_upsample) {
    mask1_ = Conv<T>::create(params_, "geo.tail.mask1", 3, c, cfg_.tail_channels, 1, true, rng);
    mask2_ = Conv<T>::create(params_, "geo.tail.mask2", 1, cfg_.tail_channels, 9 * 64, 1, true, rng);
  }
  grid_ = identity_grid<T>(cfg_.input_size, cfg_.input_size);
}

template <typename T>
Tensor<T> GeoTr<T>::head(const Tensor<T>& image) const {
  const int s = cfg_.input_size;
  if (image.rank() != 3 || image.dim(0) != s || image.dim(1) != s || image.dim(2) != 3) {
    throw DimensionError("GeoTr expects " + std::to_string(s) + " x " + std::to_string(s) + " x 3 input, got " +
                         shape_string(image.shape()));
  }
  auto f = relu(instance_norm(stem_(image)));
  for (const auto& b : blocks_) f = b(f);
  f = proj_(f);
  return f.reshape({cfg_.tokens(), cfg_.c_g});
}

template <typename T>
Tensor<T> GeoTr<T>::encoder(const Tensor<T>& f_s) const {
  return encode(f_s, e_p_, enc_, cfg_.heads);
}

template <typename T>
Tensor<T> GeoTr<T>::decoder(const Tensor<T>& f_k) const {
  if (!cfg_.use_decoder) return f_k;
  return decode(f_k, e_p_, e_d_, dec_, cfg_.heads, cfg_.decoder_residual);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> GeoTr<T>::tail_fields(const Tensor<T>& f_d) const {
  const int g = cfg_.grid();
  if (f_d.rank() != 2 || f_d.dim(0) != cfg_.tokens() || f_d.dim(1) != cfg_.c_g) {
    throw DimensionError("GeoTr tail expects " + std::to_string(cfg_.tokens()) + " x " + std::to_string(cfg_.c_g) +
                         " tokens, got " + shape_string(f_d.shape()));
  }
  auto fmap = f_d.reshape({g, g, cfg_.c_g});
  auto coarse = flow2_(relu(flow1_(fmap)));
  Tensor<T> mask;
  if (cfg_.learned_upsample) {
    mask = softmax(mask2_(relu(mask1_(fmap))).reshape({g, g, 9, 64}), {2});
  }
  return {coarse, mask};
}

template <typename T>
Tensor<T> GeoTr<T>::tail(const Tensor<T>& f_d) const {
  auto [coarse, mask] = tail_fields(f_d);
  auto disp = cfg_.learned_upsample ? convex_upsample(coarse, mask, 8)
                                    : resize_bilinear(coarse, cfg_.input_size, cfg_.input_size);
  return add(grid_, disp);
}

template <typename T>
Tensor<T> GeoTr<T>::forward(const Tensor<T>& image) const {
  return tail(decoder(encoder(head(image))));
}

template struct ResidualBlock<float>;
template struct ResidualBlock<double>;
template class GeoTr<float>;
template class GeoTr<double>;

template <typename T>
Tensor<T> geo_loss(const Tensor<T>& pred, const Tensor<T>& gt) {
  if (pred.shape() != gt.shape()) {
    throw DimensionError("geo_loss: " + shape_string(pred.shape()) + " vs " + shape_string(gt.shape()));
  }
  return l1_loss(pred, gt);
}

template Tensor<float> geo_loss(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> geo_loss(const Tensor<double>&, const Tensor<double>&);

double geo_loss(const BackwardMap& pred, const BackwardMap& gt) { return map_l1(pred, gt); }

BackwardMap predict_map(const Image& input, const GeoTr<float>& geo) {
  NoGradGuard guard;
  return map_from_tensor(geo.forward(image_to_tensor<float>(input)));
}

Image apply_map(const Image& image, const BackwardMap& f_b, BackwardMap* f_B) {
  auto full = resize_map(f_b, image.height, image.width);
  Image out = warp_image(image, full);
  if (f_B) *f_B = std::move(full);
  return out;
}

namespace {

constexpr double kMinDocumentArea = 0.01;

UnwarpResult finish(const Image& image, const Image& excluded, DocMask mask, const GeoTr<float>& geo) {
  UnwarpResult r;
  const auto f_b = predict_map(excluded, geo);
  r.rectified = apply_map(image, f_b, &r.map);
  r.mask = std::move(mask);
  return r;
}

}  // namespace

UnwarpResult unwarp(const Image& image, const Segmenter<float>* seg, const GeoTr<float>& geo, double tau) {
  if (image.empty() || image.channels != 3) throw ArgumentError("unwarp expects a non-empty 3-channel image");
  const int s = geo.config().input_size;
  const Image small = resize_image(image, s, s);
  if (!seg) return finish(image, small, DocMask{s, s, std::vector<std::uint8_t>(small.pixel_count(), 1)}, geo);
  if (seg->config().input_size != s) {
    throw ConfigError("segmenter input size " + std::to_string(seg->config().input_size) +
                      " differs from the unwarping input size " + std::to_string(s));
  }
  DocMask mask = binarize(segment(small, *seg), tau);
  if (mask.area_fraction() < kMinDocumentArea) throw PipelineError("no document found");
  const Image excluded = remove_background(small, mask);
  return finish(image, excluded, std::move(mask), geo);
}

UnwarpResult unwarp_masked(const Image& image, const DocMask& mask, const GeoTr<float>& geo) {
  if (image.empty() || image.channels != 3) throw ArgumentError("unwarp expects a non-empty 3-channel image");
  const int s = geo.config().input_size;
  if (mask.area_fraction() < kMinDocumentArea) throw PipelineError("no document found");
  const Image small = resize_image(image, s, s);
  return finish(image, remove_background(small, resize_mask(mask, s, s)), resize_mask(mask, s, s), geo);
}

}  // namespace doctr
