#include "doctr/illtr/illtr.hpp"

#include "doctr/numerics/parallel.hpp"

namespace doctr {

void IllConfig::validate() const {
  if (mini < 1 || patch < mini || patch % mini != 0) {
    throw ConfigError("ill patch " + std::to_string(patch) + " is not a multiple of the mini-patch " + std::to_string(mini));
  }
  if (c_i < 1 || depth < 0 || ffn_mult < 1) throw ConfigError("ill channel, depth and ffn settings must be positive");
  if (heads < 1 || width() % heads != 0) {
    throw ConfigError("ill width " + std::to_string(width()) + " is not divisible by " + std::to_string(heads) + " heads");
  }
  if (!(overlap >= 0.0 && overlap < 0.5)) throw ConfigError("ill overlap must lie in [0, 0.5)");
  if (!(alpha >= 0.0)) throw ConfigError("ill alpha must be non-negative");
}

template <typename T>
Tensor<T> flatten_minipatches(const Tensor<T>& x, int p) {
  if (x.rank() != 3 || x.dim(0) % p != 0 || x.dim(1) % p != 0) {
    throw DimensionError("flatten_minipatches: " + shape_string(x.shape()) + " does not tile by " + std::to_string(p));
  }
  const std::int64_t h = x.dim(0), w = x.dim(1), c = x.dim(2), gh = h / p, gw = w / p;
  std::vector<std::int64_t> idx;
  idx.reserve(static_cast<std::size_t>(x.numel()));
  for (std::int64_t by = 0; by < gh; ++by)
    for (std::int64_t bx = 0; bx < gw; ++bx)
      for (int dy = 0; dy < p; ++dy)
        for (int dx = 0; dx < p; ++dx)
          for (std::int64_t k = 0; k < c; ++k) idx.push_back(((by * p + dy) * w + bx * p + dx) * c + k);
  return gather(x, {gh * gw, static_cast<std::int64_t>(p) * p * c}, std::move(idx));
}

template <typename T>
Tensor<T> unflatten_minipatches(const Tensor<T>& tokens, int height, int width, int channels, int p) {
  const std::int64_t gw = width / p;
  if (height % p != 0 || width % p != 0 || tokens.rank() != 2 || tokens.dim(0) != (height / p) * gw ||
      tokens.dim(1) != static_cast<std::int64_t>(p) * p * channels) {
    throw DimensionError("unflatten_minipatches: " + shape_string(tokens.shape()) + " does not fit the target extent");
  }
  std::vector<std::int64_t> idx;
  idx.reserve(static_cast<std::size_t>(tokens.numel()));
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int k = 0; k < channels; ++k)
        idx.push_back(((y / p) * gw + x / p) * tokens.dim(1) + ((y % p) * p + x % p) * channels + k);
  return gather(tokens, {height, width, channels}, std::move(idx));
}

template <typename T>
IllTr<T>::IllTr(const IllConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  conv1_ = Conv<T>::create(params_, "ill.head.conv1", 3, 3, cfg_.c_i, 1, true, rng);
  conv2_ = Conv<T>::create(params_, "ill.head.conv2", 3, cfg_.c_i, cfg_.c_i, 1, true, rng);
  conv3_ = Conv<T>::create(params_, "ill.head.conv3", 3, cfg_.c_i, cfg_.c_i, 1, true, rng);
  const std::int64_t n = cfg_.tokens(), c = cfg_.width();
  e_p_ = params_.normal("ill.pos_embed", {n, c}, 0.02, rng);
  if (cfg_.use_decoder) e_d_ = params_.normal("ill.query_embed", {n, c}, 0.02, rng);
  if (cfg_.use_encoder) {
    for (int i = 0; i < cfg_.depth; ++i) {
      enc_.push_back(EncoderLayer<T>::create(params_, "ill.enc" + std::to_string(i), c, cfg_.ffn_mult * c, rng));
    }
  }
  if (cfg_.use_decoder) {
    for (int i = 0; i < cfg_.depth; ++i) {
      dec_.push_back(DecoderLayer<T>::create(params_, "ill.dec" + std::to_string(i), c, cfg_.ffn_mult * c, rng));
    }
  }
  out_ = Conv<T>::create(params_, "ill.tail", 3, cfg_.c_i, 3, 1, true, rng);
}

template <typename T>
Tensor<T> IllTr<T>::head(const Tensor<T>& patch) const {
  const int s = cfg_.patch;
  if (patch.rank() != 3 || patch.dim(0) != s || patch.dim(1) != s || patch.dim(2) != 3) {
    throw DimensionError("IllTr expects " + std::to_string(s) + " x " + std::to_string(s) + " x 3 patches, got " +
                         shape_string(patch.shape()));
  }
  auto f = conv3_(relu(conv2_(relu(conv1_(patch)))));
  return flatten_minipatches(f, cfg_.mini);
}

template <typename T>
Tensor<T> IllTr<T>::encoder(const Tensor<T>& f) const {
  return encode(f, e_p_, enc_, cfg_.heads);
}

template <typename T>
Tensor<T> IllTr<T>::decoder(const Tensor<T>& f_k) const {
  if (!cfg_.use_decoder) return f_k;
  return decode(f_k, e_p_, e_d_, dec_, cfg_.heads, cfg_.decoder_residual);
}

template <typename T>
Tensor<T> IllTr<T>::tail(const Tensor<T>& f_d) const {
  auto fmap = unflatten_minipatches(f_d, cfg_.patch, cfg_.patch, cfg_.c_i, cfg_.mini);
  return sigmoid(out_(fmap));
}

template <typename T>
Tensor<T> IllTr<T>::forward(const Tensor<T>& patch) const {
  return tail(decoder(encoder(head(patch))));
}

template <typename T>
PerceptualExtractor<T>::PerceptualExtractor(std::uint64_t seed) {
  Rng rng(seed);
  const int ch[6] = {8, 8, 16, 16, 32, 32};
  std::int64_t cin = 3;
  for (int i = 0; i < 6; ++i) {
    convs_.push_back(Conv<T>::create(params_, "percep.conv" + std::to_string(i + 1), 3, cin, ch[i], i % 2 ? 2 : 1, true, rng));
    cin = ch[i];
  }
  for (auto& [name, t] : params_.entries()) t.set_requires_grad(false);
}

template <typename T>
std::vector<Tensor<T>> PerceptualExtractor<T>::features(const Tensor<T>& image) const {
  std::vector<Tensor<T>> taps;
  Tensor<T> f = image;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    f = relu(convs_[i](f));
    if (i % 2 == 1) taps.push_back(f);
  }
  return taps;
}

template <typename T>
Tensor<T> ill_loss(const Tensor<T>& pred, const Tensor<T>& gt, double alpha, const PerceptualExtractor<T>& v) {
  if (pred.shape() != gt.shape()) {
    throw DimensionError("ill_loss: " + shape_string(pred.shape()) + " vs " + shape_string(gt.shape()));
  }
  auto loss = l1_loss(gt, pred);
  if (alpha == 0.0) return loss;
  const auto fp = v.features(pred), fg = v.features(gt);
  for (std::size_t i = 0; i < fp.size(); ++i) loss = add(loss, scale(l1_loss(fg[i], fp[i]), static_cast<T>(alpha)));
  return loss;
}

Image correct_patch(const Image& patch, const IllTr<float>& model) {
  NoGradGuard guard;
  return tensor_to_image(model.forward(image_to_tensor<float>(patch)));
}

Image correct_illumination(const Image& image, const IllTr<float>& model) {
  const auto& cfg = model.config();
  const PatchLayout layout = make_layout(image.height, image.width, cfg.patch, cfg.overlap);
  auto patches = crop_patches(image, layout);
  std::vector<Image> out(patches.size());
  parallel_for(patches.size(), [&](std::size_t i) { out[i] = correct_patch(patches[i], model); });
  return stitch(out, layout);
}

#define DOCTR_INSTANTIATE_ILL(T)                                                                \
  template Tensor<T> flatten_minipatches(const Tensor<T>&, int);                                \
  template Tensor<T> unflatten_minipatches(const Tensor<T>&, int, int, int, int);               \
  template class IllTr<T>;                                                                      \
  template class PerceptualExtractor<T>;                                                        \
  template Tensor<T> ill_loss(const Tensor<T>&, const Tensor<T>&, double, const PerceptualExtractor<T>&);

DOCTR_INSTANTIATE_ILL(float)
DOCTR_INSTANTIATE_ILL(double)

}  // namespace doctr
