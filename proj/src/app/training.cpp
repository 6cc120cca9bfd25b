#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctr/app/commands.hpp"
#include "doctr/fields/backward_map.hpp"
#include "doctr/numerics/errors.hpp"
#include "doctr/numerics/optim.hpp"
#include "doctr/synthdata/dataset.hpp"

namespace doctr {

namespace {

namespace fs = std::filesystem;

std::string format_float(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

// Appends "step<TAB>value" lines; truncates on open unless resuming.
class TsvLog {
 public:
  TsvLog(const fs::path& path, bool append) : out_(path, append ? std::ios::app : std::ios::trunc) {
    if (!out_) throw IoError("cannot write log " + path.string());
  }
  void add(std::int64_t step, double value) {
    out_ << step << '\t' << format_float(value) << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::int64_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x5eed0000ULL + static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
  return order;
}

// Batch for a step-indexed recipe: the data stream is a concatenation of per-epoch permutations.
std::vector<std::size_t> stream_batch(std::size_t n, int batch, std::uint64_t seed, std::int64_t step) {
  std::vector<std::size_t> out;
  std::int64_t cached_epoch = -1;
  std::vector<std::size_t> order;
  for (int j = 0; j < batch; ++j) {
    const std::int64_t p = step * batch + j;
    const std::int64_t e = p / static_cast<std::int64_t>(n);
    if (e != cached_epoch) {
      order = epoch_order(n, seed, e);
      cached_epoch = e;
    }
    out.push_back(order[static_cast<std::size_t>(p % static_cast<std::int64_t>(n))]);
  }
  return out;
}

std::int64_t steps_per_epoch(std::size_t n, int batch) {
  return static_cast<std::int64_t>((n + static_cast<std::size_t>(batch) - 1) / static_cast<std::size_t>(batch));
}

// Batch for an epoch-indexed recipe; the last batch of an epoch may be short.
std::vector<std::size_t> epoch_batch(std::size_t n, int batch, std::uint64_t seed, std::int64_t step) {
  const std::int64_t per = steps_per_epoch(n, batch);
  const auto order = epoch_order(n, seed, step / per);
  const std::size_t begin = static_cast<std::size_t>(step % per) * static_cast<std::size_t>(batch);
  const std::size_t end = std::min(n, begin + static_cast<std::size_t>(batch));
  return {order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end)};
}

void check_recipe(const RunConfig& cfg) {
  if (cfg.data.empty()) throw ConfigError("training needs --data");
  if (cfg.out.empty()) throw ConfigError("training needs --out");
  if (cfg.log_every < 1 || cfg.checkpoint_every < 1) throw ConfigError("log_every and checkpoint_every must be positive");
}

std::vector<SampleRecord> load_dataset(const std::string& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory " + dir + " does not exist");
  const auto manifest = read_manifest(dir);
  if (manifest.empty()) throw DataError("dataset " + dir + " is empty");
  std::vector<SampleRecord> out;
  out.reserve(manifest.size());
  for (const auto& e : manifest) out.push_back(read_sample(dir, e));
  return out;
}

void prepare_out(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  if (!fs::is_directory(cfg.out)) throw IoError("cannot create output directory " + cfg.out);
  write_config(fs::path(cfg.out) / "config.txt", cfg);
}

// Optimizer moments and the step counter, stored beside a checkpoint for resuming.
Checkpoint optimizer_state(AdamW<float>& opt, const ParameterSet<float>& params, std::int64_t step) {
  Checkpoint c;
  for (std::size_t i = 0; i < params.entries().size(); ++i) {
    const auto& [name, t] = params.entries()[i];
    c.tensors.push_back({"m/" + name, t.shape(), opt.first_moments()[i]});
    c.tensors.push_back({"v/" + name, t.shape(), opt.second_moments()[i]});
  }
  c.config.emplace_back("kind", "adamw");
  c.config.emplace_back("step", std::to_string(step));
  c.config.emplace_back("optimizer_steps", std::to_string(opt.step_count()));
  return c;
}

void restore_optimizer(const Checkpoint& c, AdamW<float>& opt, const ParameterSet<float>& params) {
  for (std::size_t i = 0; i < params.entries().size(); ++i) {
    const auto& [name, t] = params.entries()[i];
    const auto* m = c.find("m/" + name);
    const auto* v = c.find("v/" + name);
    if (!m || !v || m->shape != t.shape() || v->shape != t.shape())
      throw ContractError("optimizer state lacks a matching moment for tensor " + name);
    opt.first_moments()[i] = m->data;
    opt.second_moments()[i] = v->data;
  }
  opt.set_step_count(std::stoll(c.config_value("optimizer_steps", "0")));
}

void require_kind(const Checkpoint& c, const std::string& kind) {
  if (c.config_value("kind") != kind) throw ContractError("resume checkpoint does not hold a '" + kind + "' model");
}

fs::path state_path(const fs::path& ckpt) { return fs::path(ckpt.string() + ".state"); }

// Periodic checkpoints keep their step in the name: <stem>.step000123.dtrc.
fs::path periodic_path(const fs::path& final_path, std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, ".step%06lld.dtrc", static_cast<long long>(step));
  return final_path.parent_path() / (final_path.stem().string() + buf);
}

bool periodic_due(const RunConfig& cfg, std::int64_t step, std::int64_t start, bool resumed) {
  return step % cfg.checkpoint_every == 0 && !(resumed && step == start);
}

void save_all(const fs::path& path, const Checkpoint& model, AdamW<float>& opt, const ParameterSet<float>& params,
              std::int64_t step) {
  write_checkpoint(path, model);
  write_checkpoint(state_path(path), optimizer_state(opt, params, step));
}

std::string kept(const fs::path& last_good) {
  return last_good.empty() ? std::string("; no checkpoint was written")
                           : "; last good checkpoint kept at " + last_good.string();
}

void require_finite(double loss, std::int64_t step, const fs::path& last_good, const char* what) {
  if (!std::isfinite(loss))
    throw TrainingError(std::string(what) + " loss is not finite at step " + std::to_string(step) + kept(last_good));
}

void guarded_step(AdamW<float>& opt, double lr, std::int64_t step, const fs::path& last_good, const char* what) {
  try {
    opt.step(lr);
  } catch (const TrainingError& e) {
    throw TrainingError(std::string(what) + " update failed at step " + std::to_string(step) + ": " + e.what() +
                        kept(last_good));
  }
}

void train_segmenter(const RunConfig& cfg, Segmenter<float>& seg, const std::vector<Image>& inputs,
                     const std::vector<Tensor<float>>& targets) {
  const auto reduction = cfg.seg_config().reduction;
  AdamW<float> opt(seg.params(), AdamWOptions{0.9, 0.999, 1e-8, 0.0});
  TsvLog log(fs::path(cfg.out) / "seg_loss.tsv", false);
  const std::size_t n = inputs.size();
  const std::int64_t per = steps_per_epoch(n, cfg.seg_batch);
  const std::int64_t total = per * cfg.seg_epochs;
  const std::uint64_t seed = mix_seed(cfg.seed, 21);
  for (std::int64_t step = 0; step < total; ++step) {
    const double lr = step_decay_lr(step / per, cfg.seg_lr, cfg.seg_decay, cfg.seg_decay_epoch);
    seg.params().zero_grad();
    const auto batch = epoch_batch(n, cfg.seg_batch, seed, step);
    double loss = 0.0;
    for (std::size_t i : batch) {
      auto l = scale(bce_loss(seg.forward(image_to_tensor<float>(inputs[i])), targets[i], reduction),
                     1.0f / static_cast<float>(batch.size()));
      loss += l.item();
      l.backward();
    }
    require_finite(loss, step, fs::path(), "segmenter");
    guarded_step(opt, lr, step, fs::path(), "segmenter");
    if (step % cfg.log_every == 0 || step + 1 == total) log.add(step, loss);
  }
}

}  // namespace

TrainResult cmd_train_geo(const RunConfig& cfg) {
  check_recipe(cfg);
  if (cfg.geo_steps < 0 || cfg.geo_batch < 1) throw ConfigError("geo_steps must be >= 0 and geo_batch >= 1");
  const auto samples = load_dataset(cfg.data);
  prepare_out(cfg);
  const fs::path ckpt_path = fs::path(cfg.out) / "geo.dtrc";

  GeoModel model = make_geo_model(cfg);
  const int s = cfg.geo_input;
  std::vector<Image> small;
  std::vector<DocMask> masks;
  for (const auto& r : samples) {
    small.push_back(resize_image(r.distorted, s, s));
    masks.push_back(resize_mask(r.mask, s, s));
  }
  std::int64_t start = 0;
  ParameterSet<float>& params = model.geo->params();
  AdamW<float> opt(params, AdamWOptions{0.9, 0.999, 1e-8, cfg.geo_weight_decay});
  if (!cfg.resume.empty()) {
    const Checkpoint ck = read_checkpoint(cfg.resume);
    require_kind(ck, "geo");
    load_params(ck, params, "geo.");
    if (model.seg) load_params(ck, model.seg->params(), "seg.");
    restore_optimizer(read_checkpoint(state_path(cfg.resume)), opt, params);
    start = std::stoll(ck.config_value("step", "0"));
  } else if (model.seg) {
    std::vector<Tensor<float>> mask_targets;
    for (const auto& m : masks) mask_targets.push_back(mask_to_tensor(m));
    train_segmenter(cfg, *model.seg, small, mask_targets);
  }
  // inputs use the segmenter's own masks so training sees what rectification sees
  std::vector<Tensor<float>> inputs, targets;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Image in = model.seg ? remove_background(small[i], binarize(segment(small[i], *model.seg), cfg.tau)) : small[i];
    inputs.push_back(image_to_tensor<float>(in));
    targets.push_back(map_to_tensor<float>(resize_map(samples[i].map, s, s)));
  }

  const bool resumed = !cfg.resume.empty();
  fs::path last_good = resumed ? fs::path(cfg.resume) : fs::path();
  TsvLog loss_log(fs::path(cfg.out) / "loss.tsv", resumed);
  TsvLog lr_log(fs::path(cfg.out) / "lr.tsv", resumed);
  const LrSchedule sched{cfg.geo_lr, cfg.geo_warmup, cfg.geo_steps};
  const std::uint64_t seed = mix_seed(cfg.seed, 11);
  double last = 0.0;
  for (std::int64_t step = start; step < cfg.geo_steps; ++step) {
    params.zero_grad();
    const auto batch = stream_batch(samples.size(), cfg.geo_batch, seed, step);
    std::vector<Tensor<float>> losses;
    double loss = 0.0;
    for (std::size_t i : batch) {
      auto l = scale(geo_loss(model.geo->forward(inputs[i]), targets[i]), 1.0f / static_cast<float>(batch.size()));
      loss += l.item();
      losses.push_back(std::move(l));
    }
    require_finite(loss, step, last_good, "geometric");
    if (periodic_due(cfg, step, start, resumed)) {
      last_good = periodic_path(ckpt_path, step);
      save_all(last_good, geo_checkpoint(model, step), opt, params, step);
    }
    for (auto& l : losses) l.backward();
    losses.clear();
    const double lr = one_cycle_lr(step, sched);
    guarded_step(opt, lr, step, last_good, "geometric");
    if (step % cfg.log_every == 0 || step + 1 == cfg.geo_steps) {
      loss_log.add(step, loss);
      lr_log.add(step, lr);
    }
    last = loss;
  }
  save_all(ckpt_path, geo_checkpoint(model, cfg.geo_steps), opt, params, cfg.geo_steps);
  return {ckpt_path, cfg.geo_steps, last};
}

namespace {

Image crop_clamped(const Image& img, int y0, int x0, int size) {
  Image out(size, size, img.channels);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const int sy = std::clamp(y0 + y, 0, img.height - 1), sx = std::clamp(x0 + x, 0, img.width - 1);
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  return out;
}

}  // namespace

std::vector<std::pair<Image, Image>> ill_training_pairs(const RunConfig& cfg, const std::vector<SampleRecord>& samples,
                                                        std::int64_t epoch) {
  std::vector<std::pair<Image, Image>> pairs;
  const int p = cfg.ill_patch;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Image rect = warp_image(samples[i].distorted, samples[i].map);
    const Image& clean = samples[i].clean;
    const int my = std::max(0, clean.height - p), mx = std::max(0, clean.width - p);
    Rng rng(mix_seed(mix_seed(cfg.seed, 31 + static_cast<std::uint64_t>(epoch)), i));
    for (int k = 0; k < cfg.ill_crops; ++k) {
      int y0 = my / 2, x0 = mx / 2;
      if (cfg.ill_random_crops) {
        y0 = rng.uniform_int(0, my);
        x0 = rng.uniform_int(0, mx);
      } else if (cfg.ill_crops > 1) {
        y0 = my * k / (cfg.ill_crops - 1);
        x0 = mx * k / (cfg.ill_crops - 1);
      }
      pairs.emplace_back(crop_clamped(rect, y0, x0, p), crop_clamped(clean, y0, x0, p));
    }
  }
  return pairs;
}

TrainResult cmd_train_ill(const RunConfig& cfg) {
  check_recipe(cfg);
  if (cfg.ill_epochs < 0 || cfg.ill_batch < 1 || cfg.ill_crops < 1)
    throw ConfigError("ill_epochs must be >= 0, ill_batch and ill_crops >= 1");
  const auto samples = load_dataset(cfg.data);
  prepare_out(cfg);
  const fs::path ckpt_path = fs::path(cfg.out) / "ill.dtrc";

  IllModel model = make_ill_model(cfg);
  const PerceptualExtractor<float> vgg;
  AdamW<float> opt(model.ill->params(), AdamWOptions{0.9, 0.999, 1e-8, cfg.ill_weight_decay});
  std::int64_t start = 0;
  if (!cfg.resume.empty()) {
    const Checkpoint ck = read_checkpoint(cfg.resume);
    require_kind(ck, "ill");
    load_params(ck, model.ill->params(), "ill.");
    restore_optimizer(read_checkpoint(state_path(cfg.resume)), opt, model.ill->params());
    start = std::stoll(ck.config_value("step", "0"));
  }

  const std::size_t n = samples.size() * static_cast<std::size_t>(cfg.ill_crops);
  const std::int64_t per = steps_per_epoch(n, cfg.ill_batch);
  const std::int64_t total = per * cfg.ill_epochs;
  const bool resumed = !cfg.resume.empty();
  fs::path last_good = resumed ? fs::path(cfg.resume) : fs::path();
  TsvLog loss_log(fs::path(cfg.out) / "loss.tsv", resumed);
  TsvLog lr_log(fs::path(cfg.out) / "lr.tsv", resumed);
  const std::uint64_t seed = mix_seed(cfg.seed, 12);
  std::int64_t cached_epoch = -1;
  std::vector<Tensor<float>> xs, ys;
  double last = 0.0;
  for (std::int64_t step = start; step < total; ++step) {
    const std::int64_t epoch = step / per;
    if (epoch != cached_epoch && (cached_epoch < 0 || cfg.ill_random_crops)) {
      xs.clear();
      ys.clear();
      for (auto& [x, y] : ill_training_pairs(cfg, samples, cfg.ill_random_crops ? epoch : 0)) {
        xs.push_back(image_to_tensor<float>(x));
        ys.push_back(image_to_tensor<float>(y));
      }
    }
    cached_epoch = epoch;
    model.ill->params().zero_grad();
    const auto batch = epoch_batch(n, cfg.ill_batch, seed, step);
    std::vector<Tensor<float>> losses;
    double loss = 0.0;
    for (std::size_t i : batch) {
      auto l = scale(ill_loss(model.ill->forward(xs[i]), ys[i], cfg.alpha, vgg), 1.0f / static_cast<float>(batch.size()));
      loss += l.item();
      losses.push_back(std::move(l));
    }
    require_finite(loss, step, last_good, "illumination");
    if (periodic_due(cfg, step, start, resumed)) {
      last_good = periodic_path(ckpt_path, step);
      save_all(last_good, ill_checkpoint(model, step), opt, model.ill->params(), step);
    }
    for (auto& l : losses) l.backward();
    losses.clear();
    const double lr = step_decay_lr(epoch, cfg.ill_lr, cfg.ill_decay, cfg.ill_decay_epoch);
    guarded_step(opt, lr, step, last_good, "illumination");
    if (step % cfg.log_every == 0 || step + 1 == total) {
      loss_log.add(step, loss);
      lr_log.add(step, lr);
    }
    last = loss;
  }
  save_all(ckpt_path, ill_checkpoint(model, total), opt, model.ill->params(), total);
  return {ckpt_path, total, last};
}

}  // namespace doctr
