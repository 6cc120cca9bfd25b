#include <CLI11.hpp>

#include <map>
#include <memory>
#include <ostream>

#include "doctr/app/commands.hpp"
#include "doctr/numerics/errors.hpp"

namespace doctr {

namespace {

struct Binding {
  CLI::Option* opt = nullptr;
  std::string key;
  std::shared_ptr<std::string> value;  // null for flags
  std::string fixed;                   // value a flag applies
};

class Surface {
 public:
  explicit Surface(CLI::App* sub) : sub_(sub) {}

  void value(const std::string& name, const std::string& key, const std::string& help) {
    auto v = std::make_shared<std::string>();
    bindings_.push_back({sub_->add_option(name, *v, help), key, v, ""});
  }
  void flag(const std::string& name, const std::string& key, const std::string& fixed, const std::string& help) {
    bindings_.push_back({sub_->add_flag(name, help), key, nullptr, fixed});
  }
  void apply(RunConfig& cfg) const {
    for (const auto& b : bindings_)
      if (b.opt->count()) set_value(cfg, b.key, b.value ? *b.value : b.fixed);
  }
  CLI::App* app() const { return sub_; }

 private:
  CLI::App* sub_;
  std::vector<Binding> bindings_;
};

struct Common {
  std::string profile, config;
  std::vector<std::string> sets;
  CLI::Option* profile_opt = nullptr;
};

void add_common(Surface& s, Common& c) {
  c.profile_opt = s.app()->add_option("--profile", c.profile, "Preset: tiny, desk (default) or paper");
  s.app()->add_option("--config", c.config, "key=value file applied after the profile");
  s.app()->add_option("--set", c.sets, "Extra key=value override (repeatable)");
  s.value("--seed", "seed", "Master seed");
  s.value("--out", "out", "Output path");
}

RunConfig resolve(const std::string& command, const Surface& s, const Common& c) {
  std::vector<std::pair<std::string, std::string>> file_pairs;
  if (!c.config.empty()) {
    file_pairs = to_pairs(read_config(c.config));
  }
  std::string profile = "desk";
  for (const auto& [k, v] : file_pairs)
    if (k == "profile") profile = v;
  if (c.profile_opt->count()) profile = c.profile;
  RunConfig cfg;
  apply_profile(cfg, profile);
  for (const auto& [k, v] : file_pairs)
    if (k != "profile" && k != "command") set_value(cfg, k, v);
  s.apply(cfg);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + kv + "'");
    if (kv.substr(0, eq) == "profile") throw ConfigError("use --profile to select a profile");
    set_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.command = command;
  return cfg;
}

int run(const std::string& command, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (command == "synth") {
    const auto entries = cmd_synth(cfg);
    out << "samples=" << entries.size() << "\nout=" << cfg.out << "\n";
  } else if (command == "train-geo" || command == "train-ill") {
    const TrainResult r = command == "train-geo" ? cmd_train_geo(cfg) : cmd_train_ill(cfg);
    out << "checkpoint=" << r.checkpoint.string() << "\nsteps=" << r.steps << "\nfinal_loss=" << r.final_loss << "\n";
  } else if (command == "rectify") {
    const RectifyResult r = cmd_rectify(cfg);
    out << "out=" << cfg.out << "\nheight=" << r.output.height << "\nwidth=" << r.output.width << "\n";
  } else {
    const EvalReport rep = cmd_evaluate(cfg);
    for (const auto& w : rep.warnings) err << "warning: " << w << "\n";
    if (cfg.out.empty()) out << format_report(rep);
    out << format_summary(rep);
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Document image rectification: synthesis, training, rectification and evaluation", "doctr"};
  app.require_subcommand(1, 1);

  std::vector<std::pair<std::string, std::unique_ptr<Surface>>> surfaces;
  std::map<std::string, Common> commons;
  auto add = [&](const std::string& name, const std::string& help) -> Surface& {
    surfaces.emplace_back(name, std::make_unique<Surface>(app.add_subcommand(name, help)));
    Surface& s = *surfaces.back().second;
    add_common(s, commons[name]);
    return s;
  };

  Surface& synth = add("synth", "Generate a synthetic dataset");
  synth.value("--count", "count", "Number of samples");
  synth.value("--height", "synth_height", "Sample height");
  synth.value("--width", "synth_width", "Sample width");
  synth.value("--warp-strength", "warp_strength", "Warp amplitude scale");
  synth.flag("--no-shading", "synth_shading", "0", "Skip the shading field");

  Surface& geo = add("train-geo", "Train the segmenter and the geometric unwarping transformer");
  geo.value("--data", "data", "Dataset directory");
  geo.value("--steps", "geo_steps", "Training iterations");
  geo.value("--batch", "geo_batch", "Batch size");
  geo.value("--lr", "geo_lr", "Peak learning rate");
  geo.value("--warmup", "geo_warmup", "Warm-up iterations");
  geo.value("--depth", "geo_depth", "Transformer layers K");
  geo.value("--heads", "geo_heads", "Attention heads M");
  geo.value("--tau", "tau", "Mask threshold");
  geo.value("--seg-epochs", "seg_epochs", "Segmenter epochs");
  geo.value("--decoder-residual", "decoder_residual", "previous or after_self_attention");
  geo.value("--checkpoint-every", "checkpoint_every", "Checkpoint period in steps");
  geo.value("--log-every", "log_every", "Loss log period in steps");
  geo.value("--resume", "resume", "Checkpoint to continue from");
  geo.flag("--no-encoder", "use_encoder", "0", "Ablation: drop the encoder");
  geo.flag("--no-decoder", "use_decoder", "0", "Ablation: drop the decoder");
  geo.flag("--bilinear", "learned_upsample", "0", "Ablation: bilinear instead of learned upsampling");
  geo.flag("--no-seg", "use_segmenter", "0", "Ablation: no background removal");

  Surface& ill = add("train-ill", "Train the illumination correction transformer");
  ill.value("--data", "data", "Dataset directory");
  ill.value("--epochs", "ill_epochs", "Training epochs");
  ill.value("--batch", "ill_batch", "Batch size");
  ill.value("--lr", "ill_lr", "Initial learning rate");
  ill.value("--decay-epoch", "ill_decay_epoch", "Epoch of each x0.3 learning-rate drop");
  ill.value("--alpha", "alpha", "Perceptual loss weight");
  ill.value("--depth", "ill_depth", "Transformer layers K");
  ill.value("--heads", "ill_heads", "Attention heads M");
  ill.value("--patch", "ill_patch", "Patch size");
  ill.value("--crops", "ill_crops", "Crops per sample");
  ill.value("--checkpoint-every", "checkpoint_every", "Checkpoint period in steps");
  ill.value("--log-every", "log_every", "Loss log period in steps");
  ill.value("--resume", "resume", "Checkpoint to continue from");
  ill.flag("--no-encoder", "ill_use_encoder", "0", "Ablation: decoder only");
  ill.flag("--no-decoder", "ill_use_decoder", "0", "Ablation: encoder only");

  Surface& rect = add("rectify", "Rectify one image");
  rect.value("input", "input", "Input P6 image");
  rect.value("--geo", "geo_ckpt", "Geometric checkpoint");
  rect.value("--ill", "ill_ckpt", "Illumination checkpoint");
  rect.value("--tau", "tau", "Mask threshold");
  rect.value("--dump-bmap", "dump_bmap", "Write the backward map here");
  rect.flag("--skip-ill", "skip_ill", "1", "Stop after geometric unwarping");

  Surface& eval = add("evaluate", "Score predictions against ground truth");
  eval.value("--pred", "pred", "Prediction directory");
  eval.value("--gt", "gt", "Ground-truth directory");
  eval.value("--text", "text", "Reference text directory");
  eval.value("--metrics", "metrics", "Comma list of ld, ms_ssim, ed, cer");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  for (const auto& [name, s] : surfaces) {
    if (!s->app()->parsed()) continue;
    try {
      return run(name, resolve(name, *s, commons[name]), out, err);
    } catch (const ConfigError& e) {
      err << "error: " << e.what() << "\n";
      return kExitUsage;
    } catch (const ArgumentError& e) {
      err << "error: " << e.what() << "\n";
      return kExitUsage;
    } catch (const TrainingError& e) {
      err << "numeric failure: " << e.what() << "\n";
      return kExitNumeric;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return kExitData;
    }
  }
  return kExitUsage;
}

}  // namespace doctr
