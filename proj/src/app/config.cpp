#include "doctr/app/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "doctr/numerics/errors.hpp"

namespace doctr {

GeoConfig RunConfig::geo_config() const {
  GeoConfig g;
  g.input_size = geo_input;
  g.c_g = geo_cg;
  g.depth = geo_depth;
  g.heads = geo_heads;
  g.ffn_mult = geo_ffn;
  g.head_channels = geo_head_channels;
  g.tail_channels = geo_tail_channels;
  g.use_encoder = use_encoder;
  g.use_decoder = use_decoder;
  g.learned_upsample = learned_upsample;
  g.decoder_residual =
      decoder_residual == "after_self_attention" ? DecoderResidual::AfterSelfAttention : DecoderResidual::Previous;
  g.validate();
  return g;
}

SegConfig RunConfig::seg_config() const {
  SegConfig s;
  s.input_size = geo_input;
  s.c0 = seg_c0;
  s.c1 = seg_c1;
  s.c2 = seg_c2;
  s.tau = tau;
  s.reduction = seg_reduction == "mean" ? Reduction::Mean : Reduction::Sum;
  s.validate();
  return s;
}

IllConfig RunConfig::ill_config() const {
  IllConfig c;
  c.patch = ill_patch;
  c.mini = ill_mini;
  c.c_i = ill_ci;
  c.depth = ill_depth;
  c.heads = ill_heads;
  c.ffn_mult = ill_ffn;
  c.overlap = ill_overlap;
  c.alpha = alpha;
  c.use_encoder = ill_use_encoder;
  c.use_decoder = ill_use_decoder;
  c.validate();
  return c;
}

SynthConfig RunConfig::synth_config() const {
  SynthConfig s;
  s.height = synth_height;
  s.width = synth_width;
  s.warp_strength = warp_strength;
  s.shading = synth_shading;
  return s;
}

namespace {

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw ConfigError("config key '" + key + "' cannot take the value '" + value + "'");
}

template <typename I>
I parse_integer(const std::string& key, const std::string& s) {
  I v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) bad_value(key, s);
  return v;
}

double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) bad_value(key, s);
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  bad_value(key, s);
}

// Shortest text that reads back to the same double.
std::string format_double(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

template <typename M>
Field int_field(const std::string& key, M RunConfig::*m) {
  return {key, [m](const RunConfig& c) { return std::to_string(c.*m); },
          [m, key](RunConfig& c, const std::string& s) { c.*m = parse_integer<M>(key, s); }};
}

Field double_field(const std::string& key, double RunConfig::*m) {
  return {key, [m](const RunConfig& c) { return format_double(c.*m); },
          [m, key](RunConfig& c, const std::string& s) { c.*m = parse_double(key, s); }};
}

Field bool_field(const std::string& key, bool RunConfig::*m) {
  return {key, [m](const RunConfig& c) { return std::string(c.*m ? "1" : "0"); },
          [m, key](RunConfig& c, const std::string& s) { c.*m = parse_bool(key, s); }};
}

Field string_field(const std::string& key, std::string RunConfig::*m, std::vector<std::string> allowed = {}) {
  return {key, [m](const RunConfig& c) { return c.*m; },
          [m, key, allowed](RunConfig& c, const std::string& s) {
            if (s.find('\n') != std::string::npos) bad_value(key, s);
            if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), s) == allowed.end()) bad_value(key, s);
            c.*m = s;
          }};
}

Field channels_field() {
  return {"geo_head_channels",
          [](const RunConfig& c) {
            return std::to_string(c.geo_head_channels[0]) + "," + std::to_string(c.geo_head_channels[1]) + "," +
                   std::to_string(c.geo_head_channels[2]);
          },
          [](RunConfig& c, const std::string& s) {
            std::array<int, 3> v{};
            std::size_t start = 0;
            for (int i = 0; i < 3; ++i) {
              const std::size_t end = i < 2 ? s.find(',', start) : s.size();
              if (end == std::string::npos) bad_value("geo_head_channels", s);
              v[static_cast<std::size_t>(i)] = parse_integer<int>("geo_head_channels", s.substr(start, end - start));
              start = end + 1;
            }
            c.geo_head_channels = v;
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = [] {
    using R = RunConfig;
    std::vector<Field> v;
    v.push_back(string_field("command", &R::command));
    v.push_back(string_field("profile", &R::profile));
    v.push_back(int_field("seed", &R::seed));
    v.push_back(string_field("data", &R::data));
    v.push_back(string_field("out", &R::out));
    v.push_back(int_field("count", &R::count));
    v.push_back(int_field("synth_height", &R::synth_height));
    v.push_back(int_field("synth_width", &R::synth_width));
    v.push_back(bool_field("synth_shading", &R::synth_shading));
    v.push_back(double_field("warp_strength", &R::warp_strength));
    v.push_back(int_field("geo_input", &R::geo_input));
    v.push_back(int_field("geo_cg", &R::geo_cg));
    v.push_back(int_field("geo_depth", &R::geo_depth));
    v.push_back(int_field("geo_heads", &R::geo_heads));
    v.push_back(int_field("geo_ffn", &R::geo_ffn));
    v.push_back(channels_field());
    v.push_back(int_field("geo_tail_channels", &R::geo_tail_channels));
    v.push_back(bool_field("use_encoder", &R::use_encoder));
    v.push_back(bool_field("use_decoder", &R::use_decoder));
    v.push_back(bool_field("learned_upsample", &R::learned_upsample));
    v.push_back(string_field("decoder_residual", &R::decoder_residual, {"previous", "after_self_attention"}));
    v.push_back(bool_field("use_segmenter", &R::use_segmenter));
    v.push_back(int_field("seg_c0", &R::seg_c0));
    v.push_back(int_field("seg_c1", &R::seg_c1));
    v.push_back(int_field("seg_c2", &R::seg_c2));
    v.push_back(double_field("tau", &R::tau));
    v.push_back(string_field("seg_reduction", &R::seg_reduction, {"sum", "mean"}));
    v.push_back(int_field("geo_steps", &R::geo_steps));
    v.push_back(int_field("geo_batch", &R::geo_batch));
    v.push_back(double_field("geo_lr", &R::geo_lr));
    v.push_back(int_field("geo_warmup", &R::geo_warmup));
    v.push_back(double_field("geo_weight_decay", &R::geo_weight_decay));
    v.push_back(int_field("seg_epochs", &R::seg_epochs));
    v.push_back(int_field("seg_batch", &R::seg_batch));
    v.push_back(double_field("seg_lr", &R::seg_lr));
    v.push_back(int_field("seg_decay_epoch", &R::seg_decay_epoch));
    v.push_back(double_field("seg_decay", &R::seg_decay));
    v.push_back(int_field("ill_patch", &R::ill_patch));
    v.push_back(int_field("ill_mini", &R::ill_mini));
    v.push_back(int_field("ill_ci", &R::ill_ci));
    v.push_back(int_field("ill_depth", &R::ill_depth));
    v.push_back(int_field("ill_heads", &R::ill_heads));
    v.push_back(int_field("ill_ffn", &R::ill_ffn));
    v.push_back(double_field("ill_overlap", &R::ill_overlap));
    v.push_back(double_field("alpha", &R::alpha));
    v.push_back(bool_field("ill_use_encoder", &R::ill_use_encoder));
    v.push_back(bool_field("ill_use_decoder", &R::ill_use_decoder));
    v.push_back(int_field("ill_epochs", &R::ill_epochs));
    v.push_back(int_field("ill_batch", &R::ill_batch));
    v.push_back(double_field("ill_lr", &R::ill_lr));
    v.push_back(int_field("ill_decay_epoch", &R::ill_decay_epoch));
    v.push_back(double_field("ill_decay", &R::ill_decay));
    v.push_back(double_field("ill_weight_decay", &R::ill_weight_decay));
    v.push_back(int_field("ill_crops", &R::ill_crops));
    v.push_back(bool_field("ill_random_crops", &R::ill_random_crops));
    v.push_back(int_field("log_every", &R::log_every));
    v.push_back(int_field("checkpoint_every", &R::checkpoint_every));
    v.push_back(string_field("resume", &R::resume));
    v.push_back(string_field("input", &R::input));
    v.push_back(string_field("geo_ckpt", &R::geo_ckpt));
    v.push_back(string_field("ill_ckpt", &R::ill_ckpt));
    v.push_back(bool_field("skip_ill", &R::skip_ill));
    v.push_back(string_field("dump_bmap", &R::dump_bmap));
    v.push_back(string_field("pred", &R::pred));
    v.push_back(string_field("gt", &R::gt));
    v.push_back(string_field("text", &R::text));
    v.push_back(string_field("metrics", &R::metrics));
    return v;
  }();
  return f;
}

const Field& field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  throw ConfigError("unknown config key '" + key + "'");
}

void tiny_profile(RunConfig& c) {
  c.synth_height = c.synth_width = 128;
  c.geo_input = 64;
  c.geo_cg = 64;
  c.geo_depth = 2;
  c.geo_heads = 4;
  c.geo_ffn = 2;
  c.geo_head_channels = {16, 32, 48};
  c.geo_tail_channels = 64;
  c.seg_c0 = 4;
  c.seg_c1 = 8;
  c.seg_c2 = 16;
  c.seg_reduction = "mean";
  c.geo_steps = 1000;
  c.geo_batch = 8;
  c.geo_lr = 1e-3;
  c.geo_warmup = 100;
  c.geo_weight_decay = 0.0;
  c.seg_epochs = 100;
  c.seg_batch = 8;
  c.seg_lr = 3e-3;
  c.seg_decay_epoch = 75;
  c.ill_patch = 32;
  c.ill_mini = 4;
  c.ill_ci = 4;
  c.ill_depth = 1;
  c.ill_heads = 2;
  c.ill_ffn = 2;
  c.ill_epochs = 600;
  c.ill_batch = 4;
  c.ill_lr = 3e-3;
  c.ill_decay_epoch = 450;
  c.ill_weight_decay = 0.0;
  c.ill_crops = 1;
  c.ill_random_crops = false;
  c.checkpoint_every = 500;
}

void desk_profile(RunConfig& c) {
  const RunConfig d;
  c.synth_height = d.synth_height;
  c.synth_width = d.synth_width;
  c.geo_input = d.geo_input;
  c.geo_cg = d.geo_cg;
  c.geo_depth = d.geo_depth;
  c.geo_heads = d.geo_heads;
  c.geo_ffn = d.geo_ffn;
  c.geo_head_channels = d.geo_head_channels;
  c.geo_tail_channels = d.geo_tail_channels;
  c.seg_c0 = d.seg_c0;
  c.seg_c1 = d.seg_c1;
  c.seg_c2 = d.seg_c2;
  c.seg_reduction = d.seg_reduction;
  c.geo_steps = d.geo_steps;
  c.geo_batch = d.geo_batch;
  c.geo_lr = d.geo_lr;
  c.geo_warmup = d.geo_warmup;
  c.geo_weight_decay = d.geo_weight_decay;
  c.seg_epochs = d.seg_epochs;
  c.seg_batch = d.seg_batch;
  c.seg_lr = d.seg_lr;
  c.seg_decay_epoch = d.seg_decay_epoch;
  c.ill_patch = d.ill_patch;
  c.ill_mini = d.ill_mini;
  c.ill_ci = d.ill_ci;
  c.ill_depth = d.ill_depth;
  c.ill_heads = d.ill_heads;
  c.ill_ffn = d.ill_ffn;
  c.ill_epochs = d.ill_epochs;
  c.ill_batch = d.ill_batch;
  c.ill_lr = d.ill_lr;
  c.ill_decay_epoch = d.ill_decay_epoch;
  c.ill_weight_decay = d.ill_weight_decay;
  c.ill_crops = d.ill_crops;
  c.ill_random_crops = d.ill_random_crops;
  c.checkpoint_every = d.checkpoint_every;
}

void paper_profile(RunConfig& c) {
  desk_profile(c);
  c.synth_height = c.synth_width = 288;
  c.geo_input = 288;
  c.geo_cg = 512;
  c.geo_depth = 6;
  c.geo_heads = 8;
  c.geo_ffn = 4;
  c.geo_head_channels = {64, 128, 256};
  c.geo_tail_channels = 256;
  c.geo_steps = 500000;
  c.checkpoint_every = 10000;
}

}  // namespace

std::vector<std::string> profile_names() { return {"tiny", "desk", "paper"}; }

void apply_profile(RunConfig& cfg, const std::string& name) {
  if (name == "tiny") {
    tiny_profile(cfg);
  } else if (name == "desk") {
    desk_profile(cfg);
  } else if (name == "paper") {
    paper_profile(cfg);
  } else {
    throw ConfigError("unknown profile '" + name + "' (expected tiny, desk or paper)");
  }
  cfg.profile = name;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> k;
  for (const auto& f : fields()) k.push_back(f.key);
  return k;
}

std::string get_value(const RunConfig& cfg, const std::string& key) { return field(key).get(cfg); }

void set_value(RunConfig& cfg, const std::string& key, const std::string& value) { field(key).set(cfg, value); }

std::vector<std::pair<std::string, std::string>> to_pairs(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

std::string to_text(const RunConfig& cfg) {
  std::string s;
  for (const auto& [k, v] : to_pairs(cfg)) s += k + "=" + v + "\n";
  return s;
}

std::vector<std::pair<std::string, std::string>> parse_pairs(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("config line " + std::to_string(n) + " is not key=value");
    out.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  return out;
}

RunConfig from_pairs(const std::vector<std::pair<std::string, std::string>>& pairs) {
  RunConfig cfg;
  for (const auto& [k, v] : pairs)
    if (k == "profile") apply_profile(cfg, v);
  for (const auto& [k, v] : pairs) set_value(cfg, k, v);
  return cfg;
}

RunConfig read_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_pairs(parse_pairs(ss.str()));
}

void write_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write config " + path.string());
  out << to_text(cfg);
  if (!out) throw IoError("failed writing config " + path.string());
}

}  // namespace doctr
