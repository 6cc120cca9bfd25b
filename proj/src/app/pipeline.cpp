#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "doctr/app/commands.hpp"
#include "doctr/fields/backward_map.hpp"
#include "doctr/metrics/metrics.hpp"
#include "doctr/numerics/errors.hpp"
#include "doctr/numerics/parallel.hpp"

namespace doctr {

namespace {

namespace fs = std::filesystem;

void echo_config_beside(const fs::path& artifact, const RunConfig& cfg) {
  write_config(fs::path(artifact.string() + ".config.txt"), cfg);
}

std::string read_text_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string s = ss.str();
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

std::string stem_of(const std::string& filename) { return filename.substr(0, filename.find('.')); }

std::map<std::string, fs::path> image_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("directory " + dir.string() + " does not exist");
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension().string();
    if (ext == ".ppm" || ext == ".pgm") out.emplace(e.path().filename().string(), e.path());
  }
  return out;
}

std::vector<std::string> split_metrics(const std::string& list) {
  static const std::vector<std::string> known{"ld", "ms_ssim", "ed", "cer"};
  std::vector<std::string> out;
  std::stringstream ss(list);
  std::string m;
  while (std::getline(ss, m, ',')) {
    if (m.empty()) continue;
    if (std::find(known.begin(), known.end(), m) == known.end())
      throw ConfigError("unknown metric '" + m + "' (expected ld, ms_ssim, ed, cer)");
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  if (out.empty()) throw ConfigError("no metrics requested");
  return out;
}

bool wants(const std::vector<std::string>& metrics, const char* m) {
  return std::find(metrics.begin(), metrics.end(), m) != metrics.end();
}

std::string fmt(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 6);
  return std::string(buf, p);
}

}  // namespace

std::vector<ManifestEntry> cmd_synth(const RunConfig& cfg) {
  if (cfg.out.empty()) throw ConfigError("synth needs --out");
  if (cfg.count < 0) throw ConfigError("count must be non-negative");
  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  if (!fs::is_directory(cfg.out)) throw IoError("cannot create output directory " + cfg.out);
  write_config(fs::path(cfg.out) / "config.txt", cfg);
  return synthesize_dataset(cfg.out, static_cast<std::size_t>(cfg.count), cfg.seed, cfg.synth_config());
}

RectifyResult rectify_image(const Image& input, const GeoModel& geo, const IllModel* ill, double tau) {
  RectifyResult r;
  const UnwarpResult u = unwarp(input, geo.seg.get(), *geo.geo, tau);
  r.geometric = u.rectified;
  r.map = u.map;
  r.output = ill ? correct_illumination(r.geometric, *ill->ill) : r.geometric;
  return r;
}

RectifyResult cmd_rectify(const RunConfig& cfg) {
  if (cfg.input.empty() || cfg.out.empty()) throw ConfigError("rectify needs an input image and --out");
  if (cfg.geo_ckpt.empty()) throw ConfigError("rectify needs --geo");
  if (!cfg.skip_ill && cfg.ill_ckpt.empty()) throw ConfigError("rectify needs --ill unless --skip-ill is given");
  const GeoModel geo = load_geo_model(read_checkpoint(cfg.geo_ckpt));
  std::optional<IllModel> ill;
  if (!cfg.skip_ill) ill = load_ill_model(read_checkpoint(cfg.ill_ckpt));
  const Image input = read_pnm(cfg.input);
  if (input.channels != 3) throw DataError("rectify expects a colour (P6) image");
  RectifyResult r = rectify_image(input, geo, ill ? &*ill : nullptr, cfg.tau);
  write_pnm(cfg.out, r.output);
  if (!cfg.dump_bmap.empty()) write_bmap(cfg.dump_bmap, r.map);
  echo_config_beside(cfg.out, cfg);
  return r;
}

EvalReport evaluate_dirs(const RunConfig& cfg) {
  if (cfg.pred.empty() || cfg.gt.empty()) throw ConfigError("evaluate needs --pred and --gt");
  EvalReport rep;
  rep.metrics = split_metrics(cfg.metrics);
  const auto preds = image_files(cfg.pred), gts = image_files(cfg.gt);
  std::vector<std::string> unmatched;
  for (const auto& [name, path] : preds)
    if (!gts.count(name)) unmatched.push_back(cfg.pred + "/" + name);
  for (const auto& [name, path] : gts)
    if (!preds.count(name)) unmatched.push_back(cfg.gt + "/" + name);
  if (!unmatched.empty()) {
    std::string msg = "unmatched files:";
    for (const auto& u : unmatched) msg += "\n  " + u;
    throw DataError(msg);
  }
  if (preds.empty()) throw DataError("no images to evaluate in " + cfg.pred);

  std::vector<std::string> names;
  for (const auto& [name, path] : preds) names.push_back(name);
  const bool text_metrics = wants(rep.metrics, "ed") || wants(rep.metrics, "cer");
  if (text_metrics && cfg.text.empty()) rep.warnings.push_back("no text references given; skipping ed and cer");

  rep.rows.resize(names.size());
  std::vector<std::string> row_warnings(names.size());
  parallel_for(names.size(), [&](std::size_t i) {
    EvalRow& row = rep.rows[i];
    row.name = names[i];
    const Image gt = read_pnm(gts.at(names[i]));
    Image pred = read_pnm(preds.at(names[i]));
    if (pred.height != gt.height || pred.width != gt.width) pred = resize_image(pred, gt.height, gt.width);
    if (pred.channels != gt.channels) {
      pred = to_gray(pred);
      if (gt.channels != 1) throw DataError(names[i] + ": channel counts differ");
    }
    if (wants(rep.metrics, "ld")) row.ld = local_distortion(dense_flow(gt, pred));
    if (wants(rep.metrics, "ms_ssim")) row.ms_ssim = ms_ssim(pred, gt);
    if (text_metrics && !cfg.text.empty()) {
      const fs::path hyp = fs::path(cfg.pred) / (stem_of(names[i]) + ".txt");
      const fs::path ref = fs::path(cfg.text) / (stem_of(names[i]) + ".txt");
      if (!fs::exists(hyp) || !fs::exists(ref)) {
        row_warnings[i] = names[i] + ": missing text (" + (fs::exists(hyp) ? ref : hyp).string() + "); skipping ed and cer";
        return;
      }
      const std::string h = read_text_file(hyp), r = read_text_file(ref);
      if (wants(rep.metrics, "ed")) row.ed = static_cast<double>(edit_distance(h, r));
      if (wants(rep.metrics, "cer") && !r.empty()) row.cer = cer(h, r);
    }
  });
  for (auto& w : row_warnings)
    if (!w.empty()) rep.warnings.push_back(std::move(w));

  rep.mean.name = "mean";
  double ed_sum = 0.0, cer_sum = 0.0;
  int ed_n = 0, cer_n = 0;
  for (const auto& r : rep.rows) {
    rep.mean.ld += r.ld;
    rep.mean.ms_ssim += r.ms_ssim;
    if (r.ed) {
      ed_sum += *r.ed;
      ++ed_n;
    }
    if (r.cer) {
      cer_sum += *r.cer;
      ++cer_n;
    }
  }
  rep.mean.ld /= static_cast<double>(rep.rows.size());
  rep.mean.ms_ssim /= static_cast<double>(rep.rows.size());
  if (ed_n) rep.mean.ed = ed_sum / ed_n;
  if (cer_n) rep.mean.cer = cer_sum / cer_n;
  return rep;
}

std::string format_report(const EvalReport& report) {
  std::string s = "image";
  for (const auto& m : report.metrics) s += "\t" + m;
  s += "\n";
  auto row = [&](const EvalRow& r) {
    std::string line = r.name;
    for (const auto& m : report.metrics) {
      std::optional<double> v;
      if (m == "ld") v = r.ld;
      if (m == "ms_ssim") v = r.ms_ssim;
      if (m == "ed") v = r.ed;
      if (m == "cer") v = r.cer;
      line += "\t" + (v ? fmt(*v) : std::string("-"));
    }
    return line + "\n";
  };
  for (const auto& r : report.rows) s += row(r);
  return s + row(report.mean);
}

std::string format_summary(const EvalReport& report) {
  std::string s = "pairs=" + std::to_string(report.rows.size()) + "\n";
  for (const auto& m : report.metrics) {
    std::optional<double> v;
    if (m == "ld") v = report.mean.ld;
    if (m == "ms_ssim") v = report.mean.ms_ssim;
    if (m == "ed") v = report.mean.ed;
    if (m == "cer") v = report.mean.cer;
    s += "mean_" + m + "=" + (v ? fmt(*v) : std::string("-")) + "\n";
  }
  return s;
}

EvalReport cmd_evaluate(const RunConfig& cfg) {
  EvalReport rep = evaluate_dirs(cfg);
  if (!cfg.out.empty()) {
    std::ofstream out(cfg.out, std::ios::binary);
    if (!out) throw IoError("cannot write report " + cfg.out);
    out << format_report(rep);
    echo_config_beside(cfg.out, cfg);
  }
  return rep;
}

}  // namespace doctr
