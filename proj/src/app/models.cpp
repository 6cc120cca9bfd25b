#include "doctr/app/commands.hpp"

#include "doctr/numerics/errors.hpp"
#include "doctr/numerics/rng.hpp"

namespace doctr {

namespace {

constexpr std::uint64_t kGeoStream = 1;
constexpr std::uint64_t kSegStream = 2;
constexpr std::uint64_t kIllStream = 3;

Checkpoint with_config(const RunConfig& cfg, const std::string& kind, std::int64_t step) {
  Checkpoint c;
  c.config = to_pairs(cfg);
  c.config.emplace_back("kind", kind);
  c.config.emplace_back("step", std::to_string(step));
  return c;
}

RunConfig embedded_config(const Checkpoint& ckpt, const std::string& kind) {
  if (ckpt.config_value("kind") != kind)
    throw ContractError("checkpoint holds a '" + ckpt.config_value("kind") + "' model, expected '" + kind + "'");
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& kv : ckpt.config)
    if (kv.first != "kind" && kv.first != "step") pairs.push_back(kv);
  return from_pairs(pairs);
}

}  // namespace

GeoModel make_geo_model(const RunConfig& cfg) {
  GeoModel m;
  m.cfg = cfg;
  m.geo = std::make_unique<GeoTr<float>>(cfg.geo_config(), mix_seed(cfg.seed, kGeoStream));
  if (cfg.use_segmenter) m.seg = std::make_unique<Segmenter<float>>(cfg.seg_config(), mix_seed(cfg.seed, kSegStream));
  return m;
}

IllModel make_ill_model(const RunConfig& cfg) {
  IllModel m;
  m.cfg = cfg;
  m.ill = std::make_unique<IllTr<float>>(cfg.ill_config(), mix_seed(cfg.seed, kIllStream));
  return m;
}

Checkpoint geo_checkpoint(const GeoModel& m, std::int64_t step) {
  Checkpoint c = with_config(m.cfg, "geo", step);
  append_params(c, m.geo->params());
  if (m.seg) append_params(c, m.seg->params());
  return c;
}

Checkpoint ill_checkpoint(const IllModel& m, std::int64_t step) {
  Checkpoint c = with_config(m.cfg, "ill", step);
  append_params(c, m.ill->params());
  return c;
}

GeoModel load_geo_model(const Checkpoint& ckpt) {
  GeoModel m = make_geo_model(embedded_config(ckpt, "geo"));
  load_params(ckpt, m.geo->params(), "geo.");
  if (m.seg) load_params(ckpt, m.seg->params(), "seg.");
  return m;
}

IllModel load_ill_model(const Checkpoint& ckpt) {
  IllModel m = make_ill_model(embedded_config(ckpt, "ill"));
  load_params(ckpt, m.ill->params(), "ill.");
  return m;
}

}  // namespace doctr
