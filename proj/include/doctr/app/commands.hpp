#pragma once

// The five pipeline commands and the process-level entry point.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "doctr/app/checkpoint.hpp"
#include "doctr/app/config.hpp"
#include "doctr/synthdata/dataset.hpp"

namespace doctr {

/// Raised for malformed inputs such as unmatched evaluation files; maps to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

struct GeoModel {
  RunConfig cfg;
  std::unique_ptr<GeoTr<float>> geo;
  std::unique_ptr<Segmenter<float>> seg;  // null when use_segmenter is off
};

struct IllModel {
  RunConfig cfg;
  std::unique_ptr<IllTr<float>> ill;
};

/// Fresh models seeded from cfg.seed.
GeoModel make_geo_model(const RunConfig& cfg);
IllModel make_ill_model(const RunConfig& cfg);

/// Weights plus the run config, `kind` and `step` in the config block.
Checkpoint geo_checkpoint(const GeoModel& m, std::int64_t step);
Checkpoint ill_checkpoint(const IllModel& m, std::int64_t step);
/// Rebuilds the model described by the embedded config and loads its weights.
GeoModel load_geo_model(const Checkpoint& ckpt);
IllModel load_ill_model(const Checkpoint& ckpt);

/// Writes `count` samples and the manifest to cfg.out.
std::vector<ManifestEntry> cmd_synth(const RunConfig& cfg);

struct TrainResult {
  std::filesystem::path checkpoint;
  std::int64_t steps = 0;
  double final_loss = 0.0;
};

/// Trains the segmenter (unless disabled) and then GeoTr on the dataset in cfg.data.
/// Writes cfg.out/geo.dtrc (+ .state), loss.tsv, lr.tsv and, with a segmenter,
/// seg_loss.tsv. A non-finite loss throws TrainingError and leaves the last
/// checkpoint written before it untouched.
TrainResult cmd_train_geo(const RunConfig& cfg);
/// (input, target) crops for IllTr: the distorted image rectified by its
/// ground-truth map, and the clean page. Random crops are redrawn per epoch.
std::vector<std::pair<Image, Image>> ill_training_pairs(const RunConfig& cfg, const std::vector<SampleRecord>& samples,
                                                        std::int64_t epoch);
/// Trains IllTr on (ground-truth rectified, clean) crops. Writes cfg.out/ill.dtrc
/// (+ .state), loss.tsv and lr.tsv.
TrainResult cmd_train_ill(const RunConfig& cfg);

struct RectifyResult {
  Image geometric;  // after unwarping only
  Image output;     // after illumination correction unless skipped
  BackwardMap map;  // at the input extent
};
RectifyResult rectify_image(const Image& input, const GeoModel& geo, const IllModel* ill, double tau);
/// Reads cfg.input, writes cfg.out and, when set, cfg.dump_bmap.
RectifyResult cmd_rectify(const RunConfig& cfg);

struct EvalRow {
  std::string name;
  double ld = 0.0;
  double ms_ssim = 0.0;
  std::optional<double> ed;
  std::optional<double> cer;
};

struct EvalReport {
  std::vector<std::string> metrics;
  std::vector<EvalRow> rows;
  EvalRow mean;
  std::vector<std::string> warnings;
};

EvalReport evaluate_dirs(const RunConfig& cfg);
/// Tab-separated table: header, one row per image, then the mean row. Skipped
/// values print as "-".
std::string format_report(const EvalReport& report);
/// key=value lines with the pair count and each mean.
std::string format_summary(const EvalReport& report);
/// Runs evaluate_dirs and writes the table to cfg.out when set.
EvalReport cmd_evaluate(const RunConfig& cfg);

/// Parses argv, runs a command and maps failures onto exit codes.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace doctr
