#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "voxdiff/config.hpp"
#include "voxdiff/metrics.hpp"
#include "voxdiff/trainer.hpp"
#include "voxdiff/volume.hpp"

namespace voxdiff {

namespace fs = std::filesystem;

using Settings = std::vector<std::pair<std::string, std::string>>;

// Raised when prediction files have no counterpart; the message lists every unmatched name.
class UnmatchedFilesError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ManifestEntry {
  std::string split;  // train, val or test
  std::string name;
  fs::path mr;  // relative to the manifest directory
  fs::path ct;
};

std::vector<ManifestEntry> read_manifest(const fs::path& path);
std::string manifest_csv(const std::vector<ManifestEntry>& entries);

// Train/val/test counts scaled from 20/2/6.
std::array<std::size_t, 3> default_split(std::size_t count);

// Writes case_XXX_mr.vxvol / case_XXX_ct.vxvol, manifest.csv and phantom_spec.txt.
// Case i uses seed stream_seed(spec.seed, i, 0).
std::vector<ManifestEntry> run_phantom(const PhantomSpec& spec, const fs::path& out_dir, std::size_t count);

struct TrainOutputs {
  fs::path checkpoint;
  std::vector<LossRecord> steps;
  std::vector<LossRecord> epochs;
};

// Trains on the manifest's train split. Writes model.vxdf, loss_log.csv (per epoch), step_log.csv,
// config.txt, and epoch_NNNN.vxdf every train.checkpoint_every epochs.
TrainOutputs run_train(const RunConfig& config, const fs::path& manifest, const fs::path& out_dir,
                       const std::function<void(const LossRecord&)>& on_epoch = {});

struct GenerateRequest {
  fs::path checkpoint;
  fs::path mr;
  fs::path out;
  Settings overrides;  // sampling.*, seed
  std::size_t first_run = 0;
};

// Sliding-window synthesis; writes the HU volume and <out>.config.txt.
Volume run_generate(const GenerateRequest& request);

struct EvaluateRequest {
  fs::path pred_dir;
  fs::path truth_dir;
  fs::path out_csv;
  std::optional<fs::path> compare_dir;  // second prediction set for paired tests
};

// Per-volume metrics for every HU prediction; writes the metrics CSV and, with a comparison set,
// <out stem>_tests.csv.
std::vector<VolumeMetrics> run_evaluate(const EvaluateRequest& request);

}  // namespace voxdiff
