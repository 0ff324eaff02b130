#include "voxdiff/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <spdlog/spdlog.h>

#include "voxdiff/checkpoint.hpp"
#include "voxdiff/diffusion.hpp"

namespace voxdiff {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

std::string case_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "case_%03zu", i);
  return buf;
}

Volume load_mr(const fs::path& path) {
  Volume v = load_volume(path);
  return v.space == Space::Normalized ? v : normalize_mr(v);
}

Volume load_ct_normalized(const fs::path& path) {
  Volume v = load_volume(path);
  return v.space == Space::HU ? normalize_ct(v) : v;
}

std::string extent_text(const Extent3& e) {
  return std::to_string(e[0]) + "x" + std::to_string(e[1]) + "x" + std::to_string(e[2]);
}

void require_patch_fits(const Extent3& patch, const Extent3& volume, const std::string& what) {
  for (std::size_t a = 0; a < 3; ++a) {
    if (patch[a] > volume[a]) {
      throw ShapeError(what + ": patch " + extent_text(patch) + " exceeds volume " + extent_text(volume));
    }
  }
}

}  // namespace

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::istringstream in(io::read_file(path));
  std::string line;
  std::vector<ManifestEntry> out;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line != "split,name,mr,ct") throw io::ParseError("manifest: expected header split,name,mr,ct");
      continue;
    }
    const auto cells = split_csv_line(line);
    if (cells.size() != 4) throw io::ParseError("manifest: malformed row '" + line + "'");
    out.push_back({cells[0], cells[1], cells[2], cells[3]});
  }
  return out;
}

std::string manifest_csv(const std::vector<ManifestEntry>& entries) {
  std::ostringstream os;
  os << "split,name,mr,ct\n";
  for (const auto& e : entries) os << e.split << ',' << e.name << ',' << e.mr.string() << ',' << e.ct.string() << '\n';
  return os.str();
}

std::array<std::size_t, 3> default_split(std::size_t count) {
  const auto scaled = [&](double part) {
    return static_cast<std::size_t>(std::llround(part * static_cast<double>(count) / 28.0));
  };
  const std::size_t train = std::max<std::size_t>(std::min(scaled(20.0), count), 1);
  const std::size_t val = std::min(scaled(2.0), count - train);
  return {train, val, count - train - val};
}

std::vector<ManifestEntry> run_phantom(const PhantomSpec& spec, const fs::path& out_dir, std::size_t count) {
  if (count < 1) throw std::invalid_argument("phantom: count must be at least 1");
  spec.validate();
  fs::create_directories(out_dir);
  const auto split = default_split(count);
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < count; ++i) {
    PhantomSpec s = spec;
    s.seed = stream_seed(spec.seed, i, 0);
    const auto pair = synthesize_pair(s);
    const std::string name = case_name(i);
    ManifestEntry e{i < split[0] ? "train" : (i < split[0] + split[1] ? "val" : "test"), name, name + "_mr.vxvol",
                    name + "_ct.vxvol"};
    save_volume(out_dir / e.mr, pair.mr);
    save_volume(out_dir / e.ct, pair.ct);
    entries.push_back(std::move(e));
  }
  io::write_file_atomic(out_dir / "manifest.csv", manifest_csv(entries));
  io::write_file_atomic(out_dir / "phantom_spec.txt", spec.to_text());
  return entries;
}

TrainOutputs run_train(const RunConfig& config, const fs::path& manifest, const fs::path& out_dir,
                       const std::function<void(const LossRecord&)>& on_epoch) {
  config.validate();
  const auto base = manifest.parent_path();
  std::vector<TrainingPair> pairs;
  for (const auto& e : read_manifest(manifest)) {
    if (e.split != "train") continue;
    TrainingPair p{e.name, load_mr(base / e.mr), load_ct_normalized(base / e.ct)};
    if (p.mr.extents != p.ct.extents) throw ShapeError("train: MR and CT extents differ for " + e.name);
    require_patch_fits(config.patch, p.mr.extents, "train: " + e.name);
    pairs.push_back(std::move(p));
  }
  if (pairs.empty()) throw TrainingError("manifest has no training pairs");

  SwinVnet model(config.model, config.seed);
  Trainer trainer(model, config);
  fs::create_directories(out_dir);
  const std::string config_text = config.to_text();
  io::write_file_atomic(out_dir / "config.txt", config_text);
  spdlog::info("training {} pairs for {} epochs, {} parameters", pairs.size(), config.epochs,
               model.parameters().scalar_count());

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto r = trainer.epoch(pairs);
    spdlog::info("epoch {} L_mean {:.6f} L_var {:.6f} L {:.6f}", epoch, r.l_mean, r.l_var, r.total);
    if (on_epoch) on_epoch(r);
    if (config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%04zu.vxdf", epoch);
      save_checkpoint(out_dir / name, model, config.schedule_steps, config.schedule_slope, config_text);
      io::write_file_atomic(out_dir / "loss_log.csv", loss_log_csv(trainer.epoch_log(), "epoch"));
    }
  }
  TrainOutputs out{out_dir / "model.vxdf", trainer.step_log(), trainer.epoch_log()};
  save_checkpoint(out.checkpoint, model, config.schedule_steps, config.schedule_slope, config_text);
  io::write_file_atomic(out_dir / "loss_log.csv", loss_log_csv(trainer.epoch_log(), "epoch"));
  io::write_file_atomic(out_dir / "step_log.csv", loss_log_csv(trainer.step_log(), "step"));
  return out;
}

Volume run_generate(const GenerateRequest& request) {
  const Checkpoint ck = load_checkpoint(request.checkpoint);
  const RunConfig stored = resolve_config(RunConfig{}, io::parse_key_values(ck.run_config));
  const RunConfig config = resolve_config(stored, request.overrides);
  if (!(config.model == ck.model.config()) || config.schedule_steps != ck.steps ||
      config.schedule_slope != ck.slope) {
    throw ConfigError("generate: model and schedule settings come from the checkpoint and cannot be overridden");
  }
  const Volume mr = load_mr(request.mr);
  require_patch_fits(config.patch, mr.extents, "generate");
  ck.model.check_extents(config.patch);

  const auto schedule = NoiseSchedule::linear(config.schedule_steps, config.schedule_slope);
  const auto resampled = resample(schedule, config.sampling_steps);
  const ModelPredictor predictor(ck.model);
  InferenceOptions opts;
  opts.patch = config.patch;
  opts.runs = config.sampling_runs;
  opts.first_run = request.first_run;
  opts.seed = config.seed;
  opts.on_window = [](std::size_t i, std::size_t total, double seconds) {
    spdlog::info("window {}/{} {:.2f} s", i + 1, total, seconds);
  };
  const auto t0 = std::chrono::steady_clock::now();
  Volume out = sliding_window_infer(mr, predictor, resampled, opts);
  spdlog::info("generated {} in {:.1f} s", request.out.string(),
               std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  if (request.out.has_parent_path()) fs::create_directories(request.out.parent_path());
  save_volume(request.out, out);
  auto config_path = request.out;
  config_path += ".config.txt";
  io::write_file_atomic(config_path, config.to_text());
  return out;
}

namespace {

std::vector<VolumeMetrics> evaluate_dir(const fs::path& pred_dir, const fs::path& truth_dir,
                                        const std::string& method, std::vector<std::string>& unmatched) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(pred_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".vxvol") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<VolumeMetrics> rows;
  for (const auto& f : files) {
    const Volume pred = load_volume(f);
    if (pred.space != Space::HU) continue;
    const auto truth_path = truth_dir / f.filename();
    if (!fs::exists(truth_path)) {
      unmatched.push_back((pred_dir / f.filename()).string());
      continue;
    }
    const Volume truth = load_volume(truth_path);
    if (truth.space != Space::HU) {
      unmatched.push_back(truth_path.string() + " (not HU)");
      continue;
    }
    rows.push_back(evaluate_pair(f.filename().string(), method, pred, truth));
  }
  return rows;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

}  // namespace

std::vector<VolumeMetrics> run_evaluate(const EvaluateRequest& request) {
  std::vector<std::string> unmatched;
  auto rows = evaluate_dir(request.pred_dir, request.truth_dir, "pred", unmatched);
  std::vector<VolumeMetrics> other;
  if (request.compare_dir) other = evaluate_dir(*request.compare_dir, request.truth_dir, "compare", unmatched);
  if (!unmatched.empty()) throw UnmatchedFilesError("no matching ground truth for: " + join(unmatched));
  if (rows.empty()) throw UnmatchedFilesError("no HU volumes found in " + request.pred_dir.string());

  std::vector<VolumeMetrics> all = rows;
  all.insert(all.end(), other.begin(), other.end());
  if (request.out_csv.has_parent_path()) fs::create_directories(request.out_csv.parent_path());
  io::write_file_atomic(request.out_csv, metrics_csv(all));
  if (request.compare_dir && rows.size() < 2) {
    spdlog::warn("paired t-tests need at least two volumes; skipping");
  } else if (request.compare_dir) {
    std::vector<std::string> names_a, names_b;
    for (const auto& r : rows) names_a.push_back(r.volume);
    for (const auto& r : other) names_b.push_back(r.volume);
    if (names_a != names_b) throw UnmatchedFilesError("prediction sets cover different volumes");
    const auto tests = compare_methods(rows, other);
    auto tests_path = request.out_csv.parent_path() / (request.out_csv.stem().string() + "_tests.csv");
    io::write_file_atomic(tests_path, tests_csv(tests));
  }
  return rows;
}

}  // namespace voxdiff
