// Command-line entry points: phantom, train, generate, evaluate.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "voxdiff/checkpoint.hpp"
#include "voxdiff/commands.hpp"

using namespace voxdiff;

namespace {

struct CommonFlags {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_file, "key = value config file");
  cmd->add_option("--set", f.sets, "override, key=value (repeatable)");
  cmd->add_option("--seed", f.seed, "random seed");
}

Settings collect(const CommonFlags& f) {
  Settings s;
  if (!f.config_file.empty()) s = io::parse_key_values(io::read_file(f.config_file));
  for (const auto& kv : f.sets) s.push_back(split_setting(kv));
  if (f.seed) s.emplace_back("seed", std::to_string(*f.seed));
  return s;
}

int fail(const char* kind, const std::exception& e, int code) {
  std::fprintf(stderr, "error: %s: %s\n", kind, e.what());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conditional 3D diffusion MR-to-CT synthesis"};
  app.require_subcommand(1);

  auto* phantom = app.add_subcommand("phantom", "write synthetic MR/CT pairs and a manifest");
  std::string spec_file, phantom_out;
  std::size_t count = 28;
  std::optional<std::uint64_t> phantom_seed;
  phantom->add_option("--spec", spec_file, "phantom spec (key = value)");
  phantom->add_option("--out", phantom_out, "output directory")->required();
  phantom->add_option("--count", count, "number of pairs");
  phantom->add_option("--seed", phantom_seed, "base seed (overrides the spec)");

  auto* train = app.add_subcommand("train", "train a denoiser on the manifest's train split");
  CommonFlags train_flags;
  std::string manifest, train_out;
  add_common(train, train_flags);
  train->add_option("--manifest", manifest, "manifest.csv from `phantom`")->required();
  train->add_option("--out", train_out, "output directory")->required();

  auto* gen = app.add_subcommand("generate", "synthesize a CT volume from an MR volume");
  CommonFlags gen_flags;
  GenerateRequest gen_req;
  std::string ck_path, mr_path, gen_out;
  add_common(gen, gen_flags);
  gen->add_option("--checkpoint", ck_path, "trained checkpoint")->required();
  gen->add_option("--mr", mr_path, "MR volume")->required();
  gen->add_option("--out", gen_out, "output HU volume")->required();
  gen->add_option("--first-run", gen_req.first_run, "index of the first Monte Carlo run stream");

  auto* eval = app.add_subcommand("evaluate", "metrics of predicted CT volumes against ground truth");
  std::string pred_dir, truth_dir, eval_out, compare_dir;
  eval->add_option("--pred", pred_dir, "directory of predicted HU volumes")->required();
  eval->add_option("--truth", truth_dir, "directory of ground-truth HU volumes")->required();
  eval->add_option("--out", eval_out, "metrics CSV")->required();
  eval->add_option("--compare", compare_dir, "second prediction directory for paired t-tests");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*phantom) {
      PhantomSpec spec = spec_file.empty() ? PhantomSpec{} : parse_phantom_spec(io::read_file(spec_file));
      if (phantom_seed) spec.seed = *phantom_seed;
      const auto entries = run_phantom(spec, phantom_out, count);
      spdlog::info("wrote {} pairs to {}", entries.size(), phantom_out);
    } else if (*train) {
      const RunConfig config = resolve_config(RunConfig{}, collect(train_flags));
      const auto out = run_train(config, manifest, train_out);
      spdlog::info("checkpoint {}", out.checkpoint.string());
    } else if (*gen) {
      gen_req.checkpoint = ck_path;
      gen_req.mr = mr_path;
      gen_req.out = gen_out;
      gen_req.overrides = collect(gen_flags);
      run_generate(gen_req);
    } else if (*eval) {
      EvaluateRequest req{pred_dir, truth_dir, eval_out, std::nullopt};
      if (!compare_dir.empty()) req.compare_dir = compare_dir;
      const auto rows = run_evaluate(req);
      spdlog::info("evaluated {} volumes into {}", rows.size(), eval_out);
    }
  } catch (const ConfigError& e) {
    return fail("config_error", e, 2);
  } catch (const io::ParseError& e) {
    return fail("config_error", e, 2);
  } catch (const ShapeError& e) {
    return fail("shape_error", e, 3);
  } catch (const CheckpointError& e) {
    return fail("checkpoint_error", e, 4);
  } catch (const io::IoError& e) {
    return fail("io_error", e, 5);
  } catch (const TrainingError& e) {
    return fail("training_error", e, 6);
  } catch (const UnmatchedFilesError& e) {
    return fail("unmatched_files", e, 7);
  } catch (const std::invalid_argument& e) {
    return fail("invalid_argument", e, 8);
  } catch (const std::exception& e) {
    return fail("internal_error", e, 9);
  }
  return 0;
}
