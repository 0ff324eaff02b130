#include "voxdiff/config.hpp"

#include <sstream>

#include "voxdiff/io.hpp"

namespace voxdiff {

namespace {

std::string triple(const Extent3& e) {
  return std::to_string(e[0]) + "x" + std::to_string(e[1]) + "x" + std::to_string(e[2]);
}

std::string number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::vector<std::string> split_commas(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(',', start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

Extent3 extent(std::string_view key, std::string_view value) {
  const auto t = io::parse_triple(key, value);
  return {t[0], t[1], t[2]};
}

}  // namespace

double RunConfig::effective_gamma() const {
  if (gamma >= 0.0) return gamma;
  return static_cast<double>(sampling_steps) / static_cast<double>(schedule_steps);
}

void RunConfig::validate() const {
  if (schedule_steps < 1) throw ConfigError("schedule.steps must be at least 1");
  if (!(schedule_slope > 0.0) || !(schedule_slope * static_cast<double>(schedule_steps) < 1.0)) {
    throw ConfigError("schedule.slope * schedule.steps must lie in (0, 1)");
  }
  if (sampling_steps < 1 || sampling_steps > schedule_steps) {
    throw ConfigError("sampling.steps must lie in [1, schedule.steps]");
  }
  if (sampling_runs < 1) throw ConfigError("sampling.runs must be at least 1");
  if (sampling_overlap != 0.5) throw ConfigError("sampling.overlap: only 0.5 is supported");
  for (auto e : patch) {
    if (e == 0) throw ConfigError("data.patch extents must be positive");
  }
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be nonnegative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train.beta1 and train.beta2 must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("train.eps must be positive");
  try {
    model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << "profile = " << profile << '\n';
  os << "seed = " << seed << '\n';
  os << "schedule.steps = " << schedule_steps << '\n';
  os << "schedule.slope = " << number(schedule_slope) << '\n';
  os << "sampling.steps = " << sampling_steps << '\n';
  os << "sampling.runs = " << sampling_runs << '\n';
  os << "sampling.overlap = " << number(sampling_overlap) << '\n';
  os << "data.patch = " << triple(patch) << '\n';
  os << "train.batch_size = " << batch_size << '\n';
  os << "train.lr = " << number(lr) << '\n';
  os << "train.weight_decay = " << number(weight_decay) << '\n';
  os << "train.beta1 = " << number(beta1) << '\n';
  os << "train.beta2 = " << number(beta2) << '\n';
  os << "train.eps = " << number(adam_eps) << '\n';
  os << "train.epochs = " << epochs << '\n';
  os << "train.checkpoint_every = " << checkpoint_every << '\n';
  os << "train.gamma = " << (gamma < 0.0 ? std::string("auto") : number(gamma)) << '\n';
  os << "model.widths = ";
  for (std::size_t i = 0; i < model.widths.size(); ++i) os << (i ? "," : "") << model.widths[i];
  os << "\nmodel.windows = ";
  for (std::size_t i = 0; i < model.windows.size(); ++i) os << (i ? "," : "") << triple(model.windows[i].size);
  os << "\nmodel.heads = " << model.heads << '\n';
  os << "model.embed_dim = " << model.embed_dim << '\n';
  os << "model.max_period = " << number(model.max_period) << '\n';
  os << "model.max_groups = " << model.max_groups << '\n';
  return os.str();
}

RunConfig profile_config(std::string_view name) {
  RunConfig c;
  c.profile = std::string(name);
  if (name == "prostate") return c;
  if (name == "brain") {
    c.patch = {64, 64, 4};
    c.lr = 3e-5;
    c.weight_decay = 1e-5;
    c.epochs = 500;
    return c;
  }
  if (name == "toy") {
    c.patch = {16, 16, 4};
    c.model.widths = {16, 32, 64, 64, 64};
    c.lr = 1e-3;
    c.weight_decay = 1e-5;
    c.epochs = 125;
    return c;
  }
  throw ConfigError("unknown profile '" + std::string(name) + "' (expected toy, brain or prostate)");
}

void apply_setting(RunConfig& c, std::string_view key, std::string_view value) {
  try {
    if (key == "profile") {
      if (value != c.profile) throw ConfigError("profile must be selected before other settings");
    } else if (key == "seed") {
      c.seed = io::parse_unsigned(key, value);
    } else if (key == "schedule.steps") {
      c.schedule_steps = io::parse_unsigned(key, value);
    } else if (key == "schedule.slope") {
      c.schedule_slope = io::parse_number(key, value);
    } else if (key == "sampling.steps") {
      c.sampling_steps = io::parse_unsigned(key, value);
    } else if (key == "sampling.runs") {
      c.sampling_runs = io::parse_unsigned(key, value);
    } else if (key == "sampling.overlap") {
      c.sampling_overlap = io::parse_number(key, value);
    } else if (key == "data.patch") {
      c.patch = extent(key, value);
    } else if (key == "train.batch_size") {
      c.batch_size = io::parse_unsigned(key, value);
    } else if (key == "train.lr") {
      c.lr = io::parse_number(key, value);
    } else if (key == "train.weight_decay") {
      c.weight_decay = io::parse_number(key, value);
    } else if (key == "train.beta1") {
      c.beta1 = io::parse_number(key, value);
    } else if (key == "train.beta2") {
      c.beta2 = io::parse_number(key, value);
    } else if (key == "train.eps") {
      c.adam_eps = io::parse_number(key, value);
    } else if (key == "train.epochs") {
      c.epochs = io::parse_unsigned(key, value);
    } else if (key == "train.checkpoint_every") {
      c.checkpoint_every = io::parse_unsigned(key, value);
    } else if (key == "train.gamma") {
      c.gamma = value == "auto" ? -1.0 : io::parse_number(key, value);
      if (value != "auto" && c.gamma < 0.0) throw ConfigError("train.gamma must be nonnegative or auto");
    } else if (key == "model.widths") {
      const auto parts = split_commas(value);
      if (parts.size() != c.model.widths.size()) throw ConfigError("model.widths needs 5 comma-separated values");
      for (std::size_t i = 0; i < parts.size(); ++i) c.model.widths[i] = io::parse_unsigned(key, parts[i]);
    } else if (key == "model.windows") {
      const auto parts = split_commas(value);
      if (parts.size() != c.model.windows.size()) throw ConfigError("model.windows needs 4 comma-separated AxBxC");
      for (std::size_t i = 0; i < parts.size(); ++i) c.model.windows[i].size = extent(key, parts[i]);
    } else if (key == "model.heads") {
      c.model.heads = io::parse_unsigned(key, value);
    } else if (key == "model.embed_dim") {
      c.model.embed_dim = io::parse_unsigned(key, value);
    } else if (key == "model.max_period") {
      c.model.max_period = io::parse_number(key, value);
    } else if (key == "model.max_groups") {
      c.model.max_groups = io::parse_unsigned(key, value);
    } else {
      throw ConfigError("unknown config key '" + std::string(key) + "'");
    }
  } catch (const io::ParseError& e) {
    throw ConfigError(e.what());
  }
}

RunConfig resolve_config(const RunConfig& base, const std::vector<std::pair<std::string, std::string>>& entries) {
  RunConfig c = base;
  for (const auto& [key, value] : entries) {
    if (key == "profile") c = profile_config(value);
  }
  for (const auto& [key, value] : entries) {
    if (key != "profile") apply_setting(c, key, value);
  }
  c.validate();
  return c;
}

std::pair<std::string, std::string> split_setting(std::string_view setting) {
  const auto eq = setting.find('=');
  if (eq == std::string_view::npos) throw ConfigError("expected key=value, got '" + std::string(setting) + "'");
  auto entries = io::parse_key_values(setting);
  if (entries.size() != 1) throw ConfigError("expected key=value, got '" + std::string(setting) + "'");
  return entries.front();
}

}  // namespace voxdiff
