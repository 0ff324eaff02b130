#include "voxdiff/checkpoint.hpp"

#include <cstdint>

namespace voxdiff {

namespace {

constexpr std::string_view kMagic = "VXDF";
constexpr std::uint32_t kVersion = 1;

std::uint32_t u32(std::size_t v) {
  if (v > UINT32_MAX) throw CheckpointError("checkpoint: value exceeds 32 bits");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::string encode_checkpoint(const SwinVnet& model, std::size_t steps, double slope, std::string_view run_config) {
  const auto& cfg = model.config();
  io::ByteWriter w;
  w.put_bytes(kMagic);
  w.put(kVersion);
  for (auto c : cfg.widths) w.put(u32(c));
  for (const auto& win : cfg.windows)
    for (auto a : win.size) w.put(u32(a));
  w.put(u32(cfg.heads));
  w.put(u32(cfg.embed_dim));
  w.put(cfg.max_period);
  w.put(u32(cfg.in_channels));
  w.put(u32(cfg.out_channels));
  w.put(u32(cfg.max_groups));
  w.put(u32(steps));
  w.put(slope);

  const auto& entries = model.parameters().entries();
  w.put(u32(entries.size()));
  for (const auto& [name, t] : entries) {
    w.put_string(name);
    w.put(u32(t.rank()));
    for (auto e : t.shape()) w.put(u32(e));
    for (double v : t.values()) w.put(static_cast<float>(v));
  }
  w.put_string(run_config);
  return w.bytes();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  io::ByteReader r(bytes, "checkpoint");
  if (bytes.size() < kMagic.size() || r.get_bytes(kMagic.size()) != kMagic) {
    throw CheckpointError("checkpoint: not a VXDF file");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));

  SwinConfig cfg;
  for (auto& c : cfg.widths) c = r.get<std::uint32_t>();
  for (auto& win : cfg.windows)
    for (auto& a : win.size) a = r.get<std::uint32_t>();
  cfg.heads = r.get<std::uint32_t>();
  cfg.embed_dim = r.get<std::uint32_t>();
  cfg.max_period = r.get<double>();
  cfg.in_channels = r.get<std::uint32_t>();
  cfg.out_channels = r.get<std::uint32_t>();
  cfg.max_groups = r.get<std::uint32_t>();
  const std::size_t steps = r.get<std::uint32_t>();
  const double slope = r.get<double>();
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: invalid model config: ") + e.what());
  }

  Checkpoint ck{SwinVnet(cfg, 0), steps, slope, {}};
  auto& entries = ck.model.parameters().entries();
  const auto count = r.get<std::uint32_t>();
  if (count != entries.size()) {
    throw CheckpointError("checkpoint: " + std::to_string(count) + " parameter records, config implies " +
                          std::to_string(entries.size()));
  }
  for (const auto& [expected, t] : entries) {
    const std::string name = r.get_string();
    if (name != expected) throw CheckpointError("checkpoint: record '" + name + "' where '" + expected + "' expected");
    const auto rank = r.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& e : shape) e = r.get<std::uint32_t>();
    if (shape != t.shape()) {
      throw CheckpointError("checkpoint: parameter '" + name + "' has shape " + to_string(shape) + ", config implies " +
                            to_string(t.shape()));
    }
    Tensor target = t;
    for (double& v : target.mutable_values()) v = static_cast<double>(r.get<float>());
  }
  ck.run_config = r.get_string();
  if (r.remaining() != 0) throw CheckpointError("checkpoint: trailing bytes after run config");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const SwinVnet& model, std::size_t steps, double slope,
                     std::string_view run_config) {
  io::write_file_atomic(path, encode_checkpoint(model, steps, slope, run_config));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace voxdiff
