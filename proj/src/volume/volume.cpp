#include "voxdiff/volume.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace voxdiff {

namespace {

constexpr std::string_view kMagic{"VXVOL\0\0\0", 8};
constexpr std::uint32_t kVersion = 1;
// Largest voxel count accepted from a file header.
constexpr std::uint64_t kMaxVoxels = std::uint64_t{1} << 32;

}  // namespace

Volume::Volume(const Extent3& e, Space s, float fill) : extents(e), space(s), values(e[0] * e[1] * e[2], fill) {}

std::string encode_volume(const Volume& v) {
  if (v.values.size() != v.extents[0] * v.extents[1] * v.extents[2]) {
    throw VolumeExtentError("volume: value count does not match extents");
  }
  io::ByteWriter w;
  w.put_bytes(kMagic);
  w.put(kVersion);
  for (auto e : v.extents) {
    if (e > std::numeric_limits<std::uint32_t>::max()) throw VolumeExtentError("volume: extent exceeds 32 bits");
    w.put(static_cast<std::uint32_t>(e));
  }
  for (double s : v.spacing) w.put(s);
  w.put(static_cast<std::uint32_t>(v.space));
  for (float x : v.values) w.put(x);
  return w.bytes();
}

Volume decode_volume(std::string_view bytes) {
  if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic) {
    throw VolumeFormatError("not a VXVOL file");
  }
  io::ByteReader r(bytes.substr(kMagic.size()), "volume");
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw VolumeFormatError("volume: unsupported version " + std::to_string(version));
  Volume v;
  std::uint64_t count = 1;
  for (auto& e : v.extents) {
    e = r.get<std::uint32_t>();
    if (e == 0) throw VolumeExtentError("volume: zero extent");
    count *= e;
    if (count > kMaxVoxels) throw VolumeExtentError("volume: extents overflow the voxel limit");
  }
  for (double& s : v.spacing) s = r.get<double>();
  const auto space = r.get<std::uint32_t>();
  if (space > 1) throw VolumeFormatError("volume: unknown space tag " + std::to_string(space));
  v.space = static_cast<Space>(space);
  if (r.remaining() < count * sizeof(float)) throw io::TruncatedError("volume: truncated payload");
  if (r.remaining() > count * sizeof(float)) throw VolumeFormatError("volume: trailing bytes after payload");
  v.values.resize(count);
  for (float& x : v.values) x = r.get<float>();
  return v;
}

void save_volume(const std::filesystem::path& path, const Volume& v) { io::write_file_atomic(path, encode_volume(v)); }

Volume load_volume(const std::filesystem::path& path) { return decode_volume(io::read_file(path)); }

double normalize_hu(double hu) {
  const double c = std::clamp(hu, kHuMin, kHuMax);
  return 2.0 * (c - kHuMin) / (kHuMax - kHuMin) - 1.0;
}

double denormalize_hu(double x) { return (std::clamp(x, -1.0, 1.0) + 1.0) * 0.5 * (kHuMax - kHuMin) + kHuMin; }

Volume normalize_ct(const Volume& hu) {
  if (hu.space != Space::HU) throw std::invalid_argument("normalize_ct: volume is not in HU space");
  Volume out = hu;
  out.space = Space::Normalized;
  for (float& x : out.values) x = static_cast<float>(normalize_hu(x));
  return out;
}

Volume denormalize_ct(const Volume& normalized) {
  if (normalized.space != Space::Normalized) throw std::invalid_argument("denormalize_ct: volume is not normalized");
  Volume out = normalized;
  out.space = Space::HU;
  for (float& x : out.values) x = static_cast<float>(denormalize_hu(x));
  return out;
}

Volume normalize_mr(const Volume& v) {
  if (v.values.empty()) throw std::invalid_argument("normalize_mr: empty volume");
  const auto [lo, hi] = std::minmax_element(v.values.begin(), v.values.end());
  const double a = *lo, b = *hi;
  if (!(b > a)) throw std::invalid_argument("normalize_mr: constant volume has zero dynamic range");
  Volume out = v;
  out.space = Space::Normalized;
  for (float& x : out.values) x = static_cast<float>(2.0 * (x - a) / (b - a) - 1.0);
  return out;
}

std::vector<double> crop(const Volume& v, const Extent3& corner, const Extent3& extents) {
  for (std::size_t a = 0; a < 3; ++a) {
    if (corner[a] + extents[a] > v.extents[a]) throw ShapeError("crop: region exceeds the volume");
  }
  std::vector<double> out;
  out.reserve(extents[0] * extents[1] * extents[2]);
  for (std::size_t x = 0; x < extents[0]; ++x)
    for (std::size_t y = 0; y < extents[1]; ++y)
      for (std::size_t z = 0; z < extents[2]; ++z) out.push_back(v.at(corner[0] + x, corner[1] + y, corner[2] + z));
  return out;
}

std::vector<PatchPair> extract_patches(const Volume& mr, const Volume& ct, const Extent3& patch, std::size_t count,
                                       std::mt19937_64& rng) {
  if (mr.extents != ct.extents) throw ShapeError("extract_patches: MR and CT extents differ");
  for (std::size_t a = 0; a < 3; ++a) {
    if (patch[a] == 0 || patch[a] > mr.extents[a]) {
      throw ShapeError("extract_patches: patch " + std::to_string(patch[0]) + "x" + std::to_string(patch[1]) + "x" +
                       std::to_string(patch[2]) + " does not fit the volume");
    }
  }
  std::vector<PatchPair> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    PatchPair p;
    for (std::size_t a = 0; a < 3; ++a) {
      std::uniform_int_distribution<std::size_t> pick(0, mr.extents[a] - patch[a]);
      p.corner[a] = pick(rng);
    }
    p.mr = crop(mr, p.corner, patch);
    p.ct = crop(ct, p.corner, patch);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace voxdiff
