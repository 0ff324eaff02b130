#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "voxdiff/volume.hpp"

using namespace voxdiff;

namespace {

Volume ramp(const Extent3& e, Space s) {
  Volume v(e, s);
  for (std::size_t i = 0; i < v.size(); ++i) v.values[i] = static_cast<float>(i) * 0.5f - 3.0f;
  return v;
}

// Predicts zero noise and zero variance coefficient.
class ZeroPredictor : public NoisePredictor {
 public:
  Prediction predict(std::span<const double> x, std::span<const double>, const Extent3&,
                     std::size_t) const override {
    return {std::vector<double>(x.size(), 0.0), std::vector<double>(x.size(), 0.0)};
  }
};

}  // namespace

TEST_CASE("volume encoding round trip") {
  Volume v = ramp({3, 4, 5}, Space::HU);
  v.spacing = {0.5, 1.25, 3.0};
  const std::string bytes = encode_volume(v);
  CHECK(bytes.substr(0, 8) == std::string("VXVOL\0\0\0", 8));
  CHECK(bytes.size() == 8 + 4 + 12 + 24 + 4 + 60 * 4);
  const Volume w = decode_volume(bytes);
  CHECK(w.extents == v.extents);
  CHECK(w.spacing == v.spacing);
  CHECK(w.space == Space::HU);
  CHECK(w.values == v.values);

  const auto dir = std::filesystem::temp_directory_path() / "voxdiff_volume_test";
  std::filesystem::create_directories(dir);
  save_volume(dir / "v.vxvol", v);
  CHECK(load_volume(dir / "v.vxvol").values == v.values);
  std::filesystem::remove_all(dir);
}

TEST_CASE("volume decoding errors") {
  const std::string good = encode_volume(ramp({2, 2, 2}, Space::Normalized));
  CHECK_THROWS_WITH_AS(decode_volume("garbage-bytes-here"), "not a VXVOL file", VolumeFormatError);
  CHECK_THROWS_AS(decode_volume(good.substr(0, good.size() - 1)), io::TruncatedError);
  CHECK_THROWS_AS(decode_volume(good + "x"), io::IoError);
  std::string zero = good;
  zero[12] = zero[13] = zero[14] = zero[15] = 0;
  CHECK_THROWS_AS(decode_volume(zero), VolumeExtentError);
  std::string huge = good;
  for (int i = 12; i < 24; ++i) huge[i] = '\xff';
  CHECK_THROWS_AS(decode_volume(huge), VolumeExtentError);
  CHECK_THROWS_AS(load_volume("/nonexistent/file.vxvol"), io::IoError);
}

TEST_CASE("intensity normalization") {
  CHECK(normalize_hu(-1024.0) == -1.0);
  CHECK(normalize_hu(1650.0) == 1.0);
  CHECK(normalize_hu(-5000.0) == -1.0);
  CHECK(normalize_hu(3000.0) == 1.0);
  for (double hu : {-1000.0, 0.0, 40.0, 700.0}) CHECK(denormalize_hu(normalize_hu(hu)) == doctest::Approx(hu));
  CHECK(denormalize_hu(1.5) == 1650.0);
  CHECK(denormalize_hu(-2.0) == -1024.0);

  const Volume mr = normalize_mr(ramp({2, 2, 2}, Space::HU));
  CHECK(mr.space == Space::Normalized);
  CHECK(mr.values.front() == -1.0f);
  CHECK(mr.values.back() == 1.0f);
  CHECK_THROWS(normalize_mr(Volume({2, 2, 2}, Space::HU, 4.0f)));
  CHECK_THROWS(normalize_ct(mr));
  CHECK_THROWS(denormalize_ct(ramp({2, 2, 2}, Space::HU)));
}

TEST_CASE("phantom synthesis") {
  PhantomSpec spec;
  const auto a = synthesize_pair(spec);
  const auto b = synthesize_pair(spec);
  CHECK(a.mr.values == b.mr.values);
  CHECK(a.ct.values == b.ct.values);
  CHECK(a.mr.extents == Extent3{24, 24, 16});
  const auto [lo, hi] = std::minmax_element(a.mr.values.begin(), a.mr.values.end());
  CHECK(*lo == -1.0f);
  CHECK(*hi == 1.0f);
  for (float v : a.ct.values) {
    CHECK(v >= -1024.0f);
    CHECK(v <= 1650.0f);
  }
  spec.seed = 2;
  CHECK(synthesize_pair(spec).mr.values != a.mr.values);

  // without smoothing the CT is a pure banding of the MR
  spec.smoothing = 0.0;
  const auto c = synthesize_pair(spec);
  for (std::size_t i = 0; i < c.mr.size(); ++i) {
    const double u = 0.5 * (c.mr.values[i] + 1.0);
    const double want = u < 0.2 ? kAirHu : (u < 0.6 ? kSoftHu : kBoneHu);
    CHECK(c.ct.values[i] == static_cast<float>(want));
  }

  spec.extents = {8, 24, 16};
  CHECK_THROWS(synthesize_pair(spec));
}

TEST_CASE("phantom spec parsing") {
  const auto s = parse_phantom_spec("seed = 9\nextents = 32x32x16  # comment\nsmoothing = 0.5\n");
  CHECK(s.seed == 9);
  CHECK(s.extents == Extent3{32, 32, 16});
  CHECK(s.smoothing == 0.5);
  CHECK(parse_phantom_spec(s.to_text()).to_text() == s.to_text());
  CHECK_THROWS_AS(parse_phantom_spec("colour = red\n"), io::ParseError);
  CHECK_THROWS(parse_phantom_spec("sigma_min = 6\nsigma_max = 5\n"));
}

TEST_CASE("patch extraction keeps MR and CT aligned") {
  const Volume mr = ramp({8, 6, 4}, Space::Normalized);
  Volume ct = mr;
  for (float& v : ct.values) v = -v;
  std::mt19937_64 rng(3);
  const auto patches = extract_patches(mr, ct, {4, 4, 2}, 20, rng);
  CHECK(patches.size() == 20);
  for (const auto& p : patches) {
    CHECK(p.corner[0] <= 4);
    CHECK(p.corner[1] <= 2);
    CHECK(p.corner[2] <= 2);
    CHECK(p.mr == crop(mr, p.corner, {4, 4, 2}));
    for (std::size_t i = 0; i < p.mr.size(); ++i) CHECK(p.ct[i] == -p.mr[i]);
  }
  CHECK_THROWS_AS(extract_patches(mr, ct, {9, 4, 2}, 1, rng), ShapeError);
}

TEST_CASE("sliding window geometry") {
  CHECK(window_starts(24, 16) == std::vector<std::size_t>{0, 8});
  CHECK(window_starts(16, 4) == std::vector<std::size_t>{0, 2, 4, 6, 8, 10, 12});
  CHECK(window_starts(16, 16) == std::vector<std::size_t>{0});
  CHECK(window_starts(17, 8) == std::vector<std::size_t>{0, 4, 8, 9});
  CHECK_THROWS_AS(window_starts(4, 8), ShapeError);

  const auto w = window_weight({8, 8, 4});
  const double peak = *std::max_element(w.begin(), w.end());
  for (double v : w) CHECK(v >= 1e-3);
  CHECK(w[(3 * 8 + 3) * 4 + 1] == peak);
  // symmetric about the patch center
  CHECK(w[(0 * 8 + 2) * 4 + 1] == doctest::Approx(w[(7 * 8 + 5) * 4 + 2]));

  CHECK(stream_seed(1, 0, 0) != stream_seed(1, 0, 1));
  CHECK(stream_seed(1, 0, 0) != stream_seed(1, 1, 0));
  CHECK(stream_seed(1, 2, 3) == stream_seed(1, 2, 3));
}

TEST_CASE("sliding window inference blends every voxel") {
  PhantomSpec spec;
  spec.extents = {16, 24, 16};
  const Volume mr = synthesize_pair(spec).mr;
  const ZeroPredictor zero;
  const auto r = resample(NoiseSchedule::linear(20, 1e-3), 3);
  InferenceOptions opts;
  opts.patch = {8, 8, 8};
  opts.runs = 2;
  opts.seed = 4;
  std::size_t calls = 0;
  opts.on_window = [&](std::size_t, std::size_t total, double) {
    ++calls;
    CHECK(total == 3 * 5 * 3);
  };
  const Volume a = sliding_window_infer(mr, zero, r, opts);
  CHECK(calls == 45);
  CHECK(a.space == Space::HU);
  for (float v : a.values) {
    CHECK(std::isfinite(v));
    CHECK(v >= -1024.0f);
    CHECK(v <= 1650.0f);
  }
  opts.on_window = nullptr;
  CHECK(sliding_window_infer(mr, zero, r, opts).values == a.values);
  opts.seed = 5;
  CHECK(sliding_window_infer(mr, zero, r, opts).values != a.values);
  CHECK_THROWS(sliding_window_infer(denormalize_ct(mr), zero, r, opts));
}
