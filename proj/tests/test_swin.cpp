#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "voxdiff/checkpoint.hpp"
#include "voxdiff/gradcheck.hpp"
#include "voxdiff/layers.hpp"
#include "voxdiff/swin_vnet.hpp"

using namespace voxdiff;
using testutil::probe_sum;
using testutil::random_tensor;

TEST_CASE("window partition and merge invert each other") {
  std::mt19937_64 rng(11);
  auto x = random_tensor({2, 3, 8, 4, 4}, rng, false);
  const WindowShape w{{4, 2, 2}};
  for (const Extent3 off : {Extent3{0, 0, 0}, w.shift(), Extent3{3, 1, 0}}) {
    auto p = window_partition(x, w, off);
    CHECK(p.shape() == Shape{2 * 2 * 2 * 2, 16, 3});
    auto back = window_merge(p, 2, 3, {8, 4, 4}, w, off);
    CHECK(std::equal(back.values().begin(), back.values().end(), x.values().begin()));
  }
  auto s = cyclic_shift(x, {3, 1, 2});
  auto u = cyclic_unshift(s, {3, 1, 2});
  CHECK(std::equal(u.values().begin(), u.values().end(), x.values().begin()));
  // element at p moves to p - offset
  CHECK(s.values()[0] == x.values()[((3 * 4) + 1) * 4 + 2]);
}

TEST_CASE("first window holds the leading corner tokens in row-major order") {
  std::vector<double> v(4 * 4 * 2);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  auto x = Tensor::from_values({1, 1, 4, 4, 2}, v);
  auto p = window_partition(x, WindowShape{{2, 2, 2}});
  const std::vector<double> first{0, 1, 2, 3, 8, 9, 10, 11};
  for (std::size_t t = 0; t < 8; ++t) CHECK(p.values()[t] == first[t]);
}

TEST_CASE("effective window clamps and checks divisibility") {
  CHECK(effective_window({8, 8, 4}, WindowShape{{4, 4, 4}}).size == Extent3{4, 4, 4});
  CHECK(effective_window({2, 2, 4}, WindowShape{{4, 4, 2}}).size == Extent3{2, 2, 2});
  CHECK_THROWS_AS(effective_window({6, 8, 4}, WindowShape{{4, 4, 4}}), ShapeError);
}

TEST_CASE("windowed attention gradients") {
  std::mt19937_64 rng(12);
  auto x = random_tensor({1, 4, 4, 4, 2}, rng);
  AttentionWeights w{random_tensor({4, 4}, rng), random_tensor({4, 4}, rng), random_tensor({4, 4}, rng),
                     random_tensor({4, 4}, rng), 2};
  const WindowShape win{{2, 2, 2}};
  auto f = [&] { return probe_sum(windowed_self_attention(x, w, win, win.shift())); };
  CHECK(finite_difference_check(f, std::vector<Tensor>{x, w.query, w.key, w.value, w.output}, 1e-5) < 1e-6);
}

TEST_CASE("sinusoidal embedding") {
  const auto e = sinusoidal_embed(7.0, 8, 1e4);
  REQUIRE(e.size() == 8);
  for (std::size_t k = 0; k < 4; ++k) {
    const double w = std::pow(1e4, -static_cast<double>(k) / 3.0);
    CHECK(e[k] == doctest::Approx(std::sin(7.0 * w)).epsilon(1e-14));
    CHECK(e[k + 4] == doctest::Approx(std::cos(7.0 * w)).epsilon(1e-14));
  }
  CHECK_THROWS(sinusoidal_embed(1.0, 7, 1e4));
  const std::vector<std::size_t> steps{3, 500};
  auto t = timestep_embedding(steps, 16, 1e6);
  CHECK(t.shape() == Shape{2, 16});
  CHECK(t.values()[16 + 0] == doctest::Approx(std::sin(500.0)));
}

TEST_CASE("group count") {
  CHECK(group_count(64, 32) == 32);
  CHECK(group_count(16, 32) == 16);
  CHECK(group_count(48, 32) == 24);
  CHECK(group_count(7, 32) == 7);
  CHECK(group_count(2, 1) == 1);
}

namespace {

SwinConfig small_config() {
  SwinConfig c;
  c.widths = {8, 16, 16, 16, 16};
  c.heads = 2;
  c.embed_dim = 16;
  return c;
}

}  // namespace

TEST_CASE("level extents") {
  const auto levels = level_extents(SwinConfig{}, {128, 128, 4});
  CHECK(levels[5] == Extent3{4, 4, 4});
  const auto toy = level_extents(SwinConfig{}, {16, 16, 4});
  CHECK(toy[4] == Extent3{1, 1, 4});
  CHECK(toy[5] == Extent3{1, 1, 4});
  CHECK_THROWS_AS(level_extents(SwinConfig{}, {24, 16, 4}), ShapeError);
}

TEST_CASE("swin-vnet forward shapes and zero-initialized head") {
  SwinVnet model(small_config(), 3);
  std::mt19937_64 rng(4);
  auto x = random_tensor({2, 1, 16, 16, 4}, rng, false);
  auto mr = random_tensor({2, 1, 16, 16, 4}, rng, false);
  const std::vector<std::size_t> t{1, 900};
  const auto out = model.forward(x, mr, t);
  CHECK(out.eps.shape() == Shape{2, 1, 16, 16, 4});
  CHECK(out.coeff.shape() == Shape{2, 1, 16, 16, 4});
  for (double v : out.eps.values()) CHECK(v == 0.0);
  CHECK(model.parameters().find("final.weight").defined());
  CHECK_FALSE(model.parameters().find("nope").defined());
  CHECK_THROWS_AS(model.forward(random_tensor({1, 1, 12, 16, 4}, rng, false),
                                random_tensor({1, 1, 12, 16, 4}, rng, false), std::vector<std::size_t>{1}),
                  ShapeError);
}

TEST_CASE("model initialization is seeded") {
  SwinVnet a(small_config(), 5), b(small_config(), 5), c(small_config(), 6);
  const auto& ea = a.parameters().entries();
  const auto& eb = b.parameters().entries();
  const auto& ec = c.parameters().entries();
  bool differs = false;
  for (std::size_t i = 0; i < ea.size(); ++i) {
    CHECK(ea[i].first == eb[i].first);
    CHECK(std::equal(ea[i].second.values().begin(), ea[i].second.values().end(), eb[i].second.values().begin()));
    differs |= !std::equal(ea[i].second.values().begin(), ea[i].second.values().end(), ec[i].second.values().begin());
  }
  CHECK(differs);
}

TEST_CASE("checkpoint round trip is byte identical") {
  SwinVnet model(small_config(), 9);
  const std::string bytes = encode_checkpoint(model, 1000, 5e-6, "seed = 1\n");
  const Checkpoint ck = decode_checkpoint(bytes);
  CHECK(ck.steps == 1000);
  CHECK(ck.slope == 5e-6);
  CHECK(ck.run_config == "seed = 1\n");
  CHECK(ck.model.config() == model.config());
  CHECK(encode_checkpoint(ck.model, ck.steps, ck.slope, ck.run_config) == bytes);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), io::IoError);
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), CheckpointError);
}
