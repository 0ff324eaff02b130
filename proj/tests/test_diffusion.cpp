#include <doctest.h>

#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "helpers.hpp"
#include "voxdiff/diffusion.hpp"
#include "voxdiff/gradcheck.hpp"

using namespace voxdiff;
using testutil::random_tensor;

namespace {

const NoiseSchedule& chain() {
  static const NoiseSchedule s = NoiseSchedule::linear(1000, 5e-6);
  return s;
}

// KL(N(m1, v1) || N(m2, v2)) in bits by quadrature over the first density.
double kl_bits_quadrature(double m1, double v1, double m2, double v2) {
  const double sd = std::sqrt(v1);
  auto f = [&](double z) {
    const double x = m1 + sd * z;
    const double log_q = -0.5 * z * z - 0.5 * std::log(2 * std::numbers::pi * v1);
    const double log_p = -0.5 * (x - m2) * (x - m2) / v2 - 0.5 * std::log(2 * std::numbers::pi * v2);
    return std::exp(-0.5 * z * z) / std::sqrt(2 * std::numbers::pi) * (log_q - log_p);
  };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -40.0, 40.0, 15, 1e-13) /
         std::numbers::ln2;
}

// Returns the exact noise that takes x0 to x at the queried timestep.
class OracleNoise : public NoisePredictor {
 public:
  OracleNoise(std::vector<double> x0, const NoiseSchedule& full) : x0_(std::move(x0)), full_(&full) {}
  Prediction predict(std::span<const double> x, std::span<const double>, const Extent3&,
                     std::size_t timestep) const override {
    Prediction p{std::vector<double>(x.size()), std::vector<double>(x.size(), 0.0)};
    const double ab = full_->alpha_bar(timestep);
    for (std::size_t i = 0; i < x.size(); ++i) p.eps[i] = (x[i] - std::sqrt(ab) * x0_[i]) / std::sqrt(1.0 - ab);
    return p;
  }

 private:
  std::vector<double> x0_;
  const NoiseSchedule* full_;
};

class ConstantPredictor : public NoisePredictor {
 public:
  Prediction predict(std::span<const double> x, std::span<const double> mr, const Extent3&,
                     std::size_t timestep) const override {
    Prediction p{std::vector<double>(x.size()), std::vector<double>(x.size(), 0.3)};
    for (std::size_t i = 0; i < x.size(); ++i) p.eps[i] = 0.1 * x[i] + 0.01 * mr[i] + 1e-4 * timestep;
    return p;
  }
};

}  // namespace

TEST_CASE("true noise reproduces the posterior mean") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (std::size_t n : {1u, 2u, 500u, 999u, 1000u}) {
    for (int rep = 0; rep < 10; ++rep) {
      const double x0 = std::uniform_real_distribution<double>(-1, 1)(rng);
      const double e = g(rng);
      const double xn = q_sample(x0, n, e, chain());
      const double a = mean_from_noise(xn, n, e, chain());
      const double b = posterior_mean_variance(x0, xn, n, chain()).mean;
      CHECK(std::abs(a - b) < 1e-10);
    }
  }
}

TEST_CASE("variance endpoints and interpolation") {
  for (std::size_t n : {2u, 17u, 1000u}) {
    CHECK(variance_from_coeff(1.0, n, chain()) == chain().beta(n));
    CHECK(variance_from_coeff(-1.0, n, chain()) == chain().posterior_variance(n));
    const double mid = variance_from_coeff(0.0, n, chain());
    CHECK(mid == doctest::Approx(std::sqrt(chain().beta(n) * chain().posterior_variance(n))).epsilon(1e-12));
  }
  CHECK(variance_from_coeff(-1.0, 1, chain()) == doctest::Approx(kVarianceFloor));
  auto k = Tensor::from_values({3}, {-0.7, 0.1, 0.9});
  const auto lv = log_variance_from_coeff(k, 300, chain());
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(lv.values()[i] == doctest::Approx(std::log(variance_from_coeff(k.values()[i], 300, chain()))).epsilon(1e-12));
  }
}

TEST_CASE("vlb term equals the KL divergence in bits") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  std::normal_distribution<double> g;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 2 + rng() % 999;
    const double x0 = u(rng), xn = q_sample(x0, n, g(rng), chain());
    const auto post = posterior_mean_variance(x0, xn, n, chain());
    const double var = variance_from_coeff(u(rng), n, chain());
    const double mu = post.mean + 2.0 * g(rng) * std::sqrt(post.variance);
    const double got = vlb_term(x0, xn, n, mu, var, chain());
    const double want = kl_bits_quadrature(post.mean, post.variance, mu, var);
    CHECK(got == doctest::Approx(want).epsilon(1e-8));
  }
  CHECK_THROWS(vlb_term(0.0, 0.0, 5, 0.0, 0.0, chain()));
}

TEST_CASE("boundary term regions") {
  const double v = 1e-6, sd = 1e-3, edge = 1.0 - 1.0 / kIntensityLevels;
  const auto gelu = [](double x) {
    return 0.5 * x * (1.0 + std::tanh(std::sqrt(2.0 / std::numbers::pi) * (x + 0.044715 * x * x * x)));
  };
  const double h = 1.0 / kIntensityLevels;
  const double d = 2e-4;
  const double mid = vlb_term(0.2, 0.0, 1, 0.2 - d, v, chain());
  CHECK(mid == doctest::Approx(-std::log(gelu((d + h) / sd) - gelu((d - h) / sd)) / std::numbers::ln2));
  const double hi = vlb_term(edge + 1e-5, 0.0, 1, edge, v, chain());
  CHECK(hi == doctest::Approx(-std::log(1.0 - gelu((1e-5 - h) / sd)) / std::numbers::ln2));
  const double lo = vlb_term(-1.0, 0.0, 1, -1.0 + d, v, chain());
  CHECK(lo == doctest::Approx(-std::log(gelu((-d + h) / sd)) / std::numbers::ln2));
  // a hopeless prediction is capped by the probability floor
  CHECK(vlb_term(0.0, 0.0, 1, 0.9, 1e-8, chain()) == doctest::Approx(-std::log(kProbabilityFloor) / std::numbers::ln2));
}

TEST_CASE("tensor vlb matches the scalar form and differentiates") {
  std::mt19937_64 rng(3);
  for (std::size_t n : {1u, 2u, 400u}) {
    auto x0 = random_tensor({1, 1, 2, 2, 2}, rng, false, -0.9, 0.9);
    std::vector<double> xn(8), mu(8);
    for (std::size_t i = 0; i < 8; ++i) {
      xn[i] = q_sample(x0.values()[i], n, 0.3 * static_cast<double>(i) - 1.0, chain());
      mu[i] = (n == 1 ? x0.values()[i] : posterior_mean_variance(x0.values()[i], xn[i], n, chain()).mean) +
              1e-4 * (static_cast<double>(i) - 3.5);
    }
    auto txn = Tensor::from_values(x0.shape(), xn);
    auto tmu = Tensor::from_values(x0.shape(), mu);
    auto k = random_tensor({1, 1, 2, 2, 2}, rng, true, -0.8, 0.8);
    auto f = [&] { return loss_vlb(x0, txn, n, tmu, log_variance_from_coeff(k, n, chain()), chain()); };
    double want = 0.0;
    for (std::size_t i = 0; i < 8; ++i) {
      want += vlb_term(x0.values()[i], xn[i], n, mu[i], variance_from_coeff(k.values()[i], n, chain()), chain()) / 8;
    }
    CHECK(f().item() == doctest::Approx(want).epsilon(1e-10));
    if (n >= 2) CHECK(finite_difference_check(f, std::vector<Tensor>{k}, 1e-5) < 1e-5);
  }
}

TEST_CASE("variance loss does not train the noise estimate") {
  std::mt19937_64 rng(4);
  const Shape shape{2, 1, 2, 2, 2};
  auto x0 = random_tensor(shape, rng, false);
  auto eps = random_tensor(shape, rng, false);
  auto xn = random_tensor(shape, rng, false);
  const std::vector<std::size_t> steps{3, 600};
  auto run = [&](double gamma) {
    SwinVnet::Output out{Tensor::from_values(shape, std::vector<double>(16, 0.2), true),
                         Tensor::from_values(shape, std::vector<double>(16, 0.1), true)};
    auto loss = hybrid_loss(out, x0, xn, eps, steps, chain(), gamma);
    loss.total.backward();
    return std::pair{std::vector<double>(out.eps.grad().begin(), out.eps.grad().end()), out.coeff};
  };
  const auto [g0, c0] = run(0.0);
  const auto [g1, c1] = run(0.5);
  CHECK(g0 == g1);
  bool coeff_moves = false;
  for (double v : c1.grad()) coeff_moves |= v != 0.0;
  CHECK(coeff_moves);
  CHECK_THROWS(total_loss(Tensor::scalar(1.0), Tensor::scalar(1.0), -0.1));
}

TEST_CASE("oracle noise recovers x0 on a two-step chain") {
  const auto full = NoiseSchedule::linear(2, 0.1);
  const auto r = resample(full, 2);
  const std::vector<double> x0{0.25, -0.8, 0.6, 0.0};
  const std::vector<double> mr(4, 0.0);
  std::mt19937_64 rng(5);
  const auto e = standard_normal(4, rng);
  auto x = q_sample(x0, 2, e, full);
  const OracleNoise oracle(x0, full);
  for (std::size_t j = 2; j >= 1; --j) x = reverse_step(x, j, mr, {2, 2, 1}, oracle, r, rng, false);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(x[i] - x0[i]) < 1e-12);
}

TEST_CASE("Monte Carlo generation averages independent trajectories") {
  const auto r = resample(chain(), 5);
  const ConstantPredictor p;
  const std::vector<double> mr{0.1, 0.2, -0.3, 0.4};
  const Extent3 e{2, 2, 1};
  std::vector<std::mt19937_64> runs{std::mt19937_64(7), std::mt19937_64(8)};
  const auto avg = generate(mr, e, p, r, runs);
  std::mt19937_64 a(7), b(8);
  const auto ta = sample_trajectory(mr, e, p, r, a);
  const auto tb = sample_trajectory(mr, e, p, r, b);
  for (std::size_t i = 0; i < 4; ++i) CHECK(avg[i] == (ta[i] + tb[i]) / 2.0);
  std::vector<std::mt19937_64> again{std::mt19937_64(7), std::mt19937_64(8)};
  CHECK(generate(mr, e, p, r, again) == avg);
  CHECK_THROWS(reverse_step(mr, 0, mr, e, p, r, a));
  CHECK_THROWS_AS(reverse_step(mr, 1, mr, {3, 2, 1}, p, r, a), ShapeError);
}
