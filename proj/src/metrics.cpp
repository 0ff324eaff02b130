#include "voxdiff/metrics.hpp"

#include <algorithm>
#include <array>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace voxdiff {

namespace {

constexpr std::array<double, 5> kScaleWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;

void require_same(const char* op, const Volume& a, const Volume& b) {
  if (a.extents != b.extents) throw ShapeError(std::string(op) + ": volume extents differ");
  if (a.values.empty()) throw ShapeError(std::string(op) + ": empty volume");
}

struct Image {
  std::size_t h = 0, w = 0;
  std::vector<double> px;
  double at(std::size_t x, std::size_t y) const { return px[x * w + y]; }
};

Image slice(const Volume& v, std::size_t l) {
  Image img{v.extents[0], v.extents[1], {}};
  img.px.reserve(img.h * img.w);
  for (std::size_t x = 0; x < img.h; ++x)
    for (std::size_t y = 0; y < img.w; ++y) img.px.push_back(v.at(x, y, l));
  return img;
}

Image pool(const Image& img) {
  Image out{img.h / 2, img.w / 2, {}};
  out.px.reserve(out.h * out.w);
  for (std::size_t x = 0; x < out.h; ++x)
    for (std::size_t y = 0; y < out.w; ++y) {
      out.px.push_back(0.25 * (img.at(2 * x, 2 * y) + img.at(2 * x + 1, 2 * y) + img.at(2 * x, 2 * y + 1) +
                               img.at(2 * x + 1, 2 * y + 1)));
    }
  return out;
}

// Valid separable Gaussian filtering.
Image filter(const Image& img, const std::vector<double>& k) {
  const std::size_t n = k.size();
  Image rows{img.h, img.w - n + 1, {}};
  rows.px.resize(rows.h * rows.w);
  for (std::size_t x = 0; x < rows.h; ++x)
    for (std::size_t y = 0; y < rows.w; ++y) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * img.at(x, y + i);
      rows.px[x * rows.w + y] = acc;
    }
  Image out{img.h - n + 1, rows.w, {}};
  out.px.resize(out.h * out.w);
  for (std::size_t x = 0; x < out.h; ++x)
    for (std::size_t y = 0; y < out.w; ++y) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += k[i] * rows.at(x + i, y);
      out.px[x * out.w + y] = acc;
    }
  return out;
}

Image product(const Image& a, const Image& b) {
  Image out{a.h, a.w, std::vector<double>(a.px.size())};
  for (std::size_t i = 0; i < a.px.size(); ++i) out.px[i] = a.px[i] * b.px[i];
  return out;
}

struct ScaleStats {
  double cs = 0.0;
  double ssim = 0.0;
};

ScaleStats scale_stats(const Image& a, const Image& b, const std::vector<double>& k, double c1, double c2) {
  const Image mu_a = filter(a, k), mu_b = filter(b, k);
  const Image aa = filter(product(a, a), k), bb = filter(product(b, b), k), ab = filter(product(a, b), k);
  double cs_sum = 0.0, ssim_sum = 0.0;
  for (std::size_t i = 0; i < mu_a.px.size(); ++i) {
    const double ma = mu_a.px[i], mb = mu_b.px[i];
    const double va = aa.px[i] - ma * ma, vb = bb.px[i] - mb * mb, cov = ab.px[i] - ma * mb;
    const double cs = (2.0 * cov + c2) / (va + vb + c2);
    const double lum = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    cs_sum += cs;
    ssim_sum += lum * cs;
  }
  const double n = static_cast<double>(mu_a.px.size());
  return {cs_sum / n, ssim_sum / n};
}

}  // namespace

double mae(const Volume& a, const Volume& b) {
  require_same("mae", a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(static_cast<double>(a.values[i]) - b.values[i]);
  return acc / static_cast<double>(a.size());
}

double psnr(const Volume& a, const Volume& b, double range) {
  require_same("psnr", a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.values[i]) - b.values[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(range / std::sqrt(mse));
}

double ncc(const Volume& a, const Volume& b) {
  require_same("ncc", a, b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a.values[i];
    mb += b.values[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a.values[i] - ma, db = b.values[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw std::invalid_argument("ncc: constant volume has zero variance");
  return sab / std::sqrt(saa * sbb);
}

MsSsim ms_ssim_detailed(const Volume& a, const Volume& b, std::size_t scales, double range) {
  require_same("ms_ssim", a, b);
  if (scales < 1 || scales > kScaleWeights.size()) throw std::invalid_argument("ms_ssim: scales must be in [1, 5]");
  const std::size_t side = std::min(a.extents[0], a.extents[1]);

  std::size_t window = kWindow;
  if (side < kWindow) {
    window = side % 2 == 1 ? side : side - 1;
    spdlog::warn("ms_ssim: {}-voxel slices are smaller than the {}-voxel window; using a {}-voxel window", side,
                 kWindow, window);
  }
  std::size_t used = 1;
  while (used < scales && (side >> used) >= window) ++used;
  if (used < scales) {
    spdlog::warn("ms_ssim: {}-voxel slices support {} of {} scales; weights renormalized", side, used, scales);
  }
  std::vector<double> weights(kScaleWeights.begin(), kScaleWeights.begin() + used);
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  for (double& w : weights) w /= wsum;

  std::vector<double> kernel(window);
  double ksum = 0.0;
  for (std::size_t i = 0; i < window; ++i) {
    const double d = static_cast<double>(i) - 0.5 * static_cast<double>(window - 1);
    kernel[i] = std::exp(-0.5 * d * d / (kSigma * kSigma));
    ksum += kernel[i];
  }
  for (double& k : kernel) k /= ksum;
  const double c1 = (kK1 * range) * (kK1 * range), c2 = (kK2 * range) * (kK2 * range);

  double total = 0.0;
  for (std::size_t l = 0; l < a.extents[2]; ++l) {
    Image ia = slice(a, l), ib = slice(b, l);
    double score = 1.0;
    for (std::size_t s = 0; s < used; ++s) {
      const ScaleStats st = scale_stats(ia, ib, kernel, c1, c2);
      if (s + 1 < used) {
        score *= std::pow(std::max(st.cs, 0.0), weights[s]);
        ia = pool(ia);
        ib = pool(ib);
      } else {
        score *= std::pow(std::max(st.ssim, 0.0), weights[s]);
      }
    }
    total += score;
  }
  return {total / static_cast<double>(a.extents[2]), used, window};
}

double ms_ssim(const Volume& a, const Volume& b, std::size_t scales, double range) {
  return ms_ssim_detailed(a, b, scales, range).value;
}

double student_t_two_sided_p(double t, std::size_t df) {
  if (df < 1) throw std::invalid_argument("t distribution: need at least one degree of freedom");
  if (!std::isfinite(t)) return std::isnan(t) ? t : 0.0;
  const double nu = static_cast<double>(df);
  const double log_norm =
      std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * std::numbers::pi);
  auto density = [&](double u) { return std::exp(log_norm - 0.5 * (nu + 1.0) * std::log1p(u * u / nu)); };
  const double tail = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      density, std::abs(t), std::numeric_limits<double>::infinity(), 15, 1e-14);
  return std::min(1.0, 2.0 * tail);
}

TTest paired_t_test(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("paired t-test: samples differ in length");
  if (x.size() < 2) throw std::invalid_argument("paired t-test: need at least two pairs");
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) mean += x[i] - y[i];
  mean /= n;
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i] - mean;
    ss += d * d;
  }
  if (ss == 0.0) throw std::invalid_argument("paired t-test: degenerate sample (differences have zero variance)");
  const double sd = std::sqrt(ss / (n - 1.0));
  TTest r;
  r.df = x.size() - 1;
  r.t = mean / (sd / std::sqrt(n));
  r.p = student_t_two_sided_p(r.t, r.df);
  return r;
}

Summary summarize(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("summarize: no values");
  Summary s;
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

VolumeMetrics evaluate_pair(const std::string& name, const std::string& method, const Volume& pred,
                            const Volume& truth) {
  return {name, method, mae(pred, truth), psnr(pred, truth), ms_ssim(pred, truth), ncc(pred, truth)};
}

namespace {

std::string number(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

std::string metrics_csv(std::span<const VolumeMetrics> rows) {
  std::ostringstream os;
  os << "volume,method,mae_hu,psnr_db,ms_ssim,ncc\n";
  std::vector<std::string> methods;
  for (const auto& r : rows) {
    os << r.volume << ',' << r.method << ',' << number(r.mae) << ',' << number(r.psnr) << ',' << number(r.ms_ssim)
       << ',' << number(r.ncc) << '\n';
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
  }
  for (const auto& m : methods) {
    std::array<std::vector<double>, 4> cols;
    for (const auto& r : rows) {
      if (r.method != m) continue;
      cols[0].push_back(r.mae);
      cols[1].push_back(r.psnr);
      cols[2].push_back(r.ms_ssim);
      cols[3].push_back(r.ncc);
    }
    std::array<Summary, 4> s;
    for (std::size_t c = 0; c < 4; ++c) s[c] = summarize(cols[c]);
    os << "mean," << m;
    for (const auto& x : s) os << ',' << number(x.mean);
    os << "\nsd," << m;
    for (const auto& x : s) os << ',' << number(x.sd);
    os << '\n';
  }
  return os.str();
}

std::vector<MetricTest> compare_methods(std::span<const VolumeMetrics> a, std::span<const VolumeMetrics> b) {
  if (a.size() != b.size()) throw std::invalid_argument("compare_methods: methods cover different volume counts");
  std::array<std::vector<double>, 4> xa, xb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].volume != b[i].volume) throw std::invalid_argument("compare_methods: volume order differs");
    xa[0].push_back(a[i].mae), xb[0].push_back(b[i].mae);
    xa[1].push_back(a[i].psnr), xb[1].push_back(b[i].psnr);
    xa[2].push_back(a[i].ms_ssim), xb[2].push_back(b[i].ms_ssim);
    xa[3].push_back(a[i].ncc), xb[3].push_back(b[i].ncc);
  }
  const std::array<const char*, 4> names{"mae_hu", "psnr_db", "ms_ssim", "ncc"};
  std::vector<MetricTest> out;
  for (std::size_t m = 0; m < 4; ++m) out.push_back({names[m], paired_t_test(xa[m], xb[m])});
  return out;
}

std::string tests_csv(std::span<const MetricTest> tests) {
  std::ostringstream os;
  os << "metric,t,p,df\n";
  for (const auto& t : tests) os << t.metric << ',' << number(t.test.t) << ',' << number(t.test.p) << ',' << t.test.df << '\n';
  return os.str();
}

}  // namespace voxdiff
