#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "voxdiff/volume.hpp"

namespace voxdiff {

inline constexpr double kHuRange = kHuMax - kHuMin;

double mae(const Volume& a, const Volume& b);
// 20 log10(range / sqrt(MSE)); +infinity when the volumes are identical.
double psnr(const Volume& a, const Volume& b, double range = kHuRange);
// Pearson correlation over all voxels; rejects constant inputs.
double ncc(const Volume& a, const Volume& b);

struct MsSsim {
  double value = 0.0;
  std::size_t scales = 0;  // scales actually used
  std::size_t window = 0;  // Gaussian window side actually used
};

// Slice-wise 2D MS-SSIM over axial slices (fixed L index), averaged. Small slices use fewer scales
// (weights renormalized) and, below 11 voxels, a smaller window; both are logged as warnings.
MsSsim ms_ssim_detailed(const Volume& a, const Volume& b, std::size_t scales = 5, double range = kHuRange);
double ms_ssim(const Volume& a, const Volume& b, std::size_t scales = 5, double range = kHuRange);

struct TTest {
  double t = 0.0;
  double p = 1.0;
  std::size_t df = 0;
};

// Two-sided tail probability of Student's t with `df` degrees of freedom by quadrature of the density.
double student_t_two_sided_p(double t, std::size_t df);
TTest paired_t_test(std::span<const double> x, std::span<const double> y);

struct Summary {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; 0 for a single value
  double min = 0.0;
  double max = 0.0;
};
Summary summarize(std::span<const double> values);

struct VolumeMetrics {
  std::string volume;
  std::string method;
  double mae = 0.0;
  double psnr = 0.0;
  double ms_ssim = 0.0;
  double ncc = 0.0;
};

VolumeMetrics evaluate_pair(const std::string& name, const std::string& method, const Volume& pred,
                            const Volume& truth);

// One row per (volume, method), then mean and sd rows per method.
std::string metrics_csv(std::span<const VolumeMetrics> rows);

struct MetricTest {
  std::string metric;
  TTest test;
};
// Paired tests per metric between two methods evaluated on the same volumes, in row order.
std::vector<MetricTest> compare_methods(std::span<const VolumeMetrics> a, std::span<const VolumeMetrics> b);
std::string tests_csv(std::span<const MetricTest> tests);

}  // namespace voxdiff
