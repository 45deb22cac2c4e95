#pragma once

#include <span>

#include "msf/volume.hpp"

namespace msf {

struct MetricsReport {
  double psnr_db = 0.0;
  double ssim = 0.0;
  double rmse = 0.0;
  double range = 0.0;
};

/// Linear-interpolation percentile of the sorted values, p in [0, 100].
double percentile(std::span<const double> values, double p);
/// p99.9 - p0.1 of the phantom.
double dynamic_range(const Volume4D& phantom);
double rmse(const Volume4D& x, const Volume4D& x0);

/// 20 log10(range(X0) / rmse(X, X0)). Throws UndefinedMetric if either is zero.
double psnr(const Volume4D& x, const Volume4D& x0);
/// Mean local SSIM over xy slices (11x11 Gaussian window, std 1.5, K1 0.01, K2 0.03) with the
/// dynamic range taken from `reference`'s percentile range.
double ssim(const Volume4D& x, const Volume4D& y, const Volume4D& reference);
/// ssim(x, x0, x0).
double ssim(const Volume4D& x, const Volume4D& x0);

MetricsReport evaluate(const Volume4D& x, const Volume4D& x0);

}  // namespace msf
