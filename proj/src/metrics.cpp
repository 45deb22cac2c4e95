#include "msf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "msf/error.hpp"

namespace msf {

double percentile(std::span<const double> values, double p) {
  if (values.empty()) throw InvalidInput("percentile of an empty set");
  if (!(p >= 0.0 && p <= 100.0)) throw InvalidInput("percentile must lie in [0, 100]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = p / 100.0 * double(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - double(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double dynamic_range(const Volume4D& phantom) {
  return percentile(phantom.data(), 99.9) - percentile(phantom.data(), 0.1);
}

double rmse(const Volume4D& x, const Volume4D& x0) {
  if (x.dims() != x0.dims()) throw InvalidInput("metric inputs differ in dims");
  if (x.size() == 0) throw InvalidInput("metric inputs are empty");
  const auto a = x.data(), b = x0.data();
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / double(a.size()));
}

double psnr(const Volume4D& x, const Volume4D& x0) {
  const double err = rmse(x, x0);
  const double range = dynamic_range(x0);
  if (err == 0.0) throw UndefinedMetric("PSNR is undefined for identical volumes (RMSE = 0)");
  if (range == 0.0) throw UndefinedMetric("PSNR is undefined for a constant phantom (range = 0)");
  return 20.0 * std::log10(range / err);
}

namespace {

// Separable 'valid' filtering with a normalized Gaussian of the given radius.
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t rows, std::size_t cols,
                                 const std::vector<double>& taps) {
  const std::size_t w = taps.size();
  const std::size_t out_r = rows - w + 1, out_c = cols - w + 1;
  std::vector<double> tmp(rows * out_c), out(out_r * out_c);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < out_c; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < w; ++k) s += taps[k] * img[r * cols + c + k];
      tmp[r * out_c + c] = s;
    }
  for (std::size_t r = 0; r < out_r; ++r)
    for (std::size_t c = 0; c < out_c; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < w; ++k) s += taps[k] * tmp[(r + k) * out_c + c];
      out[r * out_c + c] = s;
    }
  return out;
}

}  // namespace

double ssim(const Volume4D& x, const Volume4D& y, const Volume4D& reference) {
  if (x.dims() != y.dims()) throw InvalidInput("SSIM inputs differ in dims");
  if (x.dims().degenerate()) throw InvalidInput("SSIM inputs are empty");
  const double range = dynamic_range(reference);
  if (range == 0.0) throw UndefinedMetric("SSIM is undefined for a constant phantom (range = 0)");

  const Dims4& d = x.dims();
  const std::size_t rows = d.y, cols = d.x;
  // 11x11 window, narrowed for slices smaller than that.
  const std::size_t radius = std::min<std::size_t>(5, (std::min(rows, cols) - 1) / 2);
  std::vector<double> taps(2 * radius + 1);
  double total = 0.0;
  for (std::size_t k = 0; k < taps.size(); ++k) {
    const double off = double(k) - double(radius);
    taps[k] = std::exp(-off * off / (2.0 * 1.5 * 1.5));
    total += taps[k];
  }
  for (double& t : taps) t /= total;

  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);
  const std::size_t n_slices = d.t * d.z, plane = rows * cols;
  std::vector<double> slice_ssim(n_slices);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(n_slices); ++si) {
    const std::size_t off = static_cast<std::size_t>(si) * plane;
    std::vector<double> a(x.data().begin() + off, x.data().begin() + off + plane);
    std::vector<double> b(y.data().begin() + off, y.data().begin() + off + plane);
    std::vector<double> aa(plane), bb(plane), ab(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      aa[i] = a[i] * a[i];
      bb[i] = b[i] * b[i];
      ab[i] = a[i] * b[i];
    }
    const auto mu_a = filter_valid(a, rows, cols, taps);
    const auto mu_b = filter_valid(b, rows, cols, taps);
    const auto e_aa = filter_valid(aa, rows, cols, taps);
    const auto e_bb = filter_valid(bb, rows, cols, taps);
    const auto e_ab = filter_valid(ab, rows, cols, taps);
    double acc = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double va = e_aa[i] - mu_a[i] * mu_a[i];
      const double vb = e_bb[i] - mu_b[i] * mu_b[i];
      const double cov = e_ab[i] - mu_a[i] * mu_b[i];
      acc += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
    }
    slice_ssim[static_cast<std::size_t>(si)] = acc / double(mu_a.size());
  }
  double sum = 0.0;
  for (double s : slice_ssim) sum += s;
  return sum / double(n_slices);
}

double ssim(const Volume4D& x, const Volume4D& x0) { return ssim(x, x0, x0); }

MetricsReport evaluate(const Volume4D& x, const Volume4D& x0) {
  MetricsReport r;
  r.rmse = rmse(x, x0);
  r.range = dynamic_range(x0);
  r.psnr_db = psnr(x, x0);
  r.ssim = ssim(x, x0);
  return r;
}

}  // namespace msf
