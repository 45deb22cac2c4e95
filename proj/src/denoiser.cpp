#include "msf/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <type_traits>
#include <sstream>

#include "msf/error.hpp"

namespace msf {

void DenoiserAgent::validate() const {
  if (!plane.consistent()) throw InvalidInput("denoiser plane and slice axis are inconsistent");
  if (!(sigma > 0.0)) throw InvalidInput("denoiser sigma must be positive");
  std::visit(
      [](const auto& b) {
        using B = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<B, GaussianBackend>) {
          if (!(b.strength > 0.0)) throw InvalidInput("gaussian strength must be positive");
          if (!(b.temporal >= 0.0)) throw InvalidInput("temporal std must be nonnegative");
        } else if constexpr (std::is_same_v<B, TvBackend>) {
          if (!(b.weight > 0.0) || b.inner_iters < 1)
            throw InvalidInput("tv weight and inner iteration count must be positive");
          if (!(b.temporal >= 0.0)) throw InvalidInput("temporal std must be nonnegative");
        } else {
          if (!b.weights) throw InvalidInput("cnn backend has no weights");
          b.weights->validate();
        }
      },
      backend);
}

std::string DenoiserAgent::describe() const {
  std::ostringstream os;
  os << to_string(plane.plane) << ':';
  std::visit(
      [&](const auto& b) {
        using B = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<B, GaussianBackend>)
          os << "gaussian(" << b.strength << ',' << b.temporal << ')';
        else if constexpr (std::is_same_v<B, TvBackend>)
          os << "tv(" << b.weight << ',' << b.inner_iters << ',' << b.temporal << ')';
        else
          os << "cnn(" << b.weights->n_layers() << " layers)";
      },
      backend);
  return os.str();
}

std::array<double, Slab2_5D::kChannels> temporal_weights(double temporal) {
  if (!(temporal >= 0.0)) throw InvalidInput("temporal std must be nonnegative");
  std::array<double, Slab2_5D::kChannels> w{};
  if (std::isinf(temporal)) {
    w.fill(1.0 / double(Slab2_5D::kChannels));
    return w;
  }
  if (temporal == 0.0) {
    w[Slab2_5D::kCenter] = 1.0;
    return w;
  }
  double total = 0.0;
  for (std::size_t c = 0; c < w.size(); ++c) {
    const double d = double(c) - double(Slab2_5D::kCenter);
    w[c] = std::exp(-0.5 * d * d / (temporal * temporal));
    total += w[c];
  }
  for (double& v : w) v /= total;
  return w;
}

Image2D temporal_mean(const Slab2_5D& slab, const std::array<double, Slab2_5D::kChannels>& weights) {
  Image2D out(slab.rows, slab.cols);
  const auto center = slab.center();
  for (std::size_t p = 0; p < out.data.size(); ++p) {
    double acc = 0.0;
    for (std::size_t c = 0; c < Slab2_5D::kChannels; ++c)
      if (c != Slab2_5D::kCenter && weights[c] != 0.0) acc += weights[c] * (slab.channel(c)[p] - center[p]);
    out.data[p] = center[p] + acc;
  }
  return out;
}

Image2D temporal_mean(const Slab2_5D& slab) {
  return temporal_mean(slab, temporal_weights(std::numeric_limits<double>::infinity()));
}

namespace {

std::vector<double> gaussian_taps(double strength) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * strength)));
  std::vector<double> w(static_cast<std::size_t>(radius) + 1);
  double total = 0.0;
  for (int k = 0; k <= radius; ++k) {
    w[static_cast<std::size_t>(k)] = std::exp(-0.5 * k * k / (strength * strength));
    total += k == 0 ? w[0] : 2.0 * w[static_cast<std::size_t>(k)];
  }
  for (double& v : w) v /= total;
  return w;
}

// out[i] = in[i] + sum_k w_k (in[clamp(i+k)] - in[i]); the taps sum to one, so this is the
// ordinary normalized convolution, but differences vanish exactly on constant input.
void smooth_line(const double* in, std::size_t n, std::ptrdiff_t stride, const std::vector<double>& w,
                 double* out) {
  const auto last = static_cast<std::ptrdiff_t>(n) - 1;
  const auto radius = static_cast<std::ptrdiff_t>(w.size()) - 1;
  for (std::ptrdiff_t i = 0; i <= last; ++i) {
    const double center = in[i * stride];
    double acc = 0.0;
    for (std::ptrdiff_t k = 1; k <= radius; ++k) {
      const double lo = in[std::max<std::ptrdiff_t>(i - k, 0) * stride];
      const double hi = in[std::min<std::ptrdiff_t>(i + k, last) * stride];
      acc += w[static_cast<std::size_t>(k)] * ((lo - center) + (hi - center));
    }
    out[i * stride] = center + acc;
  }
}

}  // namespace

Image2D gaussian_smooth(const Image2D& img, double strength) {
  if (!(strength > 0.0)) throw InvalidInput("gaussian strength must be positive");
  const auto w = gaussian_taps(strength);
  Image2D tmp(img.rows, img.cols), out(img.rows, img.cols);
  for (std::size_t r = 0; r < img.rows; ++r)
    smooth_line(img.data.data() + r * img.cols, img.cols, 1, w, tmp.data.data() + r * img.cols);
  for (std::size_t c = 0; c < img.cols; ++c)
    smooth_line(tmp.data.data() + c, img.rows, static_cast<std::ptrdiff_t>(img.cols), w, out.data.data() + c);
  return out;
}

Image2D tv_denoise(const Image2D& data, double weight, int iters) {
  if (!(weight > 0.0) || iters < 1) throw InvalidInput("tv weight and iteration count must be positive");
  const std::size_t rows = data.rows, cols = data.cols, n = rows * cols;
  constexpr double tau = 0.125;
  std::vector<double> px(n, 0.0), py(n, 0.0), div(n, 0.0);

  auto divergence = [&] {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        double d = 0.0;
        if (c + 1 < cols) d += px[i];
        if (c > 0) d -= px[i - 1];
        if (r + 1 < rows) d += py[i];
        if (r > 0) d -= py[i - cols];
        div[i] = d;
      }
    }
  };

  const double inv_weight = 1.0 / weight;
  std::vector<double> g(n);
  for (int it = 0; it < iters; ++it) {
    divergence();
    for (std::size_t i = 0; i < n; ++i) g[i] = div[i] - data.data[i] * inv_weight;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        const double gx = c + 1 < cols ? g[i + 1] - g[i] : 0.0;
        const double gy = r + 1 < rows ? g[i + cols] - g[i] : 0.0;
        const double norm = 1.0 + tau * std::sqrt(gx * gx + gy * gy);
        px[i] = (px[i] + tau * gx) / norm;
        py[i] = (py[i] + tau * gy) / norm;
      }
    }
  }
  divergence();
  Image2D out(rows, cols);
  for (std::size_t i = 0; i < n; ++i) out.data[i] = data.data[i] - weight * div[i];
  return out;
}

Image2D denoise_slab(const DenoiserAgent& agent, const Slab2_5D& slab) {
  if (slab.data.size() != Slab2_5D::kChannels * slab.rows * slab.cols)
    throw InvalidInput("slab does not hold 5 channels of its stated size");
  for (double v : slab.data)
    if (!std::isfinite(v)) throw InvalidInput("slab contains non-finite values");
  return std::visit(
      [&](const auto& b) -> Image2D {
        using B = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<B, GaussianBackend>) {
          return gaussian_smooth(temporal_mean(slab, temporal_weights(b.temporal)), b.strength);
        } else if constexpr (std::is_same_v<B, TvBackend>) {
          return tv_denoise(temporal_mean(slab, temporal_weights(b.temporal)), b.weight, b.inner_iters);
        } else {
          if (!b.weights) throw InvalidInput("cnn backend has no weights");
          return cnn_infer(*b.weights, slab);
        }
      },
      agent.backend);
}

Volume4D apply_slicewise(const DenoiserAgent& agent, const Volume4D& vol) {
  agent.validate();
  if (vol.dims().degenerate()) throw InvalidInput("cannot denoise a degenerate volume");
  const PlaneLayout layout = reindex_plane(vol, agent.plane);
  const std::size_t n_t = vol.dims().t;
  const auto jobs = static_cast<std::ptrdiff_t>(layout.n_slices * n_t);
  Volume4D out(vol.dims(), vol.voxel_pitch());

  // Each job owns one output slice; errors are rethrown after the parallel region.
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t job = 0; job < jobs; ++job) {
    try {
      const auto t = static_cast<std::size_t>(job) / layout.n_slices;
      const auto s = static_cast<std::size_t>(job) % layout.n_slices;
      const Image2D slice = denoise_slab(agent, extract_slab(vol, agent.plane, s, t));
      write_center_slice(out, agent.plane, s, t, slice);
    } catch (...) {
#pragma omp critical(msf_slicewise_error)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace msf
