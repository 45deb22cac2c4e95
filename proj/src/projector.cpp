#include "msf/projector.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "msf/error.hpp"

namespace msf {

void ScanGeometry::validate() const {
  if (n_z == 0 || n_y == 0 || n_x == 0) throw InvalidInput("scan geometry has an empty volume");
  if (view_angles.empty()) throw InvalidInput("scan geometry has no views");
  if (n_channels == 0) throw InvalidInput("scan geometry has no detector channels");
  if (!(voxel_pitch > 0.0) || !(channel_pitch > 0.0))
    throw InvalidInput("voxel and channel pitch must be positive");
  for (std::size_t i = 0; i < view_angles.size(); ++i) {
    const double a = view_angles[i];
    if (!std::isfinite(a) || a < 0.0 || a >= std::numbers::pi)
      throw InvalidInput("view angle " + std::to_string(a) + " outside [0, pi)");
    if (i > 0 && !(a > view_angles[i - 1]))
      throw InvalidInput("view angles must be strictly increasing");
  }
  const double diagonal = voxel_pitch * std::hypot(double(n_x), double(n_y));
  if (double(n_channels) * channel_pitch < diagonal)
    throw InvalidInput("detector width " + std::to_string(double(n_channels) * channel_pitch) +
                       " does not cover the image diagonal " + std::to_string(diagonal));
}

ScanGeometry ScanGeometry::uniform(std::size_t n_z, std::size_t n_y, std::size_t n_x,
                                   std::size_t n_views, double voxel_pitch, double channel_pitch) {
  ScanGeometry g;
  g.n_z = n_z;
  g.n_y = n_y;
  g.n_x = n_x;
  g.voxel_pitch = voxel_pitch;
  g.channel_pitch = channel_pitch;
  g.view_angles.resize(n_views);
  for (std::size_t v = 0; v < n_views; ++v)
    g.view_angles[v] = std::numbers::pi * double(v) / double(n_views);
  const double diagonal = voxel_pitch * std::hypot(double(n_x), double(n_y));
  auto n_ch = static_cast<std::size_t>(std::ceil(diagonal / channel_pitch - 1e-9));
  if (n_ch % 2 == 0) ++n_ch;
  g.n_channels = n_ch;
  g.validate();
  return g;
}

SinogramSet SinogramSet::zeros(std::size_t n_t, const ScanGeometry& geom, double weight) {
  SinogramSet s;
  s.n_views = geom.n_views();
  s.n_det_rows = geom.n_det_rows();
  s.n_channels = geom.n_channels;
  s.y.assign(n_t, std::vector<double>(s.frame_size(), 0.0));
  s.lambda.assign(n_t, std::vector<double>(s.frame_size(), weight));
  return s;
}

void SinogramSet::validate() const {
  if (lambda.size() != y.size()) throw InvalidInput("sinogram weights and data differ in time points");
  for (std::size_t t = 0; t < y.size(); ++t) {
    if (y[t].size() != frame_size() || lambda[t].size() != frame_size())
      throw InvalidInput("sinogram frame " + std::to_string(t) + " has the wrong length");
    for (double v : y[t])
      if (!std::isfinite(v)) throw InvalidInput("sinogram contains non-finite values");
    for (double w : lambda[t])
      if (!std::isfinite(w) || w < 0.0)
        throw InvalidInput("sinogram weights must be finite and nonnegative");
  }
}

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets)
    : rows_(rows), cols_(cols) {
  for (const auto& t : triplets)
    if (t.row >= rows || t.col >= cols) throw InvalidInput("sparse matrix entry out of range");

  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  std::vector<Triplet> merged;
  merged.reserve(triplets.size());
  for (const auto& t : triplets) {
    if (!merged.empty() && merged.back().row == t.row && merged.back().col == t.col)
      merged.back().value += t.value;
    else
      merged.push_back(t);
  }

  csr_ptr_.assign(rows + 1, 0);
  csc_ptr_.assign(cols + 1, 0);
  for (const auto& t : merged) {
    ++csr_ptr_[t.row + 1];
    ++csc_ptr_[t.col + 1];
  }
  for (std::size_t r = 0; r < rows; ++r) csr_ptr_[r + 1] += csr_ptr_[r];
  for (std::size_t c = 0; c < cols; ++c) csc_ptr_[c + 1] += csc_ptr_[c];

  csr_idx_.resize(merged.size());
  csr_val_.resize(merged.size());
  csc_idx_.resize(merged.size());
  csc_val_.resize(merged.size());
  std::vector<std::uint32_t> fill(csc_ptr_.begin(), csc_ptr_.end() - 1);
  for (std::size_t i = 0; i < merged.size(); ++i) {
    csr_idx_[i] = merged[i].col;
    csr_val_[i] = merged[i].value;
    const std::uint32_t slot = fill[merged[i].col]++;
    csc_idx_[slot] = merged[i].row;
    csc_val_[slot] = merged[i].value;
  }
}

std::span<const std::uint32_t> SparseMatrix::row_cols(std::size_t r) const noexcept {
  return {csr_idx_.data() + csr_ptr_[r], csr_ptr_[r + 1] - csr_ptr_[r]};
}
std::span<const double> SparseMatrix::row_values(std::size_t r) const noexcept {
  return {csr_val_.data() + csr_ptr_[r], csr_ptr_[r + 1] - csr_ptr_[r]};
}
std::span<const std::uint32_t> SparseMatrix::col_rows(std::size_t c) const noexcept {
  return {csc_idx_.data() + csc_ptr_[c], csc_ptr_[c + 1] - csc_ptr_[c]};
}
std::span<const double> SparseMatrix::col_values(std::size_t c) const noexcept {
  return {csc_val_.data() + csc_ptr_[c], csc_ptr_[c + 1] - csc_ptr_[c]};
}

SparseMatrix joseph_slice_matrix(const ScanGeometry& geom) {
  geom.validate();
  const std::size_t nx = geom.n_x, ny = geom.n_y, nch = geom.n_channels;
  const double p = geom.voxel_pitch;
  const double cx = (double(nx) - 1.0) / 2.0;
  const double cy = (double(ny) - 1.0) / 2.0;
  const double cs = (double(nch) - 1.0) / 2.0;

  std::vector<SparseMatrix::Triplet> triplets;
  triplets.reserve(geom.n_views() * nch * 2 * std::max(nx, ny));

  auto emit = [&](std::uint32_t ray, std::ptrdiff_t pixel, double w) {
    if (w > 0.0) triplets.push_back({ray, static_cast<std::uint32_t>(pixel), w});
  };

  for (std::size_t v = 0; v < geom.n_views(); ++v) {
    const double cos_a = std::cos(geom.view_angles[v]);
    const double sin_a = std::sin(geom.view_angles[v]);
    const bool step_rows = std::abs(cos_a) >= std::abs(sin_a);
    const double length = p / (step_rows ? std::abs(cos_a) : std::abs(sin_a));
    for (std::size_t c = 0; c < nch; ++c) {
      const auto ray = static_cast<std::uint32_t>(v * nch + c);
      const double s = (double(c) - cs) * geom.channel_pitch;
      if (step_rows) {
        // Ray {x cos + y sin = s} crosses each pixel row once.
        for (std::size_t iy = 0; iy < ny; ++iy) {
          const double y = (double(iy) - cy) * p;
          const double fx = (s - y * sin_a) / cos_a / p + cx;
          const double f0 = std::floor(fx);
          const double w = fx - f0;
          const auto i0 = static_cast<std::ptrdiff_t>(f0);
          const auto row = static_cast<std::ptrdiff_t>(iy * nx);
          if (i0 >= 0 && i0 < std::ptrdiff_t(nx)) emit(ray, row + i0, (1.0 - w) * length);
          if (i0 + 1 >= 0 && i0 + 1 < std::ptrdiff_t(nx)) emit(ray, row + i0 + 1, w * length);
        }
      } else {
        for (std::size_t ix = 0; ix < nx; ++ix) {
          const double x = (double(ix) - cx) * p;
          const double fy = (s - x * cos_a) / sin_a / p + cy;
          const double f0 = std::floor(fy);
          const double w = fy - f0;
          const auto j0 = static_cast<std::ptrdiff_t>(f0);
          const auto col = static_cast<std::ptrdiff_t>(ix);
          if (j0 >= 0 && j0 < std::ptrdiff_t(ny)) emit(ray, j0 * std::ptrdiff_t(nx) + col, (1.0 - w) * length);
          if (j0 + 1 >= 0 && j0 + 1 < std::ptrdiff_t(ny))
            emit(ray, (j0 + 1) * std::ptrdiff_t(nx) + col, w * length);
        }
      }
    }
  }
  return SparseMatrix(geom.n_views() * nch, nx * ny, std::move(triplets));
}

Projector::Projector(const ScanGeometry& geom)
    : Projector(geom.n_z, geom.n_y, geom.n_x, geom.n_views(), geom.n_channels,
                joseph_slice_matrix(geom)) {}

Projector::Projector(std::size_t n_z, std::size_t n_y, std::size_t n_x, std::size_t n_views,
                     std::size_t n_channels, SparseMatrix slice_matrix)
    : n_z_(n_z), n_y_(n_y), n_x_(n_x), n_views_(n_views), n_channels_(n_channels),
      matrix_(std::move(slice_matrix)) {
  if (n_z == 0 || n_y == 0 || n_x == 0 || n_views == 0 || n_channels == 0)
    throw InvalidInput("projector dimensions must be positive");
  if (matrix_.rows() != n_views * n_channels || matrix_.cols() != n_y * n_x)
    throw InvalidInput("slice matrix shape does not match the projector layout");
  ray_base_.resize(n_views * n_channels);
  for (std::size_t v = 0; v < n_views; ++v)
    for (std::size_t c = 0; c < n_channels; ++c)
      ray_base_[v * n_channels + c] = v * n_z * n_channels + c;
}

template <typename T>
void Projector::forward(std::span<const T> volume, std::span<T> sinogram) const {
  if (volume.size() != volume_size() || sinogram.size() != sinogram_size())
    throw InvalidInput("forward projection: volume/sinogram size mismatch with geometry");
  const std::size_t slice = n_y_ * n_x_;
  const std::size_t rays = matrix_.rows();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t zi = 0; zi < static_cast<std::ptrdiff_t>(n_z_); ++zi) {
    const auto z = static_cast<std::size_t>(zi);
    const T* img = volume.data() + z * slice;
    for (std::size_t r = 0; r < rays; ++r) {
      const auto cols = matrix_.row_cols(r);
      const auto vals = matrix_.row_values(r);
      T sum = T(0);
      for (std::size_t k = 0; k < cols.size(); ++k) sum += static_cast<T>(vals[k]) * img[cols[k]];
      sinogram[sinogram_offset(static_cast<std::uint32_t>(r), z)] = sum;
    }
  }
}

template <typename T>
void Projector::back(std::span<const T> sinogram, std::span<T> volume) const {
  if (volume.size() != volume_size() || sinogram.size() != sinogram_size())
    throw InvalidInput("back projection: volume/sinogram size mismatch with geometry");
  const std::size_t slice = n_y_ * n_x_;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t zi = 0; zi < static_cast<std::ptrdiff_t>(n_z_); ++zi) {
    const auto z = static_cast<std::size_t>(zi);
    T* img = volume.data() + z * slice;
    for (std::size_t j = 0; j < slice; ++j) {
      const auto rows = matrix_.col_rows(j);
      const auto vals = matrix_.col_values(j);
      T sum = T(0);
      for (std::size_t k = 0; k < rows.size(); ++k)
        sum += static_cast<T>(vals[k]) * sinogram[sinogram_offset(rows[k], z)];
      img[j] = sum;
    }
  }
}

template void Projector::forward<float>(std::span<const float>, std::span<float>) const;
template void Projector::forward<double>(std::span<const double>, std::span<double>) const;
template void Projector::back<float>(std::span<const float>, std::span<float>) const;
template void Projector::back<double>(std::span<const double>, std::span<double>) const;

std::vector<double> Projector::forward(std::span<const double> volume) const {
  std::vector<double> out(sinogram_size());
  forward<double>(volume, out);
  return out;
}

std::vector<double> Projector::back(std::span<const double> sinogram) const {
  std::vector<double> out(volume_size());
  back<double>(sinogram, out);
  return out;
}

void Projector::check_sinogram(const SinogramSet& sino) const {
  if (sino.n_views != n_views_ || sino.n_det_rows != n_z_ || sino.n_channels != n_channels_)
    throw InvalidInput("sinogram layout (" + std::to_string(sino.n_views) + ", " +
                       std::to_string(sino.n_det_rows) + ", " + std::to_string(sino.n_channels) +
                       ") does not match the projector (" + std::to_string(n_views_) + ", " +
                       std::to_string(n_z_) + ", " + std::to_string(n_channels_) + ")");
  sino.validate();
}

void Projector::check_volume(const Dims4& dims) const {
  if (dims.z != n_z_ || dims.y != n_y_ || dims.x != n_x_)
    throw InvalidInput("volume spatial dims do not match the projector geometry");
}

std::vector<double> forward_project(std::span<const double> volume, const ScanGeometry& geom) {
  return Projector(geom).forward(volume);
}

std::vector<double> back_project(std::span<const double> sinogram, const ScanGeometry& geom) {
  return Projector(geom).back(sinogram);
}

SinogramSet forward_project_all(const Volume4D& vol, const Projector& proj) {
  proj.check_volume(vol.dims());
  vol.require_finite("volume");
  SinogramSet s;
  s.n_views = proj.n_views();
  s.n_det_rows = proj.n_z();
  s.n_channels = proj.n_channels();
  s.y.reserve(vol.dims().t);
  for (std::size_t t = 0; t < vol.dims().t; ++t) s.y.push_back(proj.forward(vol.frame(t)));
  s.lambda.assign(vol.dims().t, std::vector<double>(s.frame_size(), 1.0));
  return s;
}

namespace {

// Frequency response of the band-limited ramp kernel with cosine apodization, for a
// zero-padded row of length n_pad (real-to-complex half spectrum).
std::vector<double> ramp_response(std::size_t n_channels, std::size_t n_pad, double tau) {
  std::vector<double> h(n_pad, 0.0);
  const double pi2 = std::numbers::pi * std::numbers::pi;
  h[0] = 1.0 / (4.0 * tau * tau);
  for (std::size_t n = 1; n < n_channels; ++n) {
    if (n % 2 == 1) {
      const double v = -1.0 / (pi2 * double(n * n) * tau * tau);
      h[n] = v;
      h[n_pad - n] = v;
    }
  }
  std::vector<fftw_complex> spectrum(n_pad / 2 + 1);
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n_pad), h.data(), spectrum.data(), FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);

  std::vector<double> response(n_pad / 2 + 1);
  for (std::size_t k = 0; k < response.size(); ++k) {
    const double window = std::cos(std::numbers::pi * double(k) / double(n_pad));
    // tau converts the discrete convolution sum into the integral; 1/n_pad undoes the unnormalized inverse FFT.
    response[k] = spectrum[k][0] * window * tau / double(n_pad);
  }
  return response;
}

}  // namespace

Volume4D fbp_reconstruct(const SinogramSet& sino, const ScanGeometry& geom) {
  return fbp_reconstruct(sino, geom, Projector(geom));
}

Volume4D fbp_reconstruct(const SinogramSet& sino, const ScanGeometry& geom, const Projector& proj) {
  if (geom.n_views() < 2) throw InvalidInput("FBP needs at least 2 views");
  geom.validate();
  proj.check_sinogram(sino);

  const std::size_t nch = geom.n_channels;
  std::size_t n_pad = 1;
  while (n_pad < 2 * nch) n_pad <<= 1;
  const std::vector<double> response = ramp_response(nch, n_pad, geom.channel_pitch);

  double* plan_in = fftw_alloc_real(n_pad);
  fftw_complex* plan_out = fftw_alloc_complex(n_pad / 2 + 1);
  fftw_plan forward = fftw_plan_dft_r2c_1d(static_cast<int>(n_pad), plan_in, plan_out, FFTW_ESTIMATE);
  fftw_plan inverse = fftw_plan_dft_c2r_1d(static_cast<int>(n_pad), plan_out, plan_in, FFTW_ESTIMATE);

  const std::size_t n_t = sino.n_t();
  const std::size_t n_rows = geom.n_views() * geom.n_z;
  Volume4D out(Dims4{n_t, geom.n_z, geom.n_y, geom.n_x}, geom.voxel_pitch);
  const double scale = std::numbers::pi / double(geom.n_views()) * geom.channel_pitch /
                       (geom.voxel_pitch * geom.voxel_pitch);

  for (std::size_t t = 0; t < n_t; ++t) {
    std::vector<double> filtered(sino.frame_size());
#pragma omp parallel
    {
      double* row = fftw_alloc_real(n_pad);
      fftw_complex* spec = fftw_alloc_complex(n_pad / 2 + 1);
#pragma omp for schedule(static)
      for (std::ptrdiff_t ri = 0; ri < static_cast<std::ptrdiff_t>(n_rows); ++ri) {
        const std::size_t base = static_cast<std::size_t>(ri) * nch;
        std::fill(row, row + n_pad, 0.0);
        std::copy_n(sino.y[t].data() + base, nch, row);
        fftw_execute_dft_r2c(forward, row, spec);
        for (std::size_t k = 0; k <= n_pad / 2; ++k) {
          spec[k][0] *= response[k];
          spec[k][1] *= response[k];
        }
        fftw_execute_dft_c2r(inverse, spec, row);
        std::copy_n(row, nch, filtered.data() + base);
      }
      fftw_free(spec);
      fftw_free(row);
    }
    auto frame = out.frame(t);
    proj.back<double>(filtered, frame);
    for (double& v : frame) v *= scale;
  }

  fftw_destroy_plan(inverse);
  fftw_destroy_plan(forward);
  fftw_free(plan_out);
  fftw_free(plan_in);
  return out;
}

}  // namespace msf
