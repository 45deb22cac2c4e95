#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "msf/volume.hpp"

namespace msf {

/// Parallel-beam scan of an (n_z, n_y, n_x) volume: one detector row per z-slice,
/// view angles in [0, pi).
struct ScanGeometry {
  std::size_t n_z = 0;
  std::size_t n_y = 0;
  std::size_t n_x = 0;
  double voxel_pitch = 1.0;
  std::vector<double> view_angles;
  std::size_t n_channels = 0;
  double channel_pitch = 1.0;

  std::size_t n_views() const noexcept { return view_angles.size(); }
  std::size_t n_det_rows() const noexcept { return n_z; }
  /// Measurements per time point: n_views * n_det_rows * n_channels.
  std::size_t sinogram_size() const noexcept { return n_views() * n_z * n_channels; }
  std::size_t volume_size() const noexcept { return n_z * n_y * n_x; }

  /// Throws InvalidInput unless angles are strictly increasing in [0, pi) and the
  /// detector covers the image diagonal.
  void validate() const;

  /// Equally spaced half rotation with the smallest odd channel count covering the field of view.
  static ScanGeometry uniform(std::size_t n_z, std::size_t n_y, std::size_t n_x,
                              std::size_t n_views, double voxel_pitch = 1.0,
                              double channel_pitch = 1.0);
};

/// Measurements per time point laid out (view, det_row, channel) row-major.
struct SinogramSet {
  std::size_t n_views = 0;
  std::size_t n_det_rows = 0;
  std::size_t n_channels = 0;
  std::vector<std::vector<double>> y;
  std::vector<std::vector<double>> lambda;

  std::size_t n_t() const noexcept { return y.size(); }
  std::size_t frame_size() const noexcept { return n_views * n_det_rows * n_channels; }
  /// M_n: measurement count of one time point.
  std::size_t measurement_count(std::size_t) const noexcept { return frame_size(); }

  static SinogramSet zeros(std::size_t n_t, const ScanGeometry& geom, double weight = 1.0);
  /// Shapes agree, y is finite and every weight is finite and nonnegative.
  void validate() const;
};

/// Compressed sparse matrix kept in both row-major and column-major form.
class SparseMatrix {
 public:
  struct Triplet {
    std::uint32_t row;
    std::uint32_t col;
    double value;
  };

  SparseMatrix() = default;
  /// Duplicate (row, col) entries are summed.
  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nonzeros() const noexcept { return csr_val_.size(); }

  std::span<const std::uint32_t> row_cols(std::size_t r) const noexcept;
  std::span<const double> row_values(std::size_t r) const noexcept;
  std::span<const std::uint32_t> col_rows(std::size_t c) const noexcept;
  std::span<const double> col_values(std::size_t c) const noexcept;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint32_t> csr_ptr_, csr_idx_, csc_ptr_, csc_idx_;
  std::vector<double> csr_val_, csc_val_;
};

/// Linear model A_n of one time point. The same 2D slice operator (rays x pixels, with
/// rays ordered (view, channel)) is applied to every z-slice, so A_n is block diagonal in z.
class Projector {
 public:
  /// Joseph-interpolated line integrals for the geometry.
  explicit Projector(const ScanGeometry& geom);
  /// Arbitrary slice operator; slice_matrix must be (n_views*n_channels) x (n_y*n_x).
  Projector(std::size_t n_z, std::size_t n_y, std::size_t n_x, std::size_t n_views,
            std::size_t n_channels, SparseMatrix slice_matrix);

  std::size_t n_z() const noexcept { return n_z_; }
  std::size_t n_y() const noexcept { return n_y_; }
  std::size_t n_x() const noexcept { return n_x_; }
  std::size_t n_views() const noexcept { return n_views_; }
  std::size_t n_channels() const noexcept { return n_channels_; }
  std::size_t volume_size() const noexcept { return n_z_ * n_y_ * n_x_; }
  std::size_t sinogram_size() const noexcept { return n_views_ * n_z_ * n_channels_; }
  const SparseMatrix& slice_matrix() const noexcept { return matrix_; }

  /// Offset in the per-time-point sinogram of slice-matrix row `ray` at detector row z.
  std::size_t sinogram_offset(std::uint32_t ray, std::size_t z) const noexcept {
    return ray_base_[ray] + z * n_channels_;
  }

  template <typename T>
  void forward(std::span<const T> volume, std::span<T> sinogram) const;
  template <typename T>
  void back(std::span<const T> sinogram, std::span<T> volume) const;

  std::vector<double> forward(std::span<const double> volume) const;
  std::vector<double> back(std::span<const double> sinogram) const;

  /// Throws InvalidInput unless the sinogram shape matches.
  void check_sinogram(const SinogramSet& sino) const;
  void check_volume(const Dims4& dims) const;

 private:
  std::size_t n_z_ = 0, n_y_ = 0, n_x_ = 0, n_views_ = 0, n_channels_ = 0;
  SparseMatrix matrix_;
  std::vector<std::size_t> ray_base_;
};

extern template void Projector::forward<float>(std::span<const float>, std::span<float>) const;
extern template void Projector::forward<double>(std::span<const double>, std::span<double>) const;
extern template void Projector::back<float>(std::span<const float>, std::span<float>) const;
extern template void Projector::back<double>(std::span<const double>, std::span<double>) const;

/// Joseph slice operator for the geometry: rows are (view, channel) rays, columns (y, x) pixels.
SparseMatrix joseph_slice_matrix(const ScanGeometry& geom);

std::vector<double> forward_project(std::span<const double> volume, const ScanGeometry& geom);
std::vector<double> back_project(std::span<const double> sinogram, const ScanGeometry& geom);

/// Forward projects every time point of the volume with unit weights.
SinogramSet forward_project_all(const Volume4D& vol, const Projector& proj);

/// Ram-Lak ramp filter with cosine apodization, applied per (t, z, view) detector row,
/// followed by the matched backprojector scaled to reconstruct attenuation.
Volume4D fbp_reconstruct(const SinogramSet& sino, const ScanGeometry& geom);
Volume4D fbp_reconstruct(const SinogramSet& sino, const ScanGeometry& geom, const Projector& proj);

}  // namespace msf
