#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace msf {

/// Extents of a 4D volume in (t, z, y, x) order.
struct Dims4 {
  std::size_t t = 0;
  std::size_t z = 0;
  std::size_t y = 0;
  std::size_t x = 0;

  std::size_t spatial_size() const noexcept { return z * y * x; }
  std::size_t size() const noexcept { return t * z * y * x; }
  bool degenerate() const noexcept { return t == 0 || z == 0 || y == 0 || x == 0; }
  friend bool operator==(const Dims4&, const Dims4&) = default;
};

/// Dense 4D attenuation image, stored (t, z, y, x) row-major so one time point is contiguous.
class Volume4D {
 public:
  Volume4D() = default;
  explicit Volume4D(Dims4 dims, double voxel_pitch = 1.0, double fill = 0.0);
  Volume4D(Dims4 dims, double voxel_pitch, std::vector<double> data);

  const Dims4& dims() const noexcept { return dims_; }
  double voxel_pitch() const noexcept { return voxel_pitch_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  /// One time point as a contiguous (z, y, x) block.
  std::span<double> frame(std::size_t t);
  std::span<const double> frame(std::size_t t) const;

  std::size_t index(std::size_t t, std::size_t z, std::size_t y, std::size_t x) const noexcept {
    return ((t * dims_.z + z) * dims_.y + y) * dims_.x + x;
  }
  double& at(std::size_t t, std::size_t z, std::size_t y, std::size_t x) noexcept {
    return data_[index(t, z, y, x)];
  }
  double at(std::size_t t, std::size_t z, std::size_t y, std::size_t x) const noexcept {
    return data_[index(t, z, y, x)];
  }

  bool all_finite() const noexcept;
  /// Throws InvalidInput naming `what` if any voxel is NaN or infinite.
  void require_finite(std::string_view what) const;

  friend bool operator==(const Volume4D& a, const Volume4D& b) {
    return a.dims_ == b.dims_ && a.voxel_pitch_ == b.voxel_pitch_ && a.data_ == b.data_;
  }

 private:
  Dims4 dims_{};
  double voxel_pitch_ = 1.0;
  std::vector<double> data_;
};

enum class Plane { xy, yz, zx };

std::string_view to_string(Plane plane) noexcept;
/// Parses "xy", "yz" or "zx"; throws InvalidInput otherwise.
Plane parse_plane(std::string_view text);

enum class Axis { z, y, x };

/// A slicing plane together with the spatial axis orthogonal to it (xy<->z, yz<->x, zx<->y).
struct PlaneSpec {
  Plane plane = Plane::xy;
  Axis slice_axis = Axis::z;

  static PlaneSpec of(Plane plane) noexcept;
  bool consistent() const noexcept { return of(plane).slice_axis == slice_axis; }
};

/// Slice layout of a volume seen through a plane: n_slices slices of rows x cols each.
struct PlaneLayout {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t n_slices = 0;
};

/// Row-major 2D array of reals.
struct Image2D {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Image2D() = default;
  Image2D(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) noexcept { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data[r * cols + c]; }
  friend bool operator==(const Image2D&, const Image2D&) = default;
};

/// Five consecutive time slices of one spatial slice; channel 2 is the slice at center_index.
struct Slab2_5D {
  static constexpr std::size_t kChannels = 5;
  static constexpr std::size_t kCenter = 2;

  Plane plane = Plane::xy;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t center_index = 0;
  // kChannels planes of rows*cols, channel-major.
  std::vector<double> data;

  std::span<double> channel(std::size_t c) noexcept {
    return std::span<double>(data).subspan(c * rows * cols, rows * cols);
  }
  std::span<const double> channel(std::size_t c) const noexcept {
    return std::span<const double>(data).subspan(c * rows * cols, rows * cols);
  }
  std::span<const double> center() const noexcept { return channel(kCenter); }
};

PlaneLayout reindex_plane(const Volume4D& vol, PlaneSpec plane);
PlaneLayout reindex_plane(const Dims4& dims, PlaneSpec plane);

/// Reads the 5-slice temporal window around time_index. Temporal indices outside
/// [0, n_t) replicate the nearest boundary slice.
Slab2_5D extract_slab(const Volume4D& vol, PlaneSpec plane, std::size_t spatial_index,
                      std::size_t time_index);

/// Copies one spatial slice of one time point without the temporal window.
Image2D extract_slice(const Volume4D& vol, PlaneSpec plane, std::size_t spatial_index,
                      std::size_t time_index);

/// Overwrites exactly the (spatial_index, time_index) slice of the plane.
void write_center_slice(Volume4D& vol, PlaneSpec plane, std::size_t spatial_index,
                        std::size_t time_index, const Image2D& slice);

}  // namespace msf
