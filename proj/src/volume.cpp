#include "msf/volume.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "msf/error.hpp"

namespace msf {

Volume4D::Volume4D(Dims4 dims, double voxel_pitch, double fill)
    : dims_(dims), voxel_pitch_(voxel_pitch), data_(dims.size(), fill) {
  if (!(voxel_pitch > 0.0) || !std::isfinite(voxel_pitch))
    throw InvalidInput("voxel pitch must be positive and finite");
  if (!std::isfinite(fill)) throw InvalidInput("fill value must be finite");
}

Volume4D::Volume4D(Dims4 dims, double voxel_pitch, std::vector<double> data)
    : dims_(dims), voxel_pitch_(voxel_pitch), data_(std::move(data)) {
  if (!(voxel_pitch > 0.0) || !std::isfinite(voxel_pitch))
    throw InvalidInput("voxel pitch must be positive and finite");
  if (data_.size() != dims_.size())
    throw InvalidInput("volume data length " + std::to_string(data_.size()) +
                       " does not match dims product " + std::to_string(dims_.size()));
  require_finite("volume data");
}

std::span<double> Volume4D::frame(std::size_t t) {
  return std::span<double>(data_).subspan(t * dims_.spatial_size(), dims_.spatial_size());
}

std::span<const double> Volume4D::frame(std::size_t t) const {
  return std::span<const double>(data_).subspan(t * dims_.spatial_size(), dims_.spatial_size());
}

bool Volume4D::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Volume4D::require_finite(std::string_view what) const {
  if (!all_finite()) throw InvalidInput(std::string(what) + " contains non-finite values");
}

std::string_view to_string(Plane plane) noexcept {
  switch (plane) {
    case Plane::xy: return "xy";
    case Plane::yz: return "yz";
    case Plane::zx: return "zx";
  }
  return "?";
}

Plane parse_plane(std::string_view text) {
  if (text == "xy") return Plane::xy;
  if (text == "yz") return Plane::yz;
  if (text == "zx") return Plane::zx;
  throw InvalidInput("unknown plane '" + std::string(text) + "' (expected xy, yz or zx)");
}

PlaneSpec PlaneSpec::of(Plane plane) noexcept {
  switch (plane) {
    case Plane::xy: return {Plane::xy, Axis::z};
    case Plane::yz: return {Plane::yz, Axis::x};
    case Plane::zx: return {Plane::zx, Axis::y};
  }
  return {};
}

namespace {

// Strides inside one time frame for (slice, row, col) of a plane.
struct PlaneStrides {
  std::size_t slice, row, col;
};

PlaneStrides strides_for(const Dims4& d, Plane plane) {
  const std::size_t yx = d.y * d.x;
  switch (plane) {
    case Plane::xy: return {yx, d.x, 1};
    case Plane::yz: return {1, yx, d.x};
    case Plane::zx: return {d.x, yx, 1};
  }
  return {};
}

void check_plane(PlaneSpec plane) {
  if (!plane.consistent()) throw InvalidInput("plane and slice axis are inconsistent");
}

void check_indices(const Dims4& d, const PlaneLayout& layout, std::size_t spatial_index,
                   std::size_t time_index) {
  if (spatial_index >= layout.n_slices)
    throw IndexError("spatial index " + std::to_string(spatial_index) + " out of range [0, " +
                     std::to_string(layout.n_slices) + ")");
  if (time_index >= d.t)
    throw IndexError("time index " + std::to_string(time_index) + " out of range [0, " +
                     std::to_string(d.t) + ")");
}

void copy_slice(const Volume4D& vol, const PlaneStrides& s, const PlaneLayout& layout,
                std::size_t spatial_index, std::size_t t, std::span<double> out) {
  const auto src = vol.frame(t);
  const std::size_t base = spatial_index * s.slice;
  for (std::size_t r = 0; r < layout.rows; ++r) {
    const std::size_t row_base = base + r * s.row;
    double* dst = out.data() + r * layout.cols;
    if (s.col == 1) {
      std::copy_n(src.data() + row_base, layout.cols, dst);
    } else {
      for (std::size_t c = 0; c < layout.cols; ++c) dst[c] = src[row_base + c * s.col];
    }
  }
}

}  // namespace

PlaneLayout reindex_plane(const Dims4& d, PlaneSpec plane) {
  check_plane(plane);
  switch (plane.plane) {
    case Plane::xy: return {d.y, d.x, d.z};
    case Plane::yz: return {d.z, d.y, d.x};
    case Plane::zx: return {d.z, d.x, d.y};
  }
  return {};
}

PlaneLayout reindex_plane(const Volume4D& vol, PlaneSpec plane) {
  return reindex_plane(vol.dims(), plane);
}

Slab2_5D extract_slab(const Volume4D& vol, PlaneSpec plane, std::size_t spatial_index,
                      std::size_t time_index) {
  const Dims4& d = vol.dims();
  if (d.degenerate()) throw InvalidInput("cannot extract a slab from a degenerate volume");
  const PlaneLayout layout = reindex_plane(d, plane);
  check_indices(d, layout, spatial_index, time_index);
  const PlaneStrides s = strides_for(d, plane.plane);

  Slab2_5D slab;
  slab.plane = plane.plane;
  slab.rows = layout.rows;
  slab.cols = layout.cols;
  slab.center_index = time_index;
  slab.data.resize(Slab2_5D::kChannels * layout.rows * layout.cols);

  const auto last = static_cast<std::ptrdiff_t>(d.t) - 1;
  for (std::size_t c = 0; c < Slab2_5D::kChannels; ++c) {
    const std::ptrdiff_t raw = static_cast<std::ptrdiff_t>(time_index) +
                               static_cast<std::ptrdiff_t>(c) -
                               static_cast<std::ptrdiff_t>(Slab2_5D::kCenter);
    const auto t = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(raw, 0, last));
    copy_slice(vol, s, layout, spatial_index, t, slab.channel(c));
  }
  return slab;
}

Image2D extract_slice(const Volume4D& vol, PlaneSpec plane, std::size_t spatial_index,
                      std::size_t time_index) {
  const Dims4& d = vol.dims();
  if (d.degenerate()) throw InvalidInput("cannot extract a slice from a degenerate volume");
  const PlaneLayout layout = reindex_plane(d, plane);
  check_indices(d, layout, spatial_index, time_index);
  Image2D img(layout.rows, layout.cols);
  copy_slice(vol, strides_for(d, plane.plane), layout, spatial_index, time_index, img.data);
  return img;
}

void write_center_slice(Volume4D& vol, PlaneSpec plane, std::size_t spatial_index,
                        std::size_t time_index, const Image2D& slice) {
  const Dims4& d = vol.dims();
  if (d.degenerate()) throw InvalidInput("cannot write into a degenerate volume");
  const PlaneLayout layout = reindex_plane(d, plane);
  if (slice.rows != layout.rows || slice.cols != layout.cols ||
      slice.data.size() != layout.rows * layout.cols)
    throw InvalidInput("slice is " + std::to_string(slice.rows) + "x" +
                       std::to_string(slice.cols) + ", plane " +
                       std::string(to_string(plane.plane)) + " expects " +
                       std::to_string(layout.rows) + "x" + std::to_string(layout.cols));
  check_indices(d, layout, spatial_index, time_index);

  const PlaneStrides s = strides_for(d, plane.plane);
  auto dst = vol.frame(time_index);
  const std::size_t base = spatial_index * s.slice;
  for (std::size_t r = 0; r < layout.rows; ++r)
    for (std::size_t c = 0; c < layout.cols; ++c)
      dst[base + r * s.row + c * s.col] = slice(r, c);
}

}  // namespace msf
