#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "msf/projector.hpp"
#include "msf/volume.hpp"

namespace msf {

/// Solid primitive in voxel coordinates of the base (t = 0) volume. Features are painted in
/// order and each one replaces the voxels it covers, so later features carve holes.
struct Feature {
  enum class Kind { cylinder, cuboid };

  Kind kind = Kind::cylinder;
  double value = 1.0;
  // cylinder: axis along z through (center_y, center_x)
  double center_y = 0.0;
  double center_x = 0.0;
  double radius = 0.0;
  // cuboid: half extents around the center
  double half_y = 0.0;
  double half_x = 0.0;
  // z extent [z_min, z_max) for both kinds
  double z_min = 0.0;
  double z_max = 0.0;
};

struct PhantomSpec {
  Dims4 dims;
  double voxel_pitch = 1.0;
  std::vector<Feature> features;
  /// Vertical (z) shift in voxels for each time point.
  std::vector<double> motion;
  /// Subsamples per axis used when rasterizing feature boundaries.
  int supersample = 4;

  void validate() const;
  /// Nested-cylinder bottle with a cap and a small hole in its base, moving up over time.
  static PhantomSpec bottle(Dims4 dims, double shift_per_frame = 0.5);
};

struct NoiseSpec {
  std::uint64_t seed = 0;
  /// AWGN std as a fraction of the max clean sinogram value.
  double noise_std_rel = 0.0;
};

Volume4D make_phantom(const PhantomSpec& spec);
/// Base volume before motion.
Volume4D rasterize_base(const PhantomSpec& spec);

/// y_n = A_n x_n + AWGN, lambda_n = 1 / variance (1 when noise free).
SinogramSet simulate_scan(const Volume4D& phantom, const Projector& proj, const NoiseSpec& noise);

PhantomSpec phantom_spec_from_json(const nlohmann::json& j);
nlohmann::json phantom_spec_to_json(const PhantomSpec& spec);

}  // namespace msf
