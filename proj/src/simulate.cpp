#include "msf/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "msf/error.hpp"

namespace msf {

using json = nlohmann::json;

namespace {

bool contains(const Feature& f, double z, double y, double x) {
  if (z < f.z_min || z >= f.z_max) return false;
  const double dy = y - f.center_y, dx = x - f.center_x;
  if (f.kind == Feature::Kind::cylinder) return dy * dy + dx * dx <= f.radius * f.radius;
  return std::abs(dy) <= f.half_y && std::abs(dx) <= f.half_x;
}

}  // namespace

void PhantomSpec::validate() const {
  if (dims.degenerate()) throw InvalidInput("phantom dims must be positive");
  if (!(voxel_pitch > 0.0)) throw InvalidInput("phantom voxel pitch must be positive");
  if (supersample < 1) throw InvalidInput("phantom supersample must be at least 1");
  if (motion.size() != dims.t)
    throw InvalidInput("phantom motion lists " + std::to_string(motion.size()) + " shifts for " +
                       std::to_string(dims.t) + " time points");
  for (double m : motion)
    if (!std::isfinite(m)) throw InvalidInput("phantom motion must be finite");
  const double lo_y = -0.5, hi_y = double(dims.y) - 0.5;
  const double lo_x = -0.5, hi_x = double(dims.x) - 0.5;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const Feature& f = features[i];
    const std::string id = "feature " + std::to_string(i);
    if (!(f.value >= 0.0) || !std::isfinite(f.value)) throw InvalidInput(id + " has a negative attenuation");
    if (!(f.z_max > f.z_min)) throw InvalidInput(id + " has an empty z extent");
    const double ey = f.kind == Feature::Kind::cylinder ? f.radius : f.half_y;
    const double ex = f.kind == Feature::Kind::cylinder ? f.radius : f.half_x;
    if (!(ey > 0.0) || !(ex > 0.0)) throw InvalidInput(id + " has a nonpositive size");
    if (f.center_y - ey < lo_y || f.center_y + ey > hi_y || f.center_x - ex < lo_x || f.center_x + ex > hi_x)
      throw InvalidInput(id + " extends outside the field of view");
    // Voxel i spans [i - 0.5, i + 0.5); the shifted support must stay strictly inside the grid
    // so linear interpolation never pushes mass off the volume.
    const double first = std::floor(f.z_min + 0.5);
    const double last = std::ceil(f.z_max - 0.5);
    for (double m : motion) {
      if (std::floor(first + m) < 0.0 || std::ceil(last + m) > double(dims.z) - 1.0)
        throw InvalidInput(id + " leaves the field of view at shift " + std::to_string(m));
    }
  }
}

PhantomSpec PhantomSpec::bottle(Dims4 dims, double shift_per_frame) {
  PhantomSpec s;
  s.dims = dims;
  s.motion.resize(dims.t);
  for (std::size_t t = 0; t < dims.t; ++t) s.motion[t] = shift_per_frame * double(t);
  const double total_shift = shift_per_frame * double(dims.t > 0 ? dims.t - 1 : 0);

  const double n = double(std::min(dims.y, dims.x));
  const double cy = (double(dims.y) - 1.0) / 2.0, cx = (double(dims.x) - 1.0) / 2.0;
  const double z_lo = 0.5;
  const double z_hi = double(dims.z) - 1.0 - total_shift;
  const double height = z_hi - z_lo;

  auto cylinder = [&](double value, double dy, double dx, double radius, double z0, double z1) {
    Feature f;
    f.kind = Feature::Kind::cylinder;
    f.value = value;
    f.center_y = cy + dy;
    f.center_x = cx + dx;
    f.radius = radius;
    f.z_min = z0;
    f.z_max = z1;
    return f;
  };
  // Cap first; the bottle body then overwrites its middle, leaving a ring around the neck.
  s.features.push_back(cylinder(0.9, 0, 0, 0.36 * n, z_hi - 0.35 * height, z_hi));
  s.features.push_back(cylinder(0.5, 0, 0, 0.29 * n, z_lo, z_hi));
  s.features.push_back(cylinder(0.15, 0, 0, 0.21 * n, z_lo + 0.3 * height, z_hi));
  Feature insert;
  insert.kind = Feature::Kind::cuboid;
  insert.value = 0.75;
  insert.center_y = cy - 0.08 * n;
  insert.center_x = cx + 0.02 * n;
  insert.half_y = 0.05 * n;
  insert.half_x = 0.1 * n;
  insert.z_min = z_lo + 0.45 * height;
  insert.z_max = z_hi - 0.1 * height;
  s.features.push_back(insert);
  // Small hole through the base.
  s.features.push_back(cylinder(0.0, 0.14 * n, -0.05 * n, std::max(1.5, 0.035 * n), z_lo, z_lo + 0.3 * height));
  return s;
}

Volume4D rasterize_base(const PhantomSpec& spec) {
  spec.validate();
  const Dims4 base{1, spec.dims.z, spec.dims.y, spec.dims.x};
  Volume4D vol(base, spec.voxel_pitch);
  const int ss = spec.supersample;
  std::vector<double> offsets(static_cast<std::size_t>(ss));
  for (int k = 0; k < ss; ++k) offsets[static_cast<std::size_t>(k)] = (k + 0.5) / ss - 0.5;
  const double inv = 1.0 / double(ss * ss * ss);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t zi = 0; zi < static_cast<std::ptrdiff_t>(base.z); ++zi) {
    const auto z = static_cast<std::size_t>(zi);
    for (std::size_t y = 0; y < base.y; ++y) {
      for (std::size_t x = 0; x < base.x; ++x) {
        double acc = 0.0;
        for (double oz : offsets)
          for (double oy : offsets)
            for (double ox : offsets) {
              const double pz = double(z) + oz, py = double(y) + oy, px = double(x) + ox;
              double v = 0.0;
              for (const Feature& f : spec.features)
                if (contains(f, pz, py, px)) v = f.value;
              acc += v;
            }
        vol.at(0, z, y, x) = acc * inv;
      }
    }
  }
  return vol;
}

Volume4D make_phantom(const PhantomSpec& spec) {
  const Volume4D base = rasterize_base(spec);
  const Dims4& d = spec.dims;
  Volume4D out(d, spec.voxel_pitch);
  const std::size_t plane = d.y * d.x;
  const auto src = base.frame(0);
  for (std::size_t t = 0; t < d.t; ++t) {
    // out(z) = base(z - shift), linear interpolation, zero outside.
    const double shift = spec.motion[t];
    auto dst = out.frame(t);
    for (std::size_t z = 0; z < d.z; ++z) {
      const double pos = double(z) - shift;
      const double f0 = std::floor(pos);
      const double w = pos - f0;
      const auto z0 = static_cast<std::ptrdiff_t>(f0);
      for (std::size_t p = 0; p < plane; ++p) {
        double v = 0.0;
        if (z0 >= 0 && z0 < std::ptrdiff_t(d.z)) v += (1.0 - w) * src[std::size_t(z0) * plane + p];
        if (w > 0.0 && z0 + 1 >= 0 && z0 + 1 < std::ptrdiff_t(d.z)) v += w * src[std::size_t(z0 + 1) * plane + p];
        dst[z * plane + p] = v;
      }
    }
  }
  return out;
}

SinogramSet simulate_scan(const Volume4D& phantom, const Projector& proj, const NoiseSpec& noise) {
  if (!(noise.noise_std_rel >= 0.0) || !std::isfinite(noise.noise_std_rel))
    throw InvalidInput("noise_std_rel must be nonnegative");
  SinogramSet s = forward_project_all(phantom, proj);
  double peak = 0.0;
  for (const auto& y : s.y)
    for (double v : y) peak = std::max(peak, std::abs(v));
  const double std_dev = noise.noise_std_rel * peak;
  if (std_dev == 0.0) return s;

  const double weight = 1.0 / (std_dev * std_dev);
  for (std::size_t t = 0; t < s.n_t(); ++t) {
    // Independent stream per time point derived from the one seed.
    std::seed_seq seq{static_cast<std::uint32_t>(noise.seed), static_cast<std::uint32_t>(noise.seed >> 32),
                      static_cast<std::uint32_t>(t), 0x6d7366u};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> gauss(0.0, std_dev);
    for (double& v : s.y[t]) v += gauss(rng);
    std::fill(s.lambda[t].begin(), s.lambda[t].end(), weight);
  }
  return s;
}

PhantomSpec phantom_spec_from_json(const json& j) {
  PhantomSpec s;
  try {
    const auto dims = j.at("dims").get<std::vector<std::size_t>>();
    if (dims.size() != 4) throw InvalidInput("phantom dims must list (t, z, y, x)");
    s.dims = {dims[0], dims[1], dims[2], dims[3]};
    s.voxel_pitch = j.value("voxel_pitch", 1.0);
    s.supersample = j.value("supersample", 4);
    if (j.contains("motion")) {
      s.motion = j.at("motion").get<std::vector<double>>();
    } else {
      const double step = j.value("shift_per_frame", 0.0);
      for (std::size_t t = 0; t < s.dims.t; ++t) s.motion.push_back(step * double(t));
    }
    if (j.value("preset", std::string{}) == "bottle") {
      const PhantomSpec preset = PhantomSpec::bottle(s.dims, j.value("shift_per_frame", 0.5));
      s.features = preset.features;
      if (!j.contains("motion")) s.motion = preset.motion;
    }
    for (const auto& fj : j.value("features", json::array())) {
      Feature f;
      const auto kind = fj.at("kind").get<std::string>();
      const auto center = fj.at("center").get<std::vector<double>>();
      const auto z = fj.at("z").get<std::vector<double>>();
      if (center.size() != 2 || z.size() != 2) throw InvalidInput("feature center and z need 2 entries");
      f.center_y = center[0];
      f.center_x = center[1];
      f.z_min = z[0];
      f.z_max = z[1];
      if (kind == "cylinder" || kind == "hole") {
        f.kind = Feature::Kind::cylinder;
        f.radius = fj.at("radius").get<double>();
        f.value = kind == "hole" ? 0.0 : fj.at("value").get<double>();
      } else if (kind == "cuboid") {
        f.kind = Feature::Kind::cuboid;
        const auto half = fj.at("half").get<std::vector<double>>();
        if (half.size() != 2) throw InvalidInput("cuboid half extents need 2 entries");
        f.half_y = half[0];
        f.half_x = half[1];
        f.value = fj.at("value").get<double>();
      } else {
        throw InvalidInput("unknown feature kind '" + kind + "'");
      }
      s.features.push_back(f);
    }
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed phantom spec: ") + e.what());
  }
  s.validate();
  return s;
}

json phantom_spec_to_json(const PhantomSpec& spec) {
  json j;
  j["dims"] = {spec.dims.t, spec.dims.z, spec.dims.y, spec.dims.x};
  j["voxel_pitch"] = spec.voxel_pitch;
  j["supersample"] = spec.supersample;
  j["motion"] = spec.motion;
  j["features"] = json::array();
  for (const auto& f : spec.features) {
    json fj;
    fj["center"] = {f.center_y, f.center_x};
    fj["z"] = {f.z_min, f.z_max};
    fj["value"] = f.value;
    if (f.kind == Feature::Kind::cylinder) {
      fj["kind"] = "cylinder";
      fj["radius"] = f.radius;
    } else {
      fj["kind"] = "cuboid";
      fj["half"] = {f.half_y, f.half_x};
    }
    j["features"].push_back(fj);
  }
  return j;
}

}  // namespace msf
