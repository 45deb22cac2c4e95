#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msf/error.hpp"
#include "msf/mace.hpp"
#include "msf/projector.hpp"
#include "msf/simulate.hpp"
#include "msf/volume.hpp"

namespace msf::cli {

/// Raised for unusable configuration; maps to exit code 2.
class ConfigError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

struct Method {
  enum class Kind { fbp, mace_msf, mace_single };
  Kind kind = Kind::mace_msf;
  Plane plane = Plane::xy;  // mace_single only

  /// "fbp", "mace-msf", "mace-single:xy" or "mace-single(xy)".
  static Method parse(const std::string& text);
  std::string str() const;
};

struct RunConfig {
  std::uint64_t seed = 1;
  int workers = 0;

  std::string phantom_spec;
  std::string sinogram;
  std::string phantom;
  std::string output_dir = "out";
  std::string output;  // reconstruction header; defaults to <output_dir>/recon.json
  std::string init = "fbp";

  Dims4 dims{4, 8, 64, 64};
  std::size_t n_views = 36;
  double voxel_pitch = 1.0;
  double channel_pitch = 1.0;
  double shift_per_frame = 0.5;

  NoiseSpec noise;
  Method method;
  MaceConfig mace;

  std::string backend = "tv";
  double gaussian_strength = 1.0;
  double temporal = 0.6;
  double tv_weight = 0.03;
  int tv_iters = 50;
  std::string weights;

  bool diagnostics_timing = true;

  ScanGeometry geometry() const;
  /// Denoiser agents for the configured method (empty for FBP).
  std::vector<DenoiserAgent> agents() const;
  MaceConfig mace_config() const;
};

/// Built-in defaults, including the "fast" and "desk" profiles.
nlohmann::json default_config(const std::string& profile = "fast");

/// Sets a dotted path ("mace.rho") to a value parsed as JSON, falling back to a string.
void apply_override(nlohmann::json& config, const std::string& assignment);
/// Applies MSF_<SECTION>__<KEY> variables (double underscore separates path components).
void apply_env_overrides(nlohmann::json& config, char** envp);

RunConfig parse_config(const nlohmann::json& config);

}  // namespace msf::cli
