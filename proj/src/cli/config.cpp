#include "msf/cli/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <memory>

#include "msf/cnn.hpp"

namespace msf::cli {

using json = nlohmann::json;

Method Method::parse(const std::string& text) {
  if (text == "fbp") return {Kind::fbp, Plane::xy};
  if (text == "mace-msf" || text == "msf") return {Kind::mace_msf, Plane::xy};
  for (const char* prefix : {"mace-single:", "mace-single("}) {
    const std::size_t n = std::strlen(prefix);
    if (text.rfind(prefix, 0) == 0) {
      std::string plane = text.substr(n);
      if (prefix[n - 1] == '(') {
        if (plane.empty() || plane.back() != ')') break;
        plane.pop_back();
      }
      try {
        return {Kind::mace_single, parse_plane(plane)};
      } catch (const InvalidInput&) {
        break;
      }
    }
  }
  throw ConfigError("unknown method '" + text + "' (expected fbp, mace-msf or mace-single:<xy|yz|zx>)");
}

std::string Method::str() const {
  switch (kind) {
    case Kind::fbp: return "fbp";
    case Kind::mace_msf: return "mace-msf";
    case Kind::mace_single: return "mace-single:" + std::string(to_string(plane));
  }
  return "?";
}

json default_config(const std::string& profile) {
  json j;
  j["version"] = 1;
  j["seed"] = 1;
  j["workers"] = 0;
  j["profile"] = profile;
  j["paths"] = {{"phantom_spec", ""}, {"sinogram", ""}, {"phantom", ""},
                {"output_dir", "out"}, {"output", ""}, {"weights", ""}};
  if (profile == "desk") {
    j["geometry"] = {{"dims", {8, 28, 240, 240}}, {"n_views", 75}};
  } else if (profile == "fast") {
    j["geometry"] = {{"dims", {4, 8, 64, 64}}, {"n_views", 36}};
  } else {
    throw ConfigError("unknown profile '" + profile + "' (expected fast or desk)");
  }
  j["geometry"]["voxel_pitch"] = 1.0;
  j["geometry"]["channel_pitch"] = 1.0;
  j["phantom"] = {{"shift_per_frame", 0.5}};
  j["noise"] = {{"noise_std_rel", 0.02}};
  j["method"] = "mace-msf";
  j["init"] = "fbp";
  j["mace"] = {{"rho", 0.5}, {"max_iters", 100}, {"tol", 1e-3}};
  j["fidelity"] = {{"alpha", 1.0}, {"sigma", 1.0}, {"beta", 200.0}, {"icd_passes", 3}};
  j["denoiser"] = {{"backend", "tv"}, {"strength", 1.0}, {"temporal", 0.6}, {"tv_weight", 0.03}, {"tv_iters", 50}};
  j["diagnostics"] = {{"timing", true}};
  return j;
}

namespace {

std::vector<std::string> split_path(const std::string& dotted) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    parts.push_back(dotted.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  for (const auto& p : parts)
    if (p.empty()) throw ConfigError("malformed config path '" + dotted + "'");
  return parts;
}

json parse_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return text;
  }
}

void set_path(json& config, const std::string& dotted, json value) {
  json* node = &config;
  const auto parts = split_path(dotted);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    json& next = (*node)[parts[i]];
    if (!next.is_object()) {
      if (!next.is_null()) throw ConfigError("config path '" + dotted + "' crosses a non-object value");
      next = json::object();
    }
    node = &next;
  }
  (*node)[parts.back()] = std::move(value);
}

template <typename T>
T get(const json& j, const char* section, const char* key, T fallback) {
  if (!j.contains(section)) return fallback;
  const json& s = j.at(section);
  if (!s.is_object() || !s.contains(key)) return fallback;
  try {
    return s.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field ") + section + "." + key + ": " + e.what());
  }
}

}  // namespace

void apply_override(json& config, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not of the form path=value");
  set_path(config, assignment.substr(0, eq), parse_value(assignment.substr(eq + 1)));
}

void apply_env_overrides(json& config, char** envp) {
  if (!envp) return;
  std::vector<std::string> entries;
  for (char** e = envp; *e; ++e) entries.emplace_back(*e);
  std::sort(entries.begin(), entries.end());
  for (const std::string& entry : entries) {
    if (entry.rfind("MSF_", 0) != 0) continue;
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string key = entry.substr(4, eq - 4);
    std::string dotted;
    for (std::size_t i = 0; i < key.size(); ++i) {
      if (key[i] == '_' && i + 1 < key.size() && key[i + 1] == '_') {
        dotted += '.';
        ++i;
      } else {
        dotted += static_cast<char>(std::tolower(static_cast<unsigned char>(key[i])));
      }
    }
    if (dotted.empty()) continue;
    set_path(config, dotted, parse_value(entry.substr(eq + 1)));
  }
}

RunConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (j.value("version", 0) != 1) throw ConfigError("config version must be 1");

  RunConfig c;
  try {
    c.seed = j.value("seed", std::uint64_t{1});
    c.workers = j.value("workers", 0);
    c.method = Method::parse(j.value("method", std::string("mace-msf")));
    c.init = j.value("init", std::string("fbp"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  c.phantom_spec = get<std::string>(j, "paths", "phantom_spec", "");
  c.sinogram = get<std::string>(j, "paths", "sinogram", "");
  c.phantom = get<std::string>(j, "paths", "phantom", "");
  c.output_dir = get<std::string>(j, "paths", "output_dir", "out");
  c.output = get<std::string>(j, "paths", "output", "");
  c.weights = get<std::string>(j, "paths", "weights", "");

  const auto dims = get<std::vector<std::size_t>>(j, "geometry", "dims", {4, 8, 64, 64});
  if (dims.size() != 4) throw ConfigError("geometry.dims must list (t, z, y, x)");
  c.dims = {dims[0], dims[1], dims[2], dims[3]};
  if (c.dims.degenerate()) throw ConfigError("geometry.dims must be positive");
  c.n_views = get<std::size_t>(j, "geometry", "n_views", 36);
  c.voxel_pitch = get<double>(j, "geometry", "voxel_pitch", 1.0);
  c.channel_pitch = get<double>(j, "geometry", "channel_pitch", 1.0);
  c.shift_per_frame = get<double>(j, "phantom", "shift_per_frame", 0.5);

  c.noise.seed = c.seed;
  c.noise.noise_std_rel = get<double>(j, "noise", "noise_std_rel", 0.02);
  if (!(c.noise.noise_std_rel >= 0.0)) throw ConfigError("noise.noise_std_rel must be nonnegative");

  c.mace.rho = get<double>(j, "mace", "rho", 0.5);
  c.mace.max_iters = get<int>(j, "mace", "max_iters", 100);
  c.mace.tol = get<double>(j, "mace", "tol", 1e-3);
  c.mace.fidelity.alpha = get<double>(j, "fidelity", "alpha", 1.0);
  c.mace.fidelity.sigma = get<double>(j, "fidelity", "sigma", 1.0);
  c.mace.fidelity.beta = get<double>(j, "fidelity", "beta", 200.0);
  c.mace.fidelity.icd_passes = get<int>(j, "fidelity", "icd_passes", 3);

  c.backend = get<std::string>(j, "denoiser", "backend", "tv");
  c.gaussian_strength = get<double>(j, "denoiser", "strength", 1.0);
  c.temporal = get<double>(j, "denoiser", "temporal", 0.6);
  c.tv_weight = get<double>(j, "denoiser", "tv_weight", 0.03);
  c.tv_iters = get<int>(j, "denoiser", "tv_iters", 50);
  if (c.weights.empty()) c.weights = get<std::string>(j, "denoiser", "weights", "");
  if (c.backend != "gaussian" && c.backend != "tv" && c.backend != "cnn")
    throw ConfigError("denoiser.backend must be gaussian, tv or cnn");
  if (c.backend == "cnn" && c.weights.empty())
    throw ConfigError("denoiser.backend cnn needs paths.weights");

  c.diagnostics_timing = get<bool>(j, "diagnostics", "timing", true);

  if (c.method.kind != Method::Kind::fbp) {
    try {
      c.mace.fidelity.validate();
      if (!(c.mace.rho > 0.0 && c.mace.rho < 1.0)) throw ConfigError("mace.rho must lie in (0, 1)");
      if (c.mace.max_iters < 1 || !(c.mace.tol > 0.0))
        throw ConfigError("mace.max_iters and mace.tol must be positive");
    } catch (const ConfigError&) {
      throw;
    } catch (const InvalidInput& e) {
      throw ConfigError(e.what());
    }
  }
  return c;
}

ScanGeometry RunConfig::geometry() const {
  return ScanGeometry::uniform(dims.z, dims.y, dims.x, n_views, voxel_pitch, channel_pitch);
}

std::vector<DenoiserAgent> RunConfig::agents() const {
  std::vector<Plane> planes;
  if (method.kind == Method::Kind::mace_msf) planes = {Plane::xy, Plane::yz, Plane::zx};
  if (method.kind == Method::Kind::mace_single) planes = {method.plane};

  DenoiserBackend b;
  if (backend == "gaussian") {
    b = GaussianBackend{gaussian_strength, temporal};
  } else if (backend == "tv") {
    b = TvBackend{tv_weight, tv_iters, temporal};
  } else {
    b = CnnBackend{std::make_shared<const CnnWeights>(load_weights(weights))};
  }
  std::vector<DenoiserAgent> out;
  for (Plane p : planes) out.push_back({PlaneSpec::of(p), b, mace.fidelity.sigma});
  return out;
}

MaceConfig RunConfig::mace_config() const {
  MaceConfig m = mace;
  m.agents = agents();
  return m;
}

}  // namespace msf::cli
