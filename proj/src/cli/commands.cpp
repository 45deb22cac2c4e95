#include "msf/cli/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <deque>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "msf/cli/config.hpp"
#include "msf/cli/png.hpp"
#include "msf/cnn.hpp"
#include "msf/error.hpp"
#include "msf/io.hpp"
#include "msf/mace.hpp"
#include "msf/metrics.hpp"
#include "msf/parallel.hpp"
#include "msf/projector.hpp"
#include "msf/simulate.hpp"

namespace msf::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("no ") + what + " given");
  if (!fs::exists(path)) throw IoError(std::string(what) + " '" + path + "' does not exist");
}

// Options shared by the subcommands that assemble a RunConfig.
struct ConfigOptions {
  std::string config_file;
  std::string profile;
  std::vector<std::string> sets;
  // Shorthands for common dotted paths.
  std::deque<std::pair<std::string, std::string>> shorthands;  // stable addresses for CLI11

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "JSON config document")->check(CLI::ExistingFile);
    app->add_option("--profile", profile, "fast or desk defaults");
    app->add_option("--set", sets, "override a config field, path=value")->take_all();
  }

  void shorthand(CLI::App* app, const std::string& flag, const std::string& path,
                 const std::string& help) {
    auto* target = &shorthands.emplace_back(path, std::string{}).second;
    app->add_option(flag, *target, help);
  }

  json assemble(char** envp) const {
    json file;
    if (!config_file.empty()) {
      file = read_json_file(config_file);
      if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
    }
    std::string prof = profile;
    if (prof.empty()) prof = file.is_object() ? file.value("profile", std::string("fast")) : "fast";
    json config = default_config(prof);
    if (!file.is_null()) config.merge_patch(file);
    apply_env_overrides(config, envp);
    for (const auto& s : sets) apply_override(config, s);
    for (const auto& [path, value] : shorthands)
      if (!value.empty()) apply_override(config, path + "=" + value);
    return config;
  }
};

void apply_workers(const RunConfig& cfg) {
  if (cfg.workers > 0) set_worker_count(cfg.workers);
}

json metrics_json(const MetricsReport& m) {
  return {{"psnr_db", m.psnr_db}, {"ssim", m.ssim}, {"rmse", m.rmse}, {"range", m.range}};
}

int cmd_simulate(const json& config, std::ostream& out) {
  const RunConfig cfg = parse_config(config);
  apply_workers(cfg);

  PhantomSpec spec;
  if (!cfg.phantom_spec.empty()) {
    require_file(cfg.phantom_spec, "phantom spec");
    spec = phantom_spec_from_json(read_json_file(cfg.phantom_spec));
  } else {
    spec = PhantomSpec::bottle(cfg.dims, cfg.shift_per_frame);
    spec.voxel_pitch = cfg.voxel_pitch;
  }
  spec.validate();

  ScanGeometry geom = ScanGeometry::uniform(spec.dims.z, spec.dims.y, spec.dims.x, cfg.n_views,
                                            spec.voxel_pitch, cfg.channel_pitch);
  const Projector proj(geom);
  const Volume4D phantom = make_phantom(spec);
  const SinogramSet sino = simulate_scan(phantom, proj, cfg.noise);

  const fs::path dir = cfg.output_dir;
  ensure_dir(dir);
  write_json_file(dir / "phantom_spec.json", phantom_spec_to_json(spec));
  write_volume(phantom, dir / "phantom.json");
  write_sinogram(sino, geom, dir / "sinogram.json");
  write_json_file(dir / "config.json", config);

  const auto& d = phantom.dims();
  out << json{{"command", "simulate"},
              {"dims", {d.t, d.z, d.y, d.x}},
              {"n_views", geom.n_views()},
              {"n_channels", geom.n_channels},
              {"phantom", (dir / "phantom.json").string()},
              {"sinogram", (dir / "sinogram.json").string()}}
             .dump()
      << '\n';
  return kOk;
}

int cmd_reconstruct(const json& config, std::ostream& out) {
  const RunConfig cfg = parse_config(config);
  apply_workers(cfg);
  require_file(cfg.sinogram, "sinogram");

  const SinogramFile in = read_sinogram(cfg.sinogram);
  const ScanGeometry& geom = in.geom;
  const Projector proj(geom);

  const auto start = std::chrono::steady_clock::now();
  Volume4D x0;
  if (cfg.init == "fbp") {
    x0 = fbp_reconstruct(in.sino, geom, proj);
  } else if (cfg.init == "zero") {
    x0 = Volume4D(Dims4{in.sino.n_t(), geom.n_z, geom.n_y, geom.n_x}, geom.voxel_pitch);
  } else {
    throw ConfigError("init must be fbp or zero");
  }

  const fs::path dir = cfg.output_dir;
  ensure_dir(dir);
  const fs::path recon_path = cfg.output.empty() ? dir / "recon.json" : fs::path(cfg.output);

  json summary = {{"command", "reconstruct"}, {"method", cfg.method.str()}};
  Volume4D result;
  if (cfg.method.kind == Method::Kind::fbp) {
    result = std::move(x0);
  } else {
    const MaceConfig mc = cfg.mace_config();
    const fs::path diag_path = dir / "diagnostics.jsonl";
    std::ofstream diag(diag_path, std::ios::binary);
    if (!diag) throw IoError("cannot write '" + diag_path.string() + "'");
    MaceResult r = solve(x0, in.sino, proj, mc, [&](const IterationRecord& rec) {
      write_diagnostics_line(diag, rec, cfg.diagnostics_timing);
      diag.flush();
    });
    if (!diag) throw IoError("write failed for '" + diag_path.string() + "'");
    const auto& recs = r.diagnostics.records;
    summary["iterations"] = recs.size();
    summary["converged"] = r.diagnostics.converged;
    summary["residual"] = recs.empty() ? 0.0 : recs.back().residual;
    summary["diagnostics"] = diag_path.string();
    result = std::move(r.x_star);
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_volume(result, recon_path);
  summary["output"] = recon_path.string();
  if (cfg.diagnostics_timing) summary["seconds"] = seconds;

  if (!cfg.phantom.empty()) {
    require_file(cfg.phantom, "phantom");
    const MetricsReport m = evaluate(result, read_volume(cfg.phantom));
    summary["metrics"] = metrics_json(m);
    write_json_file(dir / "report.json", metrics_json(m));
  }
  out << summary.dump() << '\n';
  return kOk;
}

int cmd_evaluate(const std::string& recon, const std::string& phantom, const std::string& report,
                 std::ostream& out) {
  require_file(recon, "reconstruction");
  require_file(phantom, "phantom");
  const Volume4D x = read_volume(recon);
  const Volume4D x0 = read_volume(phantom);
  if (!(x.dims() == x0.dims())) throw InvalidInput("reconstruction and phantom dims differ");
  const json j = metrics_json(evaluate(x, x0));
  if (!report.empty()) {
    const fs::path p(report);
    if (p.has_parent_path()) ensure_dir(p.parent_path());
    write_json_file(p, j);
  }
  out << j.dump() << '\n';
  return kOk;
}

std::vector<std::size_t> parse_indices(const std::string& text, std::size_t n) {
  std::vector<std::size_t> out;
  if (text.empty() || text == "center") return {n / 2};
  if (text == "all") {
    for (std::size_t i = 0; i < n; ++i) out.push_back(i);
    return out;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    long long v = -1;
    try {
      v = std::stoll(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || v < 0) throw ConfigError("bad slice index '" + item + "'");
    if (static_cast<std::size_t>(v) >= n)
      throw IndexError("slice index " + item + " out of range [0, " + std::to_string(n) + ")");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

int cmd_export(const std::string& volume, const std::string& plane_name, const std::string& indices,
               const std::string& times, const std::string& window_ref, const std::string& out_dir,
               std::ostream& out) {
  require_file(volume, "volume");
  const Volume4D vol = read_volume(volume);
  const PlaneSpec plane = PlaneSpec::of(parse_plane(plane_name));
  const PlaneLayout layout = reindex_plane(vol, plane);
  const auto slices = parse_indices(indices, layout.n_slices);
  const auto frames = parse_indices(times.empty() ? "all" : times, vol.dims().t);

  const Volume4D* ref = &vol;
  Volume4D ref_storage;
  if (!window_ref.empty()) {
    require_file(window_ref, "window reference");
    ref_storage = read_volume(window_ref);
    ref = &ref_storage;
  }
  const double lo = percentile(ref->data(), 0.1);
  const double hi = percentile(ref->data(), 99.9);

  const fs::path dir = out_dir;
  ensure_dir(dir);
  json files = json::array();
  for (std::size_t t : frames) {
    for (std::size_t s : slices) {
      const Image2D img = extract_slice(vol, plane, s, t);
      std::ostringstream name;
      name << "slice_" << plane_name << "_t" << std::setw(2) << std::setfill('0') << t << "_"
           << std::setw(3) << std::setfill('0') << s << ".png";
      const fs::path p = dir / name.str();
      write_png_gray(p, img.rows, img.cols, window_to_gray(img, lo, hi));
      files.push_back(p.string());
    }
  }
  out << json{{"command", "export-slices"}, {"window", {lo, hi}}, {"files", files}}.dump() << '\n';
  return kOk;
}

int cmd_weights_inspect(const std::string& weights_path, const std::string& parity_path,
                        double tolerance, std::ostream& out) {
  const CnnWeights w = load_weights(weights_path);
  json layers = json::array();
  for (const auto& l : w.layers) layers.push_back({l.out_ch, l.in_ch, l.kh, l.kw});
  json j = {{"command", "weights-inspect"},
            {"n_layers", w.n_layers()},
            {"width", w.width},
            {"parameters", w.parameter_count()},
            {"layers", layers}};
  bool ok = true;
  if (!parity_path.empty()) {
    const auto cases = load_parity_vectors(parity_path);
    double worst = 0.0;
    for (const auto& c : cases) {
      const Image2D got = cnn_infer(w, c.slab);
      if (got.rows != c.expected.rows || got.cols != c.expected.cols)
        throw InvalidInput("parity case shape does not match the network output");
      for (std::size_t i = 0; i < got.data.size(); ++i)
        worst = std::max(worst, std::abs(got.data[i] - c.expected.data[i]));
    }
    ok = worst <= tolerance;
    j["parity"] = {{"cases", cases.size()}, {"max_abs_error", worst}, {"tolerance", tolerance},
                   {"pass", ok}};
  }
  out << j.dump() << '\n';
  return ok ? kOk : kInternal;
}

std::string json_line(const std::string& kind, const std::string& message, int code) {
  return json{{"error", message}, {"kind", kind}, {"exit_code", code}}.dump();
}

}  // namespace

int run(int argc, char** argv, char** envp, std::ostream& out, std::ostream& err) {
  CLI::App app{"4D CT reconstruction with plane-wise denoiser fusion", "msf"};
  app.require_subcommand(1);
  int workers_flag = 0;

  ConfigOptions sim_opts, rec_opts;
  auto* sim = app.add_subcommand("simulate", "render the phantom and a noisy scan");
  sim_opts.attach(sim);
  sim_opts.shorthand(sim, "--phantom-spec", "paths.phantom_spec", "phantom spec JSON");
  sim_opts.shorthand(sim, "--out", "paths.output_dir", "output directory");
  sim_opts.shorthand(sim, "--seed", "seed", "noise seed");
  sim_opts.shorthand(sim, "--workers", "workers", "worker threads");

  auto* rec = app.add_subcommand("reconstruct", "reconstruct a sinogram");
  rec_opts.attach(rec);
  rec_opts.shorthand(rec, "--sinogram", "paths.sinogram", "sinogram header");
  rec_opts.shorthand(rec, "--method", "method", "fbp, mace-msf or mace-single:<plane>");
  rec_opts.shorthand(rec, "--phantom", "paths.phantom", "ground truth for a metrics report");
  rec_opts.shorthand(rec, "--out", "paths.output_dir", "output directory");
  rec_opts.shorthand(rec, "--output", "paths.output", "reconstruction header path");
  rec_opts.shorthand(rec, "--weights", "paths.weights", "network manifest for the cnn backend");
  rec_opts.shorthand(rec, "--workers", "workers", "worker threads");

  std::string ev_recon, ev_phantom, ev_report;
  auto* ev = app.add_subcommand("evaluate", "PSNR and SSIM against the phantom");
  ev->add_option("--recon", ev_recon, "reconstruction header")->required();
  ev->add_option("--phantom", ev_phantom, "phantom header")->required();
  ev->add_option("--report", ev_report, "write the report here as well");
  ev->add_option("--workers", workers_flag, "worker threads");

  std::string ex_volume, ex_plane = "xy", ex_indices, ex_times, ex_window, ex_out = "slices";
  auto* ex = app.add_subcommand("export-slices", "write windowed 8-bit PNG slices");
  ex->add_option("--volume", ex_volume, "volume header")->required();
  ex->add_option("--plane", ex_plane, "xy, yz or zx");
  ex->add_option("--indices", ex_indices, "comma list, 'center' or 'all'");
  ex->add_option("--times", ex_times, "comma list of time points (default all)");
  ex->add_option("--window", ex_window, "volume whose percentile range sets the window");
  ex->add_option("--out", ex_out, "output directory");

  std::string wi_weights, wi_parity;
  double wi_tol = 1e-5;
  auto* wi = app.add_subcommand("weights-inspect", "check a network manifest");
  wi->add_option("--weights", wi_weights, "manifest")->required();
  wi->add_option("--parity", wi_parity, "parity vector manifest");
  wi->add_option("--tolerance", wi_tol, "max-abs parity tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    const std::string name = e.get_name();
    if (name == "CallForHelp" || name == "CallForAllHelp") {
      out << app.help();
      return kOk;
    }
    err << json_line("usage", e.what(), kConfigError) << '\n';
    return kConfigError;
  }

  auto fail = [&](const char* kind, const std::exception& e, int code) {
    err << json_line(kind, e.what(), code) << '\n';
    return code;
  };
  try {
    if (workers_flag > 0) set_worker_count(workers_flag);
    if (sim->parsed()) return cmd_simulate(sim_opts.assemble(envp), out);
    if (rec->parsed()) return cmd_reconstruct(rec_opts.assemble(envp), out);
    if (ev->parsed()) return cmd_evaluate(ev_recon, ev_phantom, ev_report, out);
    if (ex->parsed()) return cmd_export(ex_volume, ex_plane, ex_indices, ex_times, ex_window, ex_out, out);
    if (wi->parsed()) return cmd_weights_inspect(wi_weights, wi_parity, wi_tol, out);
    return kInternal;
  } catch (const DivergenceError& e) {
    return fail("divergence", e, kDivergence);
  } catch (const LoadError& e) {
    return fail("load", e, kIoError);
  } catch (const IoError& e) {
    return fail("io", e, kIoError);
  } catch (const ConfigError& e) {
    return fail("config", e, kConfigError);
  } catch (const UndefinedMetric& e) {
    return fail("undefined_metric", e, kConfigError);
  } catch (const IndexError& e) {
    return fail("index", e, kConfigError);
  } catch (const InvalidInput& e) {
    return fail("invalid_input", e, kConfigError);
  } catch (const std::exception& e) {
    return fail("internal", e, kInternal);
  }
}

}  // namespace msf::cli
