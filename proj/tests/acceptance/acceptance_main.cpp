// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "../dense_oracle.hpp"
#include "../test_util.hpp"
#include "msf/cli/config.hpp"
#include "msf/fidelity.hpp"
#include "msf/mace.hpp"
#include "msf/metrics.hpp"
#include "msf/parallel.hpp"
#include "msf/projector.hpp"
#include "msf/simulate.hpp"

using namespace msf;
using namespace msf::testing;

namespace {

using clock_type = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const char* name, double limit_s, const std::function<Verdict()>& body) {
  const auto start = clock_type::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(clock_type::now() - start).count();
  if (limit_s > 0 && s >= limit_s) {
    v.pass = false;
    v.detail += " (over the time limit)";
  }
  if (!v.pass) ++failures;
  std::printf("%s  %-28s %s [%.1f s%s]\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str(), s,
              limit_s > 0 ? (", limit " + std::to_string(int(limit_s)) + " s").c_str() : "");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Unit in the last place at the magnitude `scale`.
double ulp_at(double scale) {
  return std::nextafter(scale, std::numeric_limits<double>::infinity()) - scale;
}

double max_abs(const StateList& s) {
  double m = 0.0;
  for (const auto& v : s)
    for (double x : v.data()) m = std::max(m, std::abs(x));
  return m;
}

Verdict adjoint() {
  const Projector proj(ScanGeometry::uniform(8, 64, 64, 36));
  double worst64 = 0.0, worst32 = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto x = random_vector(proj.volume_size(), seed);
    const auto y = random_vector(proj.sinogram_size(), seed + 100);
    const auto ax = proj.forward(x);
    const auto aty = proj.back(y);
    worst64 = std::max(worst64, std::abs(dot(ax, y) - dot(x, aty)) / std::sqrt(squared_norm(ax) * squared_norm(y)));

    std::vector<float> xf(x.begin(), x.end()), yf(y.begin(), y.end());
    std::vector<float> axf(proj.sinogram_size()), atyf(proj.volume_size());
    proj.forward<float>(xf, axf);
    proj.back<float>(yf, atyf);
    double lhs = 0, rhs = 0, na = 0, ny = 0;
    for (std::size_t i = 0; i < axf.size(); ++i) {
      lhs += double(axf[i]) * double(yf[i]);
      na += double(axf[i]) * double(axf[i]);
      ny += double(yf[i]) * double(yf[i]);
    }
    for (std::size_t i = 0; i < xf.size(); ++i) rhs += double(xf[i]) * double(atyf[i]);
    worst32 = std::max(worst32, std::abs(lhs - rhs) / std::sqrt(na * ny));
  }
  return {worst64 < 1e-12 && worst32 < 1e-6,
          fmt("f64 gap %.2e (< 1e-12), ", worst64) + fmt("f32 gap %.2e (< 1e-6)", worst32)};
}

Verdict prox_oracle() {
  const ScanGeometry geom = ScanGeometry::uniform(1, 16, 16, 8);
  const Projector proj(geom);
  const Volume4D truth = random_volume({1, 1, 16, 16}, 1, 0.0, 1.0);
  SinogramSet sino = forward_project_all(truth, proj);
  const auto noise = random_vector(sino.frame_size(), 2, -0.1, 0.1);
  const auto w = random_vector(sino.frame_size(), 3, 0.5, 2.0);
  for (std::size_t i = 0; i < noise.size(); ++i) {
    sino.y[0][i] += noise[i];
    sino.lambda[0][i] = w[i];
  }
  const Volume4D x = random_volume(truth.dims(), 4, 0.0, 1.0);
  FidelityConfig one;
  one.icd_passes = 1;

  Volume4D z = x;
  double prev = prox_objective(z, x, sino, proj, one);
  bool monotone = true;
  for (int pass = 0; pass < 200; ++pass) {
    z = prox_partial(x, z, sino, proj, one);
    const double obj = prox_objective(z, x, sino, proj, one);
    // Past convergence the objective only moves in its last digits.
    monotone = monotone && obj <= prev + 8.0 * ulp_at(prev);
    prev = obj;
  }
  const Eigen::MatrixXd a = dense_slice_matrix(proj);
  const Eigen::VectorXd ref =
      dense_prox(a, slice_measurements(proj, sino.y[0]), slice_measurements(proj, sino.lambda[0]),
                 Eigen::Map<const Eigen::VectorXd>(x.data().data(), 256), one.alpha, one.prox_weight());
  const Eigen::VectorXd got = Eigen::Map<const Eigen::VectorXd>(z.data().data(), 256);
  const double rel = (got - ref).norm() / ref.norm();
  return {rel < 1e-6 && monotone, fmt("rel L2 %.2e (< 1e-6), ", rel) + (monotone ? "sweeps monotone" : "objective increased")};
}

Verdict g_algebra() {
  bool ok = true;
  for (std::size_t k = 1; k <= 3; ++k) {
    StateList s;
    for (std::size_t i = 0; i <= k; ++i) s.push_back(random_volume({2, 3, 8, 8}, 10 * k + i, -3.0, 3.0));
    const StateList g = average_G(s);
    const StateList gg = average_G(g);
    const StateList back = reflect_G(reflect_G(s));
    // 2 Xbar - X rounds at the magnitude of the state, so ulps are counted at that scale.
    const double tol = 4.0 * ulp_at(max_abs(s));
    for (std::size_t i = 0; i <= k; ++i)
      for (std::size_t v = 0; v < s[i].size(); ++v) {
        ok = ok && std::abs(gg[i].data()[v] - g[i].data()[v]) <= tol;
        ok = ok && std::abs(back[i].data()[v] - s[i].data()[v]) <= tol;
      }
    for (std::size_t hot = 0; hot <= k; ++hot) {
      StateList basis(k + 1, Volume4D({1, 1, 2, 2}));
      basis[hot] = Volume4D({1, 1, 2, 2}, 1.0, 1.0);
      const double expected = hot == k ? 0.5 : 1.0 / (2.0 * double(k));
      const Volume4D xbar = weighted_average(basis);
      for (double c : xbar.data()) ok = ok && c == expected;
    }
  }
  return {ok, "K = 1..3: idempotence and involution within 4 ulp of the state scale, coefficients exact"};
}

Verdict identity_reduction() {
  // Dense Gaussian rays, four per pixel: a well-posed 16x16 weighted least-squares problem.
  const std::size_t n = 16, rays = 1024;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(double(rays)));
  std::vector<SparseMatrix::Triplet> e;
  for (std::size_t r = 0; r < rays; ++r)
    for (std::size_t c = 0; c < n * n; ++c) e.push_back({std::uint32_t(r), std::uint32_t(c), gauss(rng)});
  const Projector proj(1, n, n, rays, 1, SparseMatrix(rays, n * n, std::move(e)));

  const Volume4D truth = random_volume({2, 1, n, n}, 7, 0.0, 1.0);
  SinogramSet sino = forward_project_all(truth, proj);
  for (std::size_t t = 0; t < 2; ++t) {
    const auto noise = random_vector(rays, 10 + t, -0.05, 0.05);
    const auto w = random_vector(rays, 20 + t, 0.5, 2.0);
    for (std::size_t i = 0; i < rays; ++i) {
      sino.y[t][i] += noise[i];
      sino.lambda[t][i] = w[i];
    }
  }
  MaceConfig cfg;
  cfg.rho = 0.5;
  cfg.tol = 1e-5;
  cfg.max_iters = 200;
  cfg.fidelity.beta = 0.05;
  cfg.agents = {{PlaneSpec::of(Plane::xy), CnnBackend{std::make_shared<const CnnWeights>(CnnWeights::zeros(2, 2))}, 1.0}};
  const MaceResult r = solve(Volume4D(truth.dims()), sino, proj, cfg);

  const Eigen::MatrixXd a = dense_slice_matrix(proj);
  double num = 0.0, den = 0.0;
  for (std::size_t t = 0; t < 2; ++t) {
    const Eigen::VectorXd z = dense_wls(a, slice_measurements(proj, sino.y[t]), slice_measurements(proj, sino.lambda[t]));
    for (std::size_t i = 0; i < n * n; ++i) {
      const double d = r.x_star.frame(t)[i] - z(Eigen::Index(i));
      num += d * d;
      den += z(Eigen::Index(i)) * z(Eigen::Index(i));
    }
  }
  const double rel = std::sqrt(num / den);
  const auto iters = r.diagnostics.records.size();
  return {r.diagnostics.converged && rel < 1e-4,
          fmt("converged in %.0f iterations, ", double(iters)) + fmt("rel error %.2e (< 1e-4)", rel)};
}

// The fast-profile scan shared by the last two criteria.
struct FastRun {
  cli::RunConfig cfg = cli::parse_config(cli::default_config("fast"));
  ScanGeometry geom = cfg.geometry();
  Projector proj{geom};
  Volume4D phantom;
  SinogramSet sino;
  Volume4D fbp;

  FastRun() {
    PhantomSpec spec = PhantomSpec::bottle(cfg.dims, cfg.shift_per_frame);
    phantom = make_phantom(spec);
    sino = simulate_scan(phantom, proj, cfg.noise);
    fbp = fbp_reconstruct(sino, geom, proj);
  }

  MaceResult run(const std::string& method) {
    cli::RunConfig c = cfg;
    c.method = cli::Method::parse(method);
    return solve(fbp, sino, proj, c.mace_config());
  }
};

FastRun* fast = nullptr;
MaceResult* msf_result = nullptr;

Verdict fixed_point() {
  const MaceResult& r = *msf_result;
  const double res = r.diagnostics.records.back().residual;
  const MaceConfig mc = [] {
    cli::RunConfig c = fast->cfg;
    c.method = cli::Method::parse("mace-msf");
    return c.mace_config();
  }();
  const StateList full = apply_L(r.state.W, r.state.X.back(), fast->sino, fast->proj, mc, 50);
  const double gap = equilibrium_gap(r.state.W, full);
  return {r.diagnostics.converged && res < 1e-3 && gap < 1e-2,
          fmt("residual %.2e (< 1e-3) after ", res) + fmt("%.0f iterations, ", double(r.diagnostics.records.size())) +
              fmt("full-L gap %.2e (< 1e-2)", gap)};
}

Verdict directional() {
  struct Row {
    std::string name;
    double psnr, ssim;
  };
  std::vector<Row> rows;
  rows.push_back({"fbp", psnr(fast->fbp, fast->phantom), ssim(fast->fbp, fast->phantom)});
  for (const char* p : {"xy", "yz", "zx"}) {
    const MaceResult r = fast->run(std::string("mace-single:") + p);
    rows.push_back({std::string("single-") + p, psnr(r.x_star, fast->phantom), ssim(r.x_star, fast->phantom)});
  }
  rows.push_back({"msf", psnr(msf_result->x_star, fast->phantom), ssim(msf_result->x_star, fast->phantom)});

  const Row& m = rows.back();
  double best_single = -1e300, best_other_ssim = -1e300;
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    if (i > 0) best_single = std::max(best_single, rows[i].psnr);
    best_other_ssim = std::max(best_other_ssim, rows[i].ssim);
  }
  std::string detail;
  for (const auto& r : rows) detail += r.name + fmt(" %.2f dB/", r.psnr) + fmt("%.3f, ", r.ssim);
  const bool a = m.psnr >= rows.front().psnr + 3.0;
  const bool b = m.psnr >= best_single - 0.1;
  const bool c = m.ssim > best_other_ssim;
  detail += std::string("msf-fbp ") + (a ? "ok" : "short") + ", msf vs singles " + (b ? "ok" : "short") +
            ", ssim max " + (c ? "ok" : "no");
  return {a && b && c, detail};
}

Verdict cnn_identity() {
  const Volume4D v = random_volume({5, 6, 7, 8}, 77, -10.0, 10.0);
  const auto w = std::make_shared<const CnnWeights>(CnnWeights::zeros(17, 64));
  bool ok = true;
  for (Plane p : {Plane::xy, Plane::yz, Plane::zx})
    ok = ok && apply_slicewise({PlaneSpec::of(p), CnnBackend{w}, 1.0}, v) == v;
  return {ok, "17-layer zero network, all three planes, bit-exact"};
}

Verdict metric_examples() {
  const Volume4D x0 = volume_from({2, 2, 16, 16}, [](auto, auto, auto y, auto) { return y < 8 ? 0.0 : 1.0; });
  Volume4D x = x0;
  for (auto& v : x.data()) v += 0.1;
  const double p = psnr(x, x0);
  const double s = ssim(x0, x0);
  return {std::abs(p - 20.0) < 1e-9 && s == 1.0, fmt("PSNR %.12f dB, ", p) + fmt("SSIM(X, X) = %.15f", s)};
}

}  // namespace

int main() {
  report("adjoint dot test", 10, adjoint);
  report("proximal oracle", 30, prox_oracle);
  report("G-operator algebra", 0, g_algebra);
  report("identity-agent reduction", 60, identity_reduction);

  const auto start = clock_type::now();
  FastRun run;
  fast = &run;
  MaceResult msf;
  Verdict setup{true, ""};
  try {
    msf = run.run("mace-msf");
    msf_result = &msf;
  } catch (const std::exception& e) {
    setup = {false, std::string("MSF run failed: ") + e.what()};
  }
  if (msf_result) {
    report("fixed-point certificate", 0, fixed_point);
    report("directional comparison", 0, directional);
    const double s = std::chrono::duration<double>(clock_type::now() - start).count();
    report("fast-profile runtime", 0, [s] { return Verdict{s < 900.0, fmt("%.1f s for all runs (< 900 s)", s)}; });
  } else {
    report("fixed-point certificate", 0, [&] { return setup; });
    report("directional comparison", 0, [&] { return setup; });
  }
  report("zero-weight network identity", 0, cnn_identity);
  report("metric examples", 0, metric_examples);

  std::printf("%s: %d criteria failed\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
