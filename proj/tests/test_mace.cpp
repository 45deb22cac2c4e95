#include <doctest.h>

#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dense_oracle.hpp"
#include "msf/error.hpp"
#include "msf/mace.hpp"
#include "msf/projector.hpp"
#include "test_util.hpp"

using namespace msf;
using namespace msf::testing;

namespace {

DenoiserAgent identity_agent(Plane plane = Plane::xy) {
  return {PlaneSpec::of(plane), CnnBackend{std::make_shared<const CnnWeights>(CnnWeights::zeros(2, 2))}, 1.0};
}

DenoiserAgent gaussian_agent(Plane plane, double s = 1.0) {
  return {PlaneSpec::of(plane), GaussianBackend{s, 0.6}, 1.0};
}

StateList random_states(std::size_t count, Dims4 d, std::uint64_t seed) {
  StateList s;
  for (std::size_t i = 0; i < count; ++i) s.push_back(random_volume(d, seed + i));
  return s;
}

double max_abs_diff(const Volume4D& a, const Volume4D& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// Dense Gaussian system with four rays per pixel: well conditioned, so the weighted
// least-squares oracle is unique and Gauss-Seidel converges quickly. Two time points.
Projector random_projector(std::size_t n, std::size_t rays, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(double(rays)));
  std::vector<SparseMatrix::Triplet> e;
  for (std::size_t r = 0; r < rays; ++r)
    for (std::size_t c = 0; c < n * n; ++c) e.push_back({std::uint32_t(r), std::uint32_t(c), g(rng)});
  return Projector(1, n, n, rays, 1, SparseMatrix(rays, n * n, std::move(e)));
}

struct TinySystem {
  Projector proj = random_projector(8, 256, 5);
  SinogramSet sino;
  Eigen::MatrixXd a = dense_slice_matrix(proj);
  Volume4D wls;

  TinySystem() {
    const Volume4D truth = random_volume({2, 1, 8, 8}, 7, 0.0, 1.0);
    sino = forward_project_all(truth, proj);
    for (std::size_t t = 0; t < 2; ++t) {
      const auto noise = random_vector(sino.frame_size(), 10 + t, -0.05, 0.05);
      const auto w = random_vector(sino.frame_size(), 20 + t, 0.5, 2.0);
      for (std::size_t i = 0; i < noise.size(); ++i) {
        sino.y[t][i] += noise[i];
        sino.lambda[t][i] = w[i];
      }
    }
    wls = Volume4D(truth.dims());
    for (std::size_t t = 0; t < 2; ++t) {
      const Eigen::VectorXd z = dense_wls(a, slice_measurements(proj, sino.y[t]), slice_measurements(proj, sino.lambda[t]));
      for (std::size_t i = 0; i < 64; ++i) wls.frame(t)[i] = z(Eigen::Index(i));
    }
  }

  MaceConfig config(double rho = 0.5) const {
    MaceConfig c;
    c.rho = rho;
    c.max_iters = 400;
    c.tol = 1e-9;
    c.fidelity.beta = 0.05;
    c.agents = {identity_agent()};
    return c;
  }
};

}  // namespace

TEST_CASE("G averages with weight 1/2 on fidelity") {
  const Dims4 d{2, 2, 3, 3};
  const StateList s{Volume4D(d, 1.0, 0.0), Volume4D(d, 1.0, 0.0), Volume4D(d, 1.0, 4.0)};
  for (const auto& v : average_G(s))
    for (double x : v.data()) CHECK(x == 2.0);

  const StateList same(4, Volume4D(d, 1.0, -0.7));
  for (const auto& v : average_G(same)) CHECK(v == same.front());
}

TEST_CASE("G is idempotent and 2G - I is an involution") {
  const Dims4 d{2, 3, 4, 5};
  for (std::size_t kp1 = 2; kp1 <= 4; ++kp1) {
    const StateList s = random_states(kp1, d, 100 * kp1);
    const StateList g = average_G(s);
    CHECK(average_G(g) == g);
    const StateList back = reflect_G(reflect_G(s));
    for (std::size_t k = 0; k < kp1; ++k) CHECK(max_abs_diff(back[k], s[k]) <= 4 * std::numeric_limits<double>::epsilon());
  }
}

TEST_CASE("G coefficients on basis inputs are exactly 1/2 and 1/(2K)") {
  const Dims4 d{1, 1, 2, 2};
  for (std::size_t k = 1; k <= 5; ++k) {
    for (std::size_t hot = 0; hot <= k; ++hot) {
      StateList s(k + 1, Volume4D(d));
      s[hot] = Volume4D(d, 1.0, 1.0);
      const double expected = hot == k ? 0.5 : 1.0 / (2.0 * double(k));
      const Volume4D xbar = weighted_average(s);
      for (double x : xbar.data()) CHECK(x == expected);
    }
  }
}

TEST_CASE("G rejects mismatched or too few states") {
  CHECK_THROWS_AS(average_G({Volume4D({1, 1, 2, 2})}), InvalidInput);
  CHECK_THROWS_AS(average_G({Volume4D({1, 1, 2, 2}), Volume4D({1, 1, 2, 3})}), InvalidInput);
}

TEST_CASE("consensus residual") {
  const Dims4 d{1, 2, 3, 4};
  CHECK(consensus_residual(StateList(3, random_volume(d, 3))) == 0.0);
  const StateList s{Volume4D(d, 1.0, 0.0), Volume4D(d, 1.0, 2.0)};
  CHECK(consensus_residual(s) == doctest::Approx(1.0).epsilon(1e-15));

  StateList r = random_states(3, d, 9);
  const double base = consensus_residual(r);
  for (auto& v : r)
    for (auto& x : v.data()) x *= 3.5;
  CHECK(consensus_residual(r) == doctest::Approx(base).epsilon(1e-13));

  // The floor keeps an all-zero state finite.
  CHECK(consensus_residual(StateList(2, Volume4D(d))) == 0.0);
}

TEST_CASE("partial agent operator") {
  const ScanGeometry geom = ScanGeometry::uniform(3, 6, 6, 5);
  const Projector proj(geom);
  const Dims4 d{3, 3, 6, 6};

  SUBCASE("identity agents and zero weights return the inputs") {
    const SinogramSet sino = SinogramSet::zeros(3, geom, 0.0);
    MaceConfig cfg;
    cfg.agents = {identity_agent(Plane::xy), identity_agent(Plane::yz), identity_agent(Plane::zx)};
    MaceState st;
    st.W = random_states(4, d, 30);
    st.X = random_states(4, d, 40);
    const StateList out = apply_L_partial(st, sino, proj, cfg);
    for (std::size_t k = 0; k < 4; ++k) CHECK(out[k] == st.W[k]);
  }
  SUBCASE("gaussian agent keeps a constant volume") {
    const SinogramSet sino = SinogramSet::zeros(3, geom, 0.0);
    MaceConfig cfg;
    cfg.agents = {gaussian_agent(Plane::xy)};
    const MaceState st = MaceState::replicate(Volume4D(d, 1.0, 0.25), 2);
    for (const auto& v : apply_L_partial(st, sino, proj, cfg)) CHECK(v == st.W.front());
  }
  SUBCASE("fidelity entry equals a standalone partial prox") {
    const SinogramSet sino = forward_project_all(random_volume(d, 50, 0.0, 1.0), proj);
    MaceConfig cfg;
    cfg.fidelity.beta = 3.0;
    cfg.agents = {gaussian_agent(Plane::xy), gaussian_agent(Plane::zx)};
    MaceState st;
    st.W = random_states(3, d, 60);
    st.X = random_states(3, d, 70);
    const StateList out = apply_L_partial(st, sino, proj, cfg);
    CHECK(out.back() == prox_partial(st.W.back(), st.X.back(), sino, proj, cfg.fidelity));
    CHECK(out[0] == apply_slicewise(cfg.agents[0], st.W[0]));
    CHECK(out[1] == apply_slicewise(cfg.agents[1], st.W[1]));
  }
  SUBCASE("state of the wrong length") {
    const SinogramSet sino = SinogramSet::zeros(3, geom);
    MaceConfig cfg;
    cfg.agents = {gaussian_agent(Plane::xy)};
    CHECK_THROWS_AS(apply_L_partial(MaceState::replicate(Volume4D(d), 3), sino, proj, cfg), InvalidInput);
  }
}

TEST_CASE("identity agents converge to the weighted least-squares solution") {
  const TinySystem sys;
  const MaceResult r = solve(Volume4D(sys.wls.dims()), sys.sino, sys.proj, sys.config());
  CHECK(r.diagnostics.converged);
  CHECK(max_abs_diff(r.x_star, sys.wls) < 1e-6);
  CHECK(max_abs_diff(r.diagnostics.xbar, sys.wls) < 1e-6);
}

TEST_CASE("different rho reach the same fixed point") {
  const TinySystem sys;
  const MaceResult a = solve(Volume4D(sys.wls.dims()), sys.sino, sys.proj, sys.config(0.3));
  const MaceResult b = solve(Volume4D(sys.wls.dims()), sys.sino, sys.proj, sys.config(0.8));
  CHECK(a.diagnostics.converged);
  CHECK(b.diagnostics.converged);
  CHECK(max_abs_diff(a.x_star, sys.wls) < 1e-6);
  CHECK(max_abs_diff(b.x_star, sys.wls) < 1e-6);
}

TEST_CASE("starting at the equilibrium stops after one iteration") {
  const TinySystem sys;
  const MaceResult r = solve(sys.wls, sys.sino, sys.proj, sys.config());
  // Coordinate descent at the exact minimizer moves only by rounding.
  REQUIRE(r.diagnostics.records.size() == 1);
  CHECK(r.diagnostics.records.front().residual < 1e-12);
  for (const auto& w : r.state.W) CHECK(max_abs_diff(w, sys.wls) < 1e-12);
}

TEST_CASE("solve is deterministic") {
  const ScanGeometry geom = ScanGeometry::uniform(4, 10, 10, 9);
  const Projector proj(geom);
  const SinogramSet sino = forward_project_all(random_volume({3, 4, 10, 10}, 80, 0.0, 1.0), proj);
  MaceConfig cfg;
  cfg.max_iters = 8;
  cfg.fidelity.beta = 20.0;
  cfg.agents = {gaussian_agent(Plane::xy), gaussian_agent(Plane::yz), gaussian_agent(Plane::zx)};
  const Volume4D x0 = fbp_reconstruct(sino, geom, proj);
  const MaceResult a = solve(x0, sino, proj, cfg);
  const MaceResult b = solve(x0, sino, proj, cfg);
  REQUIRE(a.diagnostics.records.size() == b.diagnostics.records.size());
  for (std::size_t i = 0; i < a.diagnostics.records.size(); ++i) {
    const auto& p = a.diagnostics.records[i];
    const auto& q = b.diagnostics.records[i];
    CHECK(p.residual == q.residual);
    CHECK(p.fidelity == q.fidelity);
    CHECK(p.agent_change == q.agent_change);
  }
  CHECK(a.x_star == b.x_star);
}

TEST_CASE("observer sees every iteration and diagnostics serialize as JSON lines") {
  const TinySystem sys;
  MaceConfig cfg = sys.config();
  cfg.max_iters = 5;
  int seen = 0;
  std::ostringstream out;
  const MaceResult r = solve(Volume4D(sys.wls.dims()), sys.sino, sys.proj, cfg, [&](const IterationRecord& rec) {
    CHECK(rec.iteration == ++seen);
    write_diagnostics_line(out, rec, false);
  });
  CHECK(seen == 5);
  CHECK(r.diagnostics.records.size() == 5);
  CHECK_FALSE(r.diagnostics.converged);
  std::istringstream lines(out.str());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("iteration").get<int>() == ++n);
    CHECK(j.at("agent_change").size() == 2);
    CHECK_FALSE(j.contains("agent_seconds"));
  }
  CHECK(n == 5);
}

TEST_CASE("a non-finite iterate raises a divergence error naming the iteration") {
  const TinySystem sys;
  MaceConfig cfg = sys.config();
  CnnWeights huge = CnnWeights::zeros(3, 2);
  for (auto& l : huge.layers) {
    for (auto& k : l.kernel) k = 1e30f;
    for (auto& b : l.bias) b = 1e30f;
  }
  cfg.agents = {{PlaneSpec::of(Plane::xy), CnnBackend{std::make_shared<const CnnWeights>(huge)}, 1.0}};
  const Volume4D x0(sys.wls.dims(), 1.0, 1.0);
  try {
    solve(x0, sys.sino, sys.proj, cfg);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.iteration() == 1);
    CHECK(std::string(e.what()).find("iteration 1") != std::string::npos);
  }
}

TEST_CASE("configuration validation") {
  const TinySystem sys;
  const Volume4D x0(sys.wls.dims());
  auto rejects = [&](auto mutate) {
    MaceConfig c = sys.config();
    mutate(c);
    CHECK_THROWS_AS(solve(x0, sys.sino, sys.proj, c), InvalidInput);
  };
  rejects([](MaceConfig& c) { c.rho = 0.0; });
  rejects([](MaceConfig& c) { c.rho = 1.0; });
  rejects([](MaceConfig& c) { c.tol = 0.0; });
  rejects([](MaceConfig& c) { c.max_iters = 0; });
  rejects([](MaceConfig& c) { c.agents.clear(); });
  rejects([](MaceConfig& c) { c.fidelity.sigma = 0.0; });

  Volume4D bad = x0;
  bad.at(0, 0, 1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(solve(bad, sys.sino, sys.proj, sys.config()), InvalidInput);
  CHECK_THROWS_AS(solve(Volume4D({2, 1, 8, 7}), sys.sino, sys.proj, sys.config()), InvalidInput);
}

TEST_CASE("full agent operator and equilibrium gap at a converged state") {
  const TinySystem sys;
  const MaceResult r = solve(Volume4D(sys.wls.dims()), sys.sino, sys.proj, sys.config());
  REQUIRE(r.diagnostics.converged);
  const StateList full = apply_L(r.state.W, r.state.X.back(), sys.sino, sys.proj, sys.config(), 50);
  CHECK(equilibrium_gap(r.state.W, full) < 1e-6);
  // Away from equilibrium the gap is large.
  const StateList w0 = random_states(2, sys.wls.dims(), 90);
  CHECK(equilibrium_gap(w0, apply_L(w0, w0.back(), sys.sino, sys.proj, sys.config(), 50)) > 0.1);
}
