#include "msf/mace.hpp"

#include <chrono>
#include <cmath>
#include <ostream>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "msf/error.hpp"
#include "msf/parallel.hpp"

namespace msf {

namespace {

constexpr double kResidualFloor = 1e-12;

void require_states(const StateList& states, std::size_t min_count) {
  if (states.size() < min_count)
    throw InvalidInput("state list needs at least " + std::to_string(min_count) + " volumes");
  for (const auto& s : states)
    if (s.dims() != states.front().dims()) throw InvalidInput("state volumes differ in dims");
}

// Mean of K values, correctly rounded for K <= 2 and within a rounding of the exact mean
// otherwise; equal inputs give that value exactly.
template <typename Get>
double denoiser_mean(std::size_t k, Get&& get) {
  double sum = get(0), err = 0.0;
  for (std::size_t i = 1; i < k; ++i) {
    const double v = get(i);
    const double t = sum + v;
    const double bp = t - sum;
    err += (sum - (t - bp)) + (v - bp);
    sum = t;
  }
  const auto kd = static_cast<double>(k);
  const double q = sum / kd;
  const double rem = std::fma(-q, kd, sum);
  return q + (rem + err) / kd;
}

// Xbar voxel by voxel for states given by get(agent, voxel); the fidelity state is agent K.
template <typename Get>
void average_into(std::size_t k, std::size_t n, Get&& get, std::span<double> out) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double mean = denoiser_mean(k, [&](std::size_t a) { return get(a, i); });
    out[i] = 0.5 * (get(k, i) + mean);
  }
}

double diff_norm(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

void MaceConfig::validate() const {
  if (!(rho > 0.0 && rho < 1.0)) throw InvalidInput("rho must lie in (0, 1)");
  if (max_iters < 1) throw InvalidInput("max_iters must be positive");
  if (!(tol > 0.0)) throw InvalidInput("tol must be positive");
  if (agents.empty()) throw InvalidInput("MACE needs at least one denoiser agent");
  fidelity.validate();
  for (const auto& a : agents) a.validate();
}

MaceState MaceState::replicate(const Volume4D& x0, std::size_t k_plus_1) {
  MaceState s;
  s.W.assign(k_plus_1, x0);
  s.X.assign(k_plus_1, x0);
  s.Z.assign(1, x0);
  return s;
}

Volume4D weighted_average(const StateList& states) {
  require_states(states, 2);
  const std::size_t k = states.size() - 1;
  Volume4D out(states.front().dims(), states.front().voxel_pitch());
  std::vector<const double*> ptr;
  for (const auto& s : states) ptr.push_back(s.data().data());
  average_into(k, out.size(), [&](std::size_t a, std::size_t i) { return ptr[a][i]; }, out.data());
  return out;
}

StateList average_G(const StateList& states) {
  return StateList(states.size(), weighted_average(states));
}

StateList reflect_G(const StateList& states) {
  const Volume4D xbar = weighted_average(states);
  StateList out = states;
  for (auto& s : out) {
    auto d = s.data();
    const auto m = xbar.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = 2.0 * m[i] - d[i];
  }
  return out;
}

double consensus_residual(const StateList& outputs) {
  const Volume4D xbar = weighted_average(outputs);
  const double denom = std::max(std::sqrt(squared_norm(xbar.data())), kResidualFloor);
  double worst = 0.0;
  for (const auto& x : outputs) worst = std::max(worst, diff_norm(x.data(), xbar.data()));
  return worst / denom;
}

double consensus_residual(const MaceState& state) { return consensus_residual(state.X); }

StateList apply_L(const StateList& inputs, const Volume4D& warm, const SinogramSet& sino,
                  const Projector& proj, const MaceConfig& cfg, int prox_passes) {
  require_states(inputs, cfg.k() + 1);
  if (inputs.size() != cfg.k() + 1) throw InvalidInput("state list length must be K + 1");
  StateList out;
  out.reserve(inputs.size());
  for (std::size_t k = 0; k < cfg.k(); ++k) out.push_back(apply_slicewise(cfg.agents[k], inputs[k]));
  FidelityConfig fc = cfg.fidelity;
  fc.icd_passes = prox_passes;
  out.push_back(prox_partial(inputs.back(), warm, sino, proj, fc));
  return out;
}

StateList apply_L_partial(const MaceState& state, const SinogramSet& sino, const Projector& proj,
                          const MaceConfig& cfg, std::vector<double>* agent_seconds) {
  const std::size_t kp1 = cfg.k() + 1;
  if (state.W.size() != kp1 || state.X.size() != kp1)
    throw InvalidInput("MACE state must hold K + 1 volumes");
  require_states(state.W, kp1);
  using clock = std::chrono::steady_clock;
  StateList out;
  out.reserve(kp1);
  if (agent_seconds) agent_seconds->assign(kp1, 0.0);
  for (std::size_t k = 0; k < kp1; ++k) {
    const auto start = clock::now();
    if (k < cfg.k())
      out.push_back(apply_slicewise(cfg.agents[k], state.W[k]));
    else
      out.push_back(prox_partial(state.W[k], state.X[k], sino, proj, cfg.fidelity));
    if (agent_seconds)
      (*agent_seconds)[k] = std::chrono::duration<double>(clock::now() - start).count();
  }
  return out;
}

double equilibrium_gap(const StateList& inputs, const StateList& agent_outputs) {
  require_states(inputs, 2);
  if (agent_outputs.size() != inputs.size()) throw InvalidInput("agent output count differs from inputs");
  const Volume4D wbar = weighted_average(inputs);
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const double d = diff_norm(agent_outputs[k].data(), wbar.data());
    num += d * d;
    den += squared_norm(inputs[k].data());
  }
  return std::sqrt(num) / std::max(std::sqrt(den), kResidualFloor);
}

MaceResult solve(const Volume4D& x0, const SinogramSet& sino, const Projector& proj,
                 const MaceConfig& cfg, const IterationObserver& observer) {
  cfg.validate();
  x0.require_finite("initial reconstruction");
  proj.check_volume(x0.dims());
  proj.check_sinogram(sino);

  const std::size_t k = cfg.k();
  const std::size_t n = x0.size();
  MaceResult result;
  MaceState& st = result.state;
  st = MaceState::replicate(x0, k + 1);

  for (int iter = 1; iter <= cfg.max_iters; ++iter) {
    IterationRecord rec;
    rec.iteration = iter;

    StateList next = apply_L_partial(st, sino, proj, cfg, &rec.agent_seconds);
    StateList previous = std::exchange(st.X, std::move(next));
    for (const auto& x : st.X)
      if (!x.all_finite()) throw DivergenceError(iter, "agent output became non-finite");

    // Z = G(2X - W); every entry of G's output is the same volume, stored once.
    std::vector<const double*> xs, ws;
    for (std::size_t a = 0; a <= k; ++a) {
      xs.push_back(st.X[a].data().data());
      ws.push_back(st.W[a].data().data());
    }
    Volume4D& zbar = st.Z.front();
    average_into(k, n, [&](std::size_t a, std::size_t i) { return 2.0 * xs[a][i] - ws[a][i]; },
                 zbar.data());

    const double step = 2.0 * cfg.rho;
    for (std::size_t a = 0; a <= k; ++a) {
      auto w = st.W[a].data();
      const auto x = st.X[a].data();
      const auto z = zbar.data();
      for (std::size_t i = 0; i < n; ++i) w[i] += step * (z[i] - x[i]);
      if (!st.W[a].all_finite()) throw DivergenceError(iter, "Mann iterate became non-finite");
    }

    Volume4D xbar = weighted_average(st.X);
    rec.xbar_norm = std::sqrt(squared_norm(xbar.data()));
    const double denom = std::max(rec.xbar_norm, kResidualFloor);
    double worst = 0.0;
    for (std::size_t a = 0; a <= k; ++a) {
      worst = std::max(worst, diff_norm(st.X[a].data(), xbar.data()));
      rec.agent_change.push_back(diff_norm(st.X[a].data(), previous[a].data()));
    }
    rec.residual = worst / denom;
    rec.x1_to_xbar = diff_norm(st.X.front().data(), xbar.data()) / denom;
    rec.fidelity = eval_fidelity(xbar, sino, proj, cfg.fidelity);
    if (!std::isfinite(rec.residual) || !std::isfinite(rec.fidelity))
      throw DivergenceError(iter, "convergence statistics became non-finite");

    result.diagnostics.records.push_back(rec);
    if (observer) observer(rec);
    result.diagnostics.xbar = std::move(xbar);
    if (rec.residual < cfg.tol) {
      result.diagnostics.converged = true;
      break;
    }
  }
  result.x_star = st.X.front();
  return result;
}

void write_diagnostics_line(std::ostream& out, const IterationRecord& rec, bool include_timing) {
  nlohmann::json j;
  j["iteration"] = rec.iteration;
  j["residual"] = rec.residual;
  j["fidelity"] = rec.fidelity;
  j["xbar_norm"] = rec.xbar_norm;
  j["x1_to_xbar"] = rec.x1_to_xbar;
  j["agent_change"] = rec.agent_change;
  if (include_timing) j["agent_seconds"] = rec.agent_seconds;
  out << j.dump() << '\n';
}

}  // namespace msf
