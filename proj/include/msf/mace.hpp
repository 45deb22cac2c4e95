#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <vector>

#include "msf/denoiser.hpp"
#include "msf/fidelity.hpp"
#include "msf/projector.hpp"
#include "msf/volume.hpp"

namespace msf {

using StateList = std::vector<Volume4D>;

struct MaceConfig {
  double rho = 0.5;
  int max_iters = 100;
  double tol = 1e-3;
  FidelityConfig fidelity;
  std::vector<DenoiserAgent> agents;

  std::size_t k() const noexcept { return agents.size(); }
  void validate() const;
};

/// Algorithm state for K denoisers plus the fidelity agent (always last).
struct MaceState {
  StateList W;  // Mann iterate, the agents' inputs
  StateList X;  // agent outputs; X.back() warm-starts the partial prox
  StateList Z;  // G(2X - W)

  std::size_t k_plus_1() const noexcept { return W.size(); }
  static MaceState replicate(const Volume4D& x0, std::size_t k_plus_1);
};

struct IterationRecord {
  int iteration = 0;
  double residual = 0.0;
  double fidelity = 0.0;
  double xbar_norm = 0.0;
  /// ||X_1 - Xbar|| / ||Xbar||: how far the returned X_1 is from the consensus average.
  double x1_to_xbar = 0.0;
  std::vector<double> agent_change;
  std::vector<double> agent_seconds;
};

struct Diagnostics {
  std::vector<IterationRecord> records;
  bool converged = false;
  Volume4D xbar;
};

struct MaceResult {
  Volume4D x_star;
  Diagnostics diagnostics;
  MaceState state;
};

/// Xbar = 1/2 X_{K+1} + 1/(2K) sum_k X_k, with the denoiser mean correctly rounded.
Volume4D weighted_average(const StateList& states);
/// G: every entry of the output list is Xbar.
StateList average_G(const StateList& states);
/// (2G - I) applied to the stacked state.
StateList reflect_G(const StateList& states);

/// max_k ||X_k - Xbar|| / max(||Xbar||, 1e-12) over the agent outputs.
double consensus_residual(const MaceState& state);
double consensus_residual(const StateList& outputs);

/// Partial-update agent operator: denoisers on W_k, and `fidelity.icd_passes` ICD sweeps
/// on W_{K+1} warm-started at X_{K+1}.
StateList apply_L_partial(const MaceState& state, const SinogramSet& sino, const Projector& proj,
                          const MaceConfig& cfg, std::vector<double>* agent_seconds = nullptr);

/// Agent operator with `prox_passes` sweeps, warm-started at `warm`.
StateList apply_L(const StateList& inputs, const Volume4D& warm, const SinogramSet& sino,
                  const Projector& proj, const MaceConfig& cfg, int prox_passes);

/// ||L(W) - G(W)|| / ||W|| over the stacked state.
double equilibrium_gap(const StateList& inputs, const StateList& agent_outputs);

using IterationObserver = std::function<void(const IterationRecord&)>;

/// Partial-update Mann iteration. Returns X_1 of the final iterate. Throws DivergenceError
/// when an iterate becomes non-finite.
MaceResult solve(const Volume4D& x0, const SinogramSet& sino, const Projector& proj,
                 const MaceConfig& cfg, const IterationObserver& observer = {});

/// One JSON object per line.
void write_diagnostics_line(std::ostream& out, const IterationRecord& rec, bool include_timing);

}  // namespace msf
