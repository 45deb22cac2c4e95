#pragma once

#include <cstddef>
#include <span>

#include "msf/projector.hpp"
#include "msf/volume.hpp"

namespace msf {

struct FidelityConfig {
  double alpha = 1.0;
  double sigma = 1.0;
  double beta = 1.0;
  int icd_passes = 3;

  /// Weight of the proximal quadratic term, beta / sigma^2.
  double prox_weight() const noexcept { return beta / (sigma * sigma); }
  void validate() const;
};

/// f(X) = sum_n 1/(2 alpha) ||y_n - A_n x_n||^2_{Lambda_n}.
double eval_fidelity(const Volume4D& X, const SinogramSet& sino, const Projector& proj,
                     const FidelityConfig& cfg);

/// Value of the proximal objective f(Z) + (beta/sigma^2) ||X - Z||^2.
double prox_objective(const Volume4D& Z, const Volume4D& X, const SinogramSet& sino,
                      const Projector& proj, const FidelityConfig& cfg);

/// `cfg.icd_passes` lexicographic (z, y, x) coordinate-descent sweeps on the proximal
/// objective, each time point starting from V. Approaches F(X) as the pass count grows.
Volume4D prox_partial(const Volume4D& X, const Volume4D& V, const SinogramSet& sino,
                      const Projector& proj, const FidelityConfig& cfg);

/// Same as prox_partial restricted to a single time point; Z holds the starting point on entry.
void prox_partial_frame(std::span<const double> x, std::span<double> z,
                        std::span<const double> y, std::span<const double> lambda,
                        const Projector& proj, const FidelityConfig& cfg, int passes);

}  // namespace msf
