#include "msf/fidelity.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "msf/error.hpp"

namespace msf {

void FidelityConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidInput("fidelity alpha must be positive");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidInput("fidelity sigma must be positive");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw InvalidInput("fidelity beta must be positive");
  if (icd_passes < 1) throw InvalidInput("icd_passes must be at least 1");
}

namespace {

void check_inputs(const Volume4D& X, const SinogramSet& sino, const Projector& proj) {
  proj.check_volume(X.dims());
  proj.check_sinogram(sino);
  if (sino.n_t() != X.dims().t)
    throw InvalidInput("sinogram has " + std::to_string(sino.n_t()) + " time points, volume has " +
                       std::to_string(X.dims().t));
}

double frame_fidelity(std::span<const double> x, std::span<const double> y,
                      std::span<const double> lambda, const Projector& proj, double alpha) {
  const std::vector<double> ax = proj.forward(x);
  double sum = 0.0;
  for (std::size_t i = 0; i < ax.size(); ++i) {
    const double r = y[i] - ax[i];
    sum += lambda[i] * r * r;
  }
  return sum / (2.0 * alpha);
}

}  // namespace

double eval_fidelity(const Volume4D& X, const SinogramSet& sino, const Projector& proj,
                     const FidelityConfig& cfg) {
  cfg.validate();
  check_inputs(X, sino, proj);
  double total = 0.0;
  for (std::size_t t = 0; t < X.dims().t; ++t)
    total += frame_fidelity(X.frame(t), sino.y[t], sino.lambda[t], proj, cfg.alpha);
  return total;
}

double prox_objective(const Volume4D& Z, const Volume4D& X, const SinogramSet& sino,
                      const Projector& proj, const FidelityConfig& cfg) {
  if (Z.dims() != X.dims()) throw InvalidInput("prox objective: volume dims differ");
  double quad = 0.0;
  const auto z = Z.data();
  const auto x = X.data();
  for (std::size_t i = 0; i < z.size(); ++i) quad += (x[i] - z[i]) * (x[i] - z[i]);
  return eval_fidelity(Z, sino, proj, cfg) + cfg.prox_weight() * quad;
}

void prox_partial_frame(std::span<const double> x, std::span<double> z, std::span<const double> y,
                        std::span<const double> lambda, const Projector& proj,
                        const FidelityConfig& cfg, int passes) {
  const SparseMatrix& a = proj.slice_matrix();
  const std::size_t slice = proj.n_y() * proj.n_x();
  const double inv_alpha = 1.0 / cfg.alpha;
  const double gamma2 = 2.0 * cfg.prox_weight();

  // Residual r = y - A z per time point. A is block diagonal in z, so detector rows only
  // couple voxels of their own slice and slices can be swept independently.
  std::vector<double> residual(proj.sinogram_size());
  proj.forward<double>(std::span<const double>(z.data(), z.size()), residual);
  for (std::size_t i = 0; i < residual.size(); ++i) residual[i] = y[i] - residual[i];

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(proj.n_z()); ++si) {
    const auto zs = static_cast<std::size_t>(si);
    for (int pass = 0; pass < passes; ++pass) {
      for (std::size_t j = 0; j < slice; ++j) {
        const std::size_t voxel = zs * slice + j;
        const auto rays = a.col_rows(j);
        const auto vals = a.col_values(j);
        double grad = 0.0;  // -(A^T Lambda r)_j
        double curv = 0.0;  // (A^T Lambda A)_jj
        for (std::size_t k = 0; k < rays.size(); ++k) {
          const std::size_t m = proj.sinogram_offset(rays[k], zs);
          const double wl = vals[k] * lambda[m];
          grad -= wl * residual[m];
          curv += wl * vals[k];
        }
        double delta;
        if (curv == 0.0) {
          // No data touches this voxel: the coordinate minimizer is x_j itself.
          delta = x[voxel] - z[voxel];
          z[voxel] = x[voxel];
        } else {
          const double theta1 = inv_alpha * grad + gamma2 * (z[voxel] - x[voxel]);
          const double theta2 = inv_alpha * curv + gamma2;
          delta = -theta1 / theta2;
          z[voxel] += delta;
        }
        if (delta != 0.0) {
          for (std::size_t k = 0; k < rays.size(); ++k)
            residual[proj.sinogram_offset(rays[k], zs)] -= delta * vals[k];
        }
      }
    }
  }
}

Volume4D prox_partial(const Volume4D& X, const Volume4D& V, const SinogramSet& sino,
                      const Projector& proj, const FidelityConfig& cfg) {
  cfg.validate();
  if (X.dims() != V.dims()) throw InvalidInput("prox_partial: X and V dims differ");
  check_inputs(X, sino, proj);
  X.require_finite("prox input X");
  V.require_finite("prox warm start V");

  Volume4D Z = V;
  for (std::size_t t = 0; t < X.dims().t; ++t)
    prox_partial_frame(X.frame(t), Z.frame(t), sino.y[t], sino.lambda[t], proj, cfg, cfg.icd_passes);
  return Z;
}

}  // namespace msf
