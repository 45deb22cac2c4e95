#pragma once

#include <Eigen/Dense>

#include "msf/projector.hpp"

namespace msf::testing {

// Dense copy of the per-slice system matrix (rays x pixels).
inline Eigen::MatrixXd dense_slice_matrix(const Projector& proj) {
  const SparseMatrix& a = proj.slice_matrix();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(Eigen::Index(a.rows()), Eigen::Index(a.cols()));
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto cols = a.row_cols(r);
    const auto vals = a.row_values(r);
    for (std::size_t k = 0; k < cols.size(); ++k) m(Eigen::Index(r), Eigen::Index(cols[k])) += vals[k];
  }
  return m;
}

// Gathers the single-slice measurements of a frame into ray order (view, channel).
inline Eigen::VectorXd slice_measurements(const Projector& proj, std::span<const double> frame,
                                          std::size_t z = 0) {
  const std::size_t rays = proj.n_views() * proj.n_channels();
  Eigen::VectorXd out(Eigen::Index(rays), 1);
  for (std::size_t r = 0; r < rays; ++r)
    out(Eigen::Index(r)) = frame[proj.sinogram_offset(std::uint32_t(r), z)];
  return out;
}

// Exact minimizer of 1/(2 alpha) ||y - A z||^2_Lambda + gamma ||x - z||^2 for one slice.
inline Eigen::VectorXd dense_prox(const Eigen::MatrixXd& a, const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& lambda, const Eigen::VectorXd& x,
                                  double alpha, double gamma) {
  const Eigen::MatrixXd atl = a.transpose() * lambda.asDiagonal();
  const Eigen::MatrixXd h =
      atl * a / alpha + 2.0 * gamma * Eigen::MatrixXd::Identity(a.cols(), a.cols());
  const Eigen::VectorXd rhs = atl * y / alpha + 2.0 * gamma * x;
  return h.ldlt().solve(rhs);
}

// Weighted least squares minimizer of ||y - A z||^2_Lambda (A must have full column rank).
inline Eigen::VectorXd dense_wls(const Eigen::MatrixXd& a, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& lambda) {
  const Eigen::MatrixXd atl = a.transpose() * lambda.asDiagonal();
  return (atl * a).ldlt().solve(atl * y);
}

}  // namespace msf::testing
