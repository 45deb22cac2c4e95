#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <variant>

#include "msf/cnn.hpp"
#include "msf/volume.hpp"

namespace msf {

/// Weighted mean of the five channels, then separable Gaussian smoothing (std `strength` pixels).
/// Channel weights fall off as a Gaussian of std `temporal` frames around the center; an
/// infinite std gives the plain mean and 0 keeps the center channel only.
struct GaussianBackend {
  double strength = 1.0;
  double temporal = 1.0;
};

/// Rudin-Osher-Fatemi denoising of the weighted channel mean by Chambolle's dual projection.
struct TvBackend {
  double weight = 0.1;
  int inner_iters = 50;
  double temporal = 1.0;
};

struct CnnBackend {
  std::shared_ptr<const CnnWeights> weights;
};

using DenoiserBackend = std::variant<GaussianBackend, TvBackend, CnnBackend>;

struct DenoiserAgent {
  PlaneSpec plane;
  DenoiserBackend backend;
  double sigma = 1.0;

  void validate() const;
  std::string describe() const;
};

/// Denoised center slice of the slab.
Image2D denoise_slab(const DenoiserAgent& agent, const Slab2_5D& slab);

/// Denoises every (spatial, time) slice of the agent's plane from its 5-slice window.
Volume4D apply_slicewise(const DenoiserAgent& agent, const Volume4D& vol);

// Backend kernels, exposed for testing.

/// Normalized channel weights for a temporal std (see GaussianBackend::temporal).
std::array<double, Slab2_5D::kChannels> temporal_weights(double temporal);
/// Weighted channel mean written as center + sum w_k (c_k - center), so equal channels give the
/// center exactly. The one-argument form uses equal weights.
Image2D temporal_mean(const Slab2_5D& slab, const std::array<double, Slab2_5D::kChannels>& weights);
Image2D temporal_mean(const Slab2_5D& slab);
/// Separable Gaussian with replicate borders; constant images map to themselves exactly.
Image2D gaussian_smooth(const Image2D& img, double strength);
/// min_u 1/2 ||u - d||^2 + weight * TV(u), fixed iteration count.
Image2D tv_denoise(const Image2D& data, double weight, int iters);

}  // namespace msf
