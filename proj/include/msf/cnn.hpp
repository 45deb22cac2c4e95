#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "msf/volume.hpp"

namespace msf {

/// One 3x3 convolution layer; kernel layout (out, in, kh, kw) row-major.
struct ConvLayer {
  std::size_t out_ch = 0;
  std::size_t in_ch = 0;
  std::size_t kh = 3;
  std::size_t kw = 3;
  std::vector<float> kernel;
  std::vector<float> bias;
};

/// Residual 2.5D denoiser weights: 5 input channels, 1 output channel, ReLU between layers.
struct CnnWeights {
  std::vector<ConvLayer> layers;
  std::size_t width = 64;

  std::size_t n_layers() const noexcept { return layers.size(); }
  std::size_t parameter_count() const noexcept;
  /// Throws LoadError(ShapeChain) on a broken chain, InvalidInput on non-finite weights.
  void validate() const;

  /// All-zero network of the given depth and hidden width.
  static CnnWeights zeros(std::size_t n_layers, std::size_t width);
};

/// Same-padded (replicate border) 3x3 cross-correlations, ReLU after every layer but the
/// last; the single output channel is added to the center input channel.
Image2D cnn_infer(const CnnWeights& weights, const Slab2_5D& slab);

/// Network correction only, without the residual connection.
std::vector<float> cnn_correction(const CnnWeights& weights, const Slab2_5D& slab);

/// Manifest + payload. The payload defaults to the manifest path with extension ".bin"
/// unless the manifest names one in "payload".
CnnWeights load_weights(const std::filesystem::path& manifest);
void save_weights(const CnnWeights& weights, const std::filesystem::path& manifest);

/// A (slab, expected output) pair produced by an external reference implementation.
struct ParityCase {
  Slab2_5D slab;
  Image2D expected;
};

std::vector<ParityCase> load_parity_vectors(const std::filesystem::path& manifest);
void save_parity_vectors(const std::vector<ParityCase>& cases, const std::filesystem::path& manifest);

}  // namespace msf
