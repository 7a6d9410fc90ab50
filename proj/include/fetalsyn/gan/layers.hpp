/**
 * @file layers.hpp
 * @brief Forward/backward kernels for the desk-scale conditional GAN.
 *
 * Every backward function accumulates parameter gradients into Param::grad
 * and returns the gradient with respect to its input. Forward caches are
 * explicit (tapes) so the kernels stay free functions.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "fetalsyn/gan/tensor.hpp"
#include "fetalsyn/volume_io.hpp"

namespace fetalsyn::gan {

inline constexpr double kLeakySlope = 0.2;

// 3x3 convolution, zero padding 1.
struct Conv2d {
  Param weight;  // (out, in, 3, 3)
  Param bias;    // (out)
  int stride = 1;

  Conv2d() = default;
  Conv2d(const std::string& name, int in, int out, int stride);
  int in_channels() const { return weight.value.shape[1]; }
  int out_channels() const { return weight.value.shape[0]; }
  void init(std::mt19937_64& rng, double gain);
};

int conv_out_extent(int in, int stride);
Tensor conv2d_forward(const Conv2d& conv, const Tensor& x);
Tensor conv2d_backward(Conv2d& conv, const Tensor& x, const Tensor& dy);

struct Linear {
  Param weight;  // (out, in)
  Param bias;    // (out)

  Linear() = default;
  Linear(const std::string& name, int in, int out);
  void init(std::mt19937_64& rng, double gain);
};

Tensor linear_forward(const Linear& lin, const Tensor& x);
Tensor linear_backward(Linear& lin, const Tensor& x, const Tensor& dy);

Tensor upsample2x_forward(const Tensor& x);
Tensor upsample2x_backward(const Tensor& dy);

Tensor leaky_relu_forward(const Tensor& x, double slope = kLeakySlope);
Tensor leaky_relu_backward(const Tensor& x, const Tensor& dy, double slope = kLeakySlope);

Tensor sigmoid_forward(const Tensor& x);
/// Takes the forward output y = sigmoid(x).
Tensor sigmoid_backward(const Tensor& y, const Tensor& dy);

inline double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

/// (C, H, W) -> (C) mean over each channel.
Tensor global_avg_pool_forward(const Tensor& x);
Tensor global_avg_pool_backward(const std::vector<int>& in_shape, const Tensor& dy);

Tensor concat_channels(const Tensor& a, const Tensor& b);

// Parameter-free per-channel normalization over spatial positions.
struct NormTape {
  Tensor normalized;
  std::vector<double> inv_std;
};

Tensor instance_norm_forward(const Tensor& x, double eps, NormTape* tape);
Tensor instance_norm_backward(const NormTape& tape, const Tensor& dn);

/// (kNumClasses, H, W) one-hot encoding of a label plane.
Tensor one_hot(const Plane<std::uint8_t>& labels);

/// Nearest-neighbor resampling of a (C, H, W) map to (C, h, w).
Tensor resample_nearest(const Tensor& x, int h, int w);

// Spatially-adaptive normalization: a shared 3x3 conv + ReLU over the one-hot
// label map feeds one 3x3 conv head each for the per-pixel scale and bias.
struct SpadeBlock {
  Conv2d shared;
  Conv2d gamma;
  Conv2d beta;
  double eps = 1e-5;

  SpadeBlock() = default;
  SpadeBlock(const std::string& name, int label_channels, int hidden, int feature_channels);
  void init(std::mt19937_64& rng);
};

struct SpadeTape {
  Tensor seg;
  Tensor hidden_pre;
  Tensor hidden;
  NormTape norm;
  Tensor gamma;
  Tensor beta;
};

/// norm(x) * (1 + gamma(seg)) + beta(seg). The one-hot map is resampled
/// (nearest) to the feature-map size when it differs.
Tensor spade_forward(const SpadeBlock& block, const Tensor& x, const Tensor& onehot, SpadeTape* tape);
Tensor spade_backward(SpadeBlock& block, const SpadeTape& tape, const Tensor& dy);

}  // namespace fetalsyn::gan
