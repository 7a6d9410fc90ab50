/**
 * @file model.hpp
 * @brief Label-conditioned generator and discriminator.
 *
 * Generator: z -> linear projection to a coarse grid -> `stages` x
 * (nearest 2x upsample, 3x3 conv, SPADE, leaky ReLU) -> 3x3 conv -> sigmoid.
 *
 * Discriminator: [image | one-hot labels] -> 3 x (stride-2 3x3 conv, leaky
 * ReLU) -> global average -> affine -> sigmoid.
 */
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "fetalsyn/gan/layers.hpp"

namespace fetalsyn::gan {

struct GanArch {
  Canvas canvas{32, 32};
  int z_dim = 16;
  int stages = 2;
  int coarse_channels = 32;
  int stage_channels = 16;
  int spade_hidden = 16;
  int d_channels = 16;

  /// Canvas extents must be divisible by 2^stages.
  void validate() const;
  int coarse_h() const { return canvas.h >> stages; }
  int coarse_w() const { return canvas.w >> stages; }
  friend bool operator==(const GanArch&, const GanArch&) = default;
};

class Generator {
 public:
  Generator() = default;
  explicit Generator(const GanArch& arch);

  void init(std::uint64_t seed);
  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  const GanArch& arch() const { return arch_; }

  Linear project;
  std::vector<Conv2d> convs;
  std::vector<SpadeBlock> spades;
  Conv2d out;

 private:
  GanArch arch_;
};

struct GeneratorStageTape {
  Tensor upsampled;
  Tensor conv;
  SpadeTape spade;
  Tensor modulated;
};

struct GeneratorTape {
  Tensor z;
  Tensor projected;  // (coarse_channels, coarse_h, coarse_w)
  std::vector<GeneratorStageTape> stages;
  Tensor activated;  // input of the output conv
  Tensor output;     // (1, H, W) in (0, 1)
};

/// `onehot` is (kNumClasses, H, W) on the training canvas.
Tensor generator_forward(const Generator& g, const Tensor& z, const Tensor& onehot,
                         GeneratorTape* tape = nullptr);
/// Accumulates parameter gradients; returns dL/dz.
Tensor generator_backward(Generator& g, const GeneratorTape& tape, const Tensor& d_output);

/// Standard-normal latent of the configured size.
Tensor sample_latent(const GanArch& arch, std::mt19937_64& rng);

class Discriminator {
 public:
  Discriminator() = default;
  explicit Discriminator(const GanArch& arch);

  void init(std::uint64_t seed);
  std::vector<Param*> params();
  std::vector<const Param*> params() const;

  std::array<Conv2d, 3> convs;
  Linear head;
};

struct DiscriminatorTape {
  Tensor input;
  std::array<Tensor, 3> pre;
  std::array<Tensor, 3> act;
  Tensor pooled;
  double logit = 0.0;
  double prob = 0.5;
};

/// Probability in (0, 1) that `image` (1, H, W) is real given `onehot`.
double discriminator_forward(const Discriminator& d, const Tensor& image, const Tensor& onehot,
                             DiscriminatorTape* tape = nullptr);
/// Takes dL/d(logit); accumulates parameter gradients and returns dL/d(image).
Tensor discriminator_backward(Discriminator& d, const DiscriminatorTape& tape, double d_logit);

void zero_grads(const std::vector<Param*>& params);

}  // namespace fetalsyn::gan
