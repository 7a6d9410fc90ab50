/**
 * @file train.hpp
 * @brief Adversarial losses, learning-rate schedule, training loop,
 *        per-orientation volume synthesis and parameter files.
 */
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fetalsyn/fusion.hpp"
#include "fetalsyn/gan/model.hpp"
#include "fetalsyn/volume_io.hpp"

namespace fetalsyn::gan {

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before logs.
inline constexpr double kProbClamp = 1e-7;

enum class GLossMode { Minimax, NonSaturating };

GLossMode parse_g_loss(const std::string& s);  // "minimax" | "nonsat"
const char* g_loss_name(GLossMode m);

/// E[log D(x)] + E[log(1 - D(G(z)))] over the batch.
double adversarial_value(std::span<const double> d_real, std::span<const double> d_fake);

/// -(mean log d_real + mean log(1 - d_fake)); D minimizes this.
double loss_d(std::span<const double> d_real, std::span<const double> d_fake);

/// Minimax: mean log(1 - d_fake). Non-saturating: -mean log d_fake.
double loss_g(std::span<const double> d_fake, GLossMode mode);

struct LossDGrad {
  std::vector<double> d_real;
  std::vector<double> d_fake;
};

/// Gradients with respect to the probabilities (zero where the clamp is active).
LossDGrad loss_d_grad(std::span<const double> d_real, std::span<const double> d_fake);
std::vector<double> loss_g_grad(std::span<const double> d_fake, GLossMode mode);

enum class OptimizerKind { Sgd, Adam };

OptimizerKind parse_optimizer(const std::string& s);  // "sgd" | "adam"
const char* optimizer_name(OptimizerKind k);

struct TrainConfig {
  int niter = 50;        ///< epochs at constant learning rate
  int niter_decay = 0;   ///< epochs of linear decay towards zero
  double lr = 2e-4;
  int batch = 1;
  std::uint64_t seed = 0;
  GLossMode g_loss = GLossMode::Minimax;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  GanArch arch;

  void validate() const;
  int epochs() const { return niter + niter_decay; }
};

/// lr for epoch <= niter, then lr * (1 - (epoch - niter) / (niter_decay + 1)).
double lr_at_epoch(const TrainConfig& cfg, int epoch);

struct TrainingPair {
  Plane<std::uint8_t> labels;
  Plane<float> image;
};

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double loss_d = 0.0;
  double loss_g = 0.0;
  double d_real = 0.0;  ///< mean D output on real images
  double d_fake = 0.0;  ///< mean D output on generated images (D step)
};

struct TrainResult {
  Generator generator;
  Discriminator discriminator;
  std::vector<EpochStats> curves;
};

/// Per batch one discriminator step, then one generator step on
/// the same latents. Deterministic for a fixed seed.
TrainResult train(const std::vector<TrainingPair>& dataset, const TrainConfig& cfg);

/// Builds training pairs from every slice of `volume`/`labels` along `axis`
/// that contains at least one non-background label.
std::vector<TrainingPair> slices_for_training(const Volume& volume, const LabelVolume& labels, Axis axis,
                                              Canvas canvas, int max_slices = 0);

Tensor image_tensor(const Plane<float>& p);
Plane<float> image_plane(const Tensor& t);

/// Generates one slice stack per orientation and restacks it to the label grid.
/// generators[0..2] are the x, y, z models.
OrientedTriplet synthesize_volume(const std::array<const Generator*, 3>& generators, const LabelVolume& labels,
                                  std::uint64_t z_seed);

// Parameter files: magic "FSGN", u32 version, i32 architecture fields,
// u32 tensor count, per tensor (u32 name length, name, u32 rank, u32
// extents), then the float32 payload of all tensors in table order.
inline constexpr std::uint32_t kModelFileVersion = 1;

void save_model(const std::filesystem::path& path, const Generator& g, const Discriminator& d);

struct LoadedModel {
  Generator generator;
  Discriminator discriminator;
};

LoadedModel load_model(const std::filesystem::path& path);

}  // namespace fetalsyn::gan
