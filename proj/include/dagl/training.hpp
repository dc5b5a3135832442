#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <vector>

#include "dagl/model.hpp"

namespace dagl {

/// Optimization settings. `sigma` is in 8-bit units (25 means 25/255).
struct TrainConfig {
  double lr = 1e-4;
  std::size_t halve_every = 50;  // epochs
  std::size_t batch = 8;
  std::size_t crop = 64;
  double sigma = 25;
  std::size_t epochs = 20;
  std::size_t iters_per_epoch = 10;
  std::uint64_t seed = 1;
  bool grad_clip = false;  // clip to global norm 1.0

  void validate(const ModelConfig& model) const;
};

struct SamplePair {
  Tensor clean;
  Tensor noisy;
};

/// (1/B) * ||target - pred||^2.
Var l2_loss(const Var& pred, const Var& target, std::size_t batch);

/// img + N(0, sigma^2) per element; sigma in image units.
Tensor awgn(const Tensor& img, double sigma, std::mt19937_64& rng);

/// Random crop_size x crop_size window of `img`.
Tensor random_crop(const Tensor& img, std::size_t crop_size, std::mt19937_64& rng);
/// Centered crop, or the whole image if it is smaller.
Tensor center_crop(const Tensor& img, std::size_t crop_size);

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update using each Parameter::grad.
void adam_step(ParameterList& params, AdamState& state, double lr, const AdamHyper& hyper = {});

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(ParameterList& params, double max_norm);

/// lr * 0.5^floor(epoch / halve_every).
double learning_rate_at(const TrainConfig& cfg, std::size_t epoch);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0;
  double mean_loss = 0;
  double val_psnr = 0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  std::vector<double> iteration_loss;
  // Loss of a fixed batch of training pairs before and after training.
  double initial_loss = 0;
  double final_loss = 0;
  double val_psnr_noisy = 0;  // PSNR(noisy, clean) over the validation set
  double val_psnr_final = 0;  // PSNR(restored, clean) after training
};

/// Mean loss of `model` over `pairs`, each pair counted with batch = pairs.size().
double batch_loss(Model& model, const std::vector<SamplePair>& pairs);

/// Mean PSNR of restored (clamped) outputs against the clean images.
double mean_restored_psnr(Model& model, const std::vector<SamplePair>& pairs);

/// Fixed-seed noisy copies of center crops of `images`.
std::vector<SamplePair> make_validation_pairs(const std::vector<Tensor>& images, const TrainConfig& cfg);

/// Trains `model` on random crops of `train_images` with AWGN. Each epoch
/// appends "epoch\tlr\tmean_loss\tval_psnr" to `log` when given. Throws
/// ConfigError on an empty training set and NumericError on a non-finite loss.
TrainResult train(Model& model, const std::vector<Tensor>& train_images,
                  const std::vector<Tensor>& val_images, const TrainConfig& cfg, std::ostream* log = nullptr);

std::string format_log_line(const EpochLog& e);

}  // namespace dagl
