#pragma once

#include "ssse/models.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace ssse {

struct LrStep {
  int epoch = 0;        // multiply the rate by `factor` from this epoch (0-based) on
  double factor = 1.0;
};

/// SGD with heavy-ball momentum: v <- momentum * v + g, theta <- theta - lr * v.
///
/// Full-batch runs (batch_size >= n) with momentum = 0 decrease the loss every
/// epoch when lr <= 1 / (max_i ||x_i||^2 / 2 + l2) for the linear models.
struct TrainConfig {
  double lr = 0.1;
  double momentum = 0.9;
  int epochs = 100;
  Index batch_size = 32;
  std::uint64_t seed = 0;
  double grad_tol = 1e-5;  // stop once ||grad L|| <= grad_tol (checked per epoch)
  std::vector<LrStep> lr_schedule;  // empty: fixed rate

  void validate() const;
  double rate_at(int epoch) const;
};

struct TrainResult {
  ModelParams params;
  int epochs_run = 0;
  double final_loss = 0.0;
  double final_grad_norm = 0.0;
  std::vector<double> epoch_losses;
  std::vector<std::string> warnings;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per entry, drawn from `seed`.
ModelParams init_params(const ModelShape& shape, std::uint64_t seed);

TrainResult train(const Dataset& data, const ModelShape& shape, const LossConfig& loss_cfg,
                  const TrainConfig& cfg);

/// `train` on data without `removed_ids`, same seed and initialisation.
TrainResult retrain_scratch(const Dataset& data, std::span<const SampleId> removed_ids,
                            const ModelShape& shape, const LossConfig& loss_cfg,
                            const TrainConfig& cfg);

/// Model file: parameters together with the loss configuration they were
/// trained under.
struct ModelFile {
  ModelParams params;
  LossConfig loss;
};

std::vector<std::uint8_t> encode_model(const ModelFile& model);
ModelFile decode_model(const std::vector<std::uint8_t>& bytes);
void save_model(const ModelFile& model, const std::filesystem::path& path);
ModelFile load_model(const std::filesystem::path& path);

}  // namespace ssse
