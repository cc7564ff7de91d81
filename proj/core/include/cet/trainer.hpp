#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cet/dataset.hpp"
#include "cet/model.hpp"
#include "cet/neighbors.hpp"
#include "cet/objective.hpp"

namespace cet {

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double w0 = 0.7;
  int K = 5;
  double theta = 1.0;
  LossMode loss_mode = LossMode::MixtureLog;
  double weight_decay = 1e-2;
  double grad_clip_norm = 1.0;
  std::uint64_t seed = 0;
};

void validate_train_config(const TrainConfig& cfg);

// Adam moments (beta1=0.9, beta2=0.999, eps=1e-8).
struct OptimizerState {
  ParamGrads m;
  ParamGrads v;
  std::uint64_t step = 0;

  static OptimizerState for_params(const ScorerParams& p);
};

// If the global L2 norm exceeds max_norm, scale all entries by max_norm/norm.
void clip_gradients(ParamGrads& grads, double max_norm);

// Bias-corrected Adam update followed by decoupled weight decay
// p <- p - lr * weight_decay * p.
void optimizer_step(ScorerParams& params, const ParamGrads& grads,
                    OptimizerState& state, double lr, double weight_decay);

struct TrainHistory {
  std::vector<double> train_loss;    // per epoch, mean over groups
  std::vector<double> dev_accuracy;  // per epoch
  std::size_t selected_epoch = 0;    // argmax dev accuracy, earliest on ties
};

struct TrainResult {
  ScorerParams params;  // checkpoint of the selected epoch
  TrainHistory history;
};

// One fixed-epoch run: shuffle group order per epoch from cfg.seed, batch,
// clip, step, evaluate dev, return the best-dev checkpoint.
TrainResult train(const ScorerParams& init, std::span<const NeighborGroup> groups,
                  const QaDataset& train_ds, const QaDataset& dev_ds,
                  const TrainConfig& cfg);

// Fraction of samples whose highest-scoring option is the gold one
// (ties resolved toward the lowest option index).
double evaluate(const ScorerParams& params, const QaDataset& ds);

}  // namespace cet
