#pragma once

#include <string>
#include <vector>

#include "marl/dataset.hpp"
#include "marl/model.hpp"

namespace marl {

enum class PretrainObjective { AgentCentric, ObserveAll };

struct PretrainConfig {
  PretrainObjective objective = PretrainObjective::AgentCentric;
  int batch_size = 32;
  double lr = 0.001;
  int eval_every = 500;   // optimizer steps between validation passes
  int patience = 10;      // evaluations without improvement before stopping
  double min_delta = 1e-3;
  int64_t max_steps = 100000;
  uint64_t seed = 0;
};

struct PretrainResult {
  Params best_params;
  double best_val_nll = 0;
  int64_t best_step = 0;
  int64_t stopped_step = 0;
  std::vector<std::pair<int64_t, double>> train_curve;  // (step, batch loss)
  std::vector<std::pair<int64_t, double>> val_curve;    // (step, validation loss)
};

// Unsupervised next-location training: Adam on the prediction-head NLL
// (or the observe-all mask BCE), evaluation on the validation split every
// eval_every steps, early stop on no improvement, best checkpoint returned.
PretrainResult pretrain(Model& model, const ObservationDataset& dataset,
                        const PretrainConfig& cfg);

// Eq.-3 style objective on plain distributions: mean of
// -log sigma_h[h] - log sigma_w[w]. Distributions must be normalized.
double agent_centric_nll(const TensorF& sigma_h, const TensorF& sigma_w,
                         std::span<const int> targets_h, std::span<const int> targets_w);

// Mean per-cell binary cross-entropy of axis mask logits against an
// occupancy target, both axes pooled.
double observe_all_loss(const TensorF& logits_h, const TensorF& logits_w,
                        std::span<const ObserveAllTarget> targets);

}  // namespace marl
