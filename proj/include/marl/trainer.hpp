#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "marl/adam.hpp"
#include "marl/env.hpp"
#include "marl/loss.hpp"
#include "marl/model.hpp"
#include "marl/rollout.hpp"
#include "marl/trajectory.hpp"
#include "marl/vtrace.hpp"

namespace marl {

struct TrainerConfig {
  std::string env_kind = "cleanup";
  CleanupConfig cleanup;
  MiniPitchConfig minipitch;

  ModelKind model_kind = ModelKind::Cnn;
  TransferMode transfer = TransferMode::Scratch;
  std::string init_checkpoint;  // required for init/progressive

  AdamConfig adam;
  LossCoeffs coeffs;
  VTraceConfig vtrace;
  int unroll = 32;
  int batch_size = 16;
  int64_t frame_budget = 2'000'000;
  uint64_t seed = 0;

  int actors = 0;  // 0 = deterministic single-threaded collection
  std::string metrics_path;
  std::string out_dir;
  int checkpoint_every = 0;  // optimizer steps between snapshots; 0 = final only
};

struct StepMetrics {
  int64_t step = 0;
  int64_t frames = 0;
  double mean_episode_return = 0;
  LossBreakdown loss;
  double lr = 0;
  double c_aux = 0;
  uint64_t seed = 0;
  bool skipped = false;  // non-finite loss/gradients
};

// V-trace actor-critic learner. Collects unrolls under the latest parameter
// snapshot, computes off-policy corrected targets against the current
// policy, and applies one Adam step per batch.
class Trainer {
 public:
  explicit Trainer(TrainerConfig cfg);

  const TrainerConfig& config() const { return cfg_; }
  const Env& env() const { return *env_; }
  Model& model() { return model_; }
  int64_t frames() const { return frames_; }
  int64_t steps() const { return steps_; }
  int64_t nan_skips() const { return nan_skips_; }

  // One gradient step on an assembled batch; exposed for tests.
  StepMetrics train_step(const std::vector<Trajectory>& batch);

  // Full training loop to the frame budget: collection, updates, metrics
  // stream, checkpoints. Returns the metrics of every step.
  std::vector<StepMetrics> run();

  // Stable line format of the metrics stream.
  static std::string metrics_line(const StepMetrics& m);

 private:
  void run_single(std::vector<StepMetrics>& history, std::ostream* metrics_out);
  void run_threaded(std::vector<StepMetrics>& history, std::ostream* metrics_out);
  void maybe_checkpoint(bool final);
  double pooled_recent_return() const;

  TrainerConfig cfg_;
  std::unique_ptr<Env> env_;
  Model model_;
  std::unique_ptr<Adam<float>> opt_;
  std::vector<std::unique_ptr<RolloutWorker>> workers_;
  std::vector<float> threaded_returns_;  // episode returns seen by the learner
  int64_t frames_ = 0;
  int64_t steps_ = 0;
  int64_t nan_skips_ = 0;
  int64_t checkpoints_written_ = 0;
};

// Builds the model input config for an env under the default architecture.
ModelConfig model_config_for_env(const Env& env, ModelKind kind);

// Resolves scratch/init/progressive into a ready-to-train model.
Model build_transfer_model(const ModelConfig& cfg, TransferMode mode,
                           const std::string& checkpoint_path, uint64_t seed,
                           std::vector<std::string>* warnings = nullptr);

}  // namespace marl
