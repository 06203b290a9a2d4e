#pragma once

#include <memory>

#include "marl/env.hpp"
#include "marl/model.hpp"
#include "marl/trajectory.hpp"

namespace marl {

// Owns one environment instance and collects fixed-length unrolls under a
// parameter snapshot (the behavior policy of everything it emits). Episodes
// continue across unrolls; the env auto-resets at episode end with a fresh
// seed split from (run seed, worker id, episode counter).
class RolloutWorker {
 public:
  RolloutWorker(const Env& env, uint64_t run_seed, uint64_t worker_id);

  Trajectory collect(const Model& snapshot, int unroll, bool greedy = false);

  // Team returns of recently finished episodes (capped window).
  const std::vector<float>& recent_returns() const { return recent_returns_; }
  int64_t episodes_completed() const { return episode_counter_; }

  // Step-level pieces, shared by collect() and the batched collector.
  Trajectory make_empty(int unroll) const;
  void encode_observations(std::vector<Observation>& out);
  void advance(const float* policy_logits, Trajectory& traj, int t, bool greedy);
  void append_bootstrap(Trajectory& traj);

 private:
  void start_episode();

  const Env* env_;
  uint64_t run_seed_, worker_id_;
  int64_t episode_counter_ = 0;
  EnvState state_;
  std::vector<EnvState> recent_states_;
  RngStream action_rng_;
  double episode_return_ = 0.0;
  std::vector<float> recent_returns_;
};

// Samples an action index from softmax(logits row) with the caller's stream.
int sample_action(const float* logits, int n, RngStream& rng);
int argmax_action(const float* logits, int n);

// Plays full episodes under a checkpoint policy and writes action-free
// replays (the baseline-run replay source for observation datasets).
std::vector<std::string> record_policy_replays(const Env& env, const Model& model,
                                               const std::string& out_dir, int episodes,
                                               uint64_t seed, bool greedy = false);

// Steps all workers in lockstep so each env step costs one batched forward
// pass instead of one per worker. Produces bitwise the same trajectories as
// collecting the workers one by one (every kernel is row/group local).
std::vector<Trajectory> collect_batch(std::vector<std::unique_ptr<RolloutWorker>>& workers,
                                      const Model& snapshot, int unroll);

}  // namespace marl
