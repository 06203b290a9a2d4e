#include "marl/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "marl/replay.hpp"

namespace marl {

int sample_action(const float* logits, int n, RngStream& rng) {
  // stable softmax, then inverse-CDF draw
  float mx = logits[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, logits[j]);
  double z = 0;
  for (int j = 0; j < n; ++j) z += std::exp(double(logits[j]) - mx);
  const double u = rng.next_double() * z;
  double acc = 0;
  for (int j = 0; j < n; ++j) {
    acc += std::exp(double(logits[j]) - mx);
    if (u < acc) return j;
  }
  return n - 1;
}

int argmax_action(const float* logits, int n) {
  int best = 0;
  for (int j = 1; j < n; ++j)
    if (logits[j] > logits[best]) best = j;
  return best;
}

RolloutWorker::RolloutWorker(const Env& env, uint64_t run_seed, uint64_t worker_id)
    : env_(&env),
      run_seed_(run_seed),
      worker_id_(worker_id),
      action_rng_(run_seed, 0xAC7ULL * (worker_id + 1)) {
  start_episode();
}

void RolloutWorker::start_episode() {
  RngStream seeder(run_seed_ ^ 0x9E3779B97F4A7C15ULL,
                   worker_id_ * 65537ULL + uint64_t(episode_counter_));
  state_ = env_->reset(seeder.next_u64());
  recent_states_.clear();
  recent_states_.push_back(state_);
  episode_return_ = 0.0;
}

Trajectory RolloutWorker::make_empty(int unroll) const {
  const MamdpSpec& spec = env_->spec();
  Trajectory traj;
  traj.num_agents = spec.num_agents;
  traj.length = unroll;
  traj.height = spec.height;
  traj.width = spec.width;
  traj.obs.reserve(size_t(unroll + 1) * spec.num_agents);
  traj.boundary.assign(size_t(unroll), 0);
  return traj;
}

void RolloutWorker::encode_observations(std::vector<Observation>& out) {
  for (int i = 0; i < env_->spec().num_agents; ++i)
    out.push_back(encode_observation(*env_, recent_states_, i));
}

void RolloutWorker::advance(const float* policy_logits, Trajectory& traj, int t, bool greedy) {
  const MamdpSpec& spec = env_->spec();
  const int n = spec.num_agents;
  std::vector<int> actions(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const float* row = policy_logits + size_t(i) * spec.action_count;
    const int a = greedy ? argmax_action(row, spec.action_count)
                         : sample_action(row, spec.action_count, action_rng_);
    actions[size_t(i)] = a;
    traj.actions.push_back(a);
    traj.log_mu.push_back(log_softmax_at(row, spec.action_count, a));
  }

  StepResult res = env_->step(state_, actions);
  episode_return_ += double(res.team_reward);
  for (int i = 0; i < n; ++i) {
    traj.rewards.push_back(res.rewards[size_t(i)]);
    traj.target_h.push_back(res.next.agents[size_t(i)].row);
    traj.target_w.push_back(res.next.agents[size_t(i)].col);
    traj.target_valid.push_back(res.terminal ? 0 : 1);
  }

  if (res.terminal) {
    traj.boundary[size_t(t)] = 1;
    traj.episode_returns.push_back(float(episode_return_));
    recent_returns_.push_back(float(episode_return_));
    if (recent_returns_.size() > 32) recent_returns_.erase(recent_returns_.begin());
    ++episode_counter_;
    start_episode();
  } else {
    state_ = std::move(res.next);
    recent_states_.push_back(state_);
    if (int(recent_states_.size()) > kObsStack) recent_states_.erase(recent_states_.begin());
  }
}

void RolloutWorker::append_bootstrap(Trajectory& traj) {
  encode_observations(traj.obs);
}

Trajectory RolloutWorker::collect(const Model& snapshot, int unroll, bool greedy) {
  const MamdpSpec& spec = env_->spec();
  Trajectory traj = make_empty(unroll);
  Evaluator eval(snapshot);
  std::vector<Observation> step_obs;
  for (int t = 0; t < unroll; ++t) {
    step_obs.clear();
    encode_observations(step_obs);
    TensorF batch = observations_to_batch(step_obs, spec.height, spec.width);
    ForwardValues v = eval(batch, 1);
    for (auto& o : step_obs) traj.obs.push_back(std::move(o));
    advance(v.policy_logits.ptr(), traj, t, greedy);
  }
  append_bootstrap(traj);
  traj.validate();
  return traj;
}

std::vector<Trajectory> collect_batch(std::vector<std::unique_ptr<RolloutWorker>>& workers,
                                      const Model& snapshot, int unroll) {
  MARL_CHECK(!workers.empty(), "no rollout workers");
  const int n = snapshot.cfg.num_agents;
  const int w_count = int(workers.size());
  std::vector<Trajectory> out;
  out.reserve(size_t(w_count));
  for (auto& w : workers) out.push_back(w->make_empty(unroll));

  Evaluator eval(snapshot);
  std::vector<Observation> step_obs;
  for (int t = 0; t < unroll; ++t) {
    step_obs.clear();
    for (auto& w : workers) w->encode_observations(step_obs);
    TensorF batch = observations_to_batch(step_obs, snapshot.cfg.height, snapshot.cfg.width);
    ForwardValues v = eval(batch, w_count);
    for (int wi = 0; wi < w_count; ++wi) {
      for (int i = 0; i < n; ++i)
        out[size_t(wi)].obs.push_back(std::move(step_obs[size_t(wi) * n + i]));
      workers[size_t(wi)]->advance(
          v.policy_logits.ptr() + size_t(wi) * n * snapshot.cfg.action_count, out[size_t(wi)],
          t, false);
    }
  }
  for (int wi = 0; wi < w_count; ++wi) {
    workers[size_t(wi)]->append_bootstrap(out[size_t(wi)]);
    out[size_t(wi)].validate();
  }
  return out;
}

std::vector<std::string> record_policy_replays(const Env& env, const Model& model,
                                               const std::string& out_dir, int episodes,
                                               uint64_t seed, bool greedy) {
  std::filesystem::create_directories(out_dir);
  const MamdpSpec& spec = env.spec();
  const int n = spec.num_agents;
  Evaluator eval(model);
  RngStream action_rng(seed, 0x9101ULL);
  std::vector<std::string> paths;
  for (int ep = 0; ep < episodes; ++ep) {
    const std::string path =
        out_dir + "/policy_" + std::to_string(seed) + "_" + std::to_string(ep) + ".rpl";
    ReplayWriter writer(path, env, /*with_actions=*/false);
    EnvState state = env.reset(seed * 7919ULL + uint64_t(ep));
    std::vector<EnvState> recent{state};
    std::vector<int> actions(static_cast<size_t>(n));
    for (int t = 0; t < spec.episode_len; ++t) {
      std::vector<Observation> obs;
      for (int i = 0; i < n; ++i) obs.push_back(encode_observation(env, recent, i));
      TensorF batch = observations_to_batch(obs, spec.height, spec.width);
      ForwardValues v = eval(batch, 1);
      for (int i = 0; i < n; ++i) {
        const float* row = v.policy_logits.ptr() + size_t(i) * spec.action_count;
        actions[size_t(i)] = greedy ? argmax_action(row, spec.action_count)
                                    : sample_action(row, spec.action_count, action_rng);
      }
      StepResult res = env.step(state, actions);
      writer.add_step(state, actions, res.rewards);
      state = std::move(res.next);
      recent.push_back(state);
      if (int(recent.size()) > kObsStack) recent.erase(recent.begin());
    }
    writer.finish();
    paths.push_back(path);
  }
  return paths;
}

}  // namespace marl
