#include "marl/match.hpp"

#include <algorithm>
#include <atomic>
#include <ostream>
#include <sstream>
#include <thread>

#include "marl/observation.hpp"
#include "marl/parallel.hpp"
#include "marl/rollout.hpp"

namespace marl {

TeamPolicy TeamPolicy::from_model(std::string id, Model model) {
  return TeamPolicy{std::move(id), Kind::Checkpoint,
                    std::make_shared<const Model>(std::move(model))};
}
TeamPolicy TeamPolicy::scripted_chase(std::string id) {
  return TeamPolicy{std::move(id), Kind::ScriptedChase, nullptr};
}
TeamPolicy TeamPolicy::scripted_idle(std::string id) {
  return TeamPolicy{std::move(id), Kind::ScriptedIdle, nullptr};
}

namespace {

// Controls one side of a match. Policy sides keep their own frame history
// over the (mirrored) states they observe.
class SideController {
 public:
  SideController(const TeamPolicy& policy, const MiniPitchEnv& env, bool away, bool sampled,
                 uint64_t seed)
      : policy_(&policy),
        env_(&env),
        away_(away),
        sampled_(sampled),
        rng_(seed, away ? 0xA17ULL : 0xB17ULL) {
    if (policy.kind == TeamPolicy::Kind::Checkpoint) {
      MARL_CHECK(policy.model != nullptr, "checkpoint policy without a model");
      const MamdpSpec& spec = env.spec();
      MARL_CHECK(policy.model->cfg.height == spec.height &&
                     policy.model->cfg.width == spec.width &&
                     policy.model->cfg.num_agents == spec.num_agents &&
                     policy.model->cfg.action_count == spec.action_count,
                 "parameter set incompatible with the env spec (model ",
                 policy.model->cfg.height, "x", policy.model->cfg.width, ", env ", spec.height,
                 "x", spec.width, ")");
      eval_ = std::make_unique<Evaluator>(*policy.model);
    }
  }

  std::vector<int> act(const EnvState& state) {
    const MamdpSpec& spec = env_->spec();
    const int n = spec.num_agents;
    std::vector<int> actions(static_cast<size_t>(n), int(kPitchIdle));
    switch (policy_->kind) {
      case TeamPolicy::Kind::ScriptedIdle:
        break;
      case TeamPolicy::Kind::ScriptedChase: {
        if (away_) {
          actions = env_->scripted_away_actions(state, rng_);
        } else {
          // chase-and-clear for the home side via the mirrored view
          EnvState m = env_->mirror_state(state);
          std::vector<int> mirrored = env_->scripted_away_actions(m, rng_);
          for (int i = 0; i < n; ++i)
            actions[size_t(i)] = MiniPitchEnv::mirror_action(mirrored[size_t(i)]);
        }
        break;
      }
      case TeamPolicy::Kind::Checkpoint: {
        const EnvState view = away_ ? env_->mirror_state(state) : state;
        recent_.push_back(view);
        if (int(recent_.size()) > kObsStack) recent_.erase(recent_.begin());
        std::vector<Observation> obs;
        obs.reserve(size_t(n));
        for (int i = 0; i < n; ++i) obs.push_back(encode_observation(*env_, recent_, i));
        TensorF batch = observations_to_batch(obs, spec.height, spec.width);
        ForwardValues v = (*eval_)(batch, 1);
        for (int i = 0; i < n; ++i) {
          const float* row = v.policy_logits.ptr() + size_t(i) * spec.action_count;
          int a = sampled_ ? sample_action(row, spec.action_count, rng_)
                           : argmax_action(row, spec.action_count);
          actions[size_t(i)] = away_ ? MiniPitchEnv::mirror_action(a) : a;
        }
        break;
      }
    }
    return actions;
  }

  void on_goal() { recent_.clear(); }

 private:
  const TeamPolicy* policy_;
  const MiniPitchEnv* env_;
  bool away_, sampled_;
  RngStream rng_;
  std::unique_ptr<Evaluator> eval_;
  std::vector<EnvState> recent_;
};

}  // namespace

MatchResult run_match(const TeamPolicy& home, const TeamPolicy& away, const MiniPitchEnv& env,
                      uint64_t seed, bool sampled) {
  MARL_CHECK(env.config().away_agents == env.spec().num_agents,
             "two-team play needs equal team sizes");
  SideController hc(home, env, /*away=*/false, sampled, seed);
  SideController ac(away, env, /*away=*/true, sampled, seed ^ 0x5DEECE66DULL);

  EnvState state = env.reset(seed);
  bool terminal = false;
  while (!terminal) {
    const int goals_before = state.goals_home + state.goals_away;
    std::vector<int> home_actions = hc.act(state);
    std::vector<int> away_actions = ac.act(state);
    StepResult res = env.step_two_team(state, home_actions, away_actions);
    terminal = res.terminal;
    state = std::move(res.next);
    if (state.goals_home + state.goals_away != goals_before) {
      // kickoff: frame histories restart like a fresh observation
      hc.on_goal();
      ac.on_goal();
    }
  }

  MatchResult r;
  r.home = home.id;
  r.away = away.id;
  r.seed = seed;
  r.score_diff = state.goals_home - state.goals_away;
  r.outcome = r.score_diff > 0   ? MatchResult::Outcome::Win
              : r.score_diff < 0 ? MatchResult::Outcome::Loss
                                 : MatchResult::Outcome::Tie;
  return r;
}

TournamentResult tournament(const std::vector<TeamPolicy>& agents, int matches_per_pair,
                            const MiniPitchEnv& env, uint64_t base_seed, bool sampled,
                            int workers) {
  MARL_CHECK(agents.size() >= 2, "a tournament needs at least 2 agents");
  MARL_CHECK(matches_per_pair >= 1, "matches_per_pair must be positive");
  const size_t n = agents.size();

  struct Job {
    uint32_t row, col, game;
  };
  std::vector<Job> jobs;
  for (uint32_t row = 0; row < n; ++row)
    for (uint32_t col = 0; col < n; ++col) {
      if (row == col) continue;
      for (int g = 0; g < matches_per_pair; ++g) jobs.push_back({row, col, uint32_t(g)});
    }

  TournamentResult out;
  for (const auto& a : agents) out.ids.push_back(a.id);
  out.matches.resize(jobs.size());
  out.grid.assign(n * n, PairCell{});

  auto play = [&](const Job& job) {
    const uint64_t seed = base_seed ^ fnv1a(&job, sizeof(Job), 0x9E3779B97F4A7C15ULL);
    return run_match(agents[job.row], agents[job.col], env, seed, sampled);
  };

  const int n_workers = workers > 0 ? workers : compute_threads();
  if (n_workers <= 1 || jobs.size() < 2) {
    for (size_t j = 0; j < jobs.size(); ++j) out.matches[j] = play(jobs[j]);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < n_workers; ++w)
      pool.emplace_back([&] {
        for (size_t j = next.fetch_add(1); j < jobs.size(); j = next.fetch_add(1))
          out.matches[j] = play(jobs[j]);
      });
    for (auto& t : pool) t.join();
  }

  for (size_t j = 0; j < jobs.size(); ++j) {
    PairCell& cell = out.grid[size_t(jobs[j].row) * n + jobs[j].col];
    switch (out.matches[j].outcome) {
      case MatchResult::Outcome::Win: cell.wins++; break;
      case MatchResult::Outcome::Tie: cell.ties++; break;
      case MatchResult::Outcome::Loss: cell.losses++; break;
    }
  }
  return out;
}

std::string format_tournament_grid(const TournamentResult& result) {
  const size_t n = result.ids.size();
  size_t width = 10;
  for (const auto& id : result.ids) width = std::max(width, id.size() + 2);
  std::ostringstream os;
  os << std::string(width, ' ');
  for (const auto& id : result.ids) os << id << std::string(width - id.size(), ' ');
  os << "\n";
  for (size_t row = 0; row < n; ++row) {
    os << result.ids[row] << std::string(width - result.ids[row].size(), ' ');
    for (size_t col = 0; col < n; ++col) {
      std::string cell = "-";
      if (row != col) {
        const PairCell& c = result.cell(row, col);
        cell = std::to_string(c.wins) + "/" + std::to_string(c.ties) + "/" +
               std::to_string(c.losses);
      }
      os << cell << std::string(width > cell.size() ? width - cell.size() : 1, ' ');
    }
    os << "\n";
  }
  return os.str();
}

void write_match_records(std::ostream& os, const TournamentResult& result) {
  for (const auto& m : result.matches) {
    const char* outcome = m.outcome == MatchResult::Outcome::Win    ? "win"
                          : m.outcome == MatchResult::Outcome::Loss ? "loss"
                                                                    : "tie";
    os << "{\"home\":\"" << m.home << "\",\"away\":\"" << m.away
       << "\",\"score_diff\":" << m.score_diff << ",\"outcome\":\"" << outcome
       << "\",\"seed\":" << m.seed << "}\n";
  }
}

int64_t attention_dump(const Model& model, const Env& env, uint64_t seed, int64_t steps,
                       std::ostream& os) {
  MARL_CHECK(model.cfg.kind == ModelKind::Acnn,
             "attention dump needs an attention model; this checkpoint is a CNN");
  const MamdpSpec& spec = env.spec();
  Evaluator eval(model);
  EnvState state = env.reset(seed);
  std::vector<EnvState> recent{state};
  int64_t written = 0;
  os.precision(9);  // full float precision; row sums must survive the text form
  for (int64_t t = 0; t < steps && state.step_index < spec.episode_len; ++t) {
    std::vector<Observation> obs;
    for (int i = 0; i < spec.num_agents; ++i)
      obs.push_back(encode_observation(env, recent, i));
    TensorF batch = observations_to_batch(obs, spec.height, spec.width);
    ForwardValues v = eval(batch, 1);
    for (size_t h = 0; h < v.attn_weights.size(); ++h) {
      os << "{\"step\":" << t << ",\"head\":" << h << ",\"weights\":[";
      const TensorF& w = v.attn_weights[h];
      for (int64_t i = 0; i < w.size(); ++i) {
        if (i) os << ",";
        os << w.data[size_t(i)];
      }
      os << "],\"positions\":[";
      for (int i = 0; i < spec.num_agents; ++i) {
        if (i) os << ",";
        os << "[" << state.agents[size_t(i)].row << "," << state.agents[size_t(i)].col << "]";
      }
      os << "]}\n";
    }
    ++written;
    std::vector<int> actions;
    for (int i = 0; i < spec.num_agents; ++i) {
      const float* row = v.policy_logits.ptr() + size_t(i) * spec.action_count;
      actions.push_back(argmax_action(row, spec.action_count));
    }
    StepResult res = env.step(state, actions);
    if (res.terminal) break;
    state = std::move(res.next);
    recent.push_back(state);
    if (int(recent.size()) > kObsStack) recent.erase(recent.begin());
  }
  return written;
}

}  // namespace marl
