#include <algorithm>
#include <cmath>

#include "marl/env.hpp"

namespace marl {

void MiniPitchConfig::validate() const {
  spec.validate();
  MARL_CONFIG_CHECK(spec.action_count == 8, "minipitch uses 8 actions, got ", spec.action_count);
  MARL_CONFIG_CHECK(away_agents >= 1, "minipitch needs at least one away agent");
  MARL_CONFIG_CHECK(shoot_range >= 1 && shoot_range < spec.width, "bad shoot range");
  MARL_CONFIG_CHECK(p_shoot >= 0 && p_shoot <= 1 && p_pass >= 0 && p_pass <= 1 &&
                        p_tackle >= 0 && p_tackle <= 1,
                    "minipitch probabilities out of range");
  MARL_CONFIG_CHECK(spec.height >= 4 && spec.width >= 8, "pitch too small");
}

MiniPitchEnv::MiniPitchEnv(MiniPitchConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

namespace {

GridPos agent_pos(const EnvState& s, int global_idx, int n_home) {
  return global_idx < n_home ? s.agents[size_t(global_idx)]
                             : s.opponents[size_t(global_idx - n_home)];
}

void set_agent_pos(EnvState& s, int global_idx, int n_home, GridPos p) {
  if (global_idx < n_home)
    s.agents[size_t(global_idx)] = p;
  else
    s.opponents[size_t(global_idx - n_home)] = p;
}

GridPos ball_pos(const EnvState& s, int n_home) {
  return s.possessor >= 0 ? agent_pos(s, s.possessor, n_home) : s.ball;
}

}  // namespace

EnvState MiniPitchEnv::reset(uint64_t seed) const {
  EnvState s;
  s.rng = RngStream(seed, 0x7069746368ULL);
  const int h = cfg_.spec.height, w = cfg_.spec.width;
  const int n = cfg_.spec.num_agents, m = cfg_.away_agents;
  // Kickoff: teams on opposite halves, ball free at center.
  for (int i = 0; i < n; ++i)
    s.agents.push_back({(i + 1) * h / (n + 1), w / 4});
  for (int j = 0; j < m; ++j)
    s.opponents.push_back({(j + 1) * h / (m + 1), w - 1 - w / 4});
  s.ball = {h / 2, w / 2};
  s.possessor = -1;
  return s;
}

std::vector<int> MiniPitchEnv::scripted_away_actions(const EnvState& s, RngStream& rng) const {
  const int n = cfg_.spec.num_agents, m = cfg_.away_agents;
  const int w = cfg_.spec.width, h = cfg_.spec.height;
  const GridPos ball = ball_pos(s, n);
  std::vector<int> actions(size_t(m), kPitchIdle);

  int chaser = -1, chaser_d = 1 << 30;
  for (int j = 0; j < m; ++j) {
    const GridPos p = s.opponents[size_t(j)];
    const int d = std::abs(p.row - ball.row) + std::abs(p.col - ball.col);
    if (d < chaser_d) {
      chaser_d = d;
      chaser = j;
    }
  }

  auto occupied = [&](int row, int col) {
    if (row < 0 || row >= h || col < 0 || col >= w) return true;
    for (const auto& p : s.agents)
      if (p.row == row && p.col == col) return true;
    for (const auto& p : s.opponents)
      if (p.row == row && p.col == col) return true;
    return false;
  };
  auto apply = [&](GridPos from, int action) {
    GridPos t = from;
    if (action == kPitchUp) t.row -= 1;
    else if (action == kPitchDown) t.row += 1;
    else if (action == kPitchLeft) t.col -= 1;
    else if (action == kPitchRight) t.col += 1;
    return t;
  };
  // Straight-line move with a side-step around an occupied cell.
  auto move_toward = [&](GridPos from, GridPos to) -> int {
    const int dr = to.row - from.row, dc = to.col - from.col;
    if (dr == 0 && dc == 0) return kPitchIdle;
    const bool row_first = std::abs(dr) > std::abs(dc) ||
                           (std::abs(dr) == std::abs(dc) && rng.bernoulli(0.5));
    int first = kPitchIdle, second = kPitchIdle;
    if (dr != 0 && (dc == 0 || row_first)) {
      first = dr < 0 ? kPitchUp : kPitchDown;
      if (dc != 0) second = dc < 0 ? kPitchLeft : kPitchRight;
    } else {
      first = dc < 0 ? kPitchLeft : kPitchRight;
      if (dr != 0) second = dr < 0 ? kPitchUp : kPitchDown;
    }
    GridPos ft = apply(from, first);
    if (!occupied(ft.row, ft.col) || (ft == to && s.possessor < 0)) return first;
    if (second != kPitchIdle) {
      GridPos st = apply(from, second);
      if (!occupied(st.row, st.col)) return second;
    }
    // both preferred moves blocked: dodge perpendicular
    const int dodge = rng.bernoulli(0.5) ? kPitchUp : kPitchDown;
    GridPos dt = apply(from, dodge);
    if (!occupied(dt.row, dt.col)) return dodge;
    return kPitchIdle;
  };

  for (int j = 0; j < m; ++j) {
    const GridPos me = s.opponents[size_t(j)];
    const int global = n + j;
    if (s.possessor == global) {
      // Carrier: shoot from the away zone, otherwise advance on the left goal.
      if (me.col < cfg_.shoot_range)
        actions[size_t(j)] = kPitchShoot;
      else if (me.col > 0)
        actions[size_t(j)] = move_toward(me, {h / 2, 0});
      continue;
    }
    if (s.possessor >= n) {
      // Teammate has it: fall back toward the defended half.
      actions[size_t(j)] = move_toward(me, {(j + 1) * h / (m + 1), w - 1 - w / 4});
      continue;
    }
    // Ball is free or held by home: nearest agent chases; adjacent to an
    // enemy carrier it tackles; the rest hold a line in front of the goal.
    const bool adjacent_to_carrier =
        s.possessor >= 0 && s.possessor < n &&
        std::abs(me.row - ball.row) + std::abs(me.col - ball.col) == 1;
    if (adjacent_to_carrier)
      actions[size_t(j)] = kPitchTackle;
    else if (j == chaser)
      actions[size_t(j)] = move_toward(me, ball);
    else
      actions[size_t(j)] = move_toward(me, {(j + 1) * h / (m + 1), w - 1 - w / 6});
  }
  return actions;
}

StepResult MiniPitchEnv::step_impl(const EnvState& state, std::span<const int> home_actions,
                                   const std::vector<int>* away_actions) const {
  const int n = cfg_.spec.num_agents, m = cfg_.away_agents;
  const int h = cfg_.spec.height, w = cfg_.spec.width;
  MARL_CHECK(int(home_actions.size()) == n, "expected ", n, " home actions, got ",
             home_actions.size());
  MARL_CHECK(int(state.agents.size()) == n && int(state.opponents.size()) == m &&
                 state.step_index < cfg_.spec.episode_len,
             "stale or foreign state passed to minipitch step");
  for (int a : home_actions)
    MARL_CHECK(a >= 0 && a < cfg_.spec.action_count, "invalid minipitch action index ", a);

  StepResult out;
  out.rewards.assign(size_t(n), 0.0f);
  out.next = state;
  EnvState& s = out.next;

  std::vector<int> away = away_actions ? *away_actions : scripted_away_actions(s, s.rng);
  MARL_CHECK(int(away.size()) == m, "expected ", m, " away actions, got ", away.size());
  for (int a : away)
    MARL_CHECK(a >= 0 && a < cfg_.spec.action_count, "invalid minipitch action index ", a);

  auto action_of = [&](int g) { return g < n ? home_actions[size_t(g)] : away[size_t(g - n)]; };
  const int total = n + m;

  // 1. Moves, home agents first; occupied cells and walls block.
  std::vector<uint8_t> occupied(size_t(h) * w, 0);
  for (int g = 0; g < total; ++g) {
    const GridPos p = agent_pos(s, g, n);
    occupied[size_t(p.row) * w + p.col] = 1;
  }
  for (int g = 0; g < total; ++g) {
    const int a = action_of(g);
    int dr = 0, dc = 0;
    if (a == kPitchUp) dr = -1;
    else if (a == kPitchDown) dr = 1;
    else if (a == kPitchLeft) dc = -1;
    else if (a == kPitchRight) dc = 1;
    else continue;
    const GridPos cur = agent_pos(s, g, n);
    GridPos t{cur.row + dr, cur.col + dc};
    if (t.row < 0 || t.row >= h || t.col < 0 || t.col >= w) continue;
    if (occupied[size_t(t.row) * w + t.col]) continue;
    occupied[size_t(cur.row) * w + cur.col] = 0;
    occupied[size_t(t.row) * w + t.col] = 1;
    set_agent_pos(s, g, n, t);
  }

  // 2. Free-ball pickup: first agent (home priority) standing on the ball.
  if (s.possessor < 0) {
    for (int g = 0; g < total; ++g) {
      if (agent_pos(s, g, n) == s.ball) {
        s.possessor = g;
        break;
      }
    }
  }

  // 3. Tackles against an adjacent enemy carrier.
  if (s.possessor >= 0) {
    for (int g = 0; g < total; ++g) {
      if (action_of(g) != kPitchTackle || s.possessor < 0) continue;
      const bool enemy = (g < n) != (s.possessor < n);
      if (!enemy) continue;
      const GridPos me = agent_pos(s, g, n);
      const GridPos carrier = agent_pos(s, s.possessor, n);
      if (std::abs(me.row - carrier.row) + std::abs(me.col - carrier.col) != 1) continue;
      if (s.rng.bernoulli(cfg_.p_tackle)) s.possessor = g;
    }
  }

  // 4. Pass to the nearest teammate; a failed pass drops the ball midway.
  if (s.possessor >= 0 && action_of(s.possessor) == kPitchPass) {
    const int carrier = s.possessor;
    const bool home_side = carrier < n;
    const int lo = home_side ? 0 : n, hi = home_side ? n : total;
    const GridPos cp = agent_pos(s, carrier, n);
    int mate = -1, mate_d = 1 << 30;
    for (int g = lo; g < hi; ++g) {
      if (g == carrier) continue;
      const GridPos p = agent_pos(s, g, n);
      const int d = std::abs(p.row - cp.row) + std::abs(p.col - cp.col);
      if (d < mate_d) {
        mate_d = d;
        mate = g;
      }
    }
    if (mate >= 0) {
      if (s.rng.bernoulli(cfg_.p_pass)) {
        s.possessor = mate;
      } else {
        const GridPos mp = agent_pos(s, mate, n);
        s.possessor = -1;
        s.ball = {(cp.row + mp.row) / 2, (cp.col + mp.col) / 2};
      }
    }
  }

  // 5. Shoot: from the zone it scores with p_shoot; from outside it clears
  //    the ball toward the attacked goal.
  bool home_scored = false, away_scored = false;
  if (s.possessor >= 0 && action_of(s.possessor) == kPitchShoot) {
    const int carrier = s.possessor;
    const bool home_side = carrier < n;
    const GridPos cp = agent_pos(s, carrier, n);
    const int goal_col = home_side ? w - 1 : 0;
    const bool in_zone = std::abs(goal_col - cp.col) < cfg_.shoot_range;
    if (in_zone && s.rng.bernoulli(cfg_.p_shoot)) {
      if (home_side) {
        home_scored = true;
        s.goals_home += 1;
      } else {
        away_scored = true;
        s.goals_away += 1;
      }
    } else {
      s.possessor = -1;
      if (in_zone) {
        s.ball = {h / 2, goal_col};  // saved shot: loose ball on the goal line
      } else {
        const int land = home_side ? std::min(w - 1, cp.col + cfg_.clear_distance)
                                   : std::max(0, cp.col - cfg_.clear_distance);
        s.ball = {cp.row, land};
      }
    }
  }

  // 6. Rewards: +1/-1 to every home agent on a goal, then the possessor
  //    shaping bonus for advancing on the attacked goal.
  if (home_scored)
    for (auto& r : out.rewards) r += 1.0f;
  if (away_scored)
    for (auto& r : out.rewards) r -= 1.0f;

  if (!home_scored && !away_scored) {
    const std::vector<float> bonus = shaping_bonus(cfg_, state, s);
    for (int i = 0; i < n; ++i) {
      if (bonus[size_t(i)] != 0.0f) {
        out.rewards[size_t(i)] += bonus[size_t(i)];
        s.shaping_events += 1;
      }
    }
  }

  if (home_scored || away_scored) {
    // Kickoff: positions reset, ball at center, counters and rng carry over.
    for (int i = 0; i < n; ++i) s.agents[size_t(i)] = {(i + 1) * h / (n + 1), w / 4};
    for (int j = 0; j < m; ++j) s.opponents[size_t(j)] = {(j + 1) * h / (m + 1), w - 1 - w / 4};
    s.ball = {h / 2, w / 2};
    s.possessor = -1;
  } else if (s.possessor >= 0) {
    s.ball = agent_pos(s, s.possessor, n);
  }

  s.step_index = state.step_index + 1;
  out.terminal = s.step_index >= cfg_.spec.episode_len;
  for (float r : out.rewards) out.team_reward += r;
  return out;
}

StepResult MiniPitchEnv::step(const EnvState& state, std::span<const int> joint_action) const {
  return step_impl(state, joint_action, nullptr);
}

StepResult MiniPitchEnv::step_two_team(const EnvState& state, std::span<const int> home_actions,
                                       std::span<const int> away_actions) const {
  std::vector<int> away(away_actions.begin(), away_actions.end());
  return step_impl(state, home_actions, &away);
}

std::vector<float> shaping_bonus(const MiniPitchConfig& cfg, const EnvState& prev,
                                 const EnvState& next) {
  const int n = cfg.spec.num_agents;
  std::vector<float> bonus(size_t(n), 0.0f);
  const int carrier = prev.possessor;
  if (carrier < 0 || carrier >= n || next.possessor != carrier) return bonus;
  const int goal_col = cfg.spec.width - 1;
  const int before = std::abs(goal_col - prev.agents[size_t(carrier)].col);
  const int after = std::abs(goal_col - next.agents[size_t(carrier)].col);
  if (after < before) bonus[size_t(carrier)] = cfg.shaping;
  return bonus;
}

void MiniPitchEnv::write_entity_planes(const EnvState& state, uint8_t* planes) const {
  const int h = cfg_.spec.height, w = cfg_.spec.width;
  const size_t cells = size_t(h) * w;
  std::fill_n(planes, cells * 2, uint8_t(0));
  for (const auto& p : state.opponents) planes[size_t(p.row) * w + p.col] = 1;
  const GridPos b = ball_pos(state, cfg_.spec.num_agents);
  planes[cells + size_t(b.row) * w + b.col] = 1;
}

int MiniPitchEnv::scripted_action(const EnvState& state, int agent, RngStream& rng) const {
  // Data-collection policy for the home side: mirror of chase-and-clear.
  const int n = cfg_.spec.num_agents;
  const int h = cfg_.spec.height, w = cfg_.spec.width;
  const GridPos me = state.agents[size_t(agent)];
  const GridPos ball = ball_pos(state, n);
  if (rng.bernoulli(0.15)) return int(rng.next_below(8));
  if (state.possessor == agent) {
    if (in_home_shoot_zone(me.col)) return kPitchShoot;
    if (rng.bernoulli(0.15)) return kPitchPass;
    return kPitchRight;
  }
  if (state.possessor >= n &&
      std::abs(me.row - ball.row) + std::abs(me.col - ball.col) == 1)
    return kPitchTackle;
  const int dr = ball.row - me.row, dc = ball.col - me.col;
  if (dr == 0 && dc == 0) return kPitchIdle;
  if (std::abs(dr) > std::abs(dc)) return dr < 0 ? kPitchUp : kPitchDown;
  if (dc != 0) return dc < 0 ? kPitchLeft : kPitchRight;
  return dr < 0 ? kPitchUp : kPitchDown;
  (void)h;
  (void)w;
}

EnvState MiniPitchEnv::mirror_state(const EnvState& state) const {
  const int n = cfg_.spec.num_agents, m = cfg_.away_agents;
  MARL_CHECK(n == m, "mirrored control needs equal team sizes, got ", n, " vs ", m);
  const int w = cfg_.spec.width;
  EnvState out = state;
  out.agents.resize(size_t(m));
  out.opponents.resize(size_t(n));
  for (int j = 0; j < m; ++j) {
    GridPos p = state.opponents[size_t(j)];
    out.agents[size_t(j)] = {p.row, w - 1 - p.col};
  }
  for (int i = 0; i < n; ++i) {
    GridPos p = state.agents[size_t(i)];
    out.opponents[size_t(i)] = {p.row, w - 1 - p.col};
  }
  out.ball = {state.ball.row, w - 1 - state.ball.col};
  if (state.possessor >= 0)
    out.possessor = state.possessor < n ? m + state.possessor : state.possessor - n;
  std::swap(out.goals_home, out.goals_away);
  return out;
}

int MiniPitchEnv::mirror_action(int action) {
  if (action == kPitchLeft) return kPitchRight;
  if (action == kPitchRight) return kPitchLeft;
  return action;
}

std::unique_ptr<Env> make_env(const std::string& kind) {
  if (kind == "cleanup") return std::make_unique<CleanupEnv>(CleanupConfig{});
  if (kind == "minipitch") return std::make_unique<MiniPitchEnv>(MiniPitchConfig{});
  throw ConfigError("unknown env kind: " + kind);
}

}  // namespace marl
