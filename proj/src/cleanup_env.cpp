#include <algorithm>

#include "marl/env.hpp"

namespace marl {

void CleanupConfig::validate() const {
  spec.validate();
  MARL_CONFIG_CHECK(spec.action_count == 6, "cleanup uses 6 actions, got ", spec.action_count);
  MARL_CONFIG_CHECK(water_rows >= 1 && orchard_rows >= 1 &&
                        water_rows + orchard_rows < spec.height,
                    "cleanup bands do not fit: water=", water_rows, " orchard=", orchard_rows,
                    " height=", spec.height);
  MARL_CONFIG_CHECK(p_mud >= 0.0f && p_mud <= 1.0f && p_max >= 0.0f && p_max <= 1.0f,
                    "cleanup spawn probabilities out of range");
  // Agents start in the free band between water and orchard.
  const int free_rows = spec.height - water_rows - orchard_rows;
  MARL_CONFIG_CHECK(int64_t(free_rows) * spec.width >= spec.num_agents,
                    "grid too small for ", spec.num_agents, " agents");
}

CleanupEnv::CleanupEnv(CleanupConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

double CleanupEnv::mud_fraction(const EnvState& state) const {
  const int cells = cfg_.water_rows * cfg_.spec.width;
  int muddy = 0;
  for (int r = 0; r < cfg_.water_rows; ++r)
    for (int c = 0; c < cfg_.spec.width; ++c) muddy += state.mud[size_t(r) * cfg_.spec.width + c];
  return double(muddy) / double(cells);
}

EnvState CleanupEnv::reset(uint64_t seed) const {
  EnvState s;
  s.rng = RngStream(seed, 0x636c65616eULL);
  s.mud.assign(size_t(cfg_.spec.height) * cfg_.spec.width, 0);
  s.apples.assign(size_t(cfg_.spec.height) * cfg_.spec.width, 0);
  // Agents spread over the free middle band, deterministic given the seed.
  const int lo = cfg_.water_rows;
  const int hi = cfg_.spec.height - cfg_.orchard_rows;
  std::vector<uint8_t> taken(size_t(cfg_.spec.height) * cfg_.spec.width, 0);
  for (int i = 0; i < cfg_.spec.num_agents; ++i) {
    GridPos p;
    do {
      p.row = lo + int(s.rng.next_below(uint64_t(hi - lo)));
      p.col = int(s.rng.next_below(uint64_t(cfg_.spec.width)));
    } while (taken[size_t(p.row) * cfg_.spec.width + p.col]);
    taken[size_t(p.row) * cfg_.spec.width + p.col] = 1;
    s.agents.push_back(p);
    s.facing.push_back(kFaceUp);
  }
  return s;
}

StepResult CleanupEnv::step(const EnvState& state, std::span<const int> joint_action) const {
  const int n = cfg_.spec.num_agents;
  const int h = cfg_.spec.height, w = cfg_.spec.width;
  MARL_CHECK(int(joint_action.size()) == n, "expected ", n, " actions, got ",
             joint_action.size());
  MARL_CHECK(int(state.agents.size()) == n && state.step_index < cfg_.spec.episode_len,
             "stale or foreign state passed to cleanup step");
  for (int a : joint_action)
    MARL_CHECK(a >= 0 && a < cfg_.spec.action_count, "invalid cleanup action index ", a);

  StepResult out;
  out.rewards.assign(size_t(n), 0.0f);
  out.next = state;
  EnvState& s = out.next;

  // 1. Clean: clears mud in the faced water cell.
  for (int i = 0; i < n; ++i) {
    if (joint_action[size_t(i)] != kCleanupClean) continue;
    GridPos t = s.agents[size_t(i)];
    switch (s.facing[size_t(i)]) {
      case kFaceUp: t.row -= 1; break;
      case kFaceDown: t.row += 1; break;
      case kFaceLeft: t.col -= 1; break;
      case kFaceRight: t.col += 1; break;
    }
    if (t.row < 0 || t.row >= h || t.col < 0 || t.col >= w) continue;
    if (in_water_band(t.row)) s.mud[size_t(t.row) * w + t.col] = 0;
  }

  // 2. Moves, lower agent index wins conflicts; walls and occupied cells block.
  std::vector<uint8_t> occupied(size_t(h) * w, 0);
  for (const auto& p : s.agents) occupied[size_t(p.row) * w + p.col] = 1;
  for (int i = 0; i < n; ++i) {
    const int a = joint_action[size_t(i)];
    int dr = 0, dc = 0, face = -1;
    if (a == kCleanupUp) { dr = -1; face = kFaceUp; }
    else if (a == kCleanupDown) { dr = 1; face = kFaceDown; }
    else if (a == kCleanupLeft) { dc = -1; face = kFaceLeft; }
    else if (a == kCleanupRight) { dc = 1; face = kFaceRight; }
    else continue;
    s.facing[size_t(i)] = face;
    GridPos cur = s.agents[size_t(i)];
    GridPos t{cur.row + dr, cur.col + dc};
    if (t.row < 0 || t.row >= h || t.col < 0 || t.col >= w) continue;
    if (occupied[size_t(t.row) * w + t.col]) continue;
    occupied[size_t(cur.row) * w + cur.col] = 0;
    occupied[size_t(t.row) * w + t.col] = 1;
    s.agents[size_t(i)] = t;
  }

  // 3. Eating: +1 to an agent standing on an apple.
  for (int i = 0; i < n; ++i) {
    const GridPos p = s.agents[size_t(i)];
    uint8_t& apple = s.apples[size_t(p.row) * w + p.col];
    if (apple) {
      apple = 0;
      out.rewards[size_t(i)] += 1.0f;
      s.apples_eaten += 1;
    }
  }

  // 4. Mud spawn in the water band, per cell.
  for (int r = 0; r < cfg_.water_rows; ++r)
    for (int c = 0; c < w; ++c) {
      uint8_t& mud = s.mud[size_t(r) * w + c];
      if (!mud && s.rng.bernoulli(cfg_.p_mud)) mud = 1;
    }

  // 5. Apple spawn in the orchard band at p_max * (1 - mud_fraction), on
  //    cells without an apple or an agent.
  const double p_apple = cfg_.p_max * (1.0 - mud_fraction(s));
  for (int r = h - cfg_.orchard_rows; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      uint8_t& apple = s.apples[size_t(r) * w + c];
      if (apple || occupied[size_t(r) * w + c]) continue;
      if (s.rng.bernoulli(p_apple)) apple = 1;
    }

  s.step_index = state.step_index + 1;
  out.terminal = s.step_index >= cfg_.spec.episode_len;
  for (float r : out.rewards) out.team_reward += r;
  return out;
}

void CleanupEnv::write_entity_planes(const EnvState& state, uint8_t* planes) const {
  const size_t cells = size_t(cfg_.spec.height) * cfg_.spec.width;
  std::copy_n(state.mud.data(), cells, planes);
  std::copy_n(state.apples.data(), cells, planes + cells);
}

// Replay-collection policy: head for the nearest apple, otherwise drift
// toward the orchard; occasionally clean when facing mud.
int CleanupEnv::scripted_action(const EnvState& state, int agent, RngStream& rng) const {
  const int w = cfg_.spec.width;
  const GridPos me = state.agents[size_t(agent)];
  if (rng.bernoulli(0.2)) return int(rng.next_below(6));

  GridPos front = me;
  switch (state.facing[size_t(agent)]) {
    case kFaceUp: front.row -= 1; break;
    case kFaceDown: front.row += 1; break;
    case kFaceLeft: front.col -= 1; break;
    case kFaceRight: front.col += 1; break;
  }
  if (front.row >= 0 && front.row < cfg_.spec.height && front.col >= 0 && front.col < w &&
      in_water_band(front.row) && state.mud[size_t(front.row) * w + front.col] &&
      rng.bernoulli(0.5))
    return kCleanupClean;

  int best = -1, best_d = 1 << 30;
  for (int r = 0; r < cfg_.spec.height; ++r)
    for (int c = 0; c < w; ++c)
      if (state.apples[size_t(r) * w + c]) {
        const int d = std::abs(r - me.row) + std::abs(c - me.col);
        if (d < best_d) {
          best_d = d;
          best = r * w + c;
        }
      }
  int tr, tc;
  if (best >= 0) {
    tr = best / w;
    tc = best % w;
  } else {
    tr = cfg_.spec.height - 1 - int(rng.next_below(uint64_t(cfg_.orchard_rows)));
    tc = me.col;
  }
  if (tr != me.row && (tc == me.col || rng.bernoulli(0.5)))
    return tr < me.row ? kCleanupUp : kCleanupDown;
  if (tc != me.col) return tc < me.col ? kCleanupLeft : kCleanupRight;
  return kCleanupIdle;
}

}  // namespace marl
