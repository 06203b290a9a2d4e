#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "marl/common.hpp"
#include "marl/rng.hpp"

namespace marl {

struct MamdpSpec {
  int num_agents = 1;
  int action_count = 1;
  int height = 1;
  int width = 1;
  int episode_len = 1;
  float gamma = 0.99f;

  void validate() const {
    MARL_CONFIG_CHECK(num_agents >= 1 && episode_len >= 1 && height >= 1 && width >= 1 &&
                          action_count >= 1 && gamma >= 0.0f && gamma <= 1.0f,
                      "invalid MAMDP spec: agents=", num_agents, " L=", episode_len,
                      " grid=", height, "x", width, " gamma=", gamma);
  }
};

struct GridPos {
  int row = 0;
  int col = 0;
  bool operator==(const GridPos&) const = default;
};

// Facing directions used by GridCleanup's clean action. A move sets the
// facing; idle and clean keep it.
enum Facing : int { kFaceUp = 0, kFaceDown = 1, kFaceLeft = 2, kFaceRight = 3 };

// Full environment state, a plain value. The PRNG stream lives here so a
// transition is a pure function of (state, joint action).
struct EnvState {
  int step_index = 0;
  RngStream rng;

  std::vector<GridPos> agents;  // controlled (home) agents
  std::vector<int> facing;      // GridCleanup only

  std::vector<uint8_t> mud;     // GridCleanup: H*W flags
  std::vector<uint8_t> apples;  // GridCleanup: H*W flags

  std::vector<GridPos> opponents;  // MiniPitch
  GridPos ball;                    // MiniPitch: cell of a free ball
  int possessor = -1;              // -1 free; [0,N) home; [N, N+opponents) away

  // Accounting for the reward-ledger invariants.
  int64_t apples_eaten = 0;
  int goals_home = 0;
  int goals_away = 0;
  int64_t shaping_events = 0;
};

struct StepResult {
  std::vector<float> rewards;  // per home agent, shaping included
  float team_reward = 0.0f;    // sum of per-agent rewards
  bool terminal = false;
  EnvState next;
};

class Env {
 public:
  virtual ~Env() = default;
  virtual const char* name() const = 0;
  virtual const MamdpSpec& spec() const = 0;

  virtual EnvState reset(uint64_t seed) const = 0;
  virtual StepResult step(const EnvState& state, std::span<const int> joint_action) const = 0;

  // Entity planes beyond per-agent positions (mud/apples, opponents/ball);
  // together with agent positions they reconstruct observations from replays.
  virtual int entity_channels() const = 0;
  virtual void write_entity_planes(const EnvState& state, uint8_t* planes) const = 0;

  // Built-in data-collection policy (replay source before any RL exists).
  virtual int scripted_action(const EnvState& state, int agent, RngStream& rng) const = 0;
};

// Desk-scale cleanup: a water band at the top spawns mud, an orchard band at
// the bottom spawns apples at rate p_max * (1 - mud_fraction). Agents move,
// eat apples (+1 to the eater) or clean the faced water cell.
struct CleanupConfig {
  MamdpSpec spec{4, 6, 11, 16, 256, 0.99f};
  int water_rows = 3;
  int orchard_rows = 3;
  float p_mud = 0.02f;
  float p_max = 0.1f;

  void validate() const;
};

enum CleanupAction : int {
  kCleanupIdle = 0,
  kCleanupUp = 1,
  kCleanupDown = 2,
  kCleanupLeft = 3,
  kCleanupRight = 4,
  kCleanupClean = 5,
};

class CleanupEnv final : public Env {
 public:
  explicit CleanupEnv(CleanupConfig cfg);
  const char* name() const override { return "cleanup"; }
  const MamdpSpec& spec() const override { return cfg_.spec; }
  const CleanupConfig& config() const { return cfg_; }

  EnvState reset(uint64_t seed) const override;
  StepResult step(const EnvState& state, std::span<const int> joint_action) const override;

  int entity_channels() const override { return 2; }  // mud, apples
  void write_entity_planes(const EnvState& state, uint8_t* planes) const override;
  int scripted_action(const EnvState& state, int agent, RngStream& rng) const override;

  bool in_water_band(int row) const { return row < cfg_.water_rows; }
  bool in_orchard_band(int row) const { return row >= cfg_.spec.height - cfg_.orchard_rows; }
  double mud_fraction(const EnvState& state) const;

 private:
  CleanupConfig cfg_;
};

// Desk-scale two-goal pitch: home attacks the right goal, the away side is
// scripted (chase-and-clear) unless explicit away actions are supplied.
struct MiniPitchConfig {
  MamdpSpec spec{3, 8, 12, 20, 256, 0.99f};
  int away_agents = 3;
  int shoot_range = 6;    // columns from the attacked goal line
  float p_shoot = 0.4f;
  float p_pass = 0.8f;
  float p_tackle = 0.5f;
  float shaping = 0.1f;   // possessor bonus for advancing toward the goal
  int clear_distance = 4; // columns a failed/long shot travels

  void validate() const;
};

enum MiniPitchAction : int {
  kPitchIdle = 0,
  kPitchUp = 1,
  kPitchDown = 2,
  kPitchLeft = 3,
  kPitchRight = 4,
  kPitchPass = 5,
  kPitchShoot = 6,
  kPitchTackle = 7,
};

class MiniPitchEnv final : public Env {
 public:
  explicit MiniPitchEnv(MiniPitchConfig cfg);
  const char* name() const override { return "minipitch"; }
  const MamdpSpec& spec() const override { return cfg_.spec; }
  const MiniPitchConfig& config() const { return cfg_; }

  EnvState reset(uint64_t seed) const override;
  StepResult step(const EnvState& state, std::span<const int> joint_action) const override;

  // Two controlled teams (evaluation matches). Away agents see the board
  // mirrored so one parameter set plays either side.
  StepResult step_two_team(const EnvState& state, std::span<const int> home_actions,
                           std::span<const int> away_actions) const;

  int entity_channels() const override { return 2; }  // opponents, ball
  void write_entity_planes(const EnvState& state, uint8_t* planes) const override;
  int scripted_action(const EnvState& state, int agent, RngStream& rng) const override;

  // Column-flipped, role-swapped view: away agents become home agents
  // attacking right. mirror_action swaps left/right to match.
  EnvState mirror_state(const EnvState& state) const;
  static int mirror_action(int action);

  std::vector<int> scripted_away_actions(const EnvState& state, RngStream& rng) const;

  int home_goal_col() const { return cfg_.spec.width - 1; }  // column home attacks
  bool in_home_shoot_zone(int col) const { return home_goal_col() - col < cfg_.shoot_range; }

 private:
  MiniPitchConfig cfg_;
  StepResult step_impl(const EnvState& state, std::span<const int> home_actions,
                       const std::vector<int>* away_actions) const;
};

// +0.1 to the agent that holds the ball in both states iff its column
// distance to the attacked goal strictly decreased; zero for everyone else.
std::vector<float> shaping_bonus(const MiniPitchConfig& cfg, const EnvState& prev,
                                 const EnvState& next);

std::unique_ptr<Env> make_env(const std::string& kind);

}  // namespace marl
