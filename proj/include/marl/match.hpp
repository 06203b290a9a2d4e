#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "marl/env.hpp"
#include "marl/model.hpp"

namespace marl {

// A team controller for head-to-head play: a trained parameter set, the
// built-in chase-and-clear opponent, or an always-idle baseline.
struct TeamPolicy {
  enum class Kind { Checkpoint, ScriptedChase, ScriptedIdle };
  std::string id;
  Kind kind = Kind::ScriptedIdle;
  std::shared_ptr<const Model> model;  // Checkpoint only

  static TeamPolicy from_model(std::string id, Model model);
  static TeamPolicy scripted_chase(std::string id);
  static TeamPolicy scripted_idle(std::string id);
};

struct MatchResult {
  std::string home, away;
  int score_diff = 0;  // home goals - away goals
  enum class Outcome { Win, Tie, Loss } outcome = Outcome::Tie;
  uint64_t seed = 0;
};

// One evaluation episode on MiniPitch with both teams controlled. Actions
// are greedy (argmax) unless sampled=true. The away side sees the board
// mirrored so a home-trained policy can play either side.
MatchResult run_match(const TeamPolicy& home, const TeamPolicy& away, const MiniPitchEnv& env,
                      uint64_t seed, bool sampled = false);

struct PairCell {
  int wins = 0, ties = 0, losses = 0;  // row agent vs column agent
};

struct TournamentResult {
  std::vector<std::string> ids;
  std::vector<MatchResult> matches;
  std::vector<PairCell> grid;  // ids.size()^2, row-major, diagonal unused

  const PairCell& cell(size_t row, size_t col) const { return grid[row * ids.size() + col]; }
};

// Round robin: every ordered pair plays matches_per_pair matches.
TournamentResult tournament(const std::vector<TeamPolicy>& agents, int matches_per_pair,
                            const MiniPitchEnv& env, uint64_t base_seed, bool sampled = false,
                            int workers = 0);

// Text grid with win/tie/loss cells, one row per home agent.
std::string format_tournament_grid(const TournamentResult& result);
// Machine-readable record stream (one JSON object per match).
void write_match_records(std::ostream& os, const TournamentResult& result);

// Per-step attention weights with agent positions, line-delimited JSON.
// Requires an attention model; CNN checkpoints are rejected.
int64_t attention_dump(const Model& model, const Env& env, uint64_t seed, int64_t steps,
                       std::ostream& os);

}  // namespace marl
