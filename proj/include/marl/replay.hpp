#pragma once

#include <string>
#include <vector>

#include "marl/env.hpp"

namespace marl {

// Replay file (one episode per file): version header, then fixed-width
// per-step records of (step, per-agent positions, bit-packed entity planes,
// planes hash, optional actions, rewards). Observations rebuild from
// positions + entity planes with the same stacking rule as live encoding;
// the hash guards each record. Files written for observation datasets carry
// no action labels.
struct ReplayHeader {
  uint32_t version = 1;
  uint8_t env_kind = 0;  // 0 cleanup, 1 minipitch
  uint16_t height = 0;
  uint16_t width = 0;
  uint8_t agents = 0;
  uint8_t entity_channels = 0;
  uint8_t has_actions = 0;
  uint32_t steps = 0;
};

struct ReplayStep {
  uint32_t step = 0;
  std::vector<GridPos> agents;
  std::vector<uint8_t> entity_planes;  // unpacked C_e*H*W {0,1}
  std::vector<uint8_t> actions;        // empty unless has_actions
  std::vector<float> rewards;
};

struct ReplayFile {
  ReplayHeader header;
  std::vector<ReplayStep> steps;
  size_t corrupt_skipped = 0;  // hash-mismatched records dropped on read
};

class ReplayWriter {
 public:
  ReplayWriter(const std::string& path, const Env& env, bool with_actions);
  ~ReplayWriter();
  ReplayWriter(const ReplayWriter&) = delete;
  ReplayWriter& operator=(const ReplayWriter&) = delete;

  void add_step(const EnvState& state, std::span<const int> actions,
                std::span<const float> rewards);
  // Patches the header step count and closes the file.
  void finish();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

ReplayFile read_replay(const std::string& path);

uint64_t replay_record_hash(std::span<const GridPos> agents,
                            std::span<const uint8_t> packed_planes);

// Plays episodes with the env's scripted policy and writes action-free
// replays; returns the file paths.
std::vector<std::string> record_scripted_replays(const Env& env, const std::string& out_dir,
                                                 int episodes, uint64_t seed);

}  // namespace marl
