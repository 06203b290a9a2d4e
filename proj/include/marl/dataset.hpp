#pragma once

#include <array>
#include <string>
#include <vector>

#include "marl/observation.hpp"
#include "marl/replay.hpp"

namespace marl {

// Action-free training example: a stacked observation, the agent it centers
// on, and that agent's position one step later. Episode/step ids support
// grouped (attention) batches and the observe-all ablation; by design no
// field records or can reconstruct the acting policy's actions.
struct DatasetExample {
  std::vector<uint8_t> planes_packed;  // ceil(K*C*H*W / 8) bytes
  uint8_t agent = 0;
  uint8_t target_h = 0, target_w = 0;
  uint32_t episode = 0;
  uint32_t step = 0;
};

struct DatasetHeader {
  uint32_t version = 1;
  uint16_t height = 0, width = 0;
  uint8_t channels = kObsChannels;
  uint8_t stack = kObsStack;
  uint8_t agents = 0;
  uint64_t count = 0;
  uint64_t content_hash = 0;
};

// Axis occupancy masks over all agents at t+1 (the observe-all ablation).
struct ObserveAllTarget {
  std::vector<uint8_t> row_mask;  // H
  std::vector<uint8_t> col_mask;  // W
};

class ObservationDataset {
 public:
  static constexpr std::array<const char*, 6> kRecordFields = {
      "planes", "agent_index", "target_row", "target_col", "episode_id", "step"};

  DatasetHeader header;
  std::vector<DatasetExample> examples;
  uint64_t split_seed = 0;

  uint64_t content_hash() const;
  size_t plane_bytes() const;

  // Deterministic 90/10 split by episode (never by frame).
  std::vector<int64_t> train_indices() const;
  std::vector<int64_t> validation_indices() const;

  void unpack_planes(const DatasetExample& ex, float* out) const;

  // Union of the per-agent targets of one (episode, step) group.
  ObserveAllTarget observe_all_target(uint32_t episode, uint32_t step) const;

  // Example row indices grouped by (episode, step), each group holding all
  // N agents of that step; required for attention-model batches.
  std::vector<std::vector<int64_t>> groups() const;
};

struct BuildStats {
  size_t replays_read = 0;
  size_t corrupt_records_skipped = 0;
};

ObservationDataset build_dataset(const std::vector<std::string>& replay_paths,
                                 uint64_t split_seed, BuildStats* stats = nullptr);

void save_dataset(const std::string& path, const ObservationDataset& ds);
ObservationDataset load_dataset(const std::string& path, uint64_t split_seed);

}  // namespace marl
