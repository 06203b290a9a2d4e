#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "marl/env.hpp"
#include "marl/tensor.hpp"

namespace marl {

// SMM-style per-agent input: C=4 binary channels (self, teammates,
// other entities x2) stacked over K=4 time steps, oldest frame first.
inline constexpr int kObsChannels = 4;
inline constexpr int kObsStack = 4;

struct Observation {
  int agent_index = 0;
  std::vector<uint8_t> planes;  // K*C*H*W, {0,1}
};

// One frame (C*H*W) from raw ingredients; the single source of the encoding
// rule for both live states and replay records.
void write_frame(std::span<const GridPos> agent_positions, int self_index,
                 std::span<const uint8_t> entity_planes, int entity_channel_count,
                 int height, int width, uint8_t* out);

void write_frame_from_state(const Env& env, const EnvState& state, int agent, uint8_t* out);

// Stacks the last K states (oldest..newest); missing history at an episode
// start is filled by repeating the first frame.
Observation encode_observation(const Env& env, std::span<const EnvState> recent, int agent);

// Model input assembly: rows of stacked planes as floats.
TensorF observations_to_batch(std::span<const Observation> obs, int height, int width);

}  // namespace marl
