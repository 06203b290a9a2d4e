#include "marl/observation.hpp"

#include <algorithm>

namespace marl {

void write_frame(std::span<const GridPos> agent_positions, int self_index,
                 std::span<const uint8_t> entity_planes, int entity_channel_count,
                 int height, int width, uint8_t* out) {
  const size_t cells = size_t(height) * width;
  MARL_CHECK(self_index >= 0 && self_index < int(agent_positions.size()),
             "self index out of range");
  MARL_CHECK(entity_channel_count == kObsChannels - 2,
             "expected ", kObsChannels - 2, " entity channels, got ", entity_channel_count);
  MARL_CHECK(entity_planes.size() == cells * size_t(entity_channel_count),
             "entity plane size mismatch");
  std::fill_n(out, cells * kObsChannels, uint8_t(0));
  const GridPos self = agent_positions[size_t(self_index)];
  out[size_t(self.row) * width + self.col] = 1;  // channel 0: self
  for (int i = 0; i < int(agent_positions.size()); ++i) {
    if (i == self_index) continue;
    const GridPos p = agent_positions[size_t(i)];
    out[cells + size_t(p.row) * width + p.col] = 1;  // channel 1: teammates
  }
  std::copy_n(entity_planes.data(), cells * size_t(entity_channel_count), out + 2 * cells);
}

void write_frame_from_state(const Env& env, const EnvState& state, int agent, uint8_t* out) {
  const MamdpSpec& spec = env.spec();
  const size_t cells = size_t(spec.height) * spec.width;
  std::vector<uint8_t> entity(cells * size_t(env.entity_channels()));
  env.write_entity_planes(state, entity.data());
  write_frame(state.agents, agent, entity, env.entity_channels(), spec.height, spec.width, out);
}

Observation encode_observation(const Env& env, std::span<const EnvState> recent, int agent) {
  MARL_CHECK(!recent.empty(), "encode_observation needs at least the current state");
  MARL_CHECK(int(recent.size()) <= kObsStack, "history holds at most ", kObsStack - 1,
             " prior frames");
  const MamdpSpec& spec = env.spec();
  const size_t cells = size_t(spec.height) * spec.width;
  Observation obs;
  obs.agent_index = agent;
  obs.planes.resize(size_t(kObsStack) * kObsChannels * cells);
  for (int k = 0; k < kObsStack; ++k) {
    // Frame k is the state K-1-k steps ago, clamped to the oldest available.
    const int back = kObsStack - 1 - k;
    const int idx = std::max(0, int(recent.size()) - 1 - back);
    write_frame_from_state(env, recent[size_t(idx)], agent,
                           obs.planes.data() + size_t(k) * kObsChannels * cells);
  }
  return obs;
}

TensorF observations_to_batch(std::span<const Observation> obs, int height, int width) {
  MARL_CHECK(!obs.empty(), "empty observation batch");
  const int planes = kObsStack * kObsChannels;
  const size_t per = size_t(planes) * height * width;
  TensorF out({int(obs.size()), planes, height, width});
  for (size_t i = 0; i < obs.size(); ++i) {
    MARL_CHECK(obs[i].planes.size() == per, "observation plane size mismatch");
    float* dst = out.ptr() + i * per;
    for (size_t j = 0; j < per; ++j) dst[j] = float(obs[i].planes[j]);
  }
  return out;
}

}  // namespace marl
