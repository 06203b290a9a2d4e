#include "marl/replay.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace marl {

namespace {

constexpr char kMagic[8] = {'M', 'R', 'L', 'R', 'P', 'L', 'Y', '1'};

size_t packed_plane_bytes(const ReplayHeader& h) {
  const size_t cells = size_t(h.height) * h.width;
  return (cells + 7) / 8 * h.entity_channels;
}

size_t record_bytes(const ReplayHeader& h) {
  size_t n = 4;                       // step
  n += size_t(h.agents) * 2;          // positions (row, col) as u8
  n += packed_plane_bytes(h);         // entity planes
  n += 8;                             // hash
  if (h.has_actions) n += h.agents;   // actions
  n += size_t(h.agents) * 4;          // rewards f32
  return n;
}

void pack_bits(std::span<const uint8_t> flags, std::vector<uint8_t>& out) {
  out.assign((flags.size() + 7) / 8, 0);
  for (size_t i = 0; i < flags.size(); ++i)
    if (flags[i]) out[i / 8] |= uint8_t(1u << (i % 8));
}

void unpack_bits(std::span<const uint8_t> packed, size_t count, std::vector<uint8_t>& out) {
  out.assign(count, 0);
  for (size_t i = 0; i < count; ++i)
    out[i] = (packed[i / 8] >> (i % 8)) & 1u;
}

template <typename T>
void put(std::string& buf, T v) {
  char tmp[sizeof(T)];
  std::memcpy(tmp, &v, sizeof(T));
  buf.append(tmp, sizeof(T));
}

}  // namespace

uint64_t replay_record_hash(std::span<const GridPos> agents,
                            std::span<const uint8_t> packed_planes) {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (const GridPos& p : agents) {
    const uint8_t rc[2] = {uint8_t(p.row), uint8_t(p.col)};
    h = fnv1a(rc, 2, h);
  }
  return fnv1a(packed_planes.data(), packed_planes.size(), h);
}

struct ReplayWriter::Impl {
  std::ofstream os;
  ReplayHeader header;
  const Env* env = nullptr;
  std::string path;
  bool finished = false;
};

ReplayWriter::ReplayWriter(const std::string& path, const Env& env, bool with_actions)
    : impl_(new Impl) {
  impl_->path = path;
  impl_->env = &env;
  const MamdpSpec& spec = env.spec();
  impl_->header.env_kind = std::string(env.name()) == "cleanup" ? 0 : 1;
  impl_->header.height = uint16_t(spec.height);
  impl_->header.width = uint16_t(spec.width);
  impl_->header.agents = uint8_t(spec.num_agents);
  impl_->header.entity_channels = uint8_t(env.entity_channels());
  impl_->header.has_actions = with_actions ? 1 : 0;
  impl_->os.open(path, std::ios::binary | std::ios::trunc);
  if (!impl_->os) throw IoError("cannot open replay for writing: " + path);
  std::string buf;
  buf.append(kMagic, 8);
  put(buf, impl_->header.version);
  put(buf, impl_->header.env_kind);
  put(buf, impl_->header.height);
  put(buf, impl_->header.width);
  put(buf, impl_->header.agents);
  put(buf, impl_->header.entity_channels);
  put(buf, impl_->header.has_actions);
  put(buf, impl_->header.steps);
  impl_->os.write(buf.data(), std::streamsize(buf.size()));
}

ReplayWriter::~ReplayWriter() {
  if (impl_ && !impl_->finished) finish();
}

void ReplayWriter::add_step(const EnvState& state, std::span<const int> actions,
                            std::span<const float> rewards) {
  const MamdpSpec& spec = impl_->env->spec();
  MARL_CHECK(int(rewards.size()) == spec.num_agents, "reward count mismatch");
  const size_t cells = size_t(spec.height) * spec.width;
  std::vector<uint8_t> entity(cells * size_t(impl_->env->entity_channels()));
  impl_->env->write_entity_planes(state, entity.data());
  std::vector<uint8_t> packed;
  pack_bits(entity, packed);

  std::string buf;
  put(buf, uint32_t(state.step_index));
  for (const GridPos& p : state.agents) {
    put(buf, uint8_t(p.row));
    put(buf, uint8_t(p.col));
  }
  buf.append(reinterpret_cast<const char*>(packed.data()), packed.size());
  put(buf, replay_record_hash(state.agents, packed));
  if (impl_->header.has_actions) {
    MARL_CHECK(int(actions.size()) == spec.num_agents, "action count mismatch");
    for (int a : actions) put(buf, uint8_t(a));
  }
  for (float r : rewards) put(buf, r);
  impl_->os.write(buf.data(), std::streamsize(buf.size()));
  impl_->header.steps += 1;
}

void ReplayWriter::finish() {
  if (impl_->finished) return;
  impl_->finished = true;
  // Patch the step count (last 4 header bytes).
  impl_->os.seekp(8 + 4 + 1 + 2 + 2 + 1 + 1 + 1);
  uint32_t steps = impl_->header.steps;
  impl_->os.write(reinterpret_cast<const char*>(&steps), 4);
  impl_->os.close();
  if (!impl_->os) throw IoError("replay write failed: " + impl_->path);
}

ReplayFile read_replay(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open replay: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw IoError("bad replay magic in " + path);

  ReplayFile out;
  ReplayHeader& h = out.header;
  auto get = [&is, &path](auto& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw IoError("replay header truncated in " + path);
  };
  get(h.version);
  get(h.env_kind);
  get(h.height);
  get(h.width);
  get(h.agents);
  get(h.entity_channels);
  get(h.has_actions);
  get(h.steps);
  if (h.version != 1) throw IoError("unsupported replay version in " + path);

  const size_t rec_bytes = record_bytes(h);
  const size_t plane_bytes = packed_plane_bytes(h);
  const size_t cells = size_t(h.height) * h.width;
  std::vector<char> rec(rec_bytes);
  for (uint32_t i = 0; i < h.steps; ++i) {
    is.read(rec.data(), std::streamsize(rec_bytes));
    if (!is) throw IoError(strcat("replay truncated at record ", i, " in ", path));
    const char* p = rec.data();
    ReplayStep step;
    uint32_t step_idx;
    std::memcpy(&step_idx, p, 4);
    p += 4;
    step.step = step_idx;
    step.agents.resize(h.agents);
    for (int a = 0; a < h.agents; ++a) {
      step.agents[size_t(a)].row = uint8_t(p[0]);
      step.agents[size_t(a)].col = uint8_t(p[1]);
      p += 2;
    }
    std::vector<uint8_t> packed(plane_bytes);
    std::memcpy(packed.data(), p, plane_bytes);
    p += plane_bytes;
    uint64_t hash;
    std::memcpy(&hash, p, 8);
    p += 8;
    if (hash != replay_record_hash(step.agents, packed)) {
      out.corrupt_skipped += 1;
      continue;
    }
    unpack_bits(packed, cells * h.entity_channels, step.entity_planes);
    if (h.has_actions) {
      step.actions.resize(h.agents);
      std::memcpy(step.actions.data(), p, h.agents);
      p += h.agents;
    }
    step.rewards.resize(h.agents);
    std::memcpy(step.rewards.data(), p, size_t(h.agents) * 4);
    out.steps.push_back(std::move(step));
  }
  return out;
}

std::vector<std::string> record_scripted_replays(const Env& env, const std::string& out_dir,
                                                 int episodes, uint64_t seed) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> paths;
  RngStream policy_rng(seed, 0x7265706cULL);
  for (int ep = 0; ep < episodes; ++ep) {
    const std::string path = out_dir + "/scripted_" + std::to_string(seed) + "_" +
                             std::to_string(ep) + ".rpl";
    ReplayWriter writer(path, env, /*with_actions=*/false);
    EnvState state = env.reset(seed * 1000003ULL + uint64_t(ep));
    std::vector<int> actions(size_t(env.spec().num_agents));
    for (int t = 0; t < env.spec().episode_len; ++t) {
      for (int i = 0; i < env.spec().num_agents; ++i)
        actions[size_t(i)] = env.scripted_action(state, i, policy_rng);
      StepResult res = env.step(state, actions);
      writer.add_step(state, actions, res.rewards);
      state = std::move(res.next);
    }
    writer.finish();
    paths.push_back(path);
  }
  return paths;
}

}  // namespace marl
