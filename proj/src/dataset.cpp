#include "marl/dataset.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <unordered_map>

namespace marl {

size_t ObservationDataset::plane_bytes() const {
  const size_t bits =
      size_t(header.stack) * header.channels * header.height * header.width;
  return (bits + 7) / 8;
}

uint64_t ObservationDataset::content_hash() const {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (const auto& ex : examples) {
    h = fnv1a(ex.planes_packed.data(), ex.planes_packed.size(), h);
    const uint8_t meta[3] = {ex.agent, ex.target_h, ex.target_w};
    h = fnv1a(meta, 3, h);
    h = fnv1a(&ex.episode, 4, h);
    h = fnv1a(&ex.step, 4, h);
  }
  return h;
}

namespace {
std::vector<uint32_t> episode_ids(const ObservationDataset& ds) {
  std::vector<uint32_t> ids;
  for (const auto& ex : ds.examples)
    if (ids.empty() || ids.back() != ex.episode) ids.push_back(ex.episode);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::vector<uint32_t> validation_episodes(const ObservationDataset& ds) {
  std::vector<uint32_t> ids = episode_ids(ds);
  RngStream rng(ds.split_seed, 0x73706c6974ULL);
  // Fisher-Yates, then take the first 10% (at least one) as validation.
  for (size_t i = ids.size(); i > 1; --i)
    std::swap(ids[i - 1], ids[size_t(rng.next_below(i))]);
  const size_t n_val = std::max<size_t>(1, ids.size() / 10);
  ids.resize(n_val);
  std::sort(ids.begin(), ids.end());
  return ids;
}
}  // namespace

std::vector<int64_t> ObservationDataset::train_indices() const {
  const auto val = validation_episodes(*this);
  std::vector<int64_t> out;
  for (size_t i = 0; i < examples.size(); ++i)
    if (!std::binary_search(val.begin(), val.end(), examples[i].episode))
      out.push_back(int64_t(i));
  return out;
}

std::vector<int64_t> ObservationDataset::validation_indices() const {
  const auto val = validation_episodes(*this);
  std::vector<int64_t> out;
  for (size_t i = 0; i < examples.size(); ++i)
    if (std::binary_search(val.begin(), val.end(), examples[i].episode))
      out.push_back(int64_t(i));
  return out;
}

void ObservationDataset::unpack_planes(const DatasetExample& ex, float* out) const {
  const size_t bits = size_t(header.stack) * header.channels * header.height * header.width;
  for (size_t i = 0; i < bits; ++i)
    out[i] = float((ex.planes_packed[i / 8] >> (i % 8)) & 1u);
}

ObserveAllTarget ObservationDataset::observe_all_target(uint32_t episode, uint32_t step) const {
  ObserveAllTarget t;
  t.row_mask.assign(header.height, 0);
  t.col_mask.assign(header.width, 0);
  bool found = false;
  for (const auto& ex : examples) {
    if (ex.episode != episode || ex.step != step) continue;
    t.row_mask[ex.target_h] = 1;
    t.col_mask[ex.target_w] = 1;
    found = true;
  }
  MARL_CHECK(found, "no examples for episode ", episode, " step ", step);
  return t;
}

std::vector<std::vector<int64_t>> ObservationDataset::groups() const {
  std::vector<std::vector<int64_t>> out;
  std::unordered_map<uint64_t, size_t> index;
  for (size_t i = 0; i < examples.size(); ++i) {
    const uint64_t key = (uint64_t(examples[i].episode) << 32) | examples[i].step;
    auto it = index.find(key);
    if (it == index.end()) {
      index[key] = out.size();
      out.push_back({int64_t(i)});
    } else {
      out[it->second].push_back(int64_t(i));
    }
  }
  return out;
}

ObservationDataset build_dataset(const std::vector<std::string>& replay_paths,
                                 uint64_t split_seed, BuildStats* stats) {
  MARL_CHECK(!replay_paths.empty(), "no replay files given");
  ObservationDataset ds;
  ds.split_seed = split_seed;
  bool header_set = false;

  for (size_t ep = 0; ep < replay_paths.size(); ++ep) {
    ReplayFile rf = read_replay(replay_paths[ep]);
    if (stats) {
      stats->replays_read += 1;
      stats->corrupt_records_skipped += rf.corrupt_skipped;
    }
    if (!header_set) {
      ds.header.height = rf.header.height;
      ds.header.width = rf.header.width;
      ds.header.agents = rf.header.agents;
      header_set = true;
    } else {
      MARL_CHECK(ds.header.height == rf.header.height && ds.header.width == rf.header.width &&
                     ds.header.agents == rf.header.agents,
                 "replay ", replay_paths[ep], " does not match the dataset geometry");
    }
    const int h = rf.header.height, w = rf.header.width;
    const size_t cells = size_t(h) * w;
    const int n = rf.header.agents;
    const size_t frame_bytes = size_t(kObsChannels) * cells;

    // One example per (agent, step) with a valid t+1; the stacking rule is
    // the one live encoding uses (repeat the first frame at episode start).
    std::vector<uint8_t> frame(frame_bytes);
    for (size_t t = 0; t + 1 < rf.steps.size(); ++t) {
      // skip records that are not t+1-contiguous (a corrupt record was
      // dropped in between)
      if (rf.steps[t + 1].step != rf.steps[t].step + 1) continue;
      for (int agent = 0; agent < n; ++agent) {
        DatasetExample ex;
        ex.agent = uint8_t(agent);
        ex.episode = uint32_t(ep);
        ex.step = rf.steps[t].step;
        ex.target_h = uint8_t(rf.steps[t + 1].agents[size_t(agent)].row);
        ex.target_w = uint8_t(rf.steps[t + 1].agents[size_t(agent)].col);
        const size_t bits = size_t(kObsStack) * frame_bytes;
        ex.planes_packed.assign((bits + 7) / 8, 0);
        for (int k = 0; k < kObsStack; ++k) {
          const int back = kObsStack - 1 - k;
          const size_t src_t = t >= size_t(back) ? t - size_t(back) : 0;
          write_frame(rf.steps[src_t].agents, agent, rf.steps[src_t].entity_planes,
                      rf.header.entity_channels, h, w, frame.data());
          const size_t base = size_t(k) * frame_bytes;
          for (size_t i = 0; i < frame_bytes; ++i)
            if (frame[i]) ex.planes_packed[(base + i) / 8] |= uint8_t(1u << ((base + i) % 8));
        }
        ds.examples.push_back(std::move(ex));
      }
    }
  }
  ds.header.count = ds.examples.size();
  ds.header.content_hash = ds.content_hash();
  return ds;
}

namespace {
constexpr char kMagic[8] = {'M', 'R', 'L', 'D', 'S', 'E', 'T', '1'};
}

void save_dataset(const std::string& path, const ObservationDataset& ds) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open dataset for writing: " + path);
  os.write(kMagic, 8);
  auto put = [&os](const auto& v) { os.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  put(ds.header.version);
  put(ds.header.height);
  put(ds.header.width);
  put(ds.header.channels);
  put(ds.header.stack);
  put(ds.header.agents);
  put(ds.header.count);
  put(ds.header.content_hash);
  for (const auto& ex : ds.examples) {
    os.write(reinterpret_cast<const char*>(ex.planes_packed.data()),
             std::streamsize(ex.planes_packed.size()));
    put(ex.agent);
    put(ex.target_h);
    put(ex.target_w);
    put(ex.episode);
    put(ex.step);
  }
  os.close();
  if (!os) throw IoError("dataset write failed: " + path);
}

ObservationDataset load_dataset(const std::string& path, uint64_t split_seed) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open dataset: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw IoError("bad dataset magic in " + path);
  ObservationDataset ds;
  ds.split_seed = split_seed;
  auto get = [&is, &path](auto& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw IoError("dataset header truncated in " + path);
  };
  get(ds.header.version);
  get(ds.header.height);
  get(ds.header.width);
  get(ds.header.channels);
  get(ds.header.stack);
  get(ds.header.agents);
  get(ds.header.count);
  get(ds.header.content_hash);
  const size_t pb = ds.plane_bytes();
  ds.examples.resize(ds.header.count);
  for (auto& ex : ds.examples) {
    ex.planes_packed.resize(pb);
    is.read(reinterpret_cast<char*>(ex.planes_packed.data()), std::streamsize(pb));
    is.read(reinterpret_cast<char*>(&ex.agent), 1);
    is.read(reinterpret_cast<char*>(&ex.target_h), 1);
    is.read(reinterpret_cast<char*>(&ex.target_w), 1);
    is.read(reinterpret_cast<char*>(&ex.episode), 4);
    is.read(reinterpret_cast<char*>(&ex.step), 4);
    if (!is) throw IoError("dataset records truncated in " + path);
  }
  const uint64_t h = ds.content_hash();
  if (h != ds.header.content_hash)
    throw IoError(strcat("dataset content hash mismatch in ", path, ": header says ",
                         ds.header.content_hash, " but records hash to ", h));
  return ds;
}

}  // namespace marl
