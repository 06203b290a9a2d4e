#include "marl/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace marl {

namespace {
constexpr char kMagic[8] = {'M', 'R', 'L', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (unsigned char)(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw IoError("checkpoint truncated while reading header");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
  return v;
}
}  // namespace

nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  return nlohmann::json{{"kind", model_kind_name(cfg.kind)},
                        {"in_channels", cfg.in_channels},
                        {"height", cfg.height},
                        {"width", cfg.width},
                        {"num_agents", cfg.num_agents},
                        {"action_count", cfg.action_count},
                        {"conv1_channels", cfg.conv1_channels},
                        {"conv2_channels", cfg.conv2_channels},
                        {"d_model", cfg.d_model},
                        {"attn_heads", cfg.attn_heads},
                        {"d_k", cfg.d_k},
                        {"ln_eps", cfg.ln_eps}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  const std::string kind = j.at("kind").get<std::string>();
  MARL_CONFIG_CHECK(kind == "cnn" || kind == "acnn", "unknown model kind: ", kind);
  cfg.kind = kind == "cnn" ? ModelKind::Cnn : ModelKind::Acnn;
  cfg.in_channels = j.at("in_channels").get<int>();
  cfg.height = j.at("height").get<int>();
  cfg.width = j.at("width").get<int>();
  cfg.num_agents = j.at("num_agents").get<int>();
  cfg.action_count = j.at("action_count").get<int>();
  cfg.conv1_channels = j.at("conv1_channels").get<int>();
  cfg.conv2_channels = j.at("conv2_channels").get<int>();
  cfg.d_model = j.at("d_model").get<int>();
  cfg.attn_heads = j.at("attn_heads").get<int>();
  cfg.d_k = j.at("d_k").get<int>();
  cfg.ln_eps = j.at("ln_eps").get<float>();
  return cfg;
}

void save_checkpoint(const std::string& path, const Params& params,
                     const nlohmann::json& meta) {
  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["meta"] = meta;
  uint64_t offset = 0;
  auto& tensors = manifest["tensors"] = nlohmann::json::array();
  for (const auto& e : params.entries) {
    tensors.push_back({{"name", e.name},
                       {"dtype", "f32"},
                       {"shape", e.value.shape},
                       {"offset", offset},
                       {"trainable", e.trainable}});
    offset += uint64_t(e.value.size()) * 4;
  }
  const std::string mstr = manifest.dump();

  const std::string tmp = path + ".tmp";
  std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint file for writing: " + tmp);
  os.write(kMagic, 8);
  write_u64(os, mstr.size());
  os.write(mstr.data(), std::streamsize(mstr.size()));
  for (const auto& e : params.entries)
    os.write(reinterpret_cast<const char*>(e.value.data.data()),
             std::streamsize(e.value.size() * 4));
  os.close();
  if (!os) throw IoError("write failed for checkpoint: " + tmp);
  std::remove(path.c_str());
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot move checkpoint into place: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("bad checkpoint magic in " + path);
  const uint64_t mlen = read_u64(is);
  std::string mstr(mlen, '\0');
  is.read(mstr.data(), std::streamsize(mlen));
  if (!is) throw IoError("checkpoint manifest truncated in " + path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mstr);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(strcat("checkpoint manifest is not valid JSON (", e.what(), "): ", path));
  }

  Checkpoint ckpt;
  ckpt.meta = manifest.value("meta", nlohmann::json::object());
  const uint64_t blob_start = 8 + 8 + mlen;
  for (const auto& t : manifest.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    const std::string dtype = t.at("dtype").get<std::string>();
    if (dtype != "f32") throw IoError("unsupported dtype '" + dtype + "' for tensor " + name);
    Shape shape = t.at("shape").get<Shape>();
    const uint64_t offset = t.at("offset").get<uint64_t>();
    const bool trainable = t.value("trainable", true);
    TensorF tensor(shape);
    is.seekg(std::streamoff(blob_start + offset));
    is.read(reinterpret_cast<char*>(tensor.data.data()), std::streamsize(tensor.size() * 4));
    if (!is)
      throw IoError(strcat("checkpoint blob truncated: tensor ", name, " needs ",
                           tensor.size() * 4, " bytes at blob offset ", offset, " in ", path));
    ckpt.params.add(name, std::move(tensor), trainable);
  }
  return ckpt;
}

void save_model(const std::string& path, const Model& model) {
  nlohmann::json meta;
  meta["model"] = model_config_to_json(model.cfg);
  if (model.progressive()) {
    meta["frozen_model"] = model_config_to_json(model.column->cfg);
    Params combined = model.params;
    for (const auto& e : model.column->params.entries)
      combined.add("frozen/" + e.name, e.value, false);
    save_checkpoint(path, combined, meta);
    return;
  }
  save_checkpoint(path, model.params, meta);
}

Model load_model(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  MARL_CHECK(ckpt.meta.contains("model"), "checkpoint has no model metadata: ", path);
  Model model;
  model.cfg = model_config_from_json(ckpt.meta.at("model"));
  if (ckpt.meta.contains("frozen_model")) {
    auto column = std::make_shared<ProgressiveColumn>();
    column->cfg = model_config_from_json(ckpt.meta.at("frozen_model"));
    for (auto& e : ckpt.params.entries) {
      if (e.name.rfind("frozen/", 0) == 0)
        column->params.add(e.name.substr(7), std::move(e.value), false);
      else
        model.params.add(e.name, std::move(e.value), e.trainable);
    }
    model.column = std::move(column);
  } else {
    model.params = std::move(ckpt.params);
  }
  return model;
}

}  // namespace marl
