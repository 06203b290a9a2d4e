#include "marl/model.hpp"

#include <cmath>

namespace marl {

namespace {

TensorF uniform_init(Shape shape, int fan_in, RngStream& rng) {
  TensorF t(std::move(shape));
  const float limit = std::sqrt(3.0f / float(fan_in));
  for (auto& v : t.data) v = rng.next_uniform(limit);
  return t;
}

void add_linear(Params& p, const std::string& prefix, int in, int out, RngStream& rng) {
  p.add(prefix + "/w", uniform_init({in, out}, in, rng));
  p.add(prefix + "/b", TensorF({out}));
}

void add_layer_norm(Params& p, const std::string& prefix, int d) {
  p.add(prefix + "/gain", TensorF::full({d}, 1.0f));
  p.add(prefix + "/bias", TensorF({d}));
}

}  // namespace

Params init_params(const ModelConfig& cfg, uint64_t seed, bool progressive_adapters) {
  MARL_CHECK(cfg.in_channels > 0 && cfg.height > 0 && cfg.width > 0 && cfg.num_agents > 0 &&
                 cfg.action_count > 0,
             "invalid model config");
  RngStream rng(seed, /*stream_id=*/0x6d6f64656cULL);
  Params p;
  p.add("encoder/conv1/w",
        uniform_init({cfg.conv1_channels, cfg.in_channels, 3, 3}, cfg.in_channels * 9, rng));
  p.add("encoder/conv1/b", TensorF({cfg.conv1_channels}));
  p.add("encoder/conv2/w",
        uniform_init({cfg.conv2_channels, cfg.conv1_channels, 3, 3}, cfg.conv1_channels * 9, rng));
  p.add("encoder/conv2/b", TensorF({cfg.conv2_channels}));
  add_linear(p, "encoder/fc", cfg.flat_dim(), cfg.d_model, rng);

  if (cfg.kind == ModelKind::Acnn) {
    add_layer_norm(p, "attn/ln_in", cfg.d_model);
    for (int h = 0; h < cfg.attn_heads; ++h) {
      const std::string hp = "attn/head" + std::to_string(h);
      p.add(hp + "/q", uniform_init({cfg.d_model, cfg.d_k}, cfg.d_model, rng));
      p.add(hp + "/k", uniform_init({cfg.d_model, cfg.d_k}, cfg.d_model, rng));
      p.add(hp + "/v", uniform_init({cfg.d_model, cfg.d_k}, cfg.d_model, rng));
    }
    add_linear(p, "attn/out", cfg.attn_heads * cfg.d_k, cfg.d_model, rng);
    add_layer_norm(p, "attn/ln_out", cfg.d_model);
  }

  // Zero-started policy head: the initial policy is exactly uniform whatever
  // the feature scale underneath, which matters when the encoder comes from
  // a pre-trained checkpoint (a fan-in-scaled fresh head on
  // location-pretrained features collapses exploration). The layer still
  // learns; its inputs are nonzero. The other heads keep the scaled init so
  // their gradients shape the encoder from step one.
  p.add("heads/policy/w", TensorF({cfg.d_model, cfg.action_count}));
  p.add("heads/policy/b", TensorF({cfg.action_count}));
  add_linear(p, "heads/value", cfg.d_model, 1, rng);
  add_linear(p, "heads/loc_h", cfg.d_model, cfg.height, rng);
  add_linear(p, "heads/loc_w", cfg.d_model, cfg.width, rng);

  if (progressive_adapters) {
    // [identity | zero] blocks: a fresh progressive model computes exactly
    // what the trainable column alone would.
    const int c2 = cfg.conv2_channels;
    TensorF wc({c2, 2 * c2, 1, 1});
    for (int co = 0; co < c2; ++co) wc.data[size_t(co) * 2 * c2 + co] = 1.0f;
    p.add("prog/adapt_conv/w", std::move(wc));
    p.add("prog/adapt_conv/b", TensorF({c2}));
    TensorF wf({2 * cfg.d_model, cfg.d_model});
    for (int j = 0; j < cfg.d_model; ++j) wf.at(j, j) = 1.0f;
    p.add("prog/adapt_feat/w", std::move(wf));
    p.add("prog/adapt_feat/b", TensorF({cfg.d_model}));
  }
  return p;
}

Model make_model(const ModelConfig& cfg, uint64_t seed) {
  return Model{cfg, init_params(cfg, seed, false), nullptr};
}

Model make_progressive_model(const ModelConfig& cfg, uint64_t seed,
                             std::shared_ptr<const ProgressiveColumn> column) {
  MARL_CHECK(column != nullptr, "progressive model requires a frozen column");
  MARL_CHECK(column->cfg.height == cfg.height && column->cfg.width == cfg.width &&
                 column->cfg.in_channels == cfg.in_channels &&
                 column->cfg.conv2_channels == cfg.conv2_channels &&
                 column->cfg.d_model == cfg.d_model,
             "frozen column junction shapes do not match the trainable column");
  return Model{cfg, init_params(cfg, seed, true), std::move(column)};
}

ForwardValues forward_values(const Model& model, const TensorF& obs_batch, int groups) {
  TapeF tape;
  auto bp = BoundParams<float>::bind(tape, model.params);
  auto obs = tape.constant(obs_batch);
  ForwardOut<float> out;
  if (model.progressive()) {
    auto fp = BoundParams<float>::bind(tape, model.column->params);
    out = model_forward(tape, model.cfg, bp, obs, groups, &model.column->cfg, &fp);
  } else {
    out = model_forward(tape, model.cfg, bp, obs, groups);
  }
  ForwardValues v;
  v.policy_logits = tape.value(out.policy_logits);
  v.value = tape.value(out.value);
  v.loc_h = tape.value(out.loc_h);
  v.loc_w = tape.value(out.loc_w);
  v.attn_weights = std::move(out.attn_weights);
  return v;
}

Evaluator::Evaluator(const Model& model) : model_(&model) {
  params_ = BoundParams<float>::bind(tape_, model.params);
  if (model.progressive()) frozen_ = BoundParams<float>::bind(tape_, model.column->params);
  mark_ = tape_.mark();
}

ForwardValues Evaluator::operator()(const TensorF& obs_batch, int groups) {
  tape_.rewind(mark_);
  auto obs = tape_.constant(obs_batch);
  ForwardOut<float> out =
      model_->progressive()
          ? model_forward(tape_, model_->cfg, params_, obs, groups, &model_->column->cfg,
                          &frozen_)
          : model_forward(tape_, model_->cfg, params_, obs, groups);
  ForwardValues v;
  v.policy_logits = tape_.value(out.policy_logits);
  v.value = tape_.value(out.value);
  v.loc_h = tape_.value(out.loc_h);
  v.loc_w = tape_.value(out.loc_w);
  v.attn_weights = std::move(out.attn_weights);
  return v;
}

float log_softmax_at(const float* row, int n, int idx) {
  float mx = row[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
  float z = 0;
  for (int j = 0; j < n; ++j) z += std::exp(row[j] - mx);
  return row[idx] - (std::log(z) + mx);
}

const char* transfer_mode_name(TransferMode m) {
  switch (m) {
    case TransferMode::Scratch: return "scratch";
    case TransferMode::Init: return "init";
    case TransferMode::Progressive: return "progressive";
  }
  return "?";
}

std::vector<std::string> init_from_checkpoint(Model& model, const Params& ckpt) {
  std::vector<std::string> unmatched;
  for (auto& e : model.params.entries) {
    const bool fresh_head = e.name.rfind("heads/policy", 0) == 0 ||
                            e.name.rfind("heads/value", 0) == 0;
    if (fresh_head) continue;
    if (!ckpt.has(e.name)) {
      unmatched.push_back(e.name);
      continue;
    }
    const TensorF& src = ckpt.at(e.name);
    MARL_CHECK(src.shape == e.value.shape, "checkpoint tensor ", e.name, " has shape ",
               shape_str(src.shape), " but the model expects ", shape_str(e.value.shape));
    e.value = src;
  }
  return unmatched;
}

ProgressiveColumn make_frozen_column(const ModelConfig& ckpt_cfg, const Params& ckpt) {
  ProgressiveColumn col;
  col.cfg = ckpt_cfg;
  for (const auto& e : ckpt.entries) {
    if (e.name.rfind("encoder/", 0) == 0 || e.name.rfind("attn/", 0) == 0)
      col.params.add(e.name, e.value, /*trainable=*/false);
  }
  MARL_CHECK(col.params.has("encoder/conv1/w") && col.params.has("encoder/fc/w"),
             "checkpoint does not contain a usable encoder for a frozen column");
  if (ckpt_cfg.kind == ModelKind::Acnn)
    MARL_CHECK(col.params.has("attn/head0/q"),
               "ACNN checkpoint is missing attention tensors for the frozen column");
  return col;
}

}  // namespace marl
