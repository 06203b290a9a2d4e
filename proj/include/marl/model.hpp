#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "marl/params.hpp"
#include "marl/rng.hpp"
#include "marl/tape.hpp"
#include "marl/tensor.hpp"

namespace marl {

enum class ModelKind { Cnn, Acnn };

inline const char* model_kind_name(ModelKind k) {
  return k == ModelKind::Cnn ? "cnn" : "acnn";
}

// Architecture description. All agents share one parameter set; the forward
// pass runs per agent, and for ACNN the attention block mixes the per-agent
// features of each group of `num_agents` rows.
struct ModelConfig {
  ModelKind kind = ModelKind::Cnn;
  int in_channels = 16;  // observation channels x stacked frames
  int height = 11;
  int width = 16;
  int num_agents = 4;
  int action_count = 6;
  int conv1_channels = 16;
  int conv2_channels = 32;
  int d_model = 64;
  int attn_heads = 2;
  int d_k = 32;
  float ln_eps = 1e-5f;

  int flat_dim() const { return conv2_channels * height * width; }
};

// A frozen pre-trained column: encoder (+ attention when the checkpoint was
// an ACNN). Its parameters are bound without gradients and must stay bitwise
// constant across training.
struct ProgressiveColumn {
  ModelConfig cfg;
  Params params;
};

struct Model {
  ModelConfig cfg;
  Params params;
  std::shared_ptr<const ProgressiveColumn> column;  // set in progressive mode

  bool progressive() const { return column != nullptr; }
};

// Fresh initialization: fan-in-scaled uniform for conv/linear maps, zeros for
// biases, ones/zeros for layer-norm gain/bias. Draw order is entry order, so
// a (config, seed) pair fully determines the parameters.
Params init_params(const ModelConfig& cfg, uint64_t seed, bool progressive_adapters = false);

Model make_model(const ModelConfig& cfg, uint64_t seed);

// Attaches zero/identity-initialized lateral adapters and the frozen column.
// With fresh adapters, the step-0 forward equals the trainable column alone.
Model make_progressive_model(const ModelConfig& cfg, uint64_t seed,
                             std::shared_ptr<const ProgressiveColumn> column);

template <typename T>
struct ForwardOut {
  typename Tape<T>::Var policy_logits;  // [M, A]
  typename Tape<T>::Var value;          // [M]
  typename Tape<T>::Var loc_h;          // [M, H] logits
  typename Tape<T>::Var loc_w;          // [M, W] logits
  typename Tape<T>::Var features;       // [M, d_model] head input
  std::vector<Tensor<T>> attn_weights;  // per head [G,N,N]; empty for CNN
};

namespace detail {

template <typename T>
typename Tape<T>::Var linear(Tape<T>& tape, typename Tape<T>::Var x,
                             const BoundParams<T>& p, const std::string& prefix) {
  return tape.add_bias(tape.matmul(x, p[prefix + "/w"]), p[prefix + "/b"]);
}

// Encoder trunk: conv1-relu-conv2-relu. Returns the post-conv activation.
template <typename T>
typename Tape<T>::Var conv_trunk(Tape<T>& tape, typename Tape<T>::Var obs,
                                 const BoundParams<T>& p) {
  auto c1 = tape.relu(tape.conv2d(obs, p["encoder/conv1/w"], p["encoder/conv1/b"]));
  return tape.relu(tape.conv2d(c1, p["encoder/conv2/w"], p["encoder/conv2/b"]));
}

// f_fc over the flattened conv activation.
template <typename T>
typename Tape<T>::Var fc_feature(Tape<T>& tape, typename Tape<T>::Var conv_act,
                                 const ModelConfig& cfg, const BoundParams<T>& p, int rows) {
  auto flat = tape.reshape(conv_act, {rows, cfg.flat_dim()});
  return tape.relu(linear(tape, flat, p, "encoder/fc"));
}

// Agent-centric attention: q/k/v from the pre-normed feature, per-head
// softmax over the group's keys, heads concatenated and mapped back to
// d_model, then residual add + layer norm.
template <typename T>
typename Tape<T>::Var attention_block(Tape<T>& tape, typename Tape<T>::Var z,
                                      const ModelConfig& cfg, const BoundParams<T>& p,
                                      int groups, std::vector<Tensor<T>>* weights_out) {
  const int n = cfg.num_agents;
  const int rows = groups * n;
  auto u = tape.layer_norm(z, p["attn/ln_in/gain"], p["attn/ln_in/bias"], T(cfg.ln_eps));
  typename Tape<T>::Var cat;
  for (int h = 0; h < cfg.attn_heads; ++h) {
    const std::string hp = "attn/head" + std::to_string(h);
    auto q = tape.reshape(tape.matmul(u, p[hp + "/q"]), {groups, n, cfg.d_k});
    auto k = tape.reshape(tape.matmul(u, p[hp + "/k"]), {groups, n, cfg.d_k});
    auto v = tape.reshape(tape.matmul(u, p[hp + "/v"]), {groups, n, cfg.d_k});
    auto scores = tape.scale(tape.bmm_nt(q, k), T(1) / T(std::sqrt(double(cfg.d_k))));
    auto w = tape.softmax_rows_canonical(scores);  // [G,N,N]
    if (weights_out) weights_out->push_back(tape.value(w));
    auto mixed = tape.reshape(tape.bmm_weighted_canonical(w, v), {rows, cfg.d_k});
    cat = h == 0 ? mixed : tape.concat_cols(cat, mixed);
  }
  auto vt = tape.add_bias(tape.matmul(cat, p["attn/out/w"]), p["attn/out/b"]);
  return tape.layer_norm(tape.add(z, vt), p["attn/ln_out/gain"], p["attn/ln_out/bias"],
                         T(cfg.ln_eps));
}

}  // namespace detail

// Full forward pass over a batch of M = groups * num_agents observations
// (CNN ignores the grouping). `frozen` supplies the progressive column's
// bound parameters when the model carries one.
template <typename T>
ForwardOut<T> model_forward(Tape<T>& tape, const ModelConfig& cfg, const BoundParams<T>& p,
                            typename Tape<T>::Var obs, int groups,
                            const ModelConfig* frozen_cfg = nullptr,
                            const BoundParams<T>* frozen = nullptr) {
  const Tensor<T>& obs_v = tape.value(obs);
  MARL_CHECK(obs_v.rank() == 4 && obs_v.dim(1) == cfg.in_channels &&
                 obs_v.dim(2) == cfg.height && obs_v.dim(3) == cfg.width,
             "observation batch shape ", shape_str(obs_v.shape),
             " does not match model input [M,", cfg.in_channels, ",", cfg.height, ",",
             cfg.width, "]");
  const int rows = obs_v.dim(0);
  MARL_CHECK(rows >= 1, "empty observation batch");
  if (cfg.kind == ModelKind::Acnn || frozen_cfg) {
    MARL_CHECK(groups >= 1 && rows == groups * cfg.num_agents,
               "batch of ", rows, " rows is not ", groups, " groups of ", cfg.num_agents,
               " agents");
  }

  auto conv = detail::conv_trunk(tape, obs, p);

  typename Tape<T>::Var frozen_feat;  // frozen column feature (post fc / attention)
  if (frozen_cfg) {
    auto fconv = detail::conv_trunk(tape, obs, *frozen);
    frozen_feat = detail::fc_feature(tape, fconv, *frozen_cfg, *frozen, rows);
    if (frozen_cfg->kind == ModelKind::Acnn)
      frozen_feat = detail::attention_block(tape, frozen_feat, *frozen_cfg, *frozen, groups,
                                            static_cast<std::vector<Tensor<T>>*>(nullptr));
    // Junction 1: rectified frozen conv activation enters through a 1x1
    // conv adapter initialized to [identity | zero].
    auto cat = tape.concat_channels(conv, tape.relu(fconv));
    conv = tape.conv2d(cat, p["prog/adapt_conv/w"], p["prog/adapt_conv/b"]);
  }

  auto feat = detail::fc_feature(tape, conv, cfg, p, rows);

  ForwardOut<T> out;
  if (cfg.kind == ModelKind::Acnn)
    feat = detail::attention_block(tape, feat, cfg, p, groups, &out.attn_weights);

  if (frozen_cfg) {
    // Junction 2: rectified frozen feature, concatenated and mapped back to
    // d_model before the heads.
    auto cat = tape.concat_cols(feat, tape.relu(frozen_feat));
    feat = detail::linear(tape, cat, p, "prog/adapt_feat");
  }

  out.features = feat;
  out.policy_logits = detail::linear(tape, feat, p, "heads/policy");
  out.value = tape.reshape(detail::linear(tape, feat, p, "heads/value"), {rows});
  out.loc_h = detail::linear(tape, feat, p, "heads/loc_h");
  out.loc_w = detail::linear(tape, feat, p, "heads/loc_w");
  return out;
}

// Inference helper: runs the model on a private tape and returns plain values.
struct ForwardValues {
  TensorF policy_logits;  // [M, A]
  TensorF value;          // [M]
  TensorF loc_h, loc_w;   // [M, H], [M, W] logits
  std::vector<TensorF> attn_weights;
};
ForwardValues forward_values(const Model& model, const TensorF& obs_batch, int groups);

// Binds the parameters once and serves many small forward passes by
// rewinding the tape between calls (rollout workers, match play, dumps).
class Evaluator {
 public:
  explicit Evaluator(const Model& model);
  ForwardValues operator()(const TensorF& obs_batch, int groups);

 private:
  const Model* model_;
  Tape<float> tape_;
  BoundParams<float> params_;
  BoundParams<float> frozen_;
  size_t mark_;
};

// Float log-softmax of one row at one index, matching the tape kernel's
// arithmetic bit for bit (behavior-policy log-probs must equal the learner's
// recomputation when the policies coincide).
float log_softmax_at(const float* row, int n, int idx);

enum class TransferMode { Scratch, Init, Progressive };

const char* transfer_mode_name(TransferMode m);

// Weight-initialization transfer: copies encoder, attention and prediction
// heads from the checkpoint by name; policy/value heads stay fresh. Unmatched
// target tensors are reported (e.g. loading a CNN checkpoint into an ACNN
// leaves the attention block fresh). Shape conflicts reject the load.
std::vector<std::string> init_from_checkpoint(Model& model, const Params& ckpt);

// Builds the frozen column view of a checkpoint: encoder + attention only.
ProgressiveColumn make_frozen_column(const ModelConfig& ckpt_cfg, const Params& ckpt);

}  // namespace marl
