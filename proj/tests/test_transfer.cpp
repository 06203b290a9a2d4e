#include <doctest.h>

#include "marl/adam.hpp"
#include "marl/loss.hpp"
#include "marl/model.hpp"
#include "marl/rng.hpp"

using namespace marl;

namespace {

ModelConfig micro_cfg(ModelKind kind) {
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.in_channels = 8;
  cfg.height = 6;
  cfg.width = 8;
  cfg.num_agents = 2;
  cfg.action_count = 5;
  cfg.conv1_channels = 4;
  cfg.conv2_channels = 6;
  cfg.d_model = 16;
  cfg.d_k = 8;
  return cfg;
}

TensorF random_obs(int rows, const ModelConfig& cfg, uint64_t seed) {
  RngStream rng(seed, 1);
  TensorF obs({rows, cfg.in_channels, cfg.height, cfg.width});
  for (auto& v : obs.data) v = rng.bernoulli(0.2) ? 1.0f : 0.0f;
  return obs;
}

LossInputs random_inputs(int rows, const ModelConfig& cfg, uint64_t seed, double aux) {
  RngStream rng(seed, 2);
  LossInputs in;
  in.coeffs.aux = aux;
  for (int i = 0; i < rows; ++i) {
    in.actions.push_back(int(rng.next_below(uint64_t(cfg.action_count))));
    in.rho.push_back(1.0f);
    in.advantage.push_back(rng.next_float() - 0.5f);
    in.vs.push_back(rng.next_float());
    in.target_h.push_back(int(rng.next_below(uint64_t(cfg.height))));
    in.target_w.push_back(int(rng.next_below(uint64_t(cfg.width))));
    in.target_valid.push_back(1.0f);
  }
  return in;
}

}  // namespace

TEST_CASE("init mode copies encoder/attention/prediction heads, keeps fresh policy/value") {
  ModelConfig cfg = micro_cfg(ModelKind::Acnn);
  Model pretrained = make_model(cfg, 100);
  // make the checkpoint's RL heads recognizably non-fresh
  for (auto& v : pretrained.params.at("heads/policy/w").data) v = 9.0f;
  for (auto& v : pretrained.params.at("heads/value/w").data) v = 9.0f;
  Model target = make_model(cfg, 200);
  Params fresh = target.params;

  auto unmatched = init_from_checkpoint(target, pretrained.params);
  CHECK(unmatched.empty());
  CHECK(target.params.at("encoder/conv1/w").data == pretrained.params.at("encoder/conv1/w").data);
  CHECK(target.params.at("attn/head0/q").data == pretrained.params.at("attn/head0/q").data);
  CHECK(target.params.at("heads/loc_h/w").data == pretrained.params.at("heads/loc_h/w").data);
  // policy and value heads stay at their fresh initialization
  CHECK(target.params.at("heads/policy/w").data == fresh.at("heads/policy/w").data);
  CHECK(target.params.at("heads/value/w").data == fresh.at("heads/value/w").data);
  CHECK(target.params.at("heads/policy/w").data !=
        pretrained.params.at("heads/policy/w").data);
}

TEST_CASE("loading a CNN checkpoint into an ACNN leaves attention fresh and reports it") {
  Model cnn = make_model(micro_cfg(ModelKind::Cnn), 300);
  Model acnn = make_model(micro_cfg(ModelKind::Acnn), 400);
  Params fresh = acnn.params;
  auto unmatched = init_from_checkpoint(acnn, cnn.params);
  CHECK(unmatched.size() == 12);
  for (const auto& name : unmatched) CHECK(name.rfind("attn/", 0) == 0);
  CHECK(acnn.params.at("encoder/fc/w").data == cnn.params.at("encoder/fc/w").data);
  CHECK(acnn.params.at("attn/head0/q").data == fresh.at("attn/head0/q").data);
}

TEST_CASE("shape conflicts reject the load and name the tensor") {
  ModelConfig a = micro_cfg(ModelKind::Cnn);
  ModelConfig b = micro_cfg(ModelKind::Cnn);
  b.d_model = 12;
  Model src = make_model(a, 1);
  Model dst = make_model(b, 2);
  CHECK_THROWS_WITH_AS(init_from_checkpoint(dst, src.params),
                       doctest::Contains("encoder/fc/w"), ContractError);
}

TEST_CASE("progressive: fresh adapters make step-0 output equal the trainable column alone") {
  ModelConfig cfg = micro_cfg(ModelKind::Cnn);
  auto column = std::make_shared<ProgressiveColumn>(
      make_frozen_column(cfg, init_params(cfg, 500)));
  Model prog = make_progressive_model(cfg, 600, column);
  Model plain{cfg, prog.params, nullptr};  // same trainable tensors, no column

  TensorF obs = random_obs(4, cfg, 700);
  ForwardValues with_column = forward_values(prog, obs, 2);
  ForwardValues alone = forward_values(plain, obs, 2);
  CHECK(with_column.policy_logits.data == alone.policy_logits.data);
  CHECK(with_column.value.data == alone.value.data);
  CHECK(with_column.loc_h.data == alone.loc_h.data);
}

TEST_CASE("progressive: frozen gradients are exactly zero and training never moves them") {
  ModelConfig cfg = micro_cfg(ModelKind::Acnn);
  auto column = std::make_shared<ProgressiveColumn>(
      make_frozen_column(cfg, init_params(cfg, 800)));
  Model prog = make_progressive_model(cfg, 900, column);
  const Params frozen_before = column->params;

  Adam<float> opt(prog.params, AdamConfig{.lr = 1e-3});
  TensorF obs = random_obs(4, cfg, 1000);
  LossInputs in = random_inputs(4, cfg, 1100, 0.0005);

  for (int step = 0; step < 50; ++step) {
    TapeF tape;
    auto bp = BoundParams<float>::bind(tape, prog.params);
    auto fp = BoundParams<float>::bind(tape, column->params);
    auto fwd = model_forward(tape, cfg, bp, tape.constant(obs), 2, &column->cfg, &fp);
    auto lg = build_total_loss(tape, fwd, in);
    tape.backward(lg.total);
    for (auto v : fp.vars)
      for (float g : tape.grad(v).data) CHECK(g == 0.0f);
    opt.step(prog.params, bp.gradients());
  }
  CHECK(column->params.bitwise_equal(frozen_before));
  // the trainable column did move
  CHECK(prog.params.at("encoder/conv1/w").data !=
        init_params(cfg, 900, true).at("encoder/conv1/w").data);
}

TEST_CASE("progressive: junction shape mismatch is a configuration error") {
  ModelConfig cfg = micro_cfg(ModelKind::Cnn);
  ModelConfig other = cfg;
  other.conv2_channels = 5;
  auto column = std::make_shared<ProgressiveColumn>(
      make_frozen_column(other, init_params(other, 1)));
  CHECK_THROWS_AS(make_progressive_model(cfg, 2, column), ContractError);
}

TEST_CASE("progressive: a CNN column can feed an ACNN trainable and vice versa") {
  ModelConfig cnn = micro_cfg(ModelKind::Cnn);
  ModelConfig acnn = micro_cfg(ModelKind::Acnn);
  auto cnn_col = std::make_shared<ProgressiveColumn>(make_frozen_column(cnn, init_params(cnn, 3)));
  Model a = make_progressive_model(acnn, 4, cnn_col);
  TensorF obs = random_obs(4, acnn, 5);
  ForwardValues va = forward_values(a, obs, 2);
  CHECK(va.policy_logits.shape == Shape{4, 5});

  auto acnn_col =
      std::make_shared<ProgressiveColumn>(make_frozen_column(acnn, init_params(acnn, 6)));
  Model b = make_progressive_model(cnn, 7, acnn_col);
  ForwardValues vb = forward_values(b, obs, 2);
  CHECK(vb.policy_logits.shape == Shape{4, 5});
  CHECK(vb.attn_weights.empty());  // trainable column is a CNN
}
