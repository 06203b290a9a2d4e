#include <doctest.h>

#include "marl/gradcheck.hpp"
#include "marl/loss.hpp"
#include "marl/rng.hpp"

using namespace marl;

namespace {

ModelConfig micro_config(ModelKind kind) {
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
  cfg.attn_heads = 2;
  cfg.d_k = 8;
  return cfg;
}

}  // namespace

TEST_CASE("grad_check: quadratic toy model is exact to 1e-9") {
  ParamStore<double> params;
  RngStream rng(5, 0);
  TensorD w({4, 3});
  for (auto& v : w.data) v = 2.0 * rng.next_double() - 1.0;
  params.add("toy/fc/w", w);
  params.add("toy/fc/b", TensorD({3}, {0.1, -0.2, 0.3}));

  TensorD x({2, 4});
  for (auto& v : x.data) v = rng.next_double();
  LossBuilder builder = [x](Tape<double>& tape, const BoundParams<double>& p) {
    auto y = tape.add_bias(tape.matmul(tape.constant(x), p["toy/fc/w"]), p["toy/fc/b"]);
    return tape.reduce_mean_all(tape.mul(y, y));
  };
  GradCheckOptions opts;
  opts.h = 1e-5;
  auto report = grad_check(params, builder, opts);
  CHECK(report.scalars_checked == 15);  // whole store is smaller than the sample budget
  CHECK(report.max_rel_err <= 1e-9);
}

TEST_CASE("grad_check: layer-norm parameters pass at 1e-6") {
  ParamStore<double> params;
  RngStream rng(6, 0);
  params.add("attn/ln_in/gain", TensorD::full({8}, 1.0));
  params.add("attn/ln_in/bias", TensorD({8}));
  TensorD x({4, 8});
  for (auto& v : x.data) v = 3.0 * rng.next_double() - 1.5;
  LossBuilder builder = [x](Tape<double>& tape, const BoundParams<double>& p) {
    auto y = tape.layer_norm(tape.constant(x), p["attn/ln_in/gain"], p["attn/ln_in/bias"], 1e-5);
    return tape.reduce_mean_all(tape.mul(y, y));
  };
  auto report = grad_check(params, builder, GradCheckOptions{});
  CHECK(report.per_kind.count("layer_norm") == 1);
  CHECK(report.max_rel_err <= 1e-6);
}

TEST_CASE("grad_check: full CNN loss passes at 1e-5 with every layer kind sampled") {
  auto report = grad_check_model(micro_config(ModelKind::Cnn), 42, GradCheckOptions{});
  CHECK(report.per_kind.count("conv") == 1);
  CHECK(report.per_kind.count("linear") == 1);
  CHECK(report.max_rel_err <= 1e-5);
}

TEST_CASE("grad_check: full ACNN loss (attention, LN, all heads, aux) passes at 1e-6") {
  auto report = grad_check_model(micro_config(ModelKind::Acnn), 43, GradCheckOptions{});
  CHECK(report.per_kind.count("attention") == 1);
  CHECK(report.per_kind.count("layer_norm") == 1);
  CHECK(report.per_kind.at("attention") <= 1e-6);
  CHECK(report.per_kind.at("layer_norm") <= 1e-6);
  CHECK(report.max_rel_err <= 1e-5);
}

TEST_CASE("layer kinds classify by checkpoint name") {
  CHECK(layer_kind("encoder/conv1/w") == "conv");
  CHECK(layer_kind("prog/adapt_conv/w") == "conv");
  CHECK(layer_kind("attn/head0/q") == "attention");
  CHECK(layer_kind("attn/ln_out/gain") == "layer_norm");
  CHECK(layer_kind("heads/policy/w") == "linear");
  CHECK(layer_kind("attn/out/w") == "linear");
}
