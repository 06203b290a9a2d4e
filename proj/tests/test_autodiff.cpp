#include <doctest.h>

#include <cmath>

#include "marl/adam.hpp"
#include "marl/params.hpp"
#include "marl/tape.hpp"

using namespace marl;

TEST_CASE("backward: d(x^2)/dx at x=3 is 6") {
  TapeD tape;
  auto x = tape.leaf(TensorD::scalar(3.0), true);
  auto y = tape.mul(x, x);
  tape.backward(y);
  CHECK(tape.grad(x).data[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("backward: gradient of a sum of constants is zero everywhere") {
  TapeD tape;
  auto p = tape.leaf(TensorD({3}, {1, 2, 3}), true);
  auto c1 = tape.constant(TensorD::scalar(4.0));
  auto c2 = tape.constant(TensorD::scalar(5.0));
  auto y = tape.add(c1, c2);
  tape.backward(y);
  for (double g : tape.grad(p).data) CHECK(g == 0.0);
}

TEST_CASE("backward: parameters unreachable from the loss hold zero gradient") {
  TapeD tape;
  auto used = tape.leaf(TensorD::scalar(2.0), true);
  auto unused = tape.leaf(TensorD({4}, {1, 2, 3, 4}), true);
  auto dangling = tape.relu(unused);  // recorded but not part of the loss
  auto y = tape.mul(used, used);
  tape.backward(y);
  CHECK(tape.grad(used).data[0] == doctest::Approx(4.0));
  for (double g : tape.grad(unused).data) CHECK(g == 0.0);
  for (double g : tape.grad(dangling).data) CHECK(g == 0.0);
}

TEST_CASE("adam: first step displacement is -lr * g / (|g| + eps)") {
  ParamStore<double> params;
  params.add("w", TensorD({3}, {1.0, -2.0, 0.5}));
  AdamConfig cfg;
  cfg.lr = 0.01;
  Adam<double> adam(params, cfg);
  std::vector<TensorD> grads{TensorD({3}, {0.5, -0.25, 3.0})};
  adam.step(params, grads);
  CHECK(adam.step_count() == 1);
  const double expected[] = {1.0 - 0.01 * 0.5 / (0.5 + 1e-7),
                             -2.0 - 0.01 * (-0.25) / (0.25 + 1e-7),
                             0.5 - 0.01 * 3.0 / (3.0 + 1e-7)};
  for (int i = 0; i < 3; ++i)
    CHECK(params.at("w").data[size_t(i)] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  ParamStore<double> params;
  params.add("w", TensorD({4}, {1, 2, 3, 4}));
  Adam<double> adam(params, AdamConfig{});
  std::vector<TensorD> grads{TensorD({4})};
  adam.step(params, grads);
  adam.step(params, grads);
  CHECK(params.at("w").data == std::vector<double>{1, 2, 3, 4});
  CHECK(adam.step_count() == 2);
}

TEST_CASE("adam: the paper sweep learning rates are accepted") {
  for (double lr : {0.00007, 0.00014, 0.00028}) {
    ParamStore<float> params;
    params.add("w", TensorF({2}, {1.0f, 1.0f}));
    AdamConfig cfg;
    cfg.lr = lr;
    Adam<float> adam(params, cfg);
    std::vector<TensorF> grads{TensorF({2}, {1.0f, 1.0f})};
    adam.step(params, grads);
    CHECK(params.at("w").data[0] < 1.0f);
  }
}

TEST_CASE("adam: NaN or Inf gradients reject the update and name the parameter") {
  ParamStore<float> params;
  params.add("encoder/fc/w", TensorF({2}, {1.0f, 1.0f}));
  Adam<float> adam(params, AdamConfig{});
  std::vector<TensorF> grads{TensorF({2}, {0.1f, std::nanf("")})};
  CHECK_THROWS_WITH_AS(adam.step(params, grads), doctest::Contains("encoder/fc/w"),
                       ContractError);
  // rejected update must not advance the counter or the parameters
  CHECK(adam.step_count() == 0);
  CHECK(params.at("encoder/fc/w").data[0] == 1.0f);
}

TEST_CASE("adam: frozen entries never move") {
  ParamStore<float> params;
  params.add("frozen", TensorF({2}, {5.0f, 6.0f}), /*trainable=*/false);
  params.add("live", TensorF({2}, {1.0f, 1.0f}));
  Adam<float> adam(params, AdamConfig{});
  std::vector<TensorF> grads{TensorF({2}, {9.0f, 9.0f}), TensorF({2}, {0.5f, 0.5f})};
  adam.step(params, grads);
  CHECK(params.at("frozen").data == std::vector<float>{5.0f, 6.0f});
  CHECK(params.at("live").data[0] < 1.0f);
}
