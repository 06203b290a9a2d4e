#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "marl/model.hpp"
#include "marl/tape.hpp"

namespace marl {

struct LossCoeffs {
  double value = 0.5;
  double entropy = 0.0005;
  double aux = 0.0;
};

struct LossBreakdown {
  double pg = 0;
  double value = 0;
  double entropy = 0;
  double aux_h = 0;
  double aux_w = 0;
  double total = 0;
};

inline double compose_total(double pg, double value, double entropy, double aux_h,
                            double aux_w, const LossCoeffs& c) {
  return pg + c.value * value - c.entropy * entropy + c.aux * (aux_h + aux_w);
}

// Per-row constants entering the RL loss. Advantages, importance weights and
// value targets are treated as constants: no gradient flows through them.
struct LossInputs {
  std::vector<int> actions;     // M
  std::vector<float> rho;       // M
  std::vector<float> advantage; // M
  std::vector<float> vs;        // M value targets
  std::vector<int> target_h;    // M (0 where invalid)
  std::vector<int> target_w;    // M
  std::vector<float> target_valid;  // M in {0,1}
  LossCoeffs coeffs;
};

template <typename T>
struct LossGraph {
  typename Tape<T>::Var total;
  LossBreakdown breakdown;
};

// No-grad NLL of -log softmax(logits)[target], masked mean in double.
template <typename T>
double masked_nll_value(const Tensor<T>& logits, const std::vector<int>& targets,
                        const std::vector<float>& valid, double valid_count) {
  const int m = logits.dim(0), n = logits.dim(1);
  double acc = 0;
  for (int i = 0; i < m; ++i) {
    if (valid[size_t(i)] == 0.0f) continue;
    const T* row = logits.ptr() + size_t(i) * n;
    double mx = double(row[0]);
    for (int j = 1; j < n; ++j) mx = std::max(mx, double(row[j]));
    double z = 0;
    for (int j = 0; j < n; ++j) z += std::exp(double(row[j]) - mx);
    acc += -(double(row[targets[size_t(i)]]) - mx - std::log(z)) * double(valid[size_t(i)]);
  }
  return valid_count > 0 ? acc / valid_count : 0.0;
}

// Masked mean of -log softmax(logits)[target] over rows with valid targets.
template <typename T>
typename Tape<T>::Var location_nll(Tape<T>& tape, typename Tape<T>::Var logits,
                                   const std::vector<int>& targets,
                                   const std::vector<float>& valid, double valid_count) {
  auto lp = tape.gather_cols(tape.log_softmax_rows(logits), targets);
  Tensor<T> mask({int(valid.size())});
  for (size_t i = 0; i < valid.size(); ++i) mask.data[i] = T(valid[i]);
  auto masked = tape.mul_const(lp, std::move(mask));
  return tape.scale(tape.reduce_sum_all(masked), T(-1.0 / valid_count));
}

// total = pg + 0.5 value - 0.0005 entropy + c_aux (aux_h + aux_w)
// pg      = -mean rho_t log pi(a_t|s_t) advantage_t
// value   = mean (vs - V)^2
// entropy = mean policy entropy
// aux     = masked mean of the next-location NLL per axis
template <typename T>
LossGraph<T> build_total_loss(Tape<T>& tape, const ForwardOut<T>& fwd,
                              const LossInputs& in) {
  const int m = int(in.actions.size());
  MARL_CHECK(tape.value(fwd.policy_logits).dim(0) == m,
             "loss inputs cover ", m, " rows but the forward pass produced ",
             tape.value(fwd.policy_logits).dim(0));

  auto lp_all = tape.log_softmax_rows(fwd.policy_logits);
  auto lp_a = tape.gather_cols(lp_all, in.actions);
  Tensor<T> w({m});
  for (int i = 0; i < m; ++i) w.data[size_t(i)] = T(in.rho[size_t(i)]) * T(in.advantage[size_t(i)]);
  auto pg = tape.scale(tape.reduce_mean_all(tape.mul_const(lp_a, std::move(w))), T(-1));

  Tensor<T> neg_vs({m});
  for (int i = 0; i < m; ++i) neg_vs.data[size_t(i)] = -T(in.vs[size_t(i)]);
  auto vdiff = tape.add_const(fwd.value, std::move(neg_vs));
  auto value_loss = tape.reduce_mean_all(tape.mul(vdiff, vdiff));

  auto probs = tape.softmax_rows(fwd.policy_logits);
  auto plogp = tape.reduce_sum_rows(tape.mul(probs, lp_all));
  auto entropy = tape.scale(tape.reduce_mean_all(plogp), T(-1));

  LossGraph<T> out;
  out.breakdown.pg = double(tape.value(pg).data[0]);
  out.breakdown.value = double(tape.value(value_loss).data[0]);
  out.breakdown.entropy = double(tape.value(entropy).data[0]);

  auto total = tape.add(pg, tape.scale(value_loss, T(in.coeffs.value)));
  total = tape.add(total, tape.scale(entropy, T(-in.coeffs.entropy)));

  double valid_count = 0;
  for (float v : in.target_valid) valid_count += v;
  if (valid_count > 0) {
    if (in.coeffs.aux != 0.0) {
      auto aux_h = location_nll(tape, fwd.loc_h, in.target_h, in.target_valid, valid_count);
      auto aux_w = location_nll(tape, fwd.loc_w, in.target_w, in.target_valid, valid_count);
      out.breakdown.aux_h = double(tape.value(aux_h).data[0]);
      out.breakdown.aux_w = double(tape.value(aux_w).data[0]);
      total = tape.add(total, tape.scale(tape.add(aux_h, aux_w), T(in.coeffs.aux)));
    } else {
      // Prediction heads get no gradient, but the NLL is still reported.
      out.breakdown.aux_h = masked_nll_value(tape.value(fwd.loc_h), in.target_h,
                                             in.target_valid, valid_count);
      out.breakdown.aux_w = masked_nll_value(tape.value(fwd.loc_w), in.target_w,
                                             in.target_valid, valid_count);
    }
  }
  out.total = total;
  out.breakdown.total = compose_total(out.breakdown.pg, out.breakdown.value,
                                      out.breakdown.entropy, out.breakdown.aux_h,
                                      out.breakdown.aux_w, in.coeffs);
  return out;
}

}  // namespace marl
