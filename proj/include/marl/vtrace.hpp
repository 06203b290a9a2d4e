#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "marl/common.hpp"

namespace marl {

struct VTraceConfig {
  double gamma = 0.99;
  double rho_bar = 1.0;
  double c_bar = 1.0;
};

template <typename T>
struct VTraceOut {
  std::vector<T> vs;         // value targets, length T
  std::vector<T> advantage;  // policy-gradient advantages, length T
  std::vector<T> rho;        // truncated importance weights, length T
};

// Off-policy corrected value targets for one agent sequence.
//   delta_t = rho_t (r_t + gamma V(s_{t+1}) - V(s_t)),  rho_t = min(rho_bar, pi/mu)
//   vs_t    = V(s_t) + delta_t + gamma c_t (vs_{t+1} - V(s_{t+1})), c_t = min(c_bar, pi/mu)
//   adv_t   = rho_t (r_t + gamma vs_{t+1} - V(s_t))
// `values` has length T+1 (bootstrap last). A boundary flag at step t means
// the episode ended after that transition: the bootstrap is masked to zero
// and the recursion restarts.
template <typename T>
VTraceOut<T> vtrace_sequence(std::span<const T> log_pi, std::span<const T> log_mu,
                             std::span<const T> rewards, std::span<const T> values,
                             std::span<const uint8_t> boundary, const VTraceConfig& cfg) {
  const size_t n = log_pi.size();
  MARL_CHECK(n >= 1, "empty sequence");
  MARL_CHECK(log_mu.size() == n && rewards.size() == n && boundary.size() == n &&
                 values.size() == n + 1,
             "vtrace sequence lengths disagree: T=", n, " mu=", log_mu.size(), " r=",
             rewards.size(), " V=", values.size(), " done=", boundary.size());
  VTraceOut<T> out;
  out.vs.resize(n);
  out.advantage.resize(n);
  out.rho.resize(n);

  T next_vs_minus_v = 0;  // vs_{t+1} - V(s_{t+1})
  for (size_t t = n; t-- > 0;) {
    const T ratio = std::exp(log_pi[t] - log_mu[t]);
    MARL_CHECK(std::isfinite(double(ratio)), "non-finite importance ratio at step ", t,
               ": log_pi=", log_pi[t], " log_mu=", log_mu[t], "; trajectory rejected");
    const T rho = std::min(T(cfg.rho_bar), ratio);
    const T c = std::min(T(cfg.c_bar), ratio);
    const T cont = boundary[t] ? T(0) : T(1);
    const T v_next = cont * values[t + 1];
    const T delta = rho * (rewards[t] + T(cfg.gamma) * v_next - values[t]);
    const T vs_minus_v = delta + T(cfg.gamma) * cont * c * next_vs_minus_v;
    out.vs[t] = values[t] + vs_minus_v;
    out.rho[t] = rho;
    next_vs_minus_v = vs_minus_v;
  }
  for (size_t t = 0; t < n; ++t) {
    const T cont = boundary[t] ? T(0) : T(1);
    const T vs_next = t + 1 < n ? out.vs[t + 1] : values[n];
    const T q = rewards[t] + T(cfg.gamma) * cont * vs_next;
    out.advantage[t] = out.rho[t] * (q - values[t]);
  }
  return out;
}

}  // namespace marl
