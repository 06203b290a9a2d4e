#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "marl/observation.hpp"

namespace marl {

// One fixed-length unroll for all N agents. Rows are time-major with agents
// minor: index t*N + i. Observations include the bootstrap row at T. The
// next-location targets at an episode's final step carry no valid t+1 and
// are masked out of the prediction loss.
struct Trajectory {
  int num_agents = 0;
  int length = 0;  // T
  int height = 0, width = 0;

  std::vector<Observation> obs;     // (T+1)*N
  std::vector<int> actions;         // T*N
  std::vector<float> log_mu;        // T*N behavior log-probs
  std::vector<float> rewards;       // T*N shaped rewards
  std::vector<uint8_t> boundary;    // T, set when the episode ended after step t
  std::vector<int> target_h;        // T*N
  std::vector<int> target_w;        // T*N
  std::vector<uint8_t> target_valid;  // T*N
  std::vector<float> episode_returns;  // team returns completed during this unroll

  void validate() const {
    const size_t rows = size_t(length) * num_agents;
    MARL_CHECK(num_agents >= 1 && length >= 1, "empty trajectory");
    MARL_CHECK(obs.size() == rows + size_t(num_agents) && actions.size() == rows &&
                   log_mu.size() == rows && rewards.size() == rows &&
                   boundary.size() == size_t(length) && target_h.size() == rows &&
                   target_w.size() == rows && target_valid.size() == rows,
               "trajectory sequence lengths disagree");
    for (float lm : log_mu)
      MARL_CHECK(std::isfinite(lm), "non-finite behavior log-prob in trajectory");
    for (size_t r = 0; r < rows; ++r) {
      MARL_CHECK(target_h[r] >= 0 && target_h[r] < height && target_w[r] >= 0 &&
                     target_w[r] < width,
                 "next-location target outside the grid");
    }
  }
};

}  // namespace marl
