#pragma once

#include <map>
#include <string>
#include <vector>

#include "marl/match.hpp"

namespace marl {

struct EloConfig {
  double k_factor = 32.0;
  double initial_rating = 1000.0;
  int epochs = 100;         // passes over the shuffled match list per seed
  int shuffle_seeds = 100;  // final table averages these independent runs
};

struct RatingTable {
  std::map<std::string, double> rating;
  std::map<std::string, int> match_count;
  std::vector<std::string> omitted;  // agents without matches
};

// Expected score of a rated player against another.
double elo_expected(double rating_a, double rating_b);

// Sequential update over the shuffled match list, multi-epoch, averaged over
// shuffle seeds; ties score 0.5. Any single update is zero-sum.
RatingTable elo_estimate(const std::vector<MatchResult>& results, const EloConfig& cfg);

std::string format_rating_table(const RatingTable& table);

}  // namespace marl
