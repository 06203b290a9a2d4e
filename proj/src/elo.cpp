#include "marl/elo.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "marl/rng.hpp"

namespace marl {

double elo_expected(double rating_a, double rating_b) {
  return 1.0 / (1.0 + std::pow(10.0, (rating_b - rating_a) / 400.0));
}

RatingTable elo_estimate(const std::vector<MatchResult>& results, const EloConfig& cfg) {
  MARL_CHECK(!results.empty(), "elo_estimate needs at least one match");

  RatingTable out;
  for (const auto& m : results) {
    out.match_count[m.home] += 1;
    out.match_count[m.away] += 1;
  }

  std::vector<std::string> ids;
  for (const auto& [id, count] : out.match_count) {
    if (count == 0) {
      out.omitted.push_back(id);
      continue;
    }
    ids.push_back(id);
  }

  std::map<std::string, double> sum;
  for (const auto& id : ids) sum[id] = 0.0;

  std::vector<size_t> order(results.size());
  for (int seed = 0; seed < cfg.shuffle_seeds; ++seed) {
    std::map<std::string, double> rating;
    for (const auto& id : ids) rating[id] = cfg.initial_rating;
    RngStream rng(uint64_t(seed), 0xE10ULL);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      for (size_t i = 0; i < order.size(); ++i) order[i] = i;
      for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[size_t(rng.next_below(i))]);
      for (size_t idx : order) {
        const MatchResult& m = results[idx];
        const double e_home = elo_expected(rating[m.home], rating[m.away]);
        const double s_home = m.outcome == MatchResult::Outcome::Win    ? 1.0
                              : m.outcome == MatchResult::Outcome::Loss ? 0.0
                                                                        : 0.5;
        const double delta = cfg.k_factor * (s_home - e_home);
        rating[m.home] += delta;
        rating[m.away] -= delta;  // zero-sum by construction
      }
    }
    for (const auto& id : ids) sum[id] += rating[id];
  }
  for (const auto& id : ids) out.rating[id] = sum[id] / double(cfg.shuffle_seeds);
  return out;
}

std::string format_rating_table(const RatingTable& table) {
  std::vector<std::pair<std::string, double>> rows(table.rating.begin(), table.rating.end());
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.second > b.second; });
  std::ostringstream os;
  os << "agent                         rating   matches\n";
  for (const auto& [id, rating] : rows) {
    os << id << std::string(id.size() < 30 ? 30 - id.size() : 1, ' ');
    os.precision(1);
    os << std::fixed << rating << "   " << table.match_count.at(id) << "\n";
  }
  for (const auto& id : table.omitted) os << id << "  (omitted: no matches)\n";
  return os.str();
}

}  // namespace marl
