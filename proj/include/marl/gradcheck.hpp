#pragma once

#include <functional>
#include <map>
#include <string>

#include "marl/model.hpp"
#include "marl/params.hpp"
#include "marl/tape.hpp"

namespace marl {

struct GradCheckOptions {
  double h = 1e-5;            // central-difference step
  int samples_per_kind = 64;  // sampled scalars per layer kind
  uint64_t seed = 0;
  // A rectifier kink inside the FD window makes the central difference
  // meaningless for that scalar. Windows where the forward and backward
  // one-sided differences disagree by more than this fraction of the local
  // scale are resampled (the replacement keeps the per-kind budget).
  double kink_tol = 2e-4;
};

struct GradCheckReport {
  double max_rel_err = 0;
  std::map<std::string, double> per_kind;  // layer kind -> max relative error
  int64_t scalars_checked = 0;
  int64_t kink_windows_resampled = 0;
  std::string worst_param;
  int64_t worst_index = -1;

  bool pass(double threshold) const { return max_rel_err <= threshold; }
};

// conv / linear / layer_norm / attention, by checkpoint name.
std::string layer_kind(const std::string& param_name);

// Builds a scalar loss from bound parameters. Must be a deterministic pure
// function of the parameters; the harness aborts if two evaluations of the
// unperturbed loss differ bitwise.
using LossBuilder =
    std::function<Tape<double>::Var(Tape<double>&, const BoundParams<double>&)>;

// Compares reverse-mode gradients against central finite differences in
// extended precision on >= samples_per_kind scalars from every layer kind
// present in `params`.
GradCheckReport grad_check(const ParamStore<double>& params, const LossBuilder& loss,
                           const GradCheckOptions& opts);

// Full-model check: the composed RL loss (policy gradient + value + entropy
// + active auxiliary term) on a synthetic scenario derived from `seed`.
GradCheckReport grad_check_model(const ModelConfig& cfg, uint64_t seed,
                                 const GradCheckOptions& opts,
                                 bool progressive = false);

}  // namespace marl
