#include "marl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "marl/loss.hpp"
#include "marl/rng.hpp"

namespace marl {

std::string layer_kind(const std::string& name) {
  if (name.rfind("attn/head", 0) == 0) return "attention";
  if (name.find("/ln_") != std::string::npos) return "layer_norm";
  if (name.find("conv") != std::string::npos) return "conv";
  return "linear";
}

namespace {

double eval_loss(const ParamStore<double>& params, const LossBuilder& loss) {
  Tape<double> tape;
  auto bp = BoundParams<double>::bind(tape, params);
  auto v = loss(tape, bp);
  return tape.value(v).data[0];
}

}  // namespace

GradCheckReport grad_check(const ParamStore<double>& params, const LossBuilder& loss,
                           const GradCheckOptions& opts) {
  // Determinism gate: the check is meaningless on a noisy forward pass.
  {
    const double l0 = eval_loss(params, loss);
    const double l1 = eval_loss(params, loss);
    MARL_CHECK(std::memcmp(&l0, &l1, sizeof(double)) == 0,
               "non-deterministic forward pass under fixed seed; check aborted");
  }

  // Analytic gradients from one reverse pass.
  std::vector<Tensor<double>> grads;
  {
    Tape<double> tape;
    auto bp = BoundParams<double>::bind(tape, params);
    auto v = loss(tape, bp);
    tape.backward(v);
    grads = bp.gradients();
  }

  // Uniformly sample scalars per layer kind, without replacement.
  std::map<std::string, std::vector<std::pair<size_t, int64_t>>> kind_prefix;
  std::map<std::string, int64_t> kind_total;
  for (size_t e = 0; e < params.entries.size(); ++e) {
    if (!params.entries[e].trainable) continue;
    const std::string kind = layer_kind(params.entries[e].name);
    kind_prefix[kind].push_back({e, kind_total[kind]});
    kind_total[kind] += params.entries[e].value.size();
  }

  GradCheckReport report;
  RngStream rng(opts.seed, 0x67636865636bULL);
  ParamStore<double> mutable_params = params;
  const double base_loss = eval_loss(params, loss);

  for (const auto& [kind, entries] : kind_prefix) {
    const int64_t total = kind_total[kind];
    const int64_t want = std::min<int64_t>(opts.samples_per_kind, total);
    std::unordered_set<int64_t> picked;
    double kind_max = 0;
    int64_t checked = 0;
    int64_t attempts = 0;
    while (checked < want && attempts < 20 * want) {
      ++attempts;
      const int64_t flat = int64_t(rng.next_below(uint64_t(total)));
      if (!picked.insert(flat).second) continue;
      // Locate (entry, index) for the flat scalar id.
      size_t entry = entries.back().first;
      int64_t base = entries.back().second;
      for (size_t i = 1; i < entries.size(); ++i) {
        if (flat < entries[i].second) {
          entry = entries[i - 1].first;
          base = entries[i - 1].second;
          break;
        }
      }
      const int64_t idx = flat - base;
      double& slot = mutable_params.entries[entry].value.data[size_t(idx)];
      const double saved = slot;
      slot = saved + opts.h;
      const double lp = eval_loss(mutable_params, loss);
      slot = saved - opts.h;
      const double lm = eval_loss(mutable_params, loss);
      slot = saved;
      const double fd = (lp - lm) / (2.0 * opts.h);
      const double an = grads[entry].data[size_t(idx)];
      const double fd_fwd = (lp - base_loss) / opts.h;
      const double fd_bwd = (base_loss - lm) / opts.h;
      const double scale = std::max({std::abs(fd), std::abs(an), 1e-6});
      if (std::abs(fd_fwd - fd_bwd) > opts.kink_tol * scale &&
          int64_t(picked.size()) < total) {
        ++report.kink_windows_resampled;
        continue;
      }
      const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8});
      ++checked;
      ++report.scalars_checked;
      kind_max = std::max(kind_max, rel);
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = params.entries[entry].name;
        report.worst_index = idx;
      }
    }
    report.per_kind[kind] = kind_max;
  }
  return report;
}

GradCheckReport grad_check_model(const ModelConfig& cfg, uint64_t seed,
                                 const GradCheckOptions& opts, bool progressive) {
  RngStream rng(seed, 0x7363656eULL);

  // Synthetic scenario: random binary observations, random actions and
  // targets, random constant weights. Small enough that 4 x 64 x 2 forward
  // evaluations stay well under a minute.
  const int groups = 4;
  const int rows = groups * cfg.num_agents;
  TensorF obs({rows, cfg.in_channels, cfg.height, cfg.width});
  for (auto& v : obs.data) v = rng.bernoulli(0.15) ? 1.0f : 0.0f;

  LossInputs in;
  // Auxiliary term active. The sweep-sized coefficient (5e-4) would leave the
  // prediction-head gradients ~1e-5 of the loss scale, below what central
  // differences resolve in double; a larger weight checks the same graph.
  in.coeffs.aux = 0.05;
  for (int i = 0; i < rows; ++i) {
    in.actions.push_back(int(rng.next_below(uint64_t(cfg.action_count))));
    in.rho.push_back(0.5f + rng.next_float());
    in.advantage.push_back(2.0f * rng.next_float() - 1.0f);
    in.vs.push_back(2.0f * rng.next_float() - 1.0f);
    in.target_h.push_back(int(rng.next_below(uint64_t(cfg.height))));
    in.target_w.push_back(int(rng.next_below(uint64_t(cfg.width))));
    in.target_valid.push_back(1.0f);
  }

  Model model = progressive
                    ? make_progressive_model(cfg, seed, std::make_shared<ProgressiveColumn>(
                                                            make_frozen_column(
                                                                cfg, init_params(cfg, seed ^ 0x5a5aULL))))
                    : make_model(cfg, seed);

  ParamStore<double> params = model.params.cast<double>();
  Tensor<double> obs_d = obs.cast<double>();
  ModelConfig frozen_cfg = model.progressive() ? model.column->cfg : ModelConfig{};
  ParamStore<double> frozen_params =
      model.progressive() ? model.column->params.cast<double>() : ParamStore<double>{};

  LossBuilder builder = [&, obs_d](Tape<double>& tape,
                                   const BoundParams<double>& bp) -> Tape<double>::Var {
    auto obs_var = tape.constant(obs_d);
    ForwardOut<double> fwd;
    if (model.progressive()) {
      auto fp = BoundParams<double>::bind(tape, frozen_params);
      fwd = model_forward(tape, cfg, bp, obs_var, groups, &frozen_cfg, &fp);
    } else {
      fwd = model_forward(tape, cfg, bp, obs_var, groups);
    }
    return build_total_loss(tape, fwd, in).total;
  };

  return grad_check(params, builder, opts);
}

}  // namespace marl
