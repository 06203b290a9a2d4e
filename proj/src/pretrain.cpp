#include "marl/pretrain.hpp"

#include <algorithm>
#include <cmath>

#include "marl/adam.hpp"
#include "marl/loss.hpp"

namespace marl {

double agent_centric_nll(const TensorF& sigma_h, const TensorF& sigma_w,
                         std::span<const int> targets_h, std::span<const int> targets_w) {
  MARL_CHECK(sigma_h.rank() == 2 && sigma_w.rank() == 2 &&
                 sigma_h.dim(0) == sigma_w.dim(0) &&
                 int(targets_h.size()) == sigma_h.dim(0) &&
                 int(targets_w.size()) == sigma_h.dim(0),
             "agent_centric_nll shape mismatch");
  const int m = sigma_h.dim(0);
  double acc = 0;
  for (int i = 0; i < m; ++i) {
    MARL_CHECK(targets_h[size_t(i)] >= 0 && targets_h[size_t(i)] < sigma_h.dim(1),
               "row target ", targets_h[size_t(i)], " out of range at example ", i);
    MARL_CHECK(targets_w[size_t(i)] >= 0 && targets_w[size_t(i)] < sigma_w.dim(1),
               "col target ", targets_w[size_t(i)], " out of range at example ", i);
    acc += -std::log(double(sigma_h.at(i, targets_h[size_t(i)]))) -
           std::log(double(sigma_w.at(i, targets_w[size_t(i)])));
  }
  return acc / double(m);
}

double observe_all_loss(const TensorF& logits_h, const TensorF& logits_w,
                        std::span<const ObserveAllTarget> targets) {
  MARL_CHECK(logits_h.rank() == 2 && logits_w.rank() == 2 &&
                 int(targets.size()) == logits_h.dim(0) && logits_h.dim(0) == logits_w.dim(0),
             "observe_all_loss shape mismatch");
  const int m = logits_h.dim(0);
  double acc = 0;
  int64_t cells = 0;
  auto bce = [](double x, double t) {
    return std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
  };
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < logits_h.dim(1); ++j, ++cells)
      acc += bce(double(logits_h.at(i, j)), double(targets[size_t(i)].row_mask[size_t(j)]));
    for (int j = 0; j < logits_w.dim(1); ++j, ++cells)
      acc += bce(double(logits_w.at(i, j)), double(targets[size_t(i)].col_mask[size_t(j)]));
  }
  return acc / double(cells);
}

namespace {

struct BatchPlan {
  // each batch is a list of example indices; for grouped (attention) models
  // a batch is whole groups of N agents
  std::vector<int64_t> order;     // flattened units (examples or group ids)
  bool grouped = false;
};

TensorF assemble_batch(const ObservationDataset& ds, std::span<const int64_t> rows,
                       std::vector<int>& th, std::vector<int>& tw) {
  const int planes = ds.header.stack * ds.header.channels;
  TensorF obs({int(rows.size()), planes, ds.header.height, ds.header.width});
  const size_t per = size_t(planes) * ds.header.height * ds.header.width;
  th.clear();
  tw.clear();
  for (size_t r = 0; r < rows.size(); ++r) {
    const DatasetExample& ex = ds.examples[size_t(rows[r])];
    ds.unpack_planes(ex, obs.ptr() + r * per);
    th.push_back(ex.target_h);
    tw.push_back(ex.target_w);
  }
  return obs;
}

double eval_split(const Model& model, const ObservationDataset& ds,
                  std::span<const int64_t> rows, const PretrainConfig& cfg) {
  const int n = model.cfg.num_agents;
  const bool grouped = model.cfg.kind == ModelKind::Acnn;
  Evaluator eval(model);
  std::vector<int> th, tw;
  double acc = 0;
  int64_t count = 0;
  const size_t chunk = grouped ? size_t(std::max(1, 64 / n)) * size_t(n) : 64;
  for (size_t at = 0; at < rows.size(); at += chunk) {
    const size_t take = std::min(chunk, rows.size() - at);
    if (grouped && take % size_t(n) != 0) break;  // drop the ragged tail
    TensorF obs = assemble_batch(ds, rows.subspan(at, take), th, tw);
    ForwardValues v = eval(obs, grouped ? int(take) / n : 1);
    if (cfg.objective == PretrainObjective::AgentCentric) {
      for (size_t i = 0; i < take; ++i) {
        acc += -double(log_softmax_at(v.loc_h.ptr() + i * ds.header.height, ds.header.height,
                                      th[i])) -
               double(log_softmax_at(v.loc_w.ptr() + i * ds.header.width, ds.header.width,
                                     tw[i]));
        ++count;
      }
    } else {
      std::vector<ObserveAllTarget> targets;
      for (size_t i = 0; i < take; ++i) {
        const DatasetExample& ex = ds.examples[size_t(rows[at + i])];
        targets.push_back(ds.observe_all_target(ex.episode, ex.step));
      }
      acc += observe_all_loss(v.loc_h, v.loc_w, targets) * double(take);
      count += int64_t(take);
    }
  }
  MARL_CHECK(count > 0, "validation split produced no evaluable batch");
  return acc / double(count);
}

}  // namespace

PretrainResult pretrain(Model& model, const ObservationDataset& ds, const PretrainConfig& cfg) {
  MARL_CONFIG_CHECK(cfg.batch_size >= 1 && cfg.eval_every >= 1 && cfg.patience >= 1,
                    "bad pretrain config");
  MARL_CHECK(model.cfg.height == ds.header.height && model.cfg.width == ds.header.width,
             "model grid does not match the dataset");
  const auto train_rows = ds.train_indices();
  const auto val_rows = ds.validation_indices();
  MARL_CONFIG_CHECK(!val_rows.empty(), "empty validation split");
  MARL_CHECK(!train_rows.empty(), "empty training split");

  const int n = model.cfg.num_agents;
  const bool grouped = model.cfg.kind == ModelKind::Acnn;

  // Units the shuffle runs over: examples, or whole (episode, step) groups.
  std::vector<std::vector<int64_t>> group_rows;
  std::vector<int64_t> units;
  if (grouped) {
    auto all_groups = ds.groups();
    for (auto& g : all_groups) {
      if (int(g.size()) != n) continue;  // partial groups can't feed attention
      bool in_train = true;
      for (int64_t r : g)
        if (std::binary_search(val_rows.begin(), val_rows.end(), r)) in_train = false;
      if (!in_train) continue;
      units.push_back(int64_t(group_rows.size()));
      group_rows.push_back(std::move(g));
    }
    MARL_CHECK(!units.empty(), "no full agent groups in the training split");
  } else {
    units = train_rows;
  }
  const int units_per_batch =
      grouped ? std::max(1, (cfg.batch_size + n - 1) / n) : cfg.batch_size;

  Adam<float> opt(model.params, AdamConfig{.lr = cfg.lr});
  RngStream shuffle_rng(cfg.seed, 0x70726574ULL);

  PretrainResult res;
  res.best_params = model.params;
  res.best_val_nll = eval_split(model, ds, val_rows, cfg);
  res.val_curve.push_back({0, res.best_val_nll});

  int stale_evals = 0;
  int64_t step = 0;
  size_t cursor = 0;
  std::vector<int64_t> order = units;
  auto reshuffle = [&] {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[size_t(shuffle_rng.next_below(i))]);
    cursor = 0;
  };
  reshuffle();

  std::vector<int> th, tw;
  while (step < cfg.max_steps) {
    // assemble one batch of rows
    std::vector<int64_t> rows;
    for (int u = 0; u < units_per_batch; ++u) {
      if (cursor >= order.size()) reshuffle();
      const int64_t unit = order[cursor++];
      if (grouped)
        rows.insert(rows.end(), group_rows[size_t(unit)].begin(),
                    group_rows[size_t(unit)].end());
      else
        rows.push_back(unit);
    }
    TensorF obs = assemble_batch(ds, rows, th, tw);

    TapeF tape;
    auto bp = BoundParams<float>::bind(tape, model.params);
    auto fwd = model_forward(tape, model.cfg, bp, tape.constant(obs),
                             grouped ? int(rows.size()) / n : 1);
    Tape<float>::Var loss;
    if (cfg.objective == PretrainObjective::AgentCentric) {
      std::vector<float> valid(rows.size(), 1.0f);
      auto lh = location_nll(tape, fwd.loc_h, th, valid, double(rows.size()));
      auto lw = location_nll(tape, fwd.loc_w, tw, valid, double(rows.size()));
      loss = tape.add(lh, lw);
    } else {
      const int hgt = ds.header.height, wdt = ds.header.width;
      TensorF mh({int(rows.size()), hgt}), mw({int(rows.size()), wdt});
      for (size_t i = 0; i < rows.size(); ++i) {
        const DatasetExample& ex = ds.examples[size_t(rows[i])];
        ObserveAllTarget t = ds.observe_all_target(ex.episode, ex.step);
        for (int j = 0; j < hgt; ++j) mh.at(int(i), j) = float(t.row_mask[size_t(j)]);
        for (int j = 0; j < wdt; ++j) mw.at(int(i), j) = float(t.col_mask[size_t(j)]);
      }
      auto bh = tape.bce_with_logits_mean(fwd.loc_h, std::move(mh));
      auto bw = tape.bce_with_logits_mean(fwd.loc_w, std::move(mw));
      loss = tape.scale(tape.add(bh, bw), 0.5f);
    }
    tape.backward(loss);
    opt.step(model.params, bp.gradients());
    ++step;
    res.train_curve.push_back({step, double(tape.value(loss).data[0])});

    if (step % cfg.eval_every == 0) {
      const double val = eval_split(model, ds, val_rows, cfg);
      res.val_curve.push_back({step, val});
      if (val < res.best_val_nll - cfg.min_delta) {
        res.best_val_nll = val;
        res.best_step = step;
        res.best_params = model.params;
        stale_evals = 0;
      } else {
        ++stale_evals;
        if (stale_evals >= cfg.patience) break;
      }
    }
  }
  res.stopped_step = step;
  return res;
}

}  // namespace marl
