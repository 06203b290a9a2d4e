#include "marl/trainer.hpp"

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "marl/checkpoint.hpp"

namespace marl {

ModelConfig model_config_for_env(const Env& env, ModelKind kind) {
  const MamdpSpec& spec = env.spec();
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.in_channels = kObsStack * kObsChannels;
  cfg.height = spec.height;
  cfg.width = spec.width;
  cfg.num_agents = spec.num_agents;
  cfg.action_count = spec.action_count;
  return cfg;
}

Model build_transfer_model(const ModelConfig& cfg, TransferMode mode,
                           const std::string& checkpoint_path, uint64_t seed,
                           std::vector<std::string>* warnings) {
  if (mode == TransferMode::Scratch) return make_model(cfg, seed);
  MARL_CONFIG_CHECK(!checkpoint_path.empty(), "transfer mode ", transfer_mode_name(mode),
                    " requires init_checkpoint");
  Model ckpt = load_model(checkpoint_path);
  if (mode == TransferMode::Init) {
    Model model = make_model(cfg, seed);
    auto unmatched = init_from_checkpoint(model, ckpt.params);
    if (warnings)
      for (const auto& name : unmatched)
        warnings->push_back("checkpoint has no tensor '" + name + "'; freshly initialized");
    return model;
  }
  auto column = std::make_shared<ProgressiveColumn>(make_frozen_column(ckpt.cfg, ckpt.params));
  return make_progressive_model(cfg, seed, std::move(column));
}

Trainer::Trainer(TrainerConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.env_kind == "cleanup") {
    cfg_.cleanup.validate();
    env_ = std::make_unique<CleanupEnv>(cfg_.cleanup);
  } else if (cfg_.env_kind == "minipitch") {
    cfg_.minipitch.validate();
    env_ = std::make_unique<MiniPitchEnv>(cfg_.minipitch);
  } else {
    throw ConfigError("unknown env kind: " + cfg_.env_kind);
  }
  MARL_CONFIG_CHECK(cfg_.unroll >= 1 && cfg_.batch_size >= 1, "bad unroll/batch size");
  model_ = build_transfer_model(model_config_for_env(*env_, cfg_.model_kind), cfg_.transfer,
                                cfg_.init_checkpoint, cfg_.seed);
  opt_ = std::make_unique<Adam<float>>(model_.params, cfg_.adam);
  const int n_workers = cfg_.actors > 0 ? cfg_.actors : cfg_.batch_size;
  for (int w = 0; w < n_workers; ++w)
    workers_.push_back(std::make_unique<RolloutWorker>(*env_, cfg_.seed, uint64_t(w)));
}

StepMetrics Trainer::train_step(const std::vector<Trajectory>& batch) {
  MARL_CHECK(!batch.empty(), "empty batch");
  const MamdpSpec& spec = env_->spec();
  const int n = spec.num_agents;
  const int t_len = batch[0].length;
  const int b = int(batch.size());
  for (const auto& traj : batch) {
    traj.validate();
    MARL_CHECK(traj.length == t_len && traj.num_agents == n, "ragged batch");
  }
  const int rows = b * t_len * n;

  // Assemble the main and bootstrap observation batches.
  std::vector<const Observation*> main_rows(static_cast<size_t>(rows));
  std::vector<const Observation*> boot_rows(size_t(b) * size_t(n));
  for (int bi = 0; bi < b; ++bi) {
    for (int t = 0; t < t_len; ++t)
      for (int i = 0; i < n; ++i)
        main_rows[(size_t(bi) * t_len + t) * n + i] = &batch[size_t(bi)].obs[size_t(t) * n + i];
    for (int i = 0; i < n; ++i)
      boot_rows[size_t(bi) * n + i] = &batch[size_t(bi)].obs[size_t(t_len) * n + i];
  }
  const size_t per = size_t(kObsStack * kObsChannels) * spec.height * spec.width;
  TensorF obs({rows, kObsStack * kObsChannels, spec.height, spec.width});
  for (size_t r = 0; r < main_rows.size(); ++r)
    for (size_t j = 0; j < per; ++j) obs.data[r * per + j] = float(main_rows[r]->planes[j]);
  TensorF boot_obs({b * n, kObsStack * kObsChannels, spec.height, spec.width});
  for (size_t r = 0; r < boot_rows.size(); ++r)
    for (size_t j = 0; j < per; ++j) boot_obs.data[r * per + j] = float(boot_rows[r]->planes[j]);

  TapeF tape;
  auto bp = BoundParams<float>::bind(tape, model_.params);
  BoundParams<float> fp;
  if (model_.progressive()) fp = BoundParams<float>::bind(tape, model_.column->params);
  const ModelConfig* fcfg = model_.progressive() ? &model_.column->cfg : nullptr;
  const BoundParams<float>* fpp = model_.progressive() ? &fp : nullptr;

  auto fwd = model_forward(tape, model_.cfg, bp, tape.constant(obs), b * t_len, fcfg, fpp);
  // Bootstrap values under the current parameters (targets are constants, so
  // the gradient-free evaluation happens on the same tape before the loss).
  auto boot_fwd = model_forward(tape, model_.cfg, bp, tape.constant(boot_obs), b, fcfg, fpp);
  const TensorF& values = tape.value(fwd.value);
  const TensorF& boot_values = tape.value(boot_fwd.value);
  const TensorF& logits = tape.value(fwd.policy_logits);

  // V-trace per (trajectory, agent) sequence, in double.
  LossInputs in;
  in.coeffs = cfg_.coeffs;
  in.actions.resize(size_t(rows));
  in.rho.resize(size_t(rows));
  in.advantage.resize(size_t(rows));
  in.vs.resize(size_t(rows));
  in.target_h.resize(size_t(rows));
  in.target_w.resize(size_t(rows));
  in.target_valid.resize(size_t(rows));

  std::vector<double> log_pi(static_cast<size_t>(t_len)), log_mu(static_cast<size_t>(t_len)),
      rew(static_cast<size_t>(t_len)), vals(size_t(t_len) + 1);
  for (int bi = 0; bi < b; ++bi) {
    const Trajectory& traj = batch[size_t(bi)];
    for (int i = 0; i < n; ++i) {
      for (int t = 0; t < t_len; ++t) {
        const size_t local = size_t(t) * n + i;
        const size_t row = (size_t(bi) * t_len + t) * n + i;
        const int a = traj.actions[local];
        log_pi[size_t(t)] =
            double(log_softmax_at(logits.ptr() + row * spec.action_count, spec.action_count, a));
        log_mu[size_t(t)] = double(traj.log_mu[local]);
        rew[size_t(t)] = double(traj.rewards[local]);
        vals[size_t(t)] = double(values.data[row]);
      }
      vals[size_t(t_len)] = double(boot_values.data[size_t(bi) * n + i]);
      auto vt = vtrace_sequence<double>(log_pi, log_mu, rew, vals, traj.boundary, cfg_.vtrace);
      for (int t = 0; t < t_len; ++t) {
        const size_t local = size_t(t) * n + i;
        const size_t row = (size_t(bi) * t_len + t) * n + i;
        in.actions[row] = traj.actions[local];
        in.rho[row] = float(vt.rho[size_t(t)]);
        in.advantage[row] = float(vt.advantage[size_t(t)]);
        in.vs[row] = float(vt.vs[size_t(t)]);
        in.target_h[row] = traj.target_h[local];
        in.target_w[row] = traj.target_w[local];
        in.target_valid[row] = float(traj.target_valid[local]);
      }
    }
  }

  auto lg = build_total_loss(tape, fwd, in);

  StepMetrics m;
  m.loss = lg.breakdown;
  m.lr = opt_->config().lr;
  m.c_aux = cfg_.coeffs.aux;
  m.seed = cfg_.seed;

  if (!std::isfinite(m.loss.total)) {
    ++nan_skips_;
    m.skipped = true;
  } else {
    tape.backward(lg.total);
    try {
      opt_->step(model_.params, bp.gradients());
    } catch (const ContractError&) {
      ++nan_skips_;
      m.skipped = true;
    }
  }

  frames_ += int64_t(b) * t_len * n;
  ++steps_;
  m.step = steps_;
  m.frames = frames_;
  return m;
}

double Trainer::pooled_recent_return() const {
  double sum = 0;
  int64_t count = 0;
  for (const auto& w : workers_)
    for (float r : w->recent_returns()) {
      sum += double(r);
      ++count;
    }
  for (float r : threaded_returns_) {
    sum += double(r);
    ++count;
  }
  return count ? sum / double(count) : 0.0;
}

std::string Trainer::metrics_line(const StepMetrics& m) {
  std::ostringstream os;
  os.precision(10);
  os << "{\"step\":" << m.step << ",\"frames\":" << m.frames
     << ",\"mean_episode_return\":" << m.mean_episode_return << ",\"pg_loss\":" << m.loss.pg
     << ",\"value_loss\":" << m.loss.value << ",\"entropy\":" << m.loss.entropy
     << ",\"aux_nll\":" << m.loss.aux_h + m.loss.aux_w << ",\"lr\":" << m.lr
     << ",\"c_aux\":" << m.c_aux << ",\"seed\":" << m.seed << "}";
  return os.str();
}

void Trainer::maybe_checkpoint(bool final) {
  if (cfg_.out_dir.empty()) return;
  std::filesystem::create_directories(cfg_.out_dir);
  if (final) {
    save_model(cfg_.out_dir + "/ckpt_final.ckpt", model_);
    return;
  }
  if (cfg_.checkpoint_every > 0 && steps_ % cfg_.checkpoint_every == 0) {
    save_model(cfg_.out_dir + "/ckpt_step_" + std::to_string(steps_) + ".ckpt", model_);
    ++checkpoints_written_;
  }
}

void Trainer::run_single(std::vector<StepMetrics>& history, std::ostream* metrics_out) {
  while (frames_ < cfg_.frame_budget) {
    std::vector<Trajectory> batch = collect_batch(workers_, model_, cfg_.unroll);
    StepMetrics m = train_step(batch);
    m.mean_episode_return = pooled_recent_return();
    if (metrics_out) *metrics_out << metrics_line(m) << "\n";
    history.push_back(m);
    maybe_checkpoint(false);
  }
}

namespace {

// Bounded MPSC trajectory queue between actor workers and the learner.
class TrajectoryQueue {
 public:
  explicit TrajectoryQueue(size_t capacity) : capacity_(capacity) {}

  bool push(Trajectory traj) {
    std::unique_lock lk(mu_);
    not_full_.wait(lk, [&] { return items_.size() < capacity_ || closed_; });
    if (closed_) return false;
    items_.push_back(std::move(traj));
    lk.unlock();
    not_empty_.notify_one();
    return true;
  }

  bool pop(Trajectory& out) {
    std::unique_lock lk(mu_);
    not_empty_.wait(lk, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return false;
    out = std::move(items_.front());
    items_.pop_front();
    lk.unlock();
    not_full_.notify_one();
    return true;
  }

  void close() {
    std::lock_guard lk(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable not_full_, not_empty_;
  std::deque<Trajectory> items_;
  size_t capacity_;
  bool closed_ = false;
};

}  // namespace

void Trainer::run_threaded(std::vector<StepMetrics>& history, std::ostream* metrics_out) {
  TrajectoryQueue queue(size_t(cfg_.batch_size) * 4);
  std::mutex snapshot_mu;
  auto snapshot = std::make_shared<const Model>(model_);
  std::atomic<bool> stop{false};

  std::vector<std::thread> actors;
  actors.reserve(workers_.size());
  for (auto& worker : workers_) {
    actors.emplace_back([&, w = worker.get()] {
      while (!stop.load(std::memory_order_relaxed)) {
        std::shared_ptr<const Model> snap;
        {
          std::lock_guard lk(snapshot_mu);
          snap = snapshot;
        }
        Trajectory traj = w->collect(*snap, cfg_.unroll);
        if (!queue.push(std::move(traj))) return;
      }
    });
  }

  while (frames_ < cfg_.frame_budget) {
    std::vector<Trajectory> batch;
    batch.reserve(size_t(cfg_.batch_size));
    Trajectory traj;
    while (int(batch.size()) < cfg_.batch_size && queue.pop(traj)) {
      for (float r : traj.episode_returns) {
        threaded_returns_.push_back(r);
        if (threaded_returns_.size() > 128) threaded_returns_.erase(threaded_returns_.begin());
      }
      batch.push_back(std::move(traj));
    }
    if (int(batch.size()) < cfg_.batch_size) break;
    StepMetrics m = train_step(batch);
    m.mean_episode_return = pooled_recent_return();
    if (metrics_out) *metrics_out << metrics_line(m) << "\n";
    history.push_back(m);
    {
      std::lock_guard lk(snapshot_mu);
      snapshot = std::make_shared<const Model>(model_);
    }
    maybe_checkpoint(false);
  }

  stop.store(true);
  queue.close();
  for (auto& t : actors) t.join();
}

std::vector<StepMetrics> Trainer::run() {
  std::vector<StepMetrics> history;
  std::ofstream metrics_file;
  std::ostream* metrics_out = nullptr;
  if (!cfg_.metrics_path.empty()) {
    std::filesystem::path p(cfg_.metrics_path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    metrics_file.open(cfg_.metrics_path, std::ios::trunc);
    if (!metrics_file) throw IoError("cannot open metrics stream: " + cfg_.metrics_path);
    metrics_out = &metrics_file;
  }
  if (cfg_.actors > 0)
    run_threaded(history, metrics_out);
  else
    run_single(history, metrics_out);
  maybe_checkpoint(true);
  return history;
}

}  // namespace marl
