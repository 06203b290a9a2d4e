#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "marl/checkpoint.hpp"
#include "marl/config.hpp"
#include "marl/elo.hpp"
#include "marl/gradcheck.hpp"
#include "marl/match.hpp"
#include "marl/parallel.hpp"
#include "marl/replay.hpp"
#include "marl/rollout.hpp"

namespace {

using namespace marl;

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

RunConfig load_config(const std::string& path) {
  std::vector<std::string> warnings;
  RunConfig cfg = path.empty() ? RunConfig{} : RunConfig::from_file(path, &warnings);
  print_warnings(warnings);
  return cfg;
}

std::unique_ptr<Env> env_from_config(const RunConfig& cfg) {
  if (cfg.env == "cleanup") return std::make_unique<CleanupEnv>(cfg.cleanup);
  return std::make_unique<MiniPitchEnv>(cfg.minipitch);
}

// One training run per seed: run directory, manifest at start and end,
// metrics stream, final checkpoint.
int do_train(RunConfig cfg) {
  const std::string base = cfg.resolved_out_dir();
  for (uint64_t seed : cfg.seeds) {
    const std::string run_dir = base + "/seed_" + std::to_string(seed);
    nlohmann::json resolved = cfg.to_json();
    resolved["seed"] = seed;
    write_manifest(run_dir, resolved, "running", {});
    TrainerConfig tc = cfg.trainer_config(seed, run_dir);
    Trainer trainer(tc);
    trainer.run();
    write_manifest(run_dir, resolved, "completed",
                   {{"frames", trainer.frames()},
                    {"steps", trainer.steps()},
                    {"nan_skips", trainer.nan_skips()},
                    {"checkpoint", run_dir + "/ckpt_final.ckpt"},
                    {"metrics", run_dir + "/metrics.jsonl"}});
    std::cout << "run " << run_dir << ": " << trainer.frames() << " frames, "
              << trainer.steps() << " steps\n";
  }
  return 0;
}

int do_sweep(const RunConfig& base_cfg) {
  int launched = 0;
  const std::string base = base_cfg.resolved_out_dir();
  for (double lr : base_cfg.sweep_learning_rates)
    for (double aux : base_cfg.sweep_aux_coefs) {
      RunConfig cfg = base_cfg;
      cfg.learning_rate = lr;
      cfg.aux_coef = aux;
      cfg.out_dir = base + "/lr_" + std::to_string(lr) + "_aux_" + std::to_string(aux);
      do_train(cfg);
      ++launched;
    }
  std::cout << "sweep finished: " << launched << " configurations\n";
  return 0;
}

int do_pretrain(RunConfig cfg, const std::string& dataset_path, const std::string& out_dir) {
  MARL_CONFIG_CHECK(!dataset_path.empty(), "pretrain needs --dataset");
  ObservationDataset ds = load_dataset(dataset_path, cfg.seeds[0]);
  std::unique_ptr<Env> env = env_from_config(cfg);
  Model model = make_model(model_config_for_env(*env, cfg.model), cfg.seeds[0]);
  cfg.pretrain.seed = cfg.seeds[0];

  nlohmann::json resolved = cfg.to_json();
  resolved["pretrain"] = {{"dataset", dataset_path},
                          {"dataset_hash", ds.header.content_hash},
                          {"batch_size", cfg.pretrain.batch_size},
                          {"lr", cfg.pretrain.lr},
                          {"eval_every", cfg.pretrain.eval_every},
                          {"patience", cfg.pretrain.patience},
                          {"min_delta", cfg.pretrain.min_delta},
                          {"max_steps", cfg.pretrain.max_steps}};
  write_manifest(out_dir, resolved, "running", {});

  PretrainResult res = pretrain(model, ds, cfg.pretrain);
  Model best{model.cfg, res.best_params, nullptr};
  const std::string ckpt = out_dir + "/pretrained.ckpt";
  save_model(ckpt, best);
  {
    std::ofstream curves(out_dir + "/nll_curves.jsonl", std::ios::trunc);
    curves.precision(10);
    for (auto& [step, nll] : res.train_curve)
      curves << "{\"split\":\"train\",\"step\":" << step << ",\"nll\":" << nll << "}\n";
    for (auto& [step, nll] : res.val_curve)
      curves << "{\"split\":\"validation\",\"step\":" << step << ",\"nll\":" << nll << "}\n";
  }
  write_manifest(out_dir, resolved, "completed",
                 {{"checkpoint", ckpt},
                  {"best_step", res.best_step},
                  {"best_val_nll", res.best_val_nll},
                  {"stopped_step", res.stopped_step},
                  {"dataset_hash", ds.header.content_hash}});
  std::cout << "pretrained " << ckpt << " best_val_nll=" << res.best_val_nll << " at step "
            << res.best_step << "\n";
  return 0;
}

int do_build_dataset(const RunConfig& cfg, const std::string& replay_dir,
                     const std::string& source, const std::vector<std::string>& checkpoints,
                     int episodes, const std::string& out, uint64_t split_seed) {
  std::vector<std::string> replays;
  std::unique_ptr<Env> env = env_from_config(cfg);
  if (!replay_dir.empty()) {
    for (const auto& entry : std::filesystem::directory_iterator(replay_dir))
      if (entry.path().extension() == ".rpl") replays.push_back(entry.path().string());
    std::sort(replays.begin(), replays.end());
  } else if (source == "scripted") {
    const std::string dir = out + ".replays";
    replays = record_scripted_replays(*env, dir, episodes, split_seed);
  } else if (source == "checkpoints") {
    MARL_CONFIG_CHECK(!checkpoints.empty(), "--source checkpoints needs --checkpoint paths");
    // episodes split evenly over the checkpoints (replays spread across the
    // course of a baseline training run)
    const int per = std::max(1, episodes / int(checkpoints.size()));
    for (size_t c = 0; c < checkpoints.size(); ++c) {
      Model model = load_model(checkpoints[c]);
      auto paths = record_policy_replays(*env, model, out + ".replays", per,
                                         split_seed + 131 * c);
      replays.insert(replays.end(), paths.begin(), paths.end());
    }
  }
  MARL_CONFIG_CHECK(!replays.empty(), "no replays to ingest");
  BuildStats stats;
  ObservationDataset ds = build_dataset(replays, split_seed, &stats);
  save_dataset(out, ds);
  std::cout << "dataset " << out << ": " << ds.examples.size() << " examples from "
            << stats.replays_read << " replays (" << stats.corrupt_records_skipped
            << " corrupt records skipped), hash " << ds.header.content_hash << "\n";
  return 0;
}

int do_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& opponent,
            int matches, uint64_t seed, bool sampled) {
  MARL_CONFIG_CHECK(cfg.env == "minipitch", "eval plays matches on minipitch");
  MiniPitchEnv env{cfg.minipitch};
  TeamPolicy home = TeamPolicy::from_model("home", load_model(checkpoint));
  TeamPolicy away = opponent == "scripted-chase" ? TeamPolicy::scripted_chase("chase")
                    : opponent == "scripted-idle"
                        ? TeamPolicy::scripted_idle("idle")
                        : TeamPolicy::from_model("away", load_model(opponent));
  int wins = 0, ties = 0, losses = 0, diff = 0;
  for (int g = 0; g < matches; ++g) {
    MatchResult r = run_match(home, away, env, seed + uint64_t(g), sampled);
    wins += r.outcome == MatchResult::Outcome::Win;
    ties += r.outcome == MatchResult::Outcome::Tie;
    losses += r.outcome == MatchResult::Outcome::Loss;
    diff += r.score_diff;
  }
  std::cout << "W/T/L " << wins << "/" << ties << "/" << losses
            << "  mean score diff " << double(diff) / matches << "\n";
  return 0;
}

TeamPolicy parse_agent(const std::string& spec) {
  const auto eq = spec.find('=');
  MARL_CONFIG_CHECK(eq != std::string::npos, "agent spec must be name=path-or-builtin: ", spec);
  const std::string name = spec.substr(0, eq);
  const std::string what = spec.substr(eq + 1);
  if (what == "scripted-chase") return TeamPolicy::scripted_chase(name);
  if (what == "scripted-idle") return TeamPolicy::scripted_idle(name);
  return TeamPolicy::from_model(name, load_model(what));
}

int do_tournament(const RunConfig& cfg, const std::vector<std::string>& agent_specs,
                  int matches_per_pair, uint64_t seed, const std::string& out_grid,
                  const std::string& out_records, bool sampled) {
  MARL_CONFIG_CHECK(cfg.env == "minipitch", "tournaments run on minipitch");
  MiniPitchEnv env{cfg.minipitch};
  std::vector<TeamPolicy> agents;
  for (const auto& s : agent_specs) agents.push_back(parse_agent(s));
  TournamentResult result = tournament(agents, matches_per_pair, env, seed, sampled);
  const std::string grid = format_tournament_grid(result);
  std::cout << grid;
  if (!out_grid.empty()) std::ofstream(out_grid, std::ios::trunc) << grid;
  if (!out_records.empty()) {
    std::ofstream records(out_records, std::ios::trunc);
    write_match_records(records, result);
  }
  RatingTable table = elo_estimate(result.matches, EloConfig{});
  std::cout << format_rating_table(table);
  return 0;
}

int do_dump_attention(const RunConfig& cfg, const std::string& checkpoint, int64_t steps,
                      uint64_t seed, const std::string& out) {
  std::unique_ptr<Env> env = env_from_config(cfg);
  Model model = load_model(checkpoint);
  std::ofstream os(out, std::ios::trunc);
  if (!os) throw IoError("cannot open attention dump output: " + out);
  const int64_t written = attention_dump(model, *env, seed, steps, os);
  std::cout << "wrote " << written << " steps of attention records to " << out << "\n";
  return 0;
}

int do_gradcheck(const std::string& model_kind, bool progressive, uint64_t seed) {
  ModelConfig cfg;
  cfg.kind = model_kind == "acnn" ? ModelKind::Acnn : ModelKind::Cnn;
  cfg.in_channels = 8;
  cfg.height = 6;
  cfg.width = 8;
  cfg.num_agents = 2;
  cfg.action_count = 5;
  cfg.conv1_channels = 4;
  cfg.conv2_channels = 6;
  cfg.d_model = 16;
  cfg.d_k = 8;
  GradCheckOptions opts;
  opts.seed = seed;
  GradCheckReport report = grad_check_model(cfg, seed, opts, progressive);
  std::cout << "grad check over " << report.scalars_checked << " scalars\n";
  for (const auto& [kind, err] : report.per_kind)
    std::cout << "  " << kind << ": max relative error " << err << "\n";
  std::cout << "max relative error " << report.max_rel_err << " (worst: " << report.worst_param
            << "[" << report.worst_index << "])\n";
  const bool pass = report.pass(1e-5);
  std::cout << (pass ? "PASS" : "FAIL") << " at threshold 1e-5\n";
  return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale cooperative multi-agent RL: agent-centric attention, "
               "next-location objectives, V-trace training, tournaments"};
  app.require_subcommand(1);

  std::string config_path, dataset_path, out_path, checkpoint, opponent = "scripted-chase";
  std::string replay_dir, source = "scripted", model_kind = "acnn";
  std::vector<std::string> agent_specs, checkpoints;
  int matches = 20, episodes = 50, threads = 0;
  int64_t steps = 256;
  uint64_t seed = 1, split_seed = 1;
  bool sampled = false, progressive = false;
  std::string grid_out, records_out;
  std::vector<uint64_t> seed_override;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON run configuration");
    cmd->add_option("--threads", threads, "compute threads (0 = all cores)");
  };

  CLI::App* train = app.add_subcommand("train", "V-trace training runs, one per seed");
  add_common(train);
  train->add_option("--seeds", seed_override, "override the config seed list");

  CLI::App* sweep = app.add_subcommand("sweep", "grid over learning rates x aux coefficients");
  add_common(sweep);

  CLI::App* pre = app.add_subcommand("pretrain", "next-location pre-training from a dataset");
  add_common(pre);
  pre->add_option("--dataset", dataset_path, "observation dataset file")->required();
  pre->add_option("--out", out_path, "output directory")->required();

  CLI::App* bd = app.add_subcommand("build-dataset", "ingest or generate action-free replays");
  add_common(bd);
  bd->add_option("--out", out_path, "dataset output file")->required();
  bd->add_option("--replay-dir", replay_dir, "ingest existing .rpl files");
  bd->add_option("--source", source, "scripted | checkpoints (generate replays)");
  bd->add_option("--checkpoint", checkpoints, "checkpoints to play when --source checkpoints");
  bd->add_option("--episodes", episodes, "episodes to generate");
  bd->add_option("--split-seed", split_seed, "validation split seed");

  CLI::App* ev = app.add_subcommand("eval", "play matches against an opponent");
  add_common(ev);
  ev->add_option("--checkpoint", checkpoint, "home policy checkpoint")->required();
  ev->add_option("--opponent", opponent, "scripted-chase | scripted-idle | checkpoint path");
  ev->add_option("--matches", matches, "match count");
  ev->add_option("--seed", seed, "base seed");
  ev->add_flag("--sampled", sampled, "sampled instead of greedy actions");

  CLI::App* tour = app.add_subcommand("tournament", "round robin with win/tie/loss grid + ratings");
  add_common(tour);
  tour->add_option("--agents", agent_specs, "name=ckpt.ckpt or name=scripted-chase|scripted-idle")
      ->required()
      ->expected(-2);
  tour->add_option("--matches-per-pair", matches, "matches per ordered pair");
  tour->add_option("--seed", seed, "base seed");
  tour->add_option("--out-grid", grid_out, "write the text grid here");
  tour->add_option("--out-records", records_out, "write machine-readable match records here");
  tour->add_flag("--sampled", sampled, "sampled instead of greedy actions");

  CLI::App* dump = app.add_subcommand("dump-attention", "per-step attention weight records");
  add_common(dump);
  dump->add_option("--checkpoint", checkpoint, "attention model checkpoint")->required();
  dump->add_option("--steps", steps, "steps to dump");
  dump->add_option("--seed", seed, "episode seed");
  dump->add_option("--out", out_path, "output file")->required();

  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference check of the full loss");
  gc->add_option("--model", model_kind, "cnn | acnn");
  gc->add_flag("--progressive", progressive, "attach a frozen column");
  gc->add_option("--seed", seed, "scenario seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (threads > 0) marl::set_compute_threads(threads);
    if (train->parsed()) {
      RunConfig cfg = load_config(config_path);
      if (!seed_override.empty()) cfg.seeds = seed_override;
      return do_train(cfg);
    }
    if (sweep->parsed()) return do_sweep(load_config(config_path));
    if (pre->parsed()) return do_pretrain(load_config(config_path), dataset_path, out_path);
    if (bd->parsed())
      return do_build_dataset(load_config(config_path), replay_dir, source, checkpoints,
                              episodes, out_path, split_seed);
    if (ev->parsed())
      return do_eval(load_config(config_path), checkpoint, opponent, matches, seed, sampled);
    if (tour->parsed())
      return do_tournament(load_config(config_path), agent_specs, matches, seed, grid_out,
                           records_out, sampled);
    if (dump->parsed())
      return do_dump_attention(load_config(config_path), checkpoint, steps, seed, out_path);
    if (gc->parsed()) return do_gradcheck(model_kind, progressive, seed);
  } catch (const marl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
