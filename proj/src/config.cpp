#include "marl/config.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "marl/parallel.hpp"

namespace marl {

namespace {

void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                         const std::string& scope) {
  for (auto it = j.begin(); it != j.end(); ++it)
    MARL_CONFIG_CHECK(known.count(it.key()), "unknown config key '", scope, it.key(), "'");
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

bool on_grid(double v, const std::vector<double>& grid) {
  for (double g : grid)
    if (std::abs(v - g) <= 1e-12) return true;
  return false;
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j, std::vector<std::string>* warnings) {
  RunConfig cfg;
  reject_unknown_keys(
      j,
      {"env", "model", "transfer", "init_checkpoint", "aux_coef", "learning_rate",
       "entropy_coef", "value_coef", "gamma", "rho_bar", "c_bar", "unroll_length",
       "batch_size", "frame_budget", "seeds", "out_dir", "actors", "threads",
       "checkpoint_every", "env_config", "sweep", "pretrain"},
      "");

  read(j, "env", cfg.env);
  if (j.contains("model")) {
    const std::string m = j.at("model").get<std::string>();
    MARL_CONFIG_CHECK(m == "cnn" || m == "acnn", "model must be cnn or acnn, got '", m, "'");
    cfg.model = m == "cnn" ? ModelKind::Cnn : ModelKind::Acnn;
  }
  if (j.contains("transfer")) {
    const std::string t = j.at("transfer").get<std::string>();
    if (t == "scratch") cfg.transfer = TransferMode::Scratch;
    else if (t == "init") cfg.transfer = TransferMode::Init;
    else if (t == "progressive") cfg.transfer = TransferMode::Progressive;
    else throw ConfigError("transfer must be scratch, init or progressive, got '" + t + "'");
  }
  read(j, "init_checkpoint", cfg.init_checkpoint);
  read(j, "aux_coef", cfg.aux_coef);
  read(j, "learning_rate", cfg.learning_rate);
  read(j, "entropy_coef", cfg.entropy_coef);
  read(j, "value_coef", cfg.value_coef);
  read(j, "gamma", cfg.gamma);
  read(j, "rho_bar", cfg.rho_bar);
  read(j, "c_bar", cfg.c_bar);
  read(j, "unroll_length", cfg.unroll_length);
  read(j, "batch_size", cfg.batch_size);
  read(j, "frame_budget", cfg.frame_budget);
  read(j, "seeds", cfg.seeds);
  read(j, "out_dir", cfg.out_dir);
  read(j, "actors", cfg.actors);
  read(j, "threads", cfg.threads);
  read(j, "checkpoint_every", cfg.checkpoint_every);

  if (j.contains("env_config")) {
    const auto& e = j.at("env_config");
    reject_unknown_keys(e,
                        {"height", "width", "agents", "episode_len", "water_rows",
                         "orchard_rows", "p_mud", "p_max", "away_agents", "shoot_range",
                         "p_shoot", "p_pass", "p_tackle", "shaping", "clear_distance"},
                        "env_config.");
    auto spec_of = [&](MamdpSpec& spec) {
      read(e, "height", spec.height);
      read(e, "width", spec.width);
      read(e, "agents", spec.num_agents);
      read(e, "episode_len", spec.episode_len);
    };
    spec_of(cfg.cleanup.spec);
    spec_of(cfg.minipitch.spec);
    read(e, "water_rows", cfg.cleanup.water_rows);
    read(e, "orchard_rows", cfg.cleanup.orchard_rows);
    read(e, "p_mud", cfg.cleanup.p_mud);
    read(e, "p_max", cfg.cleanup.p_max);
    read(e, "away_agents", cfg.minipitch.away_agents);
    read(e, "shoot_range", cfg.minipitch.shoot_range);
    read(e, "p_shoot", cfg.minipitch.p_shoot);
    read(e, "p_pass", cfg.minipitch.p_pass);
    read(e, "p_tackle", cfg.minipitch.p_tackle);
    read(e, "shaping", cfg.minipitch.shaping);
    read(e, "clear_distance", cfg.minipitch.clear_distance);
  }

  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    reject_unknown_keys(s, {"learning_rates", "aux_coefs"}, "sweep.");
    read(s, "learning_rates", cfg.sweep_learning_rates);
    read(s, "aux_coefs", cfg.sweep_aux_coefs);
  }

  if (j.contains("pretrain")) {
    const auto& p = j.at("pretrain");
    reject_unknown_keys(p,
                        {"objective", "batch_size", "lr", "eval_every", "patience",
                         "min_delta", "max_steps", "dataset"},
                        "pretrain.");
    if (p.contains("objective")) {
      const std::string o = p.at("objective").get<std::string>();
      if (o == "agent-centric") cfg.pretrain.objective = PretrainObjective::AgentCentric;
      else if (o == "observe-all") cfg.pretrain.objective = PretrainObjective::ObserveAll;
      else throw ConfigError("pretrain.objective must be agent-centric or observe-all");
    }
    read(p, "batch_size", cfg.pretrain.batch_size);
    read(p, "lr", cfg.pretrain.lr);
    read(p, "eval_every", cfg.pretrain.eval_every);
    read(p, "patience", cfg.pretrain.patience);
    read(p, "min_delta", cfg.pretrain.min_delta);
    read(p, "max_steps", cfg.pretrain.max_steps);
    read(p, "dataset", cfg.pretrain_dataset);
  }

  cfg.validate(warnings);
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path, std::vector<std::string>* warnings) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(strcat("config file ", path, " is not valid JSON: ", e.what()));
  }
  return from_json(j, warnings);
}

void RunConfig::validate(std::vector<std::string>* warnings) const {
  MARL_CONFIG_CHECK(env == "cleanup" || env == "minipitch", "env must be cleanup or minipitch, got '",
                    env, "'");
  MARL_CONFIG_CHECK(!seeds.empty(), "at least one seed is required");
  MARL_CONFIG_CHECK(unroll_length >= 1 && batch_size >= 1, "bad unroll/batch size");
  MARL_CONFIG_CHECK(frame_budget >= 0, "frame_budget must be nonnegative");
  MARL_CONFIG_CHECK(gamma >= 0.0 && gamma <= 1.0, "gamma out of range");
  MARL_CONFIG_CHECK(
      transfer == TransferMode::Scratch || !init_checkpoint.empty(),
      "transfer mode ", transfer_mode_name(transfer), " requires init_checkpoint");
  if (env == "cleanup") cleanup.validate();
  else minipitch.validate();
  if (warnings) {
    if (!on_grid(learning_rate, sweep_learning_rates))
      warnings->push_back(strcat("learning_rate ", learning_rate,
                                 " is outside the configured sweep grid"));
    if (aux_coef != 0.0 && !on_grid(aux_coef, sweep_aux_coefs))
      warnings->push_back(strcat("aux_coef ", aux_coef,
                                 " is outside the configured sweep grid"));
  }
}

int64_t RunConfig::resolved_frame_budget() const {
  if (frame_budget > 0) return frame_budget;
  return env == "cleanup" ? 2'000'000 : 5'000'000;
}

std::string RunConfig::resolved_out_dir() const {
  const char* root = std::getenv(kOutputRootEnvVar);
  std::filesystem::path p(out_dir);
  if (root && *root && p.is_relative()) return (std::filesystem::path(root) / p).string();
  return out_dir;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json e;
  if (env == "cleanup") {
    e = {{"height", cleanup.spec.height},     {"width", cleanup.spec.width},
         {"agents", cleanup.spec.num_agents}, {"episode_len", cleanup.spec.episode_len},
         {"water_rows", cleanup.water_rows},  {"orchard_rows", cleanup.orchard_rows},
         {"p_mud", cleanup.p_mud},            {"p_max", cleanup.p_max}};
  } else {
    e = {{"height", minipitch.spec.height},
         {"width", minipitch.spec.width},
         {"agents", minipitch.spec.num_agents},
         {"episode_len", minipitch.spec.episode_len},
         {"away_agents", minipitch.away_agents},
         {"shoot_range", minipitch.shoot_range},
         {"p_shoot", minipitch.p_shoot},
         {"p_pass", minipitch.p_pass},
         {"p_tackle", minipitch.p_tackle},
         {"shaping", minipitch.shaping},
         {"clear_distance", minipitch.clear_distance}};
  }
  return nlohmann::json{
      {"env", env},
      {"model", model_kind_name(model)},
      {"transfer", transfer_mode_name(transfer)},
      {"init_checkpoint", init_checkpoint},
      {"aux_coef", aux_coef},
      {"learning_rate", learning_rate},
      {"entropy_coef", entropy_coef},
      {"value_coef", value_coef},
      {"gamma", gamma},
      {"rho_bar", rho_bar},
      {"c_bar", c_bar},
      {"unroll_length", unroll_length},
      {"batch_size", batch_size},
      {"frame_budget", resolved_frame_budget()},
      {"seeds", seeds},
      {"out_dir", resolved_out_dir()},
      {"actors", actors},
      {"threads", threads},
      {"checkpoint_every", checkpoint_every},
      {"env_config", e},
      {"sweep", {{"learning_rates", sweep_learning_rates}, {"aux_coefs", sweep_aux_coefs}}}};
}

TrainerConfig RunConfig::trainer_config(uint64_t seed, const std::string& run_dir) const {
  TrainerConfig t;
  t.env_kind = env;
  t.cleanup = cleanup;
  t.minipitch = minipitch;
  t.model_kind = model;
  t.transfer = transfer;
  t.init_checkpoint = init_checkpoint;
  t.adam.lr = learning_rate;
  t.coeffs.value = value_coef;
  t.coeffs.entropy = entropy_coef;
  t.coeffs.aux = aux_coef;
  t.vtrace.gamma = gamma;
  t.vtrace.rho_bar = rho_bar;
  t.vtrace.c_bar = c_bar;
  t.unroll = unroll_length;
  t.batch_size = batch_size;
  t.frame_budget = resolved_frame_budget();
  t.seed = seed;
  t.actors = actors;
  t.checkpoint_every = checkpoint_every;
  t.out_dir = run_dir;
  t.metrics_path = run_dir.empty() ? "" : run_dir + "/metrics.jsonl";
  return t;
}

void write_manifest(const std::string& dir, const nlohmann::json& resolved_config,
                    const std::string& status, const nlohmann::json& extras) {
  std::filesystem::create_directories(dir);
  nlohmann::json m;
  m["config"] = resolved_config;
  m["status"] = status;
  m["code_version"] = kVersion;
  for (auto it = extras.begin(); it != extras.end(); ++it) m[it.key()] = it.value();
  const std::string tmp = dir + "/manifest.json.tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw IoError("cannot write manifest in " + dir);
    os << m.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, dir + "/manifest.json");
}

nlohmann::json read_manifest(const std::string& dir) {
  std::ifstream is(dir + "/manifest.json");
  if (!is) throw IoError("no manifest in " + dir);
  nlohmann::json m;
  is >> m;
  return m;
}

}  // namespace marl
