#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "marl/pretrain.hpp"
#include "marl/trainer.hpp"

namespace marl {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutputRootEnvVar = "MARLGRID_OUTPUT_ROOT";

// Resolved experiment configuration. Parsing rejects unknown keys anywhere
// in the tree (silent typos corrupt sweeps); enumerations are validated
// before a run starts, and off-grid learning rates / aux coefficients are
// reported as warnings, not errors.
struct RunConfig {
  std::string env = "cleanup";
  ModelKind model = ModelKind::Cnn;
  TransferMode transfer = TransferMode::Scratch;
  std::string init_checkpoint;

  double aux_coef = 0.0;
  double learning_rate = 0.00028;
  double entropy_coef = 0.0005;
  double value_coef = 0.5;
  double gamma = 0.99;
  double rho_bar = 1.0;
  double c_bar = 1.0;
  int unroll_length = 32;
  int batch_size = 16;
  int64_t frame_budget = 0;  // 0 resolves to the per-env default
  std::vector<uint64_t> seeds{1};
  std::string out_dir = "runs/run";
  int actors = 0;
  int threads = 0;
  int checkpoint_every = 0;

  CleanupConfig cleanup;
  MiniPitchConfig minipitch;

  std::vector<double> sweep_learning_rates{0.00007, 0.00014, 0.00028};
  std::vector<double> sweep_aux_coefs{0.0001, 0.0005};

  PretrainConfig pretrain;
  std::string pretrain_dataset;

  static RunConfig from_json(const nlohmann::json& j, std::vector<std::string>* warnings);
  static RunConfig from_file(const std::string& path, std::vector<std::string>* warnings);
  nlohmann::json to_json() const;  // fully resolved, manifest-ready

  void validate(std::vector<std::string>* warnings) const;
  int64_t resolved_frame_budget() const;
  std::string resolved_out_dir() const;  // honors MARLGRID_OUTPUT_ROOT

  TrainerConfig trainer_config(uint64_t seed, const std::string& run_dir) const;
};

// Run manifest, written atomically at run start (status "running") and at
// the end (status "completed"/"failed"); holds everything needed to
// re-launch the run exactly.
void write_manifest(const std::string& dir, const nlohmann::json& resolved_config,
                    const std::string& status, const nlohmann::json& extras);
nlohmann::json read_manifest(const std::string& dir);

}  // namespace marl
