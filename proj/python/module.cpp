#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "marl/checkpoint.hpp"
#include "marl/config.hpp"
#include "marl/elo.hpp"
#include "marl/gradcheck.hpp"
#include "marl/match.hpp"
#include "marl/observation.hpp"
#include "marl/pretrain.hpp"
#include "marl/rollout.hpp"
#include "marl/vtrace.hpp"

namespace py = pybind11;
using namespace marl;

namespace {

TensorF tensor_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  Shape shape;
  for (py::ssize_t d = 0; d < a.ndim(); ++d) shape.push_back(int(a.shape(d)));
  TensorF t(shape);
  std::copy_n(a.data(), size_t(t.size()), t.ptr());
  return t;
}

py::array_t<float> array_from_tensor(const TensorF& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<float> a(shape);
  std::copy_n(t.ptr(), size_t(t.size()), a.mutable_data());
  return a;
}

// Python-facing environment handle: env + current state + frame history.
class PyEnv {
 public:
  explicit PyEnv(const std::string& kind, int episode_len) {
    if (kind == "cleanup") {
      CleanupConfig cfg;
      if (episode_len > 0) cfg.spec.episode_len = episode_len;
      env_ = std::make_unique<CleanupEnv>(cfg);
    } else if (kind == "minipitch") {
      MiniPitchConfig cfg;
      if (episode_len > 0) cfg.spec.episode_len = episode_len;
      env_ = std::make_unique<MiniPitchEnv>(cfg);
    } else {
      throw ConfigError("unknown env kind: " + kind);
    }
  }

  void reset(uint64_t seed) {
    state_ = env_->reset(seed);
    recent_.assign(1, state_);
    terminal_ = false;
  }

  py::tuple step(const std::vector<int>& actions) {
    MARL_CHECK(!terminal_, "episode is over; call reset");
    StepResult res = env_->step(state_, actions);
    terminal_ = res.terminal;
    state_ = std::move(res.next);
    recent_.push_back(state_);
    if (int(recent_.size()) > kObsStack) recent_.erase(recent_.begin());
    return py::make_tuple(res.rewards, res.team_reward, res.terminal);
  }

  py::array_t<uint8_t> observe(int agent) {
    MARL_CHECK(!recent_.empty(), "call reset first");
    Observation obs = encode_observation(*env_, recent_, agent);
    const MamdpSpec& spec = env_->spec();
    py::array_t<uint8_t> a({kObsStack * kObsChannels, spec.height, spec.width});
    std::copy(obs.planes.begin(), obs.planes.end(), a.mutable_data());
    return a;
  }

  int scripted_action(int agent, uint64_t seed) {
    RngStream rng(seed, 0x5c7ULL);
    return env_->scripted_action(state_, agent, rng);
  }

  int num_agents() const { return env_->spec().num_agents; }
  int action_count() const { return env_->spec().action_count; }
  int height() const { return env_->spec().height; }
  int width() const { return env_->spec().width; }
  int episode_len() const { return env_->spec().episode_len; }
  py::list agent_positions() const {
    py::list out;
    for (const auto& p : state_.agents) out.append(py::make_tuple(p.row, p.col));
    return out;
  }

  const Env& env() const { return *env_; }

 private:
  std::unique_ptr<Env> env_;
  EnvState state_;
  std::vector<EnvState> recent_;
  bool terminal_ = true;
};

class PyModel {
 public:
  PyModel(const std::string& kind, const PyEnv& env, uint64_t seed) {
    ModelConfig cfg = model_config_for_env(env.env(), kind == "acnn" ? ModelKind::Acnn
                                                                     : ModelKind::Cnn);
    model_ = make_model(cfg, seed);
  }
  explicit PyModel(Model m) : model_(std::move(m)) {}

  py::dict forward(const py::array_t<float, py::array::c_style | py::array::forcecast>& obs,
                   int groups) {
    ForwardValues v = forward_values(model_, tensor_from_array(obs), groups);
    py::dict out;
    out["policy_logits"] = array_from_tensor(v.policy_logits);
    out["value"] = array_from_tensor(v.value);
    out["loc_h_logits"] = array_from_tensor(v.loc_h);
    out["loc_w_logits"] = array_from_tensor(v.loc_w);
    py::list attn;
    for (const auto& w : v.attn_weights) attn.append(array_from_tensor(w));
    out["attention"] = attn;
    return out;
  }

  void save(const std::string& path) const { save_model(path, model_); }
  static PyModel load(const std::string& path) { return PyModel(load_model(path)); }

  std::vector<std::string> parameter_names() const {
    std::vector<std::string> names;
    for (const auto& e : model_.params.entries) names.push_back(e.name);
    return names;
  }
  py::array_t<float> parameter(const std::string& name) const {
    return array_from_tensor(model_.params.at(name));
  }
  std::string kind() const { return model_kind_name(model_.cfg.kind); }

 private:
  Model model_;
};

py::dict py_gradcheck(const std::string& model, uint64_t seed, bool progressive) {
  ModelConfig cfg;
  cfg.kind = model == "acnn" ? ModelKind::Acnn : ModelKind::Cnn;
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
  GradCheckReport r = grad_check_model(cfg, seed, opts, progressive);
  py::dict out;
  out["max_rel_err"] = r.max_rel_err;
  out["scalars_checked"] = r.scalars_checked;
  out["per_kind"] = r.per_kind;
  out["worst_param"] = r.worst_param;
  out["passed"] = r.pass(1e-5);
  return out;
}

py::tuple py_vtrace(const std::vector<double>& log_pi, const std::vector<double>& log_mu,
                    const std::vector<double>& rewards, const std::vector<double>& values,
                    const std::vector<uint8_t>& boundary, double gamma, double rho_bar,
                    double c_bar) {
  VTraceConfig cfg{gamma, rho_bar, c_bar};
  auto out = vtrace_sequence<double>(log_pi, log_mu, rewards, values, boundary, cfg);
  return py::make_tuple(out.vs, out.advantage, out.rho);
}

py::dict py_elo(const std::vector<py::tuple>& matches, double k_factor, double initial,
                int epochs, int shuffle_seeds) {
  std::vector<MatchResult> results;
  for (const auto& t : matches) {
    MatchResult m;
    m.home = t[0].cast<std::string>();
    m.away = t[1].cast<std::string>();
    const std::string outcome = t[2].cast<std::string>();
    m.outcome = outcome == "win"    ? MatchResult::Outcome::Win
                : outcome == "loss" ? MatchResult::Outcome::Loss
                                    : MatchResult::Outcome::Tie;
    results.push_back(std::move(m));
  }
  EloConfig cfg;
  cfg.k_factor = k_factor;
  cfg.initial_rating = initial;
  cfg.epochs = epochs;
  cfg.shuffle_seeds = shuffle_seeds;
  RatingTable table = elo_estimate(results, cfg);
  py::dict out;
  for (const auto& [id, r] : table.rating) out[py::str(id)] = r;
  return out;
}

// Tiny training driver for smoke tests: runs a JSON config to its frame
// budget and returns the logged metrics lines.
std::vector<std::string> py_train(const std::string& config_json, uint64_t seed) {
  std::vector<std::string> warnings;
  RunConfig cfg = RunConfig::from_json(nlohmann::json::parse(config_json), &warnings);
  Trainer trainer(cfg.trainer_config(seed, ""));
  std::vector<std::string> lines;
  for (const StepMetrics& m : trainer.run()) lines.push_back(Trainer::metrics_line(m));
  return lines;
}

double py_nll(const py::array_t<float, py::array::c_style | py::array::forcecast>& sh,
              const py::array_t<float, py::array::c_style | py::array::forcecast>& sw,
              const std::vector<int>& th, const std::vector<int>& tw) {
  return agent_centric_nll(tensor_from_array(sh), tensor_from_array(sw), th, tw);
}

}  // namespace

PYBIND11_MODULE(_marlgrid, m) {
  m.doc() = "Desk-scale cooperative multi-agent RL stack: agent-centric attention, "
            "next-location objectives, V-trace training, tournaments";
  m.attr("__version__") = kVersion;

  py::register_exception<ContractError>(m, "ContractViolation");
  py::register_exception<ConfigError>(m, "ConfigurationError");

  py::class_<PyEnv>(m, "Env")
      .def(py::init<const std::string&, int>(), py::arg("kind"), py::arg("episode_len") = 0)
      .def("reset", &PyEnv::reset, py::arg("seed"))
      .def("step", &PyEnv::step, py::arg("actions"),
           "Returns (per_agent_rewards, team_reward, terminal)")
      .def("observe", &PyEnv::observe, py::arg("agent"),
           "Stacked binary planes [stack*channels, H, W] for one agent")
      .def("scripted_action", &PyEnv::scripted_action, py::arg("agent"), py::arg("seed"))
      .def_property_readonly("num_agents", &PyEnv::num_agents)
      .def_property_readonly("action_count", &PyEnv::action_count)
      .def_property_readonly("height", &PyEnv::height)
      .def_property_readonly("width", &PyEnv::width)
      .def_property_readonly("episode_len", &PyEnv::episode_len)
      .def("agent_positions", &PyEnv::agent_positions);

  py::class_<PyModel>(m, "Model")
      .def(py::init<const std::string&, const PyEnv&, uint64_t>(), py::arg("kind"),
           py::arg("env"), py::arg("seed") = 1)
      .def("forward", &PyModel::forward, py::arg("obs"), py::arg("groups") = 1)
      .def("save", &PyModel::save)
      .def_static("load", &PyModel::load)
      .def("parameter_names", &PyModel::parameter_names)
      .def("parameter", &PyModel::parameter)
      .def_property_readonly("kind", &PyModel::kind);

  m.def("gradcheck", &py_gradcheck, py::arg("model") = "acnn", py::arg("seed") = 1,
        py::arg("progressive") = false);
  m.def("vtrace_targets", &py_vtrace, py::arg("log_pi"), py::arg("log_mu"), py::arg("rewards"),
        py::arg("values"), py::arg("boundary"), py::arg("gamma") = 0.99,
        py::arg("rho_bar") = 1.0, py::arg("c_bar") = 1.0);
  m.def("elo_expected", &elo_expected, py::arg("rating_a"), py::arg("rating_b"));
  m.def("elo_estimate", &py_elo, py::arg("matches"), py::arg("k_factor") = 32.0,
        py::arg("initial_rating") = 1000.0, py::arg("epochs") = 100,
        py::arg("shuffle_seeds") = 100);
  m.def("agent_centric_nll", &py_nll, py::arg("sigma_h"), py::arg("sigma_w"),
        py::arg("targets_h"), py::arg("targets_w"));
  m.def("train_run", &py_train, py::arg("config_json"), py::arg("seed") = 1,
        "Run a small training config to its frame budget; returns metrics lines");
}
