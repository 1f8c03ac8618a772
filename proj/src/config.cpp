#include "stiffid/config.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace stiffid {

using nlohmann::json;

namespace {

// Reads `key` into `out` when present. Every object's keys are checked
// against the set of fields read from it.
class Reader {
 public:
  Reader(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return obj_.contains(key) ? &obj_.at(key) : nullptr;
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

bool all_positive(const std::vector<double>& v) {
  for (double x : v)
    if (!(x > 0.0) || !std::isfinite(x)) return false;
  return true;
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Matrix state_noise(double pos_std, double vel_std, int pose_dim) {
  Vector d(2 * pose_dim);
  d << Vector::Constant(pose_dim, pos_std * pos_std), Vector::Constant(pose_dim, vel_std * vel_std);
  return d.asDiagonal();
}

json sines_to_json(const std::vector<std::vector<SineComponent>>& channels) {
  json out = json::array();
  for (const auto& ch : channels) {
    json arr = json::array();
    for (const SineComponent& s : ch)
      arr.push_back({{"amplitude", s.amplitude},
                     {"frequency_hz", s.frequency_hz},
                     {"phase_rad", s.phase_rad}});
    out.push_back(arr);
  }
  return out;
}

std::vector<std::vector<SineComponent>> sines_from_json(const json& j) {
  if (!j.is_array()) throw ConfigError("simulation.excitation: expected an array of channels");
  std::vector<std::vector<SineComponent>> out;
  for (std::size_t c = 0; c < j.size(); ++c) {
    if (!j[c].is_array()) throw ConfigError("simulation.excitation: each channel must be an array");
    std::vector<SineComponent> ch;
    for (std::size_t i = 0; i < j[c].size(); ++i) {
      Reader r(j[c][i], "simulation.excitation[" + std::to_string(c) + "][" + std::to_string(i) + "]");
      SineComponent s;
      r.get("amplitude", s.amplitude);
      r.get("frequency_hz", s.frequency_hz);
      r.get("phase_rad", s.phase_rad);
      r.finish();
      ch.push_back(s);
    }
    out.push_back(std::move(ch));
  }
  return out;
}

}  // namespace

std::vector<std::vector<SineComponent>> default_excitation() {
  const double freqs[3][3] = {{0.7, 1.9, 3.1}, {0.9, 2.3, 3.7}, {1.1, 1.6, 2.9}};
  std::vector<std::vector<SineComponent>> ch(3);
  for (int c = 0; c < 3; ++c) {
    for (int j = 0; j < 3; ++j) ch[c].push_back({8.0, freqs[c][j], 0.5 + 1.3 * c + 2.1 * j});
  }
  return ch;
}

ExperimentConfig::ExperimentConfig() { simulation.excitation = default_excitation(); }

void ExperimentConfig::validate() const {
  require(model.type == "oscillator", "model.type: only 'oscillator' is supported");
  require(model.mass_kg.size() == 3 && all_positive(model.mass_kg), "model.mass_kg: three positive values");
  require(model.damping_n_s_per_m.size() == 3 && all_finite(model.damping_n_s_per_m),
          "model.damping_n_s_per_m: three finite values");
  require(std::isfinite(model.k0_n_per_m) && std::isfinite(model.k1_n_per_m),
          "model stiffness parameters must be finite");
  require(model.c_m2 > 0.0, "model.c_m2 must be positive");
  require(model.output_dim == 3 || model.output_dim == 6, "model.output_dim must be 3 or 6");

  require(simulation.dt_ms > 0.0, "simulation.dt_ms must be positive");
  require(simulation.steps >= 1, "simulation.steps must be at least 1");
  require(simulation.initial_position_m.size() == 3 && all_finite(simulation.initial_position_m),
          "simulation.initial_position_m: three finite values");
  require(simulation.initial_velocity_m_per_s.size() == 3 &&
              all_finite(simulation.initial_velocity_m_per_s),
          "simulation.initial_velocity_m_per_s: three finite values");
  require(simulation.process_noise_position_std_m >= 0.0 &&
              simulation.process_noise_velocity_std_m_per_s >= 0.0,
          "simulation process noise must be nonnegative");
  require(simulation.measurement_noise_std >= 0.0, "simulation.measurement_noise_std must be nonnegative");
  require(simulation.excitation.size() == 3, "simulation.excitation: one list per input channel (3)");
  for (const auto& ch : simulation.excitation) {
    for (const SineComponent& s : ch)
      require(std::isfinite(s.amplitude) && s.frequency_hz >= 0.0 && std::isfinite(s.phase_rad),
              "simulation.excitation: invalid sine component");
  }

  require(basis.basis_count >= 1, "basis.basis_count must be at least 1");
  require(basis.half_widths.size() == 3 && all_positive(basis.half_widths),
          "basis.half_widths: three positive values");
  require(basis.workspace_lower_m.size() == 3 && basis.workspace_upper_m.size() == 3,
          "basis workspace bounds need three values each");
  for (int i = 0; i < 3; ++i)
    require(basis.workspace_upper_m[i] > basis.workspace_lower_m[i],
            "basis workspace upper bound must exceed the lower bound");
  require(basis.fill_fraction > 0.0 && basis.fill_fraction <= 1.0,
          "basis.fill_fraction must lie in (0, 1]");

  require(prior.length_scale > 0.0 && prior.signal_variance > 0.0,
          "prior hyperparameters must be positive");
  require(prior.psi > 0.0 && prior.nu > 0.0, "prior psi and nu must be positive");

  require(filter.particle_count >= 1, "filter.particle_count must be at least 1");
  require(filter.forgetting_multiplier > 0.0 && filter.forgetting_multiplier <= 1.0,
          "filter.forgetting_multiplier must lie in (0, 1]");
  require(filter.process_noise_position_std_m > 0.0 && filter.process_noise_velocity_std_m_per_s > 0.0,
          "filter process noise must be positive");
  require(filter.measurement_noise_std > 0.0, "filter.measurement_noise_std must be positive");
  require(filter.hyperparam_walk_var_log.size() == 2 && filter.hyperparam_walk_var_log[0] >= 0.0 &&
              filter.hyperparam_walk_var_log[1] >= 0.0,
          "filter.hyperparam_walk_var_log: two nonnegative values");
  require(filter.ess_resample_fraction > 0.0 && filter.ess_resample_fraction <= 1.0,
          "filter.ess_resample_fraction must lie in (0, 1]");
  require(filter.resampling == "multinomial" || filter.resampling == "systematic",
          "filter.resampling must be 'multinomial' or 'systematic'");
  require(filter.initial_position_std_m >= 0.0 && filter.initial_velocity_std_m_per_s >= 0.0,
          "filter initial spreads must be nonnegative");
  require(filter.workers >= 1, "filter.workers must be at least 1");

  require(ukf.alpha > 0.0 && ukf.alpha <= 1.0, "ukf.alpha must lie in (0, 1]");
  require(ukf.kappa >= 0.0, "ukf.kappa must be nonnegative");
  require(ukf.process_noise_position_std_m >= 0.0 && ukf.process_noise_velocity_std_m_per_s >= 0.0 &&
              ukf.stiffness_walk_std_n_per_m >= 0.0,
          "ukf process noise must be nonnegative");
  require(ukf.measurement_noise_std > 0.0, "ukf.measurement_noise_std must be positive");
  require(ukf.initial_stiffness_std_n_per_m >= 0.0, "ukf.initial_stiffness_std_n_per_m must be nonnegative");

  require(!evaluation.horizons.empty() && !evaluation.step_sizes_ms.empty(),
          "evaluation grid must not be empty");
  for (int h : evaluation.horizons) require(h >= 1, "evaluation.horizons must be positive");
  require(all_positive(evaluation.step_sizes_ms), "evaluation.step_sizes_ms must be positive");
  require(evaluation.stride >= 1, "evaluation.stride must be at least 1");
  require(evaluation.surface_axes.size() == 2 && evaluation.surface_axes[0] != evaluation.surface_axes[1],
          "evaluation.surface_axes: two distinct pose axes");
  for (int a : evaluation.surface_axes)
    require(a >= 0 && a < 3, "evaluation.surface_axes out of range");
  require(evaluation.surface_fixed_m.size() == 3 && all_finite(evaluation.surface_fixed_m),
          "evaluation.surface_fixed_m: three finite values");
  require(evaluation.surface_points >= 2, "evaluation.surface_points must be at least 2");

  require(!sweep.seeds.empty() && !sweep.particle_counts.empty(), "sweep ranges must not be empty");
  for (int n : sweep.particle_counts) require(n >= 1, "sweep.particle_counts must be positive");
  require(sweep.workers >= 1, "sweep.workers must be at least 1");
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  j["model"] = {{"type", model.type},
                {"mass_kg", model.mass_kg},
                {"damping_n_s_per_m", model.damping_n_s_per_m},
                {"k0_n_per_m", model.k0_n_per_m},
                {"k1_n_per_m", model.k1_n_per_m},
                {"c_m2", model.c_m2},
                {"output_dim", model.output_dim},
                {"lever_arm_m", model.lever_arm_m}};
  j["simulation"] = {{"dt_ms", simulation.dt_ms},
                     {"steps", simulation.steps},
                     {"initial_position_m", simulation.initial_position_m},
                     {"initial_velocity_m_per_s", simulation.initial_velocity_m_per_s},
                     {"process_noise_position_std_m", simulation.process_noise_position_std_m},
                     {"process_noise_velocity_std_m_per_s", simulation.process_noise_velocity_std_m_per_s},
                     {"measurement_noise_std", simulation.measurement_noise_std},
                     {"excitation", sines_to_json(simulation.excitation)}};
  j["basis"] = {{"basis_count", basis.basis_count},
                {"half_widths", basis.half_widths},
                {"workspace_lower_m", basis.workspace_lower_m},
                {"workspace_upper_m", basis.workspace_upper_m},
                {"fill_fraction", basis.fill_fraction}};
  j["prior"] = {{"length_scale", prior.length_scale},
                {"signal_variance", prior.signal_variance},
                {"psi", prior.psi},
                {"nu", prior.nu}};
  j["filter"] = {{"particle_count", filter.particle_count},
                 {"forgetting_multiplier", filter.forgetting_multiplier},
                 {"process_noise_position_std_m", filter.process_noise_position_std_m},
                 {"process_noise_velocity_std_m_per_s", filter.process_noise_velocity_std_m_per_s},
                 {"measurement_noise_std", filter.measurement_noise_std},
                 {"hyperparam_learning", filter.hyperparam_learning},
                 {"hyperparam_walk_var_log", filter.hyperparam_walk_var_log},
                 {"ess_resample_fraction", filter.ess_resample_fraction},
                 {"resampling", filter.resampling},
                 {"initial_position_std_m", filter.initial_position_std_m},
                 {"initial_velocity_std_m_per_s", filter.initial_velocity_std_m_per_s},
                 {"workers", filter.workers}};
  j["ukf"] = {{"alpha", ukf.alpha},
              {"beta", ukf.beta},
              {"kappa", ukf.kappa},
              {"process_noise_position_std_m", ukf.process_noise_position_std_m},
              {"process_noise_velocity_std_m_per_s", ukf.process_noise_velocity_std_m_per_s},
              {"stiffness_walk_std_n_per_m", ukf.stiffness_walk_std_n_per_m},
              {"measurement_noise_std", ukf.measurement_noise_std},
              {"initial_stiffness_n_per_m", ukf.initial_stiffness_n_per_m},
              {"initial_stiffness_std_n_per_m", ukf.initial_stiffness_std_n_per_m}};
  j["evaluation"] = {{"horizons", evaluation.horizons},
                     {"step_sizes_ms", evaluation.step_sizes_ms},
                     {"stride", evaluation.stride},
                     {"surface_axes", evaluation.surface_axes},
                     {"surface_fixed_m", evaluation.surface_fixed_m},
                     {"surface_points", evaluation.surface_points}};
  j["sweep"] = {{"seeds", sweep.seeds},
                {"particle_counts", sweep.particle_counts},
                {"workers", sweep.workers}};
  return j.dump(2) + "\n";
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Reader root(j, "config");
  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);
  if (const json* m = root.child("model")) {
    Reader r(*m, "model");
    r.get("type", c.model.type);
    r.get("mass_kg", c.model.mass_kg);
    r.get("damping_n_s_per_m", c.model.damping_n_s_per_m);
    r.get("k0_n_per_m", c.model.k0_n_per_m);
    r.get("k1_n_per_m", c.model.k1_n_per_m);
    r.get("c_m2", c.model.c_m2);
    r.get("output_dim", c.model.output_dim);
    r.get("lever_arm_m", c.model.lever_arm_m);
    r.finish();
  }
  if (const json* s = root.child("simulation")) {
    Reader r(*s, "simulation");
    r.get("dt_ms", c.simulation.dt_ms);
    r.get("steps", c.simulation.steps);
    r.get("initial_position_m", c.simulation.initial_position_m);
    r.get("initial_velocity_m_per_s", c.simulation.initial_velocity_m_per_s);
    r.get("process_noise_position_std_m", c.simulation.process_noise_position_std_m);
    r.get("process_noise_velocity_std_m_per_s", c.simulation.process_noise_velocity_std_m_per_s);
    r.get("measurement_noise_std", c.simulation.measurement_noise_std);
    if (const json* e = r.child("excitation")) c.simulation.excitation = sines_from_json(*e);
    r.finish();
  }
  if (const json* b = root.child("basis")) {
    Reader r(*b, "basis");
    r.get("basis_count", c.basis.basis_count);
    r.get("half_widths", c.basis.half_widths);
    r.get("workspace_lower_m", c.basis.workspace_lower_m);
    r.get("workspace_upper_m", c.basis.workspace_upper_m);
    r.get("fill_fraction", c.basis.fill_fraction);
    r.finish();
  }
  if (const json* p = root.child("prior")) {
    Reader r(*p, "prior");
    r.get("length_scale", c.prior.length_scale);
    r.get("signal_variance", c.prior.signal_variance);
    r.get("psi", c.prior.psi);
    r.get("nu", c.prior.nu);
    r.finish();
  }
  if (const json* f = root.child("filter")) {
    Reader r(*f, "filter");
    r.get("particle_count", c.filter.particle_count);
    r.get("forgetting_multiplier", c.filter.forgetting_multiplier);
    r.get("process_noise_position_std_m", c.filter.process_noise_position_std_m);
    r.get("process_noise_velocity_std_m_per_s", c.filter.process_noise_velocity_std_m_per_s);
    r.get("measurement_noise_std", c.filter.measurement_noise_std);
    r.get("hyperparam_learning", c.filter.hyperparam_learning);
    r.get("hyperparam_walk_var_log", c.filter.hyperparam_walk_var_log);
    r.get("ess_resample_fraction", c.filter.ess_resample_fraction);
    r.get("resampling", c.filter.resampling);
    r.get("initial_position_std_m", c.filter.initial_position_std_m);
    r.get("initial_velocity_std_m_per_s", c.filter.initial_velocity_std_m_per_s);
    r.get("workers", c.filter.workers);
    r.finish();
  }
  if (const json* u = root.child("ukf")) {
    Reader r(*u, "ukf");
    r.get("alpha", c.ukf.alpha);
    r.get("beta", c.ukf.beta);
    r.get("kappa", c.ukf.kappa);
    r.get("process_noise_position_std_m", c.ukf.process_noise_position_std_m);
    r.get("process_noise_velocity_std_m_per_s", c.ukf.process_noise_velocity_std_m_per_s);
    r.get("stiffness_walk_std_n_per_m", c.ukf.stiffness_walk_std_n_per_m);
    r.get("measurement_noise_std", c.ukf.measurement_noise_std);
    r.get("initial_stiffness_n_per_m", c.ukf.initial_stiffness_n_per_m);
    r.get("initial_stiffness_std_n_per_m", c.ukf.initial_stiffness_std_n_per_m);
    r.finish();
  }
  if (const json* e = root.child("evaluation")) {
    Reader r(*e, "evaluation");
    r.get("horizons", c.evaluation.horizons);
    r.get("step_sizes_ms", c.evaluation.step_sizes_ms);
    r.get("stride", c.evaluation.stride);
    r.get("surface_axes", c.evaluation.surface_axes);
    r.get("surface_fixed_m", c.evaluation.surface_fixed_m);
    r.get("surface_points", c.evaluation.surface_points);
    r.finish();
  }
  if (const json* s = root.child("sweep")) {
    Reader r(*s, "sweep");
    r.get("seeds", c.sweep.seeds);
    r.get("particle_counts", c.sweep.particle_counts);
    r.get("workers", c.sweep.workers);
    r.finish();
  }
  root.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return ExperimentConfig::from_json(os.str());
}

void save_config(const ExperimentConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << config.to_json();
  if (!out) throw IoError("failed writing " + path.string());
}

std::shared_ptr<StiffnessOscillator> make_model(const ExperimentConfig& config) {
  OscillatorParams p;
  p.mass = to_vector(config.model.mass_kg);
  p.damping = to_vector(config.model.damping_n_s_per_m);
  p.k0 = config.model.k0_n_per_m;
  p.k1 = config.model.k1_n_per_m;
  p.c = config.model.c_m2;
  p.dt = config.simulation.dt_ms * 1e-3;
  p.output_dim = config.model.output_dim;
  p.lever_arm = config.model.lever_arm_m;
  return std::make_shared<StiffnessOscillator>(p);
}

Matrix make_inputs(const ExperimentConfig& config) {
  return multisine_input(config.simulation.excitation, config.simulation.steps,
                         config.simulation.dt_ms * 1e-3);
}

Vector make_initial_state(const ExperimentConfig& config) {
  Vector x(6);
  x << to_vector(config.simulation.initial_position_m),
      to_vector(config.simulation.initial_velocity_m_per_s);
  return x;
}

NoiseCovariances make_sim_noise(const ExperimentConfig& config) {
  const auto& s = config.simulation;
  NoiseCovariances n;
  n.process = state_noise(s.process_noise_position_std_m, s.process_noise_velocity_std_m_per_s, 3);
  n.measurement = Matrix::Identity(config.model.output_dim, config.model.output_dim) *
                  (s.measurement_noise_std * s.measurement_noise_std);
  return n;
}

GpSetup make_gp(const ExperimentConfig& config) {
  const DomainBox domain(to_vector(config.basis.half_widths));
  GpSetup gp;
  gp.basis = std::make_shared<LaplacianBasis>(3, config.basis.basis_count, domain);
  gp.scaler = InputScaler::from_workspace(to_vector(config.basis.workspace_lower_m),
                                          to_vector(config.basis.workspace_upper_m), domain,
                                          config.basis.fill_fraction);
  gp.hyperparams = {config.prior.signal_variance, config.prior.length_scale};
  gp.psi = config.prior.psi;
  gp.nu = config.prior.nu;
  return gp;
}

FilterConfig make_filter_config(const ExperimentConfig& config) {
  const auto& f = config.filter;
  FilterConfig fc;
  fc.particle_count = f.particle_count;
  fc.forgetting_multiplier = f.forgetting_multiplier;
  fc.process_noise_cov =
      state_noise(f.process_noise_position_std_m, f.process_noise_velocity_std_m_per_s, 3);
  fc.measurement_noise_cov = Matrix::Identity(config.model.output_dim, config.model.output_dim) *
                             (f.measurement_noise_std * f.measurement_noise_std);
  fc.hyperparam_learning = f.hyperparam_learning;
  fc.hyperparam_walk_var = to_vector(f.hyperparam_walk_var_log);
  fc.rng_seed = config.seed;
  fc.ess_resample_threshold = f.ess_resample_fraction;
  fc.resampling =
      f.resampling == "systematic" ? ResamplingScheme::kSystematic : ResamplingScheme::kMultinomial;
  fc.workers = f.workers;
  return fc;
}

InitialStateSampler make_initial_sampler(const ExperimentConfig& config) {
  const Vector mean = make_initial_state(config);
  const double sp = config.filter.initial_position_std_m;
  const double sv = config.filter.initial_velocity_std_m_per_s;
  return [mean, sp, sv](CounterRng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector x = mean;
    for (int i = 0; i < 3; ++i) x[i] += sp * normal(rng);
    for (int i = 3; i < 6; ++i) x[i] += sv * normal(rng);
    return x;
  };
}

UkfConfig make_ukf_config(const ExperimentConfig& config) {
  const auto& u = config.ukf;
  const int ny = config.model.output_dim;
  UkfConfig c;
  c.alpha = u.alpha;
  c.beta = u.beta;
  c.kappa = u.kappa;
  c.process_noise_cov = Matrix::Zero(7, 7);
  c.process_noise_cov.topLeftCorner(6, 6) =
      state_noise(u.process_noise_position_std_m, u.process_noise_velocity_std_m_per_s, 3);
  c.process_noise_cov(6, 6) = u.stiffness_walk_std_n_per_m * u.stiffness_walk_std_n_per_m;
  c.measurement_noise_cov =
      Matrix::Identity(ny, ny) * (u.measurement_noise_std * u.measurement_noise_std);
  c.initial_mean = Vector(7);
  c.initial_mean << make_initial_state(config), u.initial_stiffness_n_per_m;
  Vector var(7);
  const double sp = config.filter.initial_position_std_m;
  const double sv = config.filter.initial_velocity_std_m_per_s;
  var << Vector::Constant(3, sp * sp), Vector::Constant(3, sv * sv),
      u.initial_stiffness_std_n_per_m * u.initial_stiffness_std_n_per_m;
  c.initial_cov = var.asDiagonal();
  return c;
}

}  // namespace stiffid
