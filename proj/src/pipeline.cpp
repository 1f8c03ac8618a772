#include "stiffid/pipeline.hpp"

#include "stiffid/format.hpp"
#include "stiffid/parallel.hpp"
#include "stiffid/trace_io.hpp"
#include "stiffid/ukf.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace stiffid {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void close_out(std::ofstream& out, const fs::path& path) {
  out.close();
  if (!out) throw IoError("failed writing " + path.string());
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  close_out(out, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

json parse_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw InvalidInputError(path.string() + ": " + e.what());
  }
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector from_json_vector(const json& j, const std::string& key) {
  if (!j.contains(key) || !j[key].is_array()) throw InvalidInputError("missing array " + key);
  Vector v(static_cast<Eigen::Index>(j[key].size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[key][static_cast<std::size_t>(i)].get<double>();
  return v;
}

TraceDims trace_dims(const ExperimentConfig& config) {
  TraceDims d;
  d.inputs = 3;
  d.outputs = config.model.output_dim;
  return d;
}

SimTrace load_trace(const ExperimentConfig& config, const fs::path& path) {
  SimTrace trace = read_trace_csv(path, trace_dims(config));
  const double dt = config.simulation.dt_ms * 1e-3;
  if (std::abs(trace.dt - dt) > 1e-9 * dt)
    throw InvalidInputError("trace sample time " + format_double(trace.dt * 1e3) +
                            " ms does not match dt_ms " + format_double(config.simulation.dt_ms));
  return trace;
}

}  // namespace

SimTrace run_simulation(const ExperimentConfig& config) {
  config.validate();
  const auto model = make_model(config);
  const Matrix inputs = make_inputs(config);
  return simulate(*model, inputs, config.simulation.steps, make_sim_noise(config), config.seed,
                  make_initial_state(config),
                  [&](const Vector& q) { return model->true_stiffness(q); },
                  config.simulation.dt_ms * 1e-3);
}

FilterRun run_filter(const ExperimentConfig& config, const SimTrace& trace,
                     const StepObserver& observer) {
  config.validate();
  trace.validate();
  const auto model = make_model(config);
  if (trace.inputs.cols() != model->input_dim() || trace.outputs.cols() != model->output_dim())
    throw InvalidInputError("trace dimensions do not match the configured model");
  const GpSetup gp = make_gp(config);
  FilterRun run;
  run.filter = std::make_unique<MarginalizedParticleFilter>(model, make_filter_config(config), gp,
                                                            make_initial_sampler(config));
  const Eigen::Index n = trace.length();
  run.states.resize(n, model->state_dim());
  run.stiffness.resize(n);
  run.ess.resize(n);
  run.resampled.assign(static_cast<std::size_t>(n), 0);
  run.log_signal_variance.resize(n);
  run.log_length_scale.resize(n);

  auto keep = [&](Eigen::Index t, const StepRecord& r) {
    run.states.row(t) = r.state_mean.transpose();
    run.stiffness[t] = r.stiffness_mean;
    run.ess[t] = r.ess;
    run.resampled[static_cast<std::size_t>(t)] = r.resampled ? 1 : 0;
    run.log_signal_variance[t] = r.log_signal_variance_mean;
    run.log_length_scale[t] = r.log_length_scale_mean;
  };
  keep(0, run.filter->snapshot());
  if (observer) observer(*run.filter);
  for (Eigen::Index t = 1; t < n; ++t) {
    keep(t, run.filter->step(trace.inputs.row(t - 1).transpose(), trace.inputs.row(t).transpose(),
                             trace.outputs.row(t).transpose()));
    if (observer) observer(*run.filter);
  }
  run.basis_clamps = gp.basis->clamp_count();
  return run;
}

UkfRun run_ukf(const ExperimentConfig& config, const SimTrace& trace) {
  config.validate();
  trace.validate();
  const auto model = make_model(config);
  UnscentedKalmanFilter ukf(model, make_ukf_config(config));
  const Eigen::Index n = trace.length();
  UkfRun run;
  run.states.resize(n, model->state_dim());
  run.stiffness.resize(n);
  StepRecord r = ukf.snapshot();
  run.states.row(0) = r.state_mean.transpose();
  run.stiffness[0] = r.stiffness_mean;
  for (Eigen::Index t = 1; t < n; ++t) {
    r = ukf.step(trace.inputs.row(t - 1).transpose(), trace.inputs.row(t).transpose(),
                 trace.outputs.row(t).transpose());
    run.states.row(t) = r.state_mean.transpose();
    run.stiffness[t] = r.stiffness_mean;
  }
  run.covariance_repairs = ukf.covariance_repairs();
  return run;
}

MetricReport prediction_report(const ExperimentConfig& config, const SimTrace& trace,
                               const LearnedGp& gp, const Vector& ukf_stiffness,
                               double mean_stiffness) {
  if (!trace.has_states()) throw InvalidInputError("prediction scores need ground-truth states");
  if (ukf_stiffness.size() != trace.length())
    throw InvalidInputError("UKF stiffness track length does not match the trace");
  const auto model = make_model(config);
  std::vector<double> steps;
  for (double ms : config.evaluation.step_sizes_ms) steps.push_back(ms * 1e-3);
  const StiffnessProvider learned = [&gp](const Vector& x, Eigen::Index) {
    return gp.mean(x.head(3));
  };
  return compare_variants(*model, trace, learned, ukf_stiffness, mean_stiffness,
                          config.evaluation.horizons, steps, config.evaluation.stride);
}

Matrix stiffness_surface(const ExperimentConfig& config, const MarginalizedParticleFilter& filter) {
  const auto& ev = config.evaluation;
  const int n = ev.surface_points;
  const auto model = make_model(config);
  std::vector<Vector> poses;
  poses.reserve(static_cast<std::size_t>(n) * n);
  const int a = ev.surface_axes[0];
  const int b = ev.surface_axes[1];
  auto grid = [&](int axis, int i) {
    const double lo = config.basis.workspace_lower_m[static_cast<std::size_t>(axis)];
    const double hi = config.basis.workspace_upper_m[static_cast<std::size_t>(axis)];
    return n == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * i / (n - 1);
  };
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      Vector q(3);
      for (int d = 0; d < 3; ++d) q[d] = ev.surface_fixed_m[static_cast<std::size_t>(d)];
      q[a] = grid(a, i);
      q[b] = grid(b, j);
      poses.push_back(q);
    }
  }
  const auto stats = filter.learned_stiffness(poses);
  Matrix out(static_cast<Eigen::Index>(poses.size()), 6);
  for (std::size_t r = 0; r < poses.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    out.block(row, 0, 1, 3) = poses[r].transpose();
    out(row, 3) = stats[r].first;
    out(row, 4) = std::sqrt(std::max(0.0, stats[r].second));
    out(row, 5) = model->true_stiffness(poses[r]);
  }
  return out;
}

void write_learned_gp(const LearnedGp& gp, const MarginalizedParticleFilter& filter,
                      const fs::path& path) {
  json j;
  j["pose_dim"] = gp.basis->dims();
  j["basis_count"] = gp.basis->size();
  j["half_widths"] = to_std(gp.basis->domain().half_widths());
  j["scaler_center_m"] = to_std(gp.scaler.center);
  j["scaler_scale_m"] = to_std(gp.scaler.scale);
  json idx = json::array();
  for (Eigen::Index r = 0; r < gp.basis->index_grid().rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < gp.basis->index_grid().cols(); ++c)
      row.push_back(gp.basis->index_grid()(r, c));
    idx.push_back(row);
  }
  j["index_grid"] = idx;
  j["coefficients"] = to_std(gp.coefficients);
  double lsv = 0.0;
  double lls = 0.0;
  for (const Particle& p : filter.particles()) {
    lsv += p.weight * std::log(p.hyperparams.signal_variance);
    lls += p.weight * std::log(p.hyperparams.length_scale);
  }
  j["log_signal_variance_mean"] = lsv;
  j["log_length_scale_mean"] = lls;
  write_text(path, j.dump(2) + "\n");
}

LearnedGp read_learned_gp(const fs::path& path) {
  const json j = parse_json(path);
  try {
    const int dims = j.at("pose_dim").get<int>();
    const int m = j.at("basis_count").get<int>();
    LearnedGp gp;
    gp.basis = std::make_shared<LaplacianBasis>(dims, m, DomainBox(from_json_vector(j, "half_widths")));
    gp.scaler.center = from_json_vector(j, "scaler_center_m");
    gp.scaler.scale = from_json_vector(j, "scaler_scale_m");
    gp.scaler.validate();
    gp.coefficients = from_json_vector(j, "coefficients");
    if (gp.coefficients.size() != m || gp.scaler.center.size() != dims)
      throw InvalidInputError(path.string() + ": inconsistent learned model sizes");
    const json& idx = j.at("index_grid");
    for (Eigen::Index r = 0; r < gp.basis->index_grid().rows(); ++r)
      for (Eigen::Index c = 0; c < dims; ++c)
        if (idx.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<int>() !=
            gp.basis->index_grid()(r, c))
          throw InvalidInputError(path.string() + ": basis ordering does not match");
    return gp;
  } catch (const json::exception& e) {
    throw InvalidInputError(path.string() + ": " + e.what());
  }
}

std::string file_fingerprint(const fs::path& path) {
  const std::string bytes = read_text(path);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

void cmd_simulate(const ExperimentConfig& config, const fs::path& out_dir) {
  config.validate();
  ensure_dir(out_dir);
  save_config(config, out_dir / "config.json");
  write_trace_csv(run_simulation(config), out_dir / "trace.csv");
}

void cmd_filter(const ExperimentConfig& config, const fs::path& trace_path,
                const fs::path& out_dir) {
  config.validate();
  const SimTrace trace = load_trace(config, trace_path);
  ensure_dir(out_dir);
  save_config(config, out_dir / "config.json");

  const FilterRun pf = run_filter(config, trace);
  const UkfRun ukf = run_ukf(config, trace);

  {
    const fs::path p = out_dir / "estimates.csv";
    auto out = open_out(p);
    out << "t";
    for (Eigen::Index i = 0; i < pf.states.cols(); ++i) out << ",x_" << i + 1;
    out << ",k,ess,resampled,log_signal_variance,log_length_scale\n";
    for (Eigen::Index t = 0; t < trace.length(); ++t) {
      out << format_double(trace.time[t]);
      for (Eigen::Index i = 0; i < pf.states.cols(); ++i) out << ',' << format_double(pf.states(t, i));
      out << ',' << format_double(pf.stiffness[t]) << ',' << format_double(pf.ess[t]) << ','
          << pf.resampled[static_cast<std::size_t>(t)] << ','
          << format_double(pf.log_signal_variance[t]) << ','
          << format_double(pf.log_length_scale[t]) << '\n';
    }
    close_out(out, p);
  }
  {
    const fs::path p = out_dir / "ukf_estimates.csv";
    auto out = open_out(p);
    out << "t";
    for (Eigen::Index i = 0; i < ukf.states.cols(); ++i) out << ",x_" << i + 1;
    out << ",k\n";
    for (Eigen::Index t = 0; t < trace.length(); ++t) {
      out << format_double(trace.time[t]);
      for (Eigen::Index i = 0; i < ukf.states.cols(); ++i)
        out << ',' << format_double(ukf.states(t, i));
      out << ',' << format_double(ukf.stiffness[t]) << '\n';
    }
    close_out(out, p);
  }
  {
    const fs::path p = out_dir / "checkpoint.bin";
    auto out = open_out(p);
    pf.filter->save_checkpoint(out);
    close_out(out, p);
  }
  if (pf.filter->uses_gp()) {
    write_learned_gp(pf.filter->learned_gp(), *pf.filter, out_dir / "learned_gp.json");
    const Matrix surface = stiffness_surface(config, *pf.filter);
    const fs::path p = out_dir / "surface.csv";
    auto out = open_out(p);
    out << "q_1,q_2,q_3,k_mean,k_std,k_true\n";
    for (Eigen::Index r = 0; r < surface.rows(); ++r) {
      for (Eigen::Index c = 0; c < surface.cols(); ++c)
        out << (c ? "," : "") << format_double(surface(r, c));
      out << '\n';
    }
    close_out(out, p);
  }

  json d;
  d["trace_fingerprint"] = file_fingerprint(trace_path);
  d["steps"] = trace.length() - 1;
  d["particle_count"] = config.filter.particle_count;
  d["seed"] = config.seed;
  d["hyperparam_learning"] = config.filter.hyperparam_learning;
  d["min_ess"] = trace.length() > 1 ? pf.ess.tail(trace.length() - 1).minCoeff() : pf.ess[0];
  d["resample_count"] = std::count(pf.resampled.begin(), pf.resampled.end(), 1);
  d["basis_clamps"] = pf.basis_clamps;
  d["psi_clamps"] = pf.filter->psi_clamps();
  d["ukf_covariance_repairs"] = ukf.covariance_repairs;
  d["mean_stiffness_n_per_m"] = pf.stiffness.mean();
  d["final_log_signal_variance"] = pf.log_signal_variance[trace.length() - 1];
  d["final_log_length_scale"] = pf.log_length_scale[trace.length() - 1];
  write_text(out_dir / "diagnostics.json", d.dump(2) + "\n");
}

void cmd_eval(const ExperimentConfig& config, const fs::path& trace_path, const fs::path& run_dir,
              const fs::path& out_dir) {
  config.validate();
  const SimTrace trace = load_trace(config, trace_path);
  if (!trace.has_states()) throw InvalidInputError("evaluation needs a trace with x_ columns");

  const json diag = parse_json(run_dir / "diagnostics.json");
  const bool in_sample =
      diag.value("trace_fingerprint", std::string()) == file_fingerprint(trace_path);
  const CsvTable est = read_csv_table(run_dir / "estimates.csv");
  const CsvTable ukf_est = read_csv_table(run_dir / "ukf_estimates.csv");
  const LearnedGp gp = read_learned_gp(run_dir / "learned_gp.json");

  const Eigen::Index nx = trace.states.cols();
  auto states_of = [&](const CsvTable& table) {
    Matrix s(table.data.rows(), nx);
    for (Eigen::Index i = 0; i < nx; ++i)
      s.col(i) = table.data.col(table.column("x_" + std::to_string(i + 1)));
    return s;
  };
  const double mean_k = est.data.col(est.column("k")).mean();

  ensure_dir(out_dir);
  save_config(config, out_dir / "config.json");
  const std::string label = in_sample ? "in-sample" : "out-of-sample";

  Vector ukf_k;
  std::vector<EstimationScore> rows;
  if (in_sample) {
    if (est.data.rows() != trace.length() || ukf_est.data.rows() != trace.length())
      throw InvalidInputError("estimate files do not match the trace length");
    rows.push_back(score_estimates("marginalized_pf", states_of(est), trace.states, 3));
    rows.push_back(score_estimates("ukf", states_of(ukf_est), trace.states, 3));
    ukf_k = ukf_est.data.col(ukf_est.column("k"));
  } else {
    // Estimates belong to another trace; rerun both filters on this one.
    const FilterRun pf = run_filter(config, trace);
    const UkfRun ukf = run_ukf(config, trace);
    rows.push_back(score_estimates("marginalized_pf", pf.states, trace.states, 3));
    rows.push_back(score_estimates("ukf", ukf.states, trace.states, 3));
    ukf_k = ukf.stiffness;
  }

  {
    const fs::path p = out_dir / "estimation.csv";
    auto out = open_out(p);
    write_estimation_csv(rows, out);
    close_out(out, p);
    write_text(out_dir / "estimation.txt",
               "State estimation (" + label + ")\n" + render_estimation_table(rows));
  }
  const MetricReport report = prediction_report(config, trace, gp, ukf_k, mean_k);
  {
    const fs::path p = out_dir / "prediction.csv";
    auto out = open_out(p);
    write_report_csv(report, out);
    close_out(out, p);
    write_text(out_dir / "prediction.txt",
               "Multi-step prediction NMSE (" + label + ")\n" + render_report_table(report));
  }
  json s;
  s["sample"] = label;
  s["trace_fingerprint"] = file_fingerprint(trace_path);
  s["mean_stiffness_n_per_m"] = mean_k;
  write_text(out_dir / "eval_summary.json", s.dump(2) + "\n");
}

std::vector<SweepCell> run_sweep(const ExperimentConfig& config, const fs::path& out_dir) {
  config.validate();
  ensure_dir(out_dir);
  save_config(config, out_dir / "config.json");
  std::vector<SweepCell> cells;
  for (int n : config.sweep.particle_counts)
    for (std::uint64_t seed : config.sweep.seeds) {
      SweepCell c;
      c.particle_count = n;
      c.seed = seed;
      cells.push_back(c);
    }
  const ParallelFor parallel(config.sweep.workers);
  parallel(cells.size(), [&](std::size_t i) {
    SweepCell& cell = cells[i];
    ExperimentConfig cc = config;
    cc.seed = cell.seed;
    cc.filter.particle_count = cell.particle_count;
    if (config.sweep.workers > 1) cc.filter.workers = 1;
    const fs::path dir =
        out_dir / ("n" + std::to_string(cell.particle_count) + "_seed" + std::to_string(cell.seed));
    try {
      cmd_simulate(cc, dir / "sim");
      cmd_filter(cc, dir / "sim" / "trace.csv", dir / "filter");
      cmd_eval(cc, dir / "sim" / "trace.csv", dir / "filter", dir / "eval");
      const SimTrace trace = read_trace_csv(dir / "sim" / "trace.csv");
      const CsvTable pfe = read_csv_table(dir / "filter" / "estimates.csv");
      const CsvTable uke = read_csv_table(dir / "filter" / "ukf_estimates.csv");
      auto states_of = [&](const CsvTable& t) {
        Matrix s(t.data.rows(), 6);
        for (int k = 0; k < 6; ++k) s.col(k) = t.data.col(t.column("x_" + std::to_string(k + 1)));
        return s;
      };
      cell.pf = score_estimates("marginalized_pf", states_of(pfe), trace.states, 3);
      cell.ukf = score_estimates("ukf", states_of(uke), trace.states, 3);
      const int h = *std::max_element(cc.evaluation.horizons.begin(), cc.evaluation.horizons.end());
      const double dt_ms =
          *std::max_element(cc.evaluation.step_sizes_ms.begin(), cc.evaluation.step_sizes_ms.end());
      // Variant names are the first column and not numeric; rescan the text.
      std::istringstream pred(read_text(dir / "eval" / "prediction.csv"));
      std::string line;
      std::getline(pred, line);
      while (std::getline(pred, line)) {
        std::vector<std::string> f;
        std::stringstream ls(line);
        for (std::string x; std::getline(ls, x, ',');) f.push_back(x);
        if (f.size() < 4 || std::stoi(f[1]) != h || std::abs(std::stod(f[2]) - dt_ms) > 1e-9)
          continue;
        if (f[0] == "learned_gp") cell.prediction_learned = std::stod(f[3]);
        if (f[0] == "nominal_mean_k") cell.prediction_mean = std::stod(f[3]);
      }
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.error = e.what();
      try {
        ensure_dir(dir);
        write_text(dir / "error.txt", cell.error + "\n");
      } catch (const std::exception&) {
      }
    }
  });
  return cells;
}

void cmd_sweep(const ExperimentConfig& config, const fs::path& out_dir) {
  const std::vector<SweepCell> cells = run_sweep(config, out_dir);
  auto metrics = [](const SweepCell& c) {
    return std::vector<double>{c.pf.rmse_positions, c.pf.rmse_velocities, c.pf.nmse,
                               c.ukf.rmse_positions, c.ukf.rmse_velocities, c.ukf.nmse,
                               c.prediction_learned, c.prediction_mean};
  };
  const std::vector<std::string> names = {
      "pf_rmse_positions", "pf_rmse_velocities", "pf_nmse", "ukf_rmse_positions",
      "ukf_rmse_velocities", "ukf_nmse", "prediction_nmse_learned", "prediction_nmse_mean"};
  {
    const fs::path p = out_dir / "cells.csv";
    auto out = open_out(p);
    out << "particle_count,seed,status";
    for (const auto& n : names) out << ',' << n;
    out << ",error\n";
    for (const SweepCell& c : cells) {
      out << c.particle_count << ',' << c.seed << ',' << (c.ok ? "ok" : "failed");
      for (double v : metrics(c)) out << ',' << (c.ok ? format_double(v) : "");
      std::string err = c.error;
      std::replace(err.begin(), err.end(), ',', ';');
      std::replace(err.begin(), err.end(), '\n', ' ');
      out << ',' << err << '\n';
    }
    close_out(out, p);
  }
  const fs::path p = out_dir / "summary.csv";
  auto out = open_out(p);
  out << "particle_count,cells_ok,cells_failed";
  for (const auto& n : names) out << ',' << n << "_mean," << n << "_std";
  out << '\n';
  for (int n : config.sweep.particle_counts) {
    std::vector<std::vector<double>> ok;
    int failed = 0;
    for (const SweepCell& c : cells) {
      if (c.particle_count != n) continue;
      if (c.ok)
        ok.push_back(metrics(c));
      else
        ++failed;
    }
    out << n << ',' << ok.size() << ',' << failed;
    for (std::size_t m = 0; m < names.size(); ++m) {
      if (ok.empty()) {
        out << ",,";
        continue;
      }
      double mean = 0.0;
      for (const auto& r : ok) mean += r[m];
      mean /= static_cast<double>(ok.size());
      double var = 0.0;
      for (const auto& r : ok) var += (r[m] - mean) * (r[m] - mean);
      var /= static_cast<double>(ok.size());
      out << ',' << format_double(mean) << ',' << format_double(std::sqrt(var));
    }
    out << '\n';
  }
  close_out(out, p);
}

}  // namespace stiffid
