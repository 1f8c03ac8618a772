#include "stiffid/config.hpp"
#include "stiffid/pipeline.hpp"
#include "stiffid/trace_io.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <sys/wait.h>

using namespace stiffid;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("stiffid_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.simulation.steps = 120;
  c.filter.particle_count = 40;
  c.evaluation.horizons = {5};
  c.evaluation.step_sizes_ms = {8.0};
  c.evaluation.surface_points = 5;
  c.sweep.seeds = {1};
  c.sweep.particle_counts = {40};
  return c;
}

// Rows of a CSV whose first column is a label.
std::vector<std::vector<std::string>> read_rows(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(STIFFID_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config round trip") {
  ExperimentConfig c;
  c.seed = 42;
  c.filter.particle_count = 77;
  c.filter.hyperparam_walk_var_log = {0.2, 0.3};
  c.simulation.excitation[0][0].amplitude = 1.5;
  c.evaluation.horizons = {3, 9};
  CHECK(ExperimentConfig::from_json(c.to_json()) == c);
  CHECK(ExperimentConfig::from_json("{}") == ExperimentConfig());

  const fs::path dir = scratch("config");
  save_config(c, dir / "c.json");
  CHECK(load_config(dir / "c.json") == c);
  CHECK_THROWS_AS(load_config(dir / "missing.json"), IoError);
}

TEST_CASE("config rejects unknown keys and bad values") {
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"sede": 3})"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"filter": {"particle_count": 10, "extra": 1}})"),
                  ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"filter": {"particle_count": "many"}})"),
                  ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"filter": {"particle_count": 0}})"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json(R"({"filter": {"forgetting_multiplier": 1.2}})"),
                  ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json("{not json"), ConfigError);
  try {
    ExperimentConfig::from_json(R"({"prior": {"lengthscale": 1}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("lengthscale") != std::string::npos);
  }
}

TEST_CASE("trace CSV round trip") {
  ExperimentConfig c = small_config();
  const SimTrace t = run_simulation(c);
  std::stringstream buf;
  write_trace_csv(t, buf);
  const std::string text = buf.str();
  CHECK(text.rfind("t,u_1,u_2,u_3,y_1,y_2,y_3,x_1,", 0) == 0);
  const SimTrace back = read_trace_csv(buf, {3, 3, 6});
  CHECK(back.length() == t.length());
  CHECK(back.outputs == t.outputs);
  CHECK(back.states == t.states);
  CHECK(back.stiffness == t.stiffness);
  CHECK(back.dt == doctest::Approx(t.dt));

  std::stringstream again;
  write_trace_csv(back, again);
  CHECK(again.str() == text);
}

TEST_CASE("trace CSV errors name the line") {
  const SimTrace t = run_simulation(small_config());
  std::stringstream buf;
  write_trace_csv(t, buf);
  std::vector<std::string> lines;
  for (std::string l; std::getline(buf, l);) lines.push_back(l);

  auto parse_with = [&](std::size_t index, const std::string& replacement) -> std::string {
    std::vector<std::string> edited = lines;
    edited[index] = replacement;
    std::stringstream in;
    for (const auto& l : edited) in << l << '\n';
    try {
      read_trace_csv(in);
    } catch (const InvalidInputError& e) {
      return e.what();
    }
    return "";
  };
  std::string bad = lines[4];
  bad.replace(bad.find(','), 1, ",abc,");
  CHECK(parse_with(4, bad).find("line 5") != std::string::npos);
  CHECK(parse_with(6, "0.1,2").find("line 7") != std::string::npos);
  CHECK(parse_with(0, "t,u_1,bogus").size() > 0);

  std::stringstream dims;
  write_trace_csv(t, dims);
  CHECK_THROWS_AS(read_trace_csv(dims, {2, 3, 6}), InvalidInputError);
}

TEST_CASE("simulate command") {
  const ExperimentConfig c;  // full-length default run
  const fs::path a = scratch("sim_a");
  const fs::path b = scratch("sim_b");
  cmd_simulate(c, a);
  cmd_simulate(c, b);
  const SimTrace t = read_trace_csv(a / "trace.csv");
  CHECK(t.length() == 626);
  CHECK(t.has_states());
  CHECK(slurp(a / "trace.csv") == slurp(b / "trace.csv"));
  CHECK(load_config(a / "config.json") == c);
}

TEST_CASE("filter and eval commands") {
  ExperimentConfig c = small_config();
  const fs::path sim = scratch("fe_sim");
  cmd_simulate(c, sim);
  const fs::path run = scratch("fe_run");
  cmd_filter(c, sim / "trace.csv", run);
  for (const char* f : {"config.json", "estimates.csv", "ukf_estimates.csv", "checkpoint.bin",
                        "learned_gp.json", "surface.csv", "diagnostics.json"})
    CHECK(fs::exists(run / f));
  const CsvTable est = read_csv_table(run / "estimates.csv");
  CHECK(est.data.rows() == 121);
  CHECK(est.header.front() == "t");

  // Freezing the hyperparameters changes the result.
  ExperimentConfig frozen = c;
  frozen.filter.hyperparam_learning = false;
  const fs::path run2 = scratch("fe_frozen");
  cmd_filter(frozen, sim / "trace.csv", run2);
  CHECK(slurp(run / "estimates.csv") != slurp(run2 / "estimates.csv"));
  const CsvTable est2 = read_csv_table(run2 / "estimates.csv");
  const Eigen::Index col = est2.column("log_length_scale");
  CHECK(est2.data.col(col).maxCoeff() == est2.data.col(col).minCoeff());

  const fs::path ev = scratch("fe_eval");
  cmd_eval(c, sim / "trace.csv", run, ev);
  CHECK(slurp(ev / "estimation.txt").find("(in-sample)") != std::string::npos);
  const auto pred = read_rows(ev / "prediction.csv");
  CHECK(pred.size() == 4);

  // A different trace is scored out of sample.
  ExperimentConfig other = c;
  other.seed = 9;
  const fs::path sim2 = scratch("fe_sim2");
  cmd_simulate(other, sim2);
  const fs::path ev2 = scratch("fe_eval2");
  cmd_eval(c, sim2 / "trace.csv", run, ev2);
  CHECK(slurp(ev2 / "estimation.txt").find("(out-of-sample)") != std::string::npos);

  ExperimentConfig wrong_dt = c;
  wrong_dt.simulation.dt_ms = 4.0;
  CHECK_THROWS_AS(cmd_filter(wrong_dt, sim / "trace.csv", scratch("fe_bad")), Error);
}

TEST_CASE("single-cell sweep equals filter then eval") {
  ExperimentConfig c = small_config();
  c.sweep.seeds = {3};
  const fs::path sw = scratch("sweep_one");
  const std::vector<SweepCell> cells = run_sweep(c, sw);
  REQUIRE(cells.size() == 1);
  REQUIRE(cells[0].ok);

  ExperimentConfig manual = c;
  manual.seed = 3;
  const fs::path sim = scratch("sweep_manual_sim");
  const fs::path run = scratch("sweep_manual_run");
  const fs::path ev = scratch("sweep_manual_eval");
  cmd_simulate(manual, sim);
  cmd_filter(manual, sim / "trace.csv", run);
  cmd_eval(manual, sim / "trace.csv", run, ev);
  const auto est = read_rows(ev / "estimation.csv");
  REQUIRE(est.size() == 3);
  CHECK(est[1][0] == "marginalized_pf");
  CHECK(std::stod(est[1][1]) == doctest::Approx(cells[0].pf.rmse_positions).epsilon(1e-12));
  CHECK(std::stod(est[2][3]) == doctest::Approx(cells[0].ukf.nmse).epsilon(1e-12));
  CHECK(slurp(run / "estimates.csv") == slurp(sw / "n40_seed3" / "filter" / "estimates.csv"));
}

TEST_CASE("more particles do not hurt state estimation") {
  ExperimentConfig c = small_config();
  c.sweep.seeds = {1, 2, 3};
  c.sweep.particle_counts = {25, 100, 400};
  const fs::path sw = scratch("sweep_grid");
  cmd_sweep(c, sw);
  const CsvTable summary = read_csv_table(sw / "summary.csv");
  REQUIRE(summary.data.rows() == 3);
  const Eigen::Index col = summary.column("pf_rmse_positions_mean");
  for (Eigen::Index r = 0; r < 3; ++r) CHECK(summary.data(r, summary.column("cells_ok")) == 3.0);
  // Allow a little Monte Carlo slack between neighbouring counts.
  CHECK(summary.data(1, col) <= 1.1 * summary.data(0, col));
  CHECK(summary.data(2, col) <= 1.1 * summary.data(1, col));
  CHECK(summary.data(2, col) < summary.data(0, col));
}

TEST_CASE("cli exit codes") {
  const fs::path dir = scratch("exit");
  CHECK(run_cli("") == 1);
  CHECK(run_cli("bogus") == 1);
  CHECK(run_cli("filter --out " + (dir / "x").string()) == 1);  // --trace missing
  CHECK(run_cli("simulate --particles 0 --out " + (dir / "y").string()) == 1);
  CHECK(run_cli("simulate --config " + (dir / "none.json").string()) == 3);
  {
    std::ofstream bad(dir / "bad.json");
    bad << R"({"unknown": 1})";
  }
  CHECK(run_cli("simulate --config " + (dir / "bad.json").string()) == 1);
  CHECK(run_cli("filter --trace " + (dir / "none.csv").string() + " --out " +
                (dir / "z").string()) == 3);
  CHECK(run_cli("--help") == 0);

  ExperimentConfig c = small_config();
  save_config(c, dir / "small.json");
  CHECK(run_cli("simulate --config " + (dir / "small.json").string() + " --out " +
                (dir / "sim").string()) == 0);
  CHECK(fs::exists(dir / "sim" / "trace.csv"));
  CHECK(run_cli("filter --config " + (dir / "small.json").string() + " --no-hyperlearn --trace " +
                (dir / "sim" / "trace.csv").string() + " --out " + (dir / "run").string()) == 0);
  CHECK(load_config(dir / "run" / "config.json").filter.hyperparam_learning == false);
}
