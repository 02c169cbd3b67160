#pragma once

#include "aniso/verify.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace aniso {

/// A named check with its parameters, e.g. {"name": "area_growth", "x0": [0, 0],
/// "radii": [0.1, 0.2, 0.4]}.
struct CheckSpec {
  std::string name;
  nlohmann::json params = nlohmann::json::object();
};

/// Parsed scenario file. `source` keeps the JSON it was read from so sweeps
/// can rewrite one field and parse again.
struct Scenario {
  std::string name;
  EllipticIntegrand integrand = EllipticIntegrand::euclidean(3);
  HalfDomain domain;
  nlohmann::json dirichlet = nlohmann::json::array();
  SolveConfig solver;
  std::vector<CheckSpec> checks;
  std::uint64_t seed = 0;
  Tolerances tolerances;
  nlohmann::json source;
};

/// Throws ConfigError on unknown keys, unknown checks or invalid values.
Scenario scenario_from_json(const nlohmann::json& j);
Scenario load_scenario(const std::filesystem::path& path);

/// Names accepted in "checks".
const std::vector<std::string>& known_checks();

/// Sum of the Dirichlet data terms as a function of x.
std::function<double(const Vec&)> dirichlet_function(const Scenario& s, const Mesh& mesh);

struct ScenarioRun {
  GraphFunction u;
  SolveReport solve;
  std::vector<CheckReport> reports;
  /// Records of a gradient_estimate check, for pooling across scenarios.
  std::vector<GradientEstimateRecord> gradient_records;
  std::vector<GradientEstimateRecord> gradient_held_out;
};

/// Solves the scenario; throws SolverError if Newton does not converge.
ScenarioRun solve_scenario(const Scenario& s);
/// Solves and runs every configured check.
ScenarioRun run_scenario(const Scenario& s);

bool all_pass(const std::vector<CheckReport>& reports);

/// id,x1[,x2],tag,u
void write_solution_csv(const GraphFunction& u, std::ostream& out);

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kConfigError = 2, kNotConverged = 3 };

/// `solve`: solution.csv and solve_report.json.
int cli_solve(const std::filesystem::path& config, const std::filesystem::path& out_dir, std::ostream& err);
/// `verify`: adds geometry.csv, wall.csv, report.jsonl and summary.csv.
int cli_verify(const std::filesystem::path& config, const std::filesystem::path& out_dir, std::ostream& err);

/// Axis values applied to a scenario JSON: theta (capillary integrands),
/// resolution, or domain_size (depth and width).
nlohmann::json apply_sweep_value(const nlohmann::json& scenario, const std::string& axis, double value);

/// `sweep`: runs each value into out_dir/<axis>_<k>/ and writes sweep.csv
/// with one row per value in input order. The resolution axis adds observed
/// rates between successive rows.
int cli_sweep(const std::filesystem::path& config, const std::string& axis, const std::vector<double>& values,
              const std::filesystem::path& out_dir, std::ostream& err);

}  // namespace aniso
