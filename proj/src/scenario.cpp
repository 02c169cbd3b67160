#include "aniso/scenario.hpp"

#include "aniso/io.hpp"
#include "aniso/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>

namespace aniso {

namespace {

using nlohmann::json;

void allow_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

double number(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) throw ConfigError(std::string("'") + key + "' must be a number");
  return j.at(key).get<double>();
}

double required_number(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(std::string("missing '") + key + "' in " + where);
  return number(j, key, 0.0);
}

std::vector<double> numbers(const json& j, const char* key, std::size_t size, const std::string& where) {
  if (!j.contains(key)) throw ConfigError(std::string("missing '") + key + "' in " + where);
  const json& a = j.at(key);
  if (!a.is_array()) throw ConfigError(std::string("'") + key + "' in " + where + " must be an array");
  std::vector<double> out;
  for (const auto& x : a) {
    if (!x.is_number()) throw ConfigError(std::string("'") + key + "' in " + where + " must hold numbers");
    out.push_back(x.get<double>());
  }
  if (size != 0 && out.size() != size) {
    throw ConfigError(std::string("'") + key + "' in " + where + " must have " + std::to_string(size) + " entries");
  }
  return out;
}

std::vector<Vec> points(const json& j, const char* key, int n, const std::string& where) {
  if (!j.contains(key)) return {};
  if (!j.at(key).is_array()) throw ConfigError(std::string("'") + key + "' in " + where + " must be an array");
  std::vector<Vec> out;
  for (const auto& p : j.at(key)) {
    const auto c = numbers({{"p", p}}, "p", static_cast<std::size_t>(n), where);
    out.push_back(Eigen::Map<const Vec>(c.data(), n));
  }
  return out;
}

HalfDomain domain_from_json(const json& j, int n) {
  allow_keys(j, {"n", "depth", "width", "resolution"}, "domain");
  HalfDomain d;
  d.n = static_cast<int>(number(j, "n", n));
  if (d.n != n) throw ConfigError("domain dimension does not match the integrand");
  d.depth = number(j, "depth", d.depth);
  d.width = number(j, "width", d.width);
  d.resolution = required_number(j, "resolution", "domain");
  validate(d);
  return d;
}

SolveConfig solver_from_json(const json& j) {
  allow_keys(j, {"tol_residual", "max_iter", "line_search", "linear_solver_tol", "polish"}, "solver");
  SolveConfig c;
  c.tol_residual = number(j, "tol_residual", c.tol_residual);
  c.max_iter = static_cast<int>(number(j, "max_iter", c.max_iter));
  c.linear_solver_tol = number(j, "linear_solver_tol", c.linear_solver_tol);
  if (j.contains("polish")) c.polish = j.at("polish").get<bool>();
  if (j.contains("line_search")) {
    const json& ls = j.at("line_search");
    allow_keys(ls, {"shrink", "sufficient_decrease", "max_backtracks"}, "line_search");
    c.line_search.shrink = number(ls, "shrink", c.line_search.shrink);
    c.line_search.sufficient_decrease = number(ls, "sufficient_decrease", c.line_search.sufficient_decrease);
    c.line_search.max_backtracks = static_cast<int>(number(ls, "max_backtracks", c.line_search.max_backtracks));
  }
  if (!(c.tol_residual > 0.0)) throw ConfigError("tol_residual must be positive");
  if (c.max_iter < 1) throw ConfigError("max_iter must be at least 1");
  if (!(c.line_search.shrink > 0.0 && c.line_search.shrink < 1.0)) throw ConfigError("line_search.shrink must lie in (0, 1)");
  if (!(c.line_search.sufficient_decrease > 0.0 && c.line_search.sufficient_decrease < 1.0)) {
    throw ConfigError("line_search.sufficient_decrease must lie in (0, 1)");
  }
  return c;
}

const std::map<std::string, std::vector<const char*>>& check_parameters() {
  static const std::map<std::string, std::vector<const char*>> table{
      {"identities", {}},
      {"frame_relations", {}},
      {"wall_condition", {}},
      {"boundary_tangency", {}},
      {"mean_curvature", {}},
      {"first_variation", {}},
      {"principal_direction", {}},
      {"mu_F_lower_bound", {}},
      {"amse_residual", {}},
      {"free_bc_residual", {}},
      {"subharmonicity", {}},
      {"area_growth", {"x0", "radii"}},
      {"mean_value", {"x0", "radius"}},
      {"functional_inequalities", {"bank_size"}},
      {"gradient_estimate", {"x0", "radii", "held_out_x0", "min_coverage"}},
      {"affine_deviation", {"fraction"}},
      {"liouville",
       {"radii", "resolution", "beta", "tangential_slope", "offset", "bump_height", "bump_radius", "flat_fraction"}},
  };
  return table;
}

const std::vector<std::string>& graded_defaults() {
  static const std::vector<std::string> names{
      "identities",     "frame_relations",     "wall_condition",   "boundary_tangency",
      "mean_curvature", "first_variation",     "principal_direction", "mu_F_lower_bound",
      "amse_residual",  "free_bc_residual",    "subharmonicity"};
  return names;
}

CheckSpec check_from_json(const json& j) {
  CheckSpec spec;
  if (j.is_string()) {
    spec.name = j.get<std::string>();
  } else if (j.is_object() && j.contains("name") && j.at("name").is_string()) {
    spec.name = j.at("name").get<std::string>();
    spec.params = j;
    spec.params.erase("name");
  } else {
    throw ConfigError("each check is a name or an object with a \"name\"");
  }
  const auto& table = check_parameters();
  const auto it = table.find(spec.name);
  if (it == table.end()) throw ConfigError("unknown check '" + spec.name + "'");
  for (const auto& [key, value] : spec.params.items()) {
    if (std::none_of(it->second.begin(), it->second.end(), [&](const char* k) { return key == k; })) {
      throw ConfigError("unknown parameter '" + key + "' for check " + spec.name);
    }
  }
  return spec;
}

using Term = std::function<double(const Vec&)>;

Term term_from_json(const json& t, const EllipticIntegrand& I, const HalfDomain& d) {
  if (!t.is_object() || !t.contains("type") || !t.at("type").is_string()) {
    throw ConfigError("each Dirichlet term is an object with a \"type\"");
  }
  const std::string type = t.at("type").get<std::string>();
  const int n = d.n;
  const std::string where = "dirichlet term '" + type + "'";
  if (type == "affine") {
    allow_keys(t, {"type", "slope", "offset"}, where);
    const auto a = numbers(t, "slope", static_cast<std::size_t>(n), where);
    const double c = number(t, "offset", 0.0);
    return [a, c, n](const Vec& x) {
      double v = c;
      for (int i = 0; i < n; ++i) v += a[static_cast<std::size_t>(i)] * x(i);
      return v;
    };
  }
  if (type == "free_affine") {
    allow_keys(t, {"type", "tangential", "offset"}, where);
    std::vector<double> tang(static_cast<std::size_t>(n - 1), 0.0);
    if (t.contains("tangential")) tang = numbers(t, "tangential", static_cast<std::size_t>(n - 1), where);
    const Vec tv = Eigen::Map<const Vec>(tang.data(), n - 1);
    const double a1 = free_boundary_slope(I, tv);
    const double c = number(t, "offset", 0.0);
    return [a1, tang, c, n](const Vec& x) {
      double v = c + a1 * x(0);
      for (int i = 1; i < n; ++i) v += tang[static_cast<std::size_t>(i - 1)] * x(i);
      return v;
    };
  }
  if (type == "sine") {
    allow_keys(t, {"type", "amplitude", "modes"}, where);
    const double amp = required_number(t, "amplitude", where);
    std::vector<double> modes(static_cast<std::size_t>(n), 1.0);
    if (t.contains("modes")) modes = numbers(t, "modes", static_cast<std::size_t>(n), where);
    const double k1 = 0.5 * std::numbers::pi * modes[0] / d.depth;
    const double k2 = n == 2 ? 0.5 * std::numbers::pi * modes[1] / d.width : 0.0;
    return [amp, k1, k2, n](const Vec& x) {
      double v = amp * std::cos(k1 * x(0));
      if (n == 2) v *= std::sin(k2 * x(1));
      return v;
    };
  }
  if (type == "bump") {
    allow_keys(t, {"type", "height", "radius", "center", "anchor"}, where);
    const double height = required_number(t, "height", where);
    const double radius = required_number(t, "radius", where);
    if (!(radius > 0.0)) throw ConfigError("bump radius must be positive");
    Vec center = Vec::Zero(n);
    if (t.contains("anchor")) {
      if (t.at("anchor") != "far") throw ConfigError("bump anchor must be \"far\"");
      center(0) = d.depth;
    } else {
      const auto c = numbers(t, "center", static_cast<std::size_t>(n), where);
      center = Eigen::Map<const Vec>(c.data(), n);
    }
    return [height, radius, center](const Vec& x) {
      const double dist = (x - center).norm();
      if (dist >= radius) return 0.0;
      const double c = std::cos(0.5 * std::numbers::pi * dist / radius);
      return height * c * c;
    };
  }
  if (type == "table") {
    allow_keys(t, {"type", "points"}, where);
    if (!t.contains("points") || !t.at("points").is_array() || t.at("points").empty()) {
      throw ConfigError("table needs a nonempty \"points\" array");
    }
    std::vector<std::pair<Vec, double>> rows;
    for (const auto& p : t.at("points")) {
      const auto r = numbers({{"p", p}}, "p", static_cast<std::size_t>(n + 1), where);
      rows.emplace_back(Eigen::Map<const Vec>(r.data(), n), r[static_cast<std::size_t>(n)]);
    }
    return [rows](const Vec& x) {
      double best = std::numeric_limits<double>::infinity();
      double value = 0.0;
      for (const auto& [p, v] : rows) {
        const double dist = (p - x).squaredNorm();
        if (dist < best) {
          best = dist;
          value = v;
        }
      }
      return value;
    };
  }
  throw ConfigError("unknown Dirichlet term type '" + type + "'");
}

int nearest_vertex(const Mesh& m, const Vec& x) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int v = 0; v < m.num_vertices(); ++v) {
    const double dist = (m.vertex(v) - x).squaredNorm();
    if (dist < best_d - 1e-24) {
      best_d = dist;
      best = v;
    }
  }
  return best;
}

struct CheckOutcome {
  std::vector<CheckReport> reports;
  std::vector<GradientEstimateRecord> records;
  std::vector<GradientEstimateRecord> held_out;
};

CheckOutcome run_check(const Scenario& s, const CheckSpec& spec, const GraphGeometry& geom) {
  const Tolerances& tol = s.tolerances;
  const Mesh& m = geom.mesh();
  const int n = m.n();
  const json& p = spec.params;
  const std::string where = "check " + spec.name;
  static const std::map<std::string, CheckReport (*)(const GraphGeometry&, const Tolerances&)> graded{
      {"identities", check_identities},
      {"frame_relations", check_frame_relations},
      {"wall_condition", check_wall_condition},
      {"boundary_tangency", check_boundary_tangency},
      {"mean_curvature", check_mean_curvature},
      {"first_variation", check_first_variation},
      {"principal_direction", check_principal_direction},
      {"mu_F_lower_bound", check_mu_F_lower_bound},
      {"amse_residual", check_amse_residual},
      {"free_bc_residual", check_free_bc_residual},
      {"subharmonicity", check_subharmonicity},
  };
  CheckOutcome out;
  if (const auto it = graded.find(spec.name); it != graded.end()) {
    out.reports.push_back(it->second(geom, tol));
  } else if (spec.name == "area_growth") {
    const auto x0 = numbers(p, "x0", static_cast<std::size_t>(n), where);
    out.reports.push_back(area_growth_check(geom, nearest_vertex(m, Eigen::Map<const Vec>(x0.data(), n)),
                                            numbers(p, "radii", 0, where)));
  } else if (spec.name == "mean_value") {
    const auto x0 = numbers(p, "x0", static_cast<std::size_t>(n), where);
    out.reports.push_back(mean_value_probe(geom, nearest_vertex(m, Eigen::Map<const Vec>(x0.data(), n)),
                                           required_number(p, "radius", where)));
  } else if (spec.name == "functional_inequalities") {
    const int size = static_cast<int>(number(p, "bank_size", 50));
    out.reports.push_back(functional_inequality_diagnostics(geom, make_test_function_bank(m, size, s.seed)));
  } else if (spec.name == "gradient_estimate") {
    auto vertices = [&](const char* key) {
      std::vector<int> vs;
      for (const Vec& x : points(p, key, n, where)) vs.push_back(nearest_vertex(m, x));
      return vs;
    };
    if (!p.contains("x0")) throw ConfigError("missing 'x0' in " + where);
    const auto radii = numbers(p, "radii", 0, where);
    out.records = gradient_estimate_records(geom, vertices("x0"), radii);
    out.held_out = gradient_estimate_records(geom, vertices("held_out_x0"), radii);
    if (out.records.empty()) throw ConfigError("gradient_estimate produced no records");
    // Held-out coverage is graded over a scenario set (see cli_sweep); a
    // single scenario reports it for information.
    CheckReport r = gradient_estimate_report(out.records, {});
    r.metadata = geometry_metadata(geom);
    if (!out.held_out.empty()) {
      const auto fit = fit_gradient_estimate(out.records);
      r.details["held_out_records"] = out.held_out.size();
      r.details["held_out_coverage"] = gradient_estimate_coverage(fit, out.held_out);
    }
    out.reports.push_back(r);
  } else if (spec.name == "affine_deviation") {
    const double fraction = number(p, "fraction", 0.25);
    Vec coef;
    CheckReport r;
    r.name = "affine_deviation";
    r.metadata = geometry_metadata(geom);
    r.worst_residual = inner_affine_deviation(geom.u(), fraction, &coef);
    r.details = {{"fraction", fraction}, {"fit", std::vector<double>(coef.data(), coef.data() + coef.size())}};
    out.reports.push_back(r);
  } else if (spec.name == "liouville") {
    LiouvilleConfig cfg;
    if (p.contains("radii")) cfg.radii = numbers(p, "radii", 0, where);
    cfg.resolution = number(p, "resolution", cfg.resolution);
    cfg.beta = number(p, "beta", cfg.beta);
    cfg.tangential_slope = number(p, "tangential_slope", cfg.tangential_slope);
    cfg.offset = number(p, "offset", cfg.offset);
    cfg.bump_height = number(p, "bump_height", cfg.bump_height);
    cfg.bump_radius = number(p, "bump_radius", cfg.bump_radius);
    cfg.flat_fraction = number(p, "flat_fraction", cfg.flat_fraction);
    cfg.solver = s.solver;
    out.reports.push_back(liouville_probe(s.integrand, cfg));
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  body(out);
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

void append_log(const std::filesystem::path& dir, const std::string& command, const std::string& config, int code,
                double seconds) {
  std::ofstream log(dir / "run.log", std::ios::app);
  log << timestamp() << ' ' << command << " config=" << config << " exit=" << code << " seconds=" << seconds
      << '\n';
}

// Solve + checks + artifacts for one scenario; returns the exit code.
int verify_into(const Scenario& s, const std::filesystem::path& out_dir, std::optional<ScenarioRun>* keep) {
  std::filesystem::create_directories(out_dir);
  const auto mesh = std::make_shared<const Mesh>(build_mesh(s.domain));
  const auto data = sample_vertices(*mesh, dirichlet_function(s, *mesh));
  auto [u, report] = solve(s.integrand, mesh, data, s.solver);
  write_file(out_dir / "solve_report.json", [&](std::ostream& o) { o << to_json(report).dump(2) << '\n'; });
  write_file(out_dir / "solution.csv", [&](std::ostream& o) { write_solution_csv(u, o); });
  if (!report.converged) {
    if (keep) keep->emplace(ScenarioRun{u, report, {}, {}, {}});
    return kNotConverged;
  }
  ScenarioRun run{u, report, {}, {}, {}};
  const GraphGeometry geom = compute_geometry(s.integrand, u);
  std::vector<CheckOutcome> outcomes(s.checks.size());
  parallel_for(
      static_cast<int>(s.checks.size()),
      [&](int begin, int end) {
        for (int k = begin; k < end; ++k) {
          outcomes[static_cast<std::size_t>(k)] = run_check(s, s.checks[static_cast<std::size_t>(k)], geom);
        }
      },
      1);
  for (auto& o : outcomes) {
    run.reports.insert(run.reports.end(), o.reports.begin(), o.reports.end());
    run.gradient_records.insert(run.gradient_records.end(), o.records.begin(), o.records.end());
    run.gradient_held_out.insert(run.gradient_held_out.end(), o.held_out.begin(), o.held_out.end());
  }
  write_file(out_dir / "geometry.csv", [&](std::ostream& o) { write_geometry_csv(geom, o); });
  write_file(out_dir / "wall.csv", [&](std::ostream& o) { write_wall_csv(geom, o); });
  write_file(out_dir / "report.jsonl", [&](std::ostream& o) { write_reports_jsonl(run.reports, o); });
  write_file(out_dir / "summary.csv", [&](std::ostream& o) { write_summary_csv(run.reports, o); });
  const int code = all_pass(run.reports) ? kOk : kCheckFailed;
  if (keep) keep->emplace(std::move(run));
  return code;
}

// Maps exceptions to exit codes with a message on err.
int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const SolverError& e) {
    err << "error: " << e.what() << '\n';
    return kNotConverged;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const nlohmann::json::exception& e) {
    err << "error: malformed configuration: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace

const std::vector<std::string>& known_checks() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, params] : check_parameters()) out.push_back(name);
    return out;
  }();
  return names;
}

Scenario scenario_from_json(const json& j) {
  try {
    allow_keys(j, {"name", "description", "integrand", "domain", "dirichlet", "solver", "checks", "seed", "tolerances"},
               "scenario");
    Scenario s;
    s.source = j;
    s.name = j.value("name", std::string("scenario"));
    if (!j.contains("integrand")) throw ConfigError("missing 'integrand'");
    s.integrand = integrand_from_json(j.at("integrand"));
    if (!j.contains("domain")) throw ConfigError("missing 'domain'");
    s.domain = domain_from_json(j.at("domain"), s.integrand.graph_dim());
    if (j.contains("solver")) s.solver = solver_from_json(j.at("solver"));
    if (j.contains("dirichlet")) {
      s.dirichlet = j.at("dirichlet");
      if (!s.dirichlet.is_array()) throw ConfigError("'dirichlet' must be an array of terms");
      for (const auto& t : s.dirichlet) term_from_json(t, s.integrand, s.domain);
    }
    if (j.contains("checks")) {
      if (!j.at("checks").is_array()) throw ConfigError("'checks' must be an array");
      for (const auto& c : j.at("checks")) s.checks.push_back(check_from_json(c));
    } else {
      for (const auto& name : graded_defaults()) s.checks.push_back({name, json::object()});
    }
    if (j.contains("seed")) {
      const json& seed = j.at("seed");
      if (!seed.is_number_integer() || seed.get<std::int64_t>() < 0) {
        throw ConfigError("'seed' must be a nonnegative integer");
      }
      s.seed = j.at("seed").get<std::uint64_t>();
    }
    if (j.contains("tolerances")) s.tolerances = tolerances_from_json(j.at("tolerances"));
    return s;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed scenario: ") + e.what());
  }
}

Scenario load_scenario(const std::filesystem::path& path) { return scenario_from_json(read_json(path)); }

std::function<double(const Vec&)> dirichlet_function(const Scenario& s, const Mesh& mesh) {
  std::vector<Term> terms;
  for (const auto& t : s.dirichlet) terms.push_back(term_from_json(t, s.integrand, mesh.domain()));
  return [terms](const Vec& x) {
    double v = 0.0;
    for (const auto& t : terms) v += t(x);
    return v;
  };
}

ScenarioRun solve_scenario(const Scenario& s) {
  const auto mesh = std::make_shared<const Mesh>(build_mesh(s.domain));
  auto [u, report] = solve(s.integrand, mesh, sample_vertices(*mesh, dirichlet_function(s, *mesh)), s.solver);
  if (!report.converged) throw SolverError("solve did not converge for scenario " + s.name);
  return ScenarioRun{u, report, {}, {}, {}};
}

ScenarioRun run_scenario(const Scenario& s) {
  ScenarioRun run = solve_scenario(s);
  const GraphGeometry geom = compute_geometry(s.integrand, run.u);
  for (const auto& spec : s.checks) {
    auto o = run_check(s, spec, geom);
    run.reports.insert(run.reports.end(), o.reports.begin(), o.reports.end());
    run.gradient_records.insert(run.gradient_records.end(), o.records.begin(), o.records.end());
    run.gradient_held_out.insert(run.gradient_held_out.end(), o.held_out.begin(), o.held_out.end());
  }
  return run;
}

bool all_pass(const std::vector<CheckReport>& reports) {
  return std::none_of(reports.begin(), reports.end(), [](const CheckReport& r) { return r.status == Status::Fail; });
}

void write_solution_csv(const GraphFunction& u, std::ostream& out) {
  const Mesh& m = u.grid();
  out << (m.n() == 2 ? "id,x1,x2,tag,u\n" : "id,x1,tag,u\n");
  for (int v = 0; v < m.num_vertices(); ++v) {
    out << v;
    for (int i = 0; i < m.n(); ++i) out << ',' << format_double(m.vertex(v)(i));
    out << ',' << to_string(m.tag(v)) << ',' << format_double(u.values[static_cast<std::size_t>(v)]) << '\n';
  }
}

int cli_solve(const std::filesystem::path& config, const std::filesystem::path& out_dir, std::ostream& err) {
  const auto start = std::chrono::steady_clock::now();
  const int code = guarded(err, [&] {
    const Scenario s = load_scenario(config);
    std::filesystem::create_directories(out_dir);
    const auto mesh = std::make_shared<const Mesh>(build_mesh(s.domain));
    auto [u, report] = solve(s.integrand, mesh, sample_vertices(*mesh, dirichlet_function(s, *mesh)), s.solver);
    write_file(out_dir / "solve_report.json", [&](std::ostream& o) { o << to_json(report).dump(2) << '\n'; });
    write_file(out_dir / "solution.csv", [&](std::ostream& o) { write_solution_csv(u, o); });
    if (!report.converged) {
      err << "error: solve did not converge after " << report.iterations << " iterations\n";
      return static_cast<int>(kNotConverged);
    }
    return static_cast<int>(kOk);
  });
  if (std::filesystem::is_directory(out_dir)) {
    append_log(out_dir, "solve", config.string(), code,
               std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  return code;
}

int cli_verify(const std::filesystem::path& config, const std::filesystem::path& out_dir, std::ostream& err) {
  const auto start = std::chrono::steady_clock::now();
  const int code = guarded(err, [&] {
    const int c = verify_into(load_scenario(config), out_dir, nullptr);
    if (c == kNotConverged) err << "error: solve did not converge\n";
    if (c == kCheckFailed) err << "one or more checks failed; see " << (out_dir / "summary.csv").string() << '\n';
    return c;
  });
  if (std::filesystem::is_directory(out_dir)) {
    append_log(out_dir, "verify", config.string(), code,
               std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  return code;
}

json apply_sweep_value(const json& scenario, const std::string& axis, double value) {
  json j = scenario;
  if (axis == "theta") {
    if (!j.contains("integrand") || j["integrand"].value("kind", "") != "capillary") {
      throw ConfigError("the theta axis needs a capillary integrand");
    }
    j["integrand"]["theta"] = value;
  } else if (axis == "resolution") {
    j["domain"]["resolution"] = value;
  } else if (axis == "domain_size") {
    j["domain"]["depth"] = value;
    if (j["domain"].value("n", 2) == 2) j["domain"]["width"] = value;
  } else {
    throw ConfigError("unknown sweep axis '" + axis + "' (expected theta, resolution or domain_size)");
  }
  return j;
}

int cli_sweep(const std::filesystem::path& config, const std::string& axis, const std::vector<double>& values,
              const std::filesystem::path& out_dir, std::ostream& err) {
  const auto start = std::chrono::steady_clock::now();
  const int code = guarded(err, [&] {
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    const json base = read_json(config);
    std::vector<Scenario> scenarios;
    for (double v : values) scenarios.push_back(scenario_from_json(apply_sweep_value(base, axis, v)));
    std::filesystem::create_directories(out_dir);

    const std::size_t count = values.size();
    std::vector<int> codes(count, kOk);
    std::vector<std::optional<ScenarioRun>> runs(count);
    std::vector<std::string> errors(count);
    parallel_for(
        static_cast<int>(count),
        [&](int begin, int end) {
          for (int k = begin; k < end; ++k) {
            const auto i = static_cast<std::size_t>(k);
            std::ostringstream e;
            codes[i] = guarded(e, [&] {
              return verify_into(scenarios[i], out_dir / (axis + "_" + std::to_string(k)), &runs[i]);
            });
            errors[i] = e.str();
          }
        },
        1);
    for (const auto& e : errors) err << e;

    // Column per report, in the order of the first run that produced reports.
    std::vector<std::string> columns;
    std::vector<std::map<std::string, const CheckReport*>> by_name(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::map<std::string, int> seen;
      if (!runs[i]) continue;
      for (const auto& r : runs[i]->reports) {
        const int k = seen[r.name]++;
        const std::string key = k == 0 ? r.name : r.name + "#" + std::to_string(k + 1);
        by_name[i][key] = &r;
        if (std::find(columns.begin(), columns.end(), key) == columns.end()) columns.push_back(key);
      }
    }
    write_file(out_dir / "sweep.csv", [&](std::ostream& o) {
      o << "axis,value,h,exit_code,converged,iterations";
      for (const auto& c : columns) o << ',' << c;
      for (const auto& c : columns) o << ",status_" << c;
      if (axis == "resolution") {
        for (const auto& c : columns) o << ",rate_" << c;
      }
      o << ",C1,C2\n";
      for (std::size_t i = 0; i < count; ++i) {
        const double h = runs[i] ? runs[i]->u.grid().h() : scenarios[i].domain.resolution;
        o << axis << ',' << format_double(values[i]) << ',' << format_double(h) << ',' << codes[i] << ','
          << (runs[i] && runs[i]->solve.converged ? 1 : 0) << ',' << (runs[i] ? runs[i]->solve.iterations : 0);
        for (const auto& c : columns) {
          const auto it = by_name[i].find(c);
          o << ',';
          if (it != by_name[i].end()) o << format_double(it->second->worst_residual);
        }
        for (const auto& c : columns) {
          const auto it = by_name[i].find(c);
          o << ',';
          if (it != by_name[i].end()) o << to_string(it->second->status);
        }
        if (axis == "resolution") {
          for (const auto& c : columns) {
            o << ',';
            if (i == 0) continue;
            const auto a = by_name[i - 1].find(c);
            const auto b = by_name[i].find(c);
            if (a == by_name[i - 1].end() || b == by_name[i].end()) continue;
            const double ra = a->second->worst_residual;
            const double rb = b->second->worst_residual;
            const double ha = runs[i - 1]->u.grid().h();
            const double hb = runs[i]->u.grid().h();
            if (ra > 0.0 && rb > 0.0 && ha != hb) o << format_double(std::log(ra / rb) / std::log(ha / hb));
          }
        }
        o << ',';
        const auto ge = by_name[i].find("gradient_estimate");
        if (ge != by_name[i].end()) {
          o << format_double(ge->second->details["C1"].get<double>()) << ','
            << format_double(ge->second->details["C2"].get<double>());
        } else {
          o << ',';
        }
        o << '\n';
      }
    });

    // Pooled gradient estimate fit over the whole sweep.
    std::vector<GradientEstimateRecord> pooled;
    std::vector<GradientEstimateRecord> pooled_held;
    for (const auto& r : runs) {
      if (!r) continue;
      pooled.insert(pooled.end(), r->gradient_records.begin(), r->gradient_records.end());
      pooled_held.insert(pooled_held.end(), r->gradient_held_out.begin(), r->gradient_held_out.end());
    }
    if (!pooled.empty()) {
      const double min_coverage = scenarios.front().checks.empty() ? 0.95 : [&] {
        for (const auto& c : scenarios.front().checks) {
          if (c.name == "gradient_estimate") return number(c.params, "min_coverage", 0.95);
        }
        return 0.95;
      }();
      const auto rep = gradient_estimate_report(pooled, pooled_held, min_coverage);
      write_file(out_dir / "sweep_gradient_estimate.json",
                 [&](std::ostream& o) { o << to_json(rep).dump(2) << '\n'; });
    }

    int worst = kOk;
    for (int c : codes) {
      if (c == kConfigError) return static_cast<int>(kConfigError);
      if (c == kNotConverged) worst = kNotConverged;
      if (c == kCheckFailed && worst == kOk) worst = kCheckFailed;
    }
    return worst;
  });
  if (std::filesystem::is_directory(out_dir)) {
    append_log(out_dir, "sweep --axis " + axis, config.string(), code,
               std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  return code;
}

}  // namespace aniso
