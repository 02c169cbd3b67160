#pragma once

#include "aniso/geometry.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace aniso {

enum class Status { Pass, Fail, Informational };
std::string to_string(Status s);

struct CheckReport {
  std::string name;
  Status status = Status::Informational;
  double worst_residual = 0.0;
  double tolerance = 0.0;
  std::optional<double> refinement_rate;
  nlohmann::json metadata = nlohmann::json::object();
  /// Check-specific outputs (fitted constants, ratios, per-radius data).
  nlohmann::json details = nlohmann::json::object();
};

nlohmann::json to_json(const CheckReport& r);
/// One JSON object per line, keys in a fixed order.
void write_reports_jsonl(const std::vector<CheckReport>& reports, std::ostream& out);
/// check,status,residual,tolerance,rate
void write_summary_csv(const std::vector<CheckReport>& reports, std::ostream& out);

/// Tolerances. Discretization-limited checks pass when residual <= C * h;
/// the constants were calibrated once on the Euclidean standard scenario.
struct Tolerances {
  double identity = 1e-12;
  double frame = 1e-10;
  double flat = 1e-10;
  double boundary_tangency_C = 3.5;
  double wall_condition_C = 0.75;
  double mean_curvature_C = 4.5;
  double first_variation_C = 0.15;
  double principal_direction_C = 2.5;
  double mu_F_lower_bound_C = 0.01;
  double subharmonicity_C = 0.1;
  /// Solver residual tolerance; the vertex-mass normalized residual passes
  /// below amse_residual / (smallest vertex mass).
  double amse_residual = 1e-10;
  double free_bc_C = 0.75;
};

nlohmann::json tolerances_to_json(const Tolerances& t);
/// Overrides the fields present in j; unknown keys are a ConfigError.
Tolerances tolerances_from_json(const nlohmann::json& j, Tolerances base = {});

/// Integrand descriptor and mesh size for CheckReport metadata.
nlohmann::json geometry_metadata(const GraphGeometry& geom);

// Algebraic identities (tolerance independent of h).
CheckReport check_identities(const GraphGeometry& geom, const Tolerances& tol = {});
CheckReport check_frame_relations(const GraphGeometry& geom, const Tolerances& tol = {});

// Discretization-limited checks (tolerance C * h).
CheckReport check_wall_condition(const GraphGeometry& geom, const Tolerances& tol = {});
CheckReport check_boundary_tangency(const GraphGeometry& geom, const Tolerances& tol = {});
CheckReport check_mean_curvature(const GraphGeometry& geom, const Tolerances& tol = {});
CheckReport check_first_variation(const GraphGeometry& geom, const Tolerances& tol = {});
CheckReport check_principal_direction(const GraphGeometry& geom, const Tolerances& tol = {});
CheckReport check_mu_F_lower_bound(const GraphGeometry& geom, const Tolerances& tol = {});
CheckReport check_amse_residual(const GraphGeometry& geom, const Tolerances& tol = {});
CheckReport check_free_bc_residual(const GraphGeometry& geom, const Tolerances& tol = {});

/// Slack of the weak subharmonicity inequality for log W_f (normalized
/// integrand) against every vertex hat function off the Dirichlet boundary:
///   slack = -int F^2 g(grad psi, grad_F log W_f) - int psi F^2 g(grad log W_f, grad_F log W_f),
/// Reports the most negative slack; pass if >= -C h. Per-mass densities are
/// in the details.
/// details.quadratic_nonnegative_fraction is the share of test functions
/// whose quadratic term is >= 0.
CheckReport check_subharmonicity(const GraphGeometry& geom, const Tolerances& tol = {});

/// Surface measure of the graph ball of radius r around the graph point over
/// vertex x0 (cells whose barycenter image lies in the ambient ball).
double graph_ball_measure(const GraphGeometry& geom, int x0, double r);

/// Log-log slope of graph-ball measure against r. Radii reaching the
/// Dirichlet boundary are dropped; fewer than 3 radii gives an
/// informational report.
CheckReport area_growth_check(const GraphGeometry& geom, int x0, const std::vector<double>& radii);

/// ratio ||log W_f||_{inf, r/2} / ||log W_f||_{1, r} over graph balls
/// around x0 (normalized integrand). Informational.
CheckReport mean_value_probe(const GraphGeometry& geom, int x0, double r);

/// Random smooth bumps and tensor hats supported away from the Dirichlet
/// boundary; deterministic in the seed.
std::vector<std::vector<double>> make_test_function_bank(const Mesh& mesh, int count, std::uint64_t seed);

/// Maximum trace, stability and Sobolev ratios over the bank. Functions that
/// do not vanish on the Dirichlet boundary throw PreconditionError.
CheckReport functional_inequality_diagnostics(const GraphGeometry& geom,
                                              const std::vector<std::vector<double>>& bank);

/// Integral of a P1 function raised to the power k over a cell: exact.
double p1_power_integral(double measure, int n, const std::vector<double>& values, int k);

struct GradientEstimateRecord {
  Vec x0;
  double r = 0.0;
  double lhs = 0.0;  // log |Du(x0)|
  double osc = 0.0;  // sup_{B_{r,+}(x0)} u - u(x0)
  double osc_over_r = 0.0;
  std::string source;
};

struct GradientEstimateFit {
  double C1 = 0.0;
  double C2 = 0.0;
  std::size_t records = 0;
};

/// Records for vertex base points x0 and radii r; radii leaving the domain
/// and points with Du = 0 are skipped and counted in `skipped`.
std::vector<GradientEstimateRecord> gradient_estimate_records(const GraphGeometry& geom,
                                                              const std::vector<int>& x0,
                                                              const std::vector<double>& radii,
                                                              int* skipped = nullptr);

/// Smallest C1 + C2 (C2 >= 0) with lhs <= C1 + C2 osc/r on every record.
/// Solved exactly: the optimum of the two-variable linear program is attained
/// on a line through two records or on a horizontal line.
GradientEstimateFit fit_gradient_estimate(const std::vector<GradientEstimateRecord>& records);

/// Fraction of records satisfying the fitted inequality.
double gradient_estimate_coverage(const GradientEstimateFit& fit,
                                  const std::vector<GradientEstimateRecord>& records);

/// Informational report with the fit, plus held-out coverage when given.
CheckReport gradient_estimate_report(const std::vector<GradientEstimateRecord>& fit_records,
                                     const std::vector<GradientEstimateRecord>& held_out,
                                     double min_coverage = 0.95);

/// Max deviation of u from its least-squares affine fit over the inner box
/// x1 <= fraction * depth, |x2| <= fraction * width. coef gets (c, a1[, a2]).
double inner_affine_deviation(const GraphFunction& u, double fraction, Vec* coef = nullptr);

struct LiouvilleConfig {
  double beta = 1.0;
  std::vector<double> radii{4.0, 8.0, 16.0};
  double resolution = 0.25;
  /// Affine background slope in x2; the x1 slope is the free boundary one.
  double tangential_slope = 0.0;
  double offset = 0.0;
  double bump_height = 1.0;
  double bump_radius = 1.0;
  double flat_fraction = 0.05;
  SolveConfig solver;
};

/// Solves on [0,R]x[-R,R] with affine data plus a bump centered on the far
/// boundary point (R, 0) and measures the deviation of u from its best affine
/// fit over the inner quarter box. Passes if the deviation is nonincreasing
/// in R and at most flat_fraction * bump_height at the largest R; strict
/// decrease is reported in the details. Non-convergence throws SolverError.
CheckReport liouville_probe(const EllipticIntegrand& integrand, const LiouvilleConfig& cfg);

}  // namespace aniso
