#pragma once

#include "aniso/domain.hpp"
#include "aniso/integrand.hpp"

#include <json.hpp>

#include <functional>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

namespace aniso {

/// Piecewise-linear function on a mesh, given by its vertex values.
struct GraphFunction {
  std::shared_ptr<const Mesh> mesh;
  std::vector<double> values;

  GraphFunction(std::shared_ptr<const Mesh> m, std::vector<double> v);

  const Mesh& grid() const { return *mesh; }
  /// Gradient of the interpolant on cell c.
  Vec cell_gradient(int c) const;
};

struct LineSearch {
  double shrink = 0.5;
  double sufficient_decrease = 1e-4;
  int max_backtracks = 40;
};

struct SolveConfig {
  /// Euclidean norm of the reduced energy gradient.
  double tol_residual = 1e-10;
  int max_iter = 50;
  LineSearch line_search;
  double linear_solver_tol = 1e-12;
  /// After convergence take one more Newton step, kept only if it lowers
  /// the residual.
  bool polish = true;
};

struct SolveReport {
  int iterations = 0;
  double final_residual_norm = 0.0;
  std::vector<double> energy_trace;
  std::vector<double> residual_trace;
  /// max over wall facets of |<Df(Du), e1>| on the adjacent cell.
  double free_bc_residual = 0.0;
  bool converged = false;
  bool polished = false;
};

nlohmann::json to_json(const SolveReport& r);

/// E(u) = sum_cells |cell| f(Du|cell).
double energy(const EllipticIntegrand& integrand, const GraphFunction& u);

/// dE/du at every vertex; DIRICHLET entries are zero. FREE entries carry the
/// weak natural boundary condition (no flux term is added).
std::vector<double> energy_gradient(const EllipticIntegrand& integrand, const GraphFunction& u);

/// Weak residual at INTERIOR vertices divided by the lumped vertex mass;
/// entries at FREE and DIRICHLET vertices are zero.
std::vector<double> amse_residual(const EllipticIntegrand& integrand, const GraphFunction& u);

/// max over wall facets of |<Df(Du), e1>| (adjacent-cell gradient).
double free_bc_residual(const EllipticIntegrand& integrand, const GraphFunction& u);

/// Samples g at every vertex; only DIRICHLET entries matter to solve().
std::vector<double> sample_vertices(const Mesh& mesh, const std::function<double(const Vec&)>& g);

/// Damped Newton minimization of the discrete anisotropic area with the
/// DIRICHLET vertex values fixed to `dirichlet` and all other vertices free.
/// Without u0 the start is the discrete harmonic extension of the data.
/// Non-convergence is reported, not thrown; a failed factorization throws
/// SolverError.
std::pair<GraphFunction, SolveReport> solve(const EllipticIntegrand& integrand,
                                            std::shared_ptr<const Mesh> mesh,
                                            const std::vector<double>& dirichlet,
                                            const SolveConfig& cfg = {},
                                            const std::optional<std::vector<double>>& u0 = std::nullopt);

}  // namespace aniso
