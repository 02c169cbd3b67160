#include "aniso/solver.hpp"
#include "aniso/parallel.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <limits>

namespace aniso {

GraphFunction::GraphFunction(std::shared_ptr<const Mesh> m, std::vector<double> v)
    : mesh(std::move(m)), values(std::move(v)) {
  if (!mesh) throw PreconditionError("graph function without a mesh");
  if (static_cast<int>(values.size()) != mesh->num_vertices()) {
    throw PreconditionError("graph function length does not match the vertex count");
  }
  for (double x : values) {
    if (!std::isfinite(x)) throw PreconditionError("graph function has non-finite values");
  }
}

Vec GraphFunction::cell_gradient(int c) const {
  const auto& cell = mesh->cells()[static_cast<std::size_t>(c)];
  const auto& grads = mesh->basis_gradients(c);
  Vec du = Vec::Zero(mesh->n());
  for (int a = 0; a <= mesh->n(); ++a) {
    du += values[static_cast<std::size_t>(cell[static_cast<std::size_t>(a)])] *
          grads[static_cast<std::size_t>(a)];
  }
  return du;
}

nlohmann::json to_json(const SolveReport& r) {
  return {{"iterations", r.iterations},
          {"final_residual_norm", r.final_residual_norm},
          {"energy_trace", r.energy_trace},
          {"residual_trace", r.residual_trace},
          {"free_bc_residual", r.free_bc_residual},
          {"converged", r.converged},
          {"polished", r.polished}};
}

namespace {

void check_compatible(const EllipticIntegrand& integrand, const Mesh& mesh) {
  if (integrand.graph_dim() != mesh.n()) {
    throw PreconditionError("integrand dimension does not match the mesh (need dim = n + 1)");
  }
}

struct CellTerms {
  double energy = 0.0;
  std::array<double, 3> grad{};
  Eigen::Matrix3d hess = Eigen::Matrix3d::Zero();
};

enum class Want { Energy, Gradient, Hessian };

std::vector<CellTerms> cell_terms(const EllipticIntegrand& integrand, const GraphFunction& u,
                                  Want want) {
  const Mesh& mesh = u.grid();
  std::vector<CellTerms> terms(static_cast<std::size_t>(mesh.num_cells()));
  const int nv = mesh.n() + 1;
  parallel_for(mesh.num_cells(), [&](int begin, int end) {
    for (int c = begin; c < end; ++c) {
      CellTerms& t = terms[static_cast<std::size_t>(c)];
      const double area = mesh.cell_measure(c);
      const Vec du = u.cell_gradient(c);
      const auto& grads = mesh.basis_gradients(c);
      t.energy = area * integrand.eval_f(du);
      if (want == Want::Energy) continue;
      const Vec flux = integrand.grad_f(du);
      for (int a = 0; a < nv; ++a) {
        t.grad[static_cast<std::size_t>(a)] = area * flux.dot(grads[static_cast<std::size_t>(a)]);
      }
      if (want == Want::Gradient) continue;
      const Mat hf = integrand.hess_f(du);
      for (int a = 0; a < nv; ++a) {
        const Vec ha = hf * grads[static_cast<std::size_t>(a)];
        for (int b = 0; b < nv; ++b) {
          t.hess(a, b) = area * ha.dot(grads[static_cast<std::size_t>(b)]);
        }
      }
    }
  });
  return terms;
}

double sum_energy(const std::vector<CellTerms>& terms) {
  double e = 0.0;
  for (const auto& t : terms) e += t.energy;
  return e;
}

std::vector<double> scatter_gradient(const Mesh& mesh, const std::vector<CellTerms>& terms) {
  std::vector<double> g(static_cast<std::size_t>(mesh.num_vertices()), 0.0);
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto& cell = mesh.cells()[static_cast<std::size_t>(c)];
    for (int a = 0; a <= mesh.n(); ++a) {
      g[static_cast<std::size_t>(cell[static_cast<std::size_t>(a)])] +=
          terms[static_cast<std::size_t>(c)].grad[static_cast<std::size_t>(a)];
    }
  }
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    if (mesh.tag(v) == Tag::Dirichlet) g[static_cast<std::size_t>(v)] = 0.0;
  }
  return g;
}

}  // namespace

double energy(const EllipticIntegrand& integrand, const GraphFunction& u) {
  check_compatible(integrand, u.grid());
  return sum_energy(cell_terms(integrand, u, Want::Energy));
}

std::vector<double> energy_gradient(const EllipticIntegrand& integrand, const GraphFunction& u) {
  check_compatible(integrand, u.grid());
  return scatter_gradient(u.grid(), cell_terms(integrand, u, Want::Gradient));
}

std::vector<double> amse_residual(const EllipticIntegrand& integrand, const GraphFunction& u) {
  const Mesh& mesh = u.grid();
  std::vector<double> g = energy_gradient(integrand, u);
  std::vector<double> mass(g.size(), 0.0);
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto& cell = mesh.cells()[static_cast<std::size_t>(c)];
    for (int a = 0; a <= mesh.n(); ++a) {
      mass[static_cast<std::size_t>(cell[static_cast<std::size_t>(a)])] +=
          mesh.cell_measure(c) / (mesh.n() + 1);
    }
  }
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const auto i = static_cast<std::size_t>(v);
    g[i] = mesh.tag(v) == Tag::Interior ? g[i] / mass[i] : 0.0;
  }
  return g;
}

double free_bc_residual(const EllipticIntegrand& integrand, const GraphFunction& u) {
  const Mesh& mesh = u.grid();
  check_compatible(integrand, mesh);
  double worst = 0.0;
  for (int f : mesh.wall_facets()) {
    const Facet& facet = mesh.boundary_facets()[static_cast<std::size_t>(f)];
    worst = std::max(worst, std::abs(integrand.grad_f(u.cell_gradient(facet.cell))(0)));
  }
  return worst;
}

namespace {

// Discrete harmonic extension of the DIRICHLET values (natural condition on
// the wall): the Euclidean Newton step linearized at Du = 0.
void harmonic_extension(const Mesh& mesh, const std::vector<int>& unknown, int n_unknowns,
                        std::vector<double>& values) {
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_unknowns);
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto& cell = mesh.cells()[static_cast<std::size_t>(c)];
    const auto& grads = mesh.basis_gradients(c);
    for (int a = 0; a <= mesh.n(); ++a) {
      const int ia = unknown[static_cast<std::size_t>(cell[static_cast<std::size_t>(a)])];
      if (ia < 0) continue;
      for (int b = 0; b <= mesh.n(); ++b) {
        const int vb = cell[static_cast<std::size_t>(b)];
        const double k = mesh.cell_measure(c) * grads[static_cast<std::size_t>(a)].dot(grads[static_cast<std::size_t>(b)]);
        const int ib = unknown[static_cast<std::size_t>(vb)];
        if (ib < 0) {
          rhs(ia) -= k * values[static_cast<std::size_t>(vb)];
        } else {
          triplets.emplace_back(ia, ib, k);
        }
      }
    }
  }
  Eigen::SparseMatrix<double> stiffness(n_unknowns, n_unknowns);
  stiffness.setFromTriplets(triplets.begin(), triplets.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(stiffness);
  if (ldlt.info() != Eigen::Success) throw SolverError("stiffness factorization failed");
  const Eigen::VectorXd x = ldlt.solve(rhs);
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const int k = unknown[static_cast<std::size_t>(v)];
    if (k >= 0) values[static_cast<std::size_t>(v)] = x(k);
  }
}

}  // namespace

std::vector<double> sample_vertices(const Mesh& mesh, const std::function<double(const Vec&)>& g) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(mesh.num_vertices()));
  for (const Vec& x : mesh.vertices()) out.push_back(g(x));
  return out;
}

std::pair<GraphFunction, SolveReport> solve(const EllipticIntegrand& integrand,
                                            std::shared_ptr<const Mesh> mesh_ptr,
                                            const std::vector<double>& dirichlet,
                                            const SolveConfig& cfg,
                                            const std::optional<std::vector<double>>& u0) {
  if (!mesh_ptr) throw PreconditionError("solve needs a mesh");
  const Mesh& mesh = *mesh_ptr;
  check_compatible(integrand, mesh);
  if (!(cfg.tol_residual > 0.0) || cfg.max_iter < 1) {
    throw ConfigError("solver needs tol_residual > 0 and max_iter >= 1");
  }
  const auto nverts = static_cast<std::size_t>(mesh.num_vertices());
  if (dirichlet.size() != nverts) throw PreconditionError("Dirichlet data length mismatch");
  if (u0 && u0->size() != nverts) throw PreconditionError("initial guess length mismatch");

  std::vector<int> unknown(nverts, -1);
  std::vector<int> free_vertices;
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    if (mesh.tag(v) != Tag::Dirichlet) {
      unknown[static_cast<std::size_t>(v)] = static_cast<int>(free_vertices.size());
      free_vertices.push_back(v);
    } else if (!std::isfinite(dirichlet[static_cast<std::size_t>(v)])) {
      throw PreconditionError("Dirichlet data must be finite");
    }
  }
  const int n_unknowns = static_cast<int>(free_vertices.size());

  std::vector<double> values = u0 ? *u0 : std::vector<double>(nverts, 0.0);
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    if (mesh.tag(v) == Tag::Dirichlet) values[static_cast<std::size_t>(v)] = dirichlet[static_cast<std::size_t>(v)];
  }
  if (!u0 && n_unknowns > 0) harmonic_extension(mesh, unknown, n_unknowns, values);
  GraphFunction u(mesh_ptr, values);

  const auto reduced = [&](const std::vector<double>& full) {
    Eigen::VectorXd r(n_unknowns);
    for (int k = 0; k < n_unknowns; ++k) r(k) = full[static_cast<std::size_t>(free_vertices[static_cast<std::size_t>(k)])];
    return r;
  };
  const auto shifted = [&](const Eigen::VectorXd& step, double t) {
    GraphFunction out = u;
    for (int k = 0; k < n_unknowns; ++k) out.values[static_cast<std::size_t>(free_vertices[static_cast<std::size_t>(k)])] += t * step(k);
    return out;
  };
  const auto newton_step = [&](const std::vector<CellTerms>& terms, const Eigen::VectorXd& r) {
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(mesh.num_cells()) * 9);
    for (int c = 0; c < mesh.num_cells(); ++c) {
      const auto& cell = mesh.cells()[static_cast<std::size_t>(c)];
      for (int a = 0; a <= mesh.n(); ++a) {
        const int ia = unknown[static_cast<std::size_t>(cell[static_cast<std::size_t>(a)])];
        if (ia < 0) continue;
        for (int b = 0; b <= mesh.n(); ++b) {
          const int ib = unknown[static_cast<std::size_t>(cell[static_cast<std::size_t>(b)])];
          if (ib < 0) continue;
          triplets.emplace_back(ia, ib, terms[static_cast<std::size_t>(c)].hess(a, b));
        }
      }
    }
    Eigen::SparseMatrix<double> hessian(n_unknowns, n_unknowns);
    hessian.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(hessian);
    if (ldlt.info() != Eigen::Success) throw SolverError("Newton Hessian factorization failed");
    if (!(ldlt.vectorD().minCoeff() > 0.0)) throw SolverError("Newton Hessian is not positive definite");
    Eigen::VectorXd step = ldlt.solve(-r);
    // One round of iterative refinement if the direct solve is not accurate enough.
    const double rnorm = std::max(r.norm(), std::numeric_limits<double>::min());
    Eigen::VectorXd lin_res = hessian * step + r;
    if (lin_res.norm() > cfg.linear_solver_tol * rnorm) {
      step -= ldlt.solve(lin_res);
      lin_res = hessian * step + r;
    }
    return step;
  };

  SolveReport report;
  std::vector<CellTerms> terms = cell_terms(integrand, u, Want::Hessian);
  double e = sum_energy(terms);
  Eigen::VectorXd r = reduced(scatter_gradient(mesh, terms));
  report.energy_trace.push_back(e);
  report.residual_trace.push_back(r.norm());

  // Relative noise of the summed energy.
  const double roundoff =
      16.0 * std::numeric_limits<double>::epsilon() * std::sqrt(static_cast<double>(mesh.num_cells()));
  while (true) {
    if (n_unknowns == 0 || r.norm() <= cfg.tol_residual) {
      report.converged = true;
      break;
    }
    if (report.iterations >= cfg.max_iter) break;
    const Eigen::VectorXd step = newton_step(terms, r);
    const double slope = r.dot(step);
    double t = 1.0;
    bool accepted = false;
    GraphFunction trial = u;
    std::vector<CellTerms> trial_terms;
    for (int k = 0; k <= cfg.line_search.max_backtracks; ++k) {
      trial = shifted(step, t);
      trial_terms = cell_terms(integrand, trial, Want::Hessian);
      const double e_trial = sum_energy(trial_terms);
      if (e_trial <= e + cfg.line_search.sufficient_decrease * t * slope) {
        accepted = true;
      } else if (e_trial - e <= roundoff * std::abs(e)) {
        // Energy differences below roundoff: fall back to the residual.
        accepted = reduced(scatter_gradient(mesh, trial_terms)).norm() < r.norm();
      }
      if (accepted) break;
      t *= cfg.line_search.shrink;
    }
    if (!accepted) break;  // stagnated; reported as non-converged
    u = std::move(trial);
    terms = std::move(trial_terms);
    e = sum_energy(terms);
    r = reduced(scatter_gradient(mesh, terms));
    ++report.iterations;
    report.energy_trace.push_back(e);
    report.residual_trace.push_back(r.norm());
  }

  if (report.converged && cfg.polish && n_unknowns > 0 && r.norm() > 0.0) {
    const Eigen::VectorXd step = newton_step(terms, r);
    GraphFunction trial = shifted(step, 1.0);
    auto trial_terms = cell_terms(integrand, trial, Want::Hessian);
    const double e_trial = sum_energy(trial_terms);
    const Eigen::VectorXd r_trial = reduced(scatter_gradient(mesh, trial_terms));
    if (r_trial.norm() < r.norm() && e_trial <= e + roundoff * std::abs(e)) {
      u = std::move(trial);
      e = e_trial;
      r = r_trial;
      report.polished = true;
    }
  }

  report.final_residual_norm = r.norm();
  report.free_bc_residual = free_bc_residual(integrand, u);
  return {std::move(u), std::move(report)};
}

}  // namespace aniso
