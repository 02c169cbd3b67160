#pragma once

#include "aniso/solver.hpp"

#include <functional>
#include <iosfwd>
#include <vector>

namespace aniso {

/// Exact quantities of the piecewise-linear graph on one cell.
struct CellGeometry {
  Vec du;
  double W = 1.0;      // sqrt(1 + |Du|^2)
  Vec nu;              // (-Du, 1) / W, upward unit normal
  Vec nu_F;            // grad F(nu), anisotropic normal
  double F_nu = 1.0;   // F(nu)
  double W_f = 1.0;    // f(Du)
  Mat metric;          // g_ij = delta_ij + u_i u_j
  Mat A_F;             // hess F(nu) as an ambient (n+1)x(n+1) matrix
  double area = 0.0;   // surface measure of the lifted cell, |cell| W
};

/// Curvature data at a vertex from a local quadratic least-squares fit.
/// Second fundamental form convention: h(X, Y) = <D_X nu, Y>, so in the
/// coordinate frame h_ij = -u_ij / W.
struct VertexGeometry {
  bool valid = false;
  Vec du;
  Mat hess_u;
  Mat metric;
  Mat h;
  Mat h_F;              // h_F(X_i, X_j) = (h g^{-1} A)_ij
  double H_F = 0.0;     // tr_g h_F
  double h_norm2 = 0.0; // |h|^2
  double tr_AF_h2 = 0.0;
};

/// Co-normal frame on one wall facet (evaluated on the adjacent cell).
struct WallFrame {
  int facet = -1;
  int cell = -1;
  Vec mu;      // outer unit co-normal of the boundary in the graph
  Vec nu_bar;  // outer unit co-normal of the boundary in the wall
  Vec mu_F;    // <nu_F, nu> mu - <nu_F, mu> nu
  Vec tau;     // unit tangent of the boundary curve (n = 2 only)
  double measure = 1.0;  // length of the lifted facet (1 for n = 1)
};

class GraphGeometry {
 public:
  GraphGeometry(EllipticIntegrand integrand, GraphFunction u, std::vector<CellGeometry> cells,
                std::vector<VertexGeometry> vertices, std::vector<WallFrame> wall);

  const EllipticIntegrand& integrand() const { return integrand_; }
  const GraphFunction& u() const { return u_; }
  const Mesh& mesh() const { return u_.grid(); }
  const std::vector<CellGeometry>& cells() const { return cells_; }
  const CellGeometry& cell(int c) const { return cells_[static_cast<std::size_t>(c)]; }
  const std::vector<VertexGeometry>& vertices() const { return vertices_; }
  const std::vector<WallFrame>& wall() const { return wall_; }

  /// Flat-measure weighted average of a per-cell field over incident cells.
  std::vector<double> vertex_average(const std::function<double(const CellGeometry&)>& field) const;
  /// W_f at vertices: f of the fitted gradient, or the incident-cell average
  /// where the fit is flagged.
  std::vector<double> vertex_W_f() const;

  /// Lifts coordinate components (w.r.t. X_i = e_i + u_i e_{n+1}) to R^{n+1}.
  Vec lift_tangent(const Vec& du, const Vec& coords) const;

 private:
  EllipticIntegrand integrand_;
  GraphFunction u_;
  std::vector<CellGeometry> cells_;
  std::vector<VertexGeometry> vertices_;
  std::vector<WallFrame> wall_;
};

GraphGeometry compute_geometry(const EllipticIntegrand& integrand, const GraphFunction& u);

/// The (mu, nu_bar, mu_F) frames of every wall facet.
const std::vector<WallFrame>& wall_frame(const GraphGeometry& geom);

/// True if x lies within `width` of the Dirichlet boundary.
bool in_dirichlet_collar(const Mesh& mesh, const Vec& x, double width);

struct SurfaceGradient {
  Vec grad;    // tangential gradient of phi on the graph (ambient vector)
  Vec grad_F;  // A_F grad
};

/// Per-cell gradients of a vertex function viewed as a function on the graph.
std::vector<SurfaceGradient> surface_gradient(const GraphGeometry& geom, const std::vector<double>& phi);

/// -int_Sigma F(nu)^2 g(grad psi, grad_F phi) dH^n, the weak form of
/// int psi div_Sigma(F^2(nu) grad_F phi) without a wall term. psi must be
/// nonnegative and vanish on DIRICHLET vertices (PreconditionError otherwise).
double weighted_divergence_form(const GraphGeometry& geom, const std::vector<double>& phi,
                                const std::vector<double>& psi);

/// int_Sigma psi F(nu)^2 g(grad phi, grad_F phi) dH^n for P1 psi.
double weighted_quadratic_form(const GraphGeometry& geom, const std::vector<double>& phi,
                               const std::vector<double>& psi);

/// Smooth ambient vector field with its Jacobian (rows: components).
struct VectorField {
  std::function<Vec(const Vec&)> value;
  std::function<Mat(const Vec&)> jacobian;
};

struct FirstVariationTerms {
  double divergence = 0.0;  // int F(nu) div_{Sigma,F} X
  double curvature = 0.0;   // int H_F <X, nu>
  double boundary = 0.0;    // wall integral of <X, mu_F>
  double mismatch() const { return divergence - curvature - boundary; }
};

/// Quadrature of the three terms of the anisotropic first variation formula.
/// X must vanish near the Dirichlet boundary.
FirstVariationTerms first_variation_terms(const GraphGeometry& geom, const VectorField& field);

/// h_F(mu, tau) at each valid FREE vertex (n = 2), from the vertex fit.
std::vector<double> wall_principal_direction_residuals(const GraphGeometry& geom);

/// Per-vertex table (coords, u, W, W_f, H_F, |h|^2) and per-wall-facet table
/// (<nu_F, e1>, <mu_F, -e1>).
void write_geometry_csv(const GraphGeometry& geom, std::ostream& out);
void write_wall_csv(const GraphGeometry& geom, std::ostream& out);

}  // namespace aniso
