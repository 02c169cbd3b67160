#pragma once

#include "aniso/types.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace aniso {

/// F(z) = |z|.
struct Euclidean {};

/// F(z) = |z| - cos(theta) <z, e1>; turns the capillary contact condition
/// <nu, e1> = cos(theta) into the natural free boundary condition.
struct Capillary {
  double theta;
};

/// F(z) = sqrt(z^T A z) with A symmetric positive definite.
struct Ellipsoid {
  Mat a;
};

/// Smoothed p-norm F(z) = (sum_i (z_i^2 + eps^2 |z|^2)^{p/2})^{1/p}.
/// The eps-term keeps F twice differentiable on the coordinate hyperplanes.
struct PNorm {
  double p;
  double eps = 1e-2;
};

using IntegrandKind = std::variant<Euclidean, Capillary, Ellipsoid, PNorm>;

/// A uniformly elliptic integrand F on R^{n+1} together with the graph
/// Lagrangian f(y) = F(-y, 1) on R^n.
///
/// All derivatives are analytic. The integrand is an immutable value; every
/// member function is pure and safe to call concurrently.
class EllipticIntegrand {
 public:
  EllipticIntegrand(IntegrandKind kind, int dim);

  static EllipticIntegrand euclidean(int dim);
  static EllipticIntegrand capillary(double theta, int dim);
  static EllipticIntegrand ellipsoid(Mat a);
  static EllipticIntegrand pnorm(double p, double eps, int dim);

  const IntegrandKind& kind() const { return kind_; }
  /// Ambient dimension n + 1.
  int dim() const { return dim_; }
  /// Graph dimension n.
  int graph_dim() const { return dim_ - 1; }
  /// Multiplicative factor applied on top of the builtin formula.
  double scale() const { return scale_; }
  bool normalized() const { return normalized_; }

  double eval_F(const Vec& z) const;
  Vec grad_F(const Vec& z) const;
  Mat hess_F(const Vec& z) const;

  double eval_f(const Vec& y) const;
  Vec grad_f(const Vec& y) const;
  Mat hess_f(const Vec& y) const;

  /// Returns a copy with F multiplied by `factor` (> 0).
  EllipticIntegrand scaled(double factor, bool mark_normalized) const;

  /// Short human-readable label, e.g. "capillary(theta=1.0471975511965976)".
  std::string label() const;

 private:
  Vec lift(const Vec& y) const;
  void check_dim(const Vec& z) const;

  IntegrandKind kind_;
  int dim_;
  double scale_ = 1.0;
  bool normalized_ = false;
};

struct IntegrandBounds {
  double m_F = 0.0;
  double M_F = 0.0;
  double lambda_F = 0.0;
  double Lambda_F = 0.0;
  /// Extremes of |grad F| over the same samples.
  double min_grad_norm = 0.0;
  double max_grad_norm = 0.0;
  int sample_count = 0;
};

/// Quasi-uniform nested point sequence on the unit sphere S^{dim-1}
/// (dim = 2 or 3). The first 2*dim points are the coordinate directions; the
/// sequence is a prefix-stable golden-ratio sequence, so the first k points of
/// sphere_samples(dim, N) are sphere_samples(dim, k).
std::vector<Vec> sphere_samples(int dim, int count);

/// Sampled extremes of F and of the tangential Hessian Rayleigh quotient.
IntegrandBounds estimate_bounds(const EllipticIntegrand& integrand, int n_samples);

/// Closed-form (m_F, M_F) where the builtin admits one.
std::optional<std::pair<double, double>> analytic_extrema(const EllipticIntegrand& integrand);

/// Rescales F by 1/m_F so that the minimum over the sphere is 1.
/// Idempotent: an already normalized integrand is returned unchanged.
EllipticIntegrand normalize(const EllipticIntegrand& integrand, int n_samples = 20000);

/// Tangential slope a1 with <Df(a1, tangential), e1> = 0, i.e. the slope in
/// x1 of the affine free-boundary solutions with the given remaining slopes.
double free_boundary_slope(const EllipticIntegrand& integrand, const Vec& tangential);

/// Parses {"kind": "capillary", "theta": ..., "dim": 3} style descriptors.
/// Throws ConfigError for unknown kinds, theta outside (0, pi), non-SPD
/// matrices or inconsistent dimensions.
EllipticIntegrand integrand_from_json(const nlohmann::json& j);
nlohmann::json integrand_to_json(const EllipticIntegrand& integrand);

/// Centered finite differences (step 1e-6 |z|). Cross-validation only; the
/// solver never uses these.
Vec finite_difference_grad_F(const EllipticIntegrand& integrand, const Vec& z);
Mat finite_difference_hess_F(const EllipticIntegrand& integrand, const Vec& z);

}  // namespace aniso
