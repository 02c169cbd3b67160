#include "aniso/integrand.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace aniso {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_nonzero(const Vec& z) {
  if (!(z.norm() > 0.0) || !z.allFinite()) {
    throw DomainError("elliptic integrand evaluated at the zero vector");
  }
}

// Pieces of the smoothed p-norm shared by value, gradient and Hessian.
struct PNormTerms {
  Vec s;        // s_i = sqrt(z_i^2 + eps^2 |z|^2)
  double sum;   // S = sum_i s_i^p
  Vec grad_s;   // G_k = z_k (s_k^{p-2} + eps^2 Q), Q = sum_i s_i^{p-2}
  double q_sum;
};

PNormTerms pnorm_terms(const PNorm& pn, const Vec& z) {
  const double r2 = z.squaredNorm();
  const double e2 = pn.eps * pn.eps;
  PNormTerms t;
  t.s.resize(z.size());
  t.grad_s.resize(z.size());
  t.sum = 0.0;
  t.q_sum = 0.0;
  for (int i = 0; i < z.size(); ++i) {
    t.s(i) = std::sqrt(z(i) * z(i) + e2 * r2);
    t.sum += std::pow(t.s(i), pn.p);
    t.q_sum += std::pow(t.s(i), pn.p - 2.0);
  }
  for (int k = 0; k < z.size(); ++k) {
    t.grad_s(k) = z(k) * (std::pow(t.s(k), pn.p - 2.0) + e2 * t.q_sum);
  }
  return t;
}

}  // namespace

EllipticIntegrand::EllipticIntegrand(IntegrandKind kind, int dim)
    : kind_(std::move(kind)), dim_(dim) {
  if (dim_ < 2 || dim_ > 3) {
    throw ConfigError("integrand dimension must be 2 or 3, got " + std::to_string(dim_));
  }
  std::visit(Overloaded{
                 [](const Euclidean&) {},
                 [](const Capillary& c) {
                   if (!(c.theta > 0.0 && c.theta < std::numbers::pi)) {
                     throw ConfigError("capillary angle theta must lie in (0, pi)");
                   }
                 },
                 [this](const Ellipsoid& e) {
                   if (e.a.rows() != dim_ || e.a.cols() != dim_) {
                     throw ConfigError("ellipsoid matrix does not match the dimension");
                   }
                   if (!e.a.allFinite() || (e.a - e.a.transpose()).norm() > 1e-12 * e.a.norm()) {
                     throw ConfigError("ellipsoid matrix must be symmetric");
                   }
                   Eigen::SelfAdjointEigenSolver<Mat> eig(e.a);
                   if (!(eig.eigenvalues().minCoeff() > 0.0)) {
                     throw ConfigError("ellipsoid matrix must be positive definite");
                   }
                 },
                 [](const PNorm& pn) {
                   if (!(pn.p > 1.0) || !std::isfinite(pn.p)) {
                     throw ConfigError("p-norm exponent must exceed 1");
                   }
                   if (!(pn.eps >= 0.0) || !std::isfinite(pn.eps)) {
                     throw ConfigError("p-norm regularization must be nonnegative");
                   }
                 },
             },
             kind_);
}

EllipticIntegrand EllipticIntegrand::euclidean(int dim) { return {Euclidean{}, dim}; }

EllipticIntegrand EllipticIntegrand::capillary(double theta, int dim) {
  return {Capillary{theta}, dim};
}

EllipticIntegrand EllipticIntegrand::ellipsoid(Mat a) {
  const int dim = static_cast<int>(a.rows());
  return {Ellipsoid{std::move(a)}, dim};
}

EllipticIntegrand EllipticIntegrand::pnorm(double p, double eps, int dim) {
  return {PNorm{p, eps}, dim};
}

void EllipticIntegrand::check_dim(const Vec& z) const {
  if (z.size() != dim_) {
    throw DomainError("vector of size " + std::to_string(z.size()) +
                      " passed to integrand of dimension " + std::to_string(dim_));
  }
}

double EllipticIntegrand::eval_F(const Vec& z) const {
  check_dim(z);
  require_nonzero(z);
  const double value = std::visit(
      Overloaded{
          [&](const Euclidean&) { return z.norm(); },
          [&](const Capillary& c) { return z.norm() - std::cos(c.theta) * z(0); },
          [&](const Ellipsoid& e) { return std::sqrt(z.dot(e.a * z)); },
          [&](const PNorm& pn) {
            const double r2 = z.squaredNorm();
            double sum = 0.0;
            for (int i = 0; i < z.size(); ++i) {
              sum += std::pow(z(i) * z(i) + pn.eps * pn.eps * r2, 0.5 * pn.p);
            }
            return std::pow(sum, 1.0 / pn.p);
          },
      },
      kind_);
  return scale_ * value;
}

Vec EllipticIntegrand::grad_F(const Vec& z) const {
  check_dim(z);
  require_nonzero(z);
  Vec g = std::visit(Overloaded{
                         [&](const Euclidean&) -> Vec { return z / z.norm(); },
                         [&](const Capillary& c) -> Vec {
                           Vec out = z / z.norm();
                           out(0) -= std::cos(c.theta);
                           return out;
                         },
                         [&](const Ellipsoid& e) -> Vec {
                           const Vec az = e.a * z;
                           return az / std::sqrt(z.dot(az));
                         },
                         [&](const PNorm& pn) -> Vec {
                           const PNormTerms t = pnorm_terms(pn, z);
                           return std::pow(t.sum, 1.0 / pn.p - 1.0) * t.grad_s;
                         },
                     },
                     kind_);
  return scale_ * g;
}

Mat EllipticIntegrand::hess_F(const Vec& z) const {
  check_dim(z);
  require_nonzero(z);
  const auto norm_hessian = [&]() -> Mat {
    const double r = z.norm();
    const Vec u = z / r;
    return (Mat::Identity(dim_, dim_) - u * u.transpose()) / r;
  };
  Mat h = std::visit(
      Overloaded{
          [&](const Euclidean&) -> Mat { return norm_hessian(); },
          [&](const Capillary&) -> Mat { return norm_hessian(); },
          [&](const Ellipsoid& e) -> Mat {
            const Vec az = e.a * z;
            const double f = std::sqrt(z.dot(az));
            return (e.a - az * az.transpose() / (f * f)) / f;
          },
          [&](const PNorm& pn) -> Mat {
            const PNormTerms t = pnorm_terms(pn, z);
            const double p = pn.p;
            const double e2 = pn.eps * pn.eps;
            // d q_i / d z_l = (p-2) s_i^{p-4} (delta_il z_i + eps^2 z_l)
            Vec sp4(dim_);
            double sp4_sum = 0.0;
            for (int i = 0; i < dim_; ++i) {
              sp4(i) = std::pow(t.s(i), p - 4.0);
              sp4_sum += sp4(i);
            }
            Mat dg(dim_, dim_);
            for (int k = 0; k < dim_; ++k) {
              for (int l = 0; l < dim_; ++l) {
                const double dqk = (p - 2.0) * sp4(k) * ((k == l ? z(k) : 0.0) + e2 * z(l));
                const double dq_sum = (p - 2.0) * (sp4(l) * z(l) + e2 * z(l) * sp4_sum);
                dg(k, l) = (k == l ? std::pow(t.s(k), p - 2.0) + e2 * t.q_sum : 0.0) +
                           z(k) * (dqk + e2 * dq_sum);
              }
            }
            const double a = (1.0 - p) * std::pow(t.sum, 1.0 / p - 2.0);
            const double b = std::pow(t.sum, 1.0 / p - 1.0);
            Mat out = a * t.grad_s * t.grad_s.transpose() + b * dg;
            return 0.5 * (out + out.transpose());
          },
      },
      kind_);
  return scale_ * h;
}

Vec EllipticIntegrand::lift(const Vec& y) const {
  if (y.size() != dim_ - 1) {
    throw DomainError("graph gradient has size " + std::to_string(y.size()) +
                      ", expected " + std::to_string(dim_ - 1));
  }
  Vec z(dim_);
  z.head(dim_ - 1) = -y;
  z(dim_ - 1) = 1.0;
  return z;
}

double EllipticIntegrand::eval_f(const Vec& y) const { return eval_F(lift(y)); }

Vec EllipticIntegrand::grad_f(const Vec& y) const {
  const Vec g = grad_F(lift(y));
  return -g.head(dim_ - 1);
}

Mat EllipticIntegrand::hess_f(const Vec& y) const {
  const Mat h = hess_F(lift(y));
  return h.topLeftCorner(dim_ - 1, dim_ - 1);
}

EllipticIntegrand EllipticIntegrand::scaled(double factor, bool mark_normalized) const {
  if (!(factor > 0.0) || !std::isfinite(factor)) {
    throw ConfigError("integrand scale factor must be positive");
  }
  EllipticIntegrand out = *this;
  out.scale_ *= factor;
  out.normalized_ = mark_normalized;
  return out;
}

std::string EllipticIntegrand::label() const {
  std::ostringstream os;
  os.precision(17);
  std::visit(Overloaded{
                 [&](const Euclidean&) { os << "euclidean"; },
                 [&](const Capillary& c) { os << "capillary(theta=" << c.theta << ")"; },
                 [&](const Ellipsoid&) { os << "ellipsoid"; },
                 [&](const PNorm& pn) { os << "pnorm(p=" << pn.p << ",eps=" << pn.eps << ")"; },
             },
             kind_);
  if (scale_ != 1.0) os << "*" << scale_;
  return os.str();
}

std::vector<Vec> sphere_samples(int dim, int count) {
  if (dim != 2 && dim != 3) throw PreconditionError("sphere samples need dim 2 or 3");
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int axis = 0; axis < dim && static_cast<int>(out.size()) < count; ++axis) {
    for (double sign : {1.0, -1.0}) {
      if (static_cast<int>(out.size()) >= count) break;
      out.push_back(sign * unit_vector(dim, axis));
    }
  }
  const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
  // Plastic number: generator of the two-dimensional R2 sequence.
  const double plastic = 1.32471795724474602596;
  const double a1 = 1.0 / plastic;
  const double a2 = 1.0 / (plastic * plastic);
  for (int k = 0; static_cast<int>(out.size()) < count; ++k) {
    Vec p(dim);
    if (dim == 2) {
      const double phi = 2.0 * std::numbers::pi * std::fmod(0.5 + k * golden, 1.0);
      p << std::cos(phi), std::sin(phi);
    } else {
      const double u = std::fmod(0.5 + k * a1, 1.0);
      const double v = std::fmod(0.5 + k * a2, 1.0);
      const double zc = 1.0 - 2.0 * u;
      const double rho = std::sqrt(std::max(0.0, 1.0 - zc * zc));
      const double phi = 2.0 * std::numbers::pi * v;
      p << rho * std::cos(phi), rho * std::sin(phi), zc;
    }
    out.push_back(p);
  }
  return out;
}

namespace {

// Orthonormal basis of z^perp as columns.
Mat tangent_basis(const Vec& z) {
  const int dim = static_cast<int>(z.size());
  Eigen::HouseholderQR<Mat> qr(z);
  const Mat q = qr.householderQ() * Mat::Identity(dim, dim);
  return q.rightCols(dim - 1);
}

}  // namespace

IntegrandBounds estimate_bounds(const EllipticIntegrand& integrand, int n_samples) {
  if (n_samples < 100) {
    throw PreconditionError("estimate_bounds needs at least 100 samples");
  }
  IntegrandBounds b;
  b.m_F = b.min_grad_norm = b.lambda_F = std::numeric_limits<double>::infinity();
  b.M_F = b.max_grad_norm = b.Lambda_F = -std::numeric_limits<double>::infinity();
  for (const Vec& z : sphere_samples(integrand.dim(), n_samples)) {
    const double value = integrand.eval_F(z);
    const double grad_norm = integrand.grad_F(z).norm();
    const Mat t = tangent_basis(z);
    const Mat restricted = t.transpose() * integrand.hess_F(z) * t;
    Eigen::SelfAdjointEigenSolver<Mat> eig(restricted);
    b.m_F = std::min(b.m_F, value);
    b.M_F = std::max(b.M_F, value);
    b.min_grad_norm = std::min(b.min_grad_norm, grad_norm);
    b.max_grad_norm = std::max(b.max_grad_norm, grad_norm);
    b.lambda_F = std::min(b.lambda_F, eig.eigenvalues().minCoeff());
    b.Lambda_F = std::max(b.Lambda_F, eig.eigenvalues().maxCoeff());
  }
  b.sample_count = n_samples;
  return b;
}

std::optional<std::pair<double, double>> analytic_extrema(const EllipticIntegrand& integrand) {
  const double s = integrand.scale();
  return std::visit(
      Overloaded{
          [&](const Euclidean&) -> std::optional<std::pair<double, double>> {
            return std::pair{s, s};
          },
          [&](const Capillary& c) -> std::optional<std::pair<double, double>> {
            const double k = std::abs(std::cos(c.theta));
            return std::pair{s * (1.0 - k), s * (1.0 + k)};
          },
          [&](const Ellipsoid& e) -> std::optional<std::pair<double, double>> {
            Eigen::SelfAdjointEigenSolver<Mat> eig(e.a);
            return std::pair{s * std::sqrt(eig.eigenvalues().minCoeff()),
                             s * std::sqrt(eig.eigenvalues().maxCoeff())};
          },
          [&](const PNorm&) -> std::optional<std::pair<double, double>> { return std::nullopt; },
      },
      integrand.kind());
}

EllipticIntegrand normalize(const EllipticIntegrand& integrand, int n_samples) {
  if (integrand.normalized()) return integrand;
  double m_F = 0.0;
  if (auto exact = analytic_extrema(integrand)) {
    m_F = exact->first;
  } else {
    m_F = estimate_bounds(integrand, n_samples).m_F;
  }
  return integrand.scaled(1.0 / m_F, true);
}

double free_boundary_slope(const EllipticIntegrand& integrand, const Vec& tangential) {
  const int n = integrand.graph_dim();
  if (tangential.size() != n - 1) {
    throw PreconditionError("tangential slope vector has the wrong size");
  }
  const auto flux = [&](double a1) {
    Vec y(n);
    y(0) = a1;
    y.tail(n - 1) = tangential;
    return integrand.grad_f(y)(0);
  };
  // flux is strictly increasing in a1 (f is strictly convex); bracket the root.
  double lo = -1.0;
  double hi = 1.0;
  for (int k = 0; flux(lo) > 0.0; ++k) {
    if (k > 60) throw SolverError("free boundary slope: no bracket found");
    hi = lo;
    lo *= 2.0;
  }
  for (int k = 0; flux(hi) < 0.0; ++k) {
    if (k > 60) throw SolverError("free boundary slope: no bracket found");
    lo = hi;
    hi *= 2.0;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (flux(mid) < 0.0 ? lo : hi) = mid;
  }
  double a1 = 0.5 * (lo + hi);
  // Two Newton corrections clean up the last bits.
  for (int it = 0; it < 2; ++it) {
    Vec y(n);
    y(0) = a1;
    y.tail(n - 1) = tangential;
    const double slope = integrand.hess_f(y)(0, 0);
    const double next = a1 - flux(a1) / slope;
    if (std::abs(flux(next)) < std::abs(flux(a1))) a1 = next;
  }
  return a1;
}

EllipticIntegrand integrand_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw ConfigError("integrand descriptor must be a JSON object");
    const std::string kind = j.at("kind").get<std::string>();
    const int dim = j.value("dim", 3);
    EllipticIntegrand out = [&]() {
      if (kind == "euclidean") return EllipticIntegrand::euclidean(dim);
      if (kind == "capillary") {
        const double theta = j.at("theta").get<double>();
        if (!(theta > 0.0 && theta < std::numbers::pi)) {
          throw ConfigError("capillary angle theta must lie in (0, pi)");
        }
        return EllipticIntegrand::capillary(theta, dim);
      }
      if (kind == "ellipsoid") {
        const auto& raw = j.at("A");
        std::vector<double> flat;
        for (const auto& entry : raw) {
          if (entry.is_array()) {
            for (const auto& x : entry) flat.push_back(x.get<double>());
          } else {
            flat.push_back(entry.get<double>());
          }
        }
        if (static_cast<int>(flat.size()) != dim * dim) {
          throw ConfigError("ellipsoid matrix must have dim*dim entries");
        }
        Mat a(dim, dim);
        for (int r = 0; r < dim; ++r) {
          for (int c = 0; c < dim; ++c) a(r, c) = flat[static_cast<std::size_t>(r * dim + c)];
        }
        return EllipticIntegrand::ellipsoid(a);
      }
      if (kind == "pnorm") {
        return EllipticIntegrand::pnorm(j.at("p").get<double>(), j.value("eps", 1e-2), dim);
      }
      throw ConfigError("unknown integrand kind '" + kind + "'");
    }();
    if (j.contains("scale")) out = out.scaled(j.at("scale").get<double>(), false);
    if (j.value("normalize", false)) out = normalize(out);
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("integrand descriptor: ") + e.what());
  }
}

nlohmann::json integrand_to_json(const EllipticIntegrand& integrand) {
  nlohmann::json j;
  std::visit(Overloaded{
                 [&](const Euclidean&) { j["kind"] = "euclidean"; },
                 [&](const Capillary& c) {
                   j["kind"] = "capillary";
                   j["theta"] = c.theta;
                 },
                 [&](const Ellipsoid& e) {
                   j["kind"] = "ellipsoid";
                   std::vector<double> flat;
                   for (int r = 0; r < e.a.rows(); ++r) {
                     for (int c = 0; c < e.a.cols(); ++c) flat.push_back(e.a(r, c));
                   }
                   j["A"] = flat;
                 },
                 [&](const PNorm& pn) {
                   j["kind"] = "pnorm";
                   j["p"] = pn.p;
                   j["eps"] = pn.eps;
                 },
             },
             integrand.kind());
  j["dim"] = integrand.dim();
  if (integrand.scale() != 1.0) j["scale"] = integrand.scale();
  if (integrand.normalized()) j["normalized"] = true;
  return j;
}

Vec finite_difference_grad_F(const EllipticIntegrand& integrand, const Vec& z) {
  const double step = 1e-6 * z.norm();
  Vec g(z.size());
  for (int i = 0; i < z.size(); ++i) {
    Vec zp = z, zm = z;
    zp(i) += step;
    zm(i) -= step;
    g(i) = (integrand.eval_F(zp) - integrand.eval_F(zm)) / (2.0 * step);
  }
  return g;
}

Mat finite_difference_hess_F(const EllipticIntegrand& integrand, const Vec& z) {
  const double step = 1e-6 * z.norm();
  Mat h(z.size(), z.size());
  for (int i = 0; i < z.size(); ++i) {
    Vec zp = z, zm = z;
    zp(i) += step;
    zm(i) -= step;
    h.col(i) = (integrand.grad_F(zp) - integrand.grad_F(zm)) / (2.0 * step);
  }
  return 0.5 * (h + h.transpose());
}

}  // namespace aniso
