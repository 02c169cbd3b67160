#include "aniso/integrand.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace aniso;

namespace {

constexpr double pi = std::numbers::pi;

Vec v3(double a, double b, double c) {
  Vec z(3);
  z << a, b, c;
  return z;
}

Vec random_vec(std::mt19937_64& rng, int dim, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Vec z(dim);
  for (int i = 0; i < dim; ++i) z(i) = g(rng);
  return z;
}

Mat test_matrix() {
  Mat a(3, 3);
  a << 2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5;
  return a;
}

std::vector<EllipticIntegrand> builtins(int dim) {
  std::vector<EllipticIntegrand> out{EllipticIntegrand::euclidean(dim),
                                     EllipticIntegrand::capillary(pi / 3, dim),
                                     EllipticIntegrand::pnorm(3.0, 1e-2, dim)};
  if (dim == 3) {
    out.push_back(EllipticIntegrand::ellipsoid(test_matrix()));
  } else {
    Mat a(2, 2);
    a << 1.5, 0.2, 0.2, 0.7;
    out.push_back(EllipticIntegrand::ellipsoid(a));
  }
  return out;
}

// Independent bisection for the root of y -> <Df(y), e1> in one variable.
double bisect_slope(const EllipticIntegrand& I, Vec tangential) {
  const auto g = [&](double s) {
    Vec y(tangential.size() + 1);
    y(0) = s;
    y.tail(tangential.size()) = tangential;
    Vec z(y.size() + 1);
    z.head(y.size()) = -y;
    z(y.size()) = 1.0;
    const double step = 1e-6;
    Vec zp = z, zm = z;
    zp(0) -= step;
    zm(0) += step;
    return (I.eval_F(zp) - I.eval_F(zm)) / (2 * step);
  };
  double lo = -50.0;
  double hi = 50.0;
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    if ((g(lo) < 0) == (g(mid) < 0)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("euclidean values") {
  const auto I = EllipticIntegrand::euclidean(3);
  CHECK(I.eval_F(v3(3, 4, 12)) == doctest::Approx(13.0));
  Vec y(2);
  y << 3.0, 4.0;
  CHECK(I.eval_f(y) == doctest::Approx(std::sqrt(26.0)));
  const Mat h = I.hess_F(v3(0, 0, 1));
  CHECK(h(0, 0) == doctest::Approx(1.0));
  CHECK(h(2, 2) == doctest::Approx(0.0));
}

TEST_CASE("capillary graph lagrangian has closed form") {
  for (double theta : {pi / 6, pi / 3, pi / 2, 2 * pi / 3}) {
    const auto I = EllipticIntegrand::capillary(theta, 3);
    std::mt19937_64 rng(7);
    for (int k = 0; k < 50; ++k) {
      const Vec y = random_vec(rng, 2, 2.0);
      const double W = std::sqrt(1.0 + y.squaredNorm());
      CHECK(I.eval_f(y) == doctest::Approx(W + std::cos(theta) * y(0)).epsilon(1e-13));
      const Vec df = I.grad_f(y);
      CHECK(df(0) == doctest::Approx(y(0) / W + std::cos(theta)).epsilon(1e-12));
      CHECK(df(1) == doctest::Approx(y(1) / W).epsilon(1e-12));
    }
  }
}

TEST_CASE("capillary and euclidean hessians coincide") {
  const auto E = EllipticIntegrand::euclidean(3);
  const auto C = EllipticIntegrand::capillary(0.9, 3);
  std::mt19937_64 rng(11);
  for (int k = 0; k < 100; ++k) {
    const Vec z = random_vec(rng, 3);
    CHECK((E.hess_F(z) - C.hess_F(z)).norm() <= 1e-14 * E.hess_F(z).norm() + 1e-15);
  }
}

TEST_CASE("euler identity, homogeneity and radial hessian") {
  std::mt19937_64 rng(2024);
  for (int dim : {2, 3}) {
    for (const auto& I : builtins(dim)) {
      for (int k = 0; k < 500; ++k) {
        const Vec z = random_vec(rng, dim, 3.0);
        const double F = I.eval_F(z);
        CHECK(std::abs(I.grad_F(z).dot(z) - F) <= 1e-12 * F);
        const double t = 0.1 + 5.0 * (k % 7);
        CHECK(std::abs(I.eval_F(t * z) - t * F) <= 1e-12 * t * F);
        CHECK((I.hess_F(z) * z).norm() <= 1e-10 * I.hess_F(z).norm() * z.norm());
      }
    }
  }
}

TEST_CASE("analytic derivatives match finite differences") {
  std::mt19937_64 rng(5);
  for (int dim : {2, 3}) {
    for (const auto& I : builtins(dim)) {
      for (int k = 0; k < 50; ++k) {
        const Vec z = random_vec(rng, dim);
        const Vec g = I.grad_F(z);
        CHECK((g - finite_difference_grad_F(I, z)).norm() <= 1e-6 * (1.0 + g.norm()));
        const Mat h = I.hess_F(z);
        CHECK((h - finite_difference_hess_F(I, z)).norm() <= 1e-4 * (1.0 + h.norm()));
      }
    }
  }
}

TEST_CASE("graph lagrangian derivatives follow the chain rule") {
  std::mt19937_64 rng(9);
  for (const auto& I : builtins(3)) {
    const Vec y = random_vec(rng, 2);
    const Vec z = v3(-y(0), -y(1), 1.0);
    const Vec dF = I.grad_F(z);
    const Vec df = I.grad_f(y);
    CHECK(df(0) == doctest::Approx(-dF(0)));
    CHECK(df(1) == doctest::Approx(-dF(1)));
    const Mat hF = I.hess_F(z);
    const Mat hf = I.hess_f(y);
    CHECK((hf - hF.topLeftCorner(2, 2)).norm() <= 1e-12 * (1.0 + hF.norm()));
  }
}

TEST_CASE("validation errors") {
  CHECK_THROWS_AS(EllipticIntegrand::capillary(4.0, 3), ConfigError);
  CHECK_THROWS_AS(EllipticIntegrand::capillary(0.0, 3), ConfigError);
  Mat bad(3, 3);
  bad << 1, 0, 0, 0, -1, 0, 0, 0, 1;
  CHECK_THROWS_AS(EllipticIntegrand::ellipsoid(bad), ConfigError);
  Mat asym(3, 3);
  asym << 1, 0.5, 0, 0, 1, 0, 0, 0, 1;
  CHECK_THROWS_AS(EllipticIntegrand::ellipsoid(asym), ConfigError);
  CHECK_THROWS_AS(EllipticIntegrand::pnorm(1.0, 1e-2, 3), ConfigError);
  CHECK_THROWS_AS(EllipticIntegrand::euclidean(4), ConfigError);
  const auto I = EllipticIntegrand::euclidean(3);
  CHECK_THROWS(I.eval_F(Vec::Zero(2)));
}

TEST_CASE("bounds: euclidean and capillary") {
  const auto b = estimate_bounds(EllipticIntegrand::euclidean(3), 2000);
  CHECK(b.m_F == doctest::Approx(1.0));
  CHECK(b.M_F == doctest::Approx(1.0));
  CHECK(b.lambda_F == doctest::Approx(1.0));
  CHECK(b.Lambda_F == doctest::Approx(1.0));
  const double theta = pi / 3;
  const auto c = EllipticIntegrand::capillary(theta, 3);
  const auto ex = analytic_extrema(c);
  REQUIRE(ex.has_value());
  CHECK(ex->first == doctest::Approx(1.0 - std::cos(theta)));
  CHECK(ex->second == doctest::Approx(1.0 + std::cos(theta)));
  const auto bc = estimate_bounds(c, 5000);
  CHECK(bc.m_F == doctest::Approx(ex->first).epsilon(1e-12));
  CHECK(bc.M_F == doctest::Approx(ex->second).epsilon(1e-12));
  CHECK_THROWS_AS(estimate_bounds(c, 10), PreconditionError);
}

TEST_CASE("bounds: ellipsoid extrema are root eigenvalues") {
  const Mat a = test_matrix();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es{Eigen::Matrix3d(a)};
  const auto I = EllipticIntegrand::ellipsoid(a);
  const auto ex = analytic_extrema(I);
  REQUIRE(ex.has_value());
  CHECK(ex->first == doctest::Approx(std::sqrt(es.eigenvalues()(0))).epsilon(1e-12));
  CHECK(ex->second == doctest::Approx(std::sqrt(es.eigenvalues()(2))).epsilon(1e-12));
  const auto b = estimate_bounds(I, 20000);
  CHECK(b.m_F >= ex->first - 1e-12);
  CHECK(b.M_F <= ex->second + 1e-12);
  CHECK(b.m_F == doctest::Approx(ex->first).epsilon(1e-3));
  CHECK(b.M_F == doctest::Approx(ex->second).epsilon(1e-3));
}

TEST_CASE("bounds are monotone in the sample count") {
  const auto I = EllipticIntegrand::pnorm(4.0, 1e-2, 3);
  double prev_m = 1e300;
  double prev_M = 0.0;
  for (int n : {200, 1000, 5000}) {
    const auto b = estimate_bounds(I, n);
    CHECK(b.m_F <= prev_m);
    CHECK(b.M_F >= prev_M);
    CHECK(b.lambda_F > 0.0);
    prev_m = b.m_F;
    prev_M = b.M_F;
  }
}

TEST_CASE("sphere samples are nested and unit") {
  const auto a = sphere_samples(3, 100);
  const auto b = sphere_samples(3, 40);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK((a[i] - b[i]).norm() == 0.0);
  for (const auto& p : a) CHECK(p.norm() == doctest::Approx(1.0));
}

TEST_CASE("normalize") {
  const auto c = EllipticIntegrand::capillary(pi / 4, 3);
  const auto nc = normalize(c);
  CHECK(nc.normalized());
  CHECK(nc.scale() == doctest::Approx(1.0 / (1.0 - std::cos(pi / 4))));
  const auto again = normalize(nc);
  CHECK(again.scale() == nc.scale());
  CHECK(estimate_bounds(nc, 2000).m_F == doctest::Approx(1.0));
  const auto e = normalize(EllipticIntegrand::euclidean(3));
  CHECK(e.scale() == 1.0);
}

TEST_CASE("free boundary slope") {
  for (double theta : {pi / 6, pi / 4, pi / 3, pi / 2, 2 * pi / 3}) {
    const auto I = EllipticIntegrand::capillary(theta, 3);
    Vec t(1);
    t << 0.0;
    CHECK(free_boundary_slope(I, t) == doctest::Approx(-1.0 / std::tan(theta)).epsilon(1e-12));
  }
  CHECK(free_boundary_slope(EllipticIntegrand::euclidean(2), Vec::Zero(0)) == doctest::Approx(0.0));
  for (const auto& I : builtins(2)) {
    CHECK(free_boundary_slope(I, Vec::Zero(0)) ==
          doctest::Approx(bisect_slope(I, Vec::Zero(0))).epsilon(1e-8));
  }
  for (const auto& I : builtins(3)) {
    Vec t(1);
    t << 0.4;
    CHECK(free_boundary_slope(I, t) == doctest::Approx(bisect_slope(I, t)).epsilon(1e-8));
  }
}

TEST_CASE("json round trip and errors") {
  const nlohmann::json j = {{"kind", "capillary"}, {"theta", 1.0}, {"dim", 3}};
  const auto I = integrand_from_json(j);
  const auto back = integrand_from_json(integrand_to_json(I));
  const Vec z = v3(0.3, -0.2, 1.0);
  CHECK(back.eval_F(z) == I.eval_F(z));
  const nlohmann::json e = {{"kind", "ellipsoid"}, {"A", {{2.0, 0, 0}, {0, 1.0, 0}, {0, 0, 1.0}}}};
  CHECK(integrand_from_json(e).eval_F(v3(1, 0, 0)) == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS(integrand_from_json({{"kind", "capillary"}, {"theta", 4.0}, {"dim", 3}}),
                  ConfigError);
  CHECK_THROWS_AS(integrand_from_json({{"kind", "nope"}, {"dim", 3}}), ConfigError);
  CHECK_THROWS_AS(integrand_from_json({{"kind", "capillary"}, {"dim", 3}}), ConfigError);
}
