#include "aniso/solver.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace aniso;

namespace {

constexpr double pi = std::numbers::pi;

std::shared_ptr<const Mesh> square_mesh(double h, double depth = 1.0, double width = 0.5) {
  HalfDomain d;
  d.n = 2;
  d.depth = depth;
  d.width = width;
  d.resolution = h;
  return std::make_shared<const Mesh>(build_mesh(d));
}

std::shared_ptr<const Mesh> line_mesh(double h, double depth = 1.0) {
  HalfDomain d;
  d.n = 1;
  d.depth = depth;
  d.resolution = h;
  return std::make_shared<const Mesh>(build_mesh(d));
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<double> curved_data(const Mesh& m) {
  return sample_vertices(m, [](const Vec& x) {
    return 0.3 * std::cos(0.5 * pi * x(0)) * std::sin(pi * x(1)) + 0.2 * x(1);
  });
}

}  // namespace

TEST_CASE("energy closed forms") {
  const auto m = square_mesh(0.25, 1.0, 1.0);
  const GraphFunction zero(m, std::vector<double>(static_cast<std::size_t>(m->num_vertices()), 0.0));
  CHECK(energy(EllipticIntegrand::euclidean(3), zero) == doctest::Approx(2.0));
  CHECK(energy(EllipticIntegrand::capillary(1.0, 3), zero) == doctest::Approx(2.0));
  const GraphFunction tilted(m, sample_vertices(*m, [](const Vec& x) { return x(1); }));
  CHECK(energy(EllipticIntegrand::euclidean(3), tilted) == doctest::Approx(2.0 * std::sqrt(2.0)));
}

TEST_CASE("graph function validation") {
  const auto m = square_mesh(0.25);
  CHECK_THROWS_AS(GraphFunction(m, std::vector<double>(3, 0.0)), PreconditionError);
  std::vector<double> v(static_cast<std::size_t>(m->num_vertices()), 0.0);
  v[1] = std::nan("");
  CHECK_THROWS_AS(GraphFunction(m, v), PreconditionError);
}

TEST_CASE("energy gradient matches directional finite differences") {
  const auto m = square_mesh(0.25);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.3);
  for (const auto& I : {EllipticIntegrand::euclidean(3), EllipticIntegrand::capillary(1.1, 3),
                        EllipticIntegrand::pnorm(3.0, 1e-2, 3)}) {
    std::vector<double> u(static_cast<std::size_t>(m->num_vertices()));
    std::vector<double> dir(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
      u[i] = g(rng);
      dir[i] = m->tag(static_cast<int>(i)) == Tag::Dirichlet ? 0.0 : g(rng);
    }
    const auto grad = energy_gradient(I, GraphFunction(m, u));
    double analytic = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) analytic += grad[i] * dir[i];
    const double step = 1e-5;
    auto up = u;
    auto um = u;
    for (std::size_t i = 0; i < u.size(); ++i) {
      up[i] += step * dir[i];
      um[i] -= step * dir[i];
    }
    const double fd = (energy(I, GraphFunction(m, up)) - energy(I, GraphFunction(m, um))) / (2 * step);
    CHECK(fd == doctest::Approx(analytic).epsilon(1e-7));
    for (int v = 0; v < m->num_vertices(); ++v) {
      if (m->tag(v) == Tag::Dirichlet) CHECK(grad[static_cast<std::size_t>(v)] == 0.0);
    }
  }
}

TEST_CASE("energy is convex along random segments") {
  const auto m = square_mesh(0.25);
  const auto I = EllipticIntegrand::pnorm(4.0, 1e-2, 3);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(static_cast<std::size_t>(m->num_vertices()));
    std::vector<double> b(a.size());
    std::vector<double> mix(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = g(rng);
      b[i] = g(rng);
    }
    const double t = (trial + 0.5) / 20.0;
    for (std::size_t i = 0; i < a.size(); ++i) mix[i] = t * a[i] + (1 - t) * b[i];
    CHECK(energy(I, GraphFunction(m, mix)) <=
          t * energy(I, GraphFunction(m, a)) + (1 - t) * energy(I, GraphFunction(m, b)) + 1e-12);
  }
}

TEST_CASE("euclidean affine data with zero normal slope is reproduced") {
  const auto m = square_mesh(0.125);
  const auto I = EllipticIntegrand::euclidean(3);
  const auto exact = sample_vertices(*m, [](const Vec& x) { return 0.7 * x(1) + 0.2; });
  const auto [u, rep] = solve(I, m, exact);
  CHECK(rep.converged);
  CHECK(rep.iterations <= 2);
  CHECK(max_abs_diff(u.values, exact) <= 1e-10);
  CHECK(rep.free_bc_residual <= 1e-10);
}

TEST_CASE("capillary affine solution and contact angle") {
  const double theta = pi / 3;
  const auto m = square_mesh(1.0 / 16);
  const auto I = EllipticIntegrand::capillary(theta, 3);
  const double a1 = -1.0 / std::tan(theta);
  const auto exact = sample_vertices(*m, [a1](const Vec& x) { return a1 * x(0); });
  const auto [u, rep] = solve(I, m, exact);
  REQUIRE(rep.converged);
  CHECK(max_abs_diff(u.values, exact) <= 1e-10);
  for (int f : m->wall_facets()) {
    const Vec du = u.cell_gradient(m->boundary_facets()[static_cast<std::size_t>(f)].cell);
    const double nu1 = -du(0) / std::sqrt(1.0 + du.squaredNorm());
    CHECK(std::abs(nu1 - std::cos(theta)) <= 2 * m->h());
  }
}

TEST_CASE("energy trace is nonincreasing and converged solve is stationary") {
  const auto m = square_mesh(0.125);
  const auto I = EllipticIntegrand::capillary(1.2, 3);
  const auto [u, rep] = solve(I, m, curved_data(*m));
  REQUIRE(rep.converged);
  for (std::size_t k = 1; k < rep.energy_trace.size(); ++k) {
    CHECK(rep.energy_trace[k] <= rep.energy_trace[k - 1] + 1e-14 * std::abs(rep.energy_trace[k - 1]));
  }
  CHECK(rep.final_residual_norm <= 1e-10);
  double worst = 0.0;
  for (double r : amse_residual(I, u)) worst = std::max(worst, std::abs(r));
  CHECK(worst <= 1e-8);
}

TEST_CASE("constant shift of the data shifts the solution") {
  const auto m = square_mesh(0.125);
  const auto I = EllipticIntegrand::pnorm(3.0, 1e-2, 3);
  auto data = curved_data(*m);
  const auto [u, rep] = solve(I, m, data);
  for (double& d : data) d += 2.5;
  const auto [w, rep2] = solve(I, m, data);
  REQUIRE(rep.converged);
  REQUIRE(rep2.converged);
  double dev = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) dev = std::max(dev, std::abs(w.values[i] - u.values[i] - 2.5));
  CHECK(dev <= 1e-10);
}

TEST_CASE("capillary and euclidean residuals coincide on a shared function") {
  const auto m = square_mesh(0.125);
  const GraphFunction u(m, curved_data(*m));
  const auto re = amse_residual(EllipticIntegrand::euclidean(3), u);
  const auto rc = amse_residual(EllipticIntegrand::capillary(0.8, 3), u);
  CHECK(max_abs_diff(re, rc) <= 1e-12);
}

TEST_CASE("one-dimensional solves are affine with the free boundary slope") {
  const auto m = line_mesh(1.0 / 32, 2.0);
  Mat a(2, 2);
  a << 1.5, 0.4, 0.4, 0.8;
  for (const auto& I : {EllipticIntegrand::euclidean(2), EllipticIntegrand::capillary(pi / 4, 2),
                        EllipticIntegrand::ellipsoid(a), EllipticIntegrand::pnorm(3.0, 1e-2, 2)}) {
    const auto data = sample_vertices(*m, [](const Vec&) { return 0.7; });
    const auto [u, rep] = solve(I, m, data);
    REQUIRE(rep.converged);
    const double slope = free_boundary_slope(I, Vec::Zero(0));
    for (int v = 0; v < m->num_vertices(); ++v) {
      CHECK(std::abs(u.values[static_cast<std::size_t>(v)] - (0.7 + slope * (m->vertex(v)(0) - 2.0))) <= 1e-10);
    }
  }
}

TEST_CASE("zero slope euclidean gradient vanishes everywhere") {
  const auto m = line_mesh(0.25);
  const GraphFunction u(m, std::vector<double>(static_cast<std::size_t>(m->num_vertices()), 1.0));
  for (double g : energy_gradient(EllipticIntegrand::euclidean(2), u)) CHECK(g == 0.0);
}

TEST_CASE("iteration cap yields a non-converged report") {
  const auto m = square_mesh(0.125);
  SolveConfig cfg;
  cfg.max_iter = 1;
  cfg.tol_residual = 1e-14;
  const auto [u, rep] = solve(EllipticIntegrand::euclidean(3), m, curved_data(*m), cfg);
  CHECK_FALSE(rep.converged);
  CHECK(rep.iterations == 1);
}

TEST_CASE("report json") {
  SolveReport r;
  r.iterations = 3;
  r.converged = true;
  const auto j = to_json(r);
  CHECK(j.at("iterations") == 3);
  CHECK(j.at("converged") == true);
}
