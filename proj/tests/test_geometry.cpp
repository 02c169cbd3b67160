#include "aniso/geometry.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace aniso;

namespace {

constexpr double pi = std::numbers::pi;

std::shared_ptr<const Mesh> square_mesh(double h, double depth = 1.0, double width = 1.0) {
  HalfDomain d;
  d.n = 2;
  d.depth = depth;
  d.width = width;
  d.resolution = h;
  return std::make_shared<const Mesh>(build_mesh(d));
}

GraphFunction from(const std::shared_ptr<const Mesh>& m, const std::function<double(const Vec&)>& g) {
  return {m, sample_vertices(*m, g)};
}

// Euclidean mean curvature of a graph, H = div(nu_F) with nu = (-Du, 1)/W.
double euclidean_H(double u1, double u2, double u11, double u12, double u22) {
  const double w2 = 1.0 + u1 * u1 + u2 * u2;
  return -((1 + u2 * u2) * u11 - 2 * u1 * u2 * u12 + (1 + u1 * u1) * u22) / std::pow(w2, 1.5);
}

}  // namespace

TEST_CASE("flat horizontal graph") {
  const auto m = square_mesh(0.25);
  const auto g = compute_geometry(EllipticIntegrand::euclidean(3), from(m, [](const Vec&) { return 0.3; }));
  for (const auto& c : g.cells()) {
    CHECK(c.W == 1.0);
    CHECK(c.W_f == doctest::Approx(1.0));
    CHECK((c.nu - unit_vector(3, 2)).norm() == 0.0);
  }
  for (const auto& v : g.vertices()) {
    REQUIRE(v.valid);
    CHECK(std::abs(v.H_F) <= 1e-12);
    CHECK(v.h.norm() <= 1e-12);
  }
  for (const auto& w : wall_frame(g)) {
    CHECK((w.mu + unit_vector(3, 0)).norm() <= 1e-15);
    CHECK((w.mu_F - w.mu).norm() <= 1e-15);
  }
}

TEST_CASE("capillary flat solution") {
  for (double theta : {pi / 6, pi / 3, pi / 2, 2 * pi / 3}) {
    const auto m = square_mesh(0.25);
    const double a1 = -1.0 / std::tan(theta);
    const auto g = compute_geometry(EllipticIntegrand::capillary(theta, 3),
                                    from(m, [a1](const Vec& x) { return a1 * x(0); }));
    for (const auto& c : g.cells()) {
      CHECK(c.W == doctest::Approx(1.0 / std::sin(theta)).epsilon(1e-13));
      CHECK(c.W_f == doctest::Approx(std::sin(theta)).epsilon(1e-13));
      CHECK(std::abs(c.nu_F(0)) <= 1e-13);
    }
    for (const auto& w : wall_frame(g)) {
      CHECK(-w.mu_F(0) == doctest::Approx(std::sin(theta)).epsilon(1e-13));
      CHECK(std::abs(w.mu_F.dot(w.nu_bar)) <= 1e-13);
    }
  }
}

TEST_CASE("per-cell identities and frame relations on a curved graph") {
  const auto m = square_mesh(0.125);
  Mat a(3, 3);
  a << 1.5, 0.2, 0.1, 0.2, 1.0, 0.0, 0.1, 0.0, 0.8;
  const auto u = from(m, [](const Vec& x) { return 0.4 * std::sin(2 * x(0)) * std::cos(x(1)) + 0.3 * x(1); });
  for (const auto& I : {EllipticIntegrand::euclidean(3), EllipticIntegrand::capillary(1.0, 3),
                        EllipticIntegrand::ellipsoid(a), EllipticIntegrand::pnorm(3.0, 1e-2, 3)}) {
    const auto g = compute_geometry(I, u);
    for (const auto& c : g.cells()) {
      CHECK(std::abs(c.W_f - c.F_nu * c.W) <= 1e-12);
      CHECK(c.nu.norm() == doctest::Approx(1.0));
      CHECK(c.nu(2) == doctest::Approx(1.0 / c.W));
    }
    const Vec e1 = unit_vector(3, 0);
    for (const auto& w : wall_frame(g)) {
      const CellGeometry& c = g.cell(w.cell);
      CHECK(w.mu.norm() == doctest::Approx(1.0));
      CHECK(std::abs(w.mu.dot(c.nu)) <= 1e-14);
      CHECK(std::abs(w.mu.dot(w.tau)) <= 1e-14);
      CHECK(w.mu(0) < 0.0);
      CHECK(w.nu_bar.norm() == doctest::Approx(1.0));
      CHECK(w.nu_bar(0) == 0.0);
      const Vec rebuilt = -c.nu.dot(-e1) * w.nu_bar + w.mu.dot(-e1) * (-e1);
      CHECK((w.mu - rebuilt).norm() <= 1e-10);
      CHECK(std::abs(w.mu_F.dot(w.nu_bar) + c.nu_F.dot(-e1)) <= 1e-10);
      CHECK(std::abs(w.mu_F.dot(-e1) - c.nu_F.dot(w.nu_bar)) <= 1e-10);
    }
  }
}

TEST_CASE("quadratic fit is exact and curvature matches the closed form") {
  const auto m = square_mesh(0.125);
  const double c1 = 0.2, c2 = -0.1, q11 = 0.6, q12 = 0.25, q22 = -0.4;
  const auto u = from(m, [&](const Vec& x) {
    return c1 * x(0) + c2 * x(1) + 0.5 * q11 * x(0) * x(0) + q12 * x(0) * x(1) + 0.5 * q22 * x(1) * x(1);
  });
  const auto g = compute_geometry(EllipticIntegrand::euclidean(3), u);
  for (int v = 0; v < m->num_vertices(); ++v) {
    const auto& vg = g.vertices()[static_cast<std::size_t>(v)];
    REQUIRE(vg.valid);
    const Vec& x = m->vertex(v);
    const double u1 = c1 + q11 * x(0) + q12 * x(1);
    const double u2 = c2 + q12 * x(0) + q22 * x(1);
    CHECK(vg.du(0) == doctest::Approx(u1).epsilon(1e-9));
    CHECK(vg.du(1) == doctest::Approx(u2).epsilon(1e-9));
    CHECK(vg.hess_u(0, 0) == doctest::Approx(q11).epsilon(1e-8));
    CHECK(vg.hess_u(0, 1) == doctest::Approx(q12).epsilon(1e-8));
    CHECK(vg.hess_u(1, 1) == doctest::Approx(q22).epsilon(1e-8));
    CHECK(vg.H_F == doctest::Approx(euclidean_H(u1, u2, q11, q12, q22)).epsilon(1e-8));
    // Euclidean: h_F = h, so tr(A h^2) = |h|^2.
    CHECK(vg.tr_AF_h2 == doctest::Approx(vg.h_norm2).epsilon(1e-10));
  }
}

TEST_CASE("anisotropic mean curvature equals -f_ij u_ij") {
  const auto m = square_mesh(0.125);
  const auto I = EllipticIntegrand::pnorm(3.0, 1e-2, 3);
  const auto u = from(m, [](const Vec& x) { return 0.3 * x(0) * x(0) - 0.2 * x(0) * x(1) + 0.1 * x(1); });
  const auto g = compute_geometry(I, u);
  for (const auto& vg : g.vertices()) {
    REQUIRE(vg.valid);
    const Mat fh = I.hess_f(vg.du);
    const double expected = -(fh.cwiseProduct(vg.hess_u)).sum();
    CHECK(vg.H_F == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("surface gradient") {
  const auto m = square_mesh(0.25);
  const auto I = EllipticIntegrand::euclidean(3);
  const auto flat = compute_geometry(I, from(m, [](const Vec&) { return 0.0; }));
  const auto phi = sample_vertices(*m, [](const Vec& x) { return 2 * x(0) - x(1); });
  for (const auto& s : surface_gradient(flat, phi)) {
    CHECK(s.grad(0) == doctest::Approx(2.0));
    CHECK(s.grad(1) == doctest::Approx(-1.0));
    CHECK(s.grad(2) == 0.0);
    CHECK((s.grad_F - s.grad).norm() <= 1e-14);
  }
  const auto u = from(m, [](const Vec& x) { return 0.5 * x(0) * x(0) + 0.3 * x(1); });
  const auto g = compute_geometry(EllipticIntegrand::capillary(1.2, 3), u);
  const auto grads = surface_gradient(g, u.values);
  const auto b = estimate_bounds(g.integrand(), 2000);
  for (int c = 0; c < m->num_cells(); ++c) {
    const auto& cg = g.cell(c);
    const auto& s = grads[static_cast<std::size_t>(c)];
    CHECK(s.grad.squaredNorm() == doctest::Approx(cg.du.squaredNorm() / (cg.W * cg.W)));
    CHECK(std::abs(s.grad.dot(cg.nu)) <= 1e-14);
    const double pairing = s.grad.dot(s.grad_F);
    CHECK(pairing <= b.Lambda_F * cg.du.squaredNorm() * (1 + 1e-12));
    CHECK(pairing >= b.lambda_F * cg.du.squaredNorm() / (cg.W * cg.W) * (1 - 1e-12));
  }
  const std::vector<double> constant(static_cast<std::size_t>(m->num_vertices()), 4.0);
  for (const auto& s : surface_gradient(g, constant)) CHECK(s.grad.norm() == 0.0);
}

TEST_CASE("weighted divergence form") {
  const auto m = square_mesh(1.0 / 16);
  const auto flat = compute_geometry(EllipticIntegrand::euclidean(3), from(m, [](const Vec&) { return 0.0; }));
  const auto psi = sample_vertices(*m, [](const Vec& x) {
    const double r2 = (x(0) - 0.5) * (x(0) - 0.5) + x(1) * x(1);
    return r2 < 0.16 ? std::pow(0.16 - r2, 2) : 0.0;
  });
  const auto phi = sample_vertices(*m, [](const Vec& x) { return x(1) * x(1); });
  // Closed form: -int <D psi, 2 x2 e2> = int psi * 2 over the disc.
  const double exact = 2.0 * pi * std::pow(0.16, 3) / 3.0;
  CHECK(weighted_divergence_form(flat, phi, psi) == doctest::Approx(exact).epsilon(2e-2));
  const std::vector<double> constant(static_cast<std::size_t>(m->num_vertices()), 1.0);
  CHECK(weighted_divergence_form(flat, constant, psi) == 0.0);
  auto negative = psi;
  negative[static_cast<std::size_t>(m->grid_index(5, 5))] = -1.0;
  CHECK_THROWS_AS(weighted_divergence_form(flat, phi, negative), PreconditionError);
  auto touching = psi;
  touching[static_cast<std::size_t>(m->grid_index(m->cells_x(), 3))] = 1.0;
  CHECK_THROWS_AS(weighted_divergence_form(flat, phi, touching), PreconditionError);
  CHECK(weighted_quadratic_form(flat, phi, psi) >= 0.0);
}

TEST_CASE("first variation on a flat graph with a tangential field") {
  const auto m = square_mesh(1.0 / 16);
  const auto g = compute_geometry(EllipticIntegrand::euclidean(3), from(m, [](const Vec&) { return 0.0; }));
  // X = phi(x) e1 with phi smooth and supported in a half disc at the wall.
  const auto bump = [](const Vec& p) {
    const double r2 = p(0) * p(0) + p(1) * p(1) + p(2) * p(2);
    return r2 < 0.25 ? std::pow(0.25 - r2, 3) : 0.0;
  };
  const auto dbump = [](const Vec& p) {
    const double r2 = p.squaredNorm();
    Vec d = Vec::Zero(3);
    if (r2 < 0.25) d = -6.0 * std::pow(0.25 - r2, 2) * p;
    return d;
  };
  VectorField field{[&](const Vec& p) { return Vec(bump(p) * unit_vector(3, 0)); },
                    [&](const Vec& p) {
                      Mat j = Mat::Zero(3, 3);
                      j.row(0) = dbump(p).transpose();
                      return j;
                    }};
  const auto t = first_variation_terms(g, field);
  // Divergence theorem: int d1 phi = -wall integral of phi.
  CHECK(t.boundary < 0.0);
  CHECK(t.curvature == 0.0);
  CHECK(std::abs(t.mismatch()) <= 1e-3 * std::abs(t.boundary));
}

TEST_CASE("principal direction and csv") {
  const auto m = square_mesh(0.25);
  const auto g = compute_geometry(EllipticIntegrand::euclidean(3), from(m, [](const Vec& x) { return 0.1 * x(1); }));
  for (double r : wall_principal_direction_residuals(g)) CHECK(std::abs(r) <= 1e-12);
  std::ostringstream a;
  std::ostringstream b;
  write_geometry_csv(g, a);
  write_wall_csv(g, b);
  CHECK(a.str().rfind("id,x1,x2,u,W,W_f,H_F,h_norm2,fit_valid\n", 0) == 0);
  CHECK(b.str().rfind("facet,cell,nu_F_dot_e1,mu_F_dot_minus_e1\n", 0) == 0);
}
