#include "aniso/geometry.hpp"
#include "aniso/io.hpp"
#include "aniso/parallel.hpp"

#include <Eigen/QR>

#include <cmath>
#include <ostream>
#include <set>

namespace aniso {

namespace {

// Columns X_i = e_i + u_i e_{n+1}.
Mat tangent_frame(const Vec& du) {
  const int n = static_cast<int>(du.size());
  Mat x = Mat::Zero(n + 1, n);
  for (int i = 0; i < n; ++i) {
    x(i, i) = 1.0;
    x(n, i) = du(i);
  }
  return x;
}

Vec normal_of(const Vec& du) {
  const int n = static_cast<int>(du.size());
  Vec nu(n + 1);
  nu.head(n) = -du;
  nu(n) = 1.0;
  return nu / nu.norm();
}

CellGeometry cell_geometry(const EllipticIntegrand& integrand, const Vec& du, double flat_area) {
  CellGeometry g;
  const int n = static_cast<int>(du.size());
  g.du = du;
  g.W = std::sqrt(1.0 + du.squaredNorm());
  g.nu = normal_of(du);
  g.nu_F = integrand.grad_F(g.nu);
  g.F_nu = integrand.eval_F(g.nu);
  g.W_f = integrand.eval_f(du);
  g.metric = Mat::Identity(n, n) + du * du.transpose();
  g.A_F = integrand.hess_F(g.nu);
  g.area = flat_area * g.W;
  return g;
}

std::vector<int> two_ring(const Mesh& mesh, int v) {
  std::set<int> ring;
  for (int a : mesh.vertex_neighbors()[static_cast<std::size_t>(v)]) {
    ring.insert(a);
    for (int b : mesh.vertex_neighbors()[static_cast<std::size_t>(a)]) ring.insert(b);
  }
  ring.erase(v);
  return {ring.begin(), ring.end()};
}

VertexGeometry vertex_geometry(const EllipticIntegrand& integrand, const GraphFunction& u, int v) {
  const Mesh& mesh = u.grid();
  const int n = mesh.n();
  const int n_coef = n == 1 ? 2 : 5;
  const std::vector<int> ring = two_ring(mesh, v);
  VertexGeometry out;
  if (static_cast<int>(ring.size()) < n_coef) return out;
  const double h = mesh.h();
  const Vec& x0 = mesh.vertex(v);
  const double u0 = u.values[static_cast<std::size_t>(v)];
  // Unknowns scaled by h: [h g, h^2 H] keeps the columns O(1).
  Eigen::MatrixXd design(ring.size(), n_coef);
  Eigen::VectorXd rhs(ring.size());
  for (std::size_t k = 0; k < ring.size(); ++k) {
    const Vec d = (mesh.vertex(ring[k]) - x0) / h;
    if (n == 1) {
      design.row(static_cast<Eigen::Index>(k)) << d(0), 0.5 * d(0) * d(0);
    } else {
      design.row(static_cast<Eigen::Index>(k)) << d(0), d(1), 0.5 * d(0) * d(0), d(0) * d(1),
          0.5 * d(1) * d(1);
    }
    rhs(static_cast<Eigen::Index>(k)) = u.values[static_cast<std::size_t>(ring[k])] - u0;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < n_coef) return out;
  const Eigen::VectorXd coef = qr.solve(rhs);

  out.du.resize(n);
  out.hess_u.resize(n, n);
  if (n == 1) {
    out.du(0) = coef(0) / h;
    out.hess_u(0, 0) = coef(1) / (h * h);
  } else {
    out.du << coef(0) / h, coef(1) / h;
    out.hess_u << coef(2), coef(3), coef(3), coef(4);
    out.hess_u /= h * h;
  }
  const double W = std::sqrt(1.0 + out.du.squaredNorm());
  const Vec nu = normal_of(out.du);
  const Mat frame = tangent_frame(out.du);
  const Mat a_coord = frame.transpose() * integrand.hess_F(nu) * frame;
  out.metric = Mat::Identity(n, n) + out.du * out.du.transpose();
  const Mat ginv = out.metric.inverse();
  out.h = -out.hess_u / W;
  out.h_F = out.h * ginv * a_coord;
  out.H_F = (ginv * out.h_F).trace();
  out.h_norm2 = (ginv * out.h * ginv * out.h).trace();
  out.tr_AF_h2 = (ginv * a_coord * ginv * out.h * ginv * out.h).trace();
  out.valid = true;
  return out;
}

WallFrame wall_frame_of(const Mesh& mesh, const CellGeometry& cg, int facet_index) {
  const Facet& facet = mesh.boundary_facets()[static_cast<std::size_t>(facet_index)];
  const int n = mesh.n();
  WallFrame w;
  w.facet = facet_index;
  w.cell = facet.cell;
  const Mat frame = tangent_frame(cg.du);
  const Vec x1 = frame.col(0);
  if (n == 1) {
    w.mu = -x1 / x1.norm();
    w.nu_bar = unit_vector(2, 1);
    w.tau = Vec::Zero(2);
    w.measure = 1.0;
  } else {
    const double len = mesh.facet_measure(facet);
    if (!(len > 0.0)) throw DomainError("degenerate wall facet");
    Vec tau = frame.col(1);
    w.measure = len * tau.norm();
    tau /= tau.norm();
    Vec mu = -(x1 - x1.dot(tau) * tau);
    w.mu = mu / mu.norm();
    w.tau = tau;
    Vec nb(3);
    nb << 0.0, -cg.du(1), 1.0;
    w.nu_bar = nb / nb.norm();
  }
  w.mu_F = cg.F_nu * w.mu - cg.nu_F.dot(w.mu) * cg.nu;
  return w;
}

}  // namespace

GraphGeometry::GraphGeometry(EllipticIntegrand integrand, GraphFunction u,
                             std::vector<CellGeometry> cells, std::vector<VertexGeometry> vertices,
                             std::vector<WallFrame> wall)
    : integrand_(std::move(integrand)),
      u_(std::move(u)),
      cells_(std::move(cells)),
      vertices_(std::move(vertices)),
      wall_(std::move(wall)) {}

std::vector<double> GraphGeometry::vertex_average(
    const std::function<double(const CellGeometry&)>& field) const {
  const Mesh& m = mesh();
  std::vector<double> out(static_cast<std::size_t>(m.num_vertices()), 0.0);
  for (int v = 0; v < m.num_vertices(); ++v) {
    double sum = 0.0;
    double weight = 0.0;
    for (int c : m.vertex_cells()[static_cast<std::size_t>(v)]) {
      sum += m.cell_measure(c) * field(cell(c));
      weight += m.cell_measure(c);
    }
    out[static_cast<std::size_t>(v)] = sum / weight;
  }
  return out;
}

std::vector<double> GraphGeometry::vertex_W_f() const {
  std::vector<double> out = vertex_average([](const CellGeometry& g) { return g.W_f; });
  for (std::size_t v = 0; v < out.size(); ++v) {
    if (vertices_[v].valid) out[v] = integrand_.eval_f(vertices_[v].du);
  }
  return out;
}

Vec GraphGeometry::lift_tangent(const Vec& du, const Vec& coords) const {
  return tangent_frame(du) * coords;
}

GraphGeometry compute_geometry(const EllipticIntegrand& integrand, const GraphFunction& u) {
  const Mesh& mesh = u.grid();
  if (integrand.graph_dim() != mesh.n()) {
    throw PreconditionError("integrand dimension does not match the mesh");
  }
  std::vector<CellGeometry> cells(static_cast<std::size_t>(mesh.num_cells()));
  parallel_for(mesh.num_cells(), [&](int begin, int end) {
    for (int c = begin; c < end; ++c) {
      cells[static_cast<std::size_t>(c)] = cell_geometry(integrand, u.cell_gradient(c), mesh.cell_measure(c));
    }
  });
  std::vector<VertexGeometry> vertices(static_cast<std::size_t>(mesh.num_vertices()));
  parallel_for(mesh.num_vertices(), [&](int begin, int end) {
    for (int v = begin; v < end; ++v) vertices[static_cast<std::size_t>(v)] = vertex_geometry(integrand, u, v);
  });
  std::vector<WallFrame> wall;
  for (int f : mesh.wall_facets()) {
    const Facet& facet = mesh.boundary_facets()[static_cast<std::size_t>(f)];
    wall.push_back(wall_frame_of(mesh, cells[static_cast<std::size_t>(facet.cell)], f));
  }
  return {integrand, u, std::move(cells), std::move(vertices), std::move(wall)};
}

const std::vector<WallFrame>& wall_frame(const GraphGeometry& geom) {
  if (geom.wall().empty()) throw PreconditionError("mesh has no wall facets");
  return geom.wall();
}

bool in_dirichlet_collar(const Mesh& mesh, const Vec& x, double width) {
  return distance_to_dirichlet(mesh, x) < width - 1e-12;
}

std::vector<SurfaceGradient> surface_gradient(const GraphGeometry& geom,
                                              const std::vector<double>& phi) {
  const Mesh& mesh = geom.mesh();
  if (static_cast<int>(phi.size()) != mesh.num_vertices()) {
    throw PreconditionError("vertex function length mismatch");
  }
  const GraphFunction phi_fn(geom.u().mesh, phi);
  std::vector<SurfaceGradient> out(static_cast<std::size_t>(mesh.num_cells()));
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const CellGeometry& cg = geom.cell(c);
    const Vec dphi = phi_fn.cell_gradient(c);
    const Vec coords = cg.metric.ldlt().solve(dphi);
    SurfaceGradient& s = out[static_cast<std::size_t>(c)];
    s.grad = geom.lift_tangent(cg.du, coords);
    s.grad_F = cg.A_F * s.grad;
  }
  return out;
}

namespace {

void check_test_function(const Mesh& mesh, const std::vector<double>& psi) {
  if (static_cast<int>(psi.size()) != mesh.num_vertices()) {
    throw PreconditionError("test function length mismatch");
  }
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const double value = psi[static_cast<std::size_t>(v)];
    if (value < 0.0) throw PreconditionError("test function must be nonnegative");
    if (mesh.tag(v) == Tag::Dirichlet && value != 0.0) {
      throw PreconditionError("test function must vanish on the Dirichlet boundary");
    }
  }
}

}  // namespace

double weighted_divergence_form(const GraphGeometry& geom, const std::vector<double>& phi,
                                const std::vector<double>& psi) {
  const Mesh& mesh = geom.mesh();
  check_test_function(mesh, psi);
  const auto grad_phi = surface_gradient(geom, phi);
  const auto grad_psi = surface_gradient(geom, psi);
  double total = 0.0;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const CellGeometry& cg = geom.cell(c);
    const auto i = static_cast<std::size_t>(c);
    total -= cg.area * cg.F_nu * cg.F_nu * grad_psi[i].grad.dot(grad_phi[i].grad_F);
  }
  return total;
}

double weighted_quadratic_form(const GraphGeometry& geom, const std::vector<double>& phi,
                               const std::vector<double>& psi) {
  const Mesh& mesh = geom.mesh();
  check_test_function(mesh, psi);
  const auto grad_phi = surface_gradient(geom, phi);
  double total = 0.0;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const CellGeometry& cg = geom.cell(c);
    const auto& cell = mesh.cells()[static_cast<std::size_t>(c)];
    double psi_mean = 0.0;
    for (int a = 0; a <= mesh.n(); ++a) psi_mean += psi[static_cast<std::size_t>(cell[static_cast<std::size_t>(a)])];
    psi_mean /= mesh.n() + 1;
    const auto& g = grad_phi[static_cast<std::size_t>(c)];
    total += cg.area * psi_mean * cg.F_nu * cg.F_nu * g.grad.dot(g.grad_F);
  }
  return total;
}

FirstVariationTerms first_variation_terms(const GraphGeometry& geom, const VectorField& field) {
  const Mesh& mesh = geom.mesh();
  const int n = mesh.n();
  const auto& u = geom.u().values;
  // Barycentric quadrature exact for degree 5: the seven-point Radon rule on
  // triangles, three-point Gauss on segments.
  std::vector<std::array<double, 3>> bary;
  std::vector<double> weights;
  const double r15 = std::sqrt(15.0);
  const double gauss = std::sqrt(0.15);
  if (n == 2) {
    const double a1 = (6.0 - r15) / 21.0, b1 = (9.0 + 2.0 * r15) / 21.0;
    const double a2 = (6.0 + r15) / 21.0, b2 = (9.0 - 2.0 * r15) / 21.0;
    const double w1 = (155.0 - r15) / 1200.0, w2 = (155.0 + r15) / 1200.0;
    bary = {{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}, {a1, a1, b1}, {a1, b1, a1}, {b1, a1, a1},
            {a2, a2, b2}, {a2, b2, a2}, {b2, a2, a2}};
    weights = {9.0 / 40.0, w1, w1, w1, w2, w2, w2};
  } else {
    bary = {{0.5 - gauss, 0.5 + gauss, 0.0}, {0.5, 0.5, 0.0}, {0.5 + gauss, 0.5 - gauss, 0.0}};
    weights = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
  }
  FirstVariationTerms terms;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const CellGeometry& cg = geom.cell(c);
    const auto& cell = mesh.cells()[static_cast<std::size_t>(c)];
    for (std::size_t q = 0; q < weights.size(); ++q) {
      Vec p = Vec::Zero(n + 1);
      double hf = 0.0;
      for (int a = 0; a <= n; ++a) {
        const int v = cell[static_cast<std::size_t>(a)];
        const double lam = bary[q][static_cast<std::size_t>(a)];
        p.head(n) += lam * mesh.vertex(v);
        p(n) += lam * u[static_cast<std::size_t>(v)];
        const VertexGeometry& vg = geom.vertices()[static_cast<std::size_t>(v)];
        hf += lam * (vg.valid ? vg.H_F : 0.0);
      }
      const Vec x = field.value(p);
      const Mat jac = field.jacobian(p);
      const double div = jac.trace();
      const double w = weights[q] * cg.area;
      terms.divergence += w * (cg.F_nu * div - cg.nu.dot(jac * cg.nu_F));
      terms.curvature += w * hf * x.dot(cg.nu);
    }
  }
  for (const WallFrame& wf : geom.wall()) {
    const Facet& facet = mesh.boundary_facets()[static_cast<std::size_t>(wf.facet)];
    if (n == 1) {
      Vec p(2);
      p << mesh.vertex(facet.vertices[0])(0), u[static_cast<std::size_t>(facet.vertices[0])];
      terms.boundary += field.value(p).dot(wf.mu_F);
    } else {
      const std::array<double, 3> nodes{0.5 - gauss, 0.5, 0.5 + gauss};
      const std::array<double, 3> seg_weights{5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
      for (std::size_t q = 0; q < 3; ++q) {
        const double s = nodes[q];
        Vec p(3);
        const int a = facet.vertices[0];
        const int b = facet.vertices[1];
        p.head(2) = (1.0 - s) * mesh.vertex(a) + s * mesh.vertex(b);
        p(2) = (1.0 - s) * u[static_cast<std::size_t>(a)] + s * u[static_cast<std::size_t>(b)];
        terms.boundary += seg_weights[q] * wf.measure * field.value(p).dot(wf.mu_F);
      }
    }
  }
  return terms;
}

std::vector<double> wall_principal_direction_residuals(const GraphGeometry& geom) {
  const Mesh& mesh = geom.mesh();
  std::vector<double> out;
  if (mesh.n() != 2) return out;
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    if (mesh.tag(v) != Tag::Free) continue;
    const VertexGeometry& vg = geom.vertices()[static_cast<std::size_t>(v)];
    if (!vg.valid) continue;
    const Mat frame = tangent_frame(vg.du);
    Vec tau = frame.col(1);
    tau /= tau.norm();
    const Vec x1 = frame.col(0);
    Vec mu = -(x1 - x1.dot(tau) * tau);
    mu /= mu.norm();
    const Mat ginv = vg.metric.inverse();
    const Vec c_mu = ginv * (frame.transpose() * mu);
    const Vec c_tau = ginv * (frame.transpose() * tau);
    out.push_back(c_mu.dot(vg.h_F * c_tau));
  }
  return out;
}

void write_geometry_csv(const GraphGeometry& geom, std::ostream& out) {
  const Mesh& mesh = geom.mesh();
  const auto w = geom.vertex_average([](const CellGeometry& g) { return g.W; });
  const auto wf = geom.vertex_W_f();
  out << (mesh.n() == 1 ? "id,x1" : "id,x1,x2") << ",u,W,W_f,H_F,h_norm2,fit_valid\n";
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const auto i = static_cast<std::size_t>(v);
    const VertexGeometry& vg = geom.vertices()[i];
    out << v;
    for (int k = 0; k < mesh.n(); ++k) out << ',' << format_double(mesh.vertex(v)(k));
    out << ',' << format_double(geom.u().values[i]) << ',' << format_double(w[i]) << ','
        << format_double(wf[i]) << ',' << format_double(vg.valid ? vg.H_F : 0.0) << ','
        << format_double(vg.valid ? vg.h_norm2 : 0.0) << ',' << (vg.valid ? 1 : 0) << '\n';
  }
}

void write_wall_csv(const GraphGeometry& geom, std::ostream& out) {
  out << "facet,cell,nu_F_dot_e1,mu_F_dot_minus_e1\n";
  for (const WallFrame& wf : geom.wall()) {
    const CellGeometry& cg = geom.cell(wf.cell);
    out << wf.facet << ',' << wf.cell << ',' << format_double(cg.nu_F(0)) << ','
        << format_double(-wf.mu_F(0)) << '\n';
  }
}

}  // namespace aniso
