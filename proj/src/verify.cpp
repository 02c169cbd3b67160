#include "aniso/verify.hpp"
#include "aniso/io.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>

namespace aniso {

std::string to_string(Status s) {
  switch (s) {
    case Status::Pass:
      return "pass";
    case Status::Fail:
      return "fail";
    case Status::Informational:
      return "informational";
  }
  return "?";
}

nlohmann::json to_json(const CheckReport& r) {
  nlohmann::json j;
  j["check"] = r.name;
  j["status"] = to_string(r.status);
  j["worst_residual"] = r.worst_residual;
  j["tolerance"] = r.tolerance;
  j["refinement_rate"] = r.refinement_rate ? nlohmann::json(*r.refinement_rate) : nlohmann::json(nullptr);
  j["metadata"] = r.metadata;
  j["details"] = r.details;
  return j;
}

void write_reports_jsonl(const std::vector<CheckReport>& reports, std::ostream& out) {
  for (const auto& r : reports) out << to_json(r).dump() << '\n';
}

void write_summary_csv(const std::vector<CheckReport>& reports, std::ostream& out) {
  out << "check,status,residual,tolerance,rate\n";
  for (const auto& r : reports) {
    out << r.name << ',' << to_string(r.status) << ',' << format_double(r.worst_residual) << ','
        << format_double(r.tolerance) << ',' << (r.refinement_rate ? format_double(*r.refinement_rate) : "")
        << '\n';
  }
}

nlohmann::json tolerances_to_json(const Tolerances& t) {
  return {{"identity", t.identity},
          {"frame", t.frame},
          {"flat", t.flat},
          {"boundary_tangency_C", t.boundary_tangency_C},
          {"wall_condition_C", t.wall_condition_C},
          {"mean_curvature_C", t.mean_curvature_C},
          {"first_variation_C", t.first_variation_C},
          {"principal_direction_C", t.principal_direction_C},
          {"mu_F_lower_bound_C", t.mu_F_lower_bound_C},
          {"subharmonicity_C", t.subharmonicity_C},
          {"amse_residual", t.amse_residual},
          {"free_bc_C", t.free_bc_C}};
}

Tolerances tolerances_from_json(const nlohmann::json& j, Tolerances base) {
  if (!j.is_object()) throw ConfigError("tolerances must be a JSON object");
  const std::vector<std::pair<std::string, double*>> fields{
      {"identity", &base.identity},
      {"frame", &base.frame},
      {"flat", &base.flat},
      {"boundary_tangency_C", &base.boundary_tangency_C},
      {"wall_condition_C", &base.wall_condition_C},
      {"mean_curvature_C", &base.mean_curvature_C},
      {"first_variation_C", &base.first_variation_C},
      {"principal_direction_C", &base.principal_direction_C},
      {"mu_F_lower_bound_C", &base.mu_F_lower_bound_C},
      {"subharmonicity_C", &base.subharmonicity_C},
      {"amse_residual", &base.amse_residual},
      {"free_bc_C", &base.free_bc_C}};
  for (const auto& [key, value] : j.items()) {
    const auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.first == key; });
    if (it == fields.end()) throw ConfigError("unknown tolerance '" + key + "'");
    if (!value.is_number() || !(value.get<double>() > 0.0)) {
      throw ConfigError("tolerance '" + key + "' must be a positive number");
    }
    *it->second = value.get<double>();
  }
  return base;
}

nlohmann::json geometry_metadata(const GraphGeometry& geom) {
  const Mesh& m = geom.mesh();
  return {{"h", m.h()},
          {"n", m.n()},
          {"cells", m.num_cells()},
          {"vertices", m.num_vertices()},
          {"integrand", geom.integrand().label()}};
}

namespace {

CheckReport graded(std::string name, const GraphGeometry& geom, double residual, double tolerance) {
  CheckReport r;
  r.name = std::move(name);
  r.worst_residual = residual;
  r.tolerance = tolerance;
  r.status = residual <= tolerance ? Status::Pass : Status::Fail;
  r.metadata = geometry_metadata(geom);
  return r;
}

std::pair<double, double> extrema(const EllipticIntegrand& I, bool* analytic) {
  if (auto ex = analytic_extrema(I)) {
    *analytic = true;
    return *ex;
  }
  *analytic = false;
  const auto b = estimate_bounds(I, 20000);
  return {b.m_F, b.M_F};
}

// Polynomial cutoff q^k e with q = (1 - p1/L1) prod_{i>1} (1 - (p_i/L2)^2), which
// vanishes on the Dirichlet boundary.
VectorField cutoff_field(const HalfDomain& d, int power, const Vec& direction) {
  const int n = d.n;
  auto factors = [=](const Vec& p, Vec& dq) {
    Vec q(n);
    q(0) = 1.0 - p(0) / d.depth;
    dq = Vec::Zero(n);
    dq(0) = -1.0 / d.depth;
    for (int i = 1; i < n; ++i) {
      q(i) = 1.0 - p(i) * p(i) / (d.width * d.width);
      dq(i) = -2.0 * p(i) / (d.width * d.width);
    }
    return q;
  };
  VectorField f;
  f.value = [=](const Vec& p) {
    Vec dq;
    const double q = factors(p, dq).prod();
    return Vec(std::pow(q, power) * direction);
  };
  f.jacobian = [=](const Vec& p) {
    Vec dq;
    const Vec qs = factors(p, dq);
    const double q = qs.prod();
    Vec grad = Vec::Zero(n + 1);
    for (int i = 0; i < n; ++i) {
      double rest = 1.0;
      for (int k = 0; k < n; ++k) {
        if (k != i) rest *= qs(k);
      }
      grad(i) = power * std::pow(q, power - 1) * rest * dq(i);
    }
    return Mat(direction * grad.transpose());
  };
  return f;
}

Vec lifted_barycenter(const GraphGeometry& geom, int c) {
  const Mesh& m = geom.mesh();
  const auto& cell = m.cells()[static_cast<std::size_t>(c)];
  Vec p = Vec::Zero(m.n() + 1);
  for (int a = 0; a <= m.n(); ++a) {
    const int v = cell[static_cast<std::size_t>(a)];
    p.head(m.n()) += m.vertex(v);
    p(m.n()) += geom.u().values[static_cast<std::size_t>(v)];
  }
  return p / (m.n() + 1);
}

Vec lifted_vertex(const GraphGeometry& geom, int v) {
  const Mesh& m = geom.mesh();
  Vec p(m.n() + 1);
  p.head(m.n()) = m.vertex(v);
  p(m.n()) = geom.u().values[static_cast<std::size_t>(v)];
  return p;
}

}  // namespace

CheckReport check_identities(const GraphGeometry& geom, const Tolerances& tol) {
  bool analytic = false;
  const auto [m_F, M_F] = extrema(geom.integrand(), &analytic);
  // Sampled extrema are inner bounds; allow their sampling error.
  const double slack = analytic ? 1e-12 : 1e-3;
  double identity = 0.0;
  double sandwich = 0.0;
  for (const auto& c : geom.cells()) {
    identity = std::max(identity, std::abs(c.W_f - c.F_nu * c.W));
    const double lower = c.W_f / M_F - c.W;
    const double upper = c.W - c.W_f / m_F;
    sandwich = std::max({sandwich, lower / c.W - slack, upper / c.W - slack});
  }
  auto r = graded("identities", geom, std::max(identity, sandwich), tol.identity);
  r.details = {{"W_f_identity", identity},
               {"comparability_violation", std::max(0.0, sandwich)},
               {"m_F", m_F},
               {"M_F", M_F},
               {"analytic_extrema", analytic}};
  return r;
}

CheckReport check_frame_relations(const GraphGeometry& geom, const Tolerances& tol) {
  const int dim = geom.mesh().n() + 1;
  const Vec e1 = unit_vector(dim, 0);
  double worst = 0.0;
  for (const auto& w : wall_frame(geom)) {
    const CellGeometry& c = geom.cell(w.cell);
    const Vec rebuilt = -c.nu.dot(-e1) * w.nu_bar + w.mu.dot(-e1) * (-e1);
    worst = std::max({worst, (w.mu - rebuilt).norm(), std::abs(w.mu.norm() - 1.0),
                      std::abs(w.mu.dot(c.nu)),
                      std::abs(w.mu_F.dot(w.nu_bar) + c.nu_F.dot(-e1)),
                      std::abs(w.mu_F.dot(-e1) - c.nu_F.dot(w.nu_bar))});
  }
  return graded("frame_relations", geom, worst, tol.frame);
}

CheckReport check_wall_condition(const GraphGeometry& geom, const Tolerances& tol) {
  double worst = 0.0;
  for (const auto& w : wall_frame(geom)) worst = std::max(worst, std::abs(geom.cell(w.cell).nu_F(0)));
  return graded("wall_condition", geom, worst, tol.wall_condition_C * geom.mesh().h());
}

CheckReport check_boundary_tangency(const GraphGeometry& geom, const Tolerances& tol) {
  const auto grads = surface_gradient(geom, geom.vertex_W_f());
  double worst = 0.0;
  for (const auto& w : wall_frame(geom)) {
    worst = std::max(worst, std::abs(grads[static_cast<std::size_t>(w.cell)].grad_F.dot(w.mu)));
  }
  return graded("boundary_tangency", geom, worst, tol.boundary_tangency_C * geom.mesh().h());
}

CheckReport check_mean_curvature(const GraphGeometry& geom, const Tolerances& tol) {
  const Mesh& m = geom.mesh();
  const double collar = 2.0 * m.h();
  double worst = 0.0;
  int used = 0;
  int flagged = 0;
  for (int v = 0; v < m.num_vertices(); ++v) {
    if (in_dirichlet_collar(m, m.vertex(v), collar)) continue;
    const auto& vg = geom.vertices()[static_cast<std::size_t>(v)];
    if (!vg.valid) {
      ++flagged;
      continue;
    }
    ++used;
    worst = std::max(worst, std::abs(vg.H_F));
  }
  auto r = graded("mean_curvature", geom, worst, tol.mean_curvature_C * m.h());
  r.details = {{"vertices_used", used}, {"vertices_flagged", flagged}};
  return r;
}

CheckReport check_first_variation(const GraphGeometry& geom, const Tolerances& tol) {
  const Mesh& m = geom.mesh();
  const int n = m.n();
  double worst = 0.0;
  nlohmann::json fields = nlohmann::json::array();
  for (int power : {1, 2}) {
    for (int k = 0; k <= n; ++k) {
      const auto t = first_variation_terms(geom, cutoff_field(m.domain(), power, unit_vector(n + 1, k)));
      worst = std::max(worst, std::abs(t.mismatch()));
      fields.push_back({{"power", power},
                        {"direction", k},
                        {"divergence", t.divergence},
                        {"curvature", t.curvature},
                        {"boundary", t.boundary}});
    }
  }
  auto r = graded("first_variation", geom, worst, tol.first_variation_C * m.h());
  r.details = {{"fields", fields}};
  return r;
}

CheckReport check_principal_direction(const GraphGeometry& geom, const Tolerances& tol) {
  const Mesh& m = geom.mesh();
  if (m.n() != 2) {
    CheckReport r;
    r.name = "principal_direction";
    r.metadata = geometry_metadata(geom);
    r.details = {{"skipped", "n = 1 has no wall tangent"}};
    return r;
  }
  double worst = 0.0;
  const auto res = wall_principal_direction_residuals(geom);
  std::size_t used = 0;
  // The wall vertices next to the Dirichlet corners carry one-sided fits.
  for (int v = 0, k = 0; v < m.num_vertices(); ++v) {
    if (m.tag(v) != Tag::Free || !geom.vertices()[static_cast<std::size_t>(v)].valid) continue;
    const double value = res[static_cast<std::size_t>(k++)];
    if (in_dirichlet_collar(m, m.vertex(v), 2.0 * m.h())) continue;
    worst = std::max(worst, std::abs(value));
    ++used;
  }
  auto r = graded("principal_direction", geom, worst, tol.principal_direction_C * m.h());
  r.details = {{"vertices_used", used}};
  return r;
}

CheckReport check_mu_F_lower_bound(const GraphGeometry& geom, const Tolerances& tol) {
  bool analytic = false;
  const double m_F = extrema(geom.integrand(), &analytic).first;
  // Sampled minima sit above the true one by the sampling error.
  const double slack = analytic ? 0.0 : 1e-3;
  double worst = 0.0;
  double smallest = std::numeric_limits<double>::infinity();
  for (const auto& w : wall_frame(geom)) {
    const double value = -w.mu_F(0);
    smallest = std::min(smallest, value);
    worst = std::max(worst, m_F - slack - value);
  }
  auto r = graded("mu_F_lower_bound", geom, worst, tol.mu_F_lower_bound_C * geom.mesh().h());
  r.details = {{"m_F", m_F}, {"min_mu_F_dot_minus_e1", smallest}};
  return r;
}

CheckReport check_amse_residual(const GraphGeometry& geom, const Tolerances& tol) {
  double worst = 0.0;
  for (double v : amse_residual(geom.integrand(), geom.u())) worst = std::max(worst, std::abs(v));
  const Mesh& m = geom.mesh();
  std::vector<double> mass(static_cast<std::size_t>(m.num_vertices()), 0.0);
  for (int c = 0; c < m.num_cells(); ++c) {
    const auto& cell = m.cells()[static_cast<std::size_t>(c)];
    for (int a = 0; a <= m.n(); ++a) {
      mass[static_cast<std::size_t>(cell[static_cast<std::size_t>(a)])] += m.cell_measure(c) / (m.n() + 1);
    }
  }
  const double min_mass = *std::min_element(mass.begin(), mass.end());
  auto r = graded("amse_residual", geom, worst, tol.amse_residual / min_mass);
  r.details = {{"min_vertex_mass", min_mass}};
  return r;
}

CheckReport check_free_bc_residual(const GraphGeometry& geom, const Tolerances& tol) {
  return graded("free_bc_residual", geom, free_bc_residual(geom.integrand(), geom.u()),
                tol.free_bc_C * geom.mesh().h());
}

CheckReport check_subharmonicity(const GraphGeometry& geom_in, const Tolerances& tol) {
  const EllipticIntegrand normalized = normalize(geom_in.integrand());
  const GraphGeometry geom =
      geom_in.integrand().normalized() ? geom_in : compute_geometry(normalized, geom_in.u());
  const Mesh& m = geom.mesh();
  const int n = m.n();
  std::vector<double> log_wf = geom.vertex_W_f();
  for (double& x : log_wf) x = std::log(x);
  const auto grads = surface_gradient(geom, log_wf);

  double worst = std::numeric_limits<double>::infinity();
  int worst_vertex = -1;
  int tested = 0;
  int quad_nonneg = 0;
  double min_quad = std::numeric_limits<double>::infinity();
  double worst_density = std::numeric_limits<double>::infinity();
  double worst_interior_density = std::numeric_limits<double>::infinity();
  // Hat supports (radius h) stay outside the 2h collar of one-sided fits.
  const double collar = 3.0 * m.h();
  for (int v = 0; v < m.num_vertices(); ++v) {
    if (m.tag(v) == Tag::Dirichlet || in_dirichlet_collar(m, m.vertex(v), collar)) continue;
    double weak = 0.0;
    double quad = 0.0;
    double mass = 0.0;
    for (int c : m.vertex_cells()[static_cast<std::size_t>(v)]) {
      const auto& cg = geom.cell(c);
      const auto& cell = m.cells()[static_cast<std::size_t>(c)];
      int local = 0;
      while (cell[static_cast<std::size_t>(local)] != v) ++local;
      const Vec dpsi = m.basis_gradients(c)[static_cast<std::size_t>(local)];
      const Vec grad_psi = geom.lift_tangent(cg.du, cg.metric.ldlt().solve(dpsi));
      const auto& g = grads[static_cast<std::size_t>(c)];
      const double f2 = cg.F_nu * cg.F_nu;
      weak -= cg.area * f2 * grad_psi.dot(g.grad_F);
      quad += cg.area / (n + 1) * f2 * g.grad.dot(g.grad_F);
      mass += cg.area / (n + 1);
    }
    ++tested;
    if (quad >= 0.0) ++quad_nonneg;
    min_quad = std::min(min_quad, quad / mass);
    const double slack = weak - quad;
    if (slack < worst) {
      worst = slack;
      worst_vertex = v;
    }
    if (m.tag(v) == Tag::Interior) worst_interior_density = std::min(worst_interior_density, slack / mass);
    worst_density = std::min(worst_density, slack / mass);
  }
  if (tested == 0) worst = 0.0;
  const double negative = std::max(0.0, -worst);
  auto r = graded("subharmonicity", geom_in, negative, tol.subharmonicity_C * m.h());
  r.details = {{"min_slack", worst},
               {"worst_vertex", worst_vertex},
               {"test_functions", tested},
               {"quadratic_nonnegative_fraction", tested ? double(quad_nonneg) / tested : 1.0},
               {"min_quadratic_density", min_quad},
               {"min_slack_density", worst_density},
               {"min_interior_slack_density", worst_interior_density}};
  return r;
}

double graph_ball_measure(const GraphGeometry& geom, int x0, double r) {
  const Vec center = lifted_vertex(geom, x0);
  double total = 0.0;
  for (int c = 0; c < geom.mesh().num_cells(); ++c) {
    if ((lifted_barycenter(geom, c) - center).norm() <= r) total += geom.cell(c).area;
  }
  return total;
}

namespace {

// Least-squares slope of y against x.
double fitted_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double nx = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / nx;
    my += y[i] / nx;
  }
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace

CheckReport area_growth_check(const GraphGeometry& geom, int x0, const std::vector<double>& radii) {
  const Mesh& m = geom.mesh();
  const int n = m.n();
  const double reach = distance_to_dirichlet(m, m.vertex(x0));
  std::vector<double> log_r;
  std::vector<double> log_a;
  nlohmann::json rows = nlohmann::json::array();
  double c_lo = std::numeric_limits<double>::infinity();
  double c_hi = 0.0;
  for (double r : radii) {
    if (!(r > 0.0) || r > reach || r < 2.0 * m.h()) continue;
    const double a = graph_ball_measure(geom, x0, r);
    if (!(a > 0.0)) continue;
    log_r.push_back(std::log(r));
    log_a.push_back(std::log(a));
    c_lo = std::min(c_lo, a / std::pow(r, n));
    c_hi = std::max(c_hi, a / std::pow(r, n));
    rows.push_back({{"r", r}, {"measure", a}});
  }
  CheckReport rep;
  rep.name = "area_growth";
  rep.metadata = geometry_metadata(geom);
  rep.metadata["x0"] = std::vector<double>(m.vertex(x0).data(), m.vertex(x0).data() + n);
  rep.tolerance = 0.2;
  if (log_r.size() < 3) {
    rep.status = Status::Informational;
    rep.details = {{"radii", rows}, {"note", "fewer than 3 usable radii"}};
    return rep;
  }
  const double slope = fitted_slope(log_r, log_a);
  rep.worst_residual = std::abs(slope - n);
  rep.status = rep.worst_residual <= rep.tolerance ? Status::Pass : Status::Fail;
  rep.details = {{"radii", rows}, {"slope", slope}, {"c_star", c_lo}, {"C_star", c_hi}};
  return rep;
}

CheckReport mean_value_probe(const GraphGeometry& geom_in, int x0, double r) {
  const EllipticIntegrand normalized = normalize(geom_in.integrand());
  const GraphGeometry geom =
      geom_in.integrand().normalized() ? geom_in : compute_geometry(normalized, geom_in.u());
  const Mesh& m = geom.mesh();
  const Vec center = lifted_vertex(geom, x0);
  double sup_half = 0.0;
  int cells_half = 0;
  double integral = 0.0;
  double measure = 0.0;
  for (int c = 0; c < m.num_cells(); ++c) {
    const double dist = (lifted_barycenter(geom, c) - center).norm();
    const double value = std::abs(std::log(geom.cell(c).W_f));
    if (dist <= r) {
      integral += geom.cell(c).area * value;
      measure += geom.cell(c).area;
    }
    if (dist <= 0.5 * r) {
      sup_half = std::max(sup_half, value);
      ++cells_half;
    }
  }
  CheckReport rep;
  rep.name = "mean_value";
  rep.status = Status::Informational;
  rep.metadata = geometry_metadata(geom_in);
  rep.metadata["radius"] = r;
  if (cells_half == 0 || r > distance_to_dirichlet(m, m.vertex(x0))) {
    rep.details = {{"skipped", "graph ball not resolved or leaves the domain"}};
    return rep;
  }
  const double mean = integral / measure;
  double ratio = 1.0;
  if (mean > 0.0) {
    ratio = sup_half / mean;
  } else if (sup_half > 0.0) {
    ratio = std::numeric_limits<double>::infinity();
  }
  rep.worst_residual = ratio;
  rep.details = {{"sup_half_ball", sup_half}, {"mean_ball", mean}, {"ratio", ratio}};
  return rep;
}

std::vector<std::vector<double>> make_test_function_bank(const Mesh& mesh, int count, std::uint64_t seed) {
  if (count < 1) throw PreconditionError("test function bank must be nonempty");
  const HalfDomain& d = mesh.domain();
  const int n = mesh.n();
  const double h = mesh.h();
  const double scale = n == 2 ? std::min(d.depth, d.width) : d.depth;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> bank;
  int attempts = 0;
  while (static_cast<int>(bank.size()) < count) {
    if (++attempts > 1000 * count) throw PreconditionError("domain too small for the test function bank");
    const bool tensor = bank.size() % 2 == 1;
    const double rho = 2.0 * h + unit(rng) * std::max(0.0, 0.35 * scale - 2.0 * h);
    Vec c(n);
    c(0) = unit(rng) * d.depth;
    if (n == 2) c(1) = (2.0 * unit(rng) - 1.0) * d.width;
    if (distance_to_dirichlet(mesh, c) < rho + h) continue;
    const double b = rho * (0.5 + unit(rng));
    std::vector<double> phi(static_cast<std::size_t>(mesh.num_vertices()), 0.0);
    double total = 0.0;
    for (int v = 0; v < mesh.num_vertices(); ++v) {
      const Vec x = mesh.vertex(v) - c;
      double value = 0.0;
      if (tensor) {
        value = std::max(0.0, 1.0 - std::abs(x(0)) / rho);
        if (n == 2) value *= std::max(0.0, 1.0 - std::abs(x(1)) / std::min(b, rho));
      } else {
        const double s = x.squaredNorm() / (rho * rho);
        value = s < 1.0 ? (1.0 - s) * (1.0 - s) : 0.0;
      }
      phi[static_cast<std::size_t>(v)] = value;
      total += value;
    }
    if (total > 0.0) bank.push_back(std::move(phi));
  }
  return bank;
}

double p1_power_integral(double measure, int n, const std::vector<double>& values, int k) {
  // |T| k! n! / (k + n)! times the complete homogeneous symmetric polynomial h_k.
  std::vector<double> hk(static_cast<std::size_t>(k) + 1, 0.0);
  hk[0] = 1.0;
  for (double x : values) {
    for (int j = 1; j <= k; ++j) hk[static_cast<std::size_t>(j)] += x * hk[static_cast<std::size_t>(j - 1)];
  }
  double factor = 1.0;
  for (int j = 1; j <= n; ++j) factor *= static_cast<double>(j) / (k + j);
  return measure * factor * hk[static_cast<std::size_t>(k)];
}

CheckReport functional_inequality_diagnostics(const GraphGeometry& geom,
                                              const std::vector<std::vector<double>>& bank) {
  const Mesh& m = geom.mesh();
  const int n = m.n();
  const HalfDomain& d = m.domain();
  const double scale = n == 2 ? std::min(d.depth, d.width) : d.depth;
  const std::vector<double> sob_radii{0.25 * scale, 0.5 * scale, scale};
  double max_trace = 0.0;
  double max_stability = 0.0;
  std::vector<double> max_sobolev(sob_radii.size(), 0.0);
  for (const auto& phi : bank) {
    if (static_cast<int>(phi.size()) != m.num_vertices()) throw PreconditionError("bank function length mismatch");
    for (int v = 0; v < m.num_vertices(); ++v) {
      const double x = phi[static_cast<std::size_t>(v)];
      if (x < 0.0) throw PreconditionError("bank functions must be nonnegative");
      if (m.tag(v) == Tag::Dirichlet && x != 0.0) {
        throw PreconditionError("bank function is not compactly supported in the domain");
      }
    }
    const auto grads = surface_gradient(geom, phi);
    double grad_l1 = 0.0;
    double grad_l2 = 0.0;
    double weighted = 0.0;
    double l2 = 0.0;
    double l4 = 0.0;
    for (int c = 0; c < m.num_cells(); ++c) {
      const auto& cg = geom.cell(c);
      const auto& cell = m.cells()[static_cast<std::size_t>(c)];
      const double gn = grads[static_cast<std::size_t>(c)].grad.norm();
      grad_l1 += cg.area * gn;
      grad_l2 += cg.area * gn * gn;
      std::vector<double> vals;
      double lumped = 0.0;
      for (int a = 0; a <= n; ++a) {
        const int v = cell[static_cast<std::size_t>(a)];
        const double x = phi[static_cast<std::size_t>(v)];
        vals.push_back(x);
        const auto& vg = geom.vertices()[static_cast<std::size_t>(v)];
        lumped += x * x * (vg.valid ? vg.h_norm2 : 0.0) / (n + 1);
      }
      weighted += cg.area * lumped;
      l2 += p1_power_integral(cg.area, n, vals, 2);
      if (n == 2) l4 += p1_power_integral(cg.area, n, vals, 4);
    }
    double boundary = 0.0;
    for (const auto& w : geom.wall()) {
      const Facet& f = m.boundary_facets()[static_cast<std::size_t>(w.facet)];
      if (n == 1) {
        boundary += phi[static_cast<std::size_t>(f.vertices[0])];
      } else {
        boundary += 0.5 * w.measure *
                    (phi[static_cast<std::size_t>(f.vertices[0])] + phi[static_cast<std::size_t>(f.vertices[1])]);
      }
    }
    if (!(grad_l1 > 0.0)) continue;
    max_trace = std::max(max_trace, boundary / grad_l1);
    max_stability = std::max(max_stability, weighted / grad_l2);
    if (n == 2) {
      for (std::size_t i = 0; i < sob_radii.size(); ++i) {
        const double r = sob_radii[i];
        max_sobolev[i] = std::max(max_sobolev[i], std::sqrt(l4) / (l2 / r + r * grad_l2));
      }
    }
  }
  CheckReport rep;
  rep.name = "functional_inequalities";
  rep.status = Status::Informational;
  rep.metadata = geometry_metadata(geom);
  rep.metadata["bank_size"] = bank.size();
  rep.worst_residual = std::max(max_trace, max_stability);
  rep.details = {{"max_trace_ratio", max_trace}, {"max_stability_ratio", max_stability}};
  if (n == 2) {
    nlohmann::json s = nlohmann::json::array();
    for (std::size_t i = 0; i < sob_radii.size(); ++i) s.push_back({{"r", sob_radii[i]}, {"max_ratio", max_sobolev[i]}});
    rep.details["sobolev"] = s;
  }
  return rep;
}

std::vector<GradientEstimateRecord> gradient_estimate_records(const GraphGeometry& geom,
                                                              const std::vector<int>& x0,
                                                              const std::vector<double>& radii,
                                                              int* skipped) {
  const Mesh& m = geom.mesh();
  const auto& u = geom.u().values;
  std::vector<GradientEstimateRecord> out;
  int skip = 0;
  for (int v : x0) {
    if (v < 0 || v >= m.num_vertices()) throw PreconditionError("base point index out of range");
    int nearest = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int c : m.vertex_cells()[static_cast<std::size_t>(v)]) {
      const double dist = (m.barycenter(c) - m.vertex(v)).norm();
      if (dist < best - 1e-15) {
        best = dist;
        nearest = c;
      }
    }
    const double slope = geom.cell(nearest).du.norm();
    for (double r : radii) {
      if (!(r > 0.0) || r > distance_to_dirichlet(m, m.vertex(v)) + 1e-12 || !(slope > 0.0)) {
        ++skip;
        continue;
      }
      const auto ball = half_ball_vertices(m, m.vertex(v), r);
      double sup = u[static_cast<std::size_t>(v)];
      for (int w : ball.vertices) sup = std::max(sup, u[static_cast<std::size_t>(w)]);
      GradientEstimateRecord rec;
      rec.x0 = m.vertex(v);
      rec.r = r;
      rec.lhs = std::log(slope);
      rec.osc = sup - u[static_cast<std::size_t>(v)];
      rec.osc_over_r = rec.osc / r;
      rec.source = geom.integrand().label();
      out.push_back(rec);
    }
  }
  if (skipped) *skipped = skip;
  return out;
}

GradientEstimateFit fit_gradient_estimate(const std::vector<GradientEstimateRecord>& records) {
  if (records.empty()) throw PreconditionError("no gradient estimate records to fit");
  // C1(C2) = max_i (lhs_i - C2 s_i) is convex piecewise linear; the objective
  // C2 + C1(C2) is minimized at C2 = 0 or at a slope of the upper hull.
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : records) pts.emplace_back(r.osc_over_r, r.lhs);
  std::sort(pts.begin(), pts.end());
  std::vector<std::pair<double, double>> hull;
  for (const auto& p : pts) {
    while (hull.size() >= 2) {
      const auto& a = hull[hull.size() - 2];
      const auto& b = hull.back();
      const double cross = (b.first - a.first) * (p.second - a.second) - (b.second - a.second) * (p.first - a.first);
      if (cross >= 0.0) {
        hull.pop_back();
      } else {
        break;
      }
    }
    hull.push_back(p);
  }
  std::vector<double> candidates{0.0};
  for (std::size_t i = 1; i < hull.size(); ++i) {
    const double ds = hull[i].first - hull[i - 1].first;
    if (ds <= 0.0) continue;
    const double slope = (hull[i].second - hull[i - 1].second) / ds;
    if (slope > 0.0) candidates.push_back(slope);
  }
  std::sort(candidates.begin(), candidates.end());
  GradientEstimateFit best;
  double best_obj = std::numeric_limits<double>::infinity();
  for (double c2 : candidates) {
    double c1 = -std::numeric_limits<double>::infinity();
    for (const auto& p : pts) c1 = std::max(c1, p.second - c2 * p.first);
    if (c1 + c2 < best_obj - 1e-14) {
      best_obj = c1 + c2;
      best.C1 = c1;
      best.C2 = c2;
    }
  }
  best.records = records.size();
  return best;
}

double gradient_estimate_coverage(const GradientEstimateFit& fit,
                                  const std::vector<GradientEstimateRecord>& records) {
  if (records.empty()) return 1.0;
  std::size_t ok = 0;
  for (const auto& r : records) {
    const double bound = fit.C1 + fit.C2 * r.osc_over_r;
    if (r.lhs <= bound + 1e-12 * (1.0 + std::abs(bound))) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(records.size());
}

CheckReport gradient_estimate_report(const std::vector<GradientEstimateRecord>& fit_records,
                                     const std::vector<GradientEstimateRecord>& held_out,
                                     double min_coverage) {
  const auto fit = fit_gradient_estimate(fit_records);
  CheckReport rep;
  rep.name = "gradient_estimate";
  rep.details = {{"C1", fit.C1},
                 {"C2", fit.C2},
                 {"fit_records", fit_records.size()},
                 {"in_sample_coverage", gradient_estimate_coverage(fit, fit_records)}};
  if (held_out.empty()) {
    rep.status = Status::Informational;
    return rep;
  }
  const double coverage = gradient_estimate_coverage(fit, held_out);
  rep.details["held_out_records"] = held_out.size();
  rep.details["held_out_coverage"] = coverage;
  rep.worst_residual = 1.0 - coverage;
  rep.tolerance = 1.0 - min_coverage;
  rep.status = coverage >= min_coverage ? Status::Pass : Status::Fail;
  return rep;
}

double inner_affine_deviation(const GraphFunction& u, double fraction, Vec* coef) {
  const Mesh& m = u.grid();
  const HalfDomain& d = m.domain();
  const int n = m.n();
  std::vector<int> inner;
  for (int v = 0; v < m.num_vertices(); ++v) {
    const Vec& x = m.vertex(v);
    bool inside = x(0) <= fraction * d.depth + 1e-12;
    if (n == 2) inside = inside && std::abs(x(1)) <= fraction * d.width + 1e-12;
    if (inside) inner.push_back(v);
  }
  if (inner.size() < static_cast<std::size_t>(n + 1)) throw PreconditionError("inner box holds too few vertices");
  Eigen::MatrixXd design(static_cast<Eigen::Index>(inner.size()), n + 1);
  Eigen::VectorXd rhs(static_cast<Eigen::Index>(inner.size()));
  for (std::size_t k = 0; k < inner.size(); ++k) {
    const auto row = static_cast<Eigen::Index>(k);
    design(row, 0) = 1.0;
    design.row(row).tail(n) = m.vertex(inner[k]).transpose();
    rhs(row) = u.values[static_cast<std::size_t>(inner[k])];
  }
  const Eigen::VectorXd c = design.colPivHouseholderQr().solve(rhs);
  if (coef) *coef = c;
  return (design * c - rhs).cwiseAbs().maxCoeff();
}

CheckReport liouville_probe(const EllipticIntegrand& integrand, const LiouvilleConfig& cfg) {
  if (integrand.graph_dim() != 2) throw PreconditionError("the Liouville probe needs n = 2");
  if (cfg.radii.empty()) throw PreconditionError("the Liouville probe needs at least one radius");
  for (std::size_t i = 1; i < cfg.radii.size(); ++i) {
    if (!(cfg.radii[i] > cfg.radii[i - 1])) throw ConfigError("Liouville radii must be increasing");
  }
  Vec tangential(1);
  tangential << cfg.tangential_slope;
  const double a1 = free_boundary_slope(integrand, tangential);
  nlohmann::json rows = nlohmann::json::array();
  std::vector<double> deviations;
  bool growth_ok = true;
  for (double R : cfg.radii) {
    HalfDomain d;
    d.n = 2;
    d.depth = R;
    d.width = R;
    d.resolution = cfg.resolution;
    auto mesh = std::make_shared<const Mesh>(build_mesh(d));
    const auto data = sample_vertices(*mesh, [&](const Vec& x) {
      double value = a1 * x(0) + cfg.tangential_slope * x(1) + cfg.offset;
      const double dist = std::hypot(x(0) - R, x(1));
      if (dist < cfg.bump_radius) {
        const double c = std::cos(0.5 * std::numbers::pi * dist / cfg.bump_radius);
        value += cfg.bump_height * c * c;
      }
      return value;
    });
    const auto [u, report] = solve(integrand, mesh, data, cfg.solver);
    if (!report.converged) {
      throw SolverError("Liouville probe solve did not converge at R = " + format_double(R));
    }
    for (int v = 0; v < mesh->num_vertices(); ++v) {
      if (!(u.values[static_cast<std::size_t>(v)] > -cfg.beta * (1.0 + mesh->vertex(v).norm()))) growth_ok = false;
    }
    Vec coef;
    const double dev = inner_affine_deviation(u, 0.25, &coef);
    deviations.push_back(dev);
    rows.push_back({{"R", R},
                    {"deviation", dev},
                    {"iterations", report.iterations},
                    {"fit", std::vector<double>(coef.data(), coef.data() + coef.size())}});
  }
  bool decreasing = true;
  bool nonincreasing = true;
  for (std::size_t i = 1; i < deviations.size(); ++i) {
    decreasing = decreasing && deviations[i] < deviations[i - 1];
    nonincreasing = nonincreasing && deviations[i] <= deviations[i - 1] + 1e-12;
  }
  CheckReport rep;
  rep.name = "liouville";
  rep.worst_residual = deviations.back();
  rep.tolerance = cfg.flat_fraction * cfg.bump_height;
  rep.status = nonincreasing && rep.worst_residual <= rep.tolerance + 1e-12 ? Status::Pass : Status::Fail;
  rep.metadata = {{"integrand", integrand.label()}, {"h", cfg.resolution}, {"beta", cfg.beta}};
  rep.details = {{"radii", rows},
                 {"strictly_decreasing", decreasing},
                 {"free_boundary_slope", a1},
                 {"growth_hypothesis_holds", growth_ok}};
  return rep;
}

}  // namespace aniso
