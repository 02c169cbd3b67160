#include "aniso/domain.hpp"
#include "aniso/io.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <set>

namespace aniso {

std::string to_string(Tag tag) {
  switch (tag) {
    case Tag::Interior:
      return "INTERIOR";
    case Tag::Free:
      return "FREE";
    case Tag::Dirichlet:
      return "DIRICHLET";
  }
  return "?";
}

namespace {

Vec point(double x1) {
  Vec p(1);
  p << x1;
  return p;
}

Vec point(double x1, double x2) {
  Vec p(2);
  p << x1, x2;
  return p;
}

}  // namespace

void validate(const HalfDomain& d) {
  if (d.n != 1 && d.n != 2) throw ConfigError("graph dimension n must be 1 or 2");
  if (!(d.depth > 0.0) || !std::isfinite(d.depth)) throw ConfigError("domain depth must be positive");
  if (d.n == 2 && (!(d.width > 0.0) || !std::isfinite(d.width))) {
    throw ConfigError("domain width must be positive");
  }
  if (!(d.resolution > 0.0) || !std::isfinite(d.resolution)) {
    throw ConfigError("mesh resolution must be positive");
  }
  const int nx = static_cast<int>(std::lround(d.depth / d.resolution));
  const int ny = d.n == 2 ? static_cast<int>(std::lround(2.0 * d.width / d.resolution)) : 0;
  if (nx < 2 || (d.n == 2 && ny < 2)) {
    throw ConfigError("mesh resolution too coarse: need at least two cells across the domain");
  }
}

Mesh build_mesh(const HalfDomain& d) {
  validate(d);
  const int nx = static_cast<int>(std::lround(d.depth / d.resolution));
  const int ny = d.n == 2 ? static_cast<int>(std::lround(2.0 * d.width / d.resolution)) : 0;
  Mesh m;
  m.build(d, nx, ny);
  return m;
}

void Mesh::build(const HalfDomain& d, int nx, int ny) {
  domain_ = d;
  nx_ = nx;
  ny_ = ny;
  hx_ = d.depth / nx;
  hy_ = d.n == 2 ? 2.0 * d.width / ny : 0.0;
  if (d.n == 2) {
    // Right triangles with legs hx, hy: the smallest angle is atan(min/max).
    const double ratio = std::min(hx_, hy_) / std::max(hx_, hy_);
    if (std::atan(ratio) < std::numbers::pi / 6.0 - 1e-12) {
      throw ConfigError("mesh cells too anisotropic (minimum angle below 30 degrees)");
    }
  }

  if (d.n == 1) {
    for (int i = 0; i <= nx; ++i) {
      vertices_.push_back(point(i * hx_));
      tags_.push_back(i == 0 ? Tag::Free : (i == nx ? Tag::Dirichlet : Tag::Interior));
    }
    for (int i = 0; i < nx; ++i) cells_.push_back({i, i + 1, -1});
    facets_.push_back({{0, -1}, 0, Tag::Free});
    facets_.push_back({{nx, -1}, nx - 1, Tag::Dirichlet});
  } else {
    for (int i = 0; i <= nx; ++i) {
      for (int j = 0; j <= ny; ++j) {
        vertices_.push_back(point(i * hx_, -d.width + j * hy_));
        Tag t = Tag::Interior;
        if (i == nx || j == 0 || j == ny) {
          t = Tag::Dirichlet;
        } else if (i == 0) {
          t = Tag::Free;
        }
        tags_.push_back(t);
      }
    }
    const auto cell_of = [ny](int i, int j, int k) { return 2 * (i * ny + j) + k; };
    for (int i = 0; i < nx; ++i) {
      for (int j = 0; j < ny; ++j) {
        const int v00 = grid_index(i, j);
        const int v10 = grid_index(i + 1, j);
        const int v01 = grid_index(i, j + 1);
        const int v11 = grid_index(i + 1, j + 1);
        cells_.push_back({v00, v10, v11});
        cells_.push_back({v00, v11, v01});
      }
    }
    for (int j = 0; j < ny; ++j) {
      facets_.push_back({{grid_index(0, j), grid_index(0, j + 1)}, cell_of(0, j, 1), Tag::Free});
    }
    for (int j = 0; j < ny; ++j) {
      facets_.push_back(
          {{grid_index(nx, j), grid_index(nx, j + 1)}, cell_of(nx - 1, j, 0), Tag::Dirichlet});
    }
    for (int i = 0; i < nx; ++i) {
      facets_.push_back({{grid_index(i, 0), grid_index(i + 1, 0)}, cell_of(i, 0, 0), Tag::Dirichlet});
      facets_.push_back(
          {{grid_index(i + 1, ny), grid_index(i, ny)}, cell_of(i, ny - 1, 1), Tag::Dirichlet});
    }
  }
  for (int f = 0; f < static_cast<int>(facets_.size()); ++f) {
    if (facets_[static_cast<std::size_t>(f)].tag == Tag::Free) wall_facets_.push_back(f);
  }

  const int nv = d.n + 1;
  measures_.reserve(cells_.size());
  basis_grads_.reserve(cells_.size());
  for (const auto& cell : cells_) {
    std::array<Vec, 3> grads;
    if (d.n == 1) {
      const double len = vertex(cell[1])(0) - vertex(cell[0])(0);
      measures_.push_back(len);
      grads[0] = point(-1.0 / len);
      grads[1] = point(1.0 / len);
      grads[2] = Vec::Zero(1);
    } else {
      Eigen::Matrix2d jac;
      jac.col(0) = vertex(cell[1]) - vertex(cell[0]);
      jac.col(1) = vertex(cell[2]) - vertex(cell[0]);
      const double det = jac.determinant();
      measures_.push_back(0.5 * det);
      const Eigen::Matrix2d inv_t = jac.inverse().transpose();
      grads[1] = inv_t.col(0);
      grads[2] = inv_t.col(1);
      grads[0] = -(grads[1] + grads[2]);
    }
    basis_grads_.push_back(grads);
  }

  vertex_cells_.assign(vertices_.size(), {});
  std::vector<std::set<int>> nbrs(vertices_.size());
  for (int c = 0; c < num_cells(); ++c) {
    const auto& cell = cells_[static_cast<std::size_t>(c)];
    for (int a = 0; a < nv; ++a) {
      vertex_cells_[static_cast<std::size_t>(cell[static_cast<std::size_t>(a)])].push_back(c);
      for (int b = 0; b < nv; ++b) {
        if (a != b) {
          nbrs[static_cast<std::size_t>(cell[static_cast<std::size_t>(a)])].insert(
              cell[static_cast<std::size_t>(b)]);
        }
      }
    }
  }
  vertex_neighbors_.reserve(vertices_.size());
  for (const auto& s : nbrs) vertex_neighbors_.emplace_back(s.begin(), s.end());
}

Vec Mesh::barycenter(int c) const {
  const auto& cell = cells_[static_cast<std::size_t>(c)];
  Vec b = Vec::Zero(n());
  for (int a = 0; a <= n(); ++a) b += vertex(cell[static_cast<std::size_t>(a)]);
  return b / (n() + 1);
}

double Mesh::facet_measure(const Facet& f) const {
  if (n() == 1) return 1.0;
  return (vertex(f.vertices[1]) - vertex(f.vertices[0])).norm();
}

Mesh refine(const Mesh& m) {
  HalfDomain d = m.domain();
  d.resolution *= 0.5;
  Mesh out;
  out.build(d, 2 * m.cells_x(), 2 * m.cells_y());
  return out;
}

HalfBall half_ball_vertices(const Mesh& m, const Vec& x0, double r) {
  if (!(r > 0.0)) throw PreconditionError("half ball radius must be positive");
  HalfBall ball;
  for (int v = 0; v < m.num_vertices(); ++v) {
    if ((m.vertex(v) - x0).norm() <= r) ball.vertices.push_back(v);
  }
  ball.underresolved = ball.vertices.empty();
  return ball;
}

double distance_to_dirichlet(const Mesh& m, const Vec& x) {
  const HalfDomain& d = m.domain();
  double dist = d.depth - x(0);
  if (d.n == 2) dist = std::min({dist, d.width - x(1), d.width + x(1)});
  return dist;
}

void write_vertices_csv(const Mesh& m, std::ostream& out) {
  out << (m.n() == 1 ? "id,x1,tag\n" : "id,x1,x2,tag\n");
  for (int v = 0; v < m.num_vertices(); ++v) {
    out << v;
    for (int k = 0; k < m.n(); ++k) out << ',' << format_double(m.vertex(v)(k));
    out << ',' << to_string(m.tag(v)) << '\n';
  }
}

void write_cells_csv(const Mesh& m, std::ostream& out) {
  out << (m.n() == 1 ? "id,v0,v1\n" : "id,v0,v1,v2\n");
  for (int c = 0; c < m.num_cells(); ++c) {
    out << c;
    for (int a = 0; a <= m.n(); ++a) out << ',' << m.cells()[static_cast<std::size_t>(c)][static_cast<std::size_t>(a)];
    out << '\n';
  }
}

}  // namespace aniso
