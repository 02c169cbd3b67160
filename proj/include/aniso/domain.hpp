#pragma once

#include "aniso/types.hpp"

#include <algorithm>
#include <array>
#include <iosfwd>
#include <string>
#include <vector>

namespace aniso {

enum class Tag { Interior, Free, Dirichlet };

std::string to_string(Tag tag);

/// Truncated half-space {0 <= x1 <= depth} (x {|x2| <= width} when n = 2).
/// The wall {x1 = 0} is the free boundary; the rest is Dirichlet.
struct HalfDomain {
  int n = 2;
  double depth = 1.0;
  double width = 1.0;
  double resolution = 0.125;
};

/// A boundary facet: a wall/outer edge (n = 2) or an end point (n = 1).
struct Facet {
  std::array<int, 2> vertices{-1, -1};
  int cell = -1;
  Tag tag = Tag::Dirichlet;
};

/// Structured simplicial mesh of a HalfDomain: squares split along the
/// (+x1, +x2) diagonal, or uniform segments for n = 1.
///
/// Immutable after construction.
class Mesh {
 public:
  int n() const { return domain_.n; }
  const HalfDomain& domain() const { return domain_; }
  int cells_x() const { return nx_; }
  int cells_y() const { return ny_; }
  double hx() const { return hx_; }
  double hy() const { return hy_; }
  /// Largest edge spacing along the axes.
  double h() const { return std::max(hx_, n() == 2 ? hy_ : hx_); }

  int num_vertices() const { return static_cast<int>(vertices_.size()); }
  int num_cells() const { return static_cast<int>(cells_.size()); }
  int vertices_per_cell() const { return n() + 1; }

  const std::vector<Vec>& vertices() const { return vertices_; }
  const Vec& vertex(int v) const { return vertices_[static_cast<std::size_t>(v)]; }
  const std::vector<std::array<int, 3>>& cells() const { return cells_; }
  const std::vector<Tag>& vertex_tags() const { return tags_; }
  Tag tag(int v) const { return tags_[static_cast<std::size_t>(v)]; }
  const std::vector<Facet>& boundary_facets() const { return facets_; }
  /// Indices into boundary_facets() of the FREE (wall) facets.
  const std::vector<int>& wall_facets() const { return wall_facets_; }

  double cell_measure(int c) const { return measures_[static_cast<std::size_t>(c)]; }
  /// Gradients of the barycentric coordinates of cell c (constant per cell).
  const std::array<Vec, 3>& basis_gradients(int c) const {
    return basis_grads_[static_cast<std::size_t>(c)];
  }
  Vec barycenter(int c) const;
  /// Measure of a boundary facet (edge length, or 1 for a point when n = 1).
  double facet_measure(const Facet& f) const;

  const std::vector<std::vector<int>>& vertex_cells() const { return vertex_cells_; }
  const std::vector<std::vector<int>>& vertex_neighbors() const { return vertex_neighbors_; }

  /// Vertex index of grid node (i, j); j is ignored for n = 1.
  int grid_index(int i, int j) const { return n() == 1 ? i : i * (ny_ + 1) + j; }

  friend Mesh build_mesh(const HalfDomain& d);
  friend Mesh refine(const Mesh& m);

 private:
  Mesh() = default;
  void build(const HalfDomain& d, int nx, int ny);

  HalfDomain domain_;
  int nx_ = 0;
  int ny_ = 0;
  double hx_ = 0.0;
  double hy_ = 0.0;
  std::vector<Vec> vertices_;
  std::vector<std::array<int, 3>> cells_;
  std::vector<Tag> tags_;
  std::vector<Facet> facets_;
  std::vector<int> wall_facets_;
  std::vector<double> measures_;
  std::vector<std::array<Vec, 3>> basis_grads_;
  std::vector<std::vector<int>> vertex_cells_;
  std::vector<std::vector<int>> vertex_neighbors_;
};

/// Throws ConfigError for a dimension other than 1 or 2, a nonpositive size
/// or a resolution leaving fewer than two cells across.
void validate(const HalfDomain& d);

/// Throws ConfigError when the domain is invalid or the resolution leaves
/// fewer than two cells across the domain in some direction.
Mesh build_mesh(const HalfDomain& d);

/// Uniform refinement (h -> h/2). Parent vertices are preserved and tags are
/// inherited.
Mesh refine(const Mesh& m);

struct HalfBall {
  std::vector<int> vertices;
  /// Set when the ball is too small to contain any vertex.
  bool underresolved = false;
};

/// Vertices v with |v - x0| <= r.
HalfBall half_ball_vertices(const Mesh& m, const Vec& x0, double r);

/// Distance from x to the Dirichlet part of the boundary.
double distance_to_dirichlet(const Mesh& m, const Vec& x);

/// CSV export: "id,x1[,x2],tag" and "id,v0,v1[,v2]".
void write_vertices_csv(const Mesh& m, std::ostream& out);
void write_cells_csv(const Mesh& m, std::ostream& out);

}  // namespace aniso
