#include "aniso/domain.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

using namespace aniso;

namespace {

HalfDomain dom2(double depth, double width, double h) {
  HalfDomain d;
  d.n = 2;
  d.depth = depth;
  d.width = width;
  d.resolution = h;
  return d;
}

Vec p2(double a, double b) {
  Vec p(2);
  p << a, b;
  return p;
}

}  // namespace

TEST_CASE("one-dimensional counting") {
  HalfDomain d;
  d.n = 1;
  d.depth = 1.0;
  d.resolution = 0.25;
  const Mesh m = build_mesh(d);
  CHECK(m.num_vertices() == 5);
  CHECK(m.num_cells() == 4);
  CHECK(m.tag(0) == Tag::Free);
  CHECK(m.tag(4) == Tag::Dirichlet);
  for (int v = 1; v < 4; ++v) CHECK(m.tag(v) == Tag::Interior);
  REQUIRE(m.wall_facets().size() == 1);
}

TEST_CASE("two-dimensional counting") {
  const Mesh m = build_mesh(dom2(1.0, 1.0, 0.5));
  CHECK(m.num_vertices() == 15);
  CHECK(m.num_cells() == 16);
  const Mesh r = refine(m);
  CHECK(r.num_cells() == 64);
  CHECK(r.h() == doctest::Approx(0.25));
}

TEST_CASE("tags on the wall") {
  const Mesh m = build_mesh(dom2(1.0, 1.0, 0.25));
  for (int v = 0; v < m.num_vertices(); ++v) {
    const Vec& x = m.vertex(v);
    if (std::abs(x(0)) < 1e-14) {
      const bool corner = std::abs(std::abs(x(1)) - 1.0) < 1e-14;
      CHECK(m.tag(v) == (corner ? Tag::Dirichlet : Tag::Free));
    } else if (m.tag(v) == Tag::Free) {
      FAIL("FREE vertex off the wall");
    }
  }
  for (int f : m.wall_facets()) {
    const Facet& facet = m.boundary_facets()[static_cast<std::size_t>(f)];
    CHECK(facet.tag == Tag::Free);
    for (int v : facet.vertices) CHECK(std::abs(m.vertex(v)(0)) <= 1e-12);
  }
}

TEST_CASE("cells cover the box with positive orientation") {
  for (double h : {0.5, 0.25, 0.1}) {
    const Mesh m = build_mesh(dom2(1.0, 1.5, h));
    double total = 0.0;
    for (int c = 0; c < m.num_cells(); ++c) {
      CHECK(m.cell_measure(c) > 0.0);
      total += m.cell_measure(c);
    }
    CHECK(std::abs(total - 3.0) <= 1e-12);
  }
}

TEST_CASE("boundary facets partition the outer boundary") {
  const Mesh m = build_mesh(dom2(1.0, 1.0, 0.25));
  std::map<std::pair<int, int>, int> edge_count;
  for (const auto& cell : m.cells()) {
    for (int a = 0; a < 3; ++a) {
      int u = cell[static_cast<std::size_t>(a)];
      int w = cell[static_cast<std::size_t>((a + 1) % 3)];
      if (u > w) std::swap(u, w);
      ++edge_count[{u, w}];
    }
  }
  std::set<std::pair<int, int>> boundary;
  for (const auto& [e, count] : edge_count) {
    if (count == 1) boundary.insert(e);
  }
  std::set<std::pair<int, int>> facets;
  double length = 0.0;
  for (const Facet& f : m.boundary_facets()) {
    facets.insert({std::min(f.vertices[0], f.vertices[1]), std::max(f.vertices[0], f.vertices[1])});
    length += m.facet_measure(f);
    const auto& cell = m.cells()[static_cast<std::size_t>(f.cell)];
    int hits = 0;
    for (int v : cell) hits += (v == f.vertices[0] || v == f.vertices[1]);
    CHECK(hits == 2);
  }
  CHECK(facets == boundary);
  CHECK(length == doctest::Approx(6.0));
}

TEST_CASE("refinement keeps parent vertices and tags") {
  const Mesh m = build_mesh(dom2(1.0, 1.0, 0.5));
  const Mesh r = refine(m);
  for (int v = 0; v < m.num_vertices(); ++v) {
    bool found = false;
    for (int w = 0; w < r.num_vertices(); ++w) {
      if ((r.vertex(w) - m.vertex(v)).norm() < 1e-14) {
        found = true;
        CHECK(r.tag(w) == m.tag(v));
      }
    }
    CHECK(found);
  }
  for (int f : r.wall_facets()) {
    for (int v : r.boundary_facets()[static_cast<std::size_t>(f)].vertices) {
      CHECK(r.vertex(v)(0) == 0.0);
    }
  }
}

TEST_CASE("half balls") {
  const Mesh m = build_mesh(dom2(1.0, 1.0, 0.25));
  const auto tiny = half_ball_vertices(m, p2(0.0, 0.0), 0.125);
  REQUIRE(tiny.vertices.size() == 1);
  CHECK(m.vertex(tiny.vertices[0]).norm() == 0.0);
  CHECK(half_ball_vertices(m, p2(0.0, 0.0), 10.0).vertices.size() ==
        static_cast<std::size_t>(m.num_vertices()));
  std::size_t prev = 0;
  for (double r = 0.05; r < 2.0; r += 0.05) {
    const auto b = half_ball_vertices(m, p2(0.3, 0.1), r);
    CHECK(b.vertices.size() >= prev);
    prev = b.vertices.size();
  }
  CHECK(half_ball_vertices(m, p2(0.1, 0.1), 0.01).underresolved);
  CHECK_THROWS_AS(half_ball_vertices(m, p2(0.0, 0.0), 0.0), PreconditionError);
}

TEST_CASE("configuration errors") {
  CHECK_THROWS_AS(build_mesh(dom2(1.0, 1.0, 0.9)), ConfigError);
  CHECK_THROWS_AS(build_mesh(dom2(-1.0, 1.0, 0.1)), ConfigError);
  CHECK_THROWS_AS(build_mesh(dom2(1.0, 1.0, 0.0)), ConfigError);
}

TEST_CASE("csv export") {
  HalfDomain d;
  d.n = 1;
  d.depth = 1.0;
  d.resolution = 0.5;
  const Mesh m = build_mesh(d);
  std::ostringstream out;
  write_vertices_csv(m, out);
  CHECK(out.str() == "id,x1,tag\n0,0,FREE\n1,0.5,INTERIOR\n2,1,DIRICHLET\n");
}
