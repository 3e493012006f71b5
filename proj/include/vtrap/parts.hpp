#pragma once

// Procedural test parts. All meshes are closed with outward winding.

#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "convex_hull.hpp"
#include "error.hpp"
#include "geometry.hpp"

namespace vtrap::parts {

/// Axis-aligned box [0,sx]x[0,sy]x[0,sz]; (1,1,1) is the unit cube with
/// 8 vertices and 12 triangles.
inline TriMesh box(double sx = 1.0, double sy = 1.0, double sz = 1.0) {
  TriMesh m;
  for (int i = 0; i < 8; ++i) m.vertices.push_back({(i & 1) * sx, ((i >> 1) & 1) * sy, ((i >> 2) & 1) * sz});
  m.triangles = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
                 {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  return m;
}

inline TriMesh unit_cube() { return box(); }

inline TriMesh regular_tetrahedron() {
  TriMesh m;
  m.vertices = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
  m.triangles = {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}};
  return m;
}

/// Truncated cone approximated by `sides` facets; base at z = 0.
inline TriMesh frustum(int sides, double r_bottom, double r_top, double height) {
  TriMesh m;
  const auto n = static_cast<std::uint32_t>(sides);
  for (int ring = 0; ring < 2; ++ring)
    for (int i = 0; i < sides; ++i) {
      const double a = 2.0 * std::numbers::pi * i / sides;
      const double r = ring == 0 ? r_bottom : r_top;
      m.vertices.push_back({r * std::cos(a), r * std::sin(a), ring * height});
    }
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t j = (i + 1) % n;
    m.triangles.push_back({i, j, n + j});
    m.triangles.push_back({i, n + j, n + i});
  }
  for (std::uint32_t i = 1; i + 1 < n; ++i) {
    m.triangles.push_back({0, i + 1, i});
    m.triangles.push_back({n, n + i, n + i + 1});
  }
  return m;
}

/// Subdivided icosahedron projected onto the sphere of radius `radius`.
inline TriMesh icosphere(int subdivisions, double radius = 1.0) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriMesh m;
  m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : m.vertices) v = v.normalized();
  m.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                 {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                 {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> mids;
    auto mid = [&](std::uint32_t a, std::uint32_t b) {
      const auto key = std::minmax(a, b);
      auto [it, inserted] = mids.try_emplace({key.first, key.second}, std::uint32_t(m.vertices.size()));
      if (inserted) m.vertices.push_back(((m.vertices[a] + m.vertices[b]) * 0.5).normalized());
      return it->second;
    };
    std::vector<std::array<std::uint32_t, 3>> next;
    for (const auto& tri : m.triangles) {
      const auto a = mid(tri[0], tri[1]), b = mid(tri[1], tri[2]), c = mid(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    m.triangles = std::move(next);
  }
  for (auto& v : m.vertices) v = v * radius;
  return m;
}

/// Ear-clipping triangulation of a simple counter-clockwise polygon.
inline std::vector<std::array<std::uint32_t, 3>> triangulate_polygon(const std::vector<Vec2>& poly) {
  std::vector<std::uint32_t> idx(poly.size());
  for (std::uint32_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::vector<std::array<std::uint32_t, 3>> out;
  while (idx.size() > 3) {
    bool clipped = false;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto ia = idx[(k + idx.size() - 1) % idx.size()], ib = idx[k], ic = idx[(k + 1) % idx.size()];
      const Vec2 a = poly[ia], b = poly[ib], c = poly[ic];
      if (cross(b - a, c - b) <= 0.0) continue;  // reflex
      bool empty = true;
      for (auto j : idx) {
        if (j == ia || j == ib || j == ic) continue;
        const Vec2 p = poly[j];
        if (cross(b - a, p - a) >= 0.0 && cross(c - b, p - b) >= 0.0 && cross(a - c, p - c) >= 0.0) {
          empty = false;
          break;
        }
      }
      if (!empty) continue;
      out.push_back({ia, ib, ic});
      idx.erase(idx.begin() + long(k));
      clipped = true;
      break;
    }
    if (!clipped) throw GeometryError("triangulate_polygon: polygon is not simple");
  }
  out.push_back({idx[0], idx[1], idx[2]});
  return out;
}

/// Straight extrusion of a CCW polygon from z = 0 to z = height.
inline TriMesh prism(const std::vector<Vec2>& poly, double height) {
  TriMesh m;
  const auto n = static_cast<std::uint32_t>(poly.size());
  for (double z : {0.0, height})
    for (const auto& p : poly) m.vertices.push_back({p.x, p.y, z});
  for (const auto& t : triangulate_polygon(poly)) {
    m.triangles.push_back({t[0], t[2], t[1]});
    m.triangles.push_back({n + t[0], n + t[1], n + t[2]});
  }
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t j = (i + 1) % n;
    m.triangles.push_back({i, j, n + j});
    m.triangles.push_back({i, n + j, n + i});
  }
  return m;
}

/// Closed axis-aligned box with inward-facing winding, for carving voids.
inline void add_void(TriMesh& mesh, const Vec3& lo, const Vec3& hi) {
  TriMesh b = box(hi.x - lo.x, hi.y - lo.y, hi.z - lo.z);
  const auto base = static_cast<std::uint32_t>(mesh.vertices.size());
  for (const auto& v : b.vertices) mesh.vertices.push_back(v + lo);
  for (const auto& t : b.triangles) mesh.triangles.push_back({base + t[0], base + t[2], base + t[1]});
}

/// Plate whose mid-plane outline is the CCW polygon `outline` (at z = 0)
/// with both caps inset by `inset` (mitred) at z = -thickness/2 and
/// z = +thickness/2. Sloped rims keep the part from resting on its edges.
inline TriMesh bevelled_plate(const std::vector<Vec2>& outline, double thickness, double inset) {
  const std::size_t n = outline.size();
  std::vector<Vec2> inner(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 prev = outline[(i + n - 1) % n], cur = outline[i], next = outline[(i + 1) % n];
    auto inward = [](Vec2 d) {
      const double l = norm(d);
      return Vec2{-d.y / l, d.x / l};
    };
    const Vec2 n1 = inward(cur - prev), n2 = inward(next - cur);
    const double s = inset / (1.0 + dot(n1, n2));
    inner[i] = cur + (n1 + n2) * s;
  }
  TriMesh m;
  const auto N = static_cast<std::uint32_t>(n);
  for (const auto& p : inner) m.vertices.push_back({p.x, p.y, -0.5 * thickness});
  for (const auto& p : outline) m.vertices.push_back({p.x, p.y, 0.0});
  for (const auto& p : inner) m.vertices.push_back({p.x, p.y, 0.5 * thickness});
  for (const auto& t : triangulate_polygon(inner)) {
    m.triangles.push_back({t[0], t[2], t[1]});
    m.triangles.push_back({2 * N + t[0], 2 * N + t[1], 2 * N + t[2]});
  }
  for (std::uint32_t i = 0; i < N; ++i) {
    const std::uint32_t j = (i + 1) % N;
    m.triangles.push_back({i, j, N + j});
    m.triangles.push_back({i, N + j, N + i});
    m.triangles.push_back({N + i, N + j, 2 * N + j});
    m.triangles.push_back({N + i, 2 * N + j, 2 * N + i});
  }
  return m;
}

/// Cap-like test part: bevelled isosceles-trapezoid plate with a hidden
/// internal void off to one side. The outline is mirror symmetric, so
/// flipping the part over often leaves its top-down silhouette unchanged,
/// while the void shifts the centre of mass and breaks the symmetry of
/// which wall contacts are stable.
inline TriMesh cap_like() {
  const std::vector<Vec2> outline = {{0.0, 0.0}, {6.0, 0.0}, {4.8, 2.0}, {1.2, 2.0}};
  TriMesh m = bevelled_plate(outline, 0.5, 0.35);
  add_void(m, {1.3, 0.35, -0.18}, {2.9, 1.45, 0.18});
  return m.scaled(0.01);
}

/// Scalene L-shaped bevelled plate with no mirror symmetry.
inline TriMesh l_plate() {
  const std::vector<Vec2> outline = {{0.0, 0.0}, {4.0, 0.0}, {4.0, 1.2}, {1.3, 1.2}, {1.3, 2.6}, {0.0, 2.6}};
  return bevelled_plate(outline, 0.5, 0.3).scaled(0.01);
}

inline TriMesh by_name(const std::string& name) {
  if (name == "cube") return unit_cube();
  if (name == "tetrahedron") return regular_tetrahedron();
  if (name == "cap") return cap_like();
  if (name == "lplate") return l_plate();
  if (name == "icosphere") return icosphere(3);
  if (name == "frustum") return frustum(16, 1.0, 0.8, 0.2);
  throw InputError("unknown built-in part '" + name + "' (cube, tetrahedron, cap, lplate, icosphere, frustum)");
}

}  // namespace vtrap::parts
