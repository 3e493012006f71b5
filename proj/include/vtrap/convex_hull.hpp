#pragma once

// Incremental 3D convex hull with coplanar triangles merged into polygonal
// faces. Polygonal faces are what resting-face analysis works on.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "error.hpp"
#include "geometry.hpp"

namespace vtrap {

struct Vec2 {
  double x = 0.0, y = 0.0;
  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  bool operator==(const Vec2&) const = default;
};

inline double dot(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
inline double cross(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }
inline double norm(const Vec2& a) { return std::sqrt(dot(a, a)); }

/// Andrew's monotone chain. Returns indices into `pts` in counter-clockwise
/// order, collinear points dropped. Ties resolved by index.
inline std::vector<std::size_t> convex_hull_2d(std::span<const Vec2> pts, double eps = 0.0) {
  std::vector<std::size_t> order(pts.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (pts[a].x != pts[b].x) return pts[a].x < pts[b].x;
    if (pts[a].y != pts[b].y) return pts[a].y < pts[b].y;
    return a < b;
  });
  order.erase(std::unique(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pts[a] == pts[b]; }),
              order.end());
  if (order.size() < 3) return order;
  std::vector<std::size_t> h(2 * order.size());
  std::size_t k = 0;
  auto turn = [&](std::size_t o, std::size_t a, std::size_t b) { return cross(pts[a] - pts[o], pts[b] - pts[o]); };
  for (std::size_t i : order) {
    while (k >= 2 && turn(h[k - 2], h[k - 1], i) <= eps) --k;
    h[k++] = i;
  }
  for (std::size_t j = order.size() - 1, t = k + 1; j-- > 0;) {
    const std::size_t i = order[j];
    while (k >= t && turn(h[k - 2], h[k - 1], i) <= eps) --k;
    h[k++] = i;
  }
  h.resize(k - 1);
  return h;
}

struct HullFace {
  std::vector<std::uint32_t> loop;  // hull vertex indices, CCW seen from outside
  Vec3 normal;                      // outward, unit length
  double offset = 0.0;              // dot(normal, p) == offset on the plane
};

struct ConvexHull {
  std::vector<Vec3> vertices;
  std::vector<HullFace> faces;
  // neighbors[f][k]: face across the edge loop[k] -> loop[k+1] of face f.
  std::vector<std::vector<int>> neighbors;
  double diameter = 0.0;

  double signed_distance(std::size_t face, const Vec3& p) const {
    return dot(faces[face].normal, p) - faces[face].offset;
  }

  bool contains(const Vec3& p, double tol) const {
    for (std::size_t f = 0; f < faces.size(); ++f)
      if (signed_distance(f, p) > tol) return false;
    return true;
  }
};

inline constexpr double kCoplanarMergeAngle = 1e-4;  // radians

namespace detail {

struct HullTri {
  std::array<std::uint32_t, 3> v;
  Vec3 n;
  double d = 0.0;
  bool alive = true;
};

inline std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) { return (std::uint64_t(a) << 32) | b; }

// Orthonormal basis (u, v) spanning the plane with normal n, u x v = n.
inline std::pair<Vec3, Vec3> plane_basis(const Vec3& n) {
  const Vec3 e = std::abs(n.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  const Vec3 u = cross(e, n).normalized();
  return {u, cross(n, u)};
}

}  // namespace detail

/// Convex hull of the mesh vertices. Throws GeometryError for flat or
/// collinear input.
inline ConvexHull convex_hull(std::span<const Vec3> points) {
  using detail::HullTri;
  if (points.size() < 4) throw GeometryError("convex_hull: fewer than 4 points");
  Vec3 lo = points[0], hi = points[0];
  for (const auto& p : points) {
    if (!p.finite()) throw GeometryError("convex_hull: non-finite point");
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  const double diam = (hi - lo).norm();
  const double eps = 1e-10 * diam;
  if (!(diam > 0.0)) throw GeometryError("convex_hull: degenerate input (all points coincide)");

  // Initial simplex from extreme points.
  std::size_t i0 = 0;
  for (std::size_t i = 1; i < points.size(); ++i)
    if (points[i].x < points[i0].x) i0 = i;
  std::size_t i1 = i0;
  double best = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (double d = (points[i] - points[i0]).norm(); d > best) best = d, i1 = i;
  if (best <= eps) throw GeometryError("convex_hull: degenerate input (coincident points)");
  const Vec3 dir = (points[i1] - points[i0]).normalized();
  std::size_t i2 = i0;
  best = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (double d = cross(points[i] - points[i0], dir).norm(); d > best) best = d, i2 = i;
  if (best <= 1e-9 * diam) throw GeometryError("convex_hull: degenerate input (collinear points)");
  const Vec3 pn = cross(points[i1] - points[i0], points[i2] - points[i0]).normalized();
  std::size_t i3 = i0;
  best = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (double d = std::abs(dot(points[i] - points[i0], pn)); d > best) best = d, i3 = i;
  if (best <= 1e-9 * diam) throw GeometryError("convex_hull: degenerate input (coplanar points)");

  const Vec3 interior = (points[i0] + points[i1] + points[i2] + points[i3]) * 0.25;
  std::vector<HullTri> tris;
  std::map<std::uint64_t, std::size_t> edge_owner;  // directed edge -> triangle

  auto add_tri = [&](std::uint32_t a, std::uint32_t b, std::uint32_t c) {
    Vec3 n = cross(points[b] - points[a], points[c] - points[a]);
    if (dot(n, points[a] - interior) < 0.0) {
      std::swap(b, c);
      n = -n;
    }
    HullTri t{{a, b, c}, n.normalized(), 0.0, true};
    t.d = dot(t.n, points[a]);
    const std::size_t id = tris.size();
    tris.push_back(t);
    for (int k = 0; k < 3; ++k) edge_owner[detail::edge_key(t.v[k], t.v[(k + 1) % 3])] = id;
  };
  const std::uint32_t s[4] = {std::uint32_t(i0), std::uint32_t(i1), std::uint32_t(i2), std::uint32_t(i3)};
  add_tri(s[0], s[1], s[2]);
  add_tri(s[0], s[1], s[3]);
  add_tri(s[0], s[2], s[3]);
  add_tri(s[1], s[2], s[3]);

  std::vector<std::size_t> visible;
  for (std::size_t pi = 0; pi < points.size(); ++pi) {
    if (pi == i0 || pi == i1 || pi == i2 || pi == i3) continue;
    const Vec3& p = points[pi];
    visible.clear();
    for (std::size_t t = 0; t < tris.size(); ++t)
      if (tris[t].alive && dot(tris[t].n, p) - tris[t].d > eps) visible.push_back(t);
    if (visible.empty()) continue;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> horizon;
    for (std::size_t t : visible) {
      for (int k = 0; k < 3; ++k) {
        const auto a = tris[t].v[k], b = tris[t].v[(k + 1) % 3];
        const auto it = edge_owner.find(detail::edge_key(b, a));
        const std::size_t other = it->second;
        if (!std::binary_search(visible.begin(), visible.end(), other)) horizon.emplace_back(a, b);
      }
    }
    for (std::size_t t : visible) {
      tris[t].alive = false;
      for (int k = 0; k < 3; ++k) edge_owner.erase(detail::edge_key(tris[t].v[k], tris[t].v[(k + 1) % 3]));
    }
    for (const auto& [a, b] : horizon) {
      const Vec3 n = cross(points[b] - points[a], p - points[a]);
      HullTri t{{a, b, std::uint32_t(pi)}, n.normalized(), 0.0, true};
      t.d = dot(t.n, points[a]);
      const std::size_t id = tris.size();
      tris.push_back(t);
      for (int k = 0; k < 3; ++k) edge_owner[detail::edge_key(t.v[k], t.v[(k + 1) % 3])] = id;
    }
  }

  std::vector<std::size_t> live;
  for (std::size_t t = 0; t < tris.size(); ++t)
    if (tris[t].alive) live.push_back(t);

  // Group coplanar neighbours by BFS against the seed triangle's plane: the
  // dihedral angle must be below the merge angle and the vertices must stay
  // on the seed plane, otherwise a long sliver could pull the merged face
  // off its points.
  const double cos_merge = std::cos(kCoplanarMergeAngle);
  const double plane_tol = 1e-8 * diam;
  std::map<std::size_t, int> group_of;
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t seed : live) {
    if (group_of.contains(seed)) continue;
    const int g = static_cast<int>(groups.size());
    groups.push_back({seed});
    group_of[seed] = g;
    for (std::size_t qi = 0; qi < groups[g].size(); ++qi) {
      const auto& t = tris[groups[g][qi]];
      for (int k = 0; k < 3; ++k) {
        const std::size_t nb = edge_owner.at(detail::edge_key(t.v[(k + 1) % 3], t.v[k]));
        if (group_of.contains(nb)) continue;
        const auto& st = tris[seed];
        const bool on_plane = std::all_of(tris[nb].v.begin(), tris[nb].v.end(), [&](std::uint32_t pi) {
          return std::abs(dot(st.n, points[pi]) - st.d) <= plane_tol;
        });
        if (dot(tris[nb].n, st.n) >= cos_merge && on_plane) {
          group_of[nb] = g;
          groups[g].push_back(nb);
        }
      }
    }
  }

  ConvexHull hull;
  hull.diameter = diam;
  std::map<std::uint32_t, std::uint32_t> remap;
  auto hull_index = [&](std::uint32_t pi) {
    auto [it, inserted] = remap.try_emplace(pi, std::uint32_t(hull.vertices.size()));
    if (inserted) hull.vertices.push_back(points[pi]);
    return it->second;
  };
  for (const auto& group : groups) {
    Vec3 n;
    std::vector<std::uint32_t> verts;
    for (std::size_t t : group) {
      const auto& tri = tris[t];
      n += cross(points[tri.v[1]] - points[tri.v[0]], points[tri.v[2]] - points[tri.v[0]]);
      verts.insert(verts.end(), tri.v.begin(), tri.v.end());
    }
    std::sort(verts.begin(), verts.end());
    verts.erase(std::unique(verts.begin(), verts.end()), verts.end());
    n = n.normalized();
    const auto [u, v] = detail::plane_basis(n);
    std::vector<Vec2> uv;
    for (auto pi : verts) uv.push_back({dot(points[pi], u), dot(points[pi], v)});
    HullFace face;
    face.normal = n;
    double off = 0.0;
    for (std::size_t k : convex_hull_2d(uv)) {
      face.loop.push_back(verts[k]);
      off += dot(n, points[verts[k]]);
    }
    face.offset = off / double(face.loop.size());
    hull.faces.push_back(std::move(face));
  }
  // Vertices are numbered in face order for stable output.
  for (auto& f : hull.faces)
    for (auto& vi : f.loop) vi = hull_index(vi);

  const double tol = 1e-7 * diam;
  hull.neighbors.resize(hull.faces.size());
  for (std::size_t f = 0; f < hull.faces.size(); ++f) {
    const auto& loop = hull.faces[f].loop;
    for (std::size_t k = 0; k < loop.size(); ++k) {
      const auto a = loop[k], b = loop[(k + 1) % loop.size()];
      int found = -1;
      for (std::size_t g = 0; g < hull.faces.size() && found < 0; ++g) {
        if (g == f) continue;
        const auto& gl = hull.faces[g].loop;
        if (std::find(gl.begin(), gl.end(), a) != gl.end() && std::find(gl.begin(), gl.end(), b) != gl.end())
          found = int(g);
      }
      if (found < 0) {
        // Crease vertex on the edge: fall back to the best-aligned face
        // whose plane contains the edge midpoint.
        const Vec3 mid = (hull.vertices[a] + hull.vertices[b]) * 0.5;
        double best_dot = -2.0;
        for (std::size_t g = 0; g < hull.faces.size(); ++g) {
          if (g == f || std::abs(hull.signed_distance(g, mid)) > tol) continue;
          if (double d = dot(hull.faces[g].normal, hull.faces[f].normal); d > best_dot) best_dot = d, found = int(g);
        }
      }
      if (found < 0) throw GeometryError("convex_hull: could not resolve face adjacency");
      hull.neighbors[f].push_back(found);
    }
  }
  return hull;
}

inline ConvexHull convex_hull(const TriMesh& mesh) { return convex_hull(std::span<const Vec3>(mesh.vertices)); }

inline double face_area(const ConvexHull& hull, std::size_t f) {
  const auto& loop = hull.faces[f].loop;
  Vec3 acc;
  for (std::size_t k = 1; k + 1 < loop.size(); ++k)
    acc += cross(hull.vertices[loop[k]] - hull.vertices[loop[0]], hull.vertices[loop[k + 1]] - hull.vertices[loop[0]]);
  return 0.5 * dot(acc, hull.faces[f].normal);
}

}  // namespace vtrap
