#pragma once

// Part geometry: vectors, rotations, triangle meshes, mesh ingestion and
// mass properties. Units are meters unless stated otherwise.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "rng.hpp"

namespace vtrap {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  constexpr Vec3() = default;
  constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  constexpr bool operator==(const Vec3&) const = default;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  Vec3 normalized() const { return *this / norm(); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }
constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

// Unit quaternion (w, x, y, z). q and -q describe the same rotation.
class Rotation {
 public:
  Rotation() = default;

  // Normalises; throws on a zero or non-finite quaternion.
  Rotation(double w, double x, double y, double z) {
    const double n = std::sqrt(w * w + x * x + y * y + z * z);
    if (!(n > 0.0) || !std::isfinite(n)) throw InputError("rotation: quaternion must be finite and non-zero");
    q_ = {w / n, x / n, y / n, z / n};
  }

  static Rotation identity() { return Rotation(); }

  static Rotation axis_angle(const Vec3& axis, double angle) {
    const Vec3 a = axis.normalized();
    const double s = std::sin(0.5 * angle);
    return Rotation(std::cos(0.5 * angle), a.x * s, a.y * s, a.z * s);
  }

  static Rotation about_z(double angle) { return axis_angle({0, 0, 1}, angle); }

  // Minimal rotation taking unit vector `from` onto unit vector `to`.
  static Rotation between(const Vec3& from, const Vec3& to) {
    const Vec3 a = from.normalized(), b = to.normalized();
    const double c = dot(a, b);
    if (c < -1.0 + 1e-12) {
      // Antiparallel: half turn about an axis perpendicular to `a`.
      const Vec3 e = std::abs(a.x) <= std::abs(a.y) && std::abs(a.x) <= std::abs(a.z) ? Vec3{1, 0, 0}
                     : std::abs(a.y) <= std::abs(a.z)                                 ? Vec3{0, 1, 0}
                                                                                      : Vec3{0, 0, 1};
      const Vec3 axis = cross(a, e).normalized();
      return Rotation(0.0, axis.x, axis.y, axis.z);
    }
    const Vec3 v = cross(a, b);
    return Rotation(1.0 + c, v.x, v.y, v.z);
  }

  // Shoemake's uniform sampling on SO(3).
  static Rotation uniform(Rng& rng) {
    const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
    const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
    const double t2 = 2.0 * std::numbers::pi * u2, t3 = 2.0 * std::numbers::pi * u3;
    return Rotation(b * std::cos(t3), a * std::sin(t2), a * std::cos(t2), b * std::sin(t3));
  }

  double w() const { return q_[0]; }
  double x() const { return q_[1]; }
  double y() const { return q_[2]; }
  double z() const { return q_[3]; }
  const std::array<double, 4>& coeffs() const { return q_; }

  Rotation operator*(const Rotation& o) const {
    const auto& a = q_;
    const auto& b = o.q_;
    Rotation r;
    r.q_ = {a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
            a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
            a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
            a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
    r.renormalize();
    return r;
  }

  Rotation inverse() const {
    Rotation r;
    r.q_ = {q_[0], -q_[1], -q_[2], -q_[3]};
    return r;
  }

  Rotation negated() const {
    Rotation r;
    r.q_ = {-q_[0], -q_[1], -q_[2], -q_[3]};
    return r;
  }

  Vec3 rotate(const Vec3& v) const {
    const Vec3 u{q_[1], q_[2], q_[3]};
    const Vec3 t = 2.0 * cross(u, v);
    return v + q_[0] * t + cross(u, t);
  }

  bool operator==(const Rotation&) const = default;

 private:
  void renormalize() {
    const double n = std::sqrt(q_[0] * q_[0] + q_[1] * q_[1] + q_[2] * q_[2] + q_[3] * q_[3]);
    for (double& c : q_) c /= n;
  }

  std::array<double, 4> q_{1.0, 0.0, 0.0, 0.0};
};

/// Geodesic angle between two rotations in [0, pi], identifying q with -q.
inline double angular_distance(const Rotation& a, const Rotation& b) {
  const auto& p = a.coeffs();
  const auto& q = b.coeffs();
  const double d = p[0] * q[0] + p[1] * q[1] + p[2] * q[2] + p[3] * q[3];
  const double s = d < 0.0 ? -1.0 : 1.0;
  double diff = 0.0, sum = 0.0;
  for (int i = 0; i < 4; ++i) {
    diff += (p[i] - s * q[i]) * (p[i] - s * q[i]);
    sum += (p[i] + s * q[i]) * (p[i] + s * q[i]);
  }
  // atan2 gives half the 4D angle between p and s*q; the rotation angle is twice that.
  return 4.0 * std::atan2(std::sqrt(diff), std::sqrt(sum));
}

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;

  TriMesh transformed(const Rotation& r, const Vec3& t = {}) const {
    TriMesh m = *this;
    for (auto& v : m.vertices) v = r.rotate(v) + t;
    return m;
  }

  TriMesh scaled(double s) const {
    TriMesh m = *this;
    for (auto& v : m.vertices) v = v * s;
    return m;
  }

  double diameter() const {
    if (vertices.empty()) return 0.0;
    Vec3 lo = vertices.front(), hi = vertices.front();
    for (const auto& v : vertices) {
      lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
      hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
    }
    return (hi - lo).norm();
  }
};

// Throws InputError on out-of-range indices, non-finite vertices or
// fewer than 4 vertices / no triangles.
inline void validate(const TriMesh& mesh) {
  if (mesh.vertices.empty() || mesh.triangles.empty()) throw InputError("mesh: empty mesh");
  if (mesh.vertices.size() < 4) throw InputError("mesh: fewer than 4 vertices");
  for (const auto& v : mesh.vertices)
    if (!v.finite()) throw InputError("mesh: non-finite vertex");
  for (const auto& t : mesh.triangles)
    for (auto i : t)
      if (i >= mesh.vertices.size()) throw InputError("mesh: index out of range");
}

enum class MeshFormat { ObjAscii, StlBinary };

namespace detail {

inline TriMesh load_obj(std::string_view text) {
  TriMesh mesh;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw InputError("obj line " + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      double c[3];
      for (double& x : c)
        if (!(ls >> x)) fail("malformed vertex record");
      mesh.vertices.push_back({c[0], c[1], c[2]});
    } else if (tag == "f") {
      std::vector<std::uint32_t> idx;
      std::string tok;
      while (ls >> tok) {
        const auto slash = tok.find('/');
        const std::string head = tok.substr(0, slash);
        long long i = 0;
        try {
          std::size_t used = 0;
          i = std::stoll(head, &used);
          if (used != head.size()) fail("malformed face index '" + tok + "'");
        } catch (const std::logic_error&) {
          fail("malformed face index '" + tok + "'");
        }
        const auto n = static_cast<long long>(mesh.vertices.size());
        if (i < 0) i = n + i + 1;  // relative index
        if (i < 1 || i > n) fail("index out of range");
        idx.push_back(static_cast<std::uint32_t>(i - 1));
      }
      if (idx.size() < 3) fail("face has fewer than 3 vertices (non-triangulatable)");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
    // Other record types (vn, vt, o, g, s, usemtl, ...) are ignored.
  }
  if (mesh.vertices.empty() || mesh.triangles.empty()) throw InputError("obj: empty mesh");
  return mesh;
}

inline TriMesh load_stl(std::string_view bytes) {
  if (bytes.size() < 84) throw InputError("stl: truncated header");
  std::uint32_t count = 0;
  std::memcpy(&count, bytes.data() + 80, 4);
  if (count == 0) throw InputError("stl: empty mesh");
  if (bytes.size() < 84 + std::size_t(count) * 50) throw InputError("stl: truncated triangle records");
  TriMesh mesh;
  std::map<std::array<float, 3>, std::uint32_t> weld;
  const char* p = bytes.data() + 84;
  for (std::uint32_t t = 0; t < count; ++t, p += 50) {
    std::array<std::uint32_t, 3> tri{};
    for (int k = 0; k < 3; ++k) {
      std::array<float, 3> v{};
      std::memcpy(v.data(), p + 12 + 12 * k, 12);
      for (float c : v)
        if (!std::isfinite(c)) throw InputError("stl: non-finite vertex in triangle " + std::to_string(t));
      auto [it, inserted] = weld.try_emplace(v, static_cast<std::uint32_t>(mesh.vertices.size()));
      if (inserted) mesh.vertices.push_back({v[0], v[1], v[2]});
      tri[k] = it->second;
    }
    mesh.triangles.push_back(tri);
  }
  return mesh;
}

}  // namespace detail

/// Parses an ASCII OBJ (v/f records, polygons fan-triangulated) or a binary
/// STL (bit-identical vertices are welded).
inline TriMesh load_mesh(std::string_view bytes, MeshFormat format) {
  TriMesh mesh = format == MeshFormat::ObjAscii ? detail::load_obj(bytes) : detail::load_stl(bytes);
  validate(mesh);
  return mesh;
}

inline std::string to_obj(const TriMesh& mesh) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  return out.str();
}

inline std::string to_stl(const TriMesh& mesh) {
  std::string out(80, '\0');
  const auto count = static_cast<std::uint32_t>(mesh.triangles.size());
  out.append(reinterpret_cast<const char*>(&count), 4);
  for (const auto& t : mesh.triangles) {
    const Vec3 n = cross(mesh.vertices[t[1]] - mesh.vertices[t[0]], mesh.vertices[t[2]] - mesh.vertices[t[0]]);
    auto put = [&](const Vec3& v) {
      const float f[3] = {float(v.x), float(v.y), float(v.z)};
      out.append(reinterpret_cast<const char*>(f), 12);
    };
    put(n.norm() > 0 ? n.normalized() : n);
    for (auto i : t) put(mesh.vertices[i]);
    out.append(2, '\0');
  }
  return out;
}

struct MassProperties {
  double volume = 0.0;
  Vec3 com;
};

/// Volume and centre of mass (uniform density) by summing signed tetrahedra
/// against the first vertex. The mesh must be closed and consistently oriented
/// with outward normals.
inline MassProperties mass_properties(const TriMesh& mesh) {
  validate(mesh);
  // Each directed edge must appear once and be matched by its reverse.
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> directed;
  for (const auto& t : mesh.triangles)
    for (int k = 0; k < 3; ++k) {
      const auto a = t[k], b = t[(k + 1) % 3];
      if (a == b) throw GeometryError("mass_properties: degenerate triangle with repeated vertex");
      if (++directed[{a, b}] > 1)
        throw GeometryError("mass_properties: non-orientable or non-manifold mesh (edge " + std::to_string(a) + "-" +
                            std::to_string(b) + " used twice in the same direction)");
    }
  for (const auto& [e, n] : directed)
    if (!directed.contains({e.second, e.first}))
      throw GeometryError("mass_properties: open mesh (boundary edge " + std::to_string(e.first) + "-" +
                          std::to_string(e.second) + ")");

  // Accumulate relative to the first vertex to limit cancellation.
  const Vec3 o = mesh.vertices.front();
  double six_vol = 0.0;
  Vec3 weighted;
  for (const auto& t : mesh.triangles) {
    const Vec3 a = mesh.vertices[t[0]] - o, b = mesh.vertices[t[1]] - o, c = mesh.vertices[t[2]] - o;
    const double d = dot(a, cross(b, c));
    six_vol += d;
    weighted += (a + b + c) * d;
  }
  if (six_vol < 0.0) throw GeometryError("mass_properties: negative volume (inverted winding)");
  if (!(six_vol > 0.0)) throw GeometryError("mass_properties: zero volume");
  return {six_vol / 6.0, o + weighted / (4.0 * six_vol)};
}

}  // namespace vtrap
