#pragma once

// Orthographic top-down silhouettes. The camera looks along -z; image
// column grows with +x and image row grows with -y. A pixel is set iff its
// centre is covered by at least one projected triangle (edges inclusive).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "error.hpp"
#include "convex_hull.hpp"
#include "geometry.hpp"

namespace vtrap {

class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height) : width_(width), height_(height), bits_(std::size_t(width) * height, 0) {}

  int width() const { return width_; }
  int height() const { return height_; }

  bool at(int col, int row) const { return bits_[std::size_t(row) * width_ + col] != 0; }
  void set(int col, int row, bool value) { bits_[std::size_t(row) * width_ + col] = value ? 1 : 0; }
  void flip(int col, int row) { bits_[std::size_t(row) * width_ + col] ^= 1; }

  std::size_t count() const { return std::size_t(std::count(bits_.begin(), bits_.end(), std::uint8_t{1})); }

  const std::vector<std::uint8_t>& bits() const { return bits_; }

  bool operator==(const BinaryMask&) const = default;

  /// Binary PGM (P5), set pixels white.
  std::string to_pgm() const {
    std::string out = "P5\n" + std::to_string(width_) + " " + std::to_string(height_) + "\n255\n";
    for (auto b : bits_) out.push_back(b ? char(255) : char(0));
    return out;
  }

 private:
  int width_ = 0, height_ = 0;
  std::vector<std::uint8_t> bits_;
};

inline std::size_t hamming_distance(const BinaryMask& a, const BinaryMask& b) {
  if (a.width() != b.width() || a.height() != b.height()) throw InputError("hamming_distance: mask size mismatch");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.bits().size(); ++i) d += a.bits()[i] != b.bits()[i];
  return d;
}

/// Rasterises mesh vertices v mapped to pose.rotate(v) + offset. Throws
/// GeometryError when a projected vertex leaves the frame.
inline BinaryMask render_silhouette(const TriMesh& mesh, const Rotation& pose, const Vec3& offset, int resolution,
                                    double pixels_per_meter) {
  if (resolution < 16) throw InputError("render_silhouette: resolution must be >= 16");
  if (!(pixels_per_meter > 0.0)) throw InputError("render_silhouette: pixels_per_meter must be positive");
  validate(mesh);
  const double half = 0.5 * resolution;
  std::vector<Vec2> px;
  px.reserve(mesh.vertices.size());
  for (const auto& v : mesh.vertices) {
    const Vec3 p = pose.rotate(v) + offset;
    const Vec2 q{p.x * pixels_per_meter + half, half - p.y * pixels_per_meter};
    if (!(q.x >= 0.0 && q.x <= resolution && q.y >= 0.0 && q.y <= resolution))
      throw GeometryError("render_silhouette: part out of frame");
    px.push_back(q);
  }
  BinaryMask mask(resolution, resolution);
  for (const auto& t : mesh.triangles) {
    const Vec2 a = px[t[0]], b = px[t[1]], c = px[t[2]];
    const double area = cross(b - a, c - a);
    if (area == 0.0) continue;  // edge-on
    const double sgn = area > 0.0 ? 1.0 : -1.0;
    const int c0 = std::max(0, int(std::floor(std::min({a.x, b.x, c.x}) - 0.5)));
    const int c1 = std::min(resolution - 1, int(std::ceil(std::max({a.x, b.x, c.x}) - 0.5)));
    const int r0 = std::max(0, int(std::floor(std::min({a.y, b.y, c.y}) - 0.5)));
    const int r1 = std::min(resolution - 1, int(std::ceil(std::max({a.y, b.y, c.y}) - 0.5)));
    for (int r = r0; r <= r1; ++r)
      for (int col = c0; col <= c1; ++col) {
        const Vec2 p{col + 0.5, r + 0.5};
        if (sgn * cross(b - a, p - a) >= 0.0 && sgn * cross(c - b, p - b) >= 0.0 && sgn * cross(a - c, p - c) >= 0.0)
          mask.set(col, r, true);
      }
  }
  return mask;
}

}  // namespace vtrap
