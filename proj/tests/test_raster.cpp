#include <catch_amalgamated.hpp>

#include <numbers>

#include "vtrap/parts.hpp"
#include "vtrap/raster.hpp"

using namespace vtrap;

namespace {

// Unit cube centred at the origin so the identity footprint is centred.
TriMesh centred_cube() { return parts::unit_cube().transformed(Rotation::identity(), {-0.5, -0.5, -0.5}); }

}  // namespace

TEST_CASE("cube at identity is an axis-aligned 32x32 square") {
  const BinaryMask m = render_silhouette(centred_cube(), Rotation::identity(), {}, 64, 32.0);
  CHECK(m.width() == 64);
  CHECK(m.height() == 64);
  // analytic footprint: x in [-0.5, 0.5] m -> pixels [16, 48)
  int mismatches = 0;
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) {
      const bool inside = c >= 16 && c < 48 && r >= 16 && r < 48;
      const bool boundary = c == 15 || c == 16 || c == 47 || c == 48 || r == 15 || r == 16 || r == 47 || r == 48;
      if (m.at(c, r) != inside && !boundary) ++mismatches;
    }
  CHECK(mismatches == 0);
  CHECK(std::abs(int(m.count()) - 32 * 32) <= 4 * 33);
}

TEST_CASE("cube rotated 45 degrees keeps its footprint area within 2%") {
  const BinaryMask m = render_silhouette(centred_cube(), Rotation::about_z(std::numbers::pi / 4), {}, 64, 32.0);
  CHECK(std::abs(double(m.count()) - 1024.0) <= 0.02 * 1024.0);
  // diamond: the centre row spans about sqrt(2) * 32 pixels
  int row = 0;
  for (int c = 0; c < 64; ++c) row += m.at(c, 32);
  CHECK(std::abs(row - 45) <= 2);
}

TEST_CASE("out of frame is an error") {
  CHECK_THROWS_AS(render_silhouette(centred_cube(), Rotation::identity(), {5.0, 0, 0}, 64, 32.0), GeometryError);
  CHECK_THROWS_AS(render_silhouette(centred_cube(), Rotation::identity(), {}, 64, 200.0), GeometryError);
  CHECK_THROWS_AS(render_silhouette(centred_cube(), Rotation::identity(), {}, 8, 2.0), InputError);
}

TEST_CASE("rendering is deterministic") {
  Rng rng(9);
  const Rotation q = Rotation::uniform(rng);
  const TriMesh cap = parts::cap_like();
  const auto a = render_silhouette(cap, q, {0.001, -0.002, 0}, 64, 600.0);
  const auto b = render_silhouette(cap, q, {0.001, -0.002, 0}, 64, 600.0);
  CHECK(a == b);
  CHECK(a.count() > 0);
}

TEST_CASE("whole-pixel offsets shift the mask bitwise") {
  Rng rng(21);
  const TriMesh tet = parts::regular_tetrahedron();
  const double ppm = 8.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Rotation q = Rotation::uniform(rng);
    const int dx = int(rng() % 7) - 3, dy = int(rng() % 7) - 3;
    const auto a = render_silhouette(tet, q, {}, 64, ppm);
    // +x metres -> +columns; +y metres -> -rows
    const auto b = render_silhouette(tet, q, {dx / ppm, dy / ppm, 0}, 64, ppm);
    REQUIRE(a.count() == b.count());
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 64; ++c) {
        const int c2 = c + dx, r2 = r - dy;
        if (c2 >= 0 && c2 < 64 && r2 >= 0 && r2 < 64) REQUIRE(a.at(c, r) == b.at(c2, r2));
      }
  }
}

TEST_CASE("pgm export") {
  BinaryMask m(4, 3);
  m.set(1, 1, true);
  const std::string pgm = m.to_pgm();
  CHECK(pgm.rfind("P5\n4 3\n255\n", 0) == 0);
  CHECK(pgm.size() == std::string("P5\n4 3\n255\n").size() + 12);
  CHECK(static_cast<unsigned char>(pgm[pgm.size() - 12 + 5]) == 255);
}

TEST_CASE("hamming distance") {
  BinaryMask a(8, 8), b(8, 8);
  b.set(0, 0, true);
  b.flip(3, 4);
  CHECK(hamming_distance(a, b) == 2);
  CHECK(hamming_distance(a, a) == 0);
}
