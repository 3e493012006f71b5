#pragma once

// Stable resting poses of a part on a tilted track pressed against a wall.
//
// Settling is quasi-static: the part first tips over hull edges until its
// centre of mass projects inside the support face, then its top-down hull
// polygon tips against the wall line until an edge lies flush. A settled
// pose is therefore identified by (support face, wall edge) and its
// rotation is rebuilt canonically from that pair, which makes settling an
// exact projection.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "convex_hull.hpp"
#include "error.hpp"
#include "geometry.hpp"
#include "rng.hpp"

namespace vtrap {

enum class WallSide { Left, Right };

struct TrackConfig {
  WallSide wall_side = WallSide::Left;
  double surface_tilt = 0.05;  // radians; only the sign of the in-plane push matters
  Vec3 gravity{0.0, 0.0, -9.82};

  void validate() const {
    if (!(surface_tilt >= 0.0 && surface_tilt < std::numbers::pi / 8))
      throw InputError("track: surface_tilt must lie in [0, pi/8)");
    if (!(gravity.z < 0.0) || std::abs(gravity.x) > 1e-12 * std::abs(gravity.z) ||
        std::abs(gravity.y) > 1e-12 * std::abs(gravity.z))
      throw InputError("track: gravity must point along -z");
  }

  // Unit in-plane direction pushing parts into the wall.
  Vec3 wall_push() const { return wall_side == WallSide::Left ? Vec3{0, 1, 0} : Vec3{0, -1, 0}; }
};

struct StablePose {
  int id = 0;
  Rotation representative;
  int support_face = -1;
  int wall_edge = -1;
  double prior = 0.0;
};

struct PoseSet {
  std::string part_id;
  std::vector<StablePose> poses;

  std::size_t size() const { return poses.size(); }

  std::vector<double> priors() const {
    std::vector<double> p;
    for (const auto& s : poses) p.push_back(s.prior);
    return p;
  }
};

struct PoseGraph {
  std::vector<Rotation> nodes;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<int> component;  // per node, numbered by smallest member index
  int n_components = 0;
};

// ---------------------------------------------------------------------------
// Resting-face analysis

namespace detail {

// Projection of p onto the face plane in face-local 2D coordinates, and the
// face loop in the same coordinates (counter-clockwise).
struct FaceFrame {
  std::vector<Vec2> loop;
  Vec2 point;
};

inline FaceFrame face_frame(const ConvexHull& hull, std::size_t f, const Vec3& p) {
  const auto [u, v] = plane_basis(hull.faces[f].normal);
  FaceFrame fr;
  for (auto vi : hull.faces[f].loop) fr.loop.push_back({dot(hull.vertices[vi], u), dot(hull.vertices[vi], v)});
  fr.point = {dot(p, u), dot(p, v)};
  return fr;
}

// Signed inward distance from `p` to each edge line of a CCW polygon.
inline std::vector<double> edge_clearances(const std::vector<Vec2>& loop, const Vec2& p) {
  std::vector<double> c;
  for (std::size_t k = 0; k < loop.size(); ++k) {
    const Vec2 a = loop[k], b = loop[(k + 1) % loop.size()];
    c.push_back(cross(b - a, p - a) / norm(b - a));
  }
  return c;
}

inline double segment_distance(const Vec2& a, const Vec2& b, const Vec2& p) {
  const Vec2 d = b - a;
  const double t = std::clamp(dot(p - a, d) / dot(d, d), 0.0, 1.0);
  return norm(p - (a + d * t));
}

}  // namespace detail

/// Minimum signed distance from the projected COM to the face's edges
/// (positive inside).
inline double face_clearance(const ConvexHull& hull, std::size_t f, const Vec3& com) {
  const auto fr = detail::face_frame(hull, f, com);
  const auto c = detail::edge_clearances(fr.loop, fr.point);
  return *std::min_element(c.begin(), c.end());
}

/// Faces on which the part can rest: the COM projects inside the face with
/// at least `margin` clearance to every edge.
inline std::vector<int> enumerate_resting_faces(const ConvexHull& hull, const Vec3& com, double margin) {
  if (margin < 0.0) throw InputError("enumerate_resting_faces: margin must be >= 0");
  std::vector<int> out;
  for (std::size_t f = 0; f < hull.faces.size(); ++f)
    if (face_clearance(hull, f, com) >= margin) out.push_back(int(f));
  return out;
}

/// Solid angle subtended at `p` by the face polygon.
inline double face_solid_angle(const ConvexHull& hull, std::size_t f, const Vec3& p) {
  const auto& loop = hull.faces[f].loop;
  double omega = 0.0;
  for (std::size_t k = 1; k + 1 < loop.size(); ++k) {
    const Vec3 a = hull.vertices[loop[0]] - p, b = hull.vertices[loop[k]] - p, c = hull.vertices[loop[k + 1]] - p;
    const double la = a.norm(), lb = b.norm(), lc = c.norm();
    const double num = std::abs(dot(a, cross(b, c)));
    const double den = la * lb * lc + dot(a, b) * lc + dot(a, c) * lb + dot(b, c) * la;
    omega += 2.0 * std::atan2(num, den);
  }
  return omega;
}

/// Prior per hull face proportional to the solid angle it subtends at the
/// COM, normalised over resting faces (others get 0).
inline std::vector<double> estimate_priors_solid_angle(const ConvexHull& hull, const Vec3& com) {
  std::vector<double> p(hull.faces.size(), 0.0);
  double total = 0.0;
  for (int f : enumerate_resting_faces(hull, com, 0.0)) total += p[f] = face_solid_angle(hull, f, com);
  if (total > 0.0)
    for (double& x : p) x /= total;
  return p;
}

// ---------------------------------------------------------------------------
// Settling

struct SettleResult {
  Rotation rotation;
  int support_face = -1;
  int wall_edge = -1;
  int tips = 0;
  int wall_rolls = 0;
};

inline constexpr int kMaxTips = 1000;

class Settler {
 public:
  Settler(const ConvexHull& hull, const Vec3& com, const TrackConfig& track) : hull_(hull), com_(com), track_(track) {
    track_.validate();
    const double tol = 1e-12 * hull_.diameter;
    const Vec3 down{0, 0, -1};
    const Vec3 push = track_.wall_push();
    faces_.resize(hull_.faces.size());
    for (std::size_t f = 0; f < hull_.faces.size(); ++f) {
      FaceData& fd = faces_[f];
      const auto& face = hull_.faces[f];
      fd.height = face.offset - dot(face.normal, com_);
      const auto fr = detail::face_frame(hull_, f, com_);
      fd.loop = fr.loop;
      fd.com2 = fr.point;
      fd.clearance = detail::edge_clearances(fd.loop, fd.com2);
      fd.stable = *std::min_element(fd.clearance.begin(), fd.clearance.end()) >= -tol;
      fd.align = Rotation::between(face.normal, down);

      // Top-down footprint in the aligned frame.
      std::vector<Vec2> pts;
      for (const auto& v : hull_.vertices) {
        const Vec3 w = fd.align.rotate(v);
        pts.push_back({w.x, w.y});
      }
      const Vec3 c3 = fd.align.rotate(com_);
      const Vec2 c{c3.x, c3.y};
      const auto idx = convex_hull_2d(pts, 1e-12 * hull_.diameter * hull_.diameter);
      const std::size_t m = idx.size();
      for (std::size_t k = 0; k < m; ++k) {
        const Vec2 a = pts[idx[k]], b = pts[idx[(k + 1) % m]];
        const Vec2 d = b - a;
        const double len = norm(d);
        WallEdge e;
        e.normal = {d.y / len, -d.x / len};  // outward for a CCW polygon
        const double t = dot(c - a, d) / len;
        if (t < -tol) e.roll_to = int((k + m - 1) % m);
        else if (t > len + tol) e.roll_to = int((k + 1) % m);
        const double yaw = std::atan2(push.y, push.x) - std::atan2(e.normal.y, e.normal.x);
        e.pose = Rotation::about_z(yaw) * fd.align;
        fd.edges.push_back(e);
      }
    }
  }

  const ConvexHull& hull() const { return hull_; }
  const Vec3& com() const { return com_; }

  bool face_is_stable(int f) const { return faces_.at(f).stable; }
  std::size_t wall_edge_count(int f) const { return faces_.at(f).edges.size(); }
  bool wall_edge_is_stable(int f, int e) const { return faces_.at(f).edges.at(e).roll_to < 0; }

  /// Canonical rotation for a settled (support face, wall edge) pair.
  const Rotation& pose(int face, int edge) const { return faces_.at(face).edges.at(edge).pose; }

  /// Rotation that puts `face` down with the part's yaw given by `yaw`.
  Rotation face_down(int face, double yaw) const { return Rotation::about_z(yaw) * faces_.at(face).align; }

  SettleResult settle(const Rotation& start) const {
    SettleResult r;
    const Vec3 down{0, 0, -1};

    // Stage 1: tipping on the track surface.
    int f = 0;
    double best = -2.0;
    for (std::size_t g = 0; g < faces_.size(); ++g)
      if (double d = dot(start.rotate(hull_.faces[g].normal), down); d > best) best = d, f = int(g);
    Rotation rot = start;
    while (!faces_[f].stable) {
      if (++r.tips > kMaxTips) throw GeometryError("settle: tipping did not converge");
      const FaceData& fd = faces_[f];
      int edge = -1;
      double nearest = 0.0;
      for (std::size_t k = 0; k < fd.loop.size(); ++k) {
        if (fd.clearance[k] >= 0.0) continue;
        const double d = detail::segment_distance(fd.loop[k], fd.loop[(k + 1) % fd.loop.size()], fd.com2);
        if (edge < 0 || d < nearest) edge = int(k), nearest = d;
      }
      const int next = hull_.neighbors[f][edge];
      if (!(faces_[next].height < fd.height + 1e-12 * hull_.diameter))
        throw Error(Error::Kind::Internal, "settle: centre of mass rose during a tip");
      rot = Rotation::between(rot.rotate(hull_.faces[next].normal), down) * rot;
      f = next;
    }

    // Stage 2: yaw against the wall. The remaining freedom is a rotation
    // about z relative to the canonical face-down alignment.
    const Rotation yaw_part = rot * faces_[f].align.inverse();
    const double yaw = 2.0 * std::atan2(yaw_part.z(), yaw_part.w());
    const Vec3 push = track_.wall_push();
    const auto& edges = faces_[f].edges;
    int e = 0;
    best = -2.0;
    const double cy = std::cos(yaw), sy = std::sin(yaw);
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const Vec2 n = edges[k].normal;
      const double d = (cy * n.x - sy * n.y) * push.x + (sy * n.x + cy * n.y) * push.y;
      if (d > best) best = d, e = int(k);
    }
    while (edges[e].roll_to >= 0) {
      if (++r.wall_rolls > int(edges.size()) + 1) throw GeometryError("settle: wall settling did not converge");
      e = edges[e].roll_to;
    }
    r.support_face = f;
    r.wall_edge = e;
    r.rotation = edges[e].pose;
    return r;
  }

 private:
  struct WallEdge {
    Vec2 normal;
    int roll_to = -1;  // -1: stable against the wall
    Rotation pose;
  };
  struct FaceData {
    double height = 0.0;
    std::vector<Vec2> loop;
    Vec2 com2;
    std::vector<double> clearance;
    bool stable = false;
    Rotation align;
    std::vector<WallEdge> edges;
  };

  ConvexHull hull_;
  Vec3 com_;
  TrackConfig track_;
  std::vector<FaceData> faces_;
};

/// One-off settle. Build a Settler directly when settling many samples.
inline Rotation settle(const TriMesh& mesh, const ConvexHull& hull, const Vec3& com, const TrackConfig& track,
                       const Rotation& start) {
  validate(mesh);
  return Settler(hull, com, track).settle(start).rotation;
}

// ---------------------------------------------------------------------------
// Clustering

namespace detail {

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) {
    for (std::size_t i = 0; i < n; ++i) parent[i] = i;
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a), b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

struct CellHash {
  std::size_t operator()(const std::array<std::int64_t, 4>& c) const {
    std::uint64_t h = 0;
    for (auto v : c) h = splitmix64(h ^ std::uint64_t(v));
    return std::size_t(h);
  }
};

inline PoseGraph finish_graph(std::vector<Rotation> nodes, std::vector<std::pair<std::size_t, std::size_t>> edges) {
  PoseGraph g;
  DisjointSets ds(nodes.size());
  for (const auto& [a, b] : edges) ds.unite(a, b);
  std::vector<int> label(nodes.size(), -1);
  g.component.resize(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::size_t root = ds.find(i);
    if (label[root] < 0) label[root] = g.n_components++;
    g.component[i] = label[root];
  }
  std::sort(edges.begin(), edges.end());
  g.nodes = std::move(nodes);
  g.edges = std::move(edges);
  return g;
}

}  // namespace detail

/// Connected components of the relation angular_distance < threshold.
/// Components are numbered in order of their smallest member index.
inline PoseGraph cluster_rotations(const std::vector<Rotation>& samples, double threshold) {
  if (!(threshold > 0.0)) throw InputError("cluster_rotations: threshold must be positive");
  if (samples.empty()) throw InputError("cluster_rotations: need at least one sample");
  // angle < threshold  <=>  min(|p - q|, |p + q|) < chord.
  const double chord = 2.0 * std::sin(std::min(threshold, std::numbers::pi) / 4.0);
  const double cell = chord * (1.0 + 1e-9);
  using Key = std::array<std::int64_t, 4>;
  auto key_of = [&](const std::array<double, 4>& q) {
    Key k;
    for (int i = 0; i < 4; ++i) k[i] = std::int64_t(std::floor(q[i] / cell));
    return k;
  };
  std::unordered_map<Key, std::vector<std::size_t>, detail::CellHash> grid;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto q = samples[i].coeffs();
    grid[key_of(q)].push_back(i);
    grid[key_of({-q[0], -q[1], -q[2], -q[3]})].push_back(i);
  }
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<std::size_t> seen;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Key k = key_of(samples[i].coeffs());
    seen.clear();
    for (int d = 0; d < 81; ++d) {
      Key n = k;
      int r = d;
      for (int a = 0; a < 4; ++a, r /= 3) n[a] += r % 3 - 1;
      const auto it = grid.find(n);
      if (it == grid.end()) continue;
      for (std::size_t j : it->second)
        if (j > i) seen.push_back(j);
    }
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    for (std::size_t j : seen)
      if (angular_distance(samples[i], samples[j]) < threshold) edges.emplace_back(i, j);
  }
  return detail::finish_graph(samples, std::move(edges));
}

// ---------------------------------------------------------------------------
// Pose identification

inline constexpr double kDefaultClusterThreshold = 0.1;  // radians
inline constexpr double kDefaultStabilityMargin = 1e-3;  // meters

struct PoseIdentification {
  PoseSet pose_set;
  std::vector<std::string> warnings;
  std::size_t n_samples = 0;
  std::size_t distinct_settled = 0;
};

/// Settles `n_samples` uniformly random start rotations and clusters the
/// results. Each component becomes one StablePose whose representative is
/// its most frequent settled rotation (ties: earliest sample) and whose
/// prior is its share of the samples.
inline PoseIdentification identify_stable_poses(const TriMesh& mesh, const TrackConfig& track, int n_samples,
                                                double threshold, std::uint64_t seed, std::string part_id = "part",
                                                double margin = kDefaultStabilityMargin) {
  if (n_samples < 100) throw InputError("identify_stable_poses: n_samples must be >= 100");
  validate(mesh);
  const ConvexHull hull = convex_hull(mesh);
  const MassProperties mp = mass_properties(mesh);
  const Settler settler(hull, mp.com, track);

  // Settled rotations are canonical per (face, edge), so counting distinct
  // pairs and clustering them yields the same partition as clustering every
  // sample.
  struct Settled {
    int face, edge;
    std::size_t first, count;
  };
  std::map<std::pair<int, int>, std::size_t> slot;
  std::vector<Settled> distinct;
  for (int i = 0; i < n_samples; ++i) {
    Rng rng(derive_seed(seed, std::uint64_t(i)));
    SettleResult r;
    try {
      r = settler.settle(Rotation::uniform(rng));
    } catch (const GeometryError& e) {
      throw GeometryError(std::string(e.what()) + " (sample " + std::to_string(i) + ")");
    }
    auto [it, inserted] = slot.try_emplace({r.support_face, r.wall_edge}, distinct.size());
    if (inserted) distinct.push_back({r.support_face, r.wall_edge, std::size_t(i), 0});
    ++distinct[it->second].count;
  }

  std::vector<Rotation> rots;
  for (const auto& d : distinct) rots.push_back(settler.pose(d.face, d.edge));
  const PoseGraph graph = cluster_rotations(rots, threshold);

  PoseIdentification out;
  out.n_samples = std::size_t(n_samples);
  out.distinct_settled = distinct.size();
  out.pose_set.part_id = std::move(part_id);
  std::vector<std::size_t> rep(graph.n_components, SIZE_MAX), total(graph.n_components, 0);
  for (std::size_t k = 0; k < distinct.size(); ++k) {
    const int c = graph.component[k];
    total[c] += distinct[k].count;
    // `distinct` is ordered by first occurrence, so strict > keeps the
    // earliest sample on ties.
    if (rep[c] == SIZE_MAX || distinct[k].count > distinct[rep[c]].count) rep[c] = k;
  }
  for (int c = 0; c < graph.n_components; ++c) {
    const auto& d = distinct[rep[c]];
    out.pose_set.poses.push_back(
        {c + 1, settler.pose(d.face, d.edge), d.face, d.edge, double(total[c]) / double(n_samples)});
  }

  // Cross-check the faces reached against the analytic resting faces.
  const auto resting = enumerate_resting_faces(hull, mp.com, margin);
  std::vector<int> reached;
  for (const auto& d : distinct) reached.push_back(d.face);
  std::sort(reached.begin(), reached.end());
  reached.erase(std::unique(reached.begin(), reached.end()), reached.end());
  for (int f : reached)
    if (!std::binary_search(resting.begin(), resting.end(), f))
      out.warnings.push_back("settled on face " + std::to_string(f) + " which is not a resting face at margin " +
                             std::to_string(margin));
  for (int f : resting)
    if (!std::binary_search(reached.begin(), reached.end(), f))
      out.warnings.push_back("resting face " + std::to_string(f) + " was never reached by sampling");
  return out;
}

// {part_id, poses: [{id, quaternion: [w,x,y,z], support_face, wall_edge, prior}]}
inline nlohmann::json to_json(const PoseSet& ps) {
  nlohmann::json poses = nlohmann::json::array();
  for (const auto& p : ps.poses)
    poses.push_back({{"id", p.id},
                     {"quaternion", p.representative.coeffs()},
                     {"support_face", p.support_face},
                     {"wall_edge", p.wall_edge},
                     {"prior", p.prior}});
  return {{"part_id", ps.part_id}, {"poses", poses}};
}

inline PoseSet pose_set_from_json(const nlohmann::json& j) {
  PoseSet ps;
  try {
    ps.part_id = j.at("part_id").get<std::string>();
    double total = 0.0;
    for (const auto& p : j.at("poses")) {
      const auto q = p.at("quaternion").get<std::array<double, 4>>();
      ps.poses.push_back({p.at("id").get<int>(), Rotation(q[0], q[1], q[2], q[3]), p.at("support_face").get<int>(),
                          p.at("wall_edge").get<int>(), p.at("prior").get<double>()});
      if (ps.poses.back().id != int(ps.poses.size())) throw InputError("pose set: ids must be 1..N in order");
      if (!(ps.poses.back().prior >= 0.0 && ps.poses.back().prior <= 1.0)) throw InputError("pose set: prior out of [0, 1]");
      total += ps.poses.back().prior;
    }
    if (!ps.poses.empty() && std::abs(total - 1.0) > 1e-9) throw InputError("pose set: priors do not sum to 1");
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("pose set: malformed JSON: ") + e.what());
  }
  return ps;
}

}  // namespace vtrap
