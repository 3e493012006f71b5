#pragma once

// Trap transition matrices. T is (N+1)x(N+1) and column-stochastic:
// T(i, j) = P(pose i after the trap | pose j before it), index N is the
// absorbing discard state.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "error.hpp"
#include "synthetic_vision.hpp"

namespace vtrap {

using PoseDistribution = Eigen::VectorXd;  // N+1 entries, last = discarded

inline constexpr double kColumnSumTolerance = 1e-9;

struct TransitionMatrix {
  Eigen::MatrixXd entries;
  std::string label;

  std::size_t n() const { return entries.rows() > 0 ? std::size_t(entries.rows() - 1) : 0; }
  double operator()(std::size_t i, std::size_t j) const { return entries(Eigen::Index(i), Eigen::Index(j)); }

  static TransitionMatrix identity(std::size_t n, std::string label = "identity") {
    return {Eigen::MatrixXd::Identity(Eigen::Index(n + 1), Eigen::Index(n + 1)), std::move(label)};
  }
  // every pose goes straight to discard
  static TransitionMatrix discard_all(std::size_t n, std::string label = "discard") {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(Eigen::Index(n + 1), Eigen::Index(n + 1));
    m.row(Eigen::Index(n)).setOnes();
    return {std::move(m), std::move(label)};
  }
};

struct ValidationReport {
  bool ok = true;
  std::string message;
  explicit operator bool() const { return ok; }
};

/// Checks, in order: shape, finiteness and non-negativity, column sums, and
/// that the discard state is absorbing. Names the first violation.
inline ValidationReport validate(const TransitionMatrix& t, double tol = kColumnSumTolerance) {
  const auto& m = t.entries;
  if (m.rows() < 1 || m.rows() != m.cols())
    return {false, "matrix is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ", expected square (N+1)x(N+1)"};
  const Eigen::Index d = m.rows() - 1;
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (!std::isfinite(m(i, j)) || m(i, j) < 0.0) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "negative or non-finite entry (%ld, %ld) = %g", long(i + 1), long(j + 1), m(i, j));
        return {false, buf};
      }
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    if (const double s = m.col(j).sum(); std::abs(s - 1.0) > tol) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "column %ld sums to %.12g, not 1", long(j + 1), s);
      return {false, buf};
    }
  if (std::abs(m(d, d) - 1.0) > tol) return {false, "discard not absorbing"};
  return {};
}

inline void require_valid(const TransitionMatrix& t) {
  if (auto r = validate(t); !r) throw InputError("transition matrix '" + t.label + "': " + r.message);
}

/// Product for applying traps[0] first: traps[K-1] * ... * traps[0].
inline TransitionMatrix chain(std::span<const TransitionMatrix> traps) {
  if (traps.empty()) throw InputError("chain: empty trap list");
  TransitionMatrix out = traps[0];
  for (std::size_t k = 1; k < traps.size(); ++k) {
    if (traps[k].entries.rows() != out.entries.rows() || traps[k].entries.cols() != out.entries.cols())
      throw InputError("chain: dimension mismatch at trap " + std::to_string(k + 1));
    out.entries = traps[k].entries * out.entries;
    out.label += ">" + traps[k].label;
  }
  return out;
}

inline TransitionMatrix chain(std::initializer_list<TransitionMatrix> traps) {
  return chain(std::span<const TransitionMatrix>(traps.begin(), traps.size()));
}

inline PoseDistribution apply(const TransitionMatrix& t, const PoseDistribution& p) {
  if (p.size() != t.entries.cols())
    throw InputError("apply: distribution has " + std::to_string(p.size()) + " entries, matrix expects " +
                     std::to_string(t.entries.cols()));
  return t.entries * p;
}

/// Pose priors with a zero discard entry appended.
inline PoseDistribution with_discard(std::span<const double> priors) {
  PoseDistribution p = PoseDistribution::Zero(Eigen::Index(priors.size() + 1));
  for (std::size_t i = 0; i < priors.size(); ++i) p(Eigen::Index(i)) = priors[i];
  return p;
}

// ---------------------------------------------------------------------------
// Vision traps

inline constexpr double kDefaultTau = 0.9;
inline constexpr std::size_t kMaxVisionPoses = 20;

struct VisionTrapConfig {
  std::uint64_t allowed = 0;  // bit i set <=> pose id i+1 in S+
  double tau = kDefaultTau;

  bool allows(std::size_t pose_index) const { return pose_index < 64 && ((allowed >> pose_index) & 1u); }
  std::vector<int> allowed_ids() const {
    std::vector<int> ids;
    for (std::size_t i = 0; i < 64; ++i)
      if (allows(i)) ids.push_back(int(i) + 1);
    return ids;
  }
  static VisionTrapConfig from_ids(std::span<const int> ids, double tau = kDefaultTau) {
    VisionTrapConfig c{0, tau};
    for (int id : ids) {
      if (id < 1 || id > 64) throw InputError("vision config: pose id " + std::to_string(id) + " out of range");
      c.allowed |= std::uint64_t(1) << (id - 1);
    }
    return c;
  }
  void validate(std::size_t n) const {
    if (!(tau > 0.0 && tau < 1.0)) throw InputError("vision config: tau must lie in (0, 1)");
    if (n < 64 && (allowed >> n) != 0) throw InputError("vision config: allowed set names a pose beyond N");
  }
};

inline std::string format_ids(std::span<const int> ids) {
  std::string s = "{";
  for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? "," : "") + std::to_string(ids[i]);
  return s + "}";
}

/// Mass each record assigns to S+; reused across configs by the designer.
inline double allowed_mass(const ClassificationRecord& r, std::uint64_t allowed) {
  double s = 0.0;
  for (std::size_t i = 0; i < r.dist.size() && i < 64; ++i)
    if ((allowed >> i) & 1u) s += r.dist[i];
  return s;
}

/// Records grouped by true pose, checked against n.
inline std::vector<std::vector<const ClassificationRecord*>> group_records(std::span<const ClassificationRecord> records,
                                                                           std::size_t n) {
  std::vector<std::vector<const ClassificationRecord*>> by_pose(n);
  for (const auto& r : records) {
    if (r.dist.size() != n)
      throw InputError("vision records: dist length " + std::to_string(r.dist.size()) + " != N = " + std::to_string(n));
    if (r.true_pose < 1 || std::size_t(r.true_pose) > n)
      throw InputError("vision records: true_pose " + std::to_string(r.true_pose) + " out of range");
    by_pose[std::size_t(r.true_pose - 1)].push_back(&r);
  }
  for (std::size_t j = 0; j < n; ++j)
    if (by_pose[j].empty()) throw InputError("vision records: pose " + std::to_string(j + 1) + " has no records");
  return by_pose;
}

/// Pass rate per pose: fraction of that pose's records with P(S+|I) > tau.
inline std::vector<double> vision_pass_rates(const std::vector<std::vector<const ClassificationRecord*>>& by_pose,
                                             const VisionTrapConfig& cfg) {
  std::vector<double> rate(by_pose.size());
  for (std::size_t j = 0; j < by_pose.size(); ++j) {
    std::size_t pass = 0;
    for (const auto* r : by_pose[j])
      if (allowed_mass(*r, cfg.allowed) > cfg.tau) ++pass;
    rate[j] = double(pass) / double(by_pose[j].size());
  }
  return rate;
}

inline TransitionMatrix vision_matrix_from_rates(std::span<const double> rate, std::string label) {
  const auto n = Eigen::Index(rate.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n + 1, n + 1);
  for (Eigen::Index j = 0; j < n; ++j) {
    m(j, j) = rate[std::size_t(j)];
    m(n, j) = 1.0 - rate[std::size_t(j)];
  }
  m(n, n) = 1.0;
  return {std::move(m), std::move(label)};
}

/// Rejection-type trap: a part stays in its pose iff the classifier puts more
/// than tau on the allowed set, otherwise it is discarded.
inline TransitionMatrix vision_trap_matrix(std::span<const ClassificationRecord> records, std::size_t n,
                                           const VisionTrapConfig& cfg) {
  cfg.validate(n);
  const auto by_pose = group_records(records, n);
  const auto ids = cfg.allowed_ids();
  return vision_matrix_from_rates(vision_pass_rates(by_pose, cfg), "vision" + format_ids(ids));
}

/// N inferred from the first record.
inline TransitionMatrix vision_trap_matrix(std::span<const ClassificationRecord> records, const VisionTrapConfig& cfg) {
  if (records.empty()) throw InputError("vision_trap_matrix: no records");
  return vision_trap_matrix(records, records.front().dist.size(), cfg);
}

/// All 2^n subsets in bitmask order (bit i <=> pose i+1).
inline std::vector<VisionTrapConfig> enumerate_vision_configs(std::size_t n, double tau = kDefaultTau) {
  if (n > kMaxVisionPoses)
    throw SearchCapError(std::uint64_t(1) << std::min<std::size_t>(n, 63),
                         "enumerate_vision_configs: N = " + std::to_string(n) + " exceeds the cap of " +
                             std::to_string(kMaxVisionPoses) + "; reduce the pose set first");
  std::vector<VisionTrapConfig> out;
  out.reserve(std::size_t(1) << n);
  for (std::uint64_t m = 0; m < (std::uint64_t(1) << n); ++m) out.push_back({m, tau});
  return out;
}

// ---------------------------------------------------------------------------
// Catalog I/O

/// JSON {n, traps: [{label, matrix}]}; matrix is (N+1)^2 numbers row-major,
/// either flat or as nested rows.
inline std::vector<TransitionMatrix> load_catalog(std::string_view bytes) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("catalog: malformed JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("n") || !j.contains("traps") || !j["traps"].is_array())
    throw InputError("catalog: expected {\"n\": int, \"traps\": [...]}");
  if (!j["n"].is_number_integer() || j["n"].get<long>() < 0) throw InputError("catalog: n must be a non-negative integer");
  const auto n = j["n"].get<std::size_t>();
  const std::size_t dim = n + 1;
  std::vector<TransitionMatrix> out;
  std::set<std::string> seen;
  for (std::size_t k = 0; k < j["traps"].size(); ++k) {
    const auto& t = j["traps"][k];
    const std::string label =
        t.contains("label") && t["label"].is_string() ? t["label"].get<std::string>() : "#" + std::to_string(k + 1);
    auto fail = [&](const std::string& msg) { throw InputError("catalog trap '" + label + "': " + msg); };
    if (!seen.insert(label).second) fail("duplicate label");
    if (!t.contains("matrix") || !t["matrix"].is_array()) fail("missing matrix");
    std::vector<double> flat;
    try {
      for (const auto& e : t["matrix"]) {
        if (e.is_array())
          for (const auto& x : e) flat.push_back(x.get<double>());
        else
          flat.push_back(e.get<double>());
      }
    } catch (const nlohmann::json::exception&) {
      fail("matrix entries must be numbers");
    }
    if (t.contains("n") && t["n"].get<std::size_t>() != n) fail("n mismatch with catalog n = " + std::to_string(n));
    if (flat.size() != dim * dim)
      fail("matrix has " + std::to_string(flat.size()) + " entries, expected (N+1)^2 = " + std::to_string(dim * dim) +
           " (n mismatch?)");
    TransitionMatrix tm{Eigen::MatrixXd(Eigen::Index(dim), Eigen::Index(dim)), label};
    for (std::size_t r = 0; r < dim; ++r)
      for (std::size_t c = 0; c < dim; ++c) tm.entries(Eigen::Index(r), Eigen::Index(c)) = flat[r * dim + c];
    if (auto rep = validate(tm); !rep) fail(rep.message);
    out.push_back(std::move(tm));
  }
  return out;
}

inline nlohmann::json to_json(const TransitionMatrix& t) {
  std::vector<std::vector<double>> rows;
  for (Eigen::Index i = 0; i < t.entries.rows(); ++i) {
    rows.emplace_back();
    for (Eigen::Index jj = 0; jj < t.entries.cols(); ++jj) rows.back().push_back(t.entries(i, jj));
  }
  return {{"label", t.label}, {"matrix", rows}};
}

inline std::string catalog_to_json(std::span<const TransitionMatrix> traps) {
  nlohmann::json j = {{"n", traps.empty() ? 0 : traps.front().n()}, {"traps", nlohmann::json::array()}};
  for (const auto& t : traps) j["traps"].push_back(to_json(t));
  return j.dump(2) + "\n";
}

/// Header row/column: pose ids then "discard".
inline std::string to_csv(const TransitionMatrix& t) {
  const std::size_t n = t.n();
  auto name = [&](std::size_t i) { return i < n ? std::to_string(i + 1) : std::string("discard"); };
  std::string out = "to\\from";
  for (std::size_t j = 0; j <= n; ++j) out += "," + name(j);
  out += "\n";
  char buf[40];
  for (std::size_t i = 0; i <= n; ++i) {
    out += name(i);
    for (std::size_t j = 0; j <= n; ++j) {
      std::snprintf(buf, sizeof buf, ",%.17g", t(i, j));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace vtrap
