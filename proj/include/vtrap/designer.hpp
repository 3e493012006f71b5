#pragma once

// Brute-force feeder design: every sequence of K trap slots drawn from a
// mechanical catalog, with (policy exactly-one) one vision trap in some slot.
// Candidates are numbered by an ordinal in the pinned enumeration order:
// vision slot position outermost, then vision bitmask, then the catalog
// indices of the mechanical slots as an odometer (first slot most significant).

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "error.hpp"
#include "rng.hpp"
#include "synthetic_vision.hpp"
#include "transitions.hpp"

namespace vtrap {

enum class DesignMode { MaximizeYield, MatchDistribution };
enum class VisionPolicy { ExactlyOne, None };

inline constexpr std::uint64_t kDefaultSearchCap = 10'000'000;
inline constexpr int kMaxSlots = 3;
inline constexpr double kPurityTolerance = 1e-9;

struct DesignProblem {
  PoseDistribution priors;      // N+1, last entry 0
  std::vector<int> target;      // desired pose ids D
  DesignMode mode = DesignMode::MaximizeYield;
  double purity_min = 0.99;
  PoseDistribution target_dist;  // match mode; N or N+1 entries, discard ignored
  int k_slots = 1;
  std::vector<TransitionMatrix> catalog;
  std::vector<ClassificationRecord> vision_records;
  double tau = kDefaultTau;
  VisionPolicy vision_policy = VisionPolicy::ExactlyOne;
  std::uint64_t cap = kDefaultSearchCap;

  std::size_t n() const { return priors.size() > 0 ? std::size_t(priors.size() - 1) : 0; }

  void validate() const {
    if (priors.size() < 2) throw InputError("design: priors must cover at least one pose plus discard");
    const std::size_t N = n();
    if ((priors.array() < 0.0).any() || std::abs(priors.sum() - 1.0) > 1e-9)
      throw InputError("design: priors must be non-negative and sum to 1");
    if (priors(Eigen::Index(N)) != 0.0) throw InputError("design: prior discard mass must be 0");
    if (k_slots < 1 || k_slots > kMaxSlots) throw InputError("design: k_slots must be 1, 2 or 3");
    if (!(tau > 0.0 && tau < 1.0)) throw InputError("design: tau must lie in (0, 1)");
    for (int id : target)
      if (id < 1 || std::size_t(id) > N) throw InputError("design: target pose " + std::to_string(id) + " out of range");
    if (mode == DesignMode::MaximizeYield) {
      if (target.empty()) throw InputError("design: target set D must be non-empty in yield mode");
      if (!(purity_min >= 0.0 && purity_min <= 1.0)) throw InputError("design: purity_min must lie in [0, 1]");
    } else {
      if (target_dist.size() != Eigen::Index(N) && target_dist.size() != Eigen::Index(N + 1))
        throw InputError("design: target_dist must have N or N+1 entries");
      if ((target_dist.array() < 0.0).any() || !(target_dist.head(Eigen::Index(N)).sum() > 0.0))
        throw InputError("design: target_dist must be non-negative with positive pose mass");
    }
    for (const auto& t : catalog) {
      if (t.n() != N)
        throw InputError("design: catalog trap '" + t.label + "' has n = " + std::to_string(t.n()) +
                         ", problem has N = " + std::to_string(N));
      require_valid(t);
    }
  }
};

struct Slot {
  bool vision = false;
  std::uint64_t index = 0;  // catalog index, or S+ bitmask for a vision slot

  bool operator==(const Slot&) const = default;
  // mechanical slots order before vision slots, then by index
  std::uint64_t key() const { return (vision ? std::uint64_t(1) << 62 : 0) | index; }
};

struct Candidate {
  std::vector<Slot> slots;
  bool operator==(const Candidate&) const = default;
};

struct DesignResult {
  Candidate candidate;
  std::uint64_t ordinal = 0;
  PoseDistribution output;
  double yield = 0.0;
  double purity = 0.0;
  double discard = 0.0;
  double contamination = 0.0;
  double tv_to_target = std::numeric_limits<double>::quiet_NaN();
  int non_identity = 0;
  int rank = 0;
};

namespace detail {

inline std::uint64_t sat_mul(std::uint64_t a, std::uint64_t b) {
  if (a == 0 || b == 0) return 0;
  return a > std::numeric_limits<std::uint64_t>::max() / b ? std::numeric_limits<std::uint64_t>::max() : a * b;
}

inline std::uint64_t sat_pow(std::uint64_t base, int e) {
  std::uint64_t r = 1;
  for (int i = 0; i < e; ++i) r = sat_mul(r, base);
  return r;
}

inline std::uint64_t vision_count(std::size_t n) {
  return n >= 64 ? std::numeric_limits<std::uint64_t>::max() : std::uint64_t(1) << n;
}

}  // namespace detail

/// K * 2^N * M_m^(K-1) with exactly one vision trap, M_m^K without.
/// Saturates at 2^64 - 1.
inline std::uint64_t candidate_count(const DesignProblem& p) {
  const std::uint64_t mm = p.catalog.size();
  if (p.vision_policy == VisionPolicy::None) return detail::sat_pow(mm, p.k_slots);
  return detail::sat_mul(detail::sat_mul(std::uint64_t(p.k_slots), detail::vision_count(p.n())),
                         detail::sat_pow(mm, p.k_slots - 1));
}

/// candidate_count, throwing SearchCapError above the cap.
inline std::uint64_t search_size(const DesignProblem& p) {
  p.validate();
  const std::uint64_t count = candidate_count(p);
  const bool over = count > p.cap || (p.vision_policy == VisionPolicy::ExactlyOne && p.n() > kMaxVisionPoses);
  if (over) {
    const std::string shown = count == std::numeric_limits<std::uint64_t>::max() ? ">= 2^64" : std::to_string(count);
    throw SearchCapError(count, "design: search size " + shown + " exceeds the cap of " + std::to_string(p.cap) +
                                    " candidates (N = " + std::to_string(p.n()) +
                                    "); reduce the pose set first, a practical target is N around 10 to 16");
  }
  return count;
}

/// Inverse of the enumeration order.
inline Candidate decode_candidate(const DesignProblem& p, std::uint64_t ordinal) {
  const std::uint64_t mm = p.catalog.size();
  const int k = p.k_slots;
  Candidate c;
  c.slots.resize(std::size_t(k));
  if (p.vision_policy == VisionPolicy::None) {
    for (int s = k - 1; s >= 0; --s) c.slots[std::size_t(s)] = {false, ordinal % mm}, ordinal /= mm;
    return c;
  }
  const std::uint64_t mech = detail::sat_pow(mm, k - 1);
  const std::uint64_t per_pos = detail::vision_count(p.n()) * mech;
  const auto vpos = std::size_t(ordinal / per_pos);
  std::uint64_t rest = ordinal % per_pos;
  const std::uint64_t mask = rest / mech;
  rest %= mech;
  for (int s = k - 1; s >= 0; --s) {
    if (std::size_t(s) == vpos) continue;
    c.slots[std::size_t(s)] = {false, rest % mm};
    rest /= mm;
  }
  c.slots[vpos] = {true, mask};
  return c;
}

inline std::string describe_slot(const DesignProblem& p, const Slot& s) {
  if (!s.vision) return s.index < p.catalog.size() ? p.catalog[s.index].label : "#" + std::to_string(s.index);
  return "vision" + format_ids(VisionTrapConfig{s.index, p.tau}.allowed_ids());
}

inline std::string describe(const DesignProblem& p, const Candidate& c) {
  std::string s;
  for (std::size_t i = 0; i < c.slots.size(); ++i) s += (i ? " > " : "") + describe_slot(p, c.slots[i]);
  return s;
}

/// Per-mask vision pass rates over all 2^N configurations, filled once per
/// problem. Allowed mass is summed in ascending pose order, exactly as
/// allowed_mass does, so '> tau' decisions agree bit for bit.
class VisionTable {
 public:
  VisionTable() = default;
  VisionTable(const DesignProblem& p) : n_(p.n()) {
    if (n_ > kMaxVisionPoses) throw SearchCapError(detail::vision_count(n_), "vision table: N exceeds the cap");
    const auto by_pose = group_records(p.vision_records, n_);
    const std::size_t masks = std::size_t(1) << n_;
    rates_.assign(masks * n_, 0.0);
    std::vector<double> mass(masks);
    for (std::size_t j = 0; j < n_; ++j) {
      std::vector<std::uint32_t> pass(masks, 0);
      for (const auto* r : by_pose[j]) {
        mass[0] = 0.0;
        for (std::size_t m = 1; m < masks; ++m) {
          const int hi = 63 - std::countl_zero(std::uint64_t(m));
          mass[m] = mass[m & ~(std::size_t(1) << hi)] + r->dist[std::size_t(hi)];
        }
        for (std::size_t m = 0; m < masks; ++m)
          if (mass[m] > p.tau) ++pass[m];
      }
      for (std::size_t m = 0; m < masks; ++m) rates_[m * n_ + j] = double(pass[m]) / double(by_pose[j].size());
    }
  }
  std::span<const double> rates(std::uint64_t mask) const { return {rates_.data() + mask * n_, n_}; }

 private:
  std::size_t n_ = 0;
  std::vector<double> rates_;
};

namespace detail {

inline bool is_identity(const TransitionMatrix& t) {
  return t.entries == Eigen::MatrixXd::Identity(t.entries.rows(), t.entries.cols());
}

inline void apply_slot(const DesignProblem& p, const VisionTable* vt, const Slot& s, PoseDistribution& x) {
  const auto N = Eigen::Index(p.n());
  if (s.vision) {
    std::vector<double> rate;
    std::span<const double> r;
    if (vt) {
      r = vt->rates(s.index);
    } else {
      rate = vision_pass_rates(group_records(p.vision_records, p.n()), VisionTrapConfig{s.index, p.tau});
      r = rate;
    }
    // diagonal pose block, remainder to discard; same arithmetic as the matrix product
    PoseDistribution y(N + 1);
    double disc = 0.0;
    for (Eigen::Index j = 0; j < N; ++j) {
      y(j) = r[std::size_t(j)] * x(j);
      disc += (1.0 - r[std::size_t(j)]) * x(j);
    }
    y(N) = disc + x(N);
    x = std::move(y);
  } else {
    x = p.catalog[s.index].entries * x;
  }
}

inline bool slot_is_identity(const DesignProblem& p, const VisionTable* vt, const Slot& s) {
  if (!s.vision) return is_identity(p.catalog[s.index]);
  std::span<const double> r;
  std::vector<double> rate;
  if (vt) {
    r = vt->rates(s.index);
  } else {
    rate = vision_pass_rates(group_records(p.vision_records, p.n()), VisionTrapConfig{s.index, p.tau});
    r = rate;
  }
  return std::all_of(r.begin(), r.end(), [](double v) { return v == 1.0; });
}

inline double conditional_tv(const PoseDistribution& out, const PoseDistribution& target, std::size_t n) {
  const auto N = Eigen::Index(n);
  const double so = out.head(N).sum(), st = target.head(N).sum();
  if (!(so > 0.0)) return 1.0;
  return 0.5 * (out.head(N) / so - target.head(N) / st).cwiseAbs().sum();
}

}  // namespace detail

/// Matrix of one slot, as it enters the chain.
inline TransitionMatrix slot_matrix(const DesignProblem& p, const Slot& s) {
  if (!s.vision) {
    if (s.index >= p.catalog.size()) throw InputError("design: catalog index out of range");
    return p.catalog[s.index];
  }
  return vision_trap_matrix(p.vision_records, p.n(), VisionTrapConfig{s.index, p.tau});
}

inline void check_candidate(const DesignProblem& p, const Candidate& c) {
  if (c.slots.empty()) throw InputError("design: empty candidate");
  int visions = 0;
  for (const auto& s : c.slots) {
    if (s.vision) {
      ++visions;
      if (p.n() < 64 && (s.index >> p.n()) != 0) throw InputError("design: vision mask names a pose beyond N");
    } else if (s.index >= p.catalog.size()) {
      throw InputError("design: catalog index " + std::to_string(s.index) + " out of range");
    }
  }
  if (p.vision_policy == VisionPolicy::ExactlyOne && visions != 1)
    throw InputError("design: candidate must contain exactly one vision trap");
  if (p.vision_policy == VisionPolicy::None && visions != 0)
    throw InputError("design: vision traps are disabled by policy");
}

namespace detail {

inline DesignResult evaluate_with(const DesignProblem& p, const VisionTable* vt, const Candidate& c) {
  PoseDistribution x = p.priors;
  DesignResult r;
  for (const auto& s : c.slots) {
    apply_slot(p, vt, s, x);
    if (!slot_is_identity(p, vt, s)) ++r.non_identity;
  }
  const auto N = Eigen::Index(p.n());
  r.candidate = c;
  r.discard = x(N);
  const double kept = x.head(N).sum();
  for (int id : p.target) r.yield += x(id - 1);
  r.contamination = kept - r.yield;
  r.purity = kept > 0.0 ? std::clamp(r.yield / kept, 0.0, 1.0) : 0.0;
  if (p.mode == DesignMode::MatchDistribution) r.tv_to_target = conditional_tv(x, p.target_dist, p.n());
  r.output = std::move(x);
  return r;
}

}  // namespace detail

/// Chains the candidate's slot matrices and applies the result to the priors.
inline DesignResult evaluate(const Candidate& c, const DesignProblem& p) {
  p.validate();
  check_candidate(p, c);
  return detail::evaluate_with(p, nullptr, c);
}

namespace detail {

inline double quantize(double v) { return std::round(v * 1e12); }

struct ScoredCandidate {
  std::uint64_t ordinal;
  std::array<std::uint64_t, kMaxSlots> key;
  double primary;  // quantised; smaller is better
  int non_identity;
};

}  // namespace detail

/// Exhaustive evaluation and ranking. Yield mode keeps candidates with
/// purity >= purity_min and sorts by yield descending; match mode sorts by
/// conditional TV distance ascending. Ties: fewer non-identity traps, then
/// slot encoding (mechanical before vision, then index, slot by slot).
/// top_k = 0 returns everything that passes.
inline std::vector<DesignResult> search(const DesignProblem& p, std::size_t top_k = 0) {
  const std::uint64_t count = search_size(p);
  if (count == 0) throw InputError("design: no candidates (empty catalog for the requested slots)");
  VisionTable vt;
  if (p.vision_policy == VisionPolicy::ExactlyOne) vt = VisionTable(p);
  const VisionTable* vtp = p.vision_policy == VisionPolicy::ExactlyOne ? &vt : nullptr;

  std::vector<detail::ScoredCandidate> scored;
  for (std::uint64_t o = 0; o < count; ++o) {
    const Candidate c = decode_candidate(p, o);
    const DesignResult r = detail::evaluate_with(p, vtp, c);
    double primary;
    if (p.mode == DesignMode::MaximizeYield) {
      if (r.purity < p.purity_min - kPurityTolerance) continue;
      primary = -detail::quantize(r.yield);
    } else {
      primary = detail::quantize(r.tv_to_target);
    }
    detail::ScoredCandidate s{o, {}, primary, r.non_identity};
    for (std::size_t i = 0; i < c.slots.size(); ++i) s.key[i] = c.slots[i].key();
    scored.push_back(s);
  }
  auto better = [](const detail::ScoredCandidate& a, const detail::ScoredCandidate& b) {
    if (a.primary != b.primary) return a.primary < b.primary;
    if (a.non_identity != b.non_identity) return a.non_identity < b.non_identity;
    return a.key < b.key;
  };
  const std::size_t keep = top_k == 0 ? scored.size() : std::min(top_k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + long(keep), scored.end(), better);
  std::vector<DesignResult> out;
  for (std::size_t i = 0; i < keep; ++i) {
    DesignResult r = detail::evaluate_with(p, vtp, decode_candidate(p, scored[i].ordinal));
    r.ordinal = scored[i].ordinal;
    r.rank = int(i) + 1;
    out.push_back(std::move(r));
  }
  return out;
}

inline constexpr std::uint64_t kMinSimulatedParts = 1000;

/// Monte Carlo oracle: each part draws its pose from the priors and then a
/// successor from each slot's column in turn. Part i uses
/// derive_seed(seed, i), so the result does not depend on evaluation order.
inline PoseDistribution simulate_flow(const Candidate& c, const DesignProblem& p, std::uint64_t n_parts,
                                      std::uint64_t seed) {
  if (n_parts < kMinSimulatedParts) throw InputError("simulate_flow: n_parts must be >= 1000");
  p.validate();
  check_candidate(p, c);
  const std::size_t dim = p.n() + 1;
  std::vector<std::vector<std::vector<double>>> cols;  // [slot][source] -> weights over targets
  for (const auto& s : c.slots) {
    const TransitionMatrix t = slot_matrix(p, s);
    auto& per = cols.emplace_back(dim);
    for (std::size_t j = 0; j < dim; ++j)
      for (std::size_t i = 0; i < dim; ++i) per[j].push_back(t(i, j));
  }
  std::vector<double> prior(p.priors.data(), p.priors.data() + dim);
  std::vector<std::uint64_t> hist(dim, 0);
  for (std::uint64_t part = 0; part < n_parts; ++part) {
    Rng rng(derive_seed(seed, part));
    std::size_t state = rng.categorical(prior);
    for (const auto& per : cols) state = rng.categorical(per[state]);
    ++hist[state];
  }
  PoseDistribution out = PoseDistribution::Zero(Eigen::Index(dim));
  for (std::size_t i = 0; i < dim; ++i) out(Eigen::Index(i)) = double(hist[i]) / double(n_parts);
  return out;
}

inline double total_variation(const PoseDistribution& a, const PoseDistribution& b) {
  if (a.size() != b.size()) throw InputError("total_variation: size mismatch");
  return 0.5 * (a - b).cwiseAbs().sum();
}

// ---------------------------------------------------------------------------
// Output

inline nlohmann::json to_json(const DesignProblem& p, const DesignResult& r) {
  nlohmann::json slots = nlohmann::json::array();
  for (const auto& s : r.candidate.slots) {
    nlohmann::json js = {{"kind", s.vision ? "vision" : "mechanical"}, {"label", describe_slot(p, s)}};
    if (s.vision)
      js["allowed"] = VisionTrapConfig{s.index, p.tau}.allowed_ids();
    else
      js["catalog_index"] = s.index;
    slots.push_back(js);
  }
  std::vector<double> out(r.output.data(), r.output.data() + r.output.size());
  nlohmann::json j = {{"rank", r.rank},       {"slots", slots},   {"output", out},
                      {"yield", r.yield},     {"purity", r.purity}, {"discard", r.discard},
                      {"contamination", r.contamination}, {"non_identity_traps", r.non_identity}};
  if (!std::isnan(r.tv_to_target)) j["tv_to_target"] = r.tv_to_target;
  return j;
}

inline std::string results_to_csv(const DesignProblem& p, std::span<const DesignResult> results) {
  std::string s = "rank,slots,yield,purity,discard,tv_to_target\n";
  char buf[160];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof buf, ",%.12g,%.12g,%.12g,", r.yield, r.purity, r.discard);
    s += std::to_string(r.rank) + ",\"" + describe(p, r.candidate) + "\"" + buf;
    if (!std::isnan(r.tv_to_target)) {
      std::snprintf(buf, sizeof buf, "%.12g", r.tv_to_target);
      s += buf;
    }
    s += "\n";
  }
  return s;
}

}  // namespace vtrap
