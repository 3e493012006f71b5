#pragma once

// Classifier surrogate. Noisy top-down silhouettes of a part in each stable
// pose are reduced to moment features and a Gaussian naive Bayes model
// turns features into a distribution over stable poses.
//
// The moments are deliberately NOT rotation invariant: on the track the
// wall fixes the yaw, so yaw is exactly the cue that separates poses that
// differ only in which edge touches the wall.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "geometry.hpp"
#include "raster.hpp"
#include "rng.hpp"
#include "stable_poses.hpp"

namespace vtrap {

struct ObservationConfig {
  int resolution = 64;
  double pixels_per_meter = 800.0;
  double yaw_jitter_std = 0.03;          // radians
  double translation_jitter_std = 0.002;  // meters
  double pixel_flip_rate = 0.002;
  int samples_per_pose = 200;
  std::uint64_t seed = 1;

  void validate() const {
    if (resolution < 16) throw InputError("observation: resolution must be >= 16");
    if (!(pixels_per_meter > 0.0)) throw InputError("observation: pixels_per_meter must be positive");
    if (!(yaw_jitter_std >= 0.0) || !(translation_jitter_std >= 0.0))
      throw InputError("observation: jitter must be >= 0");
    if (!(pixel_flip_rate >= 0.0 && pixel_flip_rate <= 0.2))
      throw InputError("observation: pixel_flip_rate must lie in [0, 0.2]");
    if (samples_per_pose < 10) throw InputError("observation: samples_per_pose must be >= 10");
  }
};

inline constexpr std::size_t kFeatureDim = 9;

struct FeatureVector {
  double area = 0.0;  // pixels
  double eta20 = 0.0, eta11 = 0.0, eta02 = 0.0;
  double eta30 = 0.0, eta21 = 0.0, eta12 = 0.0, eta03 = 0.0;
  double aspect = 0.0;  // width / height of the axis-aligned bounding box

  std::array<double, kFeatureDim> values() const {
    return {area, eta20, eta11, eta02, eta30, eta21, eta12, eta03, aspect};
  }
};

/// Offset that centres the projected bounding box of the rotated mesh.
inline Vec3 centered_offset(const TriMesh& mesh, const Rotation& pose) {
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& v : mesh.vertices) {
    const Vec3 p = pose.rotate(v);
    x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
  }
  return {-0.5 * (x0 + x1), -0.5 * (y0 + y1), 0.0};
}

inline constexpr int kMaxJitterAttempts = 10;

/// Deterministic in (cfg.seed, pose.id, sample_index).
inline BinaryMask generate_observation(const TriMesh& mesh, const StablePose& pose, const ObservationConfig& cfg,
                                       std::uint64_t sample_index) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, std::uint64_t(pose.id), sample_index));
  for (int attempt = 0; attempt < kMaxJitterAttempts; ++attempt) {
    const double yaw = rng.normal(0.0, cfg.yaw_jitter_std);
    const double tx = rng.normal(0.0, cfg.translation_jitter_std);
    const double ty = rng.normal(0.0, cfg.translation_jitter_std);
    const Rotation rot = Rotation::about_z(yaw) * pose.representative;
    const Vec3 offset = centered_offset(mesh, rot) + Vec3{tx, ty, 0.0};
    BinaryMask mask;
    try {
      mask = render_silhouette(mesh, rot, offset, cfg.resolution, cfg.pixels_per_meter);
    } catch (const GeometryError&) {
      continue;
    }
    if (cfg.pixel_flip_rate > 0.0)
      for (int r = 0; r < mask.height(); ++r)
        for (int c = 0; c < mask.width(); ++c)
          if (rng.bernoulli(cfg.pixel_flip_rate)) mask.flip(c, r);
    return mask;
  }
  throw GeometryError("generate_observation: part out of frame after " + std::to_string(kMaxJitterAttempts) +
                      " jitter draws (pose " + std::to_string(pose.id) + ")");
}

/// Normalised central moments eta_pq = mu_pq / mu00^(1 + (p+q)/2) with image
/// y pointing up, plus bounding-box aspect.
inline FeatureVector extract_features(const BinaryMask& mask) {
  double m00 = 0.0, sx = 0.0, sy = 0.0;
  int c0 = mask.width(), c1 = -1, r0 = mask.height(), r1 = -1;
  for (int r = 0; r < mask.height(); ++r)
    for (int c = 0; c < mask.width(); ++c)
      if (mask.at(c, r)) {
        m00 += 1.0;
        sx += c + 0.5;
        sy += -(r + 0.5);
        c0 = std::min(c0, c), c1 = std::max(c1, c);
        r0 = std::min(r0, r), r1 = std::max(r1, r);
      }
  if (m00 == 0.0) throw InputError("extract_features: empty mask");
  const double cx = sx / m00, cy = sy / m00;
  double mu[4][4] = {};
  for (int r = 0; r < mask.height(); ++r)
    for (int c = 0; c < mask.width(); ++c)
      if (mask.at(c, r)) {
        const double dx = c + 0.5 - cx, dy = -(r + 0.5) - cy;
        const double dx2 = dx * dx, dy2 = dy * dy;
        mu[2][0] += dx2, mu[1][1] += dx * dy, mu[0][2] += dy2;
        mu[3][0] += dx2 * dx, mu[2][1] += dx2 * dy, mu[1][2] += dx * dy2, mu[0][3] += dy2 * dy;
      }
  const double n2 = std::pow(m00, 2.0), n3 = std::pow(m00, 2.5);
  FeatureVector f;
  f.area = m00;
  f.eta20 = mu[2][0] / n2, f.eta11 = mu[1][1] / n2, f.eta02 = mu[0][2] / n2;
  f.eta30 = mu[3][0] / n3, f.eta21 = mu[2][1] / n3, f.eta12 = mu[1][2] / n3, f.eta03 = mu[0][3] / n3;
  f.aspect = double(c1 - c0 + 1) / double(r1 - r0 + 1);
  return f;
}

struct LabeledFeature {
  std::size_t pose_index = 0;  // 0-based class index
  FeatureVector features;
};

struct ClassifierModel {
  std::vector<int> pose_ids;
  std::vector<std::array<double, kFeatureDim>> mean;
  std::vector<std::array<double, kFeatureDim>> variance;
  std::vector<double> priors;
  std::array<double, kFeatureDim> variance_floor{};

  std::size_t n_classes() const { return priors.size(); }
};

inline constexpr int kMinSamplesPerClass = 10;

/// Gaussian naive Bayes fit. The variance is pooled over classes per
/// dimension (stored per class, so externally fitted models may differ) and
/// floored at max(1e-8, 1e-3 * global variance). Per-class variances made
/// identical-silhouette classes wildly overconfident on outlier masks.
inline ClassifierModel train_classifier(std::span<const LabeledFeature> data, std::span<const double> priors,
                                        std::vector<int> pose_ids = {}) {
  const std::size_t n_classes = priors.size();
  if (n_classes == 0) throw InputError("train_classifier: no classes");
  if (pose_ids.empty())
    for (std::size_t c = 0; c < n_classes; ++c) pose_ids.push_back(int(c) + 1);
  if (pose_ids.size() != n_classes) throw InputError("train_classifier: pose_ids/priors size mismatch");
  ClassifierModel m;
  m.pose_ids = std::move(pose_ids);
  m.priors.assign(priors.begin(), priors.end());
  m.mean.assign(n_classes, {});
  m.variance.assign(n_classes, {});
  std::vector<std::size_t> count(n_classes, 0);
  std::array<double, kFeatureDim> gmean{}, gvar{};
  for (const auto& s : data) {
    if (s.pose_index >= n_classes) throw InputError("train_classifier: sample label out of range");
    const auto v = s.features.values();
    ++count[s.pose_index];
    for (std::size_t d = 0; d < kFeatureDim; ++d) m.mean[s.pose_index][d] += v[d], gmean[d] += v[d];
  }
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (count[c] < std::size_t(kMinSamplesPerClass))
      throw InputError("train_classifier: missing class " + std::to_string(m.pose_ids[c]) + " (" +
                       std::to_string(count[c]) + " samples, need " + std::to_string(kMinSamplesPerClass) + ")");
    for (auto& x : m.mean[c]) x /= double(count[c]);
  }
  for (auto& x : gmean) x /= double(data.size());
  for (const auto& s : data) {
    const auto v = s.features.values();
    for (std::size_t d = 0; d < kFeatureDim; ++d) {
      const double e = v[d] - m.mean[s.pose_index][d], g = v[d] - gmean[d];
      m.variance[s.pose_index][d] += e * e;
      gvar[d] += g * g;
    }
  }
  for (std::size_t d = 0; d < kFeatureDim; ++d) m.variance_floor[d] = std::max(1e-8, 1e-3 * gvar[d] / double(data.size()));
  for (std::size_t d = 0; d < kFeatureDim; ++d) {
    double pooled = 0.0;
    for (std::size_t c = 0; c < n_classes; ++c) pooled += m.variance[c][d];
    pooled = std::max(pooled / double(data.size()), m.variance_floor[d]);
    for (std::size_t c = 0; c < n_classes; ++c) m.variance[c][d] = pooled;
  }
  return m;
}

/// Per-class log prior + Gaussian log-likelihood; -inf for zero priors.
inline std::vector<double> class_log_scores(const ClassifierModel& model, std::span<const double> f) {
  if (f.size() != kFeatureDim)
    throw InputError("classify: feature dimension " + std::to_string(f.size()) + " != " + std::to_string(kFeatureDim));
  for (const auto& row : model.mean)
    if (row.size() != f.size()) throw InputError("classify: dimension mismatch");
  std::vector<double> s(model.n_classes());
  for (std::size_t c = 0; c < s.size(); ++c) {
    double ll = model.priors[c] > 0.0 ? std::log(model.priors[c]) : -std::numeric_limits<double>::infinity();
    for (std::size_t d = 0; d < kFeatureDim; ++d) {
      const double var = model.variance[c][d], e = f[d] - model.mean[c][d];
      ll -= 0.5 * (std::log(2.0 * std::numbers::pi * var) + e * e / var);
    }
    s[c] = ll;
  }
  return s;
}

inline std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  if (!std::isfinite(mx)) throw InputError("softmax: no finite logit");
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += p[i] = std::exp(logits[i] - mx);
  for (double& x : p) x /= total;
  return p;
}

inline std::vector<double> classify(const ClassifierModel& model, std::span<const double> f) {
  return softmax(class_log_scores(model, f));
}

inline std::vector<double> classify(const ClassifierModel& model, const FeatureVector& f) {
  const auto v = f.values();
  return classify(model, std::span<const double>(v));
}

// ---------------------------------------------------------------------------
// Records

struct ClassificationRecord {
  std::string part_id;
  int true_pose = 0;  // 1-based pose id
  std::vector<double> dist;
};

struct Dataset {
  ClassifierModel model;
  std::vector<ClassificationRecord> records;
};

/// Per pose, the first samples_per_pose/2 observations train the model and
/// the rest are classified into records.
inline Dataset generate_dataset(const TriMesh& mesh, const PoseSet& poses, const ObservationConfig& cfg) {
  cfg.validate();
  const int n_train = cfg.samples_per_pose / 2;
  if (n_train < kMinSamplesPerClass)
    throw InputError("generate_dataset: samples_per_pose must be >= " + std::to_string(2 * kMinSamplesPerClass));
  std::vector<LabeledFeature> train;
  std::vector<LabeledFeature> held_out;
  std::vector<int> ids;
  for (std::size_t p = 0; p < poses.size(); ++p) {
    ids.push_back(poses.poses[p].id);
    for (int s = 0; s < cfg.samples_per_pose; ++s) {
      const auto f = extract_features(generate_observation(mesh, poses.poses[p], cfg, std::uint64_t(s)));
      (s < n_train ? train : held_out).push_back({p, f});
    }
  }
  Dataset ds;
  const auto priors = poses.priors();
  ds.model = train_classifier(train, priors, ids);
  for (const auto& h : held_out)
    ds.records.push_back({poses.part_id, poses.poses[h.pose_index].id, classify(ds.model, h.features)});
  return ds;
}

inline constexpr double kRecordSumTolerance = 1e-6;

/// JSONL, one {"part", "true_pose", "dist"} object per line. Blank lines
/// are skipped; the first record fixes the distribution length.
inline std::vector<ClassificationRecord> load_records(std::string_view bytes) {
  std::vector<ClassificationRecord> out;
  std::istringstream in{std::string(bytes)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& msg) {
      throw InputError("records line " + std::to_string(lineno) + ": " + msg);
    };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("part") || !j.contains("true_pose") || !j.contains("dist"))
      fail("expected object with part, true_pose, dist");
    if (!j["part"].is_string() || !j["true_pose"].is_number_integer() || !j["dist"].is_array())
      fail("wrong field types");
    ClassificationRecord r;
    r.part_id = j["part"].get<std::string>();
    r.true_pose = j["true_pose"].get<int>();
    double sum = 0.0;
    for (const auto& x : j["dist"]) {
      if (!x.is_number()) fail("non-numeric probability");
      const double p = x.get<double>();
      if (!(p >= 0.0) || !std::isfinite(p)) fail("negative or non-finite probability");
      r.dist.push_back(p);
      sum += p;
    }
    if (r.dist.empty()) fail("empty dist");
    if (!out.empty() && r.dist.size() != out.front().dist.size())
      fail("dist length " + std::to_string(r.dist.size()) + " differs from first record (" +
           std::to_string(out.front().dist.size()) + ")");
    if (std::abs(sum - 1.0) > kRecordSumTolerance) fail("dist sums to " + std::to_string(sum) + ", expected 1");
    for (double& p : r.dist) p /= sum;
    if (r.true_pose < 1 || std::size_t(r.true_pose) > r.dist.size()) fail("true_pose out of range");
    out.push_back(std::move(r));
  }
  return out;
}

inline std::string records_to_jsonl(std::span<const ClassificationRecord> records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::json j{{"part", r.part_id}, {"true_pose", r.true_pose}, {"dist", r.dist}};
    out += j.dump() + "\n";
  }
  return out;
}

inline nlohmann::json to_json(const ClassifierModel& m) {
  return {{"pose_ids", m.pose_ids},
          {"priors", m.priors},
          {"mean", m.mean},
          {"variance", m.variance},
          {"variance_floor", m.variance_floor}};
}

inline ClassifierModel classifier_from_json(const nlohmann::json& j) {
  ClassifierModel m;
  try {
    m.pose_ids = j.at("pose_ids").get<std::vector<int>>();
    m.priors = j.at("priors").get<std::vector<double>>();
    m.mean = j.at("mean").get<std::vector<std::array<double, kFeatureDim>>>();
    m.variance = j.at("variance").get<std::vector<std::array<double, kFeatureDim>>>();
    m.variance_floor = j.at("variance_floor").get<std::array<double, kFeatureDim>>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("classifier model: ") + e.what());
  }
  const std::size_t n = m.priors.size();
  if (m.pose_ids.size() != n || m.mean.size() != n || m.variance.size() != n)
    throw InputError("classifier model: inconsistent class counts");
  return m;
}

}  // namespace vtrap
