#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "vtrap/parts.hpp"
#include "vtrap/synthetic_vision.hpp"

using namespace vtrap;
using Catch::Approx;

namespace {

FeatureVector fv(const std::array<double, kFeatureDim>& v) {
  FeatureVector f;
  f.area = v[0], f.eta20 = v[1], f.eta11 = v[2], f.eta02 = v[3];
  f.eta30 = v[4], f.eta21 = v[5], f.eta12 = v[6], f.eta03 = v[7], f.aspect = v[8];
  return f;
}

// n samples per class, class c centred at c * sep in every dimension, unit spread.
std::vector<LabeledFeature> gaussian_fixture(int n_classes, int n, double sep, Rng& rng) {
  std::vector<LabeledFeature> out;
  for (int c = 0; c < n_classes; ++c)
    for (int i = 0; i < n; ++i) {
      std::array<double, kFeatureDim> v;
      for (auto& x : v) x = c * sep + rng.normal();
      out.push_back({std::size_t(c), fv(v)});
    }
  return out;
}

ClassifierModel hand_model(std::vector<std::array<double, kFeatureDim>> mean, double var, std::vector<double> priors) {
  ClassifierModel m;
  for (std::size_t c = 0; c < priors.size(); ++c) m.pose_ids.push_back(int(c) + 1);
  m.mean = std::move(mean);
  m.variance.assign(priors.size(), {});
  for (auto& row : m.variance) row.fill(var);
  m.variance_floor.fill(1e-8);
  m.priors = std::move(priors);
  return m;
}

StablePose pose_of(const Rotation& r, int id = 1) { return {id, r, 0, 0, 1.0}; }

PoseSet poses_for(const TriMesh& mesh, const std::string& name) {
  return identify_stable_poses(mesh, {}, 10000, kDefaultClusterThreshold, 1, name).pose_set;
}

}  // namespace

TEST_CASE("noiseless observation is the exact render") {
  const TriMesh cap = parts::cap_like();
  Rng rng(4);
  ObservationConfig cfg;
  cfg.yaw_jitter_std = 0, cfg.translation_jitter_std = 0, cfg.pixel_flip_rate = 0;
  for (int k = 0; k < 5; ++k) {
    const Rotation r = Rotation::uniform(rng);
    const auto m = generate_observation(cap, pose_of(r), cfg, k);
    CHECK(m == render_silhouette(cap, r, centered_offset(cap, r), cfg.resolution, cfg.pixels_per_meter));
  }
}

TEST_CASE("pixel flips follow the binomial rate") {
  const TriMesh cap = parts::cap_like();
  ObservationConfig cfg;
  cfg.yaw_jitter_std = 0, cfg.translation_jitter_std = 0, cfg.pixel_flip_rate = 0;
  const StablePose p = pose_of(Rotation::identity());
  const auto clean = generate_observation(cap, p, cfg, 0);
  cfg.pixel_flip_rate = 0.05;
  const double n = 64.0 * 64.0, mean = 0.05 * n, sd = std::sqrt(n * 0.05 * 0.95);
  double total = 0.0;
  const int reps = 50;
  for (int k = 0; k < reps; ++k) {
    const double d = double(hamming_distance(clean, generate_observation(cap, p, cfg, k)));
    CHECK(std::abs(d - mean) <= 3 * sd);
    total += d;
  }
  CHECK(std::abs(total / reps - mean) <= 3 * sd / std::sqrt(double(reps)));
}

TEST_CASE("observations are deterministic in (seed, pose, index)") {
  const TriMesh lp = parts::l_plate();
  ObservationConfig cfg;
  cfg.pixel_flip_rate = 0.01;
  const StablePose p = pose_of(Rotation::about_z(0.4), 3);
  CHECK(generate_observation(lp, p, cfg, 7) == generate_observation(lp, p, cfg, 7));
  CHECK(generate_observation(lp, p, cfg, 7) != generate_observation(lp, p, cfg, 8));
  ObservationConfig other = cfg;
  other.seed = 2;
  CHECK(generate_observation(lp, p, cfg, 7) != generate_observation(lp, p, other, 7));
}

TEST_CASE("observation config validation and out-of-frame") {
  ObservationConfig cfg;
  cfg.pixel_flip_rate = 0.3;
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg = {};
  cfg.samples_per_pose = 9;
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg = {};
  cfg.pixels_per_meter = 1e5;  // the part never fits
  CHECK_THROWS_AS(generate_observation(parts::cap_like(), pose_of(Rotation::identity()), cfg, 0), GeometryError);
}

TEST_CASE("filled square moments are symmetric") {
  for (auto [c0, r0, s] : {std::array{3, 5, 10}, std::array{20, 1, 17}, std::array{0, 0, 64}}) {
    BinaryMask m(64, 64);
    for (int r = r0; r < r0 + s; ++r)
      for (int c = c0; c < c0 + s; ++c) m.set(c, r, true);
    const auto f = extract_features(m);
    CHECK(f.area == s * s);
    CHECK(f.eta20 == Approx(f.eta02).epsilon(1e-12));
    CHECK(f.eta11 == Approx(0.0).margin(1e-15));
    for (double odd : {f.eta30, f.eta21, f.eta12, f.eta03}) CHECK(odd == Approx(0.0).margin(1e-15));
    CHECK(f.aspect == 1.0);
    // continuous square: mu20 = s^4 / 12, discrete adds s^2 / 12
    CHECK(f.eta20 == Approx((double(s) * s * s * s - s * s) / 12.0 / std::pow(s * s, 2.0)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(extract_features(BinaryMask(16, 16)), InputError);
}

TEST_CASE("features are translation invariant") {
  Rng rng(31);
  const TriMesh lp = parts::l_plate();
  for (int k = 0; k < 100; ++k) {
    const Rotation q = Rotation::uniform(rng);
    const double ppm = 400.0;
    const int dx = int(rng() % 15) - 7, dy = int(rng() % 15) - 7;
    const Vec3 o = centered_offset(lp, q);
    const auto a = extract_features(render_silhouette(lp, q, o, 64, ppm));
    const auto b = extract_features(render_silhouette(lp, q, o + Vec3{dx / ppm, dy / ppm, 0}, 64, ppm));
    const auto va = a.values(), vb = b.values();
    for (std::size_t d = 0; d < kFeatureDim; ++d) CHECK(vb[d] == Approx(va[d]).epsilon(1e-9).margin(1e-15));
  }
}

TEST_CASE("second moments see an in-plane rotation of a rectangle") {
  // A square's second moments are isotropic, so rotation only shows up in
  // discretisation noise; a 2:1 rectangle makes the change analytic.
  const TriMesh box = parts::box(0.02, 0.01, 0.005);
  const double ppm = 1600.0;  // 32 x 16 px, edges on pixel boundaries
  auto feat = [&](double angle) {
    const Rotation q = Rotation::about_z(angle);
    return extract_features(render_silhouette(box, q, centered_offset(box, q), 64, ppm));
  };
  const auto f0 = feat(0.0), f30 = feat(std::numbers::pi / 6);
  // continuous oracle: eta = (a^2, b^2) / (12 a b) rotated by 30 degrees
  const double a = 32.0, b = 16.0;
  const double e20 = a * a / (12 * a * b), e02 = b * b / (12 * a * b);
  const double c = std::cos(std::numbers::pi / 6), s = std::sin(std::numbers::pi / 6);
  CHECK(f0.eta20 == Approx(e20).epsilon(0.03));
  CHECK(f0.eta02 == Approx(e02).epsilon(0.03));
  CHECK(f0.eta11 == Approx(0.0).margin(1e-12));
  CHECK(f30.eta20 == Approx(c * c * e20 + s * s * e02).epsilon(0.03));
  CHECK(f30.eta02 == Approx(s * s * e20 + c * c * e02).epsilon(0.03));
  CHECK(f30.eta11 == Approx(c * s * (e20 - e02)).epsilon(0.05));
  CHECK(f30.eta11 > 0.01);
}

TEST_CASE("two classes 10 sigma apart are always told apart") {
  Rng rng(8);
  const auto train = gaussian_fixture(2, 100, 10.0, rng);
  const auto test = gaussian_fixture(2, 200, 10.0, rng);
  const std::vector<double> pri{0.5, 0.5};
  const auto model = train_classifier(train, pri);
  for (const auto& s : test) {
    const auto d = classify(model, s.features);
    CHECK(d[s.pose_index] > 0.999);
  }
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t dim = 0; dim < kFeatureDim; ++dim) {
      CHECK(model.variance[c][dim] >= model.variance_floor[dim]);
      CHECK(model.variance_floor[dim] > 0.0);
    }
}

TEST_CASE("indistinguishable classes give back the priors") {
  Rng rng(9);
  auto train = gaussian_fixture(1, 2000, 0.0, rng);
  for (std::size_t i = 0; i < train.size(); ++i) train[i].pose_index = i % 2;
  const std::vector<double> pri{0.5, 0.5};
  const auto model = train_classifier(train, pri);
  double mean0 = 0.0;
  const auto test = gaussian_fixture(1, 500, 0.0, rng);
  for (const auto& s : test) mean0 += classify(model, s.features)[0];
  CHECK(mean0 / 500 == Approx(0.5).margin(0.05));

  // exactly equal likelihoods: the posterior is the prior
  const auto flat = hand_model({{}, {}}, 1.0, {0.9, 0.1});
  const auto d = classify(flat, fv({0.3, 1, 2, 3, 4, 5, 6, 7, 8}));
  CHECK(d[0] == Approx(0.9).epsilon(1e-12));
  CHECK(d[1] == Approx(0.1).epsilon(1e-12));
}

TEST_CASE("single class posterior is one") {
  Rng rng(10);
  const std::vector<double> pri{1.0};
  const auto model = train_classifier(gaussian_fixture(1, 20, 0.0, rng), pri);
  for (const auto& s : gaussian_fixture(1, 50, 0.0, rng)) CHECK(classify(model, s.features)[0] == 1.0);
}

TEST_CASE("hand model log-likelihood gap") {
  std::array<double, kFeatureDim> m0{}, m1{};
  m1.fill(10.0);
  const auto model = hand_model({m0, m1}, 1.0, {0.5, 0.5});
  // at the class-1 mean the gap is sum_d 10^2 / 2 = 450 nats
  const auto d = classify(model, fv(m0));
  CHECK(d[0] == 1.0);
  CHECK(std::log(d[1]) == Approx(-450.0).epsilon(1e-12));
  // midpoint, same variance, equal priors
  std::array<double, kFeatureDim> mid{};
  mid.fill(5.0);
  const auto h = classify(model, fv(mid));
  CHECK(h[0] == Approx(0.5).epsilon(1e-12));
  CHECK(h[1] == Approx(0.5).epsilon(1e-12));
}

TEST_CASE("classify ignores a constant shift of all log scores") {
  Rng rng(12);
  const std::vector<double> pri{0.2, 0.3, 0.5};
  const auto model = train_classifier(gaussian_fixture(3, 30, 1.5, rng), pri);
  ClassifierModel scaled = model;
  for (double& p : scaled.priors) p *= 7.0;  // log prior + log 7 for every class
  for (const auto& s : gaussian_fixture(3, 20, 1.5, rng)) {
    const auto a = classify(model, s.features), b = classify(scaled, s.features);
    double sum = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(b[c] == Approx(a[c]).epsilon(1e-12).margin(1e-300));
      sum += a[c];
    }
    CHECK(sum == Approx(1.0).margin(1e-12));
  }
  const std::vector<double> logits{1.0, 2.0, 3.0}, shifted{101.0, 102.0, 103.0};
  const auto p = softmax(logits), q = softmax(shifted);
  for (int i = 0; i < 3; ++i) CHECK(p[i] == Approx(q[i]).epsilon(1e-14));
}

TEST_CASE("classifier errors") {
  Rng rng(13);
  const std::vector<double> pri{0.5, 0.5};
  auto train = gaussian_fixture(2, 20, 1.0, rng);
  train.resize(29);  // class 2 has 9 samples
  CHECK_THROWS_AS(train_classifier(train, pri), InputError);
  CHECK_THROWS_AS(train_classifier(train, std::vector<double>{}), InputError);
  const auto model = train_classifier(gaussian_fixture(2, 20, 1.0, rng), pri);
  const std::vector<double> short_f(kFeatureDim - 1, 0.0);
  CHECK_THROWS_AS(classify(model, std::span<const double>(short_f)), InputError);
}

TEST_CASE("classifier json round trip") {
  Rng rng(14);
  const std::vector<double> pri{0.25, 0.75};
  const auto model = train_classifier(gaussian_fixture(2, 20, 3.0, rng), pri, {4, 9});
  const auto back = classifier_from_json(nlohmann::json::parse(to_json(model).dump()));
  CHECK(back.pose_ids == std::vector<int>{4, 9});
  CHECK(back.mean == model.mean);
  CHECK(back.variance == model.variance);
  CHECK(back.priors == model.priors);
  CHECK_THROWS_AS(classifier_from_json(nlohmann::json{{"priors", {1.0}}}), InputError);
}

TEST_CASE("cube records are spread over symmetric poses") {
  const TriMesh cube = parts::unit_cube();
  const PoseSet poses = poses_for(cube, "cube");
  REQUIRE(poses.size() == 24);
  ObservationConfig cfg;
  cfg.pixels_per_meter = 40.0;
  cfg.translation_jitter_std = 0.05;
  cfg.samples_per_pose = 400;
  const auto ds = generate_dataset(cube, poses, cfg);
  REQUIRE(ds.records.size() == 24 * 200);
  // average predicted distribution per true pose
  std::vector<std::vector<double>> rows(24, std::vector<double>(24, 0.0));
  for (const auto& r : ds.records)
    for (std::size_t j = 0; j < 24; ++j) rows[r.true_pose - 1][j] += r.dist[j] / 200.0;
  double mx = 0.0;
  for (const auto& row : rows) mx = std::max(mx, *std::max_element(row.begin(), row.end()));
  CHECK(mx < 0.2);
}

TEST_CASE("asymmetric L-plate is classified confidently") {
  const TriMesh lp = parts::l_plate();
  const PoseSet poses = poses_for(lp, "lplate");
  REQUIRE(poses.size() == 8);
  ObservationConfig cfg;
  cfg.samples_per_pose = 100;
  const auto ds = generate_dataset(lp, poses, cfg);
  REQUIRE(ds.records.size() == 8 * 50);
  double correct = 0.0;
  for (const auto& r : ds.records) {
    double sum = 0.0;
    for (double p : r.dist) {
      CHECK(p >= 0.0);
      sum += p;
    }
    CHECK(sum == Approx(1.0).margin(1e-9));
    correct += r.dist[r.true_pose - 1];
  }
  CHECK(correct / double(ds.records.size()) > 0.8);

  SECTION("noiseless records are near one-hot") {
    ObservationConfig clean = cfg;
    clean.yaw_jitter_std = 0, clean.translation_jitter_std = 0, clean.pixel_flip_rate = 0;
    clean.samples_per_pose = 20;
    for (const auto& r : generate_dataset(lp, poses, clean).records) CHECK(r.dist[r.true_pose - 1] > 0.99);
  }
  SECTION("generation is reproducible byte for byte") {
    CHECK(records_to_jsonl(generate_dataset(lp, poses, cfg).records) == records_to_jsonl(ds.records));
  }
}

TEST_CASE("load_records") {
  SECTION("two valid lines") {
    const auto r = load_records(
        "{\"part\":\"a\",\"true_pose\":1,\"dist\":[0.7,0.3]}\n"
        "\n"
        "{\"part\":\"a\",\"true_pose\":2,\"dist\":[0.1,0.9]}\n");
    REQUIRE(r.size() == 2);
    CHECK(r[1].true_pose == 2);
    CHECK(r[1].dist[1] == 0.9);
  }
  SECTION("empty input") { CHECK(load_records("").empty()); }
  SECTION("small drift is renormalised") {
    const auto r = load_records("{\"part\":\"a\",\"true_pose\":1,\"dist\":[0.5,0.5000005]}");
    CHECK(r[0].dist[0] + r[0].dist[1] == Approx(1.0).margin(1e-15));
  }
  auto error_of = [](std::string_view s) {
    try {
      load_records(s);
    } catch (const InputError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  const std::string ok = "{\"part\":\"a\",\"true_pose\":1,\"dist\":[0.5,0.5]}\n";
  CHECK_THAT(error_of(ok + "{\"part\":\"a\",\"true_pose\":1,\"dist\":[0.5,0.3]}"),
             Catch::Matchers::StartsWith("records line 2") && Catch::Matchers::ContainsSubstring("sums to"));
  CHECK_THAT(error_of(ok + "{\"part\":\"a\",\"true_pose\":1,\"dist\":[1.5,-0.5]}"),
             Catch::Matchers::ContainsSubstring("negative"));
  CHECK_THAT(error_of(ok + "{\"part\":\"a\",\"true_pose\":1,\"dist\":[0.2,0.3,0.5]}"),
             Catch::Matchers::ContainsSubstring("differs from first"));
  CHECK_THAT(error_of(ok + ok + "{not json"), Catch::Matchers::StartsWith("records line 3"));
  CHECK_THAT(error_of("{\"part\":\"a\",\"true_pose\":3,\"dist\":[0.5,0.5]}"),
             Catch::Matchers::ContainsSubstring("true_pose"));
  CHECK_THAT(error_of("[1,2]"), Catch::Matchers::ContainsSubstring("expected object"));
}

TEST_CASE("records jsonl round trip") {
  std::vector<ClassificationRecord> r{{"x", 2, {0.25, 0.75}}, {"x", 1, {1.0, 0.0}}};
  const auto back = load_records(records_to_jsonl(r));
  REQUIRE(back.size() == 2);
  CHECK(back[0].dist == r[0].dist);
  CHECK(back[1].true_pose == 1);
}
