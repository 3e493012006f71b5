#include <catch_amalgamated.hpp>

#include <cmath>

#include "vtrap/confusion.hpp"

using namespace vtrap;
using Catch::Approx;
using Mat = std::vector<std::vector<double>>;

namespace {

ConfusionMatrix from_rows(const Mat& rows, std::vector<double> priors) {
  Eigen::MatrixXd e(rows.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.size(); ++j) e(i, j) = rows[i][j];
  return make_confusion(e, std::move(priors));
}

// Oracle merge on plain vectors, written straight from the merge rule.
std::pair<Mat, std::vector<double>> oracle_collapse(const Mat& c, const std::vector<double>& pri, std::size_t i,
                                                    std::size_t j) {
  const std::size_t a = std::min(i, j), b = std::max(i, j), n = c.size();
  Mat cols(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < n; ++k) {
      if (k == b) continue;
      cols[r].push_back(k == a ? c[r][a] + c[r][b] : c[r][k]);
    }
  Mat out;
  std::vector<double> p;
  for (std::size_t r = 0; r < n; ++r) {
    if (r == b) continue;
    if (r == a) {
      std::vector<double> row(n - 1);
      for (std::size_t k = 0; k < n - 1; ++k) row[k] = (pri[a] * cols[a][k] + pri[b] * cols[b][k]) / (pri[a] + pri[b]);
      out.push_back(row);
      p.push_back(pri[a] + pri[b]);
    } else {
      out.push_back(cols[r]);
      p.push_back(pri[r]);
    }
  }
  return {out, p};
}

double oracle_score(const Mat& c, const std::vector<double>& pri) {
  double s = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) s += pri[i] * std::log(std::max(c[i][i], 1e-12));
  return s;
}

Mat to_rows(const ConfusionMatrix& c) {
  Mat m(c.n(), std::vector<double>(c.n()));
  for (std::size_t i = 0; i < c.n(); ++i)
    for (std::size_t j = 0; j < c.n(); ++j) m[i][j] = c(i, j);
  return m;
}

std::pair<Mat, std::vector<double>> random_confusion(std::size_t n, Rng& rng) {
  Mat m(n, std::vector<double>(n));
  std::vector<double> p(n);
  double ps = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += m[i][j] = rng.uniform() * (i == j ? 3.0 : 1.0) * rng.bernoulli(0.8);
    if (s == 0.0) m[i][i] = s = 1.0;
    for (double& x : m[i]) x /= s;
    ps += p[i] = 0.05 + rng.uniform();
  }
  for (double& x : p) x /= ps;
  return {m, p};
}

// Cap-like part at 800 px/m (rounded from a pipeline run): poses 2/6 and 3/4
// are mirror twins, 1 and 5 are unmistakable.
const Mat kCapRows = {{1.0, 0, 0, 0, 0, 0},      {0, 0.4978, 0, 0, 0, 0.5022}, {0, 0, 0.5053, 0.4947, 0, 0},
                      {0, 0, 0.4777, 0.5223, 0, 0}, {0, 0, 0, 0, 1.0, 0},      {0, 0.5007, 0, 0, 0, 0.4993}};
const std::vector<double> kCapPriors = {0.1259, 0.2114, 0.1687, 0.1672, 0.1277, 0.1991};

}  // namespace

TEST_CASE("confusion matrix averages predicted distributions") {
  const std::vector<ClassificationRecord> recs{{"p", 1, {0.9, 0.1}}, {"p", 1, {0.7, 0.3}}, {"p", 2, {0.2, 0.8}}};
  const std::vector<double> pri{0.5, 0.5};
  const auto c = confusion_matrix(recs, pri);
  CHECK(c(0, 0) == Approx(0.8).epsilon(1e-15));
  CHECK(c(0, 1) == Approx(0.2).epsilon(1e-15));
  CHECK(c(1, 0) == Approx(0.2).epsilon(1e-15));
  CHECK(c(1, 1) == Approx(0.8).epsilon(1e-15));
  CHECK(c.labels == std::vector<std::string>{"1", "2"});
}

TEST_CASE("one-hot and uniform records") {
  std::vector<ClassificationRecord> hot, flat;
  for (int i = 1; i <= 4; ++i)
    for (int k = 0; k < 3; ++k) {
      std::vector<double> d(4, 0.0);
      d[i - 1] = 1.0;
      hot.push_back({"p", i, d});
      flat.push_back({"p", i, std::vector<double>(4, 0.25)});
    }
  const std::vector<double> pri(4, 0.25);
  CHECK(confusion_matrix(hot, pri).entries.isIdentity());
  CHECK((confusion_matrix(flat, pri).entries.array() == 0.25).all());
}

TEST_CASE("confusion matrix errors") {
  const std::vector<double> pri{0.5, 0.5};
  const std::vector<ClassificationRecord> only1{{"p", 1, {1.0, 0.0}}};
  CHECK_THROWS_WITH(confusion_matrix(only1, pri), Catch::Matchers::ContainsSubstring("pose 2 has no records"));
  const std::vector<ClassificationRecord> wrong{{"p", 1, {1.0}}, {"p", 2, {1.0}}};
  CHECK_THROWS_AS(confusion_matrix(wrong, pri), InputError);
  CHECK_THROWS_AS(make_confusion(Eigen::MatrixXd::Identity(2, 2), {0.6, 0.6}), InputError);
  Eigen::MatrixXd bad(2, 2);
  bad << 0.5, 0.4, 0, 1;
  CHECK_THROWS_AS(make_confusion(bad, pri), InputError);
}

TEST_CASE("rows of a confusion matrix from random records sum to one") {
  Rng rng(3);
  const std::size_t n = 7;
  std::vector<ClassificationRecord> recs;
  for (int k = 0; k < 500; ++k) {
    std::vector<double> d(n);
    double s = 0.0;
    for (double& x : d) s += x = rng.uniform();
    for (double& x : d) x /= s;
    recs.push_back({"p", 1 + int(k % n), d});
  }
  const std::vector<double> pri(n, 1.0 / n);
  const auto c = confusion_matrix(recs, pri);
  for (std::size_t i = 0; i < n; ++i) CHECK(c.entries.row(i).sum() == Approx(1.0).margin(1e-12));
}

TEST_CASE("score examples") {
  CHECK(score(from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, {0.2, 0.3, 0.5})) == 0.0);
  CHECK(score(from_rows({{0.5, 0.5}, {0.5, 0.5}}, {0.5, 0.5})) == Approx(-0.693147).epsilon(1e-6));
  const double s = score(from_rows({{0, 1}, {0, 1}}, {0.3, 0.7}));
  CHECK(std::isfinite(s));
  CHECK(s == Approx(0.3 * std::log(1e-12)));
}

TEST_CASE("collapse examples") {
  SECTION("fully confused pair") {
    const auto c = collapse_pair(from_rows({{0.5, 0.5}, {0.5, 0.5}}, {0.5, 0.5}), 0, 1);
    REQUIRE(c.n() == 1);
    CHECK(c(0, 0) == 1.0);
    CHECK(c.priors[0] == 1.0);
    CHECK(score(c) == 0.0);
    CHECK(c.labels[0] == "1+2");
  }
  SECTION("identity stays identity") {
    const auto id = from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
    for (auto [i, j] : {std::pair{0, 1}, {0, 2}, {1, 2}, {2, 0}}) {
      const auto c = collapse_pair(id, i, j);
      CHECK(c.entries.isIdentity());
      CHECK(score(c) == 0.0);
    }
  }
  SECTION("asymmetric 3x3") {
    const Mat rows{{0.7, 0.2, 0.1}, {0.3, 0.3, 0.4}, {0.05, 0.15, 0.8}};
    const std::vector<double> pri{0.5, 0.2, 0.3};
    const auto c = collapse_pair(from_rows(rows, pri), 2, 0);
    const auto [orow, opri] = oracle_collapse(rows, pri, 0, 2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(c.entries.row(i).sum() == Approx(1.0).margin(1e-9));
      for (std::size_t j = 0; j < 2; ++j) CHECK(c(i, j) == Approx(orow[i][j]).epsilon(1e-14));
    }
    CHECK(c.priors == opri);
    CHECK(c.labels == std::vector<std::string>{"1+3", "2"});
    CHECK(c.pose_ids == std::vector<int>{1, 2});
  }
  const auto c = from_rows({{1, 0}, {0, 1}}, {0.5, 0.5});
  CHECK_THROWS_AS(collapse_pair(c, 0, 0), InputError);
  CHECK_THROWS_AS(collapse_pair(c, 0, 2), InputError);
}

TEST_CASE("collapse matches the oracle and preserves mass on random matrices") {
  Rng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng() % 7;
    const auto [rows, pri] = random_confusion(n, rng);
    const auto c = from_rows(rows, pri);
    const std::size_t i = rng() % n, j = (i + 1 + rng() % (n - 1)) % n;
    const auto m = collapse_pair(c, i, j);
    const auto [orow, opri] = oracle_collapse(rows, pri, i, j);
    REQUIRE(m.n() == n - 1);
    double ps = 0.0;
    for (std::size_t r = 0; r < n - 1; ++r) {
      REQUIRE(m.entries.row(r).sum() == Approx(1.0).margin(1e-12));
      for (std::size_t k = 0; k < n - 1; ++k) REQUIRE(m(r, k) == Approx(orow[r][k]).margin(1e-14));
      ps += m.priors[r];
    }
    REQUIRE(ps == Approx(1.0).margin(1e-12));
    // untouched rows keep the predicted mass of the merged column group
    const std::size_t a = std::min(i, j), b = std::max(i, j);
    for (std::size_t r = 0, out = 0; r < n; ++r) {
      if (r == b) continue;
      if (r != a) REQUIRE(m(out, a) == Approx(rows[r][a] + rows[r][b]).margin(1e-14));
      ++out;
    }
  }
}

TEST_CASE("greedy step equals the exhaustive best pair") {
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 7;
    const auto [rows, pri] = random_confusion(n, rng);
    double best = -1e300;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const auto [m, p] = oracle_collapse(rows, pri, i, j);
        best = std::max(best, oracle_score(m, p));
      }
    const auto [red, part] = reduce(from_rows(rows, pri), n - 1);
    REQUIRE(part.order.size() == 1);
    const auto& step = part.order[0];
    const auto [m, p] = oracle_collapse(rows, pri, step.i, step.j);
    REQUIRE(oracle_score(m, p) == Approx(best).margin(1e-12));
    REQUIRE(step.score_after == Approx(best).margin(1e-12));
  }
}

TEST_CASE("reduce on the cap-like fixture merges the two mirror pairs") {
  const auto c = from_rows(kCapRows, kCapPriors);
  const auto [red, part] = reduce(c, 4);
  REQUIRE(red.n() == 4);
  REQUIRE(part.order.size() == 2);
  CHECK(part.groups == std::vector<std::vector<int>>{{1}, {2, 6}, {3, 4}, {5}});
  // each merge turns a ~0.5 diagonal into ~1, so the score climbs to ~0
  CHECK(score(red) == Approx(0.0).margin(1e-12));
  CHECK(part.order.back().score_after == score(red));
  // the stronger ambiguity goes first: merging 2 and 6 gains more prior mass
  CHECK(part.order[0].merged_a == "2");
  CHECK(part.order[0].merged_b == "6");
}

TEST_CASE("reduce edge cases") {
  Rng rng(5);
  const auto [rows, pri] = random_confusion(6, rng);
  const auto c = from_rows(rows, pri);
  SECTION("target n is identity") {
    const auto [same, part] = reduce(c, 6);
    CHECK(same.entries == c.entries);
    CHECK(part.order.empty());
    CHECK(part.groups.size() == 6);
  }
  SECTION("down to one class") {
    for (int t = 0; t < 20; ++t) {
      const auto [rw, pr] = random_confusion(2 + rng() % 7, rng);
      const auto [one, part] = reduce(from_rows(rw, pr), 1);
      REQUIRE(one.n() == 1);
      CHECK(one(0, 0) == 1.0);
      CHECK(score(one) == 0.0);
      std::vector<int> all = part.groups[0];
      CHECK(all.size() == rw.size());
      CHECK(std::is_sorted(all.begin(), all.end()));
    }
  }
  SECTION("ties go to the smallest pair") {
    const auto [red, part] = reduce(from_rows({{0.5, 0.5, 0, 0}, {0.5, 0.5, 0, 0}, {0, 0, 0.5, 0.5}, {0, 0, 0.5, 0.5}},
                                              {0.25, 0.25, 0.25, 0.25}),
                                    3);
    CHECK(part.order[0].i == 0);
    CHECK(part.order[0].j == 1);
  }
  SECTION("deterministic") {
    const auto a = reduce(c, 2), b = reduce(c, 2);
    CHECK(a.second.groups == b.second.groups);
    CHECK(a.first.entries == b.first.entries);
  }
  CHECK_THROWS_AS(reduce(c, 0), InputError);
  CHECK_THROWS_AS(reduce(c, 7), InputError);
}

TEST_CASE("confusion serialisation") {
  const auto [red, part] = reduce(from_rows(kCapRows, kCapPriors), 4);
  const std::string csv = to_csv(red);
  CHECK(csv.rfind("true\\pred,1,2+6,3+4,5\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  const auto j = to_json(red);
  CHECK(j["n"] == 4);
  CHECK(j["entries"].size() == 4);
  CHECK(j["labels"][1] == "2+6");
  const auto pj = to_json(part);
  CHECK(pj["merges"].size() == 2);
  CHECK(pj["groups"][1] == nlohmann::json::array({2, 6}));
}
