#pragma once

// Probability confusion matrices and greedy pose reduction by visual
// ambiguity. Row i is the mean predicted distribution over observations
// whose true pose is i; it is an average over distributions, not over
// hard decisions.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "error.hpp"
#include "synthetic_vision.hpp"

namespace vtrap {

struct ConfusionMatrix {
  Eigen::MatrixXd entries;        // n x n, row = true pose, column = predicted mass
  std::vector<int> pose_ids;      // smallest original id of each class
  std::vector<std::string> labels;  // e.g. "3" or "1+2"
  std::vector<double> priors;

  std::size_t n() const { return priors.size(); }
  double operator()(std::size_t i, std::size_t j) const { return entries(Eigen::Index(i), Eigen::Index(j)); }
};

inline constexpr double kRowSumTolerance = 1e-6;
inline constexpr double kPriorSumTolerance = 1e-9;
inline constexpr double kDiagonalClamp = 1e-12;

inline void validate(const ConfusionMatrix& c) {
  const auto n = Eigen::Index(c.n());
  if (c.entries.rows() != n || c.entries.cols() != n || c.pose_ids.size() != c.n() || c.labels.size() != c.n())
    throw InputError("confusion matrix: inconsistent dimensions");
  double ps = 0.0;
  for (double p : c.priors) {
    if (!(p >= 0.0)) throw InputError("confusion matrix: negative prior");
    ps += p;
  }
  if (std::abs(ps - 1.0) > kPriorSumTolerance) throw InputError("confusion matrix: priors do not sum to 1");
  for (Eigen::Index i = 0; i < n; ++i) {
    if ((c.entries.row(i).array() < 0.0).any()) throw InputError("confusion matrix: negative entry in row " + std::to_string(i));
    if (std::abs(c.entries.row(i).sum() - 1.0) > kRowSumTolerance)
      throw InputError("confusion matrix: row " + std::to_string(i) + " does not sum to 1");
  }
}

inline ConfusionMatrix make_confusion(Eigen::MatrixXd entries, std::vector<double> priors) {
  ConfusionMatrix c;
  c.entries = std::move(entries);
  c.priors = std::move(priors);
  for (std::size_t i = 0; i < c.priors.size(); ++i) {
    c.pose_ids.push_back(int(i) + 1);
    c.labels.push_back(std::to_string(i + 1));
  }
  validate(c);
  return c;
}

/// C(i, j) = mean over records of pose i of P(pose j | observation).
inline ConfusionMatrix confusion_matrix(std::span<const ClassificationRecord> records, std::span<const double> priors) {
  const std::size_t n = priors.size();
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(Eigen::Index(n), Eigen::Index(n));
  std::vector<std::size_t> count(n, 0);
  for (const auto& r : records) {
    if (r.dist.size() != n)
      throw InputError("confusion_matrix: record dist length " + std::to_string(r.dist.size()) + " != " + std::to_string(n));
    if (r.true_pose < 1 || std::size_t(r.true_pose) > n) throw InputError("confusion_matrix: true_pose out of range");
    const auto i = Eigen::Index(r.true_pose - 1);
    for (std::size_t j = 0; j < n; ++j) sum(i, Eigen::Index(j)) += r.dist[j];
    ++count[std::size_t(i)];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (count[i] == 0) throw InputError("confusion_matrix: pose " + std::to_string(i + 1) + " has no records");
    sum.row(Eigen::Index(i)) /= double(count[i]);
  }
  return make_confusion(std::move(sum), std::vector<double>(priors.begin(), priors.end()));
}

/// s(C) = sum_i P(s_i) log C_ii, with the diagonal clamped at 1e-12.
inline double score(const ConfusionMatrix& c) {
  double s = 0.0;
  for (std::size_t i = 0; i < c.n(); ++i) s += c.priors[i] * std::log(std::max(c(i, i), kDiagonalClamp));
  return s;
}

/// Merges classes i and j: predicted mass in their columns adds, the merged
/// row is the prior-weighted mixture of the two rows and the merged prior is
/// the sum. The merged class takes position min(i, j). Rows are
/// renormalised afterwards to absorb rounding.
inline ConfusionMatrix collapse_pair(const ConfusionMatrix& c, std::size_t i, std::size_t j) {
  const std::size_t n = c.n();
  if (i >= n || j >= n) throw InputError("collapse_pair: index out of range");
  if (i == j) throw InputError("collapse_pair: cannot collapse a pose with itself");
  const std::size_t a = std::min(i, j), b = std::max(i, j);

  // Column merge.
  Eigen::MatrixXd cols(Eigen::Index(n), Eigen::Index(n - 1));
  for (std::size_t k = 0, out = 0; k < n; ++k) {
    if (k == b) continue;
    cols.col(Eigen::Index(out)) = c.entries.col(Eigen::Index(k));
    if (k == a) cols.col(Eigen::Index(out)) += c.entries.col(Eigen::Index(b));
    ++out;
  }
  // Row merge.
  const double pa = c.priors[a], pb = c.priors[b], pm = pa + pb;
  ConfusionMatrix r;
  r.entries.resize(Eigen::Index(n - 1), Eigen::Index(n - 1));
  for (std::size_t k = 0, out = 0; k < n; ++k) {
    if (k == b) continue;
    if (k == a) {
      r.entries.row(Eigen::Index(out)) =
          pm > 0.0 ? Eigen::RowVectorXd((pa * cols.row(Eigen::Index(a)) + pb * cols.row(Eigen::Index(b))) / pm)
                   : Eigen::RowVectorXd(0.5 * (cols.row(Eigen::Index(a)) + cols.row(Eigen::Index(b))));
      r.priors.push_back(pm);
      r.pose_ids.push_back(std::min(c.pose_ids[a], c.pose_ids[b]));
      r.labels.push_back(c.labels[a] + "+" + c.labels[b]);
    } else {
      r.entries.row(Eigen::Index(out)) = cols.row(Eigen::Index(k));
      r.priors.push_back(c.priors[k]);
      r.pose_ids.push_back(c.pose_ids[k]);
      r.labels.push_back(c.labels[k]);
    }
    ++out;
  }
  for (Eigen::Index row = 0; row < r.entries.rows(); ++row) {
    const double s = r.entries.row(row).sum();
    if (s > 0.0) r.entries.row(row) /= s;
  }
  return r;
}

struct MergeStep {
  std::size_t i = 0, j = 0;        // class indices in the matrix before the merge
  std::string merged_a, merged_b;  // their labels
  double score_after = 0.0;
};

struct CollapsePartition {
  std::vector<std::vector<int>> groups;  // original pose ids per current class
  std::vector<MergeStep> order;
};

/// Greedy reduction: repeatedly apply the collapse with the highest score,
/// ties going to the lexicographically smallest (i, j).
inline std::pair<ConfusionMatrix, CollapsePartition> reduce(const ConfusionMatrix& c, std::size_t target_n) {
  if (target_n < 1 || target_n > c.n())
    throw InputError("reduce: target_n must lie in [1, " + std::to_string(c.n()) + "]");
  ConfusionMatrix cur = c;
  CollapsePartition part;
  for (int id : c.pose_ids) part.groups.push_back({id});
  while (cur.n() > target_n) {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 1;
    for (std::size_t i = 0; i < cur.n(); ++i)
      for (std::size_t j = i + 1; j < cur.n(); ++j)
        if (const double s = score(collapse_pair(cur, i, j)); s > best) best = s, bi = i, bj = j;
    part.order.push_back({bi, bj, cur.labels[bi], cur.labels[bj], best});
    part.groups[bi].insert(part.groups[bi].end(), part.groups[bj].begin(), part.groups[bj].end());
    std::sort(part.groups[bi].begin(), part.groups[bi].end());
    part.groups.erase(part.groups.begin() + long(bj));
    cur = collapse_pair(cur, bi, bj);
  }
  return {std::move(cur), std::move(part)};
}

inline std::string to_csv(const ConfusionMatrix& c) {
  std::string out = "true\\pred";
  for (const auto& l : c.labels) out += "," + l;
  out += "\n";
  char buf[40];
  for (std::size_t i = 0; i < c.n(); ++i) {
    out += c.labels[i];
    for (std::size_t j = 0; j < c.n(); ++j) {
      std::snprintf(buf, sizeof buf, ",%.17g", c(i, j));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

inline nlohmann::json to_json(const ConfusionMatrix& c) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < c.n(); ++i) {
    std::vector<double> row;
    for (std::size_t j = 0; j < c.n(); ++j) row.push_back(c(i, j));
    rows.push_back(row);
  }
  return {{"n", c.n()}, {"pose_ids", c.pose_ids}, {"labels", c.labels}, {"priors", c.priors},
          {"entries", rows}, {"score", score(c)}};
}

inline nlohmann::json to_json(const CollapsePartition& p) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : p.order)
    steps.push_back({{"i", s.i}, {"j", s.j}, {"merged", {s.merged_a, s.merged_b}}, {"score_after", s.score_after}});
  return {{"groups", p.groups}, {"merges", steps}};
}

}  // namespace vtrap
