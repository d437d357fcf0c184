#pragma once

// Evaluation: R^2, accuracy, cluster purity and impurity against a known
// coefficient vector, cluster counts, minimum separation and least-squares
// refits on a collapsed design.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include "clusterlearn/model.hpp"

namespace clusterlearn {

inline double r_squared(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat) {
  if (y.size() != yhat.size()) throw DataError("r_squared: length mismatch");
  if (y.size() < 2) throw DataError("r_squared needs at least two observations");
  const double tss = (y.array() - y.mean()).square().sum();
  if (tss == 0.0) throw DataError("r_squared undefined for a constant response");
  return 1.0 - (y - yhat).squaredNorm() / tss;
}

/// Share of rows with sign(eta) == y; eta = 0 predicts +1.
inline double accuracy(const Eigen::VectorXd& y, const Eigen::VectorXd& eta) {
  if (y.size() != eta.size() || y.size() == 0) throw DataError("accuracy: length mismatch");
  double hit = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) hit += (eta[i] >= 0 ? 1.0 : -1.0) == y[i];
  return hit / static_cast<double>(y.size());
}

/// Sum over predictors of distinct values (zero included).
inline std::size_t total_levels(const Coefficients& c) { return fusion_count(c); }

/// K(beta): number of nonzero clusters.
inline std::size_t nonzero_clusters(const Coefficients& c) { return clustering_of(c).nonzero_clusters(); }

namespace detail {

inline void check_same_layout(const Coefficients& a, const Coefficients& b) {
  if (a.categorical.size() != b.categorical.size()) throw DataError("coefficient layouts differ");
  for (std::size_t j = 0; j < a.categorical.size(); ++j)
    if (a.categorical[j].size() != b.categorical[j].size()) throw DataError("coefficient layouts differ");
}

/// Members of estimated clusters that disagree with their cluster's majority true value.
inline std::size_t block_impurity(const std::vector<double>& hat, const std::vector<double>& star) {
  std::map<double, std::map<double, std::size_t>> table;  // estimated value -> true value -> count
  for (std::size_t k = 0; k < hat.size(); ++k) ++table[hat[k]][star[k]];
  std::size_t out = 0;
  for (const auto& [a, row] : table) {
    std::size_t size = 0, best = 0;
    for (const auto& [b, cnt] : row) size += cnt, best = std::max(best, cnt);
    out += size - best;
  }
  return out;
}

inline std::vector<std::size_t> true_active(const Coefficients& star) {
  std::vector<std::size_t> a;
  for (std::size_t j = 0; j < star.categorical.size(); ++j)
    if (nonzero_count(star.categorical[j]) > 0) a.push_back(j);
  return a;
}

}  // namespace detail

/// Impurity over every predictor.
inline std::size_t impurity(const Coefficients& hat, const Coefficients& star) {
  detail::check_same_layout(hat, star);
  std::size_t e = 0;
  for (std::size_t j = 0; j < hat.categorical.size(); ++j)
    e += detail::block_impurity(hat.categorical[j], star.categorical[j]);
  return e;
}

/// Impurity over the truly active predictors only.
inline std::size_t restricted_impurity(const Coefficients& hat, const Coefficients& star) {
  detail::check_same_layout(hat, star);
  std::size_t e = 0;
  for (auto j : detail::true_active(star)) e += detail::block_impurity(hat.categorical[j], star.categorical[j]);
  return e;
}

/// (1/nu) sum over truly active predictors and estimated clusters of the
/// majority count, nu = number of levels of the truly active predictors.
inline double purity(const Coefficients& hat, const Coefficients& star) {
  detail::check_same_layout(hat, star);
  const auto act = detail::true_active(star);
  if (act.empty()) throw DataError("purity undefined: the true coefficients have no active predictor");
  std::size_t nu = 0;
  for (auto j : act) nu += star.categorical[j].size();
  return 1.0 - static_cast<double>(restricted_impurity(hat, star)) / static_cast<double>(nu);
}

/// Smallest gap between distinct values within one predictor.
inline double delta_min(const Coefficients& star) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& t : star.categorical) {
    std::vector<double> v(t);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    for (std::size_t k = 1; k < v.size(); ++k) best = std::min(best, v[k] - v[k - 1]);
  }
  if (!std::isfinite(best)) throw DataError("minimum separation undefined: every predictor is constant");
  return best;
}

struct RefitResult {
  Eigen::VectorXd fitted;
  Eigen::VectorXd coef;  ///< intercept, then one value per nonzero cluster in pattern order
  double mse = 0.0;      ///< (1/n) residual sum of squares
};

/// Least squares of `target` on [1, X_G], X_G holding one summed dummy column
/// per nonzero cluster. Minimum-norm solution when collinear.
inline RefitResult collapsed_refit(const Dataset& ds, const Eigen::VectorXd& target, const ClusteringPattern& g) {
  if (!g.valid_for(ds.schema())) throw DataError("pattern does not fit the schema");
  if (target.size() != static_cast<Eigen::Index>(ds.n())) throw DataError("target length mismatch");
  const auto rows = static_cast<Eigen::Index>(ds.n());
  Eigen::Index cols = 1;
  for (const auto& p : g.predictors)
    for (const auto& c : p) cols += c.zero ? 0 : 1;
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(rows, cols);
  z.col(0).setOnes();
  Eigen::Index at = 1;
  for (std::size_t j = 0; j < g.predictors.size(); ++j) {
    std::vector<Eigen::Index> col_of(ds.schema().levels(j), -1);
    for (const auto& c : g.predictors[j]) {
      if (c.zero) continue;
      for (auto k : c.levels) col_of[k] = at;
      ++at;
    }
    auto codes = ds.codes(j);
    for (Eigen::Index i = 0; i < rows; ++i)
      if (auto c = col_of[codes[static_cast<std::size_t>(i)]]; c >= 0) z(i, c) = 1.0;
  }
  RefitResult r;
  r.coef = z.completeOrthogonalDecomposition().solve(target);
  r.fitted = z * r.coef;
  r.mse = (target - r.fitted).squaredNorm() / static_cast<double>(rows);
  return r;
}

/// Merge values within `tol` of each other (chained after sorting) to their
/// mean; a group touching 0 becomes exactly 0. For externally produced
/// coefficients whose clusters carry rounding noise.
inline Coefficients snap_to_clusters(Coefficients c, double tol = 1e-9) {
  auto snap = [tol](std::vector<double>& t) {
    std::vector<std::size_t> order(t.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return t[a] < t[b]; });
    for (std::size_t s = 0; s < order.size();) {
      std::size_t e = s + 1;
      while (e < order.size() && t[order[e]] - t[order[e - 1]] <= tol) ++e;
      double sum = 0;
      bool zero = false;
      for (std::size_t r = s; r < e; ++r) sum += t[order[r]], zero = zero || std::abs(t[order[r]]) <= tol;
      const double v = zero ? 0.0 : sum / static_cast<double>(e - s);
      for (std::size_t r = s; r < e; ++r) t[order[r]] = v;
      s = e;
    }
  };
  for (auto& t : c.categorical) snap(t);
  for (auto& v : c.continuous)
    if (std::abs(v) <= tol) v = 0.0;
  return c;
}

struct EvalReport {
  std::optional<double> r2;
  std::optional<double> accuracy;
  std::size_t total_levels = 0;
  std::size_t nonzero_clusters = 0;
  std::optional<double> purity;
  std::optional<std::size_t> impurity;
  std::optional<double> delta_min;  ///< of the true coefficients
  double wall_time_ms = 0.0;
};

inline EvalReport evaluate(const Dataset& test, const Coefficients& coef, const Coefficients* star = nullptr) {
  EvalReport r;
  const Eigen::VectorXd eta = predict(test, coef);
  if (test.task() == Task::binary)
    r.accuracy = accuracy(test.y(), eta);
  else
    r.r2 = r_squared(test.y(), eta);
  r.total_levels = total_levels(coef);
  r.nonzero_clusters = nonzero_clusters(coef);
  if (star) {
    r.impurity = impurity(coef, *star);
    if (!detail::true_active(*star).empty()) r.purity = purity(coef, *star);
    try {
      r.delta_min = delta_min(*star);
    } catch (const DataError&) {
    }
  }
  return r;
}

}  // namespace clusterlearn
