#pragma once

// Exact solver for small instances by exhaustive search over clustering
// patterns. For a predictor with fusion constraints every set partition of
// its levels is tried, with at most one block pinned to zero; for a predictor
// without them (relaxed problem) every subset of levels is free and the
// level count is charged once. Continuous columns use best-subset search.
// Each joint pattern is a least-squares fit on the collapsed design.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "clusterlearn/model.hpp"

namespace clusterlearn {

struct EnumGuard {
  std::uint64_t max_patterns = 2'000'000;
  std::size_t max_continuous = 3;
};

struct EnumOptions {
  std::optional<std::vector<char>> active;  ///< absent: every predictor fused
  bool fit_intercept = true;
  EnumGuard guard;
  unsigned threads = 1;
};

struct EnumResult {
  Coefficients coef;
  double objective = 0.0;       ///< optimum under the (possibly relaxed) counting
  double full_objective = 0.0;  ///< objective() of coef, i.e. the unrelaxed value
  std::uint64_t patterns = 0;
};

/// All set partitions of {0..m-1} as restricted growth strings.
inline std::vector<std::vector<std::uint8_t>> set_partitions(std::size_t m) {
  std::vector<std::vector<std::uint8_t>> out;
  if (m == 0) return {{}};
  std::vector<std::uint8_t> a(m, 0), mx(m, 0);
  while (true) {
    out.push_back(a);
    std::size_t i = m - 1;
    while (i > 0 && a[i] == mx[i - 1] + 1) --i;
    if (i == 0) break;
    ++a[i];
    for (std::size_t k = i + 1; k < m; ++k) {
      a[k] = 0;
    }
    for (std::size_t k = i; k < m; ++k) mx[k] = std::max<std::uint8_t>(k ? mx[k - 1] : 0, a[k]);
  }
  return out;
}

namespace detail {

/// One predictor's share of a joint pattern.
struct BlockPattern {
  std::vector<int> cluster;  ///< per level: free cluster id, or -1 for zero
  int free_clusters = 0;
  std::size_t nonzero_levels = 0;
  std::size_t charged_values = 0;
};

inline std::vector<BlockPattern> block_patterns(std::size_t levels, bool fused) {
  std::vector<BlockPattern> out;
  if (fused) {
    for (const auto& rgs : set_partitions(levels)) {
      const int blocks = rgs.empty() ? 0 : 1 + *std::max_element(rgs.begin(), rgs.end());
      for (int zero = -1; zero < blocks; ++zero) {
        BlockPattern bp;
        bp.charged_values = static_cast<std::size_t>(blocks);
        std::vector<int> remap(static_cast<std::size_t>(blocks), -1);
        for (int b = 0; b < blocks; ++b)
          if (b != zero) remap[static_cast<std::size_t>(b)] = bp.free_clusters++;
        for (auto b : rgs) {
          bp.cluster.push_back(remap[b]);
          if (remap[b] >= 0) ++bp.nonzero_levels;
        }
        out.push_back(std::move(bp));
      }
    }
  } else {
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << levels); ++mask) {
      BlockPattern bp;
      bp.charged_values = 1;
      for (std::size_t k = 0; k < levels; ++k) {
        const bool free = (mask >> k) & 1u;
        bp.cluster.push_back(free ? bp.free_clusters++ : -1);
        if (free) ++bp.nonzero_levels;
      }
      out.push_back(std::move(bp));
    }
  }
  return out;
}

/// Bell numbers with the (1 + blocks) zero marking: sum_b S(m, b) (1 + b).
inline std::uint64_t fused_pattern_count(std::size_t m) {
  std::vector<std::vector<long double>> s(m + 1, std::vector<long double>(m + 1, 0));
  s[0][0] = 1;
  for (std::size_t i = 1; i <= m; ++i)
    for (std::size_t b = 1; b <= i; ++b) s[i][b] = static_cast<long double>(b) * s[i - 1][b] + s[i - 1][b - 1];
  long double total = 0;
  for (std::size_t b = 0; b <= m; ++b) total += s[m][b] * static_cast<long double>(1 + b);
  return total > 1.8e19L ? std::numeric_limits<std::uint64_t>::max() : static_cast<std::uint64_t>(total);
}

inline std::uint64_t saturating_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) return std::numeric_limits<std::uint64_t>::max();
  return a * b;
}

}  // namespace detail

/// Number of joint patterns solve_enumerative would visit.
inline std::uint64_t count_patterns(const CategoricalSchema& s, const std::optional<std::vector<char>>& active) {
  std::uint64_t total = std::uint64_t{1} << std::min<std::size_t>(s.num_continuous(), 63);
  for (std::size_t j = 0; j < s.num_categorical(); ++j) {
    const bool fused = !active || (*active)[j];
    const std::size_t m = s.levels(j);
    const std::uint64_t c = fused ? detail::fused_pattern_count(m)
                            : m >= 64 ? std::numeric_limits<std::uint64_t>::max()
                                      : std::uint64_t{1} << m;
    total = detail::saturating_mul(total, c);
  }
  return total;
}

inline EnumResult solve_enumerative(const Dataset& ds, const PenaltyConfig& pen, const EnumOptions& opt = {}) {
  pen.validate();
  const auto& s = ds.schema();
  const std::size_t q = s.num_categorical(), nc = s.num_continuous();
  if (opt.active && opt.active->size() != q) throw DataError("active flags must cover every predictor");
  if (nc > opt.guard.max_continuous)
    throw GuardExceeded("enumeration guard: " + std::to_string(nc) + " continuous columns exceed the limit of " +
                        std::to_string(opt.guard.max_continuous));
  const std::uint64_t total = count_patterns(s, opt.active);
  if (total > opt.guard.max_patterns)
    throw GuardExceeded("enumeration guard: " + std::to_string(total) + " patterns exceed the limit of " +
                        std::to_string(opt.guard.max_patterns));

  std::vector<std::vector<detail::BlockPattern>> per(q);
  for (std::size_t j = 0; j < q; ++j) per[j] = detail::block_patterns(s.levels(j), !opt.active || (*opt.active)[j]);

  const double n = static_cast<double>(ds.n());
  const auto rows = static_cast<Eigen::Index>(ds.n());
  const Eigen::VectorXd& y = ds.y();

  struct Best {
    double value = std::numeric_limits<double>::infinity();
    std::uint64_t index = 0;
    Eigen::VectorXd sol;
  };

  // Decode pattern index: continuous subset is the fastest-moving digit.
  auto evaluate = [&](std::uint64_t idx, Best& best, Eigen::MatrixXd& z) {
    std::uint64_t rest = idx;
    const std::uint64_t cont_mask = rest & ((std::uint64_t{1} << nc) - 1);
    rest >>= nc;
    std::vector<const detail::BlockPattern*> bp(q);
    for (std::size_t j = q; j-- > 0;) {
      bp[j] = &per[j][rest % per[j].size()];
      rest /= per[j].size();
    }
    Eigen::Index cols = opt.fit_intercept ? 1 : 0;
    double charge = 0.0;
    for (std::size_t j = 0; j < q; ++j) {
      cols += bp[j]->free_clusters;
      charge += pen.lambda0 * static_cast<double>(bp[j]->nonzero_levels) +
                pen.lambda * static_cast<double>(bp[j]->charged_values);
    }
    for (std::size_t w = 0; w < nc; ++w)
      if ((cont_mask >> w) & 1u) ++cols, charge += pen.lambda0;
    if (charge >= best.value) return;

    z.setZero(rows, cols);
    Eigen::Index at = 0;
    if (opt.fit_intercept) z.col(at++).setOnes();
    for (std::size_t j = 0; j < q; ++j) {
      auto codes = ds.codes(j);
      for (Eigen::Index i = 0; i < rows; ++i) {
        const int c = bp[j]->cluster[codes[static_cast<std::size_t>(i)]];
        if (c >= 0) z(i, at + c) = 1.0;
      }
      at += bp[j]->free_clusters;
    }
    for (std::size_t w = 0; w < nc; ++w)
      if ((cont_mask >> w) & 1u) z.col(at++) = ds.continuous().col(static_cast<Eigen::Index>(w));

    Eigen::VectorXd sol;
    double rss = y.squaredNorm();
    if (cols > 0) {
      sol = z.completeOrthogonalDecomposition().solve(y);
      rss = (y - z * sol).squaredNorm();
    }
    const double value = rss / n + charge;
    if (value < best.value) best = {value, idx, std::move(sol)};
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(std::min<std::uint64_t>(total, 64))));
  std::vector<Best> bests(threads);
  auto work = [&](unsigned t) {
    Eigen::MatrixXd z;
    for (std::uint64_t idx = t; idx < total; idx += threads) evaluate(idx, bests[t], z);
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  // deterministic reduction: smallest value, then smallest pattern index
  const Best* best = &bests[0];
  for (const auto& b : bests)
    if (b.value < best->value || (b.value == best->value && b.index < best->index)) best = &b;

  // rebuild coefficients of the winning pattern
  std::uint64_t rest = best->index;
  const std::uint64_t cont_mask = rest & ((std::uint64_t{1} << nc) - 1);
  rest >>= nc;
  std::vector<const detail::BlockPattern*> bp(q);
  for (std::size_t j = q; j-- > 0;) {
    bp[j] = &per[j][rest % per[j].size()];
    rest /= per[j].size();
  }
  EnumResult out;
  out.coef = Coefficients::zeros(s);
  Eigen::Index at = 0;
  if (opt.fit_intercept) out.coef.alpha = best->sol[at++];
  for (std::size_t j = 0; j < q; ++j) {
    for (std::size_t k = 0; k < s.levels(j); ++k) {
      const int c = bp[j]->cluster[k];
      if (c >= 0) out.coef.categorical[j][k] = best->sol[at + c];
    }
    at += bp[j]->free_clusters;
  }
  for (std::size_t w = 0; w < nc; ++w)
    if ((cont_mask >> w) & 1u) out.coef.continuous[w] = best->sol[at++];
  out.objective = best->value;
  out.full_objective = objective(ds, out.coef, pen);
  out.patterns = total;
  return out;
}

}  // namespace clusterlearn
