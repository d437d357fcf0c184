#pragma once

// Block coordinate descent for the penalised categorical regression problem.
// Each categorical block is solved exactly by the segmentation DP; continuous
// coordinates by hard thresholding; the intercept by its mean. The logistic
// loss is handled by refitting a quadratic majoriser before every block.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "clusterlearn/dp_segment.hpp"
#include "clusterlearn/model.hpp"

namespace clusterlearn {

struct BcdConfig {
  int max_sweeps = 500;
  double rel_tol = 1e-8;
  bool use_active_sets = true;
  std::optional<Coefficients> warm;  ///< starting point; zeros when absent
  bool fit_intercept = true;
  bool randomize_order = false;
  std::uint64_t seed = 0;
  bool standardize = true;  ///< only used by fit()
  /// After convergence, move each predictor's largest cluster to zero through
  /// the intercept when that lowers the L0 term, then sweep again. Blockwise
  /// updates cannot make this joint move on their own.
  bool baseline_shift = true;

  void validate() const {
    if (max_sweeps <= 0) throw std::invalid_argument("max_sweeps must be positive");
    if (!(rel_tol > 0.0)) throw std::invalid_argument("rel_tol must be positive");
  }
};

struct FitResult {
  Coefficients coef;
  double objective = 0.0;
  int sweeps = 0;
  std::vector<double> objective_trace;
  double wall_time_ms = 0.0;
  int active_set_rounds = 0;
  int baseline_shifts = 0;
};

/// Which coefficients may be nonzero. Absent entries are pinned at 0.
struct ActiveMask {
  std::vector<std::vector<char>> categorical;
  std::vector<char> continuous;

  static ActiveMask support_of(const Coefficients& c) {
    ActiveMask m;
    for (const auto& t : c.categorical) {
      m.categorical.emplace_back(t.size());
      for (std::size_t k = 0; k < t.size(); ++k) m.categorical.back()[k] = t[k] != 0.0;
    }
    for (double v : c.continuous) m.continuous.push_back(v != 0.0);
    return m;
  }

  /// Union in place; returns true if anything was added.
  bool absorb(const ActiveMask& o) {
    bool grew = false;
    for (std::size_t j = 0; j < categorical.size(); ++j)
      for (std::size_t k = 0; k < categorical[j].size(); ++k)
        if (o.categorical[j][k] && !categorical[j][k]) categorical[j][k] = 1, grew = true;
    for (std::size_t w = 0; w < continuous.size(); ++w)
      if (o.continuous[w] && !continuous[w]) continuous[w] = 1, grew = true;
    return grew;
  }

  std::size_t size() const {
    std::size_t s = 0;
    for (const auto& t : categorical) s += static_cast<std::size_t>(std::count(t.begin(), t.end(), 1));
    return s + static_cast<std::size_t>(std::count(continuous.begin(), continuous.end(), 1));
  }

  bool operator==(const ActiveMask&) const = default;
};

/// Block j0 as a univariate problem: nonempty levels, their residual means and
/// counts, and the partial residual y - (prediction without block j0).
struct BlockReduction {
  std::vector<std::size_t> levels;
  std::vector<double> means;
  std::vector<double> weights;
  Eigen::VectorXd residual;
};

inline BlockReduction reduce_block_to_univariate(const Dataset& ds, const Coefficients& coef,
                                                 std::size_t j0) {
  BlockReduction out;
  out.residual = ds.y() - predict(ds, coef);
  const auto& theta = coef.categorical[j0];
  auto codes = ds.codes(j0);
  for (std::size_t i = 0; i < ds.n(); ++i) out.residual[static_cast<Eigen::Index>(i)] += theta[codes[i]];
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const auto& rows = ds.level_rows(j0, k);
    if (rows.empty()) continue;
    double s = 0.0;
    for (auto i : rows) s += out.residual[static_cast<Eigen::Index>(i)];
    out.levels.push_back(k);
    out.means.push_back(s / static_cast<double>(rows.size()));
    out.weights.push_back(static_cast<double>(rows.size()));
  }
  return out;
}

/// argmin_b ||r - x b||^2 + n_eff lambda0 [b != 0].
inline double update_continuous_coordinate(const Eigen::VectorXd& r, const Eigen::VectorXd& x,
                                           double lambda0, double n_eff) {
  const double xx = x.squaredNorm();
  if (!(xx > 0.0)) throw DataError("continuous column is identically zero");
  const double b = r.dot(x) / xx;
  return xx * b * b > n_eff * lambda0 ? b : 0.0;
}

/// Quadratic majoriser of the logistic loss at linear predictor eta0:
/// g_i = d/d eta of log(1 + exp(-y eta)), and the working response
/// ytilde = eta0 - 4 g.
struct LogisticMajorizer {
  Eigen::VectorXd g;
  Eigen::VectorXd ytilde;
};

inline LogisticMajorizer majorize_logistic(const Eigen::VectorXd& y, const Eigen::VectorXd& eta0) {
  LogisticMajorizer m;
  m.g.resize(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double t = y[i] * eta0[i];
    // -y e^{-t} / (1 + e^{-t}) = -y / (1 + e^{t})
    m.g[i] = t > 0 ? -y[i] * std::exp(-t) / (1.0 + std::exp(-t)) : -y[i] / (1.0 + std::exp(t));
  }
  m.ytilde = eta0 - 4.0 * m.g;
  return m;
}

namespace detail {

class BcdEngine {
 public:
  BcdEngine(const Dataset& ds, const PenaltyConfig& pen, Loss loss, bool fit_intercept)
      : ds_(ds), pen_(pen), loss_(loss), fit_intercept_(fit_intercept), n_(static_cast<double>(ds.n())) {
    pen_.validate();
    if (loss_ == Loss::logistic && ds_.task() != Task::binary)
      throw DataError("logistic loss requires labels in {-1, +1}");
    for (Eigen::Index w = 0; w < ds_.continuous().cols(); ++w)
      col_norm_.push_back(ds_.continuous().col(w).squaredNorm());
  }

  void start(const Coefficients& c) {
    if (!c.matches(ds_.schema())) throw DataError("warm start does not match dataset schema");
    coef_ = c;
    refresh();
  }

  const Coefficients& coef() const { return coef_; }
  double objective() const { return mean_loss(ds_.y(), eta_, loss_) + penalty_value(coef_, pen_); }

  void set_mask(const ActiveMask* m) { mask_ = m; }

  void sweep(std::mt19937_64* rng) {
    std::vector<std::size_t> order(coef_.categorical.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (rng) std::shuffle(order.begin(), order.end(), *rng);
    for (auto j : order) update_block(j);
    for (std::size_t w = 0; w < coef_.continuous.size(); ++w) update_continuous(w);
    if (fit_intercept_) update_intercept();
    refresh();  // drop accumulated rounding in eta
  }

  /// Exact minimiser of the (surrogate) objective over block j with the rest fixed.
  void update_block(std::size_t j) {
    auto& theta = coef_.categorical[j];
    auto codes = ds_.codes(j);
    const double scale = loss_ == Loss::squared ? 1.0 : 4.0;  // penalty factor n/2 vs 4n
    const Eigen::VectorXd work = working_residual();          // y - eta or -4g
    std::vector<double> sums(theta.size(), 0.0), counts(theta.size(), 0.0);
    for (std::size_t i = 0; i < ds_.n(); ++i) {
      sums[codes[i]] += work[static_cast<Eigen::Index>(i)] + theta[codes[i]];
      counts[codes[i]] += 1.0;
    }

    std::vector<std::size_t> free_levels;
    std::vector<double> means, weights;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      if (counts[k] == 0.0) continue;
      if (mask_ && !mask_->categorical[j][k]) continue;
      free_levels.push_back(k);
      means.push_back(sums[k] / counts[k]);
      weights.push_back(counts[k]);
    }
    std::vector<double> cand(theta.size(), 0.0);
    if (!free_levels.empty()) {
      const double l0t = loss_ == Loss::squared ? n_ * pen_.lambda0 / 2.0 : scale * n_ * pen_.lambda0;
      const double lt = loss_ == Loss::squared ? n_ * pen_.lambda / 2.0 : scale * n_ * pen_.lambda;
      auto sol = solve_univariate(means, weights, l0t, lt);
      for (std::size_t r = 0; r < free_levels.size(); ++r) cand[free_levels[r]] = sol.beta[r];
    }
    if (cand == theta) return;

    // Accept only if the true objective does not increase. Pinned zeros can
    // add a distinct value the DP does not see.
    double dloss = 0.0;
    if (loss_ == Loss::squared) {
      for (std::size_t k = 0; k < theta.size(); ++k) {
        if (counts[k] == 0.0) continue;
        const double m = sums[k] / counts[k];
        dloss += counts[k] * ((cand[k] - m) * (cand[k] - m) - (theta[k] - m) * (theta[k] - m));
      }
      dloss /= n_;
    } else {
      for (std::size_t i = 0; i < ds_.n(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const double d = cand[codes[i]] - theta[codes[i]];
        if (d == 0.0) continue;
        const double y = ds_.y()[ii];
        dloss += logistic_loss(y * (eta_[ii] + d)) - logistic_loss(y * eta_[ii]);
      }
      dloss /= n_;
    }
    const double dpen =
        pen_.lambda0 * (static_cast<double>(nonzero_count(cand)) - static_cast<double>(nonzero_count(theta))) +
        pen_.lambda * (static_cast<double>(distinct_count(cand)) - static_cast<double>(distinct_count(theta)));
    if (dloss + dpen > 0.0) return;

    for (std::size_t i = 0; i < ds_.n(); ++i) eta_[static_cast<Eigen::Index>(i)] += cand[codes[i]] - theta[codes[i]];
    theta = std::move(cand);
  }

  void update_continuous(std::size_t w) {
    if (col_norm_[w] == 0.0) return;
    double& b = coef_.continuous[w];
    const Eigen::VectorXd x = ds_.continuous().col(static_cast<Eigen::Index>(w));
    double nb = 0.0;
    if (!mask_ || mask_->continuous[w]) {
      const Eigen::VectorXd r = working_residual() + x * b;
      const double n_eff = loss_ == Loss::squared ? n_ : 8.0 * n_;
      nb = update_continuous_coordinate(r, x, pen_.lambda0, n_eff);
    }
    if (nb == b) return;
    if (loss_ == Loss::logistic && !logistic_accepts(x * (nb - b), (nb != 0.0) - (b != 0.0))) return;
    eta_ += x * (nb - b);
    b = nb;
  }

  void update_intercept() {
    const double shift = working_residual().mean();
    if (shift == 0.0) return;
    if (loss_ == Loss::logistic &&
        !logistic_accepts(Eigen::VectorXd::Constant(eta_.size(), shift), 0))
      return;
    coef_.alpha += shift;
    eta_.array() += shift;
  }

 private:
  Eigen::VectorXd working_residual() const {
    if (loss_ == Loss::squared) return ds_.y() - eta_;
    return -4.0 * majorize_logistic(ds_.y(), eta_).g;
  }

  bool logistic_accepts(const Eigen::VectorXd& d_eta, int d_nnz) const {
    double dl = 0.0;
    for (Eigen::Index i = 0; i < eta_.size(); ++i) {
      const double y = ds_.y()[i];
      dl += logistic_loss(y * (eta_[i] + d_eta[i])) - logistic_loss(y * eta_[i]);
    }
    return dl / n_ + pen_.lambda0 * d_nnz <= 0.0;
  }

  void refresh() { eta_ = predict(ds_, coef_); }

  const Dataset& ds_;
  PenaltyConfig pen_;
  Loss loss_;
  bool fit_intercept_;
  double n_;
  std::vector<double> col_norm_;
  const ActiveMask* mask_ = nullptr;
  Coefficients coef_;
  Eigen::VectorXd eta_;
};

/// Smallest value the objective can take: every predictor keeps at least one
/// distinct value. Reaching it means nothing is left to improve.
inline double trivial_lower_bound(const Dataset& ds, const PenaltyConfig& pen, Loss loss) {
  return loss == Loss::squared ? pen.lambda * static_cast<double>(ds.schema().num_categorical()) : -1.0;
}

/// Cluster label of every level plus zero flags for every coefficient.
inline std::vector<std::size_t> pattern_signature(const Coefficients& c) {
  std::vector<std::size_t> sig;
  for (const auto& t : c.categorical) {
    const auto cl = clusters_of(t);
    std::vector<std::size_t> lab(t.size());
    for (std::size_t i = 0; i < cl.size(); ++i)
      for (auto k : cl[i].levels) lab[k] = 2 * i + (cl[i].zero ? 1 : 0);
    sig.insert(sig.end(), lab.begin(), lab.end());
  }
  for (double b : c.continuous) sig.push_back(b == 0.0);
  return sig;
}

/// Sweeps until the relative decrease over a sweep drops below tol. A sweep
/// that regroups levels does not count as converged even if the objective
/// barely moved: the other blocks have not yet responded to the new pattern.
inline void run_sweeps(BcdEngine& eng, const Dataset& ds, const PenaltyConfig& pen, Loss loss,
                       const BcdConfig& cfg, int max_sweeps, FitResult& res, std::mt19937_64* rng) {
  const double floor = trivial_lower_bound(ds, pen, loss);
  double prev = eng.objective();
  auto sig = pattern_signature(eng.coef());
  for (int s = 0; s < max_sweeps; ++s) {
    eng.sweep(rng);
    const double cur = eng.objective();
    ++res.sweeps;
    res.objective_trace.push_back(cur);
    if (cur <= floor + 1e-15 * std::max(1.0, std::abs(floor))) break;
    auto now = pattern_signature(eng.coef());
    if (prev - cur <= cfg.rel_tol * std::max(std::abs(prev), 1e-300) && now == sig) break;
    prev = cur;
    sig = std::move(now);
  }
}

inline FitResult run_fit(const Dataset& ds, const PenaltyConfig& pen, const BcdConfig& cfg, Loss loss,
                         bool active_sets, const ActiveMask* initial_mask) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  BcdEngine eng(ds, pen, loss, cfg.fit_intercept);
  eng.start(cfg.warm ? *cfg.warm : Coefficients::zeros(ds.schema()));
  std::mt19937_64 rng(cfg.seed);
  std::mt19937_64* order_rng = cfg.randomize_order ? &rng : nullptr;

  // a mask covering everything restricts nothing
  if (initial_mask && initial_mask->size() == ds.schema().width()) active_sets = false;

  FitResult res;
  if (!active_sets || pen.lambda0 == 0.0) {
    run_sweeps(eng, ds, pen, loss, cfg, cfg.max_sweeps, res, order_rng);
  } else {
    ActiveMask mask;
    if (initial_mask) {
      mask = *initial_mask;
    } else {
      run_sweeps(eng, ds, pen, loss, cfg, 1, res, order_rng);
      mask = ActiveMask::support_of(eng.coef());
    }
    while (res.sweeps < cfg.max_sweeps) {
      ++res.active_set_rounds;
      eng.set_mask(&mask);
      run_sweeps(eng, ds, pen, loss, cfg, cfg.max_sweeps - res.sweeps, res, order_rng);
      eng.set_mask(nullptr);
      if (res.sweeps >= cfg.max_sweeps) break;
      run_sweeps(eng, ds, pen, loss, cfg, 1, res, order_rng);
      if (!mask.absorb(ActiveMask::support_of(eng.coef()))) break;
    }
    // polish without restriction so the result is a fixed point of plain BCD
    if (res.sweeps < cfg.max_sweeps)
      run_sweeps(eng, ds, pen, loss, cfg, cfg.max_sweeps - res.sweeps, res, order_rng);
  }
  if (cfg.baseline_shift && cfg.fit_intercept) {
    for (;;) {
      auto shifted = canonicalize_baseline(eng.coef(), Baseline::largest_cluster());
      if (!(objective(ds, shifted, pen, loss) < eng.objective())) break;
      eng.start(shifted);
      ++res.baseline_shifts;
      res.objective_trace.push_back(eng.objective());
      if (res.sweeps < cfg.max_sweeps)
        run_sweeps(eng, ds, pen, loss, cfg, cfg.max_sweeps - res.sweeps, res, order_rng);
    }
  }
  res.coef = eng.coef();
  res.objective = objective(ds, res.coef, pen, loss);
  res.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace detail

/// Plain cyclic BCD on the squared loss.
inline FitResult fit_bcd(const Dataset& ds, const PenaltyConfig& pen, const BcdConfig& cfg = {}) {
  return detail::run_fit(ds, pen, cfg, Loss::squared, false, nullptr);
}

/// BCD restricted to a growing active set. Falls back to fit_bcd when
/// lambda0 = 0. With `initial` covering every coefficient the trajectory is
/// the same as fit_bcd.
inline FitResult fit_bcd_active_set(const Dataset& ds, const PenaltyConfig& pen, const BcdConfig& cfg = {},
                                    const ActiveMask* initial = nullptr) {
  return detail::run_fit(ds, pen, cfg, Loss::squared, true, initial);
}

inline FitResult fit_logistic_bcd(const Dataset& ds, const PenaltyConfig& pen, const BcdConfig& cfg = {}) {
  if (ds.task() != Task::binary) throw DataError("logistic fit requires labels in {-1, +1}");
  return detail::run_fit(ds, pen, cfg, Loss::logistic, cfg.use_active_sets, nullptr);
}

/// Largest objective decrease available from exactly re-solving one block
/// (a categorical predictor, a continuous coordinate or the intercept) with
/// everything else fixed. About 0 at a fixed point. Squared loss.
inline double fixed_point_gap(const Dataset& ds, const Coefficients& c, const PenaltyConfig& pen) {
  const double n = static_cast<double>(ds.n());
  const double base = objective(ds, c, pen);
  double gap = 0.0;
  for (std::size_t j = 0; j < c.categorical.size(); ++j) {
    auto red = reduce_block_to_univariate(ds, c, j);
    if (red.levels.empty()) continue;
    auto sol = solve_univariate(red.means, red.weights, n * pen.lambda0 / 2.0, n * pen.lambda / 2.0);
    Coefficients d = c;
    std::fill(d.categorical[j].begin(), d.categorical[j].end(), 0.0);
    for (std::size_t r = 0; r < red.levels.size(); ++r) d.categorical[j][red.levels[r]] = sol.beta[r];
    gap = std::max(gap, base - objective(ds, d, pen));
  }
  const Eigen::VectorXd resid = ds.y() - predict(ds, c);
  for (std::size_t w = 0; w < c.continuous.size(); ++w) {
    const Eigen::VectorXd x = ds.continuous().col(static_cast<Eigen::Index>(w));
    Coefficients d = c;
    d.continuous[w] = update_continuous_coordinate(resid + x * c.continuous[w], x, pen.lambda0, n);
    gap = std::max(gap, base - objective(ds, d, pen));
  }
  Coefficients d = c;
  d.alpha += resid.mean();
  return std::max(gap, base - objective(ds, d, pen));
}

/// Entry point used by the tools: standardises continuous columns, fits,
/// and maps the coefficients back. The objective is invariant under the
/// standardisation (predictions and supports are unchanged).
inline FitResult fit(const Dataset& ds, const PenaltyConfig& pen, const BcdConfig& cfg = {},
                     Loss loss = Loss::squared) {
  const bool scale = cfg.standardize && ds.schema().num_continuous() > 0;
  std::optional<Standardizer> st;
  BcdConfig c = cfg;
  const Dataset* work = &ds;
  std::optional<Dataset> scaled;
  if (scale) {
    st = Standardizer::fit(ds);
    scaled.emplace(st->apply(ds));
    work = &*scaled;
    if (c.warm) c.warm = st->to_standardized(*c.warm);
  }
  FitResult r = loss == Loss::logistic ? fit_logistic_bcd(*work, pen, c)
                : cfg.use_active_sets  ? fit_bcd_active_set(*work, pen, c)
                                       : fit_bcd(*work, pen, c);
  if (st) {
    r.coef = st->to_original(r.coef);
    r.objective = objective(ds, r.coef, pen, loss);
  }
  return r;
}

}  // namespace clusterlearn
