#pragma once

// Exact solver for the weighted univariate fused-and-sparse problem
//
//   min_beta  1/2 sum_i n_i (beta_i - ybar_i)^2 + l0 ||beta||_0
//             + l * #{i : beta_i != beta_{i+1}}
//
// over a nonincreasing sequence ybar. The problem is solved in maximisation
// form with per-element reward e_i(x) = -n_i (x - ybar_i)^2 / 2 + l0 [x = 0]
// by the forward recursion
//
//   delta_1 = e_1
//   f_k(b)  = max{ delta_{k-1}(b), max delta_{k-1} - l }
//   delta_k = e_k + f_k
//
// followed by a backtrace. Every delta_k and f_k is a continuous piecewise
// quadratic plus finitely many strictly positive spikes; since the L0 reward
// only ever enters at x = 0, spikes live at the origin in practice, but the
// representation supports any location.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "clusterlearn/error.hpp"

namespace clusterlearn {

/// Piece of a piecewise quadratic, valid on (previous upper, upper].
struct QuadraticPiece {
  double upper;
  double a, b, c;

  double operator()(double x) const { return (a * x + b) * x + c; }
  bool same_shape(const QuadraticPiece& o) const { return a == o.a && b == o.b && c == o.c; }
};

struct Spike {
  double x;
  double height;
};

struct Argmax {
  double x;
  double value;
};

/// Per-element reward -weight (x - center)^2 / 2 + bonus [x = 0].
struct DataTerm {
  double weight;
  double center;
  double bonus;
};

class PiecewiseValueFn {
 public:
  static constexpr double kInf = std::numeric_limits<double>::infinity();

  PiecewiseValueFn() : pieces_{{kInf, 0.0, 0.0, 0.0}} {}

  static PiecewiseValueFn quadratic(double a, double b, double c) {
    PiecewiseValueFn f;
    f.pieces_.front() = {kInf, a, b, c};
    return f;
  }

  static PiecewiseValueFn constant(double v) { return quadratic(0.0, 0.0, v); }

  /// Build from explicit pieces (last upper must be +inf) and spikes.
  static PiecewiseValueFn from_parts(std::vector<QuadraticPiece> pieces, std::vector<Spike> spikes = {}) {
    PiecewiseValueFn f;
    f.pieces_ = std::move(pieces);
    for (const auto& s : spikes) f.add_spike(s.x, s.height);
    if (!f.well_formed()) throw std::invalid_argument("malformed piecewise value function");
    return f;
  }

  const std::vector<QuadraticPiece>& pieces() const { return pieces_; }
  const std::vector<Spike>& spikes() const { return spikes_; }

  double lower_bound_of(std::size_t i) const { return i == 0 ? -kInf : pieces_[i - 1].upper; }

  std::size_t piece_index(double x) const {
    auto it = std::lower_bound(pieces_.begin(), pieces_.end(), x,
                               [](const QuadraticPiece& p, double v) { return p.upper < v; });
    return static_cast<std::size_t>(it - pieces_.begin());
  }

  double quadratic_value(double x) const { return pieces_[piece_index(x)](x); }

  double spike_height(double x) const {
    for (const auto& s : spikes_)
      if (s.x == x) return s.height;
    return 0.0;
  }

  double operator()(double x) const { return quadratic_value(x) + spike_height(x); }

  void add_quadratic(double a, double b, double c) {
    for (auto& p : pieces_) {
      p.a += a;
      p.b += b;
      p.c += c;
    }
  }

  /// Adds `height` to the spike at x (creating it if needed); a spike whose
  /// height drops to zero or below is removed.
  void add_spike(double x, double height) {
    for (auto it = spikes_.begin(); it != spikes_.end(); ++it) {
      if (it->x == x) {
        it->height += height;
        if (!(it->height > 0.0)) spikes_.erase(it);
        return;
      }
    }
    if (height > 0.0) {
      auto pos = std::lower_bound(spikes_.begin(), spikes_.end(), x,
                                  [](const Spike& s, double v) { return s.x < v; });
      spikes_.insert(pos, Spike{x, height});
    }
  }

  void merge_identical_pieces() {
    std::vector<QuadraticPiece> merged;
    merged.reserve(pieces_.size());
    for (const auto& p : pieces_) {
      if (!merged.empty() && merged.back().same_shape(p))
        merged.back().upper = p.upper;
      else
        merged.push_back(p);
    }
    pieces_ = std::move(merged);
  }

  /// Breakpoints strictly increasing, last piece unbounded, spikes strictly
  /// positive at distinct finite locations.
  bool well_formed() const {
    if (pieces_.empty() || pieces_.back().upper != kInf) return false;
    for (std::size_t i = 0; i + 1 < pieces_.size(); ++i) {
      if (!std::isfinite(pieces_[i].upper)) return false;
      if (i > 0 && !(pieces_[i - 1].upper < pieces_[i].upper)) return false;
    }
    for (const auto& p : pieces_)
      if (!std::isfinite(p.a) || !std::isfinite(p.b) || !std::isfinite(p.c)) return false;
    for (std::size_t i = 0; i < spikes_.size(); ++i) {
      if (!(spikes_[i].height > 0.0) || !std::isfinite(spikes_[i].x)) return false;
      if (i > 0 && !(spikes_[i - 1].x < spikes_[i].x)) return false;
    }
    return true;
  }

 private:
  std::vector<QuadraticPiece> pieces_;
  std::vector<Spike> spikes_;
};

namespace detail {

/// a strictly better than b: larger value, then x == 0, then smaller x.
inline bool better_candidate(const Argmax& a, const Argmax& b) {
  if (a.value != b.value) return a.value > b.value;
  const bool az = a.x == 0.0, bz = b.x == 0.0;
  if (az != bz) return az;
  return a.x < b.x;
}

/// Point of [lo, hi] closest to zero.
inline double nearest_to_zero(double lo, double hi) {
  if (lo <= 0.0 && 0.0 <= hi) return 0.0;
  return lo > 0.0 ? lo : hi;
}

/// Real roots r1 <= r2 of a x^2 + b x + c = 0 with a != 0, using the
/// cancellation-free form.
inline std::pair<double, double> quadratic_roots(double a, double b, double c, double disc) {
  const double sq = std::sqrt(disc);
  const double t = -0.5 * (b + std::copysign(sq, b));
  double r1, r2;
  if (t == 0.0) {
    r1 = r2 = 0.0;
  } else {
    r1 = t / a;
    r2 = c / t;
  }
  if (r1 > r2) std::swap(r1, r2);
  return {r1, r2};
}

inline constexpr double kTangencyTol = 1e-14;

}  // namespace detail

/// Exact global maximum of f: the better of the spike candidates and the
/// supremum of the quadratic part (attained thanks to continuity). Ties go to
/// x = 0, then to the smallest argmax. Throws if the quadratic part is
/// unbounded above.
inline Argmax fmax_over_F(const PiecewiseValueFn& f) {
  constexpr double inf = PiecewiseValueFn::kInf;
  const auto& pieces = f.pieces();
  bool have = false;
  Argmax best{0.0, -inf};
  auto consider = [&](double x, double v) {
    Argmax cand{x, v};
    if (!have || detail::better_candidate(cand, best)) best = cand, have = true;
  };

  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const auto& p = pieces[i];
    const double lo = f.lower_bound_of(i), hi = p.upper;
    if (p.a < 0.0) {
      const double x = std::clamp(-p.b / (2.0 * p.a), lo, hi);
      consider(x, p(x));
    } else if (p.a == 0.0 && p.b == 0.0) {
      consider(detail::nearest_to_zero(lo, hi), p.c);
    } else {
      // convex or linear: maximum sits at an endpoint, which must be finite
      // whenever the function rises towards it
      const bool rises_left = p.a > 0.0 || p.b < 0.0;
      const bool rises_right = p.a > 0.0 || p.b > 0.0;
      if ((rises_left && !std::isfinite(lo)) || (rises_right && !std::isfinite(hi)))
        throw SolverError("piecewise value function is unbounded above");
      if (std::isfinite(lo)) consider(lo, p(lo));
      if (std::isfinite(hi)) consider(hi, p(hi));
    }
  }
  for (const auto& s : f.spikes()) consider(s.x, f.quadratic_value(s.x) + s.height);
  return best;
}

/// f(b) = max{ delta(b), max delta - lambda }. The quadratic part is clipped
/// from below at the plateau; spikes keep only their surplus over the clipped
/// quadratic and disappear when that surplus is not positive. `known_max`
/// may carry a precomputed fmax_over_F(delta).
inline PiecewiseValueFn clip_with_jump_penalty(const PiecewiseValueFn& delta, double lambda,
                                               const Argmax* known_max = nullptr) {
  constexpr double inf = PiecewiseValueFn::kInf;
  const Argmax top = known_max ? *known_max : fmax_over_F(delta);
  const double level = top.value - lambda;

  std::vector<QuadraticPiece> out;
  out.reserve(delta.pieces().size() + 4);
  auto emit = [&](double lo, double hi, const QuadraticPiece& shape) {
    if (!(lo < hi)) return;
    if (!out.empty() && out.back().same_shape(shape)) {
      out.back().upper = hi;
    } else {
      out.push_back(shape);
      out.back().upper = hi;
    }
  };
  const QuadraticPiece flat{0.0, 0.0, 0.0, level};

  const auto& pieces = delta.pieces();
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const auto& p = pieces[i];
    const double lo = delta.lower_bound_of(i), hi = p.upper;
    if (p.a == 0.0) {
      if (p.b == 0.0) {
        emit(lo, hi, p.c > level ? p : flat);
        continue;
      }
      const double r = (level - p.c) / p.b;  // p > level on (r, inf) if b > 0
      if (p.b > 0.0) {
        emit(lo, std::min(r, hi), flat);
        emit(std::max(r, lo), hi, p);
      } else {
        emit(lo, std::min(r, hi), p);
        emit(std::max(r, lo), hi, flat);
      }
      continue;
    }
    const double cc = p.c - level;
    const double disc = p.b * p.b - 4.0 * p.a * cc;
    if (disc <= detail::kTangencyTol) {
      // never strictly above the plateau (concave) or never below it (convex)
      emit(lo, hi, p.a < 0.0 ? flat : p);
      continue;
    }
    auto [r1, r2] = detail::quadratic_roots(p.a, p.b, cc, disc);
    const QuadraticPiece& outside = p.a < 0.0 ? flat : p;
    const QuadraticPiece& inside = p.a < 0.0 ? p : flat;
    emit(lo, std::min(r1, hi), outside);
    emit(std::max(r1, lo), std::min(r2, hi), inside);
    emit(std::max(r2, lo), hi, outside);
  }
  if (out.empty() || out.back().upper != inf) {
    // all pieces degenerate: cannot happen for finite input, but stay total
    out.push_back(flat);
    out.back().upper = inf;
  }

  std::vector<Spike> spikes;
  PiecewiseValueFn clipped = PiecewiseValueFn::from_parts(std::move(out));
  for (const auto& s : delta.spikes()) {
    const double value = std::max(delta.quadratic_value(s.x) + s.height, level);
    const double surplus = value - clipped.quadratic_value(s.x);
    if (surplus > 0.0) clipped.add_spike(s.x, surplus);
  }
  return clipped;
}

/// f + e_k: quadratic shifted by -w (x - c)^2 / 2 on every piece, and the L0
/// bonus merged into the spike at the origin.
inline PiecewiseValueFn add_pointwise(PiecewiseValueFn f, const DataTerm& e) {
  f.add_quadratic(-0.5 * e.weight, e.weight * e.center, -0.5 * e.weight * e.center * e.center);
  if (e.bonus != 0.0) f.add_spike(0.0, e.bonus);
  return f;
}

// ---------------------------------------------------------------------------

/// Values sorted nonincreasing with positive weights.
struct WeightedSequence {
  std::vector<double> ybar;
  std::vector<double> weights;

  std::size_t size() const { return ybar.size(); }

  void validate(bool require_sorted = true) const {
    if (ybar.size() != weights.size()) throw std::invalid_argument("values/weights length mismatch");
    for (std::size_t i = 0; i < ybar.size(); ++i) {
      if (!std::isfinite(ybar[i])) throw std::invalid_argument("non-finite value");
      if (!(weights[i] > 0.0) || !std::isfinite(weights[i]))
        throw std::invalid_argument("weights must be positive");
      if (require_sorted && i > 0 && ybar[i] > ybar[i - 1])
        throw std::invalid_argument("sequence must be sorted nonincreasing");
    }
  }
};

struct SegmentSolution {
  std::vector<double> beta;
  double objective = 0.0;
  std::size_t jump_count = 0;
  std::size_t nonzero_count = 0;
};

struct DpOptions {
  /// Verify after every recursion step that delta_k and f_k stay well formed.
  bool check_invariants = false;
};

inline void validate_penalties(double lambda0t, double lambdat) {
  if (!(lambda0t >= 0.0) || !(lambdat >= 0.0) || !std::isfinite(lambda0t) || !std::isfinite(lambdat))
    throw std::invalid_argument("penalties must be finite and non-negative");
}

/// Direct evaluation of the univariate objective.
inline double segment_objective(const WeightedSequence& seq, std::span<const double> beta,
                                double lambda0t, double lambdat) {
  double v = 0.0;
  for (std::size_t i = 0; i < beta.size(); ++i) {
    const double d = beta[i] - seq.ybar[i];
    v += 0.5 * seq.weights[i] * d * d;
    if (beta[i] != 0.0) v += lambda0t;
    if (i + 1 < beta.size() && beta[i] != beta[i + 1]) v += lambdat;
  }
  return v;
}

namespace detail {

inline SegmentSolution finish_solution(const WeightedSequence& seq, std::vector<double> beta,
                                       double lambda0t, double lambdat) {
  // Constant runs take exactly 0 or their weighted mean.
  for (std::size_t start = 0; start < beta.size();) {
    std::size_t end = start + 1;
    while (end < beta.size() && beta[end] == beta[start]) ++end;
    if (beta[start] != 0.0) {
      double sw = 0.0, swy = 0.0;
      for (std::size_t i = start; i < end; ++i) sw += seq.weights[i], swy += seq.weights[i] * seq.ybar[i];
      const double mean = swy / sw;
      for (std::size_t i = start; i < end; ++i) beta[i] = mean;
    }
    start = end;
  }
  SegmentSolution sol;
  sol.beta = std::move(beta);
  sol.objective = segment_objective(seq, sol.beta, lambda0t, lambdat);
  for (std::size_t i = 0; i < sol.beta.size(); ++i) {
    if (sol.beta[i] != 0.0) ++sol.nonzero_count;
    if (i + 1 < sol.beta.size() && sol.beta[i] != sol.beta[i + 1]) ++sol.jump_count;
  }
  return sol;
}

}  // namespace detail

/// Globally optimal solution of the univariate problem on a sorted sequence.
inline SegmentSolution dp_seg_pen_l0(const WeightedSequence& seq, double lambda0t, double lambdat,
                                     const DpOptions& opt = {}) {
  validate_penalties(lambda0t, lambdat);
  seq.validate();
  const std::size_t m = seq.size();
  if (m == 0) return {};

  auto term = [&](std::size_t i) { return DataTerm{seq.weights[i], seq.ybar[i], lambda0t}; };
  auto check = [&](const PiecewiseValueFn& f, const char* what, std::size_t k) {
    if (opt.check_invariants && !f.well_formed())
      throw SolverError(std::string("DP state ") + what + " malformed at step " + std::to_string(k));
  };

  std::vector<PiecewiseValueFn> deltas;
  std::vector<Argmax> maxima;  // maxima[k] = fmax(delta_k)
  deltas.reserve(m);
  maxima.reserve(m);
  deltas.push_back(add_pointwise(PiecewiseValueFn{}, term(0)));
  check(deltas.back(), "delta", 0);
  for (std::size_t k = 1; k < m; ++k) {
    maxima.push_back(fmax_over_F(deltas.back()));
    PiecewiseValueFn f = clip_with_jump_penalty(deltas.back(), lambdat, &maxima.back());
    check(f, "f", k);
    deltas.push_back(add_pointwise(std::move(f), term(k)));
    deltas.back().merge_identical_pieces();
    check(deltas.back(), "delta", k);
  }
  maxima.push_back(fmax_over_F(deltas.back()));

  std::vector<double> beta(m);
  beta[m - 1] = maxima[m - 1].x;
  for (std::size_t k = m - 1; k-- > 0;) {
    const double next = beta[k + 1];
    const Argmax jump{maxima[k].x, maxima[k].value - lambdat};
    if (jump.x == next) {
      beta[k] = next;
      continue;
    }
    const Argmax stay{next, deltas[k](next)};
    beta[k] = detail::better_candidate(jump, stay) ? jump.x : stay.x;
  }
  return detail::finish_solution(seq, std::move(beta), lambda0t, lambdat);
}

/// Wrapper for unsorted input: stable sort by value descending (ties by
/// original index), solve, and scatter the solution back.
inline SegmentSolution solve_univariate(std::span<const double> values, std::span<const double> weights,
                                        double lambda0t, double lambdat, const DpOptions& opt = {}) {
  if (values.size() != weights.size()) throw std::invalid_argument("values/weights length mismatch");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  WeightedSequence seq;
  for (auto i : order) {
    seq.ybar.push_back(values[i]);
    seq.weights.push_back(weights[i]);
  }
  SegmentSolution sorted = dp_seg_pen_l0(seq, lambda0t, lambdat, opt);
  SegmentSolution out = sorted;
  for (std::size_t r = 0; r < order.size(); ++r) out.beta[order[r]] = sorted.beta[r];
  return out;
}

/// Exhaustive oracle: every breakpoint subset, each segment at 0 or at its
/// weighted mean (ties to 0). Limited to m <= 18.
inline SegmentSolution brute_force_univariate(const WeightedSequence& seq, double lambda0t, double lambdat) {
  validate_penalties(lambda0t, lambdat);
  seq.validate(false);
  const std::size_t m = seq.size();
  if (m > 18) throw GuardExceeded("brute-force univariate solver limited to m <= 18");
  if (m == 0) return {};

  std::vector<double> sw(m + 1, 0.0), swy(m + 1, 0.0), swyy(m + 1, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    sw[i + 1] = sw[i] + seq.weights[i];
    swy[i + 1] = swy[i] + seq.weights[i] * seq.ybar[i];
    swyy[i + 1] = swyy[i] + seq.weights[i] * seq.ybar[i] * seq.ybar[i];
  }
  // cost of [s, e) at level zero or at its mean
  auto segment = [&](std::size_t s, std::size_t e, double& level) {
    double zero = 0.0, fitted = 0.0;
    const double mean = (swy[e] - swy[s]) / (sw[e] - sw[s]);
    for (std::size_t i = s; i < e; ++i) {
      zero += 0.5 * seq.weights[i] * seq.ybar[i] * seq.ybar[i];
      const double d = seq.ybar[i] - mean;
      fitted += 0.5 * seq.weights[i] * d * d;
    }
    fitted += lambda0t * static_cast<double>(e - s);
    if (zero <= fitted || mean == 0.0) {
      level = 0.0;
      return zero;
    }
    level = mean;
    return fitted;
  };

  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<double> best, cur(m);
  const std::uint32_t masks = 1u << (m - 1);
  for (std::uint32_t mask = 0; mask < masks; ++mask) {
    double cost = 0.0;
    std::size_t start = 0;
    for (std::size_t i = 0; i < m; ++i) {
      const bool cut = i + 1 == m || (mask >> i) & 1u;
      if (!cut) continue;
      double level = 0.0;
      cost += segment(start, i + 1, level);
      std::fill(cur.begin() + static_cast<std::ptrdiff_t>(start), cur.begin() + static_cast<std::ptrdiff_t>(i + 1), level);
      if (i + 1 < m) cost += lambdat;
      start = i + 1;
    }
    if (cost < best_cost) best_cost = cost, best = cur;
  }
  SegmentSolution sol;
  sol.beta = best;
  sol.objective = segment_objective(seq, sol.beta, lambda0t, lambdat);
  for (std::size_t i = 0; i < m; ++i) {
    if (sol.beta[i] != 0.0) ++sol.nonzero_count;
    if (i + 1 < m && sol.beta[i] != sol.beta[i + 1]) ++sol.jump_count;
  }
  return sol;
}

}  // namespace clusterlearn
