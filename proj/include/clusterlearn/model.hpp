#pragma once

// Data model shared by every solver: the categorical schema and its expanded
// index layout, datasets, coefficient vectors, the penalised objective and
// the clustering pattern induced by a coefficient vector.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "clusterlearn/error.hpp"

namespace clusterlearn {

enum class Task { regression, binary };
enum class Loss { squared, logistic };

inline const char* to_string(Task t) { return t == Task::binary ? "binary" : "regression"; }
inline const char* to_string(Loss l) { return l == Loss::logistic ? "logistic" : "squared"; }

struct CategoricalPredictor {
  std::string name;
  std::vector<std::string> levels;
};

/// Column layout of the expanded design. Categorical predictor j owns the
/// contiguous index range [offset(j), offset(j) + levels(j)); continuous
/// columns follow all categorical ranges.
class CategoricalSchema {
 public:
  CategoricalSchema() = default;

  explicit CategoricalSchema(std::vector<CategoricalPredictor> predictors,
                             std::vector<std::string> continuous = {})
      : predictors_(std::move(predictors)), continuous_(std::move(continuous)) {
    std::size_t offset = 0;
    lookup_.resize(predictors_.size());
    for (std::size_t j = 0; j < predictors_.size(); ++j) {
      const auto& pred = predictors_[j];
      if (pred.levels.empty())
        throw DataError("categorical predictor '" + pred.name + "' has no levels");
      for (std::size_t k = 0; k < pred.levels.size(); ++k) {
        if (!lookup_[j].emplace(pred.levels[k], k).second)
          throw DataError("duplicate level '" + pred.levels[k] + "' in predictor '" +
                          pred.name + "'");
      }
      offsets_.push_back(offset);
      offset += pred.levels.size();
    }
    categorical_width_ = offset;
  }

  std::size_t num_categorical() const { return predictors_.size(); }
  std::size_t num_continuous() const { return continuous_.size(); }
  std::size_t levels(std::size_t j) const { return predictors_[j].levels.size(); }
  std::size_t offset(std::size_t j) const { return offsets_[j]; }
  std::size_t categorical_width() const { return categorical_width_; }
  std::size_t width() const { return categorical_width_ + continuous_.size(); }

  const CategoricalPredictor& predictor(std::size_t j) const { return predictors_[j]; }
  const std::vector<CategoricalPredictor>& predictors() const { return predictors_; }
  const std::vector<std::string>& continuous_names() const { return continuous_; }

  std::optional<std::size_t> level_index(std::size_t j, const std::string& label) const {
    auto it = lookup_[j].find(label);
    if (it == lookup_[j].end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::size_t> predictor_index(const std::string& name) const {
    for (std::size_t j = 0; j < predictors_.size(); ++j)
      if (predictors_[j].name == name) return j;
    return std::nullopt;
  }

  bool operator==(const CategoricalSchema& o) const {
    if (continuous_ != o.continuous_ || predictors_.size() != o.predictors_.size()) return false;
    for (std::size_t j = 0; j < predictors_.size(); ++j)
      if (predictors_[j].name != o.predictors_[j].name ||
          predictors_[j].levels != o.predictors_[j].levels)
        return false;
    return true;
  }

 private:
  std::vector<CategoricalPredictor> predictors_;
  std::vector<std::string> continuous_;
  std::vector<std::size_t> offsets_;
  std::vector<std::unordered_map<std::string, std::size_t>> lookup_;
  std::size_t categorical_width_ = 0;
};

/// n observations of q categorical columns (0-based level codes), N continuous
/// columns and a response. Immutable after construction.
class Dataset {
 public:
  using Codes = std::vector<std::vector<std::uint32_t>>;  // [predictor][row]

  Dataset(CategoricalSchema schema, Codes codes, Eigen::MatrixXd continuous, Eigen::VectorXd y,
          Task task = Task::regression)
      : schema_(std::move(schema)),
        codes_(std::move(codes)),
        cont_(std::move(continuous)),
        y_(std::move(y)),
        task_(task) {
    const auto n = static_cast<std::size_t>(y_.size());
    if (n == 0) throw DataError("dataset has no observations");
    if (codes_.size() != schema_.num_categorical())
      throw DataError("categorical column count does not match schema");
    if (static_cast<std::size_t>(cont_.cols()) != schema_.num_continuous())
      throw DataError("continuous column count does not match schema");
    if (schema_.num_continuous() > 0 && static_cast<std::size_t>(cont_.rows()) != n)
      throw DataError("continuous row count does not match response length");
    if (schema_.num_continuous() == 0) cont_.resize(static_cast<Eigen::Index>(n), 0);
    if (!y_.allFinite() || !cont_.allFinite()) throw DataError("non-finite value in dataset");
    if (task_ == Task::binary)
      for (Eigen::Index i = 0; i < y_.size(); ++i)
        if (y_[i] != 1.0 && y_[i] != -1.0)
          throw DataError("binary task requires labels in {-1, +1}");

    level_rows_.resize(codes_.size());
    for (std::size_t j = 0; j < codes_.size(); ++j) {
      if (codes_[j].size() != n) throw DataError("categorical column length mismatch");
      level_rows_[j].resize(schema_.levels(j));
      for (std::size_t i = 0; i < n; ++i) {
        auto k = codes_[j][i];
        if (k >= schema_.levels(j))
          throw DataError("level code out of range for predictor '" +
                          schema_.predictor(j).name + "'");
        level_rows_[j][k].push_back(i);
      }
    }
  }

  std::size_t n() const { return static_cast<std::size_t>(y_.size()); }
  const CategoricalSchema& schema() const { return schema_; }
  Task task() const { return task_; }
  const Eigen::VectorXd& y() const { return y_; }
  const Eigen::MatrixXd& continuous() const { return cont_; }
  std::span<const std::uint32_t> codes(std::size_t j) const { return codes_[j]; }
  std::uint32_t code(std::size_t row, std::size_t j) const { return codes_[j][row]; }
  const Codes& all_codes() const { return codes_; }

  /// Rows whose predictor j takes level k.
  const std::vector<std::size_t>& level_rows(std::size_t j, std::size_t k) const {
    return level_rows_[j][k];
  }
  std::size_t level_count(std::size_t j, std::size_t k) const { return level_rows_[j][k].size(); }

  Dataset with_response(Eigen::VectorXd y, std::optional<Task> task = std::nullopt) const {
    return Dataset(schema_, codes_, cont_, std::move(y), task.value_or(task_));
  }

  Dataset with_continuous(Eigen::MatrixXd cont) const {
    return Dataset(schema_, codes_, std::move(cont), y_, task_);
  }

  /// Subset of rows, schema preserved.
  Dataset rows(std::span<const std::size_t> idx) const {
    Codes c(codes_.size());
    for (std::size_t j = 0; j < codes_.size(); ++j)
      for (auto i : idx) c[j].push_back(codes_[j][i]);
    Eigen::MatrixXd w(static_cast<Eigen::Index>(idx.size()), cont_.cols());
    Eigen::VectorXd y(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto src = static_cast<Eigen::Index>(idx[r]);
      w.row(static_cast<Eigen::Index>(r)) = cont_.row(src);
      y[static_cast<Eigen::Index>(r)] = y_[src];
    }
    return Dataset(schema_, std::move(c), std::move(w), std::move(y), task_);
  }

 private:
  CategoricalSchema schema_;
  Codes codes_;
  Eigen::MatrixXd cont_;
  Eigen::VectorXd y_;
  Task task_;
  std::vector<std::vector<std::vector<std::size_t>>> level_rows_;
};

/// Intercept plus per-level and continuous coefficients. The expanded view
/// concatenates the per-predictor vectors in schema order, then continuous.
struct Coefficients {
  double alpha = 0.0;
  std::vector<std::vector<double>> categorical;
  std::vector<double> continuous;

  static Coefficients zeros(const CategoricalSchema& s) {
    Coefficients c;
    c.categorical.resize(s.num_categorical());
    for (std::size_t j = 0; j < s.num_categorical(); ++j) c.categorical[j].assign(s.levels(j), 0.0);
    c.continuous.assign(s.num_continuous(), 0.0);
    return c;
  }

  bool matches(const CategoricalSchema& s) const {
    if (categorical.size() != s.num_categorical() || continuous.size() != s.num_continuous())
      return false;
    for (std::size_t j = 0; j < categorical.size(); ++j)
      if (categorical[j].size() != s.levels(j)) return false;
    return true;
  }

  Eigen::VectorXd expanded() const {
    std::size_t p = continuous.size();
    for (const auto& t : categorical) p += t.size();
    Eigen::VectorXd b(static_cast<Eigen::Index>(p));
    Eigen::Index at = 0;
    for (const auto& t : categorical)
      for (double v : t) b[at++] = v;
    for (double v : continuous) b[at++] = v;
    return b;
  }

  static Coefficients from_expanded(const CategoricalSchema& s, const Eigen::VectorXd& beta,
                                    double alpha = 0.0) {
    if (static_cast<std::size_t>(beta.size()) != s.width())
      throw DataError("expanded coefficient length does not match schema width");
    Coefficients c = zeros(s);
    c.alpha = alpha;
    Eigen::Index at = 0;
    for (auto& t : c.categorical)
      for (double& v : t) v = beta[at++];
    for (double& v : c.continuous) v = beta[at++];
    return c;
  }

  bool operator==(const Coefficients&) const = default;
};

struct PenaltyConfig {
  double lambda0 = 0.0;  ///< weight of the number of nonzero coefficients
  double lambda = 0.0;   ///< weight of the number of distinct values per predictor

  void validate() const {
    if (!(std::isfinite(lambda0) && std::isfinite(lambda)) || lambda0 < 0 || lambda < 0)
      throw std::invalid_argument("penalties must be finite and non-negative");
  }
};

/// Number of distinct values (exact equality) in one predictor's block.
inline std::size_t distinct_count(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  return static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
}

inline std::size_t nonzero_count(std::span<const double> values) {
  return static_cast<std::size_t>(std::count_if(values.begin(), values.end(),
                                                [](double v) { return v != 0.0; }));
}

inline std::size_t nonzero_count(const Coefficients& c) {
  std::size_t nnz = nonzero_count(c.continuous);
  for (const auto& t : c.categorical) nnz += nonzero_count(t);
  return nnz;
}

/// Sum over categorical predictors of the number of distinct coefficient
/// values (zero counts as a value).
inline std::size_t fusion_count(const Coefficients& c) {
  std::size_t total = 0;
  for (const auto& t : c.categorical) total += distinct_count(t);
  return total;
}

/// Sparse description of the expanded design X: each row has exactly one
/// active column inside every categorical range, continuous columns dense.
struct ExpandedDesign {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t q = 0;
  std::vector<std::size_t> active;  ///< row-major rows x q global column indices
  Eigen::MatrixXd continuous;
  std::size_t continuous_offset = 0;

  std::span<const std::size_t> row_columns(std::size_t i) const {
    return {active.data() + i * q, q};
  }

  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows),
                                              static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i) {
      for (auto c : row_columns(i)) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = 1.0;
      for (Eigen::Index w = 0; w < continuous.cols(); ++w)
        x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(continuous_offset) + w) =
            continuous(static_cast<Eigen::Index>(i), w);
    }
    return x;
  }

  Eigen::VectorXd multiply(const Eigen::VectorXd& beta) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows));
    for (std::size_t i = 0; i < rows; ++i)
      for (auto c : row_columns(i)) out[static_cast<Eigen::Index>(i)] += beta[static_cast<Eigen::Index>(c)];
    if (continuous.cols() > 0)
      out += continuous * beta.segment(static_cast<Eigen::Index>(continuous_offset), continuous.cols());
    return out;
  }
};

inline ExpandedDesign expand_design(const Dataset& ds) {
  const auto& s = ds.schema();
  ExpandedDesign x;
  x.rows = ds.n();
  x.cols = s.width();
  x.q = s.num_categorical();
  x.active.resize(x.rows * x.q);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.q; ++j) x.active[i * x.q + j] = s.offset(j) + ds.code(i, j);
  x.continuous = ds.continuous();
  x.continuous_offset = s.categorical_width();
  return x;
}

/// Linear predictor alpha + X beta.
inline Eigen::VectorXd predict(const Dataset& ds, const Coefficients& c) {
  if (!c.matches(ds.schema())) throw DataError("coefficients do not match dataset schema");
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(ds.n()), c.alpha);
  for (std::size_t j = 0; j < c.categorical.size(); ++j) {
    const auto& theta = c.categorical[j];
    auto codes = ds.codes(j);
    for (std::size_t i = 0; i < ds.n(); ++i) eta[static_cast<Eigen::Index>(i)] += theta[codes[i]];
  }
  for (std::size_t w = 0; w < c.continuous.size(); ++w)
    if (c.continuous[w] != 0.0) eta += c.continuous[w] * ds.continuous().col(static_cast<Eigen::Index>(w));
  return eta;
}

/// log(1 + exp(-m)) without overflow.
inline double logistic_loss(double margin) {
  if (margin > 0) return std::log1p(std::exp(-margin));
  return -margin + std::log1p(std::exp(margin));
}

/// Mean loss (1/n) sum L(y_i, eta_i).
inline double mean_loss(const Eigen::VectorXd& y, const Eigen::VectorXd& eta, Loss loss) {
  const auto n = static_cast<double>(y.size());
  if (loss == Loss::squared) return (y - eta).squaredNorm() / n;
  double s = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) s += logistic_loss(y[i] * eta[i]);
  return s / n;
}

inline double penalty_value(const Coefficients& c, const PenaltyConfig& pen) {
  return pen.lambda0 * static_cast<double>(nonzero_count(c)) +
         pen.lambda * static_cast<double>(fusion_count(c));
}

/// (1/n) loss + lambda0 ||beta||_0 + lambda sum_j |{beta_k : k in I_j}|.
inline double objective(const Dataset& ds, const Coefficients& c, const PenaltyConfig& pen,
                        Loss loss = Loss::squared) {
  pen.validate();
  if (loss == Loss::logistic && ds.task() != Task::binary)
    throw DataError("logistic loss requires a binary task");
  return mean_loss(ds.y(), predict(ds, c), loss) + penalty_value(c, pen);
}

// ---------------------------------------------------------------------------
// Clustering pattern

struct Cluster {
  std::vector<std::size_t> levels;  ///< level indices within the predictor, ascending
  bool zero = false;
};

/// Partition of each predictor's levels into clusters. Clusters never span
/// predictors; within a predictor they are ordered by their smallest member.
struct ClusteringPattern {
  std::vector<std::vector<Cluster>> predictors;

  std::size_t total_clusters() const {
    std::size_t t = 0;
    for (const auto& p : predictors) t += p.size();
    return t;
  }

  std::size_t nonzero_clusters() const {
    std::size_t t = 0;
    for (const auto& p : predictors)
      for (const auto& c : p) t += c.zero ? 0 : 1;
    return t;
  }

  /// Exhaustive, non-overlapping, non-empty per predictor.
  bool valid_for(const CategoricalSchema& s) const {
    if (predictors.size() != s.num_categorical()) return false;
    for (std::size_t j = 0; j < predictors.size(); ++j) {
      std::vector<int> seen(s.levels(j), 0);
      for (const auto& c : predictors[j]) {
        if (c.levels.empty()) return false;
        for (auto k : c.levels) {
          if (k >= seen.size() || seen[k]++) return false;
        }
      }
      if (std::find(seen.begin(), seen.end(), 0) != seen.end()) return false;
    }
    return true;
  }

  /// Cluster id of each level of predictor j.
  std::vector<std::size_t> labels(std::size_t j, std::size_t levels) const {
    std::vector<std::size_t> out(levels, 0);
    for (std::size_t c = 0; c < predictors[j].size(); ++c)
      for (auto k : predictors[j][c].levels) out[k] = c;
    return out;
  }
};

inline std::vector<Cluster> clusters_of(std::span<const double> theta) {
  std::vector<Cluster> out;
  std::map<double, std::size_t> index;  // -0.0 and 0.0 compare equal
  for (std::size_t k = 0; k < theta.size(); ++k) {
    auto [it, fresh] = index.emplace(theta[k], out.size());
    if (fresh) out.push_back(Cluster{{}, theta[k] == 0.0});
    out[it->second].levels.push_back(k);
  }
  return out;
}

inline ClusteringPattern clustering_of(const Coefficients& c) {
  ClusteringPattern g;
  for (const auto& t : c.categorical) g.predictors.push_back(clusters_of(t));
  return g;
}

// ---------------------------------------------------------------------------
// Baseline shifts

struct Baseline {
  enum class Mode { largest_cluster_zero, user_levels };
  Mode mode = Mode::largest_cluster_zero;
  std::vector<std::size_t> levels;  ///< per predictor, used with user_levels

  static Baseline largest_cluster() { return {}; }
  static Baseline user(std::vector<std::size_t> lv) { return {Mode::user_levels, std::move(lv)}; }
};

/// Shift every predictor's coefficients by a constant so that the chosen
/// level (or the most populous cluster) is zero, moving the constant into the
/// intercept. Predictions are unchanged.
inline Coefficients canonicalize_baseline(Coefficients c, const Baseline& b) {
  if (b.mode == Baseline::Mode::user_levels && b.levels.size() != c.categorical.size())
    throw DataError("baseline must name one level per predictor");
  for (std::size_t j = 0; j < c.categorical.size(); ++j) {
    auto& theta = c.categorical[j];
    double shift = 0.0;
    if (b.mode == Baseline::Mode::user_levels) {
      if (b.levels[j] >= theta.size()) throw DataError("unknown baseline level");
      shift = theta[b.levels[j]];
    } else {
      auto clusters = clusters_of(theta);
      // first-seen order makes ties resolve to the cluster holding the smallest level
      const Cluster* best = &clusters.front();
      for (const auto& cl : clusters)
        if (cl.levels.size() > best->levels.size()) best = &cl;
      shift = theta[best->levels.front()];
    }
    if (shift == 0.0) continue;
    for (double& v : theta) v = (v == shift) ? 0.0 : v - shift;
    c.alpha += shift;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Continuous-feature standardisation

/// Column means and standard deviations of the continuous block. Fits run on
/// the standardised data; coefficients are mapped back to the original scale.
/// Constant columns keep scale 1 (they centre to zero and end up unused).
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const Dataset& ds) {
    Standardizer s;
    const auto& w = ds.continuous();
    const double n = static_cast<double>(ds.n());
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      double m = w.col(c).mean();
      double var = (w.col(c).array() - m).square().sum() / n;
      s.mean.push_back(m);
      s.scale.push_back(var > 0 ? std::sqrt(var) : 1.0);
    }
    return s;
  }

  Dataset apply(const Dataset& ds) const {
    Eigen::MatrixXd w = ds.continuous();
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      w.col(c) = (w.col(c).array() - mean[static_cast<std::size_t>(c)]) / scale[static_cast<std::size_t>(c)];
    return ds.with_continuous(std::move(w));
  }

  Coefficients to_original(Coefficients c) const {
    for (std::size_t k = 0; k < c.continuous.size(); ++k) {
      if (c.continuous[k] == 0.0) continue;
      c.continuous[k] /= scale[k];
      c.alpha -= c.continuous[k] * mean[k];
    }
    return c;
  }

  Coefficients to_standardized(Coefficients c) const {
    for (std::size_t k = 0; k < c.continuous.size(); ++k) {
      if (c.continuous[k] == 0.0) continue;
      c.alpha += c.continuous[k] * mean[k];
      c.continuous[k] *= scale[k];
    }
    return c;
  }
};

/// Re-index coefficients fitted under `from` onto schema `to` by predictor
/// name and level label. Levels unknown to `from` get coefficient 0.
inline Coefficients align_coefficients(const Coefficients& c, const CategoricalSchema& from,
                                       const CategoricalSchema& to) {
  Coefficients out = Coefficients::zeros(to);
  out.alpha = c.alpha;
  for (std::size_t j = 0; j < to.num_categorical(); ++j) {
    auto src = from.predictor_index(to.predictor(j).name);
    if (!src) throw DataError("predictor '" + to.predictor(j).name + "' missing from coefficients");
    for (std::size_t k = 0; k < to.levels(j); ++k) {
      auto lk = from.level_index(*src, to.predictor(j).levels[k]);
      if (lk) out.categorical[j][k] = c.categorical[*src][*lk];
    }
  }
  for (std::size_t w = 0; w < to.num_continuous(); ++w) {
    const auto& names = from.continuous_names();
    auto it = std::find(names.begin(), names.end(), to.continuous_names()[w]);
    if (it == names.end())
      throw DataError("continuous column '" + to.continuous_names()[w] + "' missing from coefficients");
    out.continuous[w] = c.continuous[static_cast<std::size_t>(it - names.begin())];
  }
  return out;
}

/// Same rows with every unobserved level removed from the schema. Map
/// coefficients back with align_coefficients; dropped levels get 0.
inline Dataset compact_levels(const Dataset& ds) {
  const auto& s = ds.schema();
  std::vector<CategoricalPredictor> preds;
  Dataset::Codes codes(s.num_categorical());
  for (std::size_t j = 0; j < s.num_categorical(); ++j) {
    CategoricalPredictor p{s.predictor(j).name, {}};
    std::vector<std::uint32_t> remap(s.levels(j), 0);
    for (std::size_t k = 0; k < s.levels(j); ++k)
      if (ds.level_count(j, k) > 0) {
        remap[k] = static_cast<std::uint32_t>(p.levels.size());
        p.levels.push_back(s.predictor(j).levels[k]);
      }
    for (auto c : ds.codes(j)) codes[j].push_back(remap[c]);
    preds.push_back(std::move(p));
  }
  return Dataset(CategoricalSchema(std::move(preds), s.continuous_names()), std::move(codes), ds.continuous(), ds.y(),
                 ds.task());
}

}  // namespace clusterlearn
