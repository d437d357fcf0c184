#pragma once

// Validation tuning over a (lambda, lambda0) grid and replicated synthetic
// benchmarks with mean and standard error, plus line-delimited JSON records.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <functional>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "clusterlearn/bcd.hpp"
#include "clusterlearn/data_gen.hpp"
#include "clusterlearn/io.hpp"
#include "clusterlearn/metrics.hpp"
#include "clusterlearn/model.hpp"

namespace clusterlearn {

enum class Metric { r2, accuracy };

struct GridSpec {
  std::vector<double> lambdas;
  std::vector<double> lambda0s;
  Metric metric = Metric::r2;

  /// k values, log-spaced, endpoints included.
  static std::vector<double> log_spaced(double lo, double hi, std::size_t k) {
    if (!(lo > 0 && hi >= lo) || k == 0) throw std::invalid_argument("log_spaced needs 0 < lo <= hi and k >= 1");
    std::vector<double> v(k);
    for (std::size_t i = 0; i < k; ++i) {
      const double t = k == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(k - 1);
      v[i] = std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo)));
    }
    v.front() = lo;
    v.back() = k == 1 ? lo : hi;
    return v;
  }

  /// 10 x 10 grid on [1e-5, 10].
  static GridSpec cl_l0(Metric m = Metric::r2) {
    return {log_spaced(1e-5, 10, 10), log_spaced(1e-5, 10, 10), m};
  }

  /// 100 lambda values on [1e-5, 10], lambda0 = 0.
  static GridSpec cl(Metric m = Metric::r2) { return {log_spaced(1e-5, 10, 100), {0.0}, m}; }

  void validate() const {
    if (lambdas.empty() || lambda0s.empty()) throw std::invalid_argument("grid must not be empty");
    for (const auto* g : {&lambdas, &lambda0s})
      for (double v : *g)
        if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("grid values must be finite and >= 0");
  }
};

struct GridPoint {
  double lambda = 0.0, lambda0 = 0.0;
  double score = 0.0;            ///< validation metric
  double train_objective = 0.0;
  int sweeps = 0;
};

struct TuneResult {
  Coefficients coef;
  PenaltyConfig pen;
  double score = 0.0;
  std::vector<GridPoint> path;  ///< in fitting order
  double wall_time_ms = 0.0;
};

inline double validation_score(const Dataset& val, const Coefficients& c, Metric m) {
  const Eigen::VectorXd eta = predict(val, c);
  return m == Metric::accuracy ? accuracy(val.y(), eta) : r_squared(val.y(), eta);
}

/// Called for every fit a tuning run makes (warm and cold).
using FitObserver = std::function<void(const Dataset& train, const PenaltyConfig&, const FitResult&)>;

/// Validation score of a coefficient vector on the training layout.
using Scorer = std::function<double(const Coefficients&)>;

/// Fits every grid point on `train` and keeps the best score. Order:
/// lambda descending, lambda0 ascending within. Each fit starts from the
/// solution at the same lambda0 and the previous lambda; points of the first
/// lambda chain along lambda0. A cold fit runs too and the lower objective
/// wins, so the path is never worse than independent fits.
/// Ties prefer larger lambda, then larger lambda0.
inline TuneResult tune_with(const Dataset& train, const Scorer& score_of, const GridSpec& grid,
                            const BcdConfig& base = {}, Loss loss = Loss::squared,
                            const FitObserver& observer = {}) {
  grid.validate();
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> lams(grid.lambdas), lam0s(grid.lambda0s);
  std::sort(lams.rbegin(), lams.rend());
  std::sort(lam0s.begin(), lam0s.end());

  TuneResult best;
  bool have = false;
  std::vector<std::optional<Coefficients>> prev_lambda(lam0s.size());
  std::optional<Coefficients> prev_point;
  for (double lam : lams) {
    for (std::size_t b = 0; b < lam0s.size(); ++b) {
      BcdConfig cfg = base;
      cfg.warm = prev_lambda[b] ? prev_lambda[b] : prev_point;
      const PenaltyConfig pen{lam0s[b], lam};
      FitResult fr = fit(train, pen, cfg, loss);
      if (observer) observer(train, pen, fr);
      if (cfg.warm) {
        // both fits are local; keep whichever ends lower
        BcdConfig cold_cfg = base;
        cold_cfg.warm.reset();
        FitResult cold = fit(train, pen, cold_cfg, loss);
        if (observer) observer(train, pen, cold);
        if (cold.objective < fr.objective) fr = std::move(cold);
      }
      const double score = score_of(fr.coef);
      best.path.push_back({lam, lam0s[b], score, fr.objective, fr.sweeps});
      const bool better = !have || score > best.score ||
                          (score == best.score && (lam > best.pen.lambda ||
                                                   (lam == best.pen.lambda && lam0s[b] > best.pen.lambda0)));
      if (better) {
        best.coef = fr.coef;
        best.pen = pen;
        best.score = score;
        have = true;
      }
      prev_lambda[b] = fr.coef;
      prev_point = std::move(fr.coef);
    }
  }
  best.wall_time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return best;
}

/// tune_with scored on a validation set of the same layout.
inline TuneResult tune(const Dataset& train, const Dataset& val, const GridSpec& grid, const BcdConfig& base = {},
                       Loss loss = Loss::squared, const FitObserver& observer = {}) {
  if (!(train.schema().num_categorical() == val.schema().num_categorical() &&
        train.schema().width() == val.schema().width()))
    throw DataError("train and validation layouts differ");
  return tune_with(
      train, [&](const Coefficients& c) { return validation_score(val, c, grid.metric); }, grid, base, loss,
      observer);
}

/// Tuning with the levels absent from `train` removed before fitting, so
/// they neither add parameters nor count as values. The returned
/// coefficients are on the full layout with 0 for the removed levels.
inline TuneResult tune_compacted(const Dataset& train, const Dataset& val, const GridSpec& grid,
                                 const BcdConfig& base = {}, Loss loss = Loss::squared,
                                 const FitObserver& observer = {}) {
  const Dataset small = compact_levels(train);
  auto widen = [&](const Coefficients& c) { return align_coefficients(c, small.schema(), train.schema()); };
  auto res = tune_with(
      small, [&](const Coefficients& c) { return validation_score(val, widen(c), grid.metric); }, grid, base,
      loss, observer);
  res.coef = widen(res.coef);
  return res;
}

// ---------------------------------------------------------------- benchmark

enum class Method { cl, cl_l0 };

inline const char* to_string(Method m) { return m == Method::cl ? "cl" : "cl-l0"; }

inline Method parse_method(const std::string& s) {
  if (s == "cl") return Method::cl;
  if (s == "cl-l0") return Method::cl_l0;
  throw std::invalid_argument("unknown method '" + s + "' (expected cl or cl-l0)");
}

struct BenchConfig {
  BetaStarSetting setting;
  std::size_t n = 100;  ///< rows per split
  double sigma = 1.0;
  double rho = 0.2;
  int reps = 50;
  std::uint64_t seed = 0;
  std::vector<Method> methods{Method::cl_l0};
  unsigned threads = 1;
  std::optional<GridSpec> grid_cl_l0, grid_cl;
  BcdConfig bcd;
  bool shuffle_bins = true;
  FitObserver on_fit;  ///< called from worker threads
  /// Replaces `setting`, n, sigma, rho and shuffle_bins; its seed is ignored.
  std::optional<SynthConfig> custom;

  /// Data configuration of replication `rep`.
  SynthConfig synth_for(std::uint64_t rep_seed) const {
    SynthConfig sc;
    if (custom) {
      sc = *custom;
      sc.seed = rep_seed;
    } else {
      sc = SynthConfig::from_setting(setting, n, sigma, rep_seed);
      sc.rho = rho;
      sc.shuffle_bins = shuffle_bins;
    }
    return sc;
  }

  GridSpec grid_for(Method m) const {
    if (m == Method::cl) return grid_cl ? *grid_cl : GridSpec::cl();
    return grid_cl_l0 ? *grid_cl_l0 : GridSpec::cl_l0();
  }

  void validate() const {
    if (custom) {
      custom->validate();
      if (custom->n_val == 0 || custom->n_test == 0) throw std::invalid_argument("benchmark needs validation and test rows");
    } else
      setting.validate();
    if (reps <= 0) throw std::invalid_argument("reps must be positive");
    if (n < 2) throw std::invalid_argument("n must be at least 2");
    if (methods.empty()) throw std::invalid_argument("no methods");
  }
};

struct BenchRecord {
  std::string method;
  int rep = 0;
  std::uint64_t seed = 0;
  double lambda = 0.0, lambda0 = 0.0;
  double snr = 0.0;
  double train_objective = 0.0;
  EvalReport eval;
};

struct Stat {
  double mean = 0.0;
  double se = 0.0;  ///< sample standard deviation / sqrt(count); 0 for a single value
  std::size_t count = 0;
};

inline Stat summarize(const std::vector<double>& v) {
  Stat s;
  s.count = v.size();
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.se = std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
  }
  return s;
}

struct BenchResult {
  std::vector<BenchRecord> records;  ///< rep-major, methods in config order
  double wall_time_ms = 0.0;
};

/// Seed of replication r.
inline std::uint64_t replication_seed(std::uint64_t master, int rep) {
  return sub_seed(master, 4, static_cast<std::uint64_t>(rep));
}

/// Fresh data per replication (shared by the methods), tuning on validation,
/// evaluation on test. Replications run on up to `threads` workers; results
/// are identical for any thread count apart from wall times.
inline BenchResult benchmark(const BenchConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t per = cfg.methods.size();
  BenchResult out;
  out.records.resize(static_cast<std::size_t>(cfg.reps) * per);

  auto run_rep = [&](int rep) {
    const auto sc = cfg.synth_for(replication_seed(cfg.seed, rep));
    const auto data = generate(sc);
    for (std::size_t m = 0; m < per; ++m) {
      const auto method = cfg.methods[m];
      auto tr = tune(data.train().data, data.val().data, cfg.grid_for(method), cfg.bcd, Loss::squared, cfg.on_fit);
      BenchRecord r;
      r.method = to_string(method);
      r.rep = rep;
      r.seed = sc.seed;
      r.lambda = tr.pen.lambda;
      r.lambda0 = tr.pen.lambda0;
      r.snr = data.snr;
      r.train_objective = objective(data.train().data, tr.coef, tr.pen);
      r.eval = evaluate(data.test().data, tr.coef, &sc.beta_star);
      r.eval.wall_time_ms = tr.wall_time_ms;
      out.records[static_cast<std::size_t>(rep) * per + m] = std::move(r);
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(cfg.reps)));
  if (workers == 1) {
    for (int rep = 0; rep < cfg.reps; ++rep) run_rep(rep);
  } else {
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          for (int rep; (rep = next++) < cfg.reps;) run_rep(rep);
        } catch (...) {
          errors[w] = std::current_exception();
          next = cfg.reps;
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  out.wall_time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// ---------------------------------------------------------------- records

inline io::json report_to_json(const EvalReport& e) {
  io::json j;
  if (e.r2) j["r2"] = io::number(*e.r2);
  if (e.accuracy) j["accuracy"] = io::number(*e.accuracy);
  j["total_levels"] = e.total_levels;
  j["nonzero_clusters"] = e.nonzero_clusters;
  if (e.purity) j["purity"] = io::number(*e.purity);
  if (e.impurity) j["impurity"] = *e.impurity;
  if (e.delta_min) j["delta_min"] = io::number(*e.delta_min);
  j["wall_time_ms"] = io::number(e.wall_time_ms);
  return j;
}

inline io::json record_to_json(const BenchRecord& r) {
  io::json j;
  j["type"] = "replication";
  j["method"] = r.method;
  j["rep"] = r.rep;
  j["seed"] = r.seed;
  j["lambda"] = io::number(r.lambda);
  j["lambda0"] = io::number(r.lambda0);
  j["snr"] = io::number(r.snr);
  j["train_objective"] = io::number(r.train_objective);
  j.update(report_to_json(r.eval));
  return j;
}

/// Numeric fields summarised by the aggregate record.
inline const std::vector<std::string>& aggregated_fields() {
  static const std::vector<std::string> f{"r2",       "accuracy",         "purity", "impurity", "total_levels",
                                          "nonzero_clusters", "snr", "wall_time_ms"};
  return f;
}

/// One aggregate record per method (first-seen order) over replication records.
inline std::vector<io::json> aggregate(const std::vector<io::json>& records) {
  std::vector<std::string> order;
  std::map<std::string, std::map<std::string, std::vector<double>>> values;
  std::map<std::string, std::size_t> counts;
  for (const auto& r : records) {
    if (r.value("type", std::string("replication")) != "replication") continue;
    const auto m = r.value("method", std::string("unknown"));
    if (!counts.count(m)) order.push_back(m);
    ++counts[m];
    for (const auto& f : aggregated_fields())
      if (r.contains(f) && r[f].is_number()) values[m][f].push_back(r[f].get<double>());
  }
  std::vector<io::json> out;
  for (const auto& m : order) {
    io::json a;
    a["type"] = "aggregate";
    a["method"] = m;
    a["replications"] = counts[m];
    for (const auto& f : aggregated_fields()) {
      auto it = values[m].find(f);
      if (it == values[m].end()) continue;
      const Stat s = summarize(it->second);
      a[f] = {{"mean", io::number(s.mean)}, {"se", io::number(s.se)}};
    }
    out.push_back(std::move(a));
  }
  return out;
}

inline std::vector<io::json> to_records(const BenchResult& r) {
  std::vector<io::json> v;
  for (const auto& rec : r.records) v.push_back(record_to_json(rec));
  return v;
}

/// One record per line, aggregates last.
inline void write_jsonl(std::ostream& os, const std::vector<io::json>& records) {
  for (const auto& r : records) os << r.dump() << "\n";
  for (const auto& a : aggregate(records)) os << a.dump() << "\n";
}

/// Replication records of a results file (aggregate lines are skipped).
inline std::vector<io::json> read_jsonl(std::istream& is) {
  std::vector<io::json> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(is, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    io::json j;
    try {
      j = io::json::parse(line);
    } catch (const io::json::parse_error& e) {
      throw DataError("results line " + std::to_string(no) + ": " + e.what());
    }
    if (j.value("type", std::string("replication")) == "replication") out.push_back(std::move(j));
  }
  return out;
}

}  // namespace clusterlearn
