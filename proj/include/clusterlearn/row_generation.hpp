#pragma once

// Row generation: solve the relaxation that keeps fusion rows only for
// predictors seen in some support so far, grow that set with each new
// support, and stop once a support repeats. At that point the relaxed
// solution is feasible for the full problem at the same objective, so it is
// optimal.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "clusterlearn/enumerative.hpp"
#include "clusterlearn/mip.hpp"
#include "clusterlearn/model.hpp"

namespace clusterlearn {

struct RelaxedSolution {
  Coefficients coef;
  double objective = 0.0;  ///< relaxed optimum (a lower bound on the full optimum)
};

class ExactBackend {
 public:
  virtual ~ExactBackend() = default;
  virtual std::string name() const = 0;
  /// Optimum of the relaxation with fusion rows for the flagged predictors.
  virtual RelaxedSolution solve(const Dataset& ds, const PenaltyConfig& pen, const std::vector<char>& active,
                                const Coefficients& incumbent) = 0;
};

class EnumerativeBackend : public ExactBackend {
 public:
  explicit EnumerativeBackend(EnumGuard guard = {}, unsigned threads = 1) : guard_(guard), threads_(threads) {}
  std::string name() const override { return "enum"; }
  RelaxedSolution solve(const Dataset& ds, const PenaltyConfig& pen, const std::vector<char>& active,
                        const Coefficients&) override {
    EnumOptions opt;
    opt.active = active;
    opt.guard = guard_;
    opt.threads = threads_;
    auto r = solve_enumerative(ds, pen, opt);
    return {std::move(r.coef), r.objective};
  }

 private:
  EnumGuard guard_;
  unsigned threads_;
};

/// Hands each relaxation to an external solver through files: writes
/// <workdir>/relaxed_<t>.lp, calls runner(lp, sol), reads "name value" lines
/// from <workdir>/relaxed_<t>.sol.
class FileBackend : public ExactBackend {
 public:
  using Runner = std::function<void(const std::filesystem::path& lp, const std::filesystem::path& sol)>;

  FileBackend(std::filesystem::path workdir, Runner runner, std::optional<double> big_m = std::nullopt)
      : workdir_(std::move(workdir)), runner_(std::move(runner)), big_m_(big_m) {}
  std::string name() const override { return "file"; }

  RelaxedSolution solve(const Dataset& ds, const PenaltyConfig& pen, const std::vector<char>& active,
                        const Coefficients& incumbent) override {
    std::filesystem::create_directories(workdir_);
    const double m = big_m_ ? *big_m_ : choose_big_m(incumbent);
    MipModel model = build_mip(ds, pen, m, active);
    const auto stem = "relaxed_" + std::to_string(calls_++);
    const auto lp = workdir_ / (stem + ".lp"), sol = workdir_ / (stem + ".sol");
    {
      std::ofstream os(lp);
      export_lp(model, os);
      if (!os) throw SolverError("cannot write model file " + lp.string());
    }
    std::filesystem::remove(sol);
    runner_(lp, sol);
    std::ifstream is(sol);
    if (!is) throw SolverError("external solver produced no solution file " + sol.string());
    auto x = import_solution(model, is);
    Coefficients c = coefficients_from_solution(model, ds.schema(), x);
    // value under the relaxed counting with the cheapest binaries for c
    const double obj = evaluate_objective(model, assignment_from(model, ds.schema(), c));
    return {std::move(c), obj};
  }

 private:
  std::filesystem::path workdir_;
  Runner runner_;
  std::optional<double> big_m_;
  int calls_ = 0;
};

struct GapCertificate {
  double lower_bound = -std::numeric_limits<double>::infinity();
  double upper_bound = std::numeric_limits<double>::infinity();
  double rel_gap() const {
    return (upper_bound - lower_bound) / std::max(std::abs(upper_bound), 1e-12);
  }
};

struct RowGenResult {
  Coefficients coef;
  double objective = 0.0;
  GapCertificate certificate;
  int iterations = 0;
  bool converged = false;
  std::vector<std::vector<std::size_t>> supports;  ///< S_0 (warm), S_1, ...
};

/// Predictors with at least one nonzero level coefficient.
inline std::vector<std::size_t> predictor_support(const Coefficients& c) {
  std::vector<std::size_t> s;
  for (std::size_t j = 0; j < c.categorical.size(); ++j)
    if (nonzero_count(c.categorical[j]) > 0) s.push_back(j);
  return s;
}

inline RowGenResult row_generation(const Dataset& ds, const PenaltyConfig& pen, const Coefficients& warm,
                                   ExactBackend& backend, int max_iter = 25) {
  if (!warm.matches(ds.schema())) throw DataError("warm start does not match dataset schema");
  if (max_iter <= 0) throw std::invalid_argument("max_iter must be positive");
  RowGenResult out;
  out.coef = warm;
  out.objective = objective(ds, warm, pen);
  out.certificate.upper_bound = out.objective;

  std::vector<char> active(ds.schema().num_categorical(), 0);
  std::set<std::vector<std::size_t>> seen;
  auto s0 = predictor_support(warm);
  out.supports.push_back(s0);
  seen.insert(s0);
  for (auto j : s0) active[j] = 1;

  for (int t = 1; t <= max_iter; ++t) {
    auto rel = backend.solve(ds, pen, active, out.coef);
    out.iterations = t;
    out.certificate.lower_bound = std::max(out.certificate.lower_bound, rel.objective);
    const double full = objective(ds, rel.coef, pen);
    if (full < out.objective) {
      out.objective = full;
      out.coef = rel.coef;
    }
    out.certificate.upper_bound = out.objective;
    auto st = predictor_support(rel.coef);
    out.supports.push_back(st);
    if (!seen.insert(st).second) {
      // support repeats: rel.coef only uses fused predictors, so it is exact
      out.converged = true;
      out.coef = rel.coef;
      out.objective = full;
      out.certificate.upper_bound = full;
      break;
    }
    for (auto j : st) active[j] = 1;
  }
  return out;
}

}  // namespace clusterlearn
