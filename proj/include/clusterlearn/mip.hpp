#pragma once

// Mixed-integer formulation of the penalised problem with big-M links:
//
//   min (1/n)||y - X beta - alpha||^2 + lambda0 sum z_i + lambda sum l_i
//   |beta_i| <= M z_i                          all i
//   |beta_k - beta_i| <= 2M zf^j_{i,k}         j active, k < i in I_j
//   sum_{k<i} zf^j_{i,k} - (i - s_j - 1) <= l_i   i in I_j
//
// plus an LP-format writer for external solvers and a reader for their
// "name value" solution files. Variable indices are 0-based.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "clusterlearn/model.hpp"

namespace clusterlearn {

enum class VarType { continuous, binary };
enum class Sense { le, ge, eq };

struct MipVariable {
  std::string name;
  VarType type = VarType::continuous;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
};

struct MipConstraint {
  std::string name;
  std::vector<std::pair<std::size_t, double>> terms;
  Sense sense = Sense::le;
  double rhs = 0.0;
};

struct MipModel {
  std::vector<MipVariable> vars;
  std::vector<MipConstraint> rows;
  std::vector<double> linear;  ///< objective coefficient per variable
  Eigen::MatrixXd quad;        ///< v' quad v over v = (beta, alpha), symmetric
  double constant = 0.0;
  double big_m = 1.0;
  std::vector<char> active;  ///< predictors carrying fusion rows

  std::size_t p = 0;  ///< expanded width
  std::size_t alpha_index = 0;
  std::size_t z_begin = 0, l_begin = 0, zf_begin = 0;
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::size_t> zf_index;  ///< (j, i, k)

  std::size_t beta(std::size_t i) const { return i; }
  std::size_t z(std::size_t i) const { return z_begin + i; }
  std::size_t l(std::size_t i) const { return l_begin + i; }
  std::size_t num_z() const { return l_begin - z_begin; }
  std::size_t num_l() const { return zf_begin - l_begin; }
  std::size_t num_zf() const { return vars.size() - zf_begin; }
  std::size_t num_binary() const { return num_z() + num_l() + num_zf(); }

  std::optional<std::size_t> find(const std::string& name) const {
    if (lookup_.empty())
      for (std::size_t v = 0; v < vars.size(); ++v) lookup_.emplace(vars[v].name, v);
    auto it = lookup_.find(name);
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
  }

 private:
  mutable std::unordered_map<std::string, std::size_t> lookup_;
};

/// 1.2 max |beta_i| over the expanded coefficients, at least 1.
inline double choose_big_m(const Coefficients& warm) {
  const Eigen::VectorXd b = warm.expanded();
  const double m = b.size() ? 1.2 * b.cwiseAbs().maxCoeff() : 0.0;
  return std::max(m, 1.0);
}

/// Full model when `active` is empty/absent, otherwise fusion rows only for
/// the flagged predictors.
inline MipModel build_mip(const Dataset& ds, const PenaltyConfig& pen, double big_m,
                          const std::optional<std::vector<char>>& active = std::nullopt) {
  pen.validate();
  if (!(big_m > 0.0) || !std::isfinite(big_m)) throw std::invalid_argument("big-M must be positive");
  const auto& s = ds.schema();
  const std::size_t q = s.num_categorical(), cw = s.categorical_width();
  MipModel m;
  m.big_m = big_m;
  m.p = s.width();
  m.active = active ? *active : std::vector<char>(q, 1);
  if (m.active.size() != q) throw DataError("active flags must cover every predictor");

  for (std::size_t i = 0; i < m.p; ++i) m.vars.push_back({"beta_" + std::to_string(i)});
  m.alpha_index = m.vars.size();
  m.vars.push_back({"alpha"});
  m.z_begin = m.vars.size();
  for (std::size_t i = 0; i < m.p; ++i) m.vars.push_back({"z_" + std::to_string(i), VarType::binary, 0, 1});
  m.l_begin = m.vars.size();
  for (std::size_t i = 0; i < cw; ++i) m.vars.push_back({"l_" + std::to_string(i), VarType::binary, 0, 1});
  m.zf_begin = m.vars.size();
  for (std::size_t j = 0; j < q; ++j) {
    if (!m.active[j]) continue;
    const std::size_t sj = s.offset(j);
    for (std::size_t i = sj; i < sj + s.levels(j); ++i)
      for (std::size_t k = sj; k < i; ++k) {
        m.zf_index[{j, i, k}] = m.vars.size();
        m.vars.push_back({"zf_" + std::to_string(j) + "_" + std::to_string(i) + "_" + std::to_string(k),
                          VarType::binary, 0, 1});
      }
  }

  for (std::size_t i = 0; i < m.p; ++i) {
    const auto si = std::to_string(i);
    m.rows.push_back({"sp_" + si + "_a", {{m.beta(i), 1.0}, {m.z(i), -big_m}}, Sense::le, 0.0});
    m.rows.push_back({"sp_" + si + "_b", {{m.beta(i), -1.0}, {m.z(i), -big_m}}, Sense::le, 0.0});
  }
  for (const auto& [key, v] : m.zf_index) {
    const auto [j, i, k] = key;
    const auto tag = std::to_string(j) + "_" + std::to_string(i) + "_" + std::to_string(k);
    m.rows.push_back({"fuse_" + tag + "_a", {{m.beta(k), 1.0}, {m.beta(i), -1.0}, {v, -2.0 * big_m}}, Sense::le, 0.0});
    m.rows.push_back({"fuse_" + tag + "_b", {{m.beta(i), 1.0}, {m.beta(k), -1.0}, {v, -2.0 * big_m}}, Sense::le, 0.0});
  }
  for (std::size_t j = 0; j < q; ++j) {
    const std::size_t sj = s.offset(j);
    for (std::size_t i = sj; i < sj + s.levels(j); ++i) {
      MipConstraint c{"lev_" + std::to_string(i), {}, Sense::le, static_cast<double>(i - sj) - 1.0};
      if (m.active[j])
        for (std::size_t k = sj; k < i; ++k) c.terms.push_back({m.zf_index.at({j, i, k}), 1.0});
      c.terms.push_back({m.l(i), -1.0});
      m.rows.push_back(std::move(c));
    }
  }

  // objective: expand (1/n)||y - [X 1] v||^2
  const double n = static_cast<double>(ds.n());
  Eigen::MatrixXd xa(static_cast<Eigen::Index>(ds.n()), static_cast<Eigen::Index>(m.p + 1));
  xa.leftCols(static_cast<Eigen::Index>(m.p)) = expand_design(ds).dense();
  xa.col(static_cast<Eigen::Index>(m.p)).setOnes();
  m.quad = xa.transpose() * xa / n;
  const Eigen::VectorXd lin = -2.0 * xa.transpose() * ds.y() / n;
  m.linear.assign(m.vars.size(), 0.0);
  for (std::size_t v = 0; v <= m.p; ++v) m.linear[v] = lin[static_cast<Eigen::Index>(v)];
  for (std::size_t i = 0; i < m.p; ++i) m.linear[m.z(i)] = pen.lambda0;
  for (std::size_t i = 0; i < cw; ++i) m.linear[m.l(i)] = pen.lambda;
  m.constant = ds.y().squaredNorm() / n;
  return m;
}

/// Variable values realising `coef` with the cheapest feasible binaries:
/// z_i = [beta_i != 0], zf = [beta_i != beta_k], l_i = 1 on first occurrence
/// of a value (or on the first level of a predictor without fusion rows).
inline std::vector<double> assignment_from(const MipModel& m, const CategoricalSchema& s, const Coefficients& c) {
  if (!c.matches(s) || s.width() != m.p) throw DataError("coefficients do not match the model");
  std::vector<double> x(m.vars.size(), 0.0);
  const Eigen::VectorXd b = c.expanded();
  for (std::size_t i = 0; i < m.p; ++i) {
    x[m.beta(i)] = b[static_cast<Eigen::Index>(i)];
    x[m.z(i)] = b[static_cast<Eigen::Index>(i)] != 0.0;
  }
  x[m.alpha_index] = c.alpha;
  for (std::size_t j = 0; j < s.num_categorical(); ++j) {
    const std::size_t sj = s.offset(j);
    for (std::size_t i = sj; i < sj + s.levels(j); ++i) {
      bool fresh = true;
      for (std::size_t k = sj; k < i; ++k) {
        const bool differ = b[static_cast<Eigen::Index>(i)] != b[static_cast<Eigen::Index>(k)];
        if (m.active[j]) x[m.zf_index.at({j, i, k})] = differ;
        fresh = fresh && differ;
      }
      x[m.l(i)] = m.active[j] ? fresh : i == sj;
    }
  }
  return x;
}

inline double evaluate_objective(const MipModel& m, const std::vector<double>& x) {
  double v = m.constant;
  for (std::size_t i = 0; i < x.size(); ++i) v += m.linear[i] * x[i];
  Eigen::VectorXd ba(static_cast<Eigen::Index>(m.p + 1));
  for (std::size_t i = 0; i <= m.p; ++i) ba[static_cast<Eigen::Index>(i)] = x[i];
  return v + ba.dot(m.quad * ba);
}

inline bool is_feasible(const MipModel& m, const std::vector<double>& x, double tol = 1e-9) {
  if (x.size() != m.vars.size()) return false;
  for (std::size_t v = 0; v < x.size(); ++v) {
    const auto& var = m.vars[v];
    if (x[v] < var.lower - tol || x[v] > var.upper + tol) return false;
    if (var.type == VarType::binary && std::abs(x[v] - std::round(x[v])) > tol) return false;
  }
  for (const auto& r : m.rows) {
    double lhs = 0.0;
    for (auto [v, a] : r.terms) lhs += a * x[v];
    const double scale = tol * std::max(1.0, std::abs(r.rhs));
    if (r.sense == Sense::le && lhs > r.rhs + scale) return false;
    if (r.sense == Sense::ge && lhs < r.rhs - scale) return false;
    if (r.sense == Sense::eq && std::abs(lhs - r.rhs) > scale) return false;
  }
  return true;
}

namespace detail {

/// Shortest text that reads back to the same double.
inline std::string lp_number(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

/// Writes " + c name" chunks, breaking lines well below the 510-char limit
/// some readers impose.
class LpLine {
 public:
  explicit LpLine(std::ostream& os) : os_(os) {}
  void put(const std::string& chunk) {
    if (width_ + chunk.size() > 200) {
      os_ << "\n  ";
      width_ = 2;
    }
    os_ << chunk;
    width_ += chunk.size();
  }
  void term(double coef, const std::string& var, bool first = false) {
    std::string s = coef < 0 ? " - " : (first ? " " : " + ");
    put(s + lp_number(std::abs(coef)) + " " + var);
  }

 private:
  std::ostream& os_;
  std::size_t width_ = 0;
};

}  // namespace detail

/// CPLEX LP text format with a quadratic objective section. Deterministic.
inline void export_lp(const MipModel& m, std::ostream& os) {
  os << "\\ clusterlearn model: " << m.vars.size() << " variables, " << m.rows.size()
     << " constraints, big-M " << detail::lp_number(m.big_m) << "\n";
  os << "Minimize\n obj:";
  {
    detail::LpLine line(os);
    bool first = true;
    for (std::size_t v = 0; v < m.vars.size(); ++v) {
      if (m.linear[v] == 0.0) continue;
      line.term(m.linear[v], m.vars[v].name, first);
      first = false;
    }
    line.put(first ? " [" : " + [");
    bool qfirst = true;
    for (std::size_t i = 0; i <= m.p; ++i)
      for (std::size_t k = i; k <= m.p; ++k) {
        const double c = m.quad(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
        if (c == 0.0) continue;
        // [ ... ] / 2 convention: write twice the coefficient of x_i x_k in v'Qv
        const double w = i == k ? 2.0 * c : 4.0 * c;
        const std::string prod = i == k ? m.vars[i].name + " ^ 2" : m.vars[i].name + " * " + m.vars[k].name;
        line.term(w, prod, qfirst);
        qfirst = false;
      }
    line.put(" ] / 2");
    if (m.constant != 0.0) line.put((m.constant < 0 ? " - " : " + ") + detail::lp_number(std::abs(m.constant)));
  }
  os << "\nSubject To\n";
  for (const auto& r : m.rows) {
    os << " " << r.name << ":";
    detail::LpLine line(os);
    bool first = true;
    for (auto [v, a] : r.terms) {
      line.term(a, m.vars[v].name, first);
      first = false;
    }
    const char* op = r.sense == Sense::le ? " <= " : r.sense == Sense::ge ? " >= " : " = ";
    line.put(op + detail::lp_number(r.rhs));
    os << "\n";
  }
  os << "Bounds\n";
  for (const auto& v : m.vars)
    if (v.type == VarType::continuous) os << " " << v.name << " free\n";
  os << "Binary\n";
  for (const auto& v : m.vars)
    if (v.type == VarType::binary) os << " " << v.name << "\n";
  os << "End\n";
}

/// Reads "name value" lines; '#' starts a comment. Unlisted variables are 0.
inline std::vector<double> import_solution(const MipModel& m, std::istream& is) {
  std::vector<double> x(m.vars.size(), 0.0);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    std::istringstream ls(line);
    std::string name, value;
    if (!(ls >> name)) continue;
    if (!(ls >> value)) throw SolverError("solution line " + std::to_string(lineno) + ": missing value");
    auto v = m.find(name);
    if (!v) throw SolverError("solution line " + std::to_string(lineno) + ": unknown variable '" + name + "'");
    double d = 0.0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), d);
    if (ec != std::errc() || ptr != value.data() + value.size())
      throw SolverError("solution line " + std::to_string(lineno) + ": bad number '" + value + "'");
    x[*v] = d;
  }
  return x;
}

/// Coefficients from a solver's variable values. Solver output carries
/// rounding noise, so values the binaries declare zero (z_i = 0) or fused
/// (zf = 0) are made exactly equal: fused groups take their mean, or 0 if any
/// member is zero.
inline Coefficients coefficients_from_solution(const MipModel& m, const CategoricalSchema& s,
                                               const std::vector<double>& x) {
  if (x.size() != m.vars.size() || s.width() != m.p) throw DataError("solution does not match the model");
  std::vector<std::size_t> parent(m.p);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto root = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (const auto& [key, v] : m.zf_index)
    if (std::round(x[v]) == 0.0) parent[root(std::get<1>(key))] = root(std::get<2>(key));

  std::map<std::size_t, std::pair<double, std::size_t>> groups;  // root -> (sum, count)
  std::map<std::size_t, bool> zero;
  for (std::size_t i = 0; i < m.p; ++i) {
    auto& g = groups[root(i)];
    g.first += x[m.beta(i)];
    ++g.second;
    if (std::round(x[m.z(i)]) == 0.0) zero[root(i)] = true;
  }
  Eigen::VectorXd b(static_cast<Eigen::Index>(m.p));
  for (std::size_t i = 0; i < m.p; ++i) {
    const auto r = root(i);
    const auto& g = groups[r];
    b[static_cast<Eigen::Index>(i)] = zero.count(r) ? 0.0 : g.first / static_cast<double>(g.second);
  }
  return Coefficients::from_expanded(s, b, x[m.alpha_index]);
}

}  // namespace clusterlearn
