#pragma once

// Synthetic categorical data: equicorrelated Gaussian latents pushed through
// the normal CDF and binned into levels, a block-structured true coefficient
// vector, and Gaussian noise.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "clusterlearn/model.hpp"

namespace clusterlearn {

/// splitmix64 finaliser, used to derive independent sub-seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  return mix_seed(mix_seed(mix_seed(seed) ^ stream) ^ index);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Bin-to-level permutation per distinct level count. Predictors with the
/// same number of levels share one permutation.
struct LevelRelabeling {
  std::map<std::size_t, std::vector<std::uint32_t>> perm;

  static LevelRelabeling identity() { return {}; }

  static LevelRelabeling random(const std::vector<std::size_t>& levels, std::uint64_t seed) {
    LevelRelabeling r;
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> counts(levels);
    std::sort(counts.begin(), counts.end());
    counts.erase(std::unique(counts.begin(), counts.end()), counts.end());
    for (auto p : counts) {
      std::vector<std::uint32_t> v(p);
      std::iota(v.begin(), v.end(), 0u);
      std::shuffle(v.begin(), v.end(), rng);
      r.perm.emplace(p, std::move(v));
    }
    return r;
  }

  std::uint32_t apply(std::size_t levels, std::uint32_t bin) const {
    auto it = perm.find(levels);
    return it == perm.end() ? bin : it->second[bin];
  }
};

/// n x q equicorrelated standard normals, zeta_j = sqrt(rho) g0 + sqrt(1 - rho) g_j.
inline Eigen::MatrixXd gen_latents(std::size_t n, std::size_t q, double rho, std::uint64_t seed) {
  if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in [0, 1)");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double a = std::sqrt(rho), b = std::sqrt(1.0 - rho);
  Eigen::MatrixXd z(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(q));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double g0 = gauss(rng);
    for (Eigen::Index j = 0; j < z.cols(); ++j) z(i, j) = a * g0 + b * gauss(rng);
  }
  return z;
}

/// n x q level codes (0-based): latents through the normal CDF, equal-width bins.
inline Dataset::Codes gen_categorical(std::size_t n, const std::vector<std::size_t>& levels, double rho,
                                      std::uint64_t seed, const LevelRelabeling& relabel = {}) {
  for (auto p : levels)
    if (p == 0) throw std::invalid_argument("every predictor needs at least one level");
  const Eigen::MatrixXd z = gen_latents(n, levels.size(), rho, seed);
  Dataset::Codes codes(levels.size(), std::vector<std::uint32_t>(n));
  for (std::size_t j = 0; j < levels.size(); ++j) {
    const auto p = static_cast<double>(levels[j]);
    for (std::size_t i = 0; i < n; ++i) {
      const double u = normal_cdf(z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      const auto bin = static_cast<std::uint32_t>(std::min(std::floor(u * p), p - 1));
      codes[j][i] = relabel.apply(levels[j], bin);
    }
  }
  return codes;
}

struct ResponseDraw {
  Eigen::VectorXd y;
  double snr = 0.0;  ///< ||signal||^2 / ||noise||^2, +inf without noise
};

inline ResponseDraw gen_response(const Eigen::VectorXd& signal, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be non-negative");
  ResponseDraw r;
  r.y = signal;
  if (sigma == 0.0) {
    r.snr = std::numeric_limits<double>::infinity();
    return r;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, sigma);
  Eigen::VectorXd eps(signal.size());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = gauss(rng);
  r.y += eps;
  r.snr = signal.squaredNorm() / eps.squaredNorm();
  return r;
}

enum class BetaPattern { bands, pair, ladder };

inline const char* to_string(BetaPattern p) {
  return p == BetaPattern::bands ? "bands" : p == BetaPattern::pair ? "pair" : "ladder";
}

/// Active predictors j < q_s get (-2 x r1, 0 x r2, 2 x r1) for bands, or the
/// fixed five-level vectors (-2,-2,0,0,0) / (1,2,3,0,0); the rest are zero.
struct BetaStarSetting {
  BetaPattern pattern = BetaPattern::bands;
  std::size_t r1 = 4, r2 = 12, q = 20, q_s = 3;

  std::size_t levels() const { return pattern == BetaPattern::bands ? 2 * r1 + r2 : 5; }

  void validate() const {
    if (q_s > q) throw std::invalid_argument("q_s must not exceed q");
    if (q == 0 || levels() == 0) throw std::invalid_argument("empty coefficient layout");
  }
};

inline CategoricalSchema synthetic_schema(const std::vector<std::size_t>& levels) {
  std::vector<CategoricalPredictor> preds;
  for (std::size_t j = 0; j < levels.size(); ++j) {
    CategoricalPredictor p{"C" + std::to_string(j + 1), {}};
    for (std::size_t k = 0; k < levels[j]; ++k) p.levels.push_back("L" + std::to_string(k + 1));
    preds.push_back(std::move(p));
  }
  return CategoricalSchema(std::move(preds));
}

inline Coefficients make_beta_star(const BetaStarSetting& s) {
  s.validate();
  Coefficients c = Coefficients::zeros(synthetic_schema(std::vector<std::size_t>(s.q, s.levels())));
  std::vector<double> active;
  switch (s.pattern) {
    case BetaPattern::bands:
      active.assign(s.r1, -2.0);
      active.insert(active.end(), s.r2, 0.0);
      active.insert(active.end(), s.r1, 2.0);
      break;
    case BetaPattern::pair: active = {-2, -2, 0, 0, 0}; break;
    case BetaPattern::ladder: active = {1, 2, 3, 0, 0}; break;
  }
  for (std::size_t j = 0; j < s.q_s; ++j) c.categorical[j] = active;
  return c;
}

struct SynthConfig {
  std::size_t n_train = 100, n_val = 100, n_test = 100;
  std::vector<std::size_t> levels;  ///< p_j per predictor
  double rho = 0.2;
  double sigma = 1.0;
  Coefficients beta_star;
  std::uint64_t seed = 0;
  bool shuffle_bins = true;  ///< random bin-to-level map shared by equal-size predictors

  void validate() const {
    if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in [0, 1)");
    if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be non-negative");
    if (n_train == 0) throw std::invalid_argument("n_train must be positive");
    if (!beta_star.matches(synthetic_schema(levels)) || !beta_star.continuous.empty())
      throw DataError("beta_star does not match the level layout");
  }

  static SynthConfig from_setting(const BetaStarSetting& s, std::size_t n, double sigma, std::uint64_t seed) {
    SynthConfig c;
    c.n_train = c.n_val = c.n_test = n;
    c.levels.assign(s.q, s.levels());
    c.sigma = sigma;
    c.beta_star = make_beta_star(s);
    c.seed = seed;
    return c;
  }
};

struct SynthSplit {
  Dataset data;
  Eigen::VectorXd signal;  ///< X beta*
  double snr = 0.0;
};

struct SynthData {
  std::vector<SynthSplit> splits;  ///< train, validation, test (empty ones omitted)
  LevelRelabeling relabeling;
  double snr = 0.0;  ///< over all generated rows

  const SynthSplit& train() const { return splits.at(0); }
  const SynthSplit& val() const { return splits.at(1); }
  const SynthSplit& test() const { return splits.at(2); }
};

namespace detail {
enum : std::uint64_t { kStreamRelabel = 1, kStreamCovariates = 2, kStreamNoise = 3 };
}

/// Independent blocks for train / validation / test, each with its own
/// covariate and noise stream.
inline SynthData generate(const SynthConfig& cfg) {
  cfg.validate();
  SynthData out;
  out.relabeling = cfg.shuffle_bins ? LevelRelabeling::random(cfg.levels, sub_seed(cfg.seed, detail::kStreamRelabel))
                                    : LevelRelabeling::identity();
  const auto schema = synthetic_schema(cfg.levels);
  const std::size_t sizes[3] = {cfg.n_train, cfg.n_val, cfg.n_test};
  double sig2 = 0.0, noise2 = 0.0;
  for (std::uint64_t s = 0; s < 3; ++s) {
    if (sizes[s] == 0) break;
    auto codes = gen_categorical(sizes[s], cfg.levels, cfg.rho, sub_seed(cfg.seed, detail::kStreamCovariates, s),
                                 out.relabeling);
    Dataset x(schema, std::move(codes), Eigen::MatrixXd(), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sizes[s])));
    Eigen::VectorXd signal = predict(x, cfg.beta_star);
    auto draw = gen_response(signal, cfg.sigma, sub_seed(cfg.seed, detail::kStreamNoise, s));
    sig2 += signal.squaredNorm();
    noise2 += (draw.y - signal).squaredNorm();
    out.splits.push_back({x.with_response(draw.y), std::move(signal), draw.snr});
  }
  out.snr = noise2 > 0 ? sig2 / noise2 : std::numeric_limits<double>::infinity();
  return out;
}

}  // namespace clusterlearn
