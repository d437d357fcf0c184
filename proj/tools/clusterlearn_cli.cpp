// clusterlearn: command line front end.
//
// Exit status: 0 ok, 2 usage, 3 data, 4 solver guard, 5 solver failure,
// 1 anything else. Structured outputs are JSON with 12 significant digits;
// every run that writes files also writes <output>.manifest.json.

#include <openssl/evp.h>

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "clusterlearn/clusterlearn.hpp"

namespace fs = std::filesystem;
using namespace clusterlearn;
using io::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string sha256_hex(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw DataError("cannot read " + p.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (is.read(buf, sizeof buf) || is.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(is.gcount()));
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

/// Tracks files written by a run and writes the manifest at the end.
class Session {
 public:
  Session(std::vector<std::string> argv) : argv_(std::move(argv)), t0_(std::chrono::steady_clock::now()) {}

  json& seeds() { return seeds_; }
  json& info() { return info_; }

  void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary);
    os << text;
    if (!os) throw DataError("cannot write " + p.string());
    outputs_.push_back(p);
  }

  /// To the file when given, else stdout.
  void emit(const std::string& out, const json& j) {
    const std::string text = j.dump(2) + "\n";
    if (out.empty())
      std::cout << text;
    else
      write_text(out, text);
  }

  void finish(const CLI::App& app, const std::string& command, fs::path manifest = {}) {
    if (outputs_.empty()) return;
    if (manifest.empty()) manifest = outputs_.front().string() + ".manifest.json";
    json m;
    m["tool"] = "clusterlearn";
    m["version"] = CLUSTERLEARN_VERSION;
    m["command"] = command;
    m["argv"] = argv_;
    // feeds straight back into --config
    const auto* sub = app.get_subcommand(command);
    std::string threads = app.get_option("--threads")->count() ? app.get_option("--threads")->as<std::string>() : "0";
    m["config"] = "threads=" + threads + "\n[" + command + "]\n" + sub->config_to_str(false, false);
    m["seeds"] = seeds_;
    if (!info_.empty()) m["info"] = info_;
    m["outputs"] = json::array();
    for (const auto& p : outputs_)
      m["outputs"].push_back({{"path", p.string()}, {"sha256", sha256_hex(p)}, {"bytes", fs::file_size(p)}});
    m["wall_time_ms"] =
        io::number(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0_).count());
    std::ofstream os(manifest);
    os << m.dump(2) << "\n";
    if (!os) throw DataError("cannot write " + manifest.string());
  }

 private:
  std::vector<std::string> argv_;
  std::chrono::steady_clock::time_point t0_;
  json seeds_ = json::object();
  json info_ = json::object();
  std::vector<fs::path> outputs_;
};

// ---------------------------------------------------------------- shared option groups

struct BcdOpts {
  int max_sweeps = 500;
  double tol = 1e-8;
  bool no_active_sets = false;
  bool no_baseline_shift = false;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* c, bool with_seed = true) {
    c->add_option("--max-sweeps", max_sweeps, "Sweep limit")->capture_default_str();
    c->add_option("--tol", tol, "Relative objective decrease that stops the sweeps")->capture_default_str();
    c->add_flag("--no-active-sets", no_active_sets, "Plain cyclic sweeps over all coordinates");
    c->add_flag("--no-baseline-shift", no_baseline_shift,
                "Skip moving each predictor's largest cluster to zero after convergence");
    if (with_seed) c->add_option("--seed", seed, "Randomise the block order with this seed");
  }

  BcdConfig config() const {
    BcdConfig b;
    b.max_sweeps = max_sweeps;
    b.rel_tol = tol;
    b.use_active_sets = !no_active_sets;
    b.baseline_shift = !no_baseline_shift;
    if (seed) {
      b.randomize_order = true;
      b.seed = *seed;
    }
    return b;
  }
};

struct PenaltyOpts {
  double lambda = 0.0, lambda0 = 0.0;
  void add(CLI::App* c) {
    c->add_option("--lambda", lambda, "Fusion penalty (per distinct value)")->required()->check(CLI::NonNegativeNumber);
    c->add_option("--lambda0", lambda0, "Sparsity penalty (per nonzero level)")->required()->check(CLI::NonNegativeNumber);
  }
  PenaltyConfig config() const { return {lambda0, lambda}; }
};

Loss resolve_loss(const std::string& s, Task task) {
  if (s == "squared") return Loss::squared;
  if (s == "logistic") return Loss::logistic;
  return task == Task::binary ? Loss::logistic : Loss::squared;
}

/// Coefficient document, or a fit / tune / solve-exact output holding one,
/// or a synth manifest (its beta_star).
std::pair<CategoricalSchema, Coefficients> load_coefficients(const fs::path& p) {
  const json j = io::load_json(p);
  const json* c = &j;
  if (j.contains("coefficients")) c = &j["coefficients"];
  else if (j.contains("info") && j["info"].contains("beta_star")) c = &j["info"]["beta_star"];
  else if (j.contains("beta_star")) c = &j["beta_star"];
  auto s = io::schema_from_coefficients(*c);
  auto coef = io::coefficients_from_json(*c, s);
  return {std::move(s), std::move(coef)};
}

Coefficients coefficients_for(const fs::path& p, const CategoricalSchema& target) {
  auto [s, c] = load_coefficients(p);
  return align_coefficients(c, s, target);
}

json level_counts(const Coefficients& c, const CategoricalSchema& s) {
  json j = json::object();
  for (std::size_t k = 0; k < s.num_categorical(); ++k) j[s.predictor(k).name] = distinct_count(c.categorical[k]);
  return j;
}

json fit_document(const FitResult& r, const Dataset& ds, const PenaltyConfig& pen, Loss loss) {
  json j;
  j["lambda"] = io::number(pen.lambda);
  j["lambda0"] = io::number(pen.lambda0);
  j["loss"] = to_string(loss);
  j["objective"] = io::number(r.objective);
  j["sweeps"] = r.sweeps;
  j["active_set_rounds"] = r.active_set_rounds;
  j["levels"] = level_counts(r.coef, ds.schema());
  j["nonzero_clusters"] = nonzero_clusters(r.coef);
  j["wall_time_ms"] = io::number(r.wall_time_ms);
  j["coefficients"] = io::coefficients_to_json(r.coef, ds.schema());
  return j;
}

std::vector<std::size_t> parse_active(const std::vector<std::string>& names, const CategoricalSchema& s) {
  std::vector<std::size_t> out;
  for (const auto& n : names) {
    auto j = s.predictor_index(n);
    if (!j) throw UsageError("unknown predictor '" + n + "'");
    out.push_back(*j);
  }
  return out;
}

std::string quote_arg(const std::string& s) {
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

/// "{lp}" and "{sol}" in the template become the quoted paths.
std::string expand_command(std::string cmd, const fs::path& lp, const fs::path& sol) {
  for (const auto& [key, val] : {std::pair<std::string, std::string>{"{lp}", quote_arg(lp.string())},
                                 std::pair<std::string, std::string>{"{sol}", quote_arg(sol.string())}}) {
    for (std::size_t at; (at = cmd.find(key)) != std::string::npos;) cmd.replace(at, key.size(), val);
  }
  return cmd;
}

BetaStarSetting make_setting(const std::string& name, std::size_t r1, std::size_t r2, std::size_t q, std::size_t qs) {
  BetaStarSetting s;
  s.pattern = name == "pair" ? BetaPattern::pair : name == "ladder" ? BetaPattern::ladder : BetaPattern::bands;
  s.r1 = r1;
  s.r2 = r2;
  s.q = q;
  s.q_s = qs;
  s.validate();
  return s;
}

/// Synthetic layout from a beta* file: every predictor keeps its level count.
SynthConfig custom_synth(const fs::path& beta_file) {
  auto [s, c] = load_coefficients(beta_file);
  if (s.num_continuous() > 0) throw UsageError("custom beta* must not have continuous coefficients");
  SynthConfig sc;
  for (std::size_t j = 0; j < s.num_categorical(); ++j) sc.levels.push_back(s.levels(j));
  sc.beta_star = Coefficients::zeros(synthetic_schema(sc.levels));
  sc.beta_star.categorical = c.categorical;
  return sc;
}

unsigned default_threads(unsigned requested, bool parallel_command) {
  if (requested > 0) return requested;
  return parallel_command ? std::max(1u, std::thread::hardware_concurrency()) : 1u;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Regression with fused and sparse categorical coefficients"};
  app.set_config("--config", "", "TOML file pre-populating any flag; flags on the command line win");
  app.set_version_flag("--version", CLUSTERLEARN_VERSION);
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.failure_message(CLI::FailureMessage::help);
  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker threads (default: all cores for benchmark and enumeration, else 1)");

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "Block coordinate descent fit");
  std::string fit_data, fit_schema, fit_loss = "auto", fit_warm, fit_out;
  PenaltyOpts fit_pen;
  BcdOpts fit_bcd;
  fit_cmd->add_option("--data", fit_data, "Data CSV")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--schema", fit_schema, "Schema sidecar (JSON)")->required()->check(CLI::ExistingFile);
  fit_pen.add(fit_cmd);
  fit_cmd->add_option("--loss", fit_loss, "squared, logistic or auto (by task)")
      ->check(CLI::IsMember({"auto", "squared", "logistic"}))
      ->capture_default_str();
  fit_cmd->add_option("--warm", fit_warm, "Coefficients to start from")->check(CLI::ExistingFile);
  fit_cmd->add_option("--out", fit_out, "Result file (default: stdout)");
  fit_bcd.add(fit_cmd);

  // tune
  auto* tune_cmd = app.add_subcommand("tune", "Grid search on a validation split");
  std::string tune_train, tune_val, tune_schema, tune_grid = "cl-l0", tune_metric = "auto", tune_loss = "auto",
                                                 tune_out;
  std::vector<double> tune_lambdas, tune_lambda0s;
  BcdOpts tune_bcd;
  tune_cmd->add_option("--train", tune_train, "Training CSV")->required()->check(CLI::ExistingFile);
  tune_cmd->add_option("--val", tune_val, "Validation CSV")->required()->check(CLI::ExistingFile);
  tune_cmd->add_option("--schema", tune_schema, "Schema sidecar (JSON)")->required()->check(CLI::ExistingFile);
  tune_cmd->add_option("--grid", tune_grid, "Default grid: cl-l0 (10 x 10) or cl (100 x {0})")
      ->check(CLI::IsMember({"cl", "cl-l0"}))
      ->capture_default_str();
  tune_cmd->add_option("--lambdas", tune_lambdas, "Explicit lambda values");
  tune_cmd->add_option("--lambda0s", tune_lambda0s, "Explicit lambda0 values");
  tune_cmd->add_option("--metric", tune_metric, "r2, accuracy or auto (by task)")
      ->check(CLI::IsMember({"auto", "r2", "accuracy"}))
      ->capture_default_str();
  tune_cmd->add_option("--loss", tune_loss, "squared, logistic or auto")
      ->check(CLI::IsMember({"auto", "squared", "logistic"}))
      ->capture_default_str();
  tune_cmd->add_option("--out", tune_out, "Result file (default: stdout)");
  tune_bcd.add(tune_cmd);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic train / validation / test draw");
  std::string syn_setting = "bands", syn_beta, syn_out;
  std::size_t syn_r1 = 4, syn_r2 = 12, syn_q = 20, syn_qs = 3, syn_n = 100;
  std::optional<std::size_t> syn_ntrain, syn_nval, syn_ntest;
  double syn_sigma = 1.0, syn_rho = 0.2;
  std::uint64_t syn_seed = 0;
  bool syn_ordered = false;
  synth_cmd->add_option("--setting", syn_setting, "bands, pair, ladder or custom")
      ->check(CLI::IsMember({"bands", "pair", "ladder", "custom"}))
      ->capture_default_str();
  synth_cmd->add_option("--beta-star", syn_beta, "Coefficients file for --setting custom")->check(CLI::ExistingFile);
  synth_cmd->add_option("--r1", syn_r1)->capture_default_str();
  synth_cmd->add_option("--r2", syn_r2)->capture_default_str();
  synth_cmd->add_option("--q", syn_q)->capture_default_str();
  synth_cmd->add_option("--qs", syn_qs)->capture_default_str();
  synth_cmd->add_option("--n", syn_n, "Rows per split")->capture_default_str();
  synth_cmd->add_option("--n-train", syn_ntrain);
  synth_cmd->add_option("--n-val", syn_nval);
  synth_cmd->add_option("--n-test", syn_ntest);
  synth_cmd->add_option("--sigma", syn_sigma)->capture_default_str();
  synth_cmd->add_option("--rho", syn_rho)->capture_default_str();
  synth_cmd->add_option("--seed", syn_seed)->capture_default_str();
  synth_cmd->add_flag("--ordered-bins", syn_ordered, "Bin latents straight into level order");
  synth_cmd->add_option("--out", syn_out, "Output prefix: <out>_{train,val,test}.csv and <out>.schema.json")
      ->required();

  // benchmark
  auto* bench_cmd = app.add_subcommand("benchmark", "Replicated synthetic benchmark");
  std::string b_setting = "bands", b_beta, b_out;
  std::size_t b_r1 = 4, b_r2 = 12, b_q = 20, b_qs = 3, b_n = 100, b_grid = 10, b_cl_grid = 100;
  double b_sigma = 1.0, b_rho = 0.2;
  int b_reps = 50;
  std::uint64_t b_seed = 0;
  std::vector<std::string> b_methods{"cl-l0"}, b_merge;
  bool b_ordered = false;
  BcdOpts b_bcd;
  bench_cmd->add_option("--setting", b_setting, "bands, pair, ladder or custom")
      ->check(CLI::IsMember({"bands", "pair", "ladder", "custom"}))
      ->capture_default_str();
  bench_cmd->add_option("--beta-star", b_beta, "Coefficients file for --setting custom")->check(CLI::ExistingFile);
  bench_cmd->add_option("--r1", b_r1)->capture_default_str();
  bench_cmd->add_option("--r2", b_r2)->capture_default_str();
  bench_cmd->add_option("--q", b_q)->capture_default_str();
  bench_cmd->add_option("--qs", b_qs)->capture_default_str();
  bench_cmd->add_option("--n", b_n, "Rows per split")->capture_default_str();
  bench_cmd->add_option("--sigma", b_sigma)->capture_default_str();
  bench_cmd->add_option("--rho", b_rho)->capture_default_str();
  bench_cmd->add_option("--reps", b_reps)->capture_default_str();
  bench_cmd->add_option("--seed", b_seed, "Master seed")->capture_default_str();
  bench_cmd->add_option("--methods", b_methods)->check(CLI::IsMember({"cl", "cl-l0"}))->capture_default_str();
  bench_cmd->add_option("--grid-points", b_grid, "Values per axis of the cl-l0 grid")->capture_default_str();
  bench_cmd->add_option("--cl-grid-points", b_cl_grid, "Lambda values of the cl grid")->capture_default_str();
  bench_cmd->add_flag("--ordered-bins", b_ordered, "Bin latents straight into level order");
  bench_cmd->add_option("--merge", b_merge, "Merge these result files instead of running")->check(CLI::ExistingFile);
  bench_cmd->add_option("--out", b_out, "Results file (JSON lines)")->required();
  b_bcd.add(bench_cmd, false);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate coefficients on data");
  std::string ev_coef, ev_data, ev_schema, ev_beta, ev_out;
  eval_cmd->add_option("--coef", ev_coef, "Coefficients file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", ev_data, "Data CSV")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--schema", ev_schema, "Schema sidecar (JSON)")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--beta-star", ev_beta, "True coefficients (or a synth manifest)")->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", ev_out, "Report file (default: stdout)");

  // segment
  auto* seg_cmd = app.add_subcommand("segment", "Exact univariate fused and sparse fit");
  std::string seg_data, seg_out;
  double seg_lambda = 0.0, seg_lambda0 = 0.0;
  seg_cmd->add_option("--data", seg_data, "CSV with value and weight columns")->required()->check(CLI::ExistingFile);
  seg_cmd->add_option("--lambda", seg_lambda, "Penalty per jump")->required()->check(CLI::NonNegativeNumber);
  seg_cmd->add_option("--lambda0", seg_lambda0, "Penalty per nonzero entry")->required()->check(CLI::NonNegativeNumber);
  seg_cmd->add_option("--out", seg_out, "Output CSV (default: stdout)");

  // solve-exact
  auto* exact_cmd = app.add_subcommand("solve-exact", "Certified optimum by row generation");
  std::string ex_data, ex_schema, ex_backend = "enum", ex_warm, ex_export, ex_solver, ex_workdir, ex_out;
  PenaltyOpts ex_pen;
  std::optional<double> ex_bigm;
  EnumGuard ex_guard;
  int ex_iter = 25;
  exact_cmd->add_option("--data", ex_data, "Data CSV")->required()->check(CLI::ExistingFile);
  exact_cmd->add_option("--schema", ex_schema, "Schema sidecar (JSON)")->required()->check(CLI::ExistingFile);
  ex_pen.add(exact_cmd);
  exact_cmd->add_option("--backend", ex_backend, "enum (built in) or file (external MIP solver)")
      ->check(CLI::IsMember({"enum", "file"}))
      ->capture_default_str();
  exact_cmd->add_option("--warm", ex_warm, "Starting coefficients (default: a BCD fit)")->check(CLI::ExistingFile);
  exact_cmd->add_option("--export", ex_export, "Also write the full model as an LP file");
  exact_cmd->add_option("--solver-cmd", ex_solver, "Command for the file backend; {lp} and {sol} are substituted");
  exact_cmd->add_option("--workdir", ex_workdir, "Model exchange directory for the file backend");
  exact_cmd->add_option("--big-m", ex_bigm, "Coefficient bound (default: 1.2 x largest warm coefficient)")
      ->check(CLI::PositiveNumber);
  exact_cmd->add_option("--max-patterns", ex_guard.max_patterns, "Enumeration guard")->capture_default_str();
  exact_cmd->add_option("--max-continuous", ex_guard.max_continuous, "Enumeration guard")->capture_default_str();
  exact_cmd->add_option("--max-iter", ex_iter, "Row generation iterations")->capture_default_str();
  exact_cmd->add_option("--out", ex_out, "Result file (default: stdout)");

  // export-mip
  auto* mip_cmd = app.add_subcommand("export-mip", "Write the mixed integer model as an LP file");
  std::string mip_data, mip_schema, mip_warm, mip_out;
  PenaltyOpts mip_pen;
  std::optional<double> mip_bigm;
  std::vector<std::string> mip_active;
  mip_cmd->add_option("--data", mip_data, "Data CSV")->required()->check(CLI::ExistingFile);
  mip_cmd->add_option("--schema", mip_schema, "Schema sidecar (JSON)")->required()->check(CLI::ExistingFile);
  mip_pen.add(mip_cmd);
  mip_cmd->add_option("--big-m", mip_bigm, "Coefficient bound")->check(CLI::PositiveNumber);
  mip_cmd->add_option("--warm", mip_warm, "Coefficients that set the bound when --big-m is absent")
      ->check(CLI::ExistingFile);
  mip_cmd->add_option("--active", mip_active, "Predictors with fusion rows (default: all)");
  mip_cmd->add_option("--out", mip_out, "LP file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  Session session(std::vector<std::string>(argv, argv + argc));
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (*fit_cmd) {
      const Dataset ds = io::load_dataset(fit_data, fit_schema);
      auto cfg = fit_bcd.config();
      if (!fit_warm.empty()) cfg.warm = coefficients_for(fit_warm, ds.schema());
      const Loss loss = resolve_loss(fit_loss, ds.task());
      const auto pen = fit_pen.config();
      const auto r = fit(ds, pen, cfg, loss);
      if (fit_bcd.seed) session.seeds()["order"] = *fit_bcd.seed;
      session.emit(fit_out, fit_document(r, ds, pen, loss));
    } else if (*tune_cmd) {
      const auto sf = io::SchemaFile::load(tune_schema);
      auto parts = io::load_datasets({io::read_csv_file(tune_train), io::read_csv_file(tune_val)}, sf);
      GridSpec g = tune_grid == "cl" ? GridSpec::cl() : GridSpec::cl_l0();
      if (!tune_lambdas.empty()) g.lambdas = tune_lambdas;
      if (!tune_lambda0s.empty()) g.lambda0s = tune_lambda0s;
      const Task task = parts[0].task();
      g.metric = tune_metric == "accuracy" || (tune_metric == "auto" && task == Task::binary) ? Metric::accuracy
                                                                                               : Metric::r2;
      const Loss loss = resolve_loss(tune_loss, task);
      const auto res = tune(parts[0], parts[1], g, tune_bcd.config(), loss);
      json j;
      j["lambda"] = io::number(res.pen.lambda);
      j["lambda0"] = io::number(res.pen.lambda0);
      j["metric"] = g.metric == Metric::r2 ? "r2" : "accuracy";
      j["score"] = io::number(res.score);
      j["loss"] = to_string(loss);
      j["levels"] = level_counts(res.coef, parts[0].schema());
      j["wall_time_ms"] = io::number(res.wall_time_ms);
      j["path"] = json::array();
      for (const auto& p : res.path)
        j["path"].push_back({{"lambda", io::number(p.lambda)},
                             {"lambda0", io::number(p.lambda0)},
                             {"score", io::number(p.score)},
                             {"train_objective", io::number(p.train_objective)},
                             {"sweeps", p.sweeps}});
      j["coefficients"] = io::coefficients_to_json(res.coef, parts[0].schema());
      if (tune_bcd.seed) session.seeds()["order"] = *tune_bcd.seed;
      session.emit(tune_out, j);
    } else if (*synth_cmd) {
      SynthConfig sc;
      if (syn_setting == "custom") {
        if (syn_beta.empty()) throw UsageError("--setting custom needs --beta-star");
        sc = custom_synth(syn_beta);
        sc.n_train = sc.n_val = sc.n_test = syn_n;
        sc.sigma = syn_sigma;
        sc.seed = syn_seed;
      } else {
        sc = SynthConfig::from_setting(make_setting(syn_setting, syn_r1, syn_r2, syn_q, syn_qs), syn_n, syn_sigma,
                                       syn_seed);
      }
      if (syn_ntrain) sc.n_train = *syn_ntrain;
      if (syn_nval) sc.n_val = *syn_nval;
      if (syn_ntest) sc.n_test = *syn_ntest;
      sc.rho = syn_rho;
      sc.shuffle_bins = !syn_ordered;
      const auto data = generate(sc);
      const char* names[3] = {"train", "val", "test"};
      json snr = json::object();
      for (std::size_t s = 0; s < data.splits.size(); ++s) {
        std::ostringstream os;
        io::write_dataset(os, data.splits[s].data);
        session.write_text(syn_out + "_" + names[s] + ".csv", os.str());
        snr[names[s]] = io::number(data.splits[s].snr);
      }
      session.write_text(syn_out + ".schema.json", io::schema_file_of(data.train().data).to_json().dump(2) + "\n");
      session.seeds()["master"] = sc.seed;
      auto& info = session.info();
      info["setting"] = syn_setting;
      info["levels"] = sc.levels;
      info["rows"] = {{"train", sc.n_train}, {"val", sc.n_val}, {"test", sc.n_test}};
      info["sigma"] = io::number(sc.sigma);
      info["rho"] = io::number(sc.rho);
      info["shuffle_bins"] = sc.shuffle_bins;
      info["snr"] = io::number(data.snr);
      info["snr_by_split"] = snr;
      info["beta_star"] = io::coefficients_to_json(sc.beta_star, synthetic_schema(sc.levels));
      session.finish(app, command, syn_out + ".manifest.json");
      return 0;
    } else if (*bench_cmd) {
      std::vector<json> records;
      if (!b_merge.empty()) {
        for (const auto& f : b_merge) {
          std::ifstream is(f);
          auto part = read_jsonl(is);
          records.insert(records.end(), part.begin(), part.end());
        }
        session.info()["merged"] = b_merge;
      } else {
        BenchConfig cfg;
        if (b_setting == "custom") {
          if (b_beta.empty()) throw UsageError("--setting custom needs --beta-star");
          auto sc = custom_synth(b_beta);
          sc.n_train = sc.n_val = sc.n_test = b_n;
          sc.sigma = b_sigma;
          sc.rho = b_rho;
          sc.shuffle_bins = !b_ordered;
          cfg.custom = sc;
        } else {
          cfg.setting = make_setting(b_setting, b_r1, b_r2, b_q, b_qs);
        }
        cfg.n = b_n;
        cfg.sigma = b_sigma;
        cfg.rho = b_rho;
        cfg.reps = b_reps;
        cfg.seed = b_seed;
        cfg.shuffle_bins = !b_ordered;
        cfg.methods.clear();
        for (const auto& m : b_methods) cfg.methods.push_back(parse_method(m));
        cfg.threads = default_threads(threads, true);
        cfg.grid_cl_l0 = GridSpec{GridSpec::log_spaced(1e-5, 10, b_grid), GridSpec::log_spaced(1e-5, 10, b_grid)};
        cfg.grid_cl = GridSpec{GridSpec::log_spaced(1e-5, 10, b_cl_grid), {0.0}};
        cfg.bcd = b_bcd.config();
        const auto res = benchmark(cfg);
        records = to_records(res);
        session.seeds()["master"] = b_seed;
        session.info()["total_wall_time_ms"] = io::number(res.wall_time_ms);
      }
      std::ostringstream os;
      write_jsonl(os, records);
      session.write_text(b_out, os.str());
    } else if (*eval_cmd) {
      const Dataset ds = io::load_dataset(ev_data, ev_schema);
      const Coefficients c = coefficients_for(ev_coef, ds.schema());
      std::optional<Coefficients> star;
      if (!ev_beta.empty()) star = coefficients_for(ev_beta, ds.schema());
      const auto t0 = std::chrono::steady_clock::now();
      EvalReport rep = evaluate(ds, c, star ? &*star : nullptr);
      rep.wall_time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      session.emit(ev_out, report_to_json(rep));
    } else if (*seg_cmd) {
      const auto t = io::read_csv_file(seg_data);
      std::vector<std::vector<std::string>> rows = t.rows;
      std::size_t vcol = 0, wcol = 1;
      if (t.header.size() < 2) throw DataError("segment input needs two columns (value, weight)");
      if (auto v = t.column("value"), w = t.column("weight"); v && w) {
        vcol = *v;
        wcol = *w;
      } else if (io::detail::parse_double(t.header[0]) && io::detail::parse_double(t.header[1])) {
        rows.insert(rows.begin(), t.header);  // no header row
      }
      std::vector<double> values, weights;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        auto v = io::detail::parse_double(rows[r][vcol]), w = io::detail::parse_double(rows[r][wcol]);
        if (!v || !w) throw DataError("segment input: bad number in record " + std::to_string(r + 1));
        values.push_back(*v);
        weights.push_back(*w);
      }
      SegmentSolution sol;
      try {
        sol = solve_univariate(values, weights, seg_lambda0, seg_lambda);
      } catch (const std::invalid_argument& e) {
        throw DataError(std::string("segment input: ") + e.what());
      }
      std::ostringstream os;
      io::write_csv_row(os, {"index", "beta"});
      for (std::size_t i = 0; i < sol.beta.size(); ++i) io::write_csv_row(os, {std::to_string(i), io::format_number(sol.beta[i])});
      if (seg_out.empty())
        std::cout << os.str();
      else
        session.write_text(seg_out, os.str());
      session.info()["objective"] = io::number(sol.objective);
      session.info()["jumps"] = sol.jump_count;
      session.info()["nonzero"] = sol.nonzero_count;
    } else if (*exact_cmd) {
      const Dataset ds = io::load_dataset(ex_data, ex_schema);
      if (ds.task() != Task::regression) throw UsageError("solve-exact handles the squared loss only");
      const auto pen = ex_pen.config();
      const Coefficients warm = ex_warm.empty() ? fit(ds, pen).coef : coefficients_for(ex_warm, ds.schema());
      const double big_m = ex_bigm ? *ex_bigm : choose_big_m(warm);
      if (!ex_export.empty()) {
        std::ostringstream os;
        export_lp(build_mip(ds, pen, big_m), os);
        session.write_text(ex_export, os.str());
      }
      std::unique_ptr<ExactBackend> backend;
      if (ex_backend == "enum") {
        backend = std::make_unique<EnumerativeBackend>(ex_guard, default_threads(threads, true));
      } else {
        if (ex_solver.empty()) throw UsageError("--backend file needs --solver-cmd");
        fs::path work = ex_workdir.empty() ? fs::path(ex_out.empty() ? "clusterlearn_mip" : ex_out + ".work")
                                           : fs::path(ex_workdir);
        backend = std::make_unique<FileBackend>(
            work,
            [&](const fs::path& lp, const fs::path& sol) {
              const std::string cmd = expand_command(ex_solver, lp, sol);
              if (std::system(cmd.c_str()) != 0) throw SolverError("solver command failed: " + cmd);
            },
            ex_bigm);
      }
      const auto r = row_generation(ds, pen, warm, *backend, ex_iter);
      json j;
      j["lambda"] = io::number(pen.lambda);
      j["lambda0"] = io::number(pen.lambda0);
      j["backend"] = backend->name();
      j["objective"] = io::number(r.objective);
      j["converged"] = r.converged;
      j["iterations"] = r.iterations;
      j["certificate"] = {{"lower_bound", io::number(r.certificate.lower_bound)},
                          {"upper_bound", io::number(r.certificate.upper_bound)},
                          {"rel_gap", io::number(r.certificate.rel_gap())}};
      j["supports"] = json::array();
      for (const auto& s : r.supports) {
        json names = json::array();
        for (auto k : s) names.push_back(ds.schema().predictor(k).name);
        j["supports"].push_back(names);
      }
      j["levels"] = level_counts(r.coef, ds.schema());
      j["coefficients"] = io::coefficients_to_json(r.coef, ds.schema());
      session.emit(ex_out, j);
    } else if (*mip_cmd) {
      const Dataset ds = io::load_dataset(mip_data, mip_schema);
      if (ds.task() != Task::regression) throw UsageError("export-mip handles the squared loss only");
      const auto pen = mip_pen.config();
      double big_m = 0.0;
      if (mip_bigm)
        big_m = *mip_bigm;
      else
        big_m = choose_big_m(mip_warm.empty() ? fit(ds, pen).coef : coefficients_for(mip_warm, ds.schema()));
      std::vector<char> active(ds.schema().num_categorical(), mip_active.empty() ? 1 : 0);
      for (auto k : parse_active(mip_active, ds.schema())) active[k] = 1;
      std::ostringstream os;
      export_lp(build_mip(ds, pen, big_m, active), os);
      session.write_text(mip_out, os.str());
      session.info()["big_m"] = io::number(big_m);
    }
    session.finish(app, command);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const GuardExceeded& e) {
    std::cerr << "guard: " << e.what() << "\n";
    return 4;
  } catch (const SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
