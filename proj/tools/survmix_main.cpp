// Apache License, Version 2.0, refer to LICENSE.txt
//
// Command-line front end: simulate, fit, km, predict, bench. Every run writes
// its outputs plus a manifest.json recording the resolved configuration, so
// any output file can be regenerated from the recorded command line.

#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "survmix/survmix.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  json j;
  in >> j;
  return j;
}

// Pre-scan for --config so file values become defaults that flags override.
json scan_config(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") return load_json_file(argv[i + 1]);
  }
  return json::object();
}

template <typename T>
void from_config(const json& cfg, const char* key, T& var) {
  if (cfg.contains(key)) var = cfg.at(key).get<T>();
}

std::string default_out_dir() {
  const char* env = std::getenv("SURVMIX_OUT");
  return env != nullptr && *env != '\0' ? env : ".";
}

std::string out_path(const std::string& dir, const std::string& name) {
  fs::create_directories(dir);
  return (fs::path(dir) / name).string();
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  if (out.empty()) throw UsageError("empty list: " + s);
  return out;
}

survmix::PriorSpec prior_from_json(const json& j, std::size_t k,
                                   Eigen::Index dim) {
  survmix::PriorSpec prior = survmix::PriorSpec::vague(k, dim);
  if (j.contains("alpha")) prior.alpha = j.at("alpha").get<std::vector<double>>();
  if (j.contains("tau2")) prior.tau2 = j.at("tau2").get<std::vector<double>>();
  if (j.contains("a")) prior.a = j.at("a").get<std::vector<double>>();
  if (j.contains("b")) prior.b = j.at("b").get<std::vector<double>>();
  if (j.contains("m")) {
    const auto rows = j.at("m").get<std::vector<std::vector<double>>>();
    prior.m.clear();
    for (const auto& r : rows) {
      prior.m.push_back(Eigen::Map<const Eigen::VectorXd>(
          r.data(), static_cast<Eigen::Index>(r.size())));
    }
  }
  prior.validate(dim);
  return prior;
}

Eigen::VectorXd parse_profile(const std::string& arg) {
  json j;
  if (!arg.empty() && (arg.front() == '{' || arg.front() == '[')) {
    j = json::parse(arg);
  } else {
    j = load_json_file(arg);
  }
  std::vector<double> x;
  if (j.is_array()) {
    x = j.get<std::vector<double>>();
  } else if (j.contains("x")) {
    x = j.at("x").get<std::vector<double>>();
  } else {
    throw UsageError("profile must be a JSON array or an object with key 'x'");
  }
  return Eigen::Map<const Eigen::VectorXd>(x.data(),
                                           static_cast<Eigen::Index>(x.size()));
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == '=' || c == '/' || c == ' ') c = '_';
  }
  return s;
}

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::size_t n = 1000;
  double censoring = -1.0;  // engine default when negative
  double eta = 0.6;
  std::string params_path;
  std::string out_dir = default_out_dir();
  std::uint64_t seed = 1;
  bool portfolio = false;
};

void run_simulate(const SimulateArgs& a) {
  Timer timer;
  double censoring = a.censoring;
  if (censoring < 0.0) censoring = a.portfolio ? 0.427 : 0.4;
  if (!(censoring >= 0.0 && censoring < 1.0)) {
    throw UsageError("--censoring must lie in [0,1)");
  }
  std::pair<survmix::SurvivalDataset, survmix::SimTruth> sim = [&] {
    if (a.portfolio) {
      return survmix::simulate_insurance_portfolio(
          a.n, a.seed, survmix::default_portfolio_coefficients(), censoring);
    }
    survmix::SimSpec spec =
        survmix::benchmark_sim_spec(a.n, censoring, a.eta, a.seed);
    if (!a.params_path.empty()) {
      spec.params = survmix::load_params_json(a.params_path);
      const std::size_t p = static_cast<std::size_t>(spec.params.dim()) - 1;
      spec.factors.clear();
      for (std::size_t c = 0; c < p; ++c) {
        spec.factors.push_back(survmix::FactorSpec{
            "x" + std::to_string(c + 1), {"0", "1"}, {0.5, 0.5}});
      }
    }
    return survmix::simulate_mixture_dataset(spec);
  }();

  const std::string data_path = out_path(a.out_dir, "dataset.csv");
  const std::string truth_path = out_path(a.out_dir, "truth.json");
  survmix::save_dataset_csv(sim.first, data_path);
  survmix::save_truth_json(sim.second, truth_path);

  survmix::RunManifest manifest;
  manifest.command = "simulate";
  manifest.config = {{"n", a.n},           {"censoring", censoring},
                     {"eta", a.eta},       {"params", a.params_path},
                     {"seed", a.seed},     {"out", a.out_dir},
                     {"portfolio", a.portfolio}};
  manifest.seed = a.seed;
  if (!a.params_path.empty()) manifest.inputs.push_back(a.params_path);
  manifest.outputs = {data_path, truth_path};
  manifest.realized_censoring = sim.first.censoring_fraction();
  manifest.duration_seconds = timer.seconds();
  save_manifest(manifest, out_path(a.out_dir, "manifest.json"));

  std::cout << "simulated n=" << sim.first.n() << " events=" << sim.first.h()
            << " censoring=" << sim.first.censoring_fraction() << " -> "
            << data_path << "\n";
}

void add_simulate(CLI::App& app, const json& cfg) {
  auto a = std::make_shared<SimulateArgs>();
  from_config(cfg, "n", a->n);
  from_config(cfg, "censoring", a->censoring);
  from_config(cfg, "eta", a->eta);
  from_config(cfg, "params", a->params_path);
  from_config(cfg, "out", a->out_dir);
  from_config(cfg, "seed", a->seed);
  from_config(cfg, "portfolio", a->portfolio);

  CLI::App* sub = app.add_subcommand("simulate", "generate a synthetic portfolio");
  sub->add_option("--n", a->n, "number of policies")->check(CLI::PositiveNumber);
  sub->add_option("--censoring", a->censoring,
                  "target censored fraction (default 0.4; 0.427 with --portfolio)");
  sub->add_option("--eta", a->eta, "first mixture weight");
  sub->add_option("--params", a->params_path, "generating parameters JSON");
  sub->add_option("--seed", a->seed, "random seed");
  sub->add_option("--out", a->out_dir, "output directory");
  sub->add_flag("--portfolio", a->portfolio, "realistic portfolio generator");
  sub->callback([a]() { run_simulate(*a); });
}

struct FitArgs {
  std::string engine, data_path, prior_path;
  std::string out_dir = default_out_dir();
  std::size_t k = 0;
  long iters = 20000, burnin = 10000, thin = 10, max_iters = 500;
  double tol = 1e-6;
  std::uint64_t seed = 1;
};

void run_fit(const FitArgs& a) {
  if (a.engine != "gibbs" && a.engine != "em") {
    throw UsageError("--engine must be 'gibbs' or 'em'");
  }
  if (a.k == 0) throw UsageError("--k is required and must be >= 1");
  if (a.data_path.empty()) throw UsageError("--data is required");

  Timer timer;
  const survmix::SurvivalDataset data = survmix::load_dataset_csv(a.data_path);
  const Eigen::Index dim = static_cast<Eigen::Index>(data.p()) + 1;

  survmix::RunManifest manifest;
  manifest.command = "fit";
  manifest.seed = a.seed;
  manifest.inputs = {a.data_path};
  manifest.config = {{"engine", a.engine}, {"k", a.k},
                     {"data", a.data_path}, {"seed", a.seed},
                     {"out", a.out_dir}};

  if (a.engine == "gibbs") {
    survmix::PriorSpec prior =
        a.prior_path.empty()
            ? survmix::PriorSpec::vague(a.k, dim)
            : prior_from_json(load_json_file(a.prior_path), a.k, dim);
    survmix::GibbsConfig config;
    config.iterations = a.iters;
    config.burn_in = a.burnin;
    config.thin = a.thin;
    config.seed = a.seed;
    config.K = a.k;
    const survmix::PosteriorDraws draws = survmix::run_gibbs(data, prior, config);
    const survmix::PosteriorSummary summary = survmix::posterior_summary(draws);

    const std::string draws_path = out_path(a.out_dir, "draws.csv");
    const std::string summary_path = out_path(a.out_dir, "summary.json");
    survmix::save_draws_csv(draws, draws_path);
    survmix::save_summary_json(summary, summary_path);
    manifest.config["iters"] = a.iters;
    manifest.config["burnin"] = a.burnin;
    manifest.config["thin"] = a.thin;
    if (!a.prior_path.empty()) {
      manifest.config["prior"] = a.prior_path;
      manifest.inputs.push_back(a.prior_path);
    }
    manifest.outputs = {draws_path, summary_path};
    manifest.duration_seconds = timer.seconds();
    save_manifest(manifest, out_path(a.out_dir, "manifest.json"));

    std::cout << "gibbs: retained " << draws.M() << " draws";
    for (const auto& [name, s] : summary.entries) {
      if (name.rfind("eta_", 0) == 0) std::cout << "  " << name << "=" << s.mean;
    }
    std::cout << "  (" << manifest.duration_seconds << " s) -> " << draws_path
              << "\n";
  } else {
    survmix::EmConfig config;
    config.max_iterations = a.max_iters;
    config.tolerance = a.tol;
    config.seed = a.seed;
    const survmix::EmResult result = survmix::run_em(data, a.k, config);

    const std::string result_path = out_path(a.out_dir, "em_result.json");
    survmix::save_em_result_json(result, result_path);
    manifest.config["tol"] = a.tol;
    manifest.config["max-iters"] = a.max_iters;
    manifest.outputs = {result_path};
    manifest.duration_seconds = timer.seconds();
    save_manifest(manifest, out_path(a.out_dir, "manifest.json"));

    std::cout << "em: " << (result.converged ? "converged" : "NOT converged")
              << " after " << result.iterations << " iterations ("
              << manifest.duration_seconds << " s) -> " << result_path << "\n";
  }
}

void add_fit(CLI::App& app, const json& cfg) {
  auto a = std::make_shared<FitArgs>();
  from_config(cfg, "engine", a->engine);
  from_config(cfg, "data", a->data_path);
  from_config(cfg, "prior", a->prior_path);
  from_config(cfg, "out", a->out_dir);
  from_config(cfg, "k", a->k);
  from_config(cfg, "iters", a->iters);
  from_config(cfg, "burnin", a->burnin);
  from_config(cfg, "thin", a->thin);
  from_config(cfg, "max-iters", a->max_iters);
  from_config(cfg, "tol", a->tol);
  from_config(cfg, "seed", a->seed);

  CLI::App* sub = app.add_subcommand("fit", "fit the mixture model (gibbs or em)");
  sub->add_option("--engine", a->engine, "gibbs or em");
  sub->add_option("--k", a->k, "mixture components")->check(CLI::PositiveNumber);
  sub->add_option("--data", a->data_path, "dataset CSV");
  sub->add_option("--iters", a->iters, "Gibbs sweeps")->check(CLI::PositiveNumber);
  sub->add_option("--burnin", a->burnin, "burn-in sweeps");
  sub->add_option("--thin", a->thin, "thinning stride")->check(CLI::PositiveNumber);
  sub->add_option("--seed", a->seed, "random seed");
  sub->add_option("--tol", a->tol, "EM relative-change tolerance");
  sub->add_option("--max-iters", a->max_iters, "EM iteration cap");
  sub->add_option("--prior", a->prior_path, "prior hyperparameter JSON");
  sub->add_option("--out", a->out_dir, "output directory");
  sub->callback([a]() { run_fit(*a); });
}

struct KmArgs {
  std::string data_path, group_by;
  std::string out_dir = default_out_dir();
};

void run_km(const KmArgs& a) {
  if (a.data_path.empty()) throw UsageError("--data is required");
  Timer timer;
  const survmix::SurvivalDataset data = survmix::load_dataset_csv(a.data_path);

  std::optional<std::size_t> group;
  if (!a.group_by.empty()) {
    std::size_t idx = 0;
    bool ok = a.group_by.size() >= 2 && a.group_by[0] == 'x';
    if (ok) {
      try {
        idx = std::stoul(a.group_by.substr(1));
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok || idx < 1 || idx > data.p()) {
      throw std::runtime_error("unknown column: " + a.group_by);
    }
    group = idx - 1;
  }
  const std::vector<survmix::KmCurve> curves = survmix::kaplan_meier(data, group);

  survmix::RunManifest manifest;
  manifest.command = "km";
  manifest.inputs = {a.data_path};
  manifest.config = {{"data", a.data_path}, {"group-by", a.group_by},
                     {"out", a.out_dir}};
  for (const survmix::KmCurve& c : curves) {
    const std::string name =
        c.label.empty() ? "km.csv" : "km_" + sanitize(c.label) + ".csv";
    const std::string path = out_path(a.out_dir, name);
    survmix::save_km_csv(c, path);
    manifest.outputs.push_back(path);
  }
  manifest.duration_seconds = timer.seconds();
  save_manifest(manifest, out_path(a.out_dir, "manifest.json"));
  std::cout << "km: wrote " << curves.size() << " curve file(s) in " << a.out_dir
            << "\n";
}

void add_km(CLI::App& app, const json& cfg) {
  auto a = std::make_shared<KmArgs>();
  from_config(cfg, "data", a->data_path);
  from_config(cfg, "group-by", a->group_by);
  from_config(cfg, "out", a->out_dir);

  CLI::App* sub = app.add_subcommand("km", "Kaplan-Meier survival curves");
  sub->add_option("--data", a->data_path, "dataset CSV");
  sub->add_option("--group-by", a->group_by, "covariate column name (x1..xp)");
  sub->add_option("--out", a->out_dir, "output directory");
  sub->callback([a]() { run_km(*a); });
}

struct PredictArgs {
  std::string model_path, profile_arg, grid_arg;
  std::vector<std::string> prob_args;
  std::string out_dir = default_out_dir();
};

void run_predict(const PredictArgs& a) {
  if (a.model_path.empty()) throw UsageError("--model is required");
  if (a.profile_arg.empty()) throw UsageError("--profile is required");
  if (a.grid_arg.empty() && a.prob_args.empty()) {
    throw UsageError("need --grid and/or --prob");
  }
  Timer timer;
  const Eigen::VectorXd x = parse_profile(a.profile_arg);

  std::optional<survmix::PosteriorDraws> draws;
  std::optional<survmix::MixtureParams> params;
  if (a.model_path.size() > 4 &&
      a.model_path.compare(a.model_path.size() - 4, 4, ".csv") == 0) {
    draws = survmix::load_draws_csv(a.model_path);
  } else {
    json j = load_json_file(a.model_path);
    params = survmix::params_from_json(j.contains("params") ? j.at("params") : j);
  }

  survmix::RunManifest manifest;
  manifest.command = "predict";
  manifest.inputs = {a.model_path};
  manifest.config = {{"model", a.model_path}, {"profile", a.profile_arg},
                     {"grid", a.grid_arg},    {"prob", a.prob_args},
                     {"out", a.out_dir}};

  if (!a.grid_arg.empty()) {
    std::string g = a.grid_arg;
    for (char& c : g) {
      if (c == ':') c = ',';
    }
    const auto parts = parse_double_list(g);
    if (parts.size() != 3 || parts[2] < 2) {
      throw UsageError("--grid must be tmin:tmax:points with points >= 2");
    }
    const auto grid = survmix::make_log_grid(parts[0], parts[1],
                                             static_cast<std::size_t>(parts[2]));
    const survmix::SurvivalCurve curve =
        draws ? survmix::posterior_survival_curve(*draws, x, grid)
              : survmix::survival_curve(*params, x, grid);
    const std::string curve_path = out_path(a.out_dir, "curve.csv");
    survmix::save_curve_csv(curve, curve_path);
    manifest.outputs.push_back(curve_path);
    std::cout << "predict: curve with " << grid.size() << " points -> "
              << curve_path << "\n";
  }
  if (!a.prob_args.empty()) {
    const double qa = std::stod(a.prob_args[0]);
    const double qb = (a.prob_args[1] == "inf" || a.prob_args[1] == "Inf")
                          ? survmix::kInf
                          : std::stod(a.prob_args[1]);
    const double qc = std::stod(a.prob_args[2]);
    const survmix::ProbResult r =
        draws ? survmix::conditional_churn_prob(*draws, x, qa, qb, qc)
              : survmix::conditional_churn_prob(*params, x, qa, qb, qc);
    const std::string prob_path = out_path(a.out_dir, "prob.json");
    std::ofstream out(prob_path);
    out << survmix::prob_result_to_json(r, x, qa, qb, qc).dump(2) << "\n";
    manifest.outputs.push_back(prob_path);
    std::cout << "predict: P(" << qa << "<T<=" << a.prob_args[1] << " | T>" << qc
              << ") = " << r.estimate << " -> " << prob_path << "\n";
  }
  manifest.duration_seconds = timer.seconds();
  save_manifest(manifest, out_path(a.out_dir, "manifest.json"));
}

void add_predict(CLI::App& app, const json& cfg) {
  auto a = std::make_shared<PredictArgs>();
  from_config(cfg, "model", a->model_path);
  from_config(cfg, "profile", a->profile_arg);
  from_config(cfg, "grid", a->grid_arg);
  from_config(cfg, "out", a->out_dir);
  if (cfg.contains("prob")) {
    for (const auto& v : cfg.at("prob")) {
      a->prob_args.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    }
  }

  CLI::App* sub =
      app.add_subcommand("predict", "survival curves and churn probabilities");
  sub->add_option("--model", a->model_path, "draws.csv or params JSON");
  sub->add_option("--profile", a->profile_arg, "covariate profile (JSON or file)");
  sub->add_option("--grid", a->grid_arg, "curve grid tmin:tmax:points");
  sub->add_option("--prob", a->prob_args,
                  "a b c for P(a<T<=b | T>c); b may be inf")->expected(3);
  sub->add_option("--out", a->out_dir, "output directory");
  sub->callback([a]() { run_predict(*a); });
}

struct BenchArgs {
  std::string sizes_arg = "1000,10000";
  std::string cens_arg = "0.1,0.4,0.6";
  std::string out_dir = default_out_dir();
  long iters = 2000, burnin = 1000, thin = 10;
  std::size_t k = 2;
  std::uint64_t seed = 1;
};

void run_bench(const BenchArgs& a) {
  Timer timer;
  const auto sizes = parse_double_list(a.sizes_arg);
  const auto fracs = parse_double_list(a.cens_arg);

  const std::string bench_path = out_path(a.out_dir, "bench.csv");
  std::ofstream out(bench_path);
  if (!out) throw std::runtime_error("cannot open for writing: " + bench_path);
  out << "n,censoring,seconds\n";
  // Configurations run one at a time; each timing covers the sampler only.
  for (double szd : sizes) {
    const std::size_t n = static_cast<std::size_t>(szd);
    for (double frac : fracs) {
      const auto sim = survmix::simulate_mixture_dataset(
          survmix::benchmark_sim_spec(n, frac, 0.6, a.seed));
      survmix::GibbsConfig config;
      config.iterations = a.iters;
      config.burn_in = a.burnin;
      config.thin = a.thin;
      config.seed = a.seed;
      config.K = a.k;
      const Eigen::Index dim = static_cast<Eigen::Index>(sim.first.p()) + 1;
      Timer t;
      const auto draws =
          survmix::run_gibbs(sim.first, survmix::PriorSpec::vague(a.k, dim), config);
      const double secs = t.seconds();
      (void)draws;
      out << n << "," << frac << "," << survmix::detail::format_double(secs)
          << "\n";
      std::cout << "bench: n=" << n << " censoring=" << frac << " -> " << secs
                << " s\n";
    }
  }
  out.close();

  survmix::RunManifest manifest;
  manifest.command = "bench";
  manifest.seed = a.seed;
  manifest.config = {{"sizes", a.sizes_arg}, {"censoring", a.cens_arg},
                     {"iters", a.iters},     {"burnin", a.burnin},
                     {"thin", a.thin},       {"k", a.k},
                     {"seed", a.seed},       {"out", a.out_dir}};
  manifest.outputs = {bench_path};
  manifest.duration_seconds = timer.seconds();
  save_manifest(manifest, out_path(a.out_dir, "manifest.json"));
}

void add_bench(CLI::App& app, const json& cfg) {
  auto a = std::make_shared<BenchArgs>();
  from_config(cfg, "sizes", a->sizes_arg);
  from_config(cfg, "censoring", a->cens_arg);
  from_config(cfg, "iters", a->iters);
  from_config(cfg, "burnin", a->burnin);
  from_config(cfg, "thin", a->thin);
  from_config(cfg, "k", a->k);
  from_config(cfg, "seed", a->seed);
  from_config(cfg, "out", a->out_dir);

  CLI::App* sub = app.add_subcommand("bench", "Gibbs wall-time grid");
  sub->add_option("--sizes", a->sizes_arg, "comma-separated sample sizes");
  sub->add_option("--censoring", a->cens_arg, "comma-separated censored fractions");
  sub->add_option("--iters", a->iters, "sweeps per configuration")
      ->check(CLI::PositiveNumber);
  sub->add_option("--burnin", a->burnin, "burn-in sweeps");
  sub->add_option("--thin", a->thin, "thinning stride");
  sub->add_option("--k", a->k, "mixture components");
  sub->add_option("--seed", a->seed, "random seed");
  sub->add_option("--out", a->out_dir, "output directory");
  sub->callback([a]() { run_bench(*a); });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Log-normal mixture survival modelling for right-censored "
               "lapse data: simulation, Gibbs/EM fitting, Kaplan-Meier and "
               "churn-probability prediction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", survmix::kVersion);
  // --config is consumed by a pre-scan; registered here so parsing accepts it.
  std::string config_path;
  app.add_option("--config", config_path, "JSON file mirroring the flags");

  json cfg;
  try {
    cfg = scan_config(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  add_simulate(app, cfg);
  add_fit(app, cfg);
  add_km(app, cfg);
  add_predict(app, cfg);
  add_bench(app, cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
