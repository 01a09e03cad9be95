// rpmix: batch front end for sampling, estimation, agreement and simulation.

#include "rpmix/rpmix.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace fs = std::filesystem;
using namespace rpmix;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitEstimation = 3;
constexpr int kExitData = 4;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<long long> k;
  std::string out_dir = "rpmix_out";
  std::string robust;
  std::string known_weights;
  std::string mode;
  bool whiten = false;
  std::string directions;
};

struct Loaded {
  Json doc = Json::object();
  fs::path base = fs::current_path();

  bool has(const char *key) const { return doc.contains(key) && !doc[key].is_null(); }

  template <class T> T get(const char *key, T fallback) const {
    if (!has(key)) return fallback;
    try {
      return doc[key].get<T>();
    } catch (const Json::exception &) {
      throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
  }

  fs::path path(const char *key) const {
    fs::path p = get<std::string>(key, "");
    if (p.empty()) throw ConfigError(std::string("config key '") + key + "' is required");
    if (p.is_relative()) p = base / p;
    if (!fs::exists(p)) throw ConfigError("file not found: " + p.string());
    return p;
  }
};

Loaded load_config(const std::string &path) {
  Loaded l;
  if (path.empty()) return l;
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
  try {
    l.doc = parse_json(read_text(path));
  } catch (const ParseError &e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!l.doc.is_object()) throw ConfigError("config must be a JSON object");
  l.base = fs::path(path).parent_path();
  return l;
}

ReconstructionMethod parse_robust(const std::string &s) {
  if (s.empty() || s == "l2") return ReconstructionMethod::l2();
  if (s == "l1") return ReconstructionMethod::l1();
  if (s.rfind("mom:", 0) == 0) {
    try {
      return ReconstructionMethod::median_of_means(std::stoi(s.substr(4)));
    } catch (const std::exception &) {
    }
  }
  throw ConfigError("--robust must be l2, l1 or mom:<L>");
}

AgreementMode parse_mode(const std::string &s) {
  if (s.empty() || s == "pooled") return AgreementMode::pooled();
  if (s == "split") return AgreementMode::split();
  if (s.rfind("bootstrap:", 0) == 0) {
    try {
      return AgreementMode::bootstrap(std::stoi(s.substr(10)));
    } catch (const std::exception &) {
    }
  }
  throw ConfigError("--mode must be pooled, split or bootstrap:<B>");
}

Family parse_family(const Loaded &cfg) {
  const std::string name = cfg.get<std::string>("family", "gaussian");
  if (name == "gaussian") return Family::gaussian();
  if (name == "student_t" || name == "t") return Family::student_t(cfg.get<int>("nu", 4));
  throw ConfigError("unknown family '" + name + "'");
}

Vector read_weights(const std::string &path) {
  if (!fs::exists(path)) throw ConfigError("known-weights file not found: " + path);
  const std::string text = read_text(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '[') {
    const Json j = parse_json(text);
    Vector w(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) w[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    return w;
  }
  CsvSchema schema;
  schema.header = CsvSchema::Header::Absent;
  const Matrix m = parse_csv(text, schema).data;
  return Eigen::Map<const Vector>(m.data(), m.size());
}

CsvSchema schema_from(const Loaded &cfg) {
  CsvSchema s;
  const std::string header = cfg.get<std::string>("header", "auto");
  if (header == "present") s.header = CsvSchema::Header::Present;
  else if (header == "absent") s.header = CsvSchema::Header::Absent;
  else if (header != "auto") throw ConfigError("header must be auto, present or absent");
  const std::string labels = cfg.get<std::string>("labels", "");
  if (labels == "last") s.label_last = true;
  else if (!labels.empty()) s.label_column = labels;
  return s;
}

void apply_fit_settings(const Loaded &cfg, EstimateConfig &ec) {
  if (cfg.has("tau")) ec.tau = cfg.get<double>("tau", 0.0);
  ec.grid_points = cfg.get<int>("grid_points", ec.grid_points);
  const std::string wm = cfg.get<std::string>("weight_mode", ec.damped_weights ? "damped" : "identity");
  if (wm != "identity" && wm != "damped") throw ConfigError("weight_mode must be identity or damped");
  ec.damped_weights = wm == "damped";
  ec.min_centroid_gap = cfg.get<double>("min_centroid_gap", ec.min_centroid_gap);
  if (!(ec.min_centroid_gap >= 0.0)) throw ConfigError("min_centroid_gap must be >= 0");
  if (cfg.has("align_weights")) {
    const auto aw = cfg.get<std::vector<double>>("align_weights", {});
    if (aw.size() != 3 || aw[0] < 0.0 || aw[1] < 0.0 || aw[2] < 0.0)
      throw ConfigError("align_weights must be three non-negative numbers (weight, location, scale)");
    ec.align.weight_lambda = aw[0];
    ec.align.weight_location = aw[1];
    ec.align.weight_scale = aw[2];
  }
  ec.ecf.max_gradient_steps = cfg.get<int>("max_iterations", ec.ecf.max_gradient_steps);
  ec.ecf.max_evaluations = cfg.get<int>("max_evaluations", ec.ecf.max_evaluations);
  ec.ecf.restarts = cfg.get<int>("restarts", ec.ecf.restarts);
  if (ec.grid_points < 1 || ec.ecf.max_gradient_steps < 1 || ec.ecf.max_evaluations < 1 || ec.ecf.restarts < 1)
    throw ConfigError("grid_points, max_iterations, max_evaluations and restarts must be positive");
  ec.threads = static_cast<unsigned>(cfg.get<int>("threads", 0));
}

Json matrix_json(const Matrix &m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

void warn(const std::vector<std::string> &warnings) {
  for (const auto &w : warnings) std::cerr << "warning: " << w << "\n";
}

// ---- subcommands ----

int cmd_sample(const Common &c, long long n) {
  const Loaded cfg = load_config(c.config);
  const MixtureModel model = cfg.has("model") ? read_model(cfg.path("model")) : model_from_json(cfg.doc);
  const auto count = n > 0 ? n : cfg.get<long long>("n", 0);
  if (count < 1) throw ConfigError("sample size n must be >= 1");
  const std::uint64_t seed = c.seed.value_or(cfg.get<std::uint64_t>("seed", 1));
  const LabeledSample s = sample(model, static_cast<std::size_t>(count), seed);
  write_csv(fs::path(c.out_dir) / "sample.csv", s);
  Json summary{{"task", "sample"}, {"n", count}, {"seed", seed}, {"dim", model.dim()},
               {"model", model_to_json(model)}};
  write_text(fs::path(c.out_dir) / "summary.json", summary.dump(2) + "\n");
  return 0;
}

int cmd_estimate(const Common &c, const std::string &data_flag) {
  const Loaded cfg = load_config(c.config);
  EstimateConfig ec;
  ec.m = static_cast<std::size_t>(cfg.get<int>("m", 2));
  ec.family = parse_family(cfg);
  apply_fit_settings(cfg, ec);
  ec.seed = c.seed.value_or(cfg.get<std::uint64_t>("seed", 1));
  if (c.k) ec.k = *c.k;
  else if (cfg.has("k")) ec.k = cfg.get<long long>("k", 0);
  ec.robust = parse_robust(c.robust.empty() ? cfg.get<std::string>("robust", "l2") : c.robust);
  ec.constrained = cfg.get<bool>("constrained", false);
  if (!c.known_weights.empty()) ec.known_weights = read_weights(c.known_weights);
  else if (cfg.has("known_weights")) {
    const auto v = cfg.get<std::vector<double>>("known_weights", {});
    ec.known_weights = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  if (!c.directions.empty()) ec.directions = read_directions(c.directions);

  fs::path data_path = data_flag;
  if (data_path.empty()) data_path = cfg.path("data");
  else if (!fs::exists(data_path)) throw ConfigError("data file not found: " + data_path.string());
  const LabeledSample data = ingest_csv(data_path, schema_from(cfg));
  if (c.whiten) throw ConfigError("--whiten applies to agree only");

  const EstimateResult res = run_estimate(data.data, ec);
  warn(res.warnings);
  const fs::path out(c.out_dir);
  write_directions(out / "directions.csv", res.directions);
  const MixtureModel model = res.model();
  write_model(out / "model.json", model);

  Json summary;
  summary["task"] = "estimate";
  summary["seed"] = ec.seed;
  summary["k"] = res.directions.size();
  summary["n"] = data.size();
  summary["robust"] = ec.robust.name();
  summary["known_weights"] = ec.known_weights.has_value();
  summary["model"] = model_to_json(model);
  summary["warnings"] = res.warnings;
  Json diag;
  diag["pivot_index"] = res.plan.pivot_index;
  diag["pivot_separation"] = res.plan.pivot_separation;
  diag["low_separation"] = res.plan.low_separation;
  diag["usable_directions"] = res.plan.usable_count();
  Json per = Json::array();
  for (std::size_t r = 0; r < res.plan.usable.size(); ++r)
    per.push_back({{"direction", r + 1},
                   {"usable", static_cast<bool>(res.plan.usable[r])},
                   {"reflected", static_cast<bool>(res.plan.reflected[r])},
                   {"permutation", res.plan.permutations[r]},
                   {"cost", res.plan.costs[r]},
                   {"criterion_step1", res.step1[r].criterion},
                   {"converged_step1", res.step1[r].converged}});
  diag["alignment"] = per;
  if (res.reconstruction) {
    Json tiers = Json::array();
    for (std::size_t j = 0; j < res.reconstruction->tiers.size(); ++j)
      tiers.push_back({{"component", j + 1},
                       {"solver_tier", to_string(res.reconstruction->tiers[j])},
                       {"barrier_iterations", res.reconstruction->barrier_iterations[j]},
                       {"mean_residual", res.reconstruction->mean_residuals[j]},
                       {"covariance_residual", res.reconstruction->covariance_residuals[j]}});
    diag["reconstruction"] = tiers;
  }
  if (res.constrained) {
    diag["levels"] = std::vector<double>(res.constrained->levels.data(),
                                         res.constrained->levels.data() + res.constrained->levels.size());
    diag["correlation"] = res.constrained->correlation;
    diag["correlation_clamped"] = res.constrained->clamped;
  }
  summary["diagnostics"] = diag;

  std::vector<MetricRow> rows;
  if (cfg.has("truth")) {
    const MixtureModel truth = read_model(cfg.path("truth"));
    if (truth.components() != ec.m || truth.dim() != data.dim())
      throw ConfigError("truth model does not match m or d");
    const EstimateMetrics em = evaluate(res, truth, data);
    MetricRow proto{"estimate", 0.0, 0, ec.seed, res.directions.size(), static_cast<std::size_t>(data.size()),
                    "rp", "", 0.0};
    auto add = [&](const std::string &metric, double v) {
      MetricRow r = proto;
      r.metric = metric;
      r.value = v;
      rows.push_back(r);
    };
    add("weight_error", em.errors.weight_error);
    for (std::size_t j = 0; j < em.errors.mean_errors.size(); ++j) {
      add("mean_error_" + std::to_string(j + 1), em.errors.mean_errors[j]);
      add("cov_error_" + std::to_string(j + 1), em.errors.cov_errors[j]);
    }
    if (data.labels) {
      add("ari", em.ari);
      summary["confusion"] = matrix_json(em.confusion);
    }
    write_text(out / "metrics.csv", format_metrics_csv(rows));
  }
  write_text(out / "summary.json", summary.dump(2) + "\n");
  return 0;
}

int cmd_agree(const Common &c, const std::string &x_flag, const std::string &y_flag, long long n_synth) {
  const Loaded cfg = load_config(c.config);
  const std::uint64_t seed = c.seed.value_or(cfg.get<std::uint64_t>("seed", 1));
  const AgreementMode mode = parse_mode(c.mode.empty() ? cfg.get<std::string>("mode", "pooled") : c.mode);
  const bool whiten = c.whiten || cfg.get<bool>("whiten", false);
  const CsvSchema schema = schema_from(cfg);
  auto resolve = [&](const std::string &flag, const char *key) {
    if (!flag.empty()) {
      if (!fs::exists(flag)) throw ConfigError("data file not found: " + flag);
      return fs::path(flag);
    }
    return cfg.path(key);
  };
  const Matrix x = ingest_csv(resolve(x_flag, "x"), schema).data;
  const bool two_fits = cfg.has("model_a") || cfg.has("model_b");
  const std::size_t m_hint = static_cast<std::size_t>(cfg.get<int>("m", 2));
  Eigen::Index k = 0;
  if (c.k) k = *c.k;
  else if (cfg.has("k")) k = cfg.get<long long>("k", 0);
  DirectionSet dirs;
  if (!c.directions.empty()) {
    dirs = read_directions(c.directions);
  } else {
    if (k < 1) k = x.cols() >= 2 ? static_cast<Eigen::Index>(required_directions(m_hint, static_cast<std::size_t>(x.cols()))) : 1;
    dirs = sample_directions(x.cols(), k, derive_seed(seed, 0xD1ECULL));
  }
  AgreementResult res;
  if (two_fits) {
    const MixtureModel a = read_model(cfg.path("model_a"));
    const MixtureModel b = read_model(cfg.path("model_b"));
    const auto ns = n_synth > 0 ? n_synth : cfg.get<long long>("n_synth", 10000);
    res = agree_one_sample_two_fits(x, a, b, dirs, static_cast<std::size_t>(ns), seed);
  } else {
    const Matrix y = ingest_csv(resolve(y_flag, "y"), schema).data;
    res = agree_two_samples(x, y, dirs, mode, seed, whiten);
  }
  if (x.cols() >= 2 && static_cast<std::size_t>(dirs.size()) < required_directions(m_hint, static_cast<std::size_t>(x.cols())))
    res.warnings.push_back("k = " + std::to_string(dirs.size()) + " is below the bound " +
                           std::to_string(required_directions(m_hint, static_cast<std::size_t>(x.cols()))) +
                           " for m = " + std::to_string(m_hint));
  warn(res.warnings);
  const fs::path out(c.out_dir);
  write_directions(out / "directions.csv", dirs);
  std::string csv = "direction,ks\n";
  for (std::size_t i = 0; i < res.ks.size(); ++i) csv += std::to_string(i + 1) + "," + format_double(res.ks[i], 10) + "\n";
  write_text(out / "metrics.csv", csv);
  Json summary{{"task", "agree"}, {"d_k", res.d_k}, {"ma_k", res.ma_k}, {"k", dirs.size()},
               {"seed", seed}, {"whiten", whiten}, {"warnings", res.warnings},
               {"mode", two_fits ? std::string("two_fits") : res.mode.name()}};
  if (res.quantiles)
    summary["bootstrap"] = {{"levels", res.quantiles->levels}, {"d_k", res.quantiles->d_k},
                            {"ma_k", res.quantiles->ma_k}};
  write_text(out / "summary.json", summary.dump(2) + "\n");
  std::cout << "D_k = " << format_double(res.d_k, 6) << "  MA_k = " << format_double(res.ma_k, 6) << "\n";
  return 0;
}

int cmd_simulate(const Common &c, const std::string &scenario_flag, int replicates_flag, bool plots_flag) {
  const Loaded cfg = load_config(c.config);
  const std::string scenario = scenario_flag.empty() ? cfg.get<std::string>("scenario", "") : scenario_flag;
  if (scenario.empty()) throw ConfigError("simulate needs a scenario");
  SimulationConfig sc = SimulationConfig::for_scenario(parse_scenario(scenario));
  sc.levels = cfg.get<std::vector<double>>("levels", {});
  sc.replicates = replicates_flag > 0 ? replicates_flag : cfg.get<int>("replicates", 20);
  if (cfg.has("n")) sc.n = cfg.get<std::size_t>("n", 0);
  if (c.k) sc.k = *c.k;
  else if (cfg.has("k")) sc.k = cfg.get<long long>("k", 0);
  if (sc.k && *sc.k < 1) throw ConfigError("k must be >= 1");
  if (sc.n && *sc.n < 1) throw ConfigError("n must be >= 1");
  sc.seed = c.seed.value_or(cfg.get<std::uint64_t>("seed", 1));
  sc.baseline = cfg.get<bool>("baseline", true);
  const std::string robust = c.robust.empty() ? cfg.get<std::string>("robust", "") : c.robust;
  if (!robust.empty()) sc.robust = parse_robust(robust);
  apply_fit_settings(cfg, sc.estimate);
  sc.mode = parse_mode(c.mode.empty() ? cfg.get<std::string>("mode", "pooled") : c.mode);
  sc.whiten = c.whiten || cfg.get<bool>("whiten", false);
  sc.threads = static_cast<unsigned>(cfg.get<int>("threads", 0));

  const SimulationOutput out = run_simulation(sc);
  const fs::path dir(c.out_dir);
  write_text(dir / "metrics.csv", format_metrics_csv(out.rows));
  write_text(dir / "summary.json", simulation_summary(sc, out).dump(2) + "\n");
  if (plots_flag || cfg.get<bool>("plots", false)) {
    std::vector<std::string> metrics;
    if (is_agreement(sc.scenario)) metrics = {"d_k", "ma_k"};
    else if (sc.scenario == Scenario::Example3) metrics = {"level_error_1", "x_error", "ari"};
    else metrics = {"weight_error", "mean_error_1", "mean_error_2", "cov_error_1", "cov_error_2"};
    for (const auto &m : metrics) write_text(dir / "plots" / (m + ".svg"), boxplot_svg(out, m));
  }
  for (const auto &f : out.failures) std::cerr << "replicate failed: " << f << "\n";
  return 0;
}

int cmd_certify(const Common &c, int d, int m, bool strong) {
  const Loaded cfg = load_config(c.config);
  const std::uint64_t seed = c.seed.value_or(cfg.get<std::uint64_t>("seed", 1));
  DirectionSet dirs;
  if (!c.directions.empty()) {
    dirs = read_directions(c.directions);
  } else {
    const int dim = d > 0 ? d : cfg.get<int>("d", 0);
    if (dim < 2) throw ConfigError("certify-directions needs --d >= 2 or --directions");
    long long k = c.k.value_or(cfg.get<long long>("k", 0));
    if (k < 1) k = static_cast<long long>(required_directions(static_cast<std::size_t>(m), static_cast<std::size_t>(dim)));
    dirs = sample_directions(dim, k, seed);
  }
  const Certificate cert = certify_sm_uniqueness(dirs, strong, derive_seed(seed, 7));
  const fs::path out(c.out_dir);
  write_directions(out / "directions.csv", dirs);
  Json summary{{"task", "certify-directions"},
               {"d", dirs.dim()},
               {"k", dirs.size()},
               {"seed", seed},
               {"design_rank", cert.design_rank},
               {"required_rank", cert.required_rank},
               {"is_sm_unique", cert.is_sm_unique},
               {"strongness", to_string(cert.strongness)},
               {"subsets_checked", cert.subsets_checked},
               {"subsets_failed", cert.subsets_failed},
               {"exhaustive", cert.exhaustive}};
  if (dirs.dim() >= 2)
    summary["required_directions"] = required_directions(static_cast<std::size_t>(m), static_cast<std::size_t>(dirs.dim()));
  write_text(out / "summary.json", summary.dump(2) + "\n");
  std::cout << "rank " << cert.design_rank << "/" << cert.required_rank
            << (cert.is_sm_unique ? " sm-unique" : " not sm-unique") << ", strongness "
            << to_string(cert.strongness) << "\n";
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Random-projection estimation and agreement for Gaussian and Student-t mixtures"};
  app.require_subcommand(1);
  Common c;
  auto common = [&](CLI::App *sub) {
    sub->add_option("--config", c.config, "JSON run configuration");
    sub->add_option("--seed", c.seed, "Random seed");
    sub->add_option("--k", c.k, "Number of projection directions");
    sub->add_option("--out-dir", c.out_dir, "Output directory");
    sub->add_option("--directions", c.directions, "Reuse directions from a CSV file");
  };

  long long n = 0;
  auto *sample_cmd = app.add_subcommand("sample", "Draw a labeled sample from a model document");
  common(sample_cmd);
  sample_cmd->add_option("--n", n, "Sample size");

  std::string data;
  auto *est = app.add_subcommand("estimate", "Estimate mixture parameters from a CSV sample");
  common(est);
  est->add_option("--data", data, "Input CSV");
  est->add_option("--robust", c.robust, "l2 | l1 | mom:<L>");
  est->add_option("--known-weights", c.known_weights, "Weights file (JSON array or CSV)");
  est->add_flag("--whiten", c.whiten, "Not used by estimate");

  std::string xs, ys;
  long long n_synth = 0;
  auto *agree = app.add_subcommand("agree", "Projected KS agreement between two samples or two fits");
  common(agree);
  agree->add_option("--x", xs, "First sample CSV");
  agree->add_option("--y", ys, "Second sample CSV");
  agree->add_option("--mode", c.mode, "pooled | split | bootstrap:<B>");
  agree->add_flag("--whiten", c.whiten, "Pre-whiten each sample");
  agree->add_option("--n-synth", n_synth, "Synthetic draws per model (two-fit mode)");

  std::string scenario;
  int replicates = 0;
  bool plots = false;
  auto *sim = app.add_subcommand("simulate", "Run a seeded simulation study");
  common(sim);
  sim->add_option("--scenario", scenario, "example1 | example2 | example3 | agreement1..3");
  sim->add_option("--replicates", replicates, "Replicates per level");
  sim->add_option("--robust", c.robust, "l2 | l1 | mom:<L>");
  sim->add_option("--mode", c.mode, "pooled | split | bootstrap:<B>");
  sim->add_flag("--whiten", c.whiten, "Pre-whiten samples in agreement scenarios");
  sim->add_flag("--plots", plots, "Write plots/*.svg");

  int d = 0, m = 2;
  bool strong = false;
  auto *cert = app.add_subcommand("certify-directions", "Sample directions and certify sm-uniqueness");
  common(cert);
  cert->add_option("--d", d, "Dimension");
  cert->add_option("--m", m, "Component count for the default k");
  cert->add_flag("--strong", strong, "Also check subsets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*sample_cmd) return cmd_sample(c, n);
    if (*est) return cmd_estimate(c, data);
    if (*agree) return cmd_agree(c, xs, ys, n_synth);
    if (*sim) return cmd_simulate(c, scenario, replicates, plots);
    if (*cert) return cmd_certify(c, d, m, strong);
  } catch (const ConfigError &e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const EstimationFailure &e) {
    std::cerr << "estimation failure: " << e.what() << "\n";
    return kExitEstimation;
  } catch (const std::exception &e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
