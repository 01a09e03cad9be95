#ifndef RPMIX_SIMULATE_HPP
#define RPMIX_SIMULATE_HPP

// Seeded simulation studies: two-component t mixtures with and without
// uniform contamination, a 20-dimensional constrained t mixture, and the
// three agreement scenarios for pairs of Gaussian mixtures.

#include "rpmix/em.hpp"
#include "rpmix/io.hpp"
#include "rpmix/pipeline.hpp"

#include <map>
#include <tuple>

namespace rpmix {

enum class Scenario { Example1, Example2, Example3, Agreement1, Agreement2, Agreement3 };

inline const char *to_string(Scenario s) {
  switch (s) {
  case Scenario::Example1: return "example1";
  case Scenario::Example2: return "example2";
  case Scenario::Example3: return "example3";
  case Scenario::Agreement1: return "agreement1";
  case Scenario::Agreement2: return "agreement2";
  case Scenario::Agreement3: return "agreement3";
  }
  return "unknown";
}

inline Scenario parse_scenario(const std::string &s) {
  for (Scenario c : {Scenario::Example1, Scenario::Example2, Scenario::Example3, Scenario::Agreement1,
                     Scenario::Agreement2, Scenario::Agreement3})
    if (s == to_string(c)) return c;
  throw ConfigError("unknown scenario '" + s + "'");
}

inline bool is_agreement(Scenario s) {
  return s == Scenario::Agreement1 || s == Scenario::Agreement2 || s == Scenario::Agreement3;
}

inline std::vector<double> default_levels(Scenario s) {
  switch (s) {
  case Scenario::Example1: return {0.5, 1.0, 1.5, 2.0};
  case Scenario::Example2: return {0.05, 0.10, 0.15};
  case Scenario::Example3: return {0.25};
  case Scenario::Agreement1: return {0.0, 0.25, 0.5, 0.75, 1.0};
  case Scenario::Agreement2: return {0.0, 0.5, 1.0, 1.5, 2.0};
  case Scenario::Agreement3: return {0.0, 0.125, 0.25, 0.375, 0.5};
  }
  return {};
}

// ---- scenario models ----

/// 0.3 t_nu((0,0), diag(1, 1/2)) + 0.7 t_nu((eta,0), diag(1/2, 1)).
inline MixtureModel two_t_model(double eta, int nu = 4) {
  Vector w(2);
  w << 0.3, 0.7;
  Vector mu1(2), mu2(2);
  mu1 << 0.0, 0.0;
  mu2 << eta, 0.0;
  Matrix s1 = Matrix::Zero(2, 2), s2 = Matrix::Zero(2, 2);
  s1.diagonal() << 1.0, 0.5;
  s2.diagonal() << 0.5, 1.0;
  return MixtureModel(Family::student_t(nu), w, {mu1, mu2}, {s1, s2});
}

/// Constant-coordinate means levels * 1_d with shared compound symmetry.
inline MixtureModel constrained_t_model(Eigen::Index d, int nu, const Vector &weights,
                                        const Vector &levels, double x) {
  std::vector<Vector> means;
  std::vector<Matrix> covs;
  for (Eigen::Index j = 0; j < levels.size(); ++j) {
    means.push_back(Vector::Constant(d, levels[j]));
    covs.push_back(compound_symmetry(d, x));
  }
  return MixtureModel(Family::student_t(nu), weights, means, covs);
}

/// Agreement pair (F1, F2); eta1 shifts, eta2 inflates and eta3 reweights
/// the second component of F2.
inline std::pair<MixtureModel, MixtureModel> agreement_models(double eta1, double eta2, double eta3) {
  Vector mu1(2), mu2(2);
  mu1 << 1.0, -1.0;
  mu2 << -2.0, 2.0;
  Matrix s1(2, 2), s2(2, 2);
  s1 << 1.0, 0.0, 0.0, 2.0;
  s2 << 3.0, 1.0, 1.0, 4.0;
  Vector w1(2), w2(2);
  w1 << 0.5, 0.5;
  w2 << 0.5 + eta3, 0.5 - eta3;
  const MixtureModel f1(Family::gaussian(), w1, {mu1, mu2}, {s1, s2});
  const MixtureModel f2(Family::gaussian(), w2, {mu1, Vector(mu2 + Vector::Constant(2, eta1))},
                        {s1, Matrix((1.0 + eta2) * s2)});
  return {f1, f2};
}

/// n draws from `model` with round(gamma n) rows replaced by uniform points
/// on [lo, hi]^d. Labels are dropped.
inline Matrix contaminated_sample(const MixtureModel &model, std::size_t n, double gamma, double lo,
                                  double hi, std::uint64_t seed) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("contamination fraction must lie in [0, 1)");
  Matrix x = sample(model, n, derive_seed(seed, 0)).data;
  const auto outliers = static_cast<Eigen::Index>(std::llround(gamma * static_cast<double>(n)));
  Rng rng(derive_seed(seed, 1));
  std::uniform_real_distribution<double> u(lo, hi);
  for (Eigen::Index i = x.rows() - outliers; i < x.rows(); ++i)
    for (Eigen::Index c = 0; c < x.cols(); ++c) x(i, c) = u(rng);
  return x;
}

// ---- configuration and output ----

struct SimulationConfig {
  Scenario scenario = Scenario::Example1;
  std::vector<double> levels;  // empty: scenario defaults
  int replicates = 20;
  std::optional<std::size_t> n;
  std::optional<Eigen::Index> k;
  std::uint64_t seed = 1;
  bool baseline = true;
  std::optional<ReconstructionMethod> robust;  // default l1 for examples 1-3, l2 otherwise
  EstimateConfig estimate;                     // grid/optimizer settings; m, family, k, seed are overridden
  AgreementMode mode;
  bool whiten = false;
  unsigned threads = 0;

  std::size_t sample_size() const {
    if (n) return *n;
    switch (scenario) {
    case Scenario::Example1: return 200;
    case Scenario::Example2: return 500;
    case Scenario::Example3: return 200;
    default: return 500;
    }
  }
  Eigen::Index directions() const {
    if (k) return *k;
    switch (scenario) {
    case Scenario::Example1:
    case Scenario::Example2: return 50;
    case Scenario::Example3: return static_cast<Eigen::Index>(required_directions(3, 20));
    default: return 100;
    }
  }
  ReconstructionMethod method() const {
    if (robust) return *robust;
    return is_agreement(scenario) ? ReconstructionMethod::l2() : ReconstructionMethod::l1();
  }

  /// Scenario defaults. The two-component t examples use damped moment
  /// weights, drop poorly split projections from the weight average and
  /// align on weights and locations only.
  static SimulationConfig for_scenario(Scenario s) {
    SimulationConfig c;
    c.scenario = s;
    if (s == Scenario::Example1 || s == Scenario::Example2) {
      c.estimate.damped_weights = true;
      c.estimate.min_centroid_gap = 1.7;
      c.estimate.align.weight_scale = 0.0;
    }
    return c;
  }
};

struct MetricRow {
  std::string scenario;
  double level = 0.0;
  int replicate = 0;
  std::uint64_t seed = 0;
  Eigen::Index k = 0;
  std::size_t n = 0;
  std::string method;
  std::string metric;
  double value = 0.0;
};

inline std::string format_metrics_csv(std::vector<MetricRow> rows) {
  std::sort(rows.begin(), rows.end(), [](const MetricRow &a, const MetricRow &b) {
    return std::tie(a.scenario, a.level, a.replicate, a.method, a.metric) <
           std::tie(b.scenario, b.level, b.replicate, b.method, b.metric);
  });
  std::string out = "scenario,level,replicate,seed,k,n,method,metric,value\n";
  char buf[512];
  for (const auto &r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.6g,%d,%llu,%lld,%zu,%s,%s,%.10g\n", r.scenario.c_str(), r.level,
                  r.replicate, static_cast<unsigned long long>(r.seed), static_cast<long long>(r.k), r.n,
                  r.method.c_str(), r.metric.c_str(), r.value);
    out += buf;
  }
  return out;
}

struct GroupSummary {
  double level = 0.0;
  std::string method;
  std::string metric;
  std::vector<double> values;
};

struct SimulationOutput {
  std::vector<MetricRow> rows;
  std::vector<std::string> failures;

  /// Values grouped by (level, method, metric), levels ascending.
  std::vector<GroupSummary> groups() const {
    std::map<std::tuple<double, std::string, std::string>, std::vector<std::pair<int, double>>> acc;
    for (const auto &r : rows) acc[{r.level, r.method, r.metric}].push_back({r.replicate, r.value});
    std::vector<GroupSummary> out;
    for (auto &[key, vals] : acc) {
      std::sort(vals.begin(), vals.end());
      GroupSummary g{std::get<0>(key), std::get<1>(key), std::get<2>(key), {}};
      for (const auto &v : vals) g.values.push_back(v.second);
      out.push_back(std::move(g));
    }
    return out;
  }

  std::vector<double> medians(const std::string &method, const std::string &metric) const {
    std::vector<double> out;
    for (const auto &g : groups())
      if (g.method == method && g.metric == metric) out.push_back(median_of(g.values));
    return out;
  }
};

namespace detail {

inline void push_errors(std::vector<MetricRow> &rows, const MetricRow &proto, const ParameterErrors &e) {
  auto add = [&](const std::string &metric, double v) {
    MetricRow r = proto;
    r.metric = metric;
    r.value = v;
    rows.push_back(r);
  };
  add("weight_error", e.weight_error);
  for (std::size_t j = 0; j < e.mean_errors.size(); ++j) {
    add("mean_error_" + std::to_string(j + 1), e.mean_errors[j]);
    add("cov_error_" + std::to_string(j + 1), e.cov_errors[j]);
  }
}

inline void push_labels(std::vector<MetricRow> &rows, const MetricRow &proto, const Matrix &confusion, double ari) {
  auto add = [&](const std::string &metric, double v) {
    MetricRow r = proto;
    r.metric = metric;
    r.value = v;
    rows.push_back(r);
  };
  add("ari", ari);
  for (Eigen::Index a = 0; a < confusion.rows(); ++a)
    for (Eigen::Index b = 0; b < confusion.cols(); ++b)
      add("confusion_" + std::to_string(a + 1) + std::to_string(b + 1), confusion(a, b));
  add("confusion_diagonal", confusion.trace());
}

} // namespace detail

/// One replicate; every random stream derives from `rep_seed`.
inline std::vector<MetricRow> run_replicate(const SimulationConfig &cfg, double level, int replicate,
                                            std::uint64_t rep_seed) {
  const std::size_t n = cfg.sample_size();
  const Eigen::Index k = cfg.directions();
  MetricRow proto{to_string(cfg.scenario), level, replicate, rep_seed, k, n, "", "", 0.0};
  std::vector<MetricRow> rows;
  auto add = [&](const std::string &method, const std::string &metric, double v) {
    MetricRow r = proto;
    r.method = method;
    r.metric = metric;
    r.value = v;
    rows.push_back(r);
  };

  if (is_agreement(cfg.scenario)) {
    const double e1 = cfg.scenario == Scenario::Agreement1 ? level : 0.0;
    const double e2 = cfg.scenario == Scenario::Agreement2 ? level : 0.0;
    const double e3 = cfg.scenario == Scenario::Agreement3 ? level : 0.0;
    const auto [f1, f2] = agreement_models(e1, e2, e3);
    const Matrix x = sample(f1, n, derive_seed(rep_seed, 0)).data;
    const Matrix y = sample(f2, n, derive_seed(rep_seed, 1)).data;
    const DirectionSet dirs = sample_directions(2, k, derive_seed(rep_seed, 2));
    const AgreementResult a = agree_two_samples(x, y, dirs, cfg.mode, derive_seed(rep_seed, 3), cfg.whiten);
    add("ks", "d_k", a.d_k);
    add("ks", "ma_k", a.ma_k);
    return rows;
  }

  EstimateConfig ec = cfg.estimate;
  ec.k = k;
  ec.seed = derive_seed(rep_seed, 1);
  ec.robust = cfg.method();
  ec.threads = 1;
  std::optional<MixtureModel> truth;
  LabeledSample data;
  Family em_family = Family::gaussian();
  if (cfg.scenario == Scenario::Example1) {
    truth = two_t_model(level);
    data = sample(*truth, n, derive_seed(rep_seed, 0));
    em_family = truth->family();
  } else if (cfg.scenario == Scenario::Example2) {
    truth = two_t_model(2.0);
    data.data = contaminated_sample(*truth, n, level, 0.0, 4.0, derive_seed(rep_seed, 0));
  } else {
    Vector w(3), lv(3);
    w << 0.3, 0.3, 0.4;
    lv << 0.0, 1.0, 3.0;
    truth = constrained_t_model(20, 2, w, lv, level);
    data = sample(*truth, n, derive_seed(rep_seed, 0));
    ec.constrained = true;
  }
  ec.m = truth->components();
  ec.family = truth->family();

  const EstimateResult res = run_estimate(data.data, ec);
  proto.method = "rp";
  add("rp", "usable_directions", static_cast<double>(res.plan.usable_count()));
  if (cfg.scenario == Scenario::Example3) {
    const auto match = match_components(res.means, truth->means());
    for (std::size_t t = 0; t < truth->components(); ++t)
      add("rp", "level_error_" + std::to_string(t + 1),
          std::abs(res.constrained->levels[match[t]] - truth->means()[t][0]));
    add("rp", "x_error", std::abs(res.constrained->correlation - level));
    add("rp", "weight_error", std::abs(res.weights[match[0]] - truth->weights()[0]));
    const auto pred = relabel(map_allocate(res.model(), data.data), match);
    add("rp", "ari", adjusted_rand_index(*data.labels, pred));
  } else {
    const EstimateMetrics em = evaluate(res, *truth, data);
    detail::push_errors(rows, proto, em.errors);
    if (data.labels) detail::push_labels(rows, proto, em.confusion, em.ari);
  }

  if (cfg.baseline && cfg.scenario != Scenario::Example3) {
    proto.method = "em";
    std::optional<EmResult> maybe;
    try {
      maybe = em_baseline(data.data, truth->components(), em_family, derive_seed(rep_seed, 2));
    } catch (const EstimationFailure &) {
      add("em", "failed", 1.0);
      return rows;
    }
    const EmResult &fit = *maybe;
    const ParameterErrors e =
        parameter_errors(fit.model.weights(), fit.model.means(), fit.model.covariances(), *truth);
    detail::push_errors(rows, proto, e);
    add("em", "monotone", fit.monotone ? 1.0 : 0.0);
    if (data.labels) {
      const auto pred = relabel(map_allocate(fit.model, data.data), e.est_of_truth);
      detail::push_labels(rows, proto, confusion_matrix(*data.labels, pred, truth->components()),
                          adjusted_rand_index(*data.labels, pred));
    }
  }
  return rows;
}

inline std::uint64_t replicate_seed(std::uint64_t seed, std::size_t level_index, int replicate) {
  return derive_seed(seed, level_index, static_cast<std::uint64_t>(replicate));
}

inline SimulationOutput run_simulation(const SimulationConfig &cfg) {
  if (cfg.replicates < 1) throw ConfigError("replicates must be >= 1");
  const std::vector<double> levels = cfg.levels.empty() ? default_levels(cfg.scenario) : cfg.levels;
  if (cfg.scenario == Scenario::Example2)
    for (double g : levels)
      if (!(g >= 0.0 && g < 1.0)) throw ConfigError("contamination fraction must lie in [0, 1)");
  if (cfg.scenario == Scenario::Example3)
    for (double x : levels)
      if (!(x > -1.0 / 19.0 && x < 1.0)) throw ConfigError("x must lie in (-1/(d-1), 1)");
  if (cfg.scenario == Scenario::Agreement3)
    for (double e : levels)
      if (!(e >= -0.5 && e <= 0.5)) throw ConfigError("weight perturbation must lie in [-0.5, 0.5]");
  const std::size_t tasks = levels.size() * static_cast<std::size_t>(cfg.replicates);
  std::vector<std::vector<MetricRow>> slots(tasks);
  std::vector<std::string> errors(tasks);
  parallel_for(tasks, [&](std::size_t t) {
    const std::size_t g = t / static_cast<std::size_t>(cfg.replicates);
    const int i = static_cast<int>(t % static_cast<std::size_t>(cfg.replicates));
    const std::uint64_t s = replicate_seed(cfg.seed, g, i);
    try {
      slots[t] = run_replicate(cfg, levels[g], i, s);
    } catch (const EstimationFailure &e) {
      errors[t] = "level " + format_double(levels[g], 6) + " replicate " + std::to_string(i) + ": " + e.what();
      slots[t] = {MetricRow{to_string(cfg.scenario), levels[g], i, s, cfg.directions(), cfg.sample_size(),
                            "rp", "failed", 1.0}};
    }
  }, cfg.threads);
  SimulationOutput out;
  for (std::size_t t = 0; t < tasks; ++t) {
    out.rows.insert(out.rows.end(), slots[t].begin(), slots[t].end());
    if (!errors[t].empty()) out.failures.push_back(errors[t]);
  }
  return out;
}

inline Json simulation_summary(const SimulationConfig &cfg, const SimulationOutput &out) {
  Json j;
  j["scenario"] = to_string(cfg.scenario);
  j["seed"] = cfg.seed;
  j["replicates"] = cfg.replicates;
  j["n"] = cfg.sample_size();
  j["k"] = cfg.directions();
  if (!is_agreement(cfg.scenario)) j["robust"] = cfg.method().name();
  else j["mode"] = cfg.mode.name();
  Json groups = Json::array();
  for (const auto &g : out.groups()) {
    double sd = 0.0;
    if (g.values.size() > 1) sd = sample_sd(g.values);
    groups.push_back({{"level", g.level},
                      {"method", g.method},
                      {"metric", g.metric},
                      {"count", g.values.size()},
                      {"median", median_of(g.values)},
                      {"mean", mean_of(g.values)},
                      {"sd", sd}});
  }
  j["groups"] = groups;
  if (is_agreement(cfg.scenario)) {
    const std::vector<double> levels = cfg.levels.empty() ? default_levels(cfg.scenario) : cfg.levels;
    for (const char *metric : {"d_k", "ma_k"}) {
      const auto med = out.medians("ks", metric);
      if (med.size() == levels.size() && med.size() >= 2)
        j["spearman"][metric] = spearman(levels, med);
    }
  }
  j["failures"] = out.failures;
  return j;
}

/// Boxplot of one metric per (level, method) group.
inline std::string boxplot_svg(const SimulationOutput &out, const std::string &metric) {
  std::vector<GroupSummary> gs;
  for (auto &g : out.groups())
    if (g.metric == metric) gs.push_back(g);
  const double width = 80.0 * static_cast<double>(std::max<std::size_t>(gs.size(), 1)) + 80.0, height = 320.0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto &g : gs)
    for (double v : g.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!(hi > lo)) {
    lo = std::isfinite(lo) ? lo - 1.0 : 0.0;
    hi = lo + 2.0;
  }
  auto ypos = [&](double v) { return 20.0 + (height - 80.0) * (hi - v) / (hi - lo); };
  std::string s;
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\">\n"
                "<text x=\"10\" y=\"14\" font-size=\"12\">%s</text>\n",
                width, height, metric.c_str());
  s += buf;
  for (std::size_t i = 0; i < gs.size(); ++i) {
    const auto &v = gs[i].values;
    const double x = 60.0 + 80.0 * static_cast<double>(i);
    const double q1 = quantile_of(v, 0.25), q2 = quantile_of(v, 0.5), q3 = quantile_of(v, 0.75);
    const double wlo = *std::min_element(v.begin(), v.end()), whi = *std::max_element(v.begin(), v.end());
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.2f\" x2=\"%.1f\" y2=\"%.2f\" stroke=\"black\"/>\n"
                  "<rect x=\"%.1f\" y=\"%.2f\" width=\"40\" height=\"%.2f\" fill=\"#cde\" stroke=\"black\"/>\n"
                  "<line x1=\"%.1f\" y1=\"%.2f\" x2=\"%.1f\" y2=\"%.2f\" stroke=\"black\" stroke-width=\"2\"/>\n"
                  "<text x=\"%.1f\" y=\"%.0f\" font-size=\"10\">%s %.3g</text>\n",
                  x + 20.0, ypos(whi), x + 20.0, ypos(wlo), x, ypos(q3), ypos(q1) - ypos(q3), x, ypos(q2),
                  x + 40.0, ypos(q2), x - 5.0, height - 30.0, gs[i].method.c_str(), gs[i].level);
    s += buf;
  }
  std::snprintf(buf, sizeof buf, "<text x=\"4\" y=\"%.0f\" font-size=\"10\">%.3g</text>\n"
                "<text x=\"4\" y=\"%.0f\" font-size=\"10\">%.3g</text>\n</svg>\n",
                ypos(hi) + 4.0, hi, ypos(lo), lo);
  s += buf;
  return s;
}

} // namespace rpmix

#endif // RPMIX_SIMULATE_HPP
