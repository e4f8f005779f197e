#include "casecohort/sampling_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "casecohort/csv.hpp"
#include "casecohort/error.hpp"
#include "casecohort/rng.hpp"

namespace casecohort {

double PiecewiseHazard::cumulative(double t) const {
  if (t <= 0.0) return 0.0;
  double h = 0.0;
  double prev = 0.0;
  for (size_t k = 0; k < knots.size(); ++k) {
    if (t <= knots[k]) return h + rates[k] * (t - prev);
    h += rates[k] * (knots[k] - prev);
    prev = knots[k];
  }
  return h + rates.back() * (t - prev);
}

double PiecewiseHazard::inverse_cumulative(double h) const {
  if (h <= 0.0) return 0.0;
  double acc = 0.0;
  double prev = 0.0;
  for (size_t k = 0; k < knots.size(); ++k) {
    const double seg = rates[k] * (knots[k] - prev);
    if (h <= acc + seg) return prev + (h - acc) / rates[k];
    acc += seg;
    prev = knots[k];
  }
  return prev + (h - acc) / rates.back();
}

void SimConfig::validate() const {
  if (n <= 0) fail(ErrorCode::ConfigError, "sim_config", "n must be positive");
  if (replicates <= 0)
    fail(ErrorCode::ConfigError, "sim_config", "replicates must be positive");
  if (baseline.rates.empty() || baseline.rates.size() != baseline.knots.size() + 1)
    fail(ErrorCode::ConfigError, "sim_config",
         "baseline hazard needs rates.size() == knots.size() + 1");
  for (double r : baseline.rates)
    if (!(r > 0.0)) fail(ErrorCode::ConfigError, "sim_config", "hazard rates must be positive");
  if (!(horizon > 0.0))
    fail(ErrorCode::ConfigError, "sim_config", "horizon must be positive");
  if (time_scale == TimeScaleKind::AgeScale) {
    if (!(entry_low < entry_high) || !(entry_high < horizon))
      fail(ErrorCode::ConfigError, "sim_config",
           "age scale needs entry_low < entry_high < horizon");
  }
  if (static_cast<int>(model_covariates.size()) != beta_true.size())
    fail(ErrorCode::ConfigError, "sim_config", "beta size != model covariates");
  for (const auto& [label, pi] : retention)
    if (!(pi > 0.0) || pi > 1.0)
      fail(ErrorCode::ConfigError, "sim_config",
           "retention probability for '" + label + "' must be in (0,1]");
  if (!(tau1 < tau2))
    fail(ErrorCode::ConfigError, "sim_config", "requires tau1 < tau2");
}

double SimConfig::true_pure_risk(const RiskProfile& profile) const {
  Eigen::VectorXd x = profile_vector(profile, model_covariates);
  const double lam = baseline.cumulative(tau2) - baseline.cumulative(tau1);
  return 1.0 - std::exp(-std::exp(beta_true.dot(x)) * lam);
}

CohortTable generate_cohort(const SimConfig& config, uint64_t seed) {
  Rng rng(seed);
  const int n = config.n;
  const int C = static_cast<int>(config.covariates.size());

  CohortTable t;
  t.timescale.kind = config.time_scale;
  t.entry.setZero(n);
  t.exit.resize(n);
  t.status.resize(n);
  t.stratum2.assign(n, 0);
  t.stratum2_labels = {"all"};
  t.stratum3.assign(n, 0);
  t.stratum3_labels = {"all"};
  t.in_subcohort.setZero(n);
  t.in_phase3.setZero(n);
  t.weight2.setConstant(n, std::numeric_limits<double>::quiet_NaN());
  t.weight3.setConstant(n, std::numeric_limits<double>::quiet_NaN());
  t.covariates.resize(n, C);
  for (const auto& spec : config.covariates) t.covariate_names.push_back(spec.name);

  std::vector<int> source_index(C, -1);
  for (int c = 0; c < C; ++c) {
    if (config.covariates[c].kind != CovariateSpec::Kind::Proxy) continue;
    const int s = [&] {
      for (int k = 0; k < C; ++k)
        if (t.covariate_names[k] == config.covariates[c].source) return k;
      fail(ErrorCode::ConfigError, "generate_cohort",
           "proxy source '" + config.covariates[c].source + "' not defined earlier");
    }();
    if (s >= c)
      fail(ErrorCode::ConfigError, "generate_cohort",
           "proxy source must be declared before the proxy");
    source_index[c] = s;
  }

  std::vector<int> model_cols;
  for (const auto& name : config.model_covariates) {
    int idx = -1;
    for (int k = 0; k < C; ++k)
      if (t.covariate_names[k] == name) idx = k;
    if (idx < 0)
      fail(ErrorCode::ConfigError, "generate_cohort",
           "model covariate '" + name + "' has no generator");
    model_cols.push_back(idx);
  }

  for (int i = 0; i < n; ++i) {
    t.ids.push_back(std::to_string(i + 1));
    for (int c = 0; c < C; ++c) {
      const auto& spec = config.covariates[c];
      double v = 0.0;
      switch (spec.kind) {
        case CovariateSpec::Kind::Normal:
          v = spec.mean + spec.sd * rng.normal();
          break;
        case CovariateSpec::Kind::Bernoulli:
          v = rng.bernoulli(spec.p) ? 1.0 : 0.0;
          break;
        case CovariateSpec::Kind::Proxy: {
          v = t.covariates(i, source_index[c]) + spec.noise_sd * rng.normal();
          if (spec.binarize) v = v > spec.threshold ? 1.0 : 0.0;
          break;
        }
      }
      t.covariates(i, c) = v;
    }

    double entry = 0.0;
    if (config.time_scale == TimeScaleKind::AgeScale)
      entry = config.entry_low + (config.entry_high - config.entry_low) * rng.uniform01();
    t.entry[i] = entry;

    double lp = 0.0;
    for (size_t k = 0; k < model_cols.size(); ++k)
      lp += config.beta_true[static_cast<int>(k)] * t.covariates(i, model_cols[k]);
    const double rr = std::exp(lp);

    // left-truncated event time: Lambda0(T) = Lambda0(entry) + E/rr, E ~ Exp(1)
    const double draw = rng.exponential(1.0);
    const double event_time =
        config.baseline.inverse_cumulative(config.baseline.cumulative(entry) + draw / rr);
    double censor_time = config.horizon;
    if (config.censoring_rate > 0.0)
      censor_time = std::min(censor_time, entry + rng.exponential(config.censoring_rate));

    if (event_time <= censor_time) {
      t.exit[i] = event_time;
      t.status[i] = 1;
    } else {
      t.exit[i] = censor_time;
      t.status[i] = 0;
    }
  }
  t.validate();
  return t;
}

namespace {

// stratum labels from a covariate's values (formatted), plus the row index sets
std::pair<std::vector<std::string>, std::vector<std::vector<int>>> label_rows(
    const CohortTable& cohort, const std::string& by) {
  std::vector<std::string> raw(cohort.n(), "all");
  if (!by.empty()) {
    const Eigen::VectorXd col = cohort.covariate(by);
    for (int i = 0; i < cohort.n(); ++i) {
      if (std::isnan(col[i]))
        fail(ErrorCode::InvariantViolation, "sampling",
             "stratification covariate '" + by + "' missing at row " +
                 std::to_string(i + 1));
      raw[i] = format_double(col[i]);
    }
  }
  std::vector<std::string> labels(raw);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  std::vector<std::vector<int>> rows(labels.size());
  for (int i = 0; i < cohort.n(); ++i) {
    const auto it = std::lower_bound(labels.begin(), labels.end(), raw[i]);
    rows[static_cast<size_t>(it - labels.begin())].push_back(i);
  }
  return {std::move(labels), std::move(rows)};
}

}  // namespace

CohortTable sample_subcohort(const CohortTable& cohort, const std::string& strata_by,
                             const std::map<std::string, int>& m, uint64_t seed) {
  CohortTable out = cohort;
  auto [labels, rows] = label_rows(cohort, strata_by);

  out.stratum2_labels = labels;
  for (size_t j = 0; j < labels.size(); ++j)
    for (int i : rows[j]) out.stratum2[i] = static_cast<int>(j);

  out.has_subcohort = true;
  out.in_subcohort.setZero(cohort.n());

  Rng rng(seed);
  for (size_t j = 0; j < labels.size(); ++j) {
    const auto it = m.find(labels[j]);
    if (it == m.end())
      fail(ErrorCode::ConfigError, "sample_subcohort",
           "no subcohort size for stratum '" + labels[j] + "'");
    const int mj = it->second;
    const int nj = static_cast<int>(rows[j].size());
    if (mj > nj)
      fail(ErrorCode::MTooLarge, "sample_subcohort",
           "stratum '" + labels[j] + "': m = " + std::to_string(mj) + " > n = " +
               std::to_string(nj));
    for (int pick : rng.sample_without_replacement(nj, mj))
      out.in_subcohort[rows[j][pick]] = 1;
  }
  return out;
}

CohortTable apply_phase3_retention(const CohortTable& cohort,
                                   const std::string& strata3_by,
                                   const std::map<std::string, double>& retention,
                                   uint64_t seed) {
  if (!cohort.has_subcohort)
    fail(ErrorCode::ConfigError, "apply_phase3_retention",
         "phase-three retention needs a phase-two design");
  CohortTable out = cohort;
  auto [labels, rows] = label_rows(cohort, strata3_by);
  out.stratum3_labels = labels;
  for (size_t j = 0; j < labels.size(); ++j)
    for (int i : rows[j]) out.stratum3[i] = static_cast<int>(j);

  out.has_phase3 = true;
  out.in_phase3.setZero(cohort.n());

  Rng rng(seed);
  // fixed row order so the draw sequence is reproducible
  for (int i = 0; i < cohort.n(); ++i) {
    const bool phase2 = cohort.status[i] == 1 || cohort.in_subcohort[i] == 1;
    if (!phase2) continue;
    const auto it = retention.find(out.stratum3_labels[out.stratum3[i]]);
    if (it == retention.end())
      fail(ErrorCode::ConfigError, "apply_phase3_retention",
           "no retention probability for stratum '" +
               out.stratum3_labels[out.stratum3[i]] + "'");
    if (rng.bernoulli(it->second)) out.in_phase3[i] = 1;
  }
  return out;
}

void mask_phase2_covariates(CohortTable& cohort, const std::vector<std::string>& names) {
  for (const auto& name : names) {
    const int c = cohort.covariate_index(name);
    if (c < 0)
      fail(ErrorCode::MissingColumn, "mask_phase2_covariates", "unknown '" + name + "'");
    for (int i = 0; i < cohort.n(); ++i) {
      const bool phase2 =
          cohort.status[i] == 1 || (cohort.has_subcohort && cohort.in_subcohort[i] == 1);
      const bool keep = cohort.has_phase3 ? cohort.in_phase3[i] == 1 : phase2;
      if (!keep) cohort.covariates(i, c) = std::numeric_limits<double>::quiet_NaN();
    }
  }
}

const McVarianceSummary* McParamSummary::variance(const std::string& label) const {
  for (const auto& v : variances)
    if (v.label == label) return &v;
  return nullptr;
}

const McParamSummary* McSummary::param(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return &p;
  return nullptr;
}

std::string McSummary::to_csv() const {
  std::ostringstream out;
  out << "parameter,true,mean_estimate,empirical_variance";
  std::vector<std::string> labels;
  for (const auto& p : params)
    for (const auto& v : p.variances)
      if (std::find(labels.begin(), labels.end(), v.label) == labels.end())
        labels.push_back(v.label);
  for (const auto& l : labels) out << ",mean_" << l << ",coverage_" << l;
  out << ",mean_ratio_robust_V,frac_robust_ge_V\n";
  for (const auto& p : params) {
    out << p.name << ',' << format_double(p.true_value) << ','
        << format_double(p.mean_estimate) << ',' << format_double(p.empirical_variance);
    for (const auto& l : labels) {
      const auto* v = p.variance(l);
      out << ',' << (v ? format_double(v->mean) : "NA") << ','
          << (v ? format_double(v->coverage) : "NA");
    }
    out << ',' << format_double(p.mean_ratio_robust_V) << ','
        << format_double(p.frac_robust_ge_V) << "\n";
  }
  return out.str();
}

std::string McSummary::to_json() const {
  nlohmann::ordered_json out;
  out["replicates"] = replicates;
  out["failures"] = failures;
  nlohmann::ordered_json params_json = nlohmann::ordered_json::array();
  for (const auto& p : params) {
    nlohmann::ordered_json pj;
    pj["parameter"] = p.name;
    pj["true"] = p.true_value;
    pj["mean_estimate"] = p.mean_estimate;
    pj["empirical_variance"] = p.empirical_variance;
    for (const auto& v : p.variances) {
      pj["mean_" + v.label] = v.mean;
      pj["coverage_" + v.label] = v.coverage;
    }
    if (!std::isnan(p.mean_ratio_robust_V)) {
      pj["mean_ratio_robust_V"] = p.mean_ratio_robust_V;
      pj["frac_robust_ge_V"] = p.frac_robust_ge_V;
    }
    params_json.push_back(std::move(pj));
  }
  out["parameters"] = std::move(params_json);
  return out.dump(2) + "\n";
}

int env_thread_count() {
  const char* env = std::getenv("CASECOHORT_THREADS");
  if (!env) return 1;
  const int t = std::atoi(env);
  return t > 0 ? t : 1;
}

namespace {

struct ReplicateOutcome {
  bool ok = false;
  std::vector<double> estimates;
  // per parameter, per variance label: (value, present)
  std::vector<std::vector<std::pair<std::string, double>>> variances;
};

constexpr double kZ975 = 1.959963984540054;

}  // namespace

McSummary run_monte_carlo(const SimConfig& config, const AnalysisFlavor& flavor) {
  config.validate();

  // parameter layout: betas, then profiles, then Lambda0
  std::vector<std::string> param_names;
  std::vector<double> truths;
  for (size_t k = 0; k < config.model_covariates.size(); ++k) {
    param_names.push_back("beta." + config.model_covariates[k]);
    truths.push_back(config.beta_true[static_cast<int>(k)]);
  }
  for (size_t k = 0; k < config.profiles.size(); ++k) {
    RiskProfile profile = config.profiles[k];
    profile.tau1 = config.tau1;
    profile.tau2 = config.tau2;
    param_names.push_back("pi." + std::to_string(k + 1));
    truths.push_back(config.true_pure_risk(profile));
  }
  param_names.push_back("Lambda0");
  truths.push_back(config.baseline.cumulative(config.tau2) -
                   config.baseline.cumulative(config.tau1));

  const int P = static_cast<int>(param_names.size());
  const int R = config.replicates;
  const bool phase3 = config.phase3 && flavor.use_phase3 &&
                      flavor.kind != AnalysisFlavor::Kind::WholeCohort;

  std::vector<std::string> phase2_names;
  for (const auto& spec : config.covariates)
    if (spec.phase2) phase2_names.push_back(spec.name);

  std::vector<ReplicateOutcome> outcomes(R);

  auto run_replicate = [&](int r) {
    const uint64_t rep_seed =
        Rng::splitmix64(config.seed ^ (0x9E3779B97F4A7C15ull * (static_cast<uint64_t>(r) + 1)));
    ReplicateOutcome& out = outcomes[r];
    try {
      CohortTable cohort = generate_cohort(config, rep_seed);
      if (flavor.kind != AnalysisFlavor::Kind::WholeCohort) {
        cohort = sample_subcohort(cohort, config.strata_by, config.subcohort_m,
                                  Rng::splitmix64(rep_seed ^ 0x1ull));
        if (phase3)
          cohort = apply_phase3_retention(cohort, config.strata3_by, config.retention,
                                          Rng::splitmix64(rep_seed ^ 0x2ull));
        mask_phase2_covariates(cohort, phase2_names);
      }

      AnalysisRequest request;
      for (const auto& name : config.model_covariates) {
        bool is_phase2 = std::find(phase2_names.begin(), phase2_names.end(), name) !=
                         phase2_names.end();
        (is_phase2 ? request.cox_phase2 : request.cox_phase1).push_back(name);
      }
      request.tau1 = config.tau1;
      request.tau2 = config.tau2;
      request.profiles = config.profiles;
      request.calibrated = flavor.kind == AnalysisFlavor::Kind::Calibrated;
      request.aux_method = flavor.aux_method;
      request.predictors = flavor.predictors;
      request.weights_phase3_type = flavor.phase3_mode;

      const AnalysisResult res = run_analysis(cohort, request);

      // model covariate order in the result: phase1 then phase2
      auto result_index = [&](const std::string& name) {
        for (size_t k = 0; k < res.covariate_names.size(); ++k)
          if (res.covariate_names[k] == name) return static_cast<int>(k);
        return -1;
      };

      out.estimates.resize(P);
      out.variances.assign(P, {});
      int pidx = 0;
      for (const auto& name : config.model_covariates) {
        const int k = result_index(name);
        out.estimates[pidx] = res.beta[k];
        auto& vs = out.variances[pidx];
        if (res.beta_var) vs.push_back({"V", (*res.beta_var)(k, k)});
        if (res.beta_var_design) vs.push_back({"V.design", (*res.beta_var_design)(k, k)});
        if (res.beta_var_estimated)
          vs.push_back({"V.estimated", (*res.beta_var_estimated)(k, k)});
        vs.push_back({"V.robust", res.beta_robustvar(k, k)});
        ++pidx;
      }
      for (size_t k = 0; k < config.profiles.size(); ++k) {
        const auto& row = res.pi[k];
        out.estimates[pidx] = row.risk;
        auto& vs = out.variances[pidx];
        if (row.variance) vs.push_back({"V", *row.variance});
        if (row.variance_design) vs.push_back({"V.design", *row.variance_design});
        if (row.variance_estimated) vs.push_back({"V.estimated", *row.variance_estimated});
        vs.push_back({"V.robust", row.robust_variance});
        ++pidx;
      }
      out.estimates[pidx] = res.lambda0;
      auto& vs = out.variances[pidx];
      if (res.lambda0_var) vs.push_back({"V", *res.lambda0_var});
      if (res.lambda0_var_design) vs.push_back({"V.design", *res.lambda0_var_design});
      if (res.lambda0_var_estimated)
        vs.push_back({"V.estimated", *res.lambda0_var_estimated});
      vs.push_back({"V.robust", res.lambda0_robustvar});
      out.ok = true;
    } catch (const CcError&) {
      out.ok = false;
    }
  };

  const int threads = std::min(env_thread_count(), R);
  if (threads <= 1) {
    for (int r = 0; r < R; ++r) run_replicate(r);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (int r = next.fetch_add(1); r < R; r = next.fetch_add(1)) run_replicate(r);
      });
    for (auto& th : pool) th.join();
  }

  McSummary summary;
  summary.replicates = R;
  for (const auto& o : outcomes)
    if (!o.ok) ++summary.failures;
  if (summary.failures > 0.02 * R)
    fail(ErrorCode::NonConvergence, "run_monte_carlo",
         std::to_string(summary.failures) + " of " + std::to_string(R) +
             " replicates failed");

  for (int pidx = 0; pidx < P; ++pidx) {
    McParamSummary ps;
    ps.name = param_names[pidx];
    ps.true_value = truths[pidx];

    std::vector<double> estimates;
    for (const auto& o : outcomes)
      if (o.ok) estimates.push_back(o.estimates[pidx]);
    const double m = static_cast<double>(estimates.size());
    double mean = 0.0;
    for (double e : estimates) mean += e;
    mean /= m;
    double var = 0.0;
    for (double e : estimates) var += (e - mean) * (e - mean);
    var /= (m - 1.0);
    ps.mean_estimate = mean;
    ps.empirical_variance = var;

    std::vector<std::string> labels;
    for (const auto& o : outcomes) {
      if (!o.ok) continue;
      for (const auto& [label, value] : o.variances[pidx])
        if (std::find(labels.begin(), labels.end(), label) == labels.end())
          labels.push_back(label);
      break;
    }
    for (const auto& label : labels) {
      McVarianceSummary vs;
      vs.label = label;
      int covered = 0;
      double vsum = 0.0;
      for (const auto& o : outcomes) {
        if (!o.ok) continue;
        for (const auto& [l, value] : o.variances[pidx]) {
          if (l != label) continue;
          vsum += value;
          if (std::abs(o.estimates[pidx] - truths[pidx]) <=
              kZ975 * std::sqrt(std::max(0.0, value)))
            ++covered;
        }
      }
      vs.mean = vsum / m;
      vs.coverage = covered / m;
      ps.variances.push_back(std::move(vs));
    }

    if (ps.variance("V") && ps.variance("V.robust")) {
      double ratio_sum = 0.0;
      int ge = 0, used = 0;
      for (const auto& o : outcomes) {
        if (!o.ok) continue;
        double v = std::numeric_limits<double>::quiet_NaN();
        double vr = std::numeric_limits<double>::quiet_NaN();
        for (const auto& [l, value] : o.variances[pidx]) {
          if (l == "V") v = value;
          if (l == "V.robust") vr = value;
        }
        if (!(v > 0.0)) continue;
        ratio_sum += vr / v;
        if (vr >= v) ++ge;
        ++used;
      }
      if (used > 0) {
        ps.mean_ratio_robust_V = ratio_sum / used;
        ps.frac_robust_ge_V = static_cast<double>(ge) / used;
      }
    }
    summary.params.push_back(std::move(ps));
  }
  return summary;
}

std::pair<SimConfig, AnalysisFlavor> load_sim_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "load_sim_config", "cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded())
    fail(ErrorCode::ConfigError, "load_sim_config", "invalid JSON: " + path);

  SimConfig c;
  AnalysisFlavor flavor;
  try {
    c.n = j.at("n").get<int>();
    c.seed = j.at("seed").get<uint64_t>();
    c.replicates = j.at("replicates").get<int>();
    c.time_scale = j.value("time_scale", std::string("time")) == "age"
                       ? TimeScaleKind::AgeScale
                       : TimeScaleKind::TimeOnStudy;
    if (j.contains("entry")) {
      c.entry_low = j["entry"].at("low").get<double>();
      c.entry_high = j["entry"].at("high").get<double>();
    }
    c.baseline.rates = j.at("baseline_hazard").at("rates").get<std::vector<double>>();
    c.baseline.knots =
        j.at("baseline_hazard").value("knots", std::vector<double>{});
    c.censoring_rate = j.value("censoring_rate", 0.0);
    c.horizon = j.at("horizon").get<double>();

    for (const auto& cj : j.at("covariates")) {
      CovariateSpec spec;
      spec.name = cj.at("name").get<std::string>();
      const std::string kind = cj.at("kind").get<std::string>();
      if (kind == "normal") {
        spec.kind = CovariateSpec::Kind::Normal;
        spec.mean = cj.value("mean", 0.0);
        spec.sd = cj.value("sd", 1.0);
      } else if (kind == "bernoulli") {
        spec.kind = CovariateSpec::Kind::Bernoulli;
        spec.p = cj.at("p").get<double>();
      } else if (kind == "proxy") {
        spec.kind = CovariateSpec::Kind::Proxy;
        spec.source = cj.at("source").get<std::string>();
        spec.noise_sd = cj.value("noise_sd", 0.0);
        if (cj.contains("threshold")) {
          spec.binarize = true;
          spec.threshold = cj["threshold"].get<double>();
        }
      } else {
        fail(ErrorCode::ConfigError, "load_sim_config", "unknown covariate kind " + kind);
      }
      spec.phase2 = cj.value("phase2", false);
      c.covariates.push_back(std::move(spec));
    }

    c.model_covariates = j.at("model").at("covariates").get<std::vector<std::string>>();
    const auto beta = j.at("model").at("beta").get<std::vector<double>>();
    c.beta_true = Eigen::Map<const Eigen::VectorXd>(beta.data(),
                                                    static_cast<int>(beta.size()));

    if (j.contains("design")) {
      c.strata_by = j["design"].value("strata_by", std::string());
      for (const auto& [label, m] : j["design"].at("m").items())
        c.subcohort_m[label] = m.get<int>();
    }
    if (j.contains("phase3")) {
      c.phase3 = true;
      c.strata3_by = j["phase3"].value("strata_by", std::string());
      for (const auto& [label, pi] : j["phase3"].at("retention").items())
        c.retention[label] = pi.get<double>();
    }
    c.tau1 = j.at("tau1").get<double>();
    c.tau2 = j.at("tau2").get<double>();
    if (j.contains("profiles")) {
      for (const auto& pj : j["profiles"]) {
        RiskProfile profile;
        for (const auto& [name, value] : pj.items())
          profile.x.push_back({name, value.get<double>()});
        profile.tau1 = c.tau1;
        profile.tau2 = c.tau2;
        c.profiles.push_back(std::move(profile));
      }
    }

    if (j.contains("analysis")) {
      const auto& aj = j["analysis"];
      const std::string kind = aj.value("kind", std::string("design"));
      if (kind == "whole_cohort") flavor.kind = AnalysisFlavor::Kind::WholeCohort;
      else if (kind == "design") flavor.kind = AnalysisFlavor::Kind::Design;
      else if (kind == "calibrated") flavor.kind = AnalysisFlavor::Kind::Calibrated;
      else fail(ErrorCode::ConfigError, "load_sim_config", "unknown analysis kind " + kind);
      flavor.aux_method = aj.value("aux_method", std::string("Shin")) == "Breslow"
                              ? AuxMethod::Breslow
                              : AuxMethod::Shin;
      if (aj.contains("predictors"))
        for (const auto& [target, cols] : aj["predictors"].items())
          flavor.predictors[target] = cols.get<std::vector<std::string>>();
      const std::string mode = aj.value("phase3_mode", std::string("both"));
      flavor.phase3_mode = mode == "design"      ? Phase3Spec::Mode::Design
                           : mode == "estimated" ? Phase3Spec::Mode::Estimated
                                                 : Phase3Spec::Mode::Both;
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigError, "load_sim_config", e.what());
  }
  c.validate();
  return {std::move(c), std::move(flavor)};
}

}  // namespace casecohort
