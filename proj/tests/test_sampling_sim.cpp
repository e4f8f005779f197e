#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "casecohort/error.hpp"
#include "casecohort/sampling_sim.hpp"
#include "oracles.hpp"

using namespace casecohort;

namespace {

SimConfig small_config() {
  SimConfig c;
  c.n = 300;
  c.seed = 424243;
  c.replicates = 4;
  c.time_scale = TimeScaleKind::TimeOnStudy;
  c.baseline.rates = {0.5};
  c.censoring_rate = 0.4;
  c.horizon = 4.0;
  CovariateSpec x1;
  x1.name = "x1";
  x1.kind = CovariateSpec::Kind::Bernoulli;
  x1.p = 0.5;
  CovariateSpec x2;
  x2.name = "x2";
  x2.kind = CovariateSpec::Kind::Normal;
  x2.phase2 = true;
  CovariateSpec w;
  w.name = "w";
  w.kind = CovariateSpec::Kind::Proxy;
  w.source = "x2";
  w.noise_sd = 0.5;
  w.binarize = true;
  c.covariates = {x1, x2, w};
  c.model_covariates = {"x1", "x2"};
  c.beta_true = Eigen::Vector2d(0.4, 0.5);
  c.strata_by = "w";
  c.subcohort_m = {{"0", 40}, {"1", 40}};
  c.tau1 = 0.1;
  c.tau2 = 1.5;
  RiskProfile p;
  p.x = {{"x1", 1.0}, {"x2", 0.3}};
  c.profiles = {p};
  return c;
}

}  // namespace

TEST_SUITE("sampling_sim") {

TEST_CASE("generation is deterministic in the seed") {
  const SimConfig c = small_config();
  const CohortTable a = generate_cohort(c, 99);
  const CohortTable b = generate_cohort(c, 99);
  CHECK((a.exit - b.exit).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.covariates - b.covariates).cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < a.n(); ++i) CHECK(a.status[i] == b.status[i]);

  const CohortTable d = generate_cohort(c, 100);
  CHECK((a.exit - d.exit).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("null model with no censoring is exponential (KS)") {
  SimConfig c = small_config();
  c.n = 10000;
  c.beta_true = Eigen::Vector2d(0.0, 0.0);
  c.baseline.rates = {0.7};
  c.censoring_rate = 0.0;
  c.horizon = 1e9;
  const CohortTable t = generate_cohort(c, 7);
  std::vector<double> times;
  for (int i = 0; i < t.n(); ++i) {
    CHECK(t.status[i] == 1);
    times.push_back(t.exit[i]);
  }
  CHECK(oracles::ks_pvalue_exponential(times, 0.7) > 0.01);
}

TEST_CASE("piecewise baseline hazard draws pass the unit-exponential transform") {
  // Lambda0(T) ~ Exp(1) for event times under beta = 0
  SimConfig c = small_config();
  c.n = 10000;
  c.beta_true = Eigen::Vector2d(0.0, 0.0);
  c.baseline.knots = {0.5, 1.5};
  c.baseline.rates = {0.4, 1.2, 0.8};
  c.censoring_rate = 0.0;
  c.horizon = 1e9;

  // round trip of the hazard itself
  for (double t : {0.2, 0.5, 0.9, 1.5, 3.7})
    CHECK(c.baseline.inverse_cumulative(c.baseline.cumulative(t)) ==
          doctest::Approx(t).epsilon(1e-12));

  const CohortTable table = generate_cohort(c, 57);
  std::vector<double> transformed;
  for (int i = 0; i < table.n(); ++i)
    transformed.push_back(c.baseline.cumulative(table.exit[i]));
  CHECK(oracles::ks_pvalue_exponential(transformed, 1.0) > 0.01);
}

TEST_CASE("zero censoring rate leaves status to the horizon alone") {
  SimConfig c = small_config();
  c.censoring_rate = 0.0;
  c.horizon = 1.0;
  const CohortTable t = generate_cohort(c, 17);
  for (int i = 0; i < t.n(); ++i) {
    if (t.status[i] == 0) CHECK(t.exit[i] == 1.0);
    if (t.status[i] == 1) CHECK(t.exit[i] < 1.0);
  }
}

TEST_CASE("left-truncated age-scale draws respect entry < exit <= horizon") {
  SimConfig c = small_config();
  c.time_scale = TimeScaleKind::AgeScale;
  c.entry_low = 50;
  c.entry_high = 70;
  c.horizon = 80;
  c.baseline.rates = {0.01};
  c.censoring_rate = 0.02;
  const CohortTable t = generate_cohort(c, 23);
  for (int i = 0; i < t.n(); ++i) {
    CHECK(t.entry[i] >= 50.0);
    CHECK(t.entry[i] < 70.0);
    CHECK(t.entry[i] < t.exit[i]);
    CHECK(t.exit[i] <= 80.0);
  }
}

TEST_CASE("subcohort sampling draws exactly m per stratum") {
  const SimConfig c = small_config();
  const CohortTable t = generate_cohort(c, 31);
  const CohortTable s = sample_subcohort(t, c.strata_by, c.subcohort_m, 5);
  int m0 = 0, m1 = 0, n0 = 0;
  for (int i = 0; i < s.n(); ++i) {
    if (s.stratum2[i] == 0) ++n0;
    if (s.in_subcohort[i] == 1) (s.stratum2[i] == 0 ? m0 : m1)++;
  }
  CHECK(m0 == 40);
  CHECK(m1 == 40);
  CHECK(n0 > 40);

  CHECK_THROWS_AS(
      sample_subcohort(t, c.strata_by, {{"0", 100000}, {"1", 40}}, 5), CcError);

  // census draw: everyone sampled
  const CohortTable census = sample_subcohort(t, "", {{"all", t.n()}}, 5);
  for (int i = 0; i < census.n(); ++i) CHECK(census.in_subcohort[i] == 1);
}

TEST_CASE("inclusion frequency matches m/n over many draws") {
  // n = 10, m = 3: every subject should be sampled with frequency 0.3
  std::vector<SubjectRecord> records;
  for (int i = 0; i < 10; ++i) {
    SubjectRecord r;
    r.exit = 1.0 + i;
    r.status = i == 0 ? 1 : 0;
    r.covariates = {{"x1", 0.0}};
    records.push_back(std::move(r));
  }
  const CohortTable t =
      CohortTable::from_records(records, TimeScale{TimeScaleKind::TimeOnStudy});
  Eigen::VectorXd freq = Eigen::VectorXd::Zero(10);
  const int reps = 10000;
  for (int r = 0; r < reps; ++r) {
    const CohortTable s = sample_subcohort(t, "", {{"all", 3}}, 1000 + r);
    for (int i = 0; i < 10; ++i)
      if (s.in_subcohort[i] == 1) freq[i] += 1.0;
  }
  freq /= static_cast<double>(reps);
  for (int i = 0; i < 10; ++i) CHECK(std::abs(freq[i] - 0.3) < 0.015);
}

TEST_CASE("phase-three retention is Bernoulli within strata") {
  SimConfig c = small_config();
  c.n = 4000;
  const CohortTable t = generate_cohort(c, 37);
  const CohortTable s = sample_subcohort(t, c.strata_by, {{"0", 800}, {"1", 800}}, 11);
  const CohortTable p3 =
      apply_phase3_retention(s, "w", {{"0", 0.9}, {"1", 0.7}}, 13);
  int kept0 = 0, total0 = 0, kept1 = 0, total1 = 0;
  for (int i = 0; i < p3.n(); ++i) {
    const bool phase2 = p3.status[i] == 1 || p3.in_subcohort[i] == 1;
    if (!phase2) {
      CHECK(p3.in_phase3[i] == 0);
      continue;
    }
    if (p3.stratum3_labels[p3.stratum3[i]] == "0") {
      ++total0;
      kept0 += p3.in_phase3[i];
    } else {
      ++total1;
      kept1 += p3.in_phase3[i];
    }
  }
  CHECK(std::abs(static_cast<double>(kept0) / total0 - 0.9) < 0.04);
  CHECK(std::abs(static_cast<double>(kept1) / total1 - 0.7) < 0.04);
}

TEST_CASE("masking blanks phase-two covariates outside the sample") {
  const SimConfig c = small_config();
  CohortTable t = generate_cohort(c, 41);
  t = sample_subcohort(t, c.strata_by, c.subcohort_m, 43);
  mask_phase2_covariates(t, {"x2"});
  int masked = 0;
  for (int i = 0; i < t.n(); ++i) {
    const bool phase2 = t.status[i] == 1 || t.in_subcohort[i] == 1;
    if (phase2) {
      CHECK(!std::isnan(t.covariate("x2")[i]));
    } else {
      CHECK(std::isnan(t.covariate("x2")[i]));
      ++masked;
    }
  }
  CHECK(masked > 0);
}

TEST_CASE("monte carlo summaries are reproducible and thread-invariant") {
  SimConfig c = small_config();
  c.replicates = 6;
  AnalysisFlavor flavor;
  flavor.kind = AnalysisFlavor::Kind::Design;
  const McSummary a = run_monte_carlo(c, flavor);
  const McSummary b = run_monte_carlo(c, flavor);
  CHECK(a.to_csv() == b.to_csv());

  setenv("CASECOHORT_THREADS", "3", 1);
  const McSummary parallel = run_monte_carlo(c, flavor);
  setenv("CASECOHORT_THREADS", "1", 1);
  CHECK(a.to_csv() == parallel.to_csv());
  CHECK(a.to_json() == parallel.to_json());
}

TEST_CASE("full-cohort monte carlo recovers the true parameters") {
  SimConfig c = small_config();
  c.n = 2000;
  c.replicates = 500;
  c.censoring_rate = 0.7;
  AnalysisFlavor flavor;
  flavor.kind = AnalysisFlavor::Kind::WholeCohort;
  const McSummary summary = run_monte_carlo(c, flavor);
  CHECK(summary.failures == 0);
  for (const auto& name : {"beta.x1", "beta.x2"}) {
    const McParamSummary* p = summary.param(name);
    REQUIRE(p != nullptr);
    const double mcse = std::sqrt(p->empirical_variance / summary.replicates);
    CHECK(std::abs(p->mean_estimate - p->true_value) < 3.0 * mcse);
    // robust variance is the reference for whole-cohort analyses
    const McVarianceSummary* v = p->variance("V.robust");
    REQUIRE(v != nullptr);
    CHECK(v->coverage > 0.90);
  }
}

TEST_CASE("config loader round-trips the documented format") {
  const std::string path =
      (std::filesystem::temp_directory_path() / "cc_sim.json").string();
  std::ofstream out(path);
  out << R"({
    "n": 500, "seed": 7, "replicates": 3,
    "time_scale": "age",
    "entry": {"low": 50, "high": 70},
    "baseline_hazard": {"rates": [0.004], "knots": []},
    "censoring_rate": 0.02,
    "horizon": 80,
    "covariates": [
      {"name": "x1", "kind": "bernoulli", "p": 0.5},
      {"name": "x2", "kind": "normal", "phase2": true},
      {"name": "w", "kind": "proxy", "source": "x2", "noise_sd": 0.5, "threshold": 0}
    ],
    "model": {"covariates": ["x1", "x2"], "beta": [0.3, 0.5]},
    "design": {"strata_by": "w", "m": {"0": 60, "1": 60}},
    "phase3": {"strata_by": "w", "retention": {"0": 0.9, "1": 0.95}},
    "tau1": 55, "tau2": 75,
    "profiles": [{"x1": 1, "x2": -0.7}],
    "analysis": {"kind": "design", "phase3_mode": "both"}
  })";
  out.close();
  const auto [config, flavor] = load_sim_config(path);
  CHECK(config.n == 500);
  CHECK(config.time_scale == TimeScaleKind::AgeScale);
  CHECK(config.phase3);
  CHECK(config.retention.at("1") == 0.95);
  CHECK(config.profiles.size() == 1);
  CHECK(flavor.kind == AnalysisFlavor::Kind::Design);
  CHECK(flavor.phase3_mode == Phase3Spec::Mode::Both);
}

}  // TEST_SUITE
