#include <doctest.h>

#include <cmath>

#include "casecohort/cox_engine.hpp"
#include "casecohort/error.hpp"
#include "casecohort/rng.hpp"
#include "oracles.hpp"

using namespace casecohort;

namespace {

CoxSample raw_sample(const Eigen::MatrixXd& X, const Eigen::VectorXd& entry,
                     const Eigen::VectorXd& exit, const Eigen::VectorXi& status,
                     const Eigen::VectorXd& w) {
  CoxSample s;
  s.X = X;
  s.entry = entry;
  s.exit = exit;
  s.status = status;
  s.risk_weight = w;
  s.event_weight = Eigen::VectorXd::Ones(status.size());
  s.cohort_n = static_cast<int>(status.size());
  for (int i = 0; i < s.cohort_n; ++i) s.cohort_rows.push_back(i);
  for (int k = 0; k < X.cols(); ++k)
    s.covariate_names.push_back("x" + std::to_string(k + 1));
  return s;
}

CoxSample sample_from_cohort(const CohortTable& t) {
  std::vector<std::string> names = t.covariate_names;
  return make_cox_sample(t, Eigen::VectorXd::Ones(t.n()), names);
}

CoxFit fixed_fit(const Eigen::VectorXd& beta) {
  CoxFit fit;
  fit.beta = beta;
  fit.converged = true;
  return fit;
}

}  // namespace

TEST_SUITE("cox_engine") {

TEST_CASE("symmetric two-member risk sets give beta = 0") {
  Eigen::MatrixXd X(4, 1);
  X << 1, 0, 0, 1;
  Eigen::VectorXd entry = Eigen::VectorXd::Zero(4);
  Eigen::VectorXd exit(4);
  exit << 1, 1, 2, 2;
  Eigen::VectorXi status(4);
  status << 1, 0, 1, 0;
  const CoxSample s =
      raw_sample(X, entry, exit, status, Eigen::VectorXd::Ones(4));
  const CoxFit fit = fit_cox(s);
  CHECK(fit.converged);
  CHECK(std::abs(fit.beta[0]) < 1e-9);
}

TEST_CASE("constant covariate raises SingularInformation") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(6, 1);
  Eigen::VectorXd entry = Eigen::VectorXd::Zero(6);
  Eigen::VectorXd exit(6);
  exit << 1, 2, 3, 4, 5, 6;
  Eigen::VectorXi status = Eigen::VectorXi::Ones(6);
  const CoxSample s =
      raw_sample(X, entry, exit, status, Eigen::VectorXd::Ones(6));
  try {
    fit_cox(s);
    FAIL("expected SingularInformation");
  } catch (const CcError& e) {
    CHECK(e.code() == ErrorCode::SingularInformation);
  }
}

TEST_CASE("matches the brute-force partial-likelihood maximizer") {
  Rng rng(11);
  oracles::RandomCohortSpec spec;
  spec.n = 10;
  spec.p = 1;
  const CohortTable t = oracles::random_cohort(rng, spec);
  const CoxSample s = sample_from_cohort(t);
  const CoxFit fit = fit_cox(s);
  const Eigen::VectorXd oracle = oracles::brute_force_beta(s, -10.0, 10.0);
  CHECK(std::abs(fit.beta[0] - oracle[0]) < 1e-6);
  CHECK(std::abs(fit.loglik - oracles::naive_logpl(s, fit.beta)) < 1e-9);
}

TEST_CASE("score vanishes at the solution") {
  Rng rng(12);
  oracles::RandomCohortSpec spec;
  spec.n = 30;
  spec.p = 3;
  spec.left_truncation = true;
  const CohortTable t = oracles::random_cohort(rng, spec);
  const CoxSample s = sample_from_cohort(t);
  const CoxFit fit = fit_cox(s);
  CHECK(fit.score.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("separated data is reported as monotone likelihood") {
  Eigen::MatrixXd X(6, 1);
  X << 1, 1, 1, 0, 0, 0;
  Eigen::VectorXd entry = Eigen::VectorXd::Zero(6);
  Eigen::VectorXd exit(6);
  exit << 1, 2, 3, 10, 11, 12;
  Eigen::VectorXi status(6);
  status << 1, 1, 1, 0, 0, 0;
  const CoxSample s =
      raw_sample(X, entry, exit, status, Eigen::VectorXd::Ones(6));
  // unattainable tolerances: the solver marches along the monotone direction
  // until the divergence bound trips
  CoxOptions walk;
  walk.score_tol = 1e-300;
  walk.step_tol = 1e-300;
  walk.max_iterations = 500;
  try {
    fit_cox(s, walk);
    FAIL("expected MonotoneLikelihood");
  } catch (const CcError& e) {
    CHECK(e.code() == ErrorCode::MonotoneLikelihood);
  }
}

TEST_CASE("baseline mass for a lone at-risk subject is 1/(w exp(beta'x))") {
  Eigen::MatrixXd X(1, 1);
  X << 0.7;
  Eigen::VectorXd entry = Eigen::VectorXd::Zero(1);
  Eigen::VectorXd exit(1);
  exit << 2.0;
  Eigen::VectorXi status(1);
  status << 1;
  Eigen::VectorXd w(1);
  w << 3.25;
  const CoxSample s = raw_sample(X, entry, exit, status, w);
  const Eigen::VectorXd beta = Eigen::VectorXd::Constant(1, 0.4);
  const BaselineHazard hz = baseline_hazard(fixed_fit(beta), s);
  REQUIRE(hz.times.size() == 1);
  CHECK(hz.masses[0] ==
        doctest::Approx(1.0 / (3.25 * std::exp(0.4 * 0.7))).epsilon(1e-14));
}

TEST_CASE("beta = 0 with unit weights reduces to Nelson-Aalen increments") {
  Eigen::MatrixXd X(5, 1);
  X << 0.1, -0.3, 0.5, 0.2, 0.0;
  Eigen::VectorXd entry = Eigen::VectorXd::Zero(5);
  Eigen::VectorXd exit(5);
  exit << 1, 1, 2, 3, 3;
  Eigen::VectorXi status(5);
  status << 1, 1, 0, 1, 0;
  const CoxSample s =
      raw_sample(X, entry, exit, status, Eigen::VectorXd::Ones(5));
  const BaselineHazard hz = baseline_hazard(fixed_fit(Eigen::VectorXd::Zero(1)), s);
  REQUIRE(hz.times.size() == 2);
  CHECK(hz.masses[0] == doctest::Approx(2.0 / 5.0));  // two events, five at risk
  CHECK(hz.masses[1] == doctest::Approx(1.0 / 2.0));  // one event, two at risk
}

TEST_CASE("six-subject masses match a direct risk-set scan") {
  Rng rng(21);
  oracles::RandomCohortSpec spec;
  spec.n = 6;
  spec.p = 1;
  spec.left_truncation = true;
  const CohortTable t = oracles::random_cohort(rng, spec);
  const CoxSample s = sample_from_cohort(t);
  const CoxFit fit = fit_cox(s);
  const BaselineHazard hz = baseline_hazard(fit, s);

  for (int k = 0; k < hz.times.size(); ++k) {
    const double time = hz.times[k];
    double s0 = 0.0;
    double events = 0.0;
    for (int i = 0; i < s.size(); ++i) {
      if (s.entry[i] < time && time <= s.exit[i])
        s0 += s.risk_weight[i] * std::exp(s.X.row(i).dot(fit.beta));
      if (s.status[i] == 1 && s.exit[i] == time) events += 1.0;
    }
    CHECK(hz.masses[k] == doctest::Approx(events / s0).epsilon(1e-12));
  }
}

TEST_CASE("cumulative hazard uses the half-open interval (tau1, tau2]") {
  BaselineHazard hz;
  hz.times = Eigen::VectorXd(3);
  hz.times << 1.0, 2.0, 3.0;
  hz.masses = Eigen::VectorXd(3);
  hz.masses << 0.1, 0.2, 0.4;
  CHECK(cumulative_hazard(hz, 3.5, 9.0) == 0.0);
  CHECK(cumulative_hazard(hz, 0.0, 3.0) == doctest::Approx(0.7));
  // boundary: event at tau1 excluded, at tau2 included
  CHECK(cumulative_hazard(hz, 1.0, 2.0) == doctest::Approx(0.2));
  CHECK_THROWS_AS(cumulative_hazard(hz, 2.0, 2.0), CcError);
}

TEST_CASE("pure risk formula and recomposition") {
  BaselineHazard hz;
  hz.times = Eigen::VectorXd(2);
  hz.times << 1.0, 2.0;
  hz.masses = Eigen::VectorXd(2);
  hz.masses << 0.004, 0.006;
  CoxFit fit = fixed_fit(Eigen::VectorXd::Zero(1));

  RiskProfile profile;
  profile.x = {{"x1", 0.0}};
  profile.tau1 = 2.5;
  profile.tau2 = 3.0;
  CHECK(pure_risk(fit, hz, profile, {"x1"}) == 0.0);  // empty interval

  profile.tau1 = 0.0;
  profile.tau2 = 2.0;
  CHECK(pure_risk(fit, hz, profile, {"x1"}) ==
        doctest::Approx(1.0 - std::exp(-0.01)).epsilon(1e-14));

  // recomposition oracle on a fitted toy cohort
  Rng rng(31);
  oracles::RandomCohortSpec spec;
  spec.n = 15;
  spec.p = 2;
  const CohortTable t = oracles::random_cohort(rng, spec);
  const CoxSample s = sample_from_cohort(t);
  const CoxFit f2 = fit_cox(s);
  const BaselineHazard h2 = baseline_hazard(f2, s);
  RiskProfile p2;
  p2.x = {{"x1", 0.5}, {"x2", 1.0}};
  p2.tau1 = 0.05;
  p2.tau2 = 1.5;
  const double direct = pure_risk(f2, h2, p2, s.covariate_names);
  const Eigen::VectorXd xv = profile_vector(p2, s.covariate_names);
  const double recomposed =
      1.0 - std::exp(-std::exp(f2.beta.dot(xv)) * cumulative_hazard(h2, 0.05, 1.5));
  CHECK(direct == doctest::Approx(recomposed).epsilon(1e-15));
}

TEST_CASE("pure risk is monotone in tau2") {
  Rng rng(41);
  oracles::RandomCohortSpec spec;
  spec.n = 25;
  spec.p = 1;
  const CohortTable t = oracles::random_cohort(rng, spec);
  const CoxSample s = sample_from_cohort(t);
  const CoxFit fit = fit_cox(s);
  const BaselineHazard hz = baseline_hazard(fit, s);
  RiskProfile profile;
  profile.x = {{"x1", 0.3}};
  double prev = -1.0;
  for (double tau2 = 0.2; tau2 < 3.0; tau2 += 0.2) {
    profile.tau1 = 0.1;
    profile.tau2 = tau2;
    const double pi = pure_risk(fit, hz, profile, s.covariate_names);
    CHECK(pi >= prev);
    prev = pi;
  }
}

TEST_CASE("covariate shift moves the baseline, not beta or pure risk") {
  Rng rng(51);
  oracles::RandomCohortSpec spec;
  spec.n = 30;
  spec.p = 2;
  const CohortTable t = oracles::random_cohort(rng, spec);
  const CoxSample s = sample_from_cohort(t);
  const CoxFit fit = fit_cox(s);
  const BaselineHazard hz = baseline_hazard(fit, s);

  const double shift = 1.7;
  CoxSample shifted = s;
  shifted.X.col(0).array() += shift;
  const CoxFit fit2 = fit_cox(shifted);
  const BaselineHazard hz2 = baseline_hazard(fit2, shifted);

  CHECK((fit.beta - fit2.beta).cwiseAbs().maxCoeff() < 1e-7);
  const double factor = std::exp(-fit2.beta[0] * shift);
  for (int k = 0; k < hz.masses.size(); ++k)
    CHECK(hz2.masses[k] == doctest::Approx(hz.masses[k] * factor).epsilon(1e-7));

  RiskProfile profile;
  profile.x = {{"x1", 0.4}, {"x2", 1.0}};
  profile.tau1 = 0.1;
  profile.tau2 = 2.0;
  RiskProfile shifted_profile = profile;
  shifted_profile.x[0].second += shift;
  CHECK(pure_risk(fit, hz, profile, s.covariate_names) ==
        doctest::Approx(pure_risk(fit2, hz2, shifted_profile, s.covariate_names))
            .epsilon(1e-7));
}

TEST_CASE("sweep score matches numerical gradients of the direct-scan loglik") {
  Rng rng(71);
  for (int rep = 0; rep < 4; ++rep) {
    oracles::RandomCohortSpec spec;
    spec.n = 25;
    spec.p = 2;
    spec.left_truncation = rep % 2 == 1;
    spec.with_design = rep >= 2;
    const CohortTable t = oracles::random_cohort(rng, spec);
    const Eigen::VectorXd w = spec.with_design
                                  ? resolve_weights(t, strata_summary(t))
                                  : Eigen::VectorXd::Ones(t.n());
    const CoxSample s = make_cox_sample(t, w, t.covariate_names);

    Eigen::VectorXd beta(2);
    beta << 0.3 * rng.normal(), 0.3 * rng.normal();
    // force exact ties to exercise the Breslow grouping
    CoxSample tied = s;
    for (int i = 2; i < tied.size(); i += 3) tied.exit[i] = tied.exit[i - 1];
    for (int i = 0; i < tied.size(); ++i)
      if (tied.entry[i] >= tied.exit[i]) tied.entry[i] = tied.exit[i] - 0.1;

    const RiskSetSums rs = risk_set_sums(tied, beta);

    // engine loglik composed from the sweep sums equals the direct scan
    double ll = 0.0;
    Eigen::VectorXd score = Eigen::VectorXd::Zero(2);
    for (int i = 0; i < tied.size(); ++i) {
      if (tied.status[i] != 1) continue;
      const int idx = rs.index_of(tied.exit[i]) - 1;
      ll += tied.X.row(i).dot(beta) - std::log(rs.S0[idx]);
      score += (tied.X.row(i) - rs.Xbar.row(idx)).transpose();
    }
    CHECK(std::abs(ll - oracles::naive_logpl(tied, beta)) < 1e-10);

    // and the sweep's S1/S0 reproduce the numerical gradient of the scan
    const double eps = 1e-6;
    for (int k = 0; k < 2; ++k) {
      Eigen::VectorXd up = beta, dn = beta;
      up[k] += eps;
      dn[k] -= eps;
      const double grad =
          (oracles::naive_logpl(tied, up) - oracles::naive_logpl(tied, dn)) /
          (2.0 * eps);
      CHECK(score[k] == doctest::Approx(grad).epsilon(2e-6));
    }
  }
}

TEST_CASE("integer risk weight equals row replication for censored subjects") {
  Rng rng(73);
  oracles::RandomCohortSpec spec;
  spec.n = 20;
  spec.p = 2;
  const CohortTable t = oracles::random_cohort(rng, spec);
  CoxSample s =
      make_cox_sample(t, Eigen::VectorXd::Ones(t.n()), t.covariate_names);

  // weight-2 on every censored subject
  CoxSample weighted = s;
  for (int i = 0; i < weighted.size(); ++i)
    if (weighted.status[i] == 0) weighted.risk_weight[i] = 2.0;

  // the same cohort with censored rows physically duplicated
  std::vector<int> keep;
  for (int i = 0; i < s.size(); ++i) {
    keep.push_back(i);
    if (s.status[i] == 0) keep.push_back(i);
  }
  CoxSample duplicated = s;
  const int m = static_cast<int>(keep.size());
  duplicated.X.resize(m, s.p());
  duplicated.entry.resize(m);
  duplicated.exit.resize(m);
  duplicated.status.resize(m);
  duplicated.risk_weight = Eigen::VectorXd::Ones(m);
  duplicated.event_weight = Eigen::VectorXd::Ones(m);
  duplicated.cohort_rows.clear();
  duplicated.cohort_n = m;
  for (int a = 0; a < m; ++a) {
    duplicated.X.row(a) = s.X.row(keep[a]);
    duplicated.entry[a] = s.entry[keep[a]];
    duplicated.exit[a] = s.exit[keep[a]];
    duplicated.status[a] = s.status[keep[a]];
    duplicated.cohort_rows.push_back(a);
  }

  const CoxFit a = fit_cox(weighted);
  const CoxFit b = fit_cox(duplicated);
  CHECK((a.beta - b.beta).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(std::abs(a.loglik - b.loglik) < 1e-9);
}

TEST_CASE("full-cohort fits match brute force on random cohorts") {
  Rng rng(61);
  for (int rep = 0; rep < 5; ++rep) {
    oracles::RandomCohortSpec spec;
    spec.n = 20 + rep * 5;
    spec.p = 1 + rep % 3;
    const CohortTable t = oracles::random_cohort(rng, spec);
    const CoxSample s = sample_from_cohort(t);
    const CoxFit fit = fit_cox(s);
    if (fit.beta.cwiseAbs().maxCoeff() > 5.0) continue;  // near-separated draw
    const Eigen::VectorXd oracle = oracles::brute_force_beta(s, -10.0, 10.0);
    CHECK((fit.beta - oracle).cwiseAbs().maxCoeff() < 1e-6);
  }
}

}  // TEST_SUITE
