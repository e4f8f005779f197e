#include <doctest.h>

#include <cmath>

#include "casecohort/error.hpp"
#include "casecohort/influence.hpp"
#include "casecohort/rng.hpp"
#include "oracles.hpp"

using namespace casecohort;

namespace {

const CoxOptions kTight = [] {
  CoxOptions o;
  o.score_tol = 1e-12;
  o.step_tol = 1e-14;
  o.max_iterations = 60;
  return o;
}();

struct Pipeline {
  const CohortTable& cohort;
  std::vector<std::string> names;
  double tau1, tau2;
  RiskProfile profile;

  // stacked estimate [beta; lambda0; pi] under the given weights
  Eigen::VectorXd operator()(const Eigen::VectorXd& risk_w,
                             const Eigen::VectorXd& event_w) const {
    const CoxSample s = make_cox_sample(cohort, risk_w, names, &event_w);
    const CoxFit fit = fit_cox(s, kTight);
    const BaselineHazard hz = baseline_hazard(fit, s);
    Eigen::VectorXd out(fit.beta.size() + 2);
    out.head(fit.beta.size()) = fit.beta;
    out[fit.beta.size()] = cumulative_hazard(hz, tau1, tau2);
    RiskProfile p = profile;
    p.tau1 = tau1;
    p.tau2 = tau2;
    out[fit.beta.size() + 1] = pure_risk(fit, hz, p, names);
    return out;
  }
};

double rel_err(double got, double want, double scale) {
  return std::abs(got - want) / std::max({std::abs(want), 1e-8 * scale, 1e-12});
}

}  // namespace

TEST_SUITE("influence") {

TEST_CASE("full-cohort beta influences sum to zero") {
  Rng rng(101);
  oracles::RandomCohortSpec spec;
  spec.n = 35;
  spec.p = 3;
  spec.left_truncation = true;
  const CohortTable t = oracles::random_cohort(rng, spec);
  const CoxSample s =
      make_cox_sample(t, Eigen::VectorXd::Ones(t.n()), t.covariate_names);
  const CoxFit fit = fit_cox(s, kTight);
  const InfluenceWork work = influence_work(fit, s);
  const InfluenceSet infl = influence_beta(work, s);
  CHECK(infl.rows.colwise().sum().cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("subject outside every event risk window has a zero row") {
  // one early censored subject, events later among the rest
  Eigen::MatrixXd X(4, 1);
  X << 0.5, 1.0, 0.0, 1.5;
  Eigen::VectorXd entry = Eigen::VectorXd::Zero(4);
  Eigen::VectorXd exit(4);
  exit << 0.5, 2.0, 3.0, 4.0;
  Eigen::VectorXi status(4);
  status << 0, 1, 1, 0;
  CoxSample s;
  s.X = X;
  s.entry = entry;
  s.exit = exit;
  s.status = status;
  s.risk_weight = Eigen::VectorXd::Ones(4);
  s.event_weight = Eigen::VectorXd::Ones(4);
  s.cohort_n = 4;
  s.cohort_rows = {0, 1, 2, 3};
  s.covariate_names = {"x1"};

  const CoxFit fit = fit_cox(s, kTight);
  const InfluenceWork work = influence_work(fit, s);
  const InfluenceSet infl = influence_beta(work, s);
  CHECK(infl.rows.row(0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero-weight subjects carry zero influence in design analyses") {
  Rng rng(102);
  oracles::RandomCohortSpec spec;
  spec.n = 24;
  spec.p = 2;
  spec.with_design = true;
  const CohortTable t = oracles::random_cohort(rng, spec);
  const Eigen::VectorXd w = resolve_weights(t, strata_summary(t));
  const CoxSample s = make_cox_sample(t, w, t.covariate_names);
  const CoxFit fit = fit_cox(s, kTight);
  const InfluenceWork work = influence_work(fit, s);
  const InfluenceSet ib = influence_beta(work, s);
  const InfluenceSet il = influence_lambda0(work, s, 0.1, 2.0, ib);
  int zeros = 0;
  for (int i = 0; i < t.n(); ++i) {
    if (w[i] > 0.0) continue;
    ++zeros;
    CHECK(ib.rows.row(i).cwiseAbs().maxCoeff() == 0.0);
    CHECK(il.rows(i, 0) == 0.0);
  }
  CHECK(zeros > 0);
}

TEST_CASE("weighted beta influences sum to near zero and match finite differences") {
  Rng rng(103);
  for (int rep = 0; rep < 4; ++rep) {
    oracles::RandomCohortSpec spec;
    spec.n = 18 + 3 * rep;
    spec.p = 1 + rep % 2;
    spec.with_design = rep % 2 == 1;
    spec.left_truncation = rep == 2;
    const CohortTable t = oracles::random_cohort(rng, spec);
    const Eigen::VectorXd w =
        spec.with_design ? resolve_weights(t, strata_summary(t))
                         : Eigen::VectorXd::Ones(t.n());
    Eigen::VectorXd ev = Eigen::VectorXd::Ones(t.n());

    const CoxSample s = make_cox_sample(t, w, t.covariate_names, &ev);
    const CoxFit fit = fit_cox(s, kTight);
    const InfluenceWork work = influence_work(fit, s);
    const InfluenceSet ib = influence_beta(work, s);
    const InfluenceSet il = influence_lambda0(work, s, 0.05, 1.5, ib);

    RiskProfile profile;
    for (const auto& name : t.covariate_names) profile.x.push_back({name, 0.4});
    const double lambda0 = [&] {
      const BaselineHazard hz = baseline_hazard(fit, s);
      return cumulative_hazard(hz, 0.05, 1.5);
    }();
    const InfluenceSet ip =
        influence_pure_risk(fit, lambda0, profile, ib, il, t.covariate_names);

    Pipeline estimate{t, t.covariate_names, 0.05, 1.5, profile};
    std::vector<int> subjects;
    for (int i = 0; i < t.n() && subjects.size() < 6; ++i)
      if (w[i] > 0.0) subjects.push_back(i);
    const Eigen::MatrixXd fd = oracles::fd_influence(estimate, w, ev, subjects);

    const double beta_scale = ib.rows.cwiseAbs().maxCoeff();
    const double lam_scale = il.rows.cwiseAbs().maxCoeff();
    const double pi_scale = ip.rows.cwiseAbs().maxCoeff();
    for (size_t a = 0; a < subjects.size(); ++a) {
      const int i = subjects[a];
      for (int k = 0; k < ib.rows.cols(); ++k)
        CHECK(rel_err(ib.rows(i, k), fd(a, k), beta_scale) < 1e-3);
      CHECK(rel_err(il.rows(i, 0), fd(a, ib.rows.cols()), lam_scale) < 1e-3);
      CHECK(rel_err(ip.rows(i, 0), fd(a, ib.rows.cols() + 1), pi_scale) < 1e-3);
    }
  }
}

TEST_CASE("interval without events has zero lambda influence") {
  Rng rng(104);
  oracles::RandomCohortSpec spec;
  spec.n = 12;
  spec.p = 1;
  const CohortTable t = oracles::random_cohort(rng, spec);
  const CoxSample s =
      make_cox_sample(t, Eigen::VectorXd::Ones(t.n()), t.covariate_names);
  const CoxFit fit = fit_cox(s, kTight);
  const InfluenceWork work = influence_work(fit, s);
  const InfluenceSet ib = influence_beta(work, s);
  const double beyond = s.exit.maxCoeff() + 1.0;
  const InfluenceSet il = influence_lambda0(work, s, beyond, beyond + 1.0, ib);
  CHECK(il.rows.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lambda influence pieces match a direct risk-set scan") {
  // four subjects, one event inside the interval, one outside
  Eigen::MatrixXd X(4, 1);
  X << 1.0, 0.0, 0.0, 1.0;
  Eigen::VectorXd entry = Eigen::VectorXd::Zero(4);
  Eigen::VectorXd exit(4);
  exit << 1.0, 2.0, 3.0, 3.0;
  Eigen::VectorXi status(4);
  status << 1, 1, 0, 0;
  Eigen::VectorXd w(4);
  w << 1.0, 2.0, 1.5, 1.0;
  CoxSample s;
  s.X = X;
  s.entry = entry;
  s.exit = exit;
  s.status = status;
  s.risk_weight = w;
  s.event_weight = Eigen::VectorXd::Ones(4);
  s.cohort_n = 4;
  s.cohort_rows = {0, 1, 2, 3};
  s.covariate_names = {"x1"};

  const CoxFit fit = fit_cox(s, kTight);
  const InfluenceWork work = influence_work(fit, s);
  const InfluenceSet ib = influence_beta(work, s);
  const double tau1 = 0.5, tau2 = 1.5;  // only the t=1 event inside
  const InfluenceSet il = influence_lambda0(work, s, tau1, tau2, ib);

  // direct scan at t = 1
  double S0 = 0.0, S1 = 0.0;
  for (int i = 0; i < 4; ++i) {
    if (!(entry[i] < 1.0 && 1.0 <= exit[i])) continue;
    const double r = w[i] * std::exp(fit.beta[0] * X(i, 0));
    S0 += r;
    S1 += r * X(i, 0);
  }
  const double mass = 1.0 / S0;
  const double dbeta = -mass * (S1 / S0);
  for (int i = 0; i < 4; ++i) {
    const bool at_risk = entry[i] < 1.0 && 1.0 <= exit[i];
    double expect = 0.0;
    if (status[i] == 1 && exit[i] == 1.0) expect += 1.0 / S0;
    if (at_risk) expect -= w[i] * std::exp(fit.beta[0] * X(i, 0)) * mass / S0;
    expect += dbeta * ib.rows(i, 0);
    CHECK(il.rows(i, 0) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("pure-risk influence reductions") {
  Rng rng(105);
  oracles::RandomCohortSpec spec;
  spec.n = 16;
  spec.p = 2;
  const CohortTable t = oracles::random_cohort(rng, spec);
  const CoxSample s =
      make_cox_sample(t, Eigen::VectorXd::Ones(t.n()), t.covariate_names);
  const CoxFit fit = fit_cox(s, kTight);
  const InfluenceWork work = influence_work(fit, s);
  const InfluenceSet ib = influence_beta(work, s);
  const InfluenceSet il = influence_lambda0(work, s, 0.1, 1.0, ib);

  RiskProfile zero;
  zero.x = {{"x1", 0.0}, {"x2", 0.0}};

  SUBCASE("empty interval gives identically zero rows") {
    const double beyond = s.exit.maxCoeff() + 1.0;
    const InfluenceSet il0 = influence_lambda0(work, s, beyond, beyond + 1, ib);
    const InfluenceSet ip =
        influence_pure_risk(fit, 0.0, zero, ib, il0, t.covariate_names);
    CHECK(ip.rows.cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("x = 0 reduces to (1 - pi) * lambda influence") {
    const double lambda0 = [&] {
      const BaselineHazard hz = baseline_hazard(fit, s);
      return cumulative_hazard(hz, 0.1, 1.0);
    }();
    const InfluenceSet ip =
        influence_pure_risk(fit, lambda0, zero, ib, il, t.covariate_names);
    const double pi = 1.0 - std::exp(-lambda0);
    for (int i = 0; i < t.n(); ++i)
      CHECK(ip.rows(i, 0) ==
            doctest::Approx((1.0 - pi) * il.rows(i, 0)).epsilon(1e-13));
  }
}

}  // TEST_SUITE
