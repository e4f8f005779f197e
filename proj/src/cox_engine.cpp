#include "casecohort/cox_engine.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "casecohort/error.hpp"

namespace casecohort {

CoxSample make_cox_sample(const CohortTable& cohort,
                          const Eigen::VectorXd& risk_weights,
                          const std::vector<std::string>& covariates,
                          const Eigen::VectorXd* event_weights) {
  if (risk_weights.size() != cohort.n())
    fail(ErrorCode::InvariantViolation, "make_cox_sample",
         "weight vector length does not match cohort");

  std::vector<int> cols;
  for (const auto& name : covariates) {
    const int k = cohort.covariate_index(name);
    if (k < 0)
      fail(ErrorCode::MissingColumn, "make_cox_sample",
           "model covariate '" + name + "' not in cohort");
    cols.push_back(k);
  }

  std::vector<int> rows;
  for (int i = 0; i < cohort.n(); ++i) {
    if (risk_weights[i] > 0.0) {
      rows.push_back(i);
    } else if (cohort.status[i] == 1 && event_weights && (*event_weights)[i] > 0.0) {
      fail(ErrorCode::InvariantViolation, "make_cox_sample",
           "row " + std::to_string(i + 1) +
               ": event subject with positive event weight but zero risk weight");
    }
  }
  if (rows.empty())
    fail(ErrorCode::InvariantViolation, "make_cox_sample", "no positive-weight subjects");

  CoxSample s;
  s.cohort_n = cohort.n();
  s.cohort_rows = rows;
  s.covariate_names = covariates;
  const int m = static_cast<int>(rows.size());
  const int p = static_cast<int>(cols.size());
  s.X.resize(m, p);
  s.entry.resize(m);
  s.exit.resize(m);
  s.status.resize(m);
  s.risk_weight.resize(m);
  s.event_weight.resize(m);

  bool any_event = false;
  for (int a = 0; a < m; ++a) {
    const int i = rows[a];
    for (int b = 0; b < p; ++b) {
      const double v = cohort.covariates(i, cols[b]);
      if (std::isnan(v))
        fail(ErrorCode::InvariantViolation, "make_cox_sample",
             "row " + std::to_string(i + 1) + ": model covariate '" +
                 covariates[b] + "' missing for a positive-weight subject");
      s.X(a, b) = v;
    }
    s.entry[a] = cohort.entry[i];
    s.exit[a] = cohort.exit[i];
    s.status[a] = cohort.status[i];
    s.risk_weight[a] = risk_weights[i];
    s.event_weight[a] = event_weights ? (*event_weights)[i] : 1.0;
    if (s.status[a] == 1 && s.event_weight[a] > 0.0) any_event = true;
  }
  if (!any_event)
    fail(ErrorCode::InvariantViolation, "make_cox_sample",
         "no event with a positive-weight risk set");
  return s;
}

int RiskSetSums::index_of(double t) const {
  const double* begin = times.data();
  const double* end = begin + times.size();
  return static_cast<int>(std::upper_bound(begin, end, t) - begin);
}

namespace {

// Precomputed sweep orders: distinct event times ascending, events grouped,
// subjects ordered for descending-time add (by exit) and remove (by entry).
struct SweepPlan {
  Eigen::VectorXd times;                  // ascending distinct event times
  std::vector<std::vector<int>> events;   // sample indices of dN at each time
  std::vector<int> add_order;             // by exit descending
  std::vector<int> remove_order;          // by entry descending
};

SweepPlan make_plan(const CoxSample& s) {
  SweepPlan plan;
  std::vector<std::pair<double, int>> ev;
  for (int i = 0; i < s.size(); ++i)
    if (s.status[i] == 1 && s.event_weight[i] > 0.0) ev.push_back({s.exit[i], i});
  std::sort(ev.begin(), ev.end());
  std::vector<double> times;
  for (const auto& [t, i] : ev) {
    if (times.empty() || times.back() != t) {
      times.push_back(t);
      plan.events.emplace_back();
    }
    plan.events.back().push_back(i);
  }
  plan.times = Eigen::Map<Eigen::VectorXd>(times.data(), static_cast<int>(times.size()));

  plan.add_order.resize(s.size());
  std::iota(plan.add_order.begin(), plan.add_order.end(), 0);
  std::stable_sort(plan.add_order.begin(), plan.add_order.end(),
                   [&](int a, int b) { return s.exit[a] > s.exit[b]; });
  plan.remove_order.resize(s.size());
  std::iota(plan.remove_order.begin(), plan.remove_order.end(), 0);
  std::stable_sort(plan.remove_order.begin(), plan.remove_order.end(),
                   [&](int a, int b) { return s.entry[a] > s.entry[b]; });
  return plan;
}

// One pass over event times (descending) maintaining S0/S1/S2. Emits the
// log-likelihood, score, information, and optionally per-time S0/S1.
struct SweepResult {
  double loglik = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd information;
  Eigen::VectorXd S0;  // per event time, ascending order
  Eigen::MatrixXd S1;
};

SweepResult sweep(const CoxSample& s, const SweepPlan& plan, const Eigen::VectorXd& beta,
                  bool with_derivatives, bool keep_sums) {
  const int p = s.p();
  const int K = static_cast<int>(plan.times.size());

  Eigen::VectorXd risk = (s.X * beta).array().exp() * s.risk_weight.array();

  SweepResult r;
  r.score = Eigen::VectorXd::Zero(p);
  r.information = Eigen::MatrixXd::Zero(p, p);
  if (keep_sums) {
    r.S0.setZero(K);
    r.S1.setZero(K, p);
  }

  double S0 = 0.0;
  Eigen::VectorXd S1 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd S2 = Eigen::MatrixXd::Zero(p, p);

  size_t a = 0, b = 0;
  for (int k = K - 1; k >= 0; --k) {
    const double t = plan.times[k];
    while (a < plan.add_order.size() && s.exit[plan.add_order[a]] >= t) {
      const int i = plan.add_order[a++];
      S0 += risk[i];
      if (with_derivatives) {
        S1.noalias() += risk[i] * s.X.row(i).transpose();
        S2.selfadjointView<Eigen::Lower>().rankUpdate(s.X.row(i).transpose(), risk[i]);
      }
    }
    while (b < plan.remove_order.size() && s.entry[plan.remove_order[b]] >= t) {
      const int i = plan.remove_order[b++];
      S0 -= risk[i];
      if (with_derivatives) {
        S1.noalias() -= risk[i] * s.X.row(i).transpose();
        S2.selfadjointView<Eigen::Lower>().rankUpdate(s.X.row(i).transpose(), -risk[i]);
      }
    }
    if (!(S0 > 0.0))
      fail(ErrorCode::InvariantViolation, "cox_engine",
           "empty weighted risk set at event time " + std::to_string(t));

    if (keep_sums) {
      r.S0[k] = S0;
      r.S1.row(k) = S1.transpose();
    }

    const double log_s0 = std::log(S0);
    double D = 0.0;
    for (int i : plan.events[k]) {
      const double a_i = s.event_weight[i];
      const double lp = (s.X.row(i) * beta)(0);
      D += a_i;
      r.loglik += a_i * (lp - log_s0);
      if (with_derivatives) r.score.noalias() += a_i * s.X.row(i).transpose();
    }
    if (with_derivatives) {
      const Eigen::VectorXd xbar = S1 / S0;
      r.score.noalias() -= D * xbar;
      Eigen::MatrixXd S2full = S2.selfadjointView<Eigen::Lower>();
      r.information.noalias() += (D / S0) * S2full;
      r.information.noalias() -= D * xbar * xbar.transpose();
    }
  }
  return r;
}

}  // namespace

Eigen::MatrixXd solve_information(const Eigen::MatrixXd& information,
                                  const Eigen::MatrixXd& rhs, double singular_rel_tol) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(information);
  if (ldlt.info() != Eigen::Success)
    fail(ErrorCode::SingularInformation, "cox_engine",
         "information matrix factorization failed");
  const Eigen::VectorXd d = ldlt.vectorD();
  const double dmax = d.maxCoeff();
  if (!(dmax > 0.0) || d.minCoeff() <= singular_rel_tol * dmax)
    fail(ErrorCode::SingularInformation, "cox_engine",
         "information matrix is singular (collinear or constant covariate)");
  return ldlt.solve(rhs);
}

CoxFit fit_cox(const CoxSample& sample, const CoxOptions& options) {
  const int p = sample.p();
  const SweepPlan plan = make_plan(sample);
  if (plan.times.size() == 0)
    fail(ErrorCode::InvariantViolation, "fit_cox", "no events in sample");

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  SweepResult cur = sweep(sample, plan, beta, true, false);

  CoxFit fit;
  fit.converged = cur.score.cwiseAbs().maxCoeff() < options.score_tol;

  // curvature degenerating far from the start means the likelihood is
  // monotone along the walked direction; at beta near 0 it is collinearity
  auto checked_solve = [&](const Eigen::MatrixXd& info, const Eigen::MatrixXd& rhs,
                           const Eigen::VectorXd& at) -> Eigen::MatrixXd {
    try {
      return solve_information(info, rhs, options.singular_rel_tol);
    } catch (const CcError&) {
      if (at.cwiseAbs().maxCoeff() > 0.2 * options.divergence_bound)
        fail(ErrorCode::MonotoneLikelihood, "fit_cox",
             "information degenerated at |beta| = " +
                 std::to_string(at.cwiseAbs().maxCoeff()) +
                 "; likelihood appears monotone");
      throw;
    }
  };

  int iter = 0;
  while (!fit.converged && iter < options.max_iterations) {
    ++iter;
    Eigen::VectorXd step = checked_solve(cur.information, cur.score, beta);

    Eigen::VectorXd candidate = beta + step;
    SweepResult next = sweep(sample, plan, candidate, true, false);
    int halvings = 0;
    while (!(next.loglik >= cur.loglik) && halvings < options.max_step_halvings) {
      ++halvings;
      step *= 0.5;
      candidate = beta + step;
      next = sweep(sample, plan, candidate, true, false);
    }
    if (!std::isfinite(next.loglik))
      fail(ErrorCode::NonConvergence, "fit_cox",
           "log-likelihood not finite after step halving");

    const double step_norm = step.cwiseAbs().maxCoeff();
    beta = candidate;
    cur = next;

    if (beta.cwiseAbs().maxCoeff() > options.divergence_bound)
      fail(ErrorCode::MonotoneLikelihood, "fit_cox",
           "|beta| exceeded " + std::to_string(options.divergence_bound) +
               "; likelihood appears monotone");

    if (cur.score.cwiseAbs().maxCoeff() < options.score_tol ||
        step_norm < options.step_tol) {
      fit.converged = true;
    }
  }

  fit.beta = beta;
  fit.score = cur.score;
  fit.information = cur.information;
  fit.iterations = iter;
  fit.loglik = cur.loglik;
  if (!fit.converged)
    fail(ErrorCode::NonConvergence, "fit_cox",
         "no convergence after " + std::to_string(iter) +
             " iterations; max|U| = " + std::to_string(cur.score.cwiseAbs().maxCoeff()) +
             ", |beta| = " + std::to_string(beta.cwiseAbs().maxCoeff()));
  // the information must be positive definite at the solution even when the
  // score vanished without a Newton step (constant covariate at beta = 0)
  checked_solve(fit.information, Eigen::MatrixXd::Identity(p, p), beta);
  return fit;
}

RiskSetSums risk_set_sums(const CoxSample& sample, const Eigen::VectorXd& beta) {
  const SweepPlan plan = make_plan(sample);
  SweepResult r = sweep(sample, plan, beta, true, true);

  RiskSetSums sums;
  const int K = static_cast<int>(plan.times.size());
  sums.times = plan.times;
  sums.event_weight_sum.setZero(K);
  sums.event_count.setZero(K);
  for (int k = 0; k < K; ++k) {
    for (int i : plan.events[k]) {
      sums.event_weight_sum[k] += sample.event_weight[i];
      sums.event_count[k] += 1.0;
    }
  }
  sums.S0 = r.S0;
  sums.S1 = r.S1;
  sums.Xbar = r.S1.array().colwise() / r.S0.array();
  return sums;
}

BaselineHazard baseline_hazard(const CoxFit& fit, const CoxSample& sample) {
  if (!fit.converged)
    fail(ErrorCode::InvariantViolation, "baseline_hazard", "fit did not converge");
  const RiskSetSums sums = risk_set_sums(sample, fit.beta);
  BaselineHazard hz;
  hz.times = sums.times;
  hz.masses = sums.event_weight_sum.array() / sums.S0.array();
  return hz;
}

double cumulative_hazard(const BaselineHazard& hz, double tau1, double tau2) {
  if (!(tau1 < tau2))
    fail(ErrorCode::InvariantViolation, "cumulative_hazard", "requires tau1 < tau2");
  double sum = 0.0;
  for (int k = 0; k < hz.times.size(); ++k)
    if (hz.times[k] > tau1 && hz.times[k] <= tau2) sum += hz.masses[k];
  return sum;
}

double pure_risk(const CoxFit& fit, const BaselineHazard& hz, const RiskProfile& profile,
                 const std::vector<std::string>& covariate_names) {
  const Eigen::VectorXd x = profile_vector(profile, covariate_names);
  const double lambda = cumulative_hazard(hz, profile.tau1, profile.tau2);
  return 1.0 - std::exp(-std::exp(fit.beta.dot(x)) * lambda);
}

}  // namespace casecohort
