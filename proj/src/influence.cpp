#include "casecohort/influence.hpp"

#include <cmath>

#include "casecohort/error.hpp"

namespace casecohort {

InfluenceWork influence_work(const CoxFit& fit, const CoxSample& sample,
                             double singular_rel_tol) {
  if (!fit.converged)
    fail(ErrorCode::InvariantViolation, "influence_work", "fit did not converge");

  InfluenceWork w;
  w.sums = risk_set_sums(sample, fit.beta);
  const int K = w.sums.size();
  const int s = sample.size();
  const int p = sample.p();

  w.masses = w.sums.event_weight_sum.array() / w.sums.S0.array();
  w.exp_lp = (sample.X * fit.beta).array().exp();

  // prefix sums over event times: G0_k = sum_{l<=k} mass_l,
  // G1_k = sum_{l<=k} mass_l * Xbar_l  (index 0 = empty prefix)
  Eigen::VectorXd G0 = Eigen::VectorXd::Zero(K + 1);
  Eigen::MatrixXd G1 = Eigen::MatrixXd::Zero(K + 1, p);
  for (int k = 0; k < K; ++k) {
    G0[k + 1] = G0[k] + w.masses[k];
    G1.row(k + 1) = G1.row(k) + w.masses[k] * w.sums.Xbar.row(k);
  }

  w.window_lo.resize(s);
  w.window_hi.resize(s);
  w.event_index.setConstant(s, -1);
  w.Z.setZero(s, p);
  w.score_event.setZero(s, p);

  for (int i = 0; i < s; ++i) {
    const int lo = w.sums.index_of(sample.entry[i]);
    const int hi = w.sums.index_of(sample.exit[i]);
    w.window_lo[i] = lo;
    w.window_hi[i] = hi;
    if (hi > lo) {
      w.Z.row(i) = w.exp_lp[i] *
                   ((G0[hi] - G0[lo]) * sample.X.row(i) - (G1.row(hi) - G1.row(lo)));
    }
    if (sample.status[i] == 1 && sample.event_weight[i] > 0.0) {
      const int k = hi - 1;  // its event time is the last one <= exit_i
      if (k < 0 || w.sums.times[k] != sample.exit[i])
        fail(ErrorCode::InvariantViolation, "influence_work", "event time not indexed");
      w.event_index[i] = k;
      w.score_event.row(i) =
          sample.event_weight[i] * (sample.X.row(i) - w.sums.Xbar.row(k));
    }
  }

  w.info_inverse = solve_information(
      fit.information, Eigen::MatrixXd::Identity(p, p), singular_rel_tol);
  return w;
}

InfluenceSet influence_beta(const InfluenceWork& work, const CoxSample& sample) {
  InfluenceSet out;
  out.estimand = Estimand::Beta;
  out.rows.setZero(sample.cohort_n, sample.p());
  for (int i = 0; i < sample.size(); ++i) {
    const Eigen::VectorXd ldot =
        (work.score_event.row(i) - sample.risk_weight[i] * work.Z.row(i)).transpose();
    out.rows.row(sample.cohort_rows[i]) = (work.info_inverse * ldot).transpose();
  }
  return out;
}

Eigen::VectorXd lambda0_beta_gradient(const InfluenceWork& work, double tau1, double tau2) {
  const int klo = work.sums.index_of(tau1);
  const int khi = work.sums.index_of(tau2);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(work.sums.Xbar.cols());
  for (int k = klo; k < khi; ++k) g -= work.masses[k] * work.sums.Xbar.row(k).transpose();
  return g;
}

Lambda0DirectParts lambda0_direct_parts(const InfluenceWork& work,
                                        const CoxSample& sample, double tau1,
                                        double tau2) {
  if (!(tau1 < tau2))
    fail(ErrorCode::InvariantViolation, "influence_lambda0", "requires tau1 < tau2");
  const int K = work.sums.size();
  const int klo = work.sums.index_of(tau1);
  const int khi = work.sums.index_of(tau2);

  // prefix of mass/S0 over all event times; the interval restriction is an
  // index-range intersection
  Eigen::VectorXd H = Eigen::VectorXd::Zero(K + 1);
  for (int k = 0; k < K; ++k) H[k + 1] = H[k] + work.masses[k] / work.sums.S0[k];

  Lambda0DirectParts parts;
  parts.direct.setZero(sample.cohort_n);
  parts.window_sum.setZero(sample.size());
  for (int i = 0; i < sample.size(); ++i) {
    const int lo = std::max(work.window_lo[i], klo);
    const int hi = std::min(work.window_hi[i], khi);
    double value = 0.0;
    if (hi > lo) {
      parts.window_sum[i] = H[hi] - H[lo];
      value -= sample.risk_weight[i] * work.exp_lp[i] * parts.window_sum[i];
    }
    const int ke = work.event_index[i];
    if (ke >= 0 && ke >= klo && ke < khi)
      value += sample.event_weight[i] / work.sums.S0[ke];
    parts.direct[sample.cohort_rows[i]] = value;
  }
  return parts;
}

InfluenceSet influence_lambda0(const InfluenceWork& work, const CoxSample& sample,
                               double tau1, double tau2, const InfluenceSet& beta_infl) {
  const Lambda0DirectParts parts = lambda0_direct_parts(work, sample, tau1, tau2);
  const Eigen::VectorXd dbeta = lambda0_beta_gradient(work, tau1, tau2);

  InfluenceSet out;
  out.estimand = Estimand::Lambda0Interval;
  out.rows = parts.direct + beta_infl.rows * dbeta;
  return out;
}

InfluenceSet influence_pure_risk(const CoxFit& fit, double lambda0_interval,
                                 const RiskProfile& profile,
                                 const InfluenceSet& beta_infl,
                                 const InfluenceSet& lambda_infl,
                                 const std::vector<std::string>& covariate_names) {
  const Eigen::VectorXd x = profile_vector(profile, covariate_names);
  const double rr = std::exp(fit.beta.dot(x));
  const double pi = 1.0 - std::exp(-rr * lambda0_interval);

  InfluenceSet out;
  out.estimand = Estimand::PureRisk;
  out.rows = (1.0 - pi) * rr *
             (lambda_infl.rows + lambda0_interval * (beta_infl.rows * x));
  return out;
}

}  // namespace casecohort
