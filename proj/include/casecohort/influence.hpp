#pragma once

#include <Eigen/Core>
#include <vector>

#include "casecohort/cox_engine.hpp"

namespace casecohort {

enum class Estimand { Beta, Lambda0Interval, PureRisk };

// Per-subject influence rows, indexed by cohort row. Subjects outside the
// analysis sample (weight 0) have identically zero rows.
struct InfluenceSet {
  Estimand estimand = Estimand::Beta;
  Eigen::MatrixXd rows;  // cohort_n x dim
};

// Shared pieces of the score decomposition at beta-hat, computed once and
// consumed by every influence and calibration routine.
//
// For sample subject i (risk weight r_i, event weight a_i):
//   ldot_i = a_i * delta_i * (X_i - Xbar(T_i))  -  r_i * Z_i
// where Z_i = exp(beta'X_i) * integral over event times in i's risk window of
// (X_i - Xbar(t)) dLambda0(t), so that U(beta-hat) = sum_i ldot_i.
struct InfluenceWork {
  RiskSetSums sums;
  Eigen::VectorXd masses;       // dLambda0 at each event time
  Eigen::VectorXd exp_lp;       // exp(beta'X_i), per sample subject
  Eigen::VectorXi window_lo;    // #event times <= entry_i
  Eigen::VectorXi window_hi;    // #event times <= exit_i
  Eigen::VectorXi event_index;  // index of i's event time, -1 for non-events
  Eigen::MatrixXd Z;            // s x p compensator vectors
  Eigen::MatrixXd score_event;  // s x p event parts
  Eigen::MatrixXd info_inverse; // p x p
};

InfluenceWork influence_work(const CoxFit& fit, const CoxSample& sample,
                             double singular_rel_tol = 1e-12);

// Delta_i(beta-hat) = I(beta-hat)^{-1} ldot_i.
InfluenceSet influence_beta(const InfluenceWork& work, const CoxSample& sample);

// Direct (weights-held-fixed) pieces of the Lambda0(tau1,tau2] influence:
//   direct_i = sum over interval event times of
//              (a_i dN_i(t) - r_i Y_i(t) e^{beta'X_i} dLambda0(t)) / S0(t)
// window_sum_i is i's at-risk integral of dLambda0/S0 over the interval,
// reused by the calibration chain rule.
struct Lambda0DirectParts {
  Eigen::VectorXd direct;      // cohort_n
  Eigen::VectorXd window_sum;  // per sample subject
};

Lambda0DirectParts lambda0_direct_parts(const InfluenceWork& work,
                                        const CoxSample& sample, double tau1,
                                        double tau2);

// Influence on Lambda0(tau1, tau2]: the direct terms above plus the
// beta-propagation (dLambda0/dbeta)' Delta_i(beta) with
// dLambda0/dbeta = -sum_t dLambda0(t) Xbar(t) over the interval.
InfluenceSet influence_lambda0(const InfluenceWork& work, const CoxSample& sample,
                               double tau1, double tau2, const InfluenceSet& beta_infl);

// Delta_i(pi) = (1 - pi) e^{beta'x} (Delta_i(Lambda0) + Lambda0 * x'Delta_i(beta)).
InfluenceSet influence_pure_risk(const CoxFit& fit, double lambda0_interval,
                                 const RiskProfile& profile,
                                 const InfluenceSet& beta_infl,
                                 const InfluenceSet& lambda_infl,
                                 const std::vector<std::string>& covariate_names);

// dLambda0(tau1,tau2]/dbeta (used by influence_lambda0 and calibration).
Eigen::VectorXd lambda0_beta_gradient(const InfluenceWork& work, double tau1, double tau2);

}  // namespace casecohort
