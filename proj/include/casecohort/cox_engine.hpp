#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "casecohort/data_model.hpp"

namespace casecohort {

struct CoxOptions {
  double score_tol = 1e-8;      // convergence: max|U| below this
  double step_tol = 1e-10;      // or Newton step max-norm below this
  int max_iterations = 25;
  int max_step_halvings = 10;
  double divergence_bound = 50.0;  // |beta|_inf beyond this => monotone likelihood
  double singular_rel_tol = 1e-12;
};

// Numeric view of the analysis sample: the positive-risk-weight subjects in
// cohort order. Risk weights enter S0/S1/S2; event weights multiply each dN
// contribution (1 in two-phase analyses, the phase-three weight otherwise).
struct CoxSample {
  Eigen::MatrixXd X;  // s x p
  Eigen::VectorXd entry;
  Eigen::VectorXd exit;
  Eigen::VectorXi status;
  Eigen::VectorXd risk_weight;
  Eigen::VectorXd event_weight;
  std::vector<int> cohort_rows;  // sample index -> cohort row
  int cohort_n = 0;
  std::vector<std::string> covariate_names;

  int size() const { return static_cast<int>(exit.size()); }
  int p() const { return static_cast<int>(X.cols()); }
};

CoxSample make_cox_sample(const CohortTable& cohort,
                          const Eigen::VectorXd& risk_weights,
                          const std::vector<std::string>& covariates,
                          const Eigen::VectorXd* event_weights = nullptr);

struct CoxFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd score;        // U(beta)
  Eigen::MatrixXd information;  // -dU/dbeta at beta
  int iterations = 0;
  bool converged = false;
  double loglik = 0.0;
};

// Weighted risk-set sums at the distinct event times (ascending).
struct RiskSetSums {
  Eigen::VectorXd times;
  Eigen::VectorXd event_weight_sum;  // sum of event weights of the dN at each time
  Eigen::VectorXd event_count;
  Eigen::VectorXd S0;
  Eigen::MatrixXd S1;    // K x p
  Eigen::MatrixXd Xbar;  // S1/S0

  int size() const { return static_cast<int>(times.size()); }
  // number of event times <= t (times are sorted)
  int index_of(double t) const;
};

// Newton-Raphson from beta = 0 with step halving; Breslow ties.
CoxFit fit_cox(const CoxSample& sample, const CoxOptions& options = {});

RiskSetSums risk_set_sums(const CoxSample& sample, const Eigen::VectorXd& beta);

struct BaselineHazard {
  Eigen::VectorXd times;   // strictly increasing event times
  Eigen::VectorXd masses;  // dLambda0 at each time
};

// dLambda0(t) = (sum of event weights at t) / S0(t; beta-hat), same weights as the fit.
BaselineHazard baseline_hazard(const CoxFit& fit, const CoxSample& sample);

// Sum of masses with tau1 < t <= tau2.
double cumulative_hazard(const BaselineHazard& hz, double tau1, double tau2);

// 1 - exp(-exp(beta'x) * Lambda0(tau1, tau2])
double pure_risk(const CoxFit& fit, const BaselineHazard& hz, const RiskProfile& profile,
                 const std::vector<std::string>& covariate_names);

// Solve information * x = b with a pivot check; throws SingularInformation.
Eigen::MatrixXd solve_information(const Eigen::MatrixXd& information,
                                  const Eigen::MatrixXd& rhs, double singular_rel_tol);

}  // namespace casecohort
