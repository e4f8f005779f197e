// Independent oracles for the test and acceptance suites. Everything here
// recomputes quantities from first principles (direct risk-set scans, golden
// section search, exhaustive enumeration) without touching the engine's sweep
// or variance kernels.
#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "casecohort/cox_engine.hpp"
#include "casecohort/data_model.hpp"
#include "casecohort/rng.hpp"

namespace casecohort::oracles {

// O(n^2) Breslow log partial likelihood: for every event, S0 by scanning all
// subjects with entry < t <= exit.
double naive_logpl(const CoxSample& sample, const Eigen::VectorXd& beta);

// Cyclic coordinate maximization of naive_logpl with golden-section line
// searches over [lo, hi] per coordinate.
Eigen::VectorXd brute_force_beta(const CoxSample& sample, double lo, double hi,
                                 double tol = 1e-10, int max_cycles = 400);

// Central finite difference of `estimate` under joint perturbation of one
// subject's risk and event weight: rows are d(theta)/d(eps) for each requested
// subject, where weights_i -> weights_i * (1 + eps).
Eigen::MatrixXd fd_influence(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd& risk_w,
                                        const Eigen::VectorXd& event_w)>& estimate,
    const Eigen::VectorXd& risk_w, const Eigen::VectorXd& event_w,
    const std::vector<int>& subjects, double eps = 1e-5);

// All m-subsets of {0..n-1}.
std::vector<std::vector<int>> combinations(int n, int m);

// Two-sided Kolmogorov-Smirnov p-value against Exponential(rate).
double ks_pvalue_exponential(std::vector<double> values, double rate);

struct RandomCohortSpec {
  int n = 20;
  int p = 2;
  double event_fraction = 0.5;  // rough target
  bool left_truncation = false;
  bool with_design = false;  // draw a subcohort and set design weights
  int subcohort_m = 0;       // 0 = n/2
};

CohortTable random_cohort(Rng& rng, const RandomCohortSpec& spec);

}  // namespace casecohort::oracles
