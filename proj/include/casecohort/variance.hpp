#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>

#include "casecohort/data_model.hpp"
#include "casecohort/influence.hpp"

namespace casecohort {

// Pairwise coefficients of the finite-population variance, per stratum:
//   w_pair  = n/m * (n-1)/(m-1)          (off-diagonal pair weight)
//   sigma_offdiag = m/n*(m-1)/(n-1) - (m/n)^2
//   sigma_diag    = m/n*(1 - m/n)
// Both sigmas vanish exactly in the census case m = n.
struct PairCoefficients {
  Eigen::VectorXd w_pair;
  Eigen::VectorXd sigma_offdiag;
  Eigen::VectorXd sigma_diag;
};

PairCoefficients pair_coefficients(const StrataSummary& summary);

// Eq-style robust variance: sum of outer products of the influence rows.
Eigen::MatrixXd variance_robust(const InfluenceSet& infl);

struct PhaseTwoVarianceParts {
  Eigen::MatrixXd term1;  // n/(n-1) * sum_{phase-two} Delta Delta' / w
  Eigen::MatrixXd term2;  // pairwise sampling term over sampled non-cases
  Eigen::MatrixXd total;
};

// Finite-population variance for a design-weight analysis. `weights` are the
// per-subject phase-two weights (0 = not sampled); pairs involving a case
// contribute nothing to term2. The diagonal of term2 carries w_i * sigma_diag
// per sampled non-case, which makes the term an unbiased estimator of the
// SRSWOR design variance (verified by the enumeration tests).
PhaseTwoVarianceParts variance_finite_population_parts(const InfluenceSet& infl,
                                                       const CohortTable& cohort,
                                                       const StrataSummary& summary,
                                                       const Eigen::VectorXd& weights);

Eigen::MatrixXd variance_finite_population(const InfluenceSet& infl,
                                           const CohortTable& cohort,
                                           const StrataSummary& summary,
                                           const Eigen::VectorXd& weights);

// O(n^2) reference implementation of the same estimator, kept as the oracle
// for the rank-structured evaluation.
PhaseTwoVarianceParts variance_finite_population_naive(const InfluenceSet& infl,
                                                       const CohortTable& cohort,
                                                       const StrataSummary& summary,
                                                       const Eigen::VectorXd& weights);

// n/(n-1) * sum_{weights > 0} rows_i rows_i' / w_i  (shared by the design and
// phase-three variance paths).
Eigen::MatrixXd horvitz_thompson_phase1_term(const Eigen::MatrixXd& rows,
                                             const Eigen::VectorXd& weights,
                                             int cohort_n);

// Shared pairwise kernel: for each stratum j,
//   w_pair_j*sigma_off_j*(c_j c_j' - sum_j rows rows') + sigma_diag_j * sum_i d_i rows_i rows_i'
// over the rows with member_weight > 0 and is_case = 0, where d_i is
// diag_weight (defaults to member_weight). Strata with one sampled non-case
// raise MRequiresAtLeastTwo.
Eigen::MatrixXd pairwise_sampling_term(const Eigen::MatrixXd& rows,
                                       const std::vector<int>& stratum,
                                       const Eigen::VectorXi& is_case,
                                       const Eigen::VectorXd& member_weight,
                                       const StrataSummary& summary,
                                       const Eigen::VectorXd* diag_weight = nullptr);

struct VarianceReport {
  Estimand estimand = Estimand::Beta;
  Eigen::MatrixXd V;
  Eigen::MatrixXd V_robust;
  std::string method;
};

// Symmetrizes both inputs and checks diagonal nonnegativity; a diagonal entry
// below -1e-12 * scale raises NegativeVarianceDiagonal.
VarianceReport assemble_report(Estimand estimand, const Eigen::MatrixXd& V,
                               const Eigen::MatrixXd& V_robust, std::string method);

}  // namespace casecohort
