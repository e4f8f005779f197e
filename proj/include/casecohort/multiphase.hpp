#pragma once

#include <Eigen/Core>
#include <optional>

#include "casecohort/data_model.hpp"
#include "casecohort/influence.hpp"
#include "casecohort/variance.hpp"

namespace casecohort {

struct Phase3Spec {
  enum class Mode { Design, Estimated, Both };
  Mode mode = Mode::Both;
  // true: take w3 from the cohort's weights.phase3 column; false: estimate
  // from phase-two / phase-three counts within each phase-three stratum.
  bool use_provided = false;
};

// Per-subject phase-three weights for phase-two members (0 elsewhere).
// Estimated weights are (#phase-two in stratum)/(#phase-three in stratum).
Eigen::VectorXd estimate_phase3_weights(const CohortTable& cohort,
                                        const Eigen::VectorXd& phase2_weights,
                                        const Phase3Spec& spec);

// Overall weight w2 * w3 on phase-three members, 0 elsewhere.
Eigen::VectorXd overall_weights(const CohortTable& cohort, const Eigen::VectorXd& w2,
                                const Eigen::VectorXd& w3);

struct Phase3Variance {
  std::optional<Eigen::MatrixXd> design;
  std::optional<Eigen::MatrixXd> estimated;
};

// Finite-population variance with a third sampling phase. Both variants share
// the phase-one and phase-two terms (overall weights; term-2 diagonal carries
// w2/w3 per member); they differ in the phase-three retention term:
//   design:    sum over phase-three members of (1 - 1/w3) Delta Delta'
//   estimated: the same with Delta centered within each phase-three stratum.
// With full retention (w3 = 1) both variants equal the plain two-phase output
// exactly.
Phase3Variance variance_phase3(const InfluenceSet& infl, const CohortTable& cohort,
                               const StrataSummary& summary, const Eigen::VectorXd& w2,
                               const Eigen::VectorXd& w3, const Eigen::VectorXd& overall,
                               Phase3Spec::Mode mode);

// Table-free form, used when re-pricing profiles from a saved fit.
Phase3Variance variance_phase3_kernel(const Eigen::MatrixXd& rows,
                                      const Eigen::VectorXi& status,
                                      const std::vector<int>& stratum2,
                                      const StrataSummary& summary,
                                      const std::vector<int>& stratum3, int n_strata3,
                                      int cohort_n, const Eigen::VectorXd& w2,
                                      const Eigen::VectorXd& w3,
                                      const Eigen::VectorXd& overall,
                                      Phase3Spec::Mode mode);

}  // namespace casecohort
