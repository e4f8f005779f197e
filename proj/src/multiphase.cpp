#include "casecohort/multiphase.hpp"

#include <cmath>

#include "casecohort/error.hpp"

namespace casecohort {

Eigen::VectorXd estimate_phase3_weights(const CohortTable& cohort,
                                        const Eigen::VectorXd& phase2_weights,
                                        const Phase3Spec& spec) {
  if (!cohort.has_phase3)
    fail(ErrorCode::InvariantViolation, "estimate_phase3_weights",
         "cohort has no phase-three indicator");
  const int n = cohort.n();
  Eigen::VectorXd w3 = Eigen::VectorXd::Zero(n);

  if (spec.use_provided) {
    if (!cohort.has_weight3)
      fail(ErrorCode::MissingColumn, "estimate_phase3_weights",
           "no weights.phase3 column to pass through");
    for (int i = 0; i < n; ++i) {
      if (!(phase2_weights[i] > 0.0)) continue;
      const double provided = cohort.weight3[i];
      if (std::isnan(provided) || !(provided > 0.0))
        fail(ErrorCode::NegativeOrZeroProvidedWeight, "estimate_phase3_weights",
             "row " + std::to_string(i + 1) +
                 ": provided phase-three weight must be positive");
      w3[i] = provided;
    }
    return w3;
  }

  const int S = static_cast<int>(cohort.stratum3_labels.size());
  std::vector<int> n2(S, 0), n3(S, 0);
  for (int i = 0; i < n; ++i) {
    if (!(phase2_weights[i] > 0.0)) continue;
    n2[cohort.stratum3[i]] += 1;
    if (cohort.in_phase3[i] == 1) n3[cohort.stratum3[i]] += 1;
  }
  for (int s = 0; s < S; ++s)
    if (n2[s] > 0 && n3[s] == 0)
      fail(ErrorCode::EmptyPhase3Stratum, "estimate_phase3_weights",
           "phase-three stratum '" + cohort.stratum3_labels[s] +
               "' has phase-two members but no phase-three members");

  for (int i = 0; i < n; ++i) {
    if (!(phase2_weights[i] > 0.0)) continue;
    const int s = cohort.stratum3[i];
    w3[i] = static_cast<double>(n2[s]) / static_cast<double>(n3[s]);
  }
  return w3;
}

Eigen::VectorXd overall_weights(const CohortTable& cohort, const Eigen::VectorXd& w2,
                                const Eigen::VectorXd& w3) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(cohort.n());
  for (int i = 0; i < cohort.n(); ++i)
    if (cohort.in_phase3[i] == 1 && w2[i] > 0.0) w[i] = w2[i] * w3[i];
  return w;
}

Phase3Variance variance_phase3(const InfluenceSet& infl, const CohortTable& cohort,
                               const StrataSummary& summary, const Eigen::VectorXd& w2,
                               const Eigen::VectorXd& w3, const Eigen::VectorXd& overall,
                               Phase3Spec::Mode mode) {
  return variance_phase3_kernel(infl.rows, cohort.status, cohort.stratum2, summary,
                                cohort.stratum3,
                                static_cast<int>(cohort.stratum3_labels.size()),
                                cohort.n(), w2, w3, overall, mode);
}

Phase3Variance variance_phase3_kernel(const Eigen::MatrixXd& rows,
                                      const Eigen::VectorXi& status,
                                      const std::vector<int>& stratum2,
                                      const StrataSummary& summary,
                                      const std::vector<int>& stratum3, int n_strata3,
                                      int cohort_n, const Eigen::VectorXd& w2,
                                      const Eigen::VectorXd& w3,
                                      const Eigen::VectorXd& overall,
                                      Phase3Spec::Mode mode) {
  const int n = cohort_n;
  const int d = static_cast<int>(rows.cols());

  Eigen::VectorXd diag_weight = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i)
    if (overall[i] > 0.0) diag_weight[i] = w2[i] / w3[i];

  const Eigen::MatrixXd term1 = horvitz_thompson_phase1_term(rows, overall, n);
  const Eigen::MatrixXd term2 = pairwise_sampling_term(rows, stratum2, status,
                                                       overall, summary, &diag_weight);
  const Eigen::MatrixXd base = term1 + term2;

  const int S = n_strata3;
  std::vector<std::vector<int>> members(S);
  bool any_retention_variance = false;
  for (int i = 0; i < n; ++i) {
    if (!(overall[i] > 0.0)) continue;
    members[stratum3[i]].push_back(i);
    if (1.0 - 1.0 / w3[i] != 0.0) any_retention_variance = true;
  }

  Phase3Variance out;
  const bool want_design =
      mode == Phase3Spec::Mode::Design || mode == Phase3Spec::Mode::Both;
  const bool want_estimated =
      mode == Phase3Spec::Mode::Estimated || mode == Phase3Spec::Mode::Both;

  if (!any_retention_variance) {
    // full retention: both variants are exactly the two-phase output
    if (want_design) out.design = base;
    if (want_estimated) out.estimated = base;
    return out;
  }

  if (want_design) {
    Eigen::MatrixXd t3 = Eigen::MatrixXd::Zero(d, d);
    for (int s = 0; s < S; ++s) {
      for (int i : members[s]) {
        const double f = 1.0 - 1.0 / w3[i];
        if (f == 0.0) continue;
        t3 += f * rows.row(i).transpose() * rows.row(i);
      }
    }
    out.design = base + t3;
  }
  if (want_estimated) {
    Eigen::MatrixXd t3 = Eigen::MatrixXd::Zero(d, d);
    for (int s = 0; s < S; ++s) {
      if (members[s].empty()) continue;
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
      for (int i : members[s]) mean += rows.row(i).transpose();
      mean /= static_cast<double>(members[s].size());
      for (int i : members[s]) {
        const double f = 1.0 - 1.0 / w3[i];
        if (f == 0.0) continue;
        const Eigen::VectorXd c = rows.row(i).transpose() - mean;
        t3 += f * c * c.transpose();
      }
    }
    out.estimated = base + t3;
  }
  return out;
}

}  // namespace casecohort
