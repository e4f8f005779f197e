#include "casecohort/variance.hpp"

#include <cmath>

#include "casecohort/error.hpp"

namespace casecohort {

PairCoefficients pair_coefficients(const StrataSummary& summary) {
  const int J = summary.strata();
  PairCoefficients c;
  c.w_pair.setZero(J);
  c.sigma_offdiag.setZero(J);
  c.sigma_diag.setZero(J);
  for (int j = 0; j < J; ++j) {
    const double n = summary.cohort_count[j];
    const double m = summary.subcohort_count[j];
    const double f = m / n;
    c.sigma_diag[j] = f * (1.0 - f);
    if (m > 1.0) {
      c.w_pair[j] = (n / m) * ((n - 1.0) / (m - 1.0));
      c.sigma_offdiag[j] = f * ((m - 1.0) / (n - 1.0)) - f * f;
    } else {
      c.w_pair[j] = std::numeric_limits<double>::quiet_NaN();
      c.sigma_offdiag[j] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return c;
}

Eigen::MatrixXd variance_robust(const InfluenceSet& infl) {
  return infl.rows.transpose() * infl.rows;
}

Eigen::MatrixXd pairwise_sampling_term(const Eigen::MatrixXd& rows,
                                       const std::vector<int>& stratum,
                                       const Eigen::VectorXi& is_case,
                                       const Eigen::VectorXd& member_weight,
                                       const StrataSummary& summary,
                                       const Eigen::VectorXd* diag_weight) {
  const int d = static_cast<int>(rows.cols());
  const int J = summary.strata();
  const PairCoefficients coef = pair_coefficients(summary);

  std::vector<int> count(J, 0);
  for (int i = 0; i < rows.rows(); ++i)
    if (member_weight[i] > 0.0 && is_case[i] == 0) ++count[stratum[i]];

  for (int j = 0; j < J; ++j)
    if (count[j] > 0 && summary.subcohort_count[j] < 2)
      fail(ErrorCode::MRequiresAtLeastTwo, "variance",
           "stratum '" + summary.labels[j] +
               "' has m = 1 with sampled non-cases; pair weights are undefined");

  Eigen::MatrixXd term = Eigen::MatrixXd::Zero(d, d);
  std::vector<Eigen::VectorXd> colsum(J, Eigen::VectorXd::Zero(d));
  std::vector<Eigen::MatrixXd> sq(J, Eigen::MatrixXd::Zero(d, d));
  std::vector<Eigen::MatrixXd> diag(J, Eigen::MatrixXd::Zero(d, d));

  for (int i = 0; i < rows.rows(); ++i) {
    if (!(member_weight[i] > 0.0) || is_case[i] != 0) continue;
    const int j = stratum[i];
    const Eigen::VectorXd r = rows.row(i).transpose();
    const Eigen::MatrixXd outer = r * r.transpose();
    colsum[j] += r;
    sq[j] += outer;
    const double dw = diag_weight ? (*diag_weight)[i] : member_weight[i];
    diag[j] += dw * outer;
  }

  for (int j = 0; j < J; ++j) {
    if (count[j] == 0) continue;
    term += coef.w_pair[j] * coef.sigma_offdiag[j] *
            (colsum[j] * colsum[j].transpose() - sq[j]);
    term += coef.sigma_diag[j] * diag[j];
  }
  return term;
}

Eigen::MatrixXd horvitz_thompson_phase1_term(const Eigen::MatrixXd& rows,
                                             const Eigen::VectorXd& weights,
                                             int cohort_n) {
  const int d = static_cast<int>(rows.cols());
  Eigen::MatrixXd term = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < rows.rows(); ++i) {
    if (!(weights[i] > 0.0)) continue;
    const Eigen::VectorXd r = rows.row(i).transpose();
    term += (r * r.transpose()) / weights[i];
  }
  term *= static_cast<double>(cohort_n) / (cohort_n - 1.0);
  return term;
}

PhaseTwoVarianceParts variance_finite_population_parts(const InfluenceSet& infl,
                                                       const CohortTable& cohort,
                                                       const StrataSummary& summary,
                                                       const Eigen::VectorXd& weights) {
  PhaseTwoVarianceParts parts;
  parts.term1 = horvitz_thompson_phase1_term(infl.rows, weights, cohort.n());
  parts.term2 = pairwise_sampling_term(infl.rows, cohort.stratum2, cohort.status,
                                       weights, summary);
  parts.total = parts.term1 + parts.term2;
  return parts;
}

Eigen::MatrixXd variance_finite_population(const InfluenceSet& infl,
                                           const CohortTable& cohort,
                                           const StrataSummary& summary,
                                           const Eigen::VectorXd& weights) {
  return variance_finite_population_parts(infl, cohort, summary, weights).total;
}

PhaseTwoVarianceParts variance_finite_population_naive(const InfluenceSet& infl,
                                                       const CohortTable& cohort,
                                                       const StrataSummary& summary,
                                                       const Eigen::VectorXd& weights) {
  const int n = cohort.n();
  const int d = static_cast<int>(infl.rows.cols());
  const PairCoefficients coef = pair_coefficients(summary);

  PhaseTwoVarianceParts parts;
  parts.term1 = Eigen::MatrixXd::Zero(d, d);
  parts.term2 = Eigen::MatrixXd::Zero(d, d);

  for (int i = 0; i < n; ++i) {
    if (!(weights[i] > 0.0)) continue;
    parts.term1 +=
        infl.rows.row(i).transpose() * infl.rows.row(i) / weights[i];
  }
  parts.term1 *= static_cast<double>(n) / (n - 1.0);

  for (int i = 0; i < n; ++i) {
    if (!(weights[i] > 0.0) || cohort.status[i] != 0) continue;
    for (int k = 0; k < n; ++k) {
      if (!(weights[k] > 0.0) || cohort.status[k] != 0) continue;
      if (cohort.stratum2[i] != cohort.stratum2[k]) continue;
      const int j = cohort.stratum2[i];
      double c;
      if (i == k) {
        c = weights[i] * coef.sigma_diag[j];
      } else {
        c = coef.w_pair[j] * coef.sigma_offdiag[j];
      }
      parts.term2 += c * infl.rows.row(i).transpose() * infl.rows.row(k);
    }
  }
  parts.total = parts.term1 + parts.term2;
  return parts;
}

VarianceReport assemble_report(Estimand estimand, const Eigen::MatrixXd& V,
                               const Eigen::MatrixXd& V_robust, std::string method) {
  VarianceReport report;
  report.estimand = estimand;
  report.V = 0.5 * (V + V.transpose());
  report.V_robust = 0.5 * (V_robust + V_robust.transpose());
  report.method = std::move(method);

  for (const Eigen::MatrixXd* m : {&report.V, &report.V_robust}) {
    const double scale = std::max(1.0, m->cwiseAbs().maxCoeff());
    for (int k = 0; k < m->rows(); ++k) {
      const double v = (*m)(k, k);
      if (v < -1e-12 * scale)
        fail(ErrorCode::NegativeVarianceDiagonal, "assemble_report",
             "variance diagonal entry " + std::to_string(k) + " is negative (" +
                 std::to_string(v) + ")");
    }
  }
  return report;
}

}  // namespace casecohort
