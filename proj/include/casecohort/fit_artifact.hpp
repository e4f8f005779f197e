#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "casecohort/data_model.hpp"
#include "casecohort/multiphase.hpp"

namespace casecohort {

enum class AnalysisVariant { WholeCohort, Design, Calibrated, Phase3 };

// Everything needed to price new covariate profiles without refitting:
// the fitted model, the interval hazard, the per-subject influence blocks,
// and the sampling design metadata for the variance kernels. Persisted as a
// JSON header followed by raw little-endian double blocks.
struct FitArtifact {
  int schema_version = 1;
  AnalysisVariant variant = AnalysisVariant::Design;
  Phase3Spec::Mode phase3_mode = Phase3Spec::Mode::Both;

  std::vector<std::string> covariate_names;
  Eigen::VectorXd beta;
  double tau1 = 0.0, tau2 = 0.0;
  double lambda0 = 0.0;

  int cohort_n = 0;
  Eigen::VectorXi status;
  std::vector<int> stratum2;
  std::vector<std::string> stratum2_labels;
  Eigen::VectorXi strata_n, strata_m;  // empty for whole-cohort analyses
  Eigen::VectorXd design_w2;           // phase-two design weights

  std::vector<int> stratum3;  // phase-three analyses only
  std::vector<std::string> stratum3_labels;
  Eigen::VectorXd w3, overall;

  Eigen::MatrixXd infl_beta;      // cohort_n x p
  Eigen::VectorXd infl_lambda;    // cohort_n
  Eigen::MatrixXd anchor_beta;    // calibrated analyses only
  Eigen::VectorXd anchor_lambda;  // calibrated analyses only

  StrataSummary summary() const;
};

void save_fit_artifact(const FitArtifact& artifact, const std::string& path);
FitArtifact load_fit_artifact(const std::string& path);  // StaleArtifact on mismatch

struct PureRiskRow {
  RiskProfile profile;
  double risk = 0.0;
  std::optional<double> variance;            // absent for whole-cohort analyses
  std::optional<double> variance_design;     // phase-three variants
  std::optional<double> variance_estimated;
  double robust_variance = 0.0;
};

// Pure risk and variances for new profiles on the artifact's (tau1, tau2].
std::vector<PureRiskRow> estimate_pure_risk(const FitArtifact& artifact,
                                            const std::vector<RiskProfile>& profiles);

}  // namespace casecohort
