#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "casecohort/calibration.hpp"
#include "casecohort/cox_engine.hpp"
#include "casecohort/data_model.hpp"
#include "casecohort/fit_artifact.hpp"
#include "casecohort/multiphase.hpp"

namespace casecohort {

// Mirrors the argument surface of the analysis front end: which covariates
// are phase-one/phase-two, the sampling design columns already loaded into the
// CohortTable, calibration controls, and the pure-risk interval/profiles.
struct AnalysisRequest {
  std::vector<std::string> cox_phase1;
  std::vector<std::string> cox_phase2;

  std::map<std::string, int> subcohort_strata_counts;

  bool calibrated = false;
  bool predict = true;
  std::map<std::string, std::string> predicted_cols;  // target -> cohort column
  std::map<std::string, std::vector<std::string>> predictors;
  std::map<std::string, PredictionModel::Kind> predict_kinds;
  std::vector<std::string> aux_vars;
  AuxMethod aux_method = AuxMethod::Shin;

  Phase3Spec::Mode weights_phase3_type = Phase3Spec::Mode::Both;

  std::optional<double> tau1, tau2;
  std::vector<RiskProfile> profiles;  // taus filled in by run_analysis

  CoxOptions cox_options;
  CalibrationOptions cal_options;

  std::string influence_dump_path;  // optional CSV dump

  std::vector<std::string> model_covariates() const {
    std::vector<std::string> names = cox_phase1;
    names.insert(names.end(), cox_phase2.begin(), cox_phase2.end());
    return names;
  }
};

struct AnalysisResult {
  AnalysisVariant variant = AnalysisVariant::Design;
  std::vector<std::string> covariate_names;

  Eigen::VectorXd beta;
  std::optional<Eigen::MatrixXd> beta_var;
  std::optional<Eigen::MatrixXd> beta_var_design;
  std::optional<Eigen::MatrixXd> beta_var_estimated;
  Eigen::MatrixXd beta_robustvar;

  double tau1 = 0.0, tau2 = 0.0;
  double lambda0 = 0.0;
  std::optional<double> lambda0_var, lambda0_var_design, lambda0_var_estimated;
  double lambda0_robustvar = 0.0;

  std::vector<PureRiskRow> pi;

  int iterations = 0;
  double loglik = 0.0;
};

// Dispatches to the whole-cohort / design-weight / calibrated / phase-three
// pipeline based on the table's columns and the request. When `artifact` is
// non-null it is filled for later estimate_pure_risk calls.
AnalysisResult run_analysis(const CohortTable& cohort, const AnalysisRequest& request,
                            FitArtifact* artifact = nullptr);

// Web-appendix-6-shaped JSON (6a keys normally, suffixed .design/.estimated
// variance keys for phase-three analyses; whole-cohort analyses emit null for
// the finite-population variances).
std::string result_to_json(const AnalysisResult& result);

std::string pure_risk_rows_to_json(const std::vector<PureRiskRow>& rows);

}  // namespace casecohort
