#pragma once

#include <Eigen/Core>
#include <map>
#include <string>
#include <vector>

#include "casecohort/cox_engine.hpp"
#include "casecohort/data_model.hpp"
#include "casecohort/influence.hpp"
#include "casecohort/variance.hpp"

namespace casecohort {

enum class AuxMethod { Breslow, Shin, UserProvided };

struct PredictionModel {
  enum class Kind { Linear, Logistic, Multinomial };
  std::string target;
  Kind kind = Kind::Linear;
  std::vector<std::string> predictors;
  // intercept-first coefficients; one column per non-reference category for
  // multinomial targets
  Eigen::MatrixXd coefficients;
  Eigen::VectorXd category_values;
  int iterations = 0;
};

struct Phase2Predictions {
  std::vector<PredictionModel> models;
  std::vector<std::string> targets;
  Eigen::MatrixXd values;  // cohort_n x targets: fitted expectation per member
};

// Weighted regression of each phase-two target on its phase-one predictors,
// fitted over the phase-two sample (weights > 0) and evaluated cohort-wide.
// Target kind is detected from the observed values ({0,1} -> logistic, few
// integer levels -> multinomial, otherwise linear) unless overridden.
Phase2Predictions predict_phase2(
    const CohortTable& cohort, const Eigen::VectorXd& weights,
    const std::vector<std::string>& targets,
    const std::map<std::string, std::vector<std::string>>& predictors,
    const std::map<std::string, PredictionModel::Kind>& kind_override = {});

struct AuxiliaryMatrix {
  Eigen::MatrixXd A;  // cohort_n x q, complete for every cohort member
  AuxMethod method = AuxMethod::UserProvided;
  bool includes_constant = false;
  std::vector<std::string> column_names;
};

// Relative-hazard auxiliaries: a constant column plus the influences of the
// full-cohort unit-weight fit on (phase-one covariates, predicted phase-two
// covariates).
AuxiliaryMatrix build_aux_breslow(const CohortTable& cohort,
                                  const Phase2Predictions& predictions,
                                  const std::vector<std::string>& phase1,
                                  const std::vector<std::string>& phase2,
                                  const CoxOptions& cox_options = {});

struct CalibrationOptions {
  double rel_tol = 1e-8;
  int max_iterations = 50;
  int max_halvings = 20;
};

struct CalibratedWeights {
  Eigen::VectorXd w_star;  // cohort length; 0 outside phase-two
  Eigen::VectorXd eta;
  double residual = 0.0;  // max relative constraint residual
  int iterations = 0;
};

// Raking: w*_i = w_i exp(eta'A_i) with eta solving
// sum_{phase-two} w*_i A_i = sum_cohort A_i (damped Newton). Returns w* = w
// exactly when the constraints already hold at eta = 0. `totals_override`
// replaces the cohort column sums (used by the finite-difference oracle to
// perturb a single subject's contribution to the totals).
CalibratedWeights calibrate_weights(const Eigen::VectorXd& design_weights,
                                    const AuxiliaryMatrix& aux,
                                    const CalibrationOptions& options = {},
                                    const Eigen::VectorXd* totals_override = nullptr);

// The Shin auxiliaries: the Breslow columns, plus one pure-risk column
// overlap(entry,exit; tau1,tau2) * exp(betaCheck'(X1, predicted X2)) where
// betaCheck comes from a phase-two fit with weights calibrated against the
// Breslow columns.
AuxiliaryMatrix build_aux_shin(const CohortTable& cohort,
                               const Eigen::VectorXd& design_weights,
                               const Phase2Predictions& predictions,
                               const std::vector<std::string>& phase1,
                               const std::vector<std::string>& phase2, double tau1,
                               double tau2, const CoxOptions& cox_options = {},
                               const CalibrationOptions& cal_options = {});

// Influences of a calibrated analysis, from the stacked (Cox score, raking
// constraint) linearization. Every cohort member has a row: non-phase-two
// subjects influence the estimates through the calibration totals. `anchor`
// holds that non-member pattern for every subject; the difference
// delta - anchor is the subject's sampling response used by the variance.
struct CalibratedInfluence {
  InfluenceSet delta;
  Eigen::MatrixXd anchor;
};

struct CalibratedEstimands {
  CalibratedInfluence beta;
  CalibratedInfluence lambda0;
  std::vector<CalibratedInfluence> pure_risk;  // one per profile
};

CalibratedEstimands calibrated_influences(const CoxFit& fit, const CoxSample& sample,
                                          const InfluenceWork& work,
                                          const AuxiliaryMatrix& aux, double tau1,
                                          double tau2,
                                          const std::vector<RiskProfile>& profiles);

struct CalibratedVarianceParts {
  Eigen::MatrixXd phase1;  // n/(n-1) * HT estimate of sum_cohort g g'
  Eigen::MatrixXd term2;   // pairwise sampling term on delta - anchor
  Eigen::MatrixXd total;
};

CalibratedVarianceParts variance_calibrated_parts(const CalibratedInfluence& infl,
                                                  const CohortTable& cohort,
                                                  const StrataSummary& summary,
                                                  const Eigen::VectorXd& design_weights);

// Table-free form, used when re-pricing profiles from a saved fit.
CalibratedVarianceParts variance_calibrated_kernel(
    const Eigen::MatrixXd& delta, const Eigen::MatrixXd& anchor,
    const Eigen::VectorXi& status, const std::vector<int>& stratum2, int cohort_n,
    const StrataSummary& summary, const Eigen::VectorXd& design_weights);

Eigen::MatrixXd variance_calibrated(const CalibratedInfluence& infl,
                                    const CohortTable& cohort,
                                    const StrataSummary& summary,
                                    const Eigen::VectorXd& design_weights);

}  // namespace casecohort
