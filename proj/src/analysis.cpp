#include "casecohort/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>

#include "casecohort/csv.hpp"
#include "casecohort/error.hpp"

namespace casecohort {

namespace {

using ordered_json = nlohmann::ordered_json;

std::pair<double, double> resolve_taus(const CohortTable& cohort,
                                       const AnalysisRequest& request) {
  double first = std::numeric_limits<double>::infinity();
  double last = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < cohort.n(); ++i) {
    if (cohort.status[i] != 1) continue;
    first = std::min(first, cohort.exit[i]);
    last = std::max(last, cohort.exit[i]);
  }
  if (!std::isfinite(first))
    fail(ErrorCode::InvariantViolation, "run_analysis", "cohort has no events");
  const double tau1 = request.tau1.value_or(first);
  const double tau2 = request.tau2.value_or(last);
  if (!(tau1 < tau2))
    fail(ErrorCode::ConfigError, "run_analysis", "requires Tau1 < Tau2");
  return {tau1, tau2};
}

Phase2Predictions resolve_predictions(const CohortTable& cohort,
                                      const Eigen::VectorXd& weights,
                                      const AnalysisRequest& request) {
  if (!request.predicted_cols.empty()) {
    Phase2Predictions out;
    for (const auto& target : request.cox_phase2) {
      auto it = request.predicted_cols.find(target);
      if (it == request.predicted_cols.end())
        fail(ErrorCode::ConfigError, "run_analysis",
             "predicted.cox.phase2 is missing an entry for '" + target + "'");
      const Eigen::VectorXd col = cohort.covariate(it->second);
      for (int i = 0; i < cohort.n(); ++i)
        if (std::isnan(col[i]))
          fail(ErrorCode::InvariantViolation, "run_analysis",
               "predicted column '" + it->second + "' missing at row " +
                   std::to_string(i + 1));
      out.targets.push_back(target);
      out.values.conservativeResize(cohort.n(), static_cast<int>(out.targets.size()));
      out.values.col(static_cast<int>(out.targets.size()) - 1) = col;
    }
    return out;
  }
  if (!request.predict)
    fail(ErrorCode::ConfigError, "run_analysis",
         "calibrated analysis needs aux.vars, predicted.cox.phase2, or "
         "predict = true with predictors.cox.phase2");
  return predict_phase2(cohort, weights, request.cox_phase2, request.predictors,
                        request.predict_kinds);
}

void dump_influences(const std::string& path, const std::vector<std::string>& names,
                     const Eigen::MatrixXd& beta_rows,
                     const Eigen::VectorXd& lambda_rows,
                     const std::vector<PureRiskRow>& pi,
                     const std::vector<Eigen::VectorXd>& pi_rows) {
  CsvTable csv;
  csv.header.push_back("row");
  for (const auto& n : names) csv.header.push_back("beta." + n);
  csv.header.push_back("lambda0");
  for (size_t k = 0; k < pi.size(); ++k)
    csv.header.push_back("pi." + std::to_string(k + 1));
  for (int i = 0; i < beta_rows.rows(); ++i) {
    std::vector<std::string> row;
    row.push_back(std::to_string(i + 1));
    for (int c = 0; c < beta_rows.cols(); ++c)
      row.push_back(format_double(beta_rows(i, c)));
    row.push_back(format_double(lambda_rows[i]));
    for (const auto& pr : pi_rows) row.push_back(format_double(pr[i]));
    csv.rows.push_back(std::move(row));
  }
  write_csv(path, csv);
}

ordered_json matrix_json(const Eigen::MatrixXd& m) {
  ordered_json rows = ordered_json::array();
  for (int i = 0; i < m.rows(); ++i) {
    ordered_json row = ordered_json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

ordered_json profile_json(const RiskProfile& profile) {
  ordered_json p = ordered_json::object();
  for (const auto& [name, value] : profile.x) p[name] = value;
  return p;
}

ordered_json pi_row_json(const PureRiskRow& row) {
  ordered_json r = ordered_json::object();
  r["profile"] = profile_json(row.profile);
  r["risk"] = row.risk;
  if (row.variance_design || row.variance_estimated) {
    if (row.variance_design) r["variance.design"] = *row.variance_design;
    if (row.variance_estimated) r["variance.estimated"] = *row.variance_estimated;
  } else if (row.variance) {
    r["variance"] = *row.variance;
  } else {
    r["variance"] = nullptr;
  }
  r["robust.variance"] = row.robust_variance;
  return r;
}

}  // namespace

StrataSummary FitArtifact::summary() const {
  StrataSummary s;
  s.labels = stratum2_labels;
  s.cohort_count = strata_n;
  s.subcohort_count = strata_m;
  s.design_weight.resize(strata_n.size());
  for (int j = 0; j < strata_n.size(); ++j)
    s.design_weight[j] =
        static_cast<double>(strata_n[j]) / static_cast<double>(strata_m[j]);
  return s;
}

AnalysisResult run_analysis(const CohortTable& cohort, const AnalysisRequest& request,
                            FitArtifact* artifact) {
  if (request.cox_phase1.empty() && request.cox_phase2.empty())
    fail(ErrorCode::ConfigError, "run_analysis", "no model covariates given");

  AnalysisVariant variant;
  if (!cohort.has_subcohort) {
    if (cohort.has_phase3)
      fail(ErrorCode::ConfigError, "run_analysis",
           "phase-three data requires a phase-two (subcohort) design");
    variant = AnalysisVariant::WholeCohort;
  } else if (cohort.has_phase3) {
    if (request.calibrated)
      fail(ErrorCode::ConfigError, "run_analysis",
           "calibration is not available with phase-three (missing) data");
    variant = AnalysisVariant::Phase3;
  } else if (request.calibrated) {
    variant = AnalysisVariant::Calibrated;
  } else {
    variant = AnalysisVariant::Design;
  }

  const auto [tau1, tau2] = resolve_taus(cohort, request);
  const std::vector<std::string> names = request.model_covariates();

  std::vector<RiskProfile> profiles = request.profiles;
  for (auto& p : profiles) {
    p.tau1 = tau1;
    p.tau2 = tau2;
  }

  AnalysisResult result;
  result.variant = variant;
  result.covariate_names = names;
  result.tau1 = tau1;
  result.tau2 = tau2;

  StrataSummary summary;
  Eigen::VectorXd w2;
  if (variant != AnalysisVariant::WholeCohort) {
    summary = strata_summary(cohort, request.subcohort_strata_counts);
    w2 = resolve_weights(cohort, summary);
  } else {
    w2 = Eigen::VectorXd::Ones(cohort.n());
  }

  // analysis weights per variant
  Eigen::VectorXd risk_w = w2;
  Eigen::VectorXd event_w = Eigen::VectorXd::Ones(cohort.n());
  Eigen::VectorXd w3, overall;
  CalibratedWeights cw;
  AuxiliaryMatrix aux;

  if (variant == AnalysisVariant::Phase3) {
    Phase3Spec spec;
    spec.mode = request.weights_phase3_type;
    spec.use_provided = cohort.has_weight3;
    w3 = estimate_phase3_weights(cohort, w2, spec);
    overall = overall_weights(cohort, w2, w3);
    risk_w = overall;
    event_w.setZero();
    for (int i = 0; i < cohort.n(); ++i)
      if (overall[i] > 0.0) event_w[i] = w3[i];
  } else if (variant == AnalysisVariant::Calibrated) {
    if (!request.aux_vars.empty()) {
      aux.method = AuxMethod::UserProvided;
      aux.includes_constant = false;
      aux.A.resize(cohort.n(), static_cast<int>(request.aux_vars.size()));
      for (size_t k = 0; k < request.aux_vars.size(); ++k) {
        aux.A.col(static_cast<int>(k)) = cohort.covariate(request.aux_vars[k]);
        aux.column_names.push_back(request.aux_vars[k]);
        for (int i = 0; i < cohort.n(); ++i)
          if (std::isnan(aux.A(i, static_cast<int>(k))))
            fail(ErrorCode::InvariantViolation, "run_analysis",
                 "auxiliary column '" + request.aux_vars[k] + "' missing at row " +
                     std::to_string(i + 1));
      }
    } else {
      const Phase2Predictions predictions = resolve_predictions(cohort, w2, request);
      aux = request.aux_method == AuxMethod::Breslow
                ? build_aux_breslow(cohort, predictions, request.cox_phase1,
                                    request.cox_phase2, request.cox_options)
                : build_aux_shin(cohort, w2, predictions, request.cox_phase1,
                                 request.cox_phase2, tau1, tau2, request.cox_options,
                                 request.cal_options);
    }
    cw = calibrate_weights(w2, aux, request.cal_options);
    risk_w = cw.w_star;
  }

  const CoxSample sample = make_cox_sample(
      cohort, risk_w, names,
      variant == AnalysisVariant::Phase3 ? &event_w : nullptr);
  const CoxFit fit = fit_cox(sample, request.cox_options);
  const BaselineHazard hz = baseline_hazard(fit, sample);
  const double lambda0 = cumulative_hazard(hz, tau1, tau2);
  const InfluenceWork work =
      influence_work(fit, sample, request.cox_options.singular_rel_tol);

  result.beta = fit.beta;
  result.lambda0 = lambda0;
  result.iterations = fit.iterations;
  result.loglik = fit.loglik;

  Eigen::MatrixXd beta_rows, anchor_beta;
  Eigen::VectorXd lambda_rows, anchor_lambda;
  std::vector<Eigen::VectorXd> pi_rows, pi_anchor;
  std::vector<double> pi_values;

  if (variant == AnalysisVariant::Calibrated) {
    const CalibratedEstimands cal =
        calibrated_influences(fit, sample, work, aux, tau1, tau2, profiles);
    beta_rows = cal.beta.delta.rows;
    anchor_beta = cal.beta.anchor;
    lambda_rows = cal.lambda0.delta.rows.col(0);
    anchor_lambda = cal.lambda0.anchor.col(0);
    for (size_t k = 0; k < profiles.size(); ++k) {
      pi_rows.push_back(cal.pure_risk[k].delta.rows.col(0));
      pi_anchor.push_back(cal.pure_risk[k].anchor.col(0));
    }
  } else {
    const InfluenceSet ib = influence_beta(work, sample);
    const InfluenceSet il = influence_lambda0(work, sample, tau1, tau2, ib);
    beta_rows = ib.rows;
    lambda_rows = il.rows.col(0);
    for (const auto& profile : profiles) {
      const InfluenceSet ip =
          influence_pure_risk(fit, lambda0, profile, ib, il, names);
      pi_rows.push_back(ip.rows.col(0));
    }
  }
  for (const auto& profile : profiles)
    pi_values.push_back(pure_risk(fit, hz, profile, names));

  // variances per estimand
  auto robust = [](const Eigen::MatrixXd& rows) -> Eigen::MatrixXd {
    return rows.transpose() * rows;
  };

  const Eigen::MatrixXd beta_robust = robust(beta_rows);
  const Eigen::MatrixXd lambda_robust = robust(lambda_rows);

  if (variant == AnalysisVariant::WholeCohort) {
    VarianceReport rb =
        assemble_report(Estimand::Beta, beta_robust, beta_robust, "whole-cohort");
    result.beta_robustvar = rb.V_robust;
    result.lambda0_robustvar = lambda_robust(0, 0);
    for (size_t k = 0; k < profiles.size(); ++k) {
      PureRiskRow row;
      row.profile = profiles[k];
      row.risk = pi_values[k];
      row.robust_variance = robust(pi_rows[k])(0, 0);
      result.pi.push_back(std::move(row));
    }
  } else if (variant == AnalysisVariant::Design) {
    InfluenceSet tmp;
    tmp.rows = beta_rows;
    VarianceReport rb = assemble_report(
        Estimand::Beta, variance_finite_population(tmp, cohort, summary, w2),
        beta_robust, "design-weights");
    result.beta_var = rb.V;
    result.beta_robustvar = rb.V_robust;
    tmp.rows = lambda_rows;
    result.lambda0_var =
        variance_finite_population(tmp, cohort, summary, w2)(0, 0);
    result.lambda0_robustvar = lambda_robust(0, 0);
    for (size_t k = 0; k < profiles.size(); ++k) {
      PureRiskRow row;
      row.profile = profiles[k];
      row.risk = pi_values[k];
      tmp.rows = pi_rows[k];
      VarianceReport rp = assemble_report(
          Estimand::PureRisk, variance_finite_population(tmp, cohort, summary, w2),
          robust(pi_rows[k]), "design-weights");
      row.variance = rp.V(0, 0);
      row.robust_variance = rp.V_robust(0, 0);
      result.pi.push_back(std::move(row));
    }
  } else if (variant == AnalysisVariant::Calibrated) {
    CalibratedInfluence ci;
    ci.delta.rows = beta_rows;
    ci.anchor = anchor_beta;
    VarianceReport rb = assemble_report(
        Estimand::Beta, variance_calibrated(ci, cohort, summary, w2), beta_robust,
        "calibrated");
    result.beta_var = rb.V;
    result.beta_robustvar = rb.V_robust;
    ci.delta.rows = lambda_rows;
    ci.anchor = anchor_lambda;
    result.lambda0_var = variance_calibrated(ci, cohort, summary, w2)(0, 0);
    result.lambda0_robustvar = lambda_robust(0, 0);
    for (size_t k = 0; k < profiles.size(); ++k) {
      PureRiskRow row;
      row.profile = profiles[k];
      row.risk = pi_values[k];
      ci.delta.rows = pi_rows[k];
      ci.anchor = pi_anchor[k];
      VarianceReport rp = assemble_report(
          Estimand::PureRisk, variance_calibrated(ci, cohort, summary, w2),
          robust(pi_rows[k]), "calibrated");
      row.variance = rp.V(0, 0);
      row.robust_variance = rp.V_robust(0, 0);
      result.pi.push_back(std::move(row));
    }
  } else {  // Phase3
    InfluenceSet tmp;
    tmp.rows = beta_rows;
    const Phase3Variance vb = variance_phase3(tmp, cohort, summary, w2, w3, overall,
                                              request.weights_phase3_type);
    if (vb.design) {
      VarianceReport r = assemble_report(Estimand::Beta, *vb.design, beta_robust,
                                         "phase3-design");
      result.beta_var_design = r.V;
      result.beta_robustvar = r.V_robust;
    }
    if (vb.estimated) {
      VarianceReport r = assemble_report(Estimand::Beta, *vb.estimated, beta_robust,
                                         "phase3-estimated");
      result.beta_var_estimated = r.V;
      result.beta_robustvar = r.V_robust;
    }
    tmp.rows = lambda_rows;
    const Phase3Variance vl = variance_phase3(tmp, cohort, summary, w2, w3, overall,
                                              request.weights_phase3_type);
    if (vl.design) result.lambda0_var_design = (*vl.design)(0, 0);
    if (vl.estimated) result.lambda0_var_estimated = (*vl.estimated)(0, 0);
    result.lambda0_robustvar = lambda_robust(0, 0);
    for (size_t k = 0; k < profiles.size(); ++k) {
      PureRiskRow row;
      row.profile = profiles[k];
      row.risk = pi_values[k];
      tmp.rows = pi_rows[k];
      const Phase3Variance vp = variance_phase3(
          tmp, cohort, summary, w2, w3, overall, request.weights_phase3_type);
      if (vp.design) row.variance_design = (*vp.design)(0, 0);
      if (vp.estimated) row.variance_estimated = (*vp.estimated)(0, 0);
      row.robust_variance = robust(pi_rows[k])(0, 0);
      result.pi.push_back(std::move(row));
    }
  }

  if (!request.influence_dump_path.empty())
    dump_influences(request.influence_dump_path, names, beta_rows, lambda_rows,
                    result.pi, pi_rows);

  if (artifact) {
    artifact->schema_version = 1;
    artifact->variant = variant;
    artifact->phase3_mode = request.weights_phase3_type;
    artifact->covariate_names = names;
    artifact->beta = fit.beta;
    artifact->tau1 = tau1;
    artifact->tau2 = tau2;
    artifact->lambda0 = lambda0;
    artifact->cohort_n = cohort.n();
    artifact->status = cohort.status;
    artifact->stratum2 = cohort.stratum2;
    artifact->stratum2_labels = cohort.stratum2_labels;
    if (variant != AnalysisVariant::WholeCohort) {
      artifact->strata_n = summary.cohort_count;
      artifact->strata_m = summary.subcohort_count;
      artifact->design_w2 = w2;
    }
    if (variant == AnalysisVariant::Phase3) {
      artifact->stratum3 = cohort.stratum3;
      artifact->stratum3_labels = cohort.stratum3_labels;
      artifact->w3 = w3;
      artifact->overall = overall;
    }
    artifact->infl_beta = beta_rows;
    artifact->infl_lambda = lambda_rows;
    if (variant == AnalysisVariant::Calibrated) {
      artifact->anchor_beta = anchor_beta;
      artifact->anchor_lambda = anchor_lambda;
    }
  }
  return result;
}

std::string result_to_json(const AnalysisResult& result) {
  ordered_json out = ordered_json::object();
  ordered_json beta = ordered_json::object();
  for (size_t k = 0; k < result.covariate_names.size(); ++k)
    beta[result.covariate_names[k]] = result.beta[static_cast<int>(k)];
  out["beta"] = std::move(beta);

  const bool phase3 = result.variant == AnalysisVariant::Phase3;
  if (phase3) {
    if (result.beta_var_design) out["beta.var.design"] = matrix_json(*result.beta_var_design);
    if (result.beta_var_estimated)
      out["beta.var.estimated"] = matrix_json(*result.beta_var_estimated);
  } else {
    out["beta.var"] = result.beta_var ? matrix_json(*result.beta_var) : ordered_json();
  }
  out["beta.robustvar"] = matrix_json(result.beta_robustvar);

  out["Lambda0"] = result.lambda0;
  if (phase3) {
    if (result.lambda0_var_design) out["Lambda0.var.design"] = *result.lambda0_var_design;
    if (result.lambda0_var_estimated)
      out["Lambda0.var.estimated"] = *result.lambda0_var_estimated;
  } else {
    out["Lambda0.var"] =
        result.lambda0_var ? ordered_json(*result.lambda0_var) : ordered_json();
  }
  out["Lambda0.robustvar"] = result.lambda0_robustvar;

  if (!result.pi.empty()) {
    ordered_json pi = ordered_json::array();
    for (const auto& row : result.pi) pi.push_back(pi_row_json(row));
    out["Pi"] = std::move(pi);
  }
  return out.dump(2) + "\n";
}

std::string pure_risk_rows_to_json(const std::vector<PureRiskRow>& rows) {
  ordered_json pi = ordered_json::array();
  for (const auto& row : rows) pi.push_back(pi_row_json(row));
  ordered_json out = ordered_json::object();
  out["Pi"] = std::move(pi);
  return out.dump(2) + "\n";
}

}  // namespace casecohort
