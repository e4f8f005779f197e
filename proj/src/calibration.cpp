#include "casecohort/calibration.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <set>

#include "casecohort/error.hpp"

namespace casecohort {

namespace {

Eigen::MatrixXd solve_spd(const Eigen::MatrixXd& M, const Eigen::MatrixXd& rhs,
                          ErrorCode code, const std::string& stage) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
  const Eigen::VectorXd d = ldlt.vectorD();
  const double dmax = d.size() ? d.maxCoeff() : 0.0;
  if (ldlt.info() != Eigen::Success || !(dmax > 0.0) ||
      d.minCoeff() <= 1e-12 * dmax)
    fail(code, stage, "matrix is singular or not positive definite");
  return ldlt.solve(rhs);
}

// {0,1} targets are logistic, everything else defaults to linear; polytomous
// targets must be declared through the kind override.
PredictionModel::Kind detect_kind(const Eigen::VectorXd& values) {
  std::set<double> distinct(values.data(), values.data() + values.size());
  const bool zero_one =
      distinct.size() == 2 && distinct.count(0.0) && distinct.count(1.0);
  return zero_one ? PredictionModel::Kind::Logistic : PredictionModel::Kind::Linear;
}

// design matrix with intercept over the given rows
Eigen::MatrixXd design_matrix(const CohortTable& cohort,
                              const std::vector<std::string>& predictors,
                              const std::vector<int>& rows, const std::string& stage) {
  const int m = static_cast<int>(rows.size());
  Eigen::MatrixXd X(m, 1 + static_cast<int>(predictors.size()));
  X.col(0).setOnes();
  for (size_t k = 0; k < predictors.size(); ++k) {
    const int c = cohort.covariate_index(predictors[k]);
    if (c < 0)
      fail(ErrorCode::MissingColumn, stage,
           "predictor '" + predictors[k] + "' not in cohort");
    for (int a = 0; a < m; ++a) {
      const double v = cohort.covariates(rows[a], c);
      if (std::isnan(v))
        fail(ErrorCode::InvariantViolation, stage,
             "row " + std::to_string(rows[a] + 1) + ": predictor '" + predictors[k] +
                 "' is missing (predictors must be phase-one)");
      X(a, 1 + static_cast<int>(k)) = v;
    }
  }
  return X;
}

Eigen::VectorXd fit_wls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& w) {
  const Eigen::MatrixXd XtW = X.transpose() * w.asDiagonal();
  return solve_spd(XtW * X, XtW * y, ErrorCode::SingularDesign, "predict_phase2");
}

// Newton steps shrink quadratically near a proper maximum, so the step norm is
// the convergence criterion; separated targets walk at a steady step and trip
// the coefficient bound instead of stalling at a flat gradient.
Eigen::VectorXd fit_weighted_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                      const Eigen::VectorXd& w, int& iterations) {
  const int q = static_cast<int>(X.cols());
  Eigen::VectorXd b = Eigen::VectorXd::Zero(q);
  for (iterations = 0; iterations < 100; ++iterations) {
    const Eigen::VectorXd p =
        ((-(X * b).array()).exp() + 1.0).inverse().matrix();
    const Eigen::VectorXd g = X.transpose() * (w.array() * (y - p).array()).matrix();
    const Eigen::VectorXd h = (w.array() * p.array() * (1.0 - p.array())).matrix();
    const Eigen::MatrixXd H = X.transpose() * h.asDiagonal() * X;
    const Eigen::VectorXd step =
        solve_spd(H, g, ErrorCode::SingularDesign, "predict_phase2");
    b += step;
    if (b.cwiseAbs().maxCoeff() > 30.0)
      fail(ErrorCode::SeparableLogistic, "predict_phase2",
           "logistic coefficients diverging (separable or degenerate target)");
    if (step.cwiseAbs().maxCoeff() < 1e-10) return b;
  }
  fail(ErrorCode::NonConvergence, "predict_phase2", "logistic IRLS did not converge");
}

// multinomial logit with the first (smallest) category as reference; the
// stacked Newton works on the (C-1)*q coefficient vector
Eigen::MatrixXd fit_weighted_multinomial(const Eigen::MatrixXd& X,
                                         const Eigen::VectorXd& y,
                                         const Eigen::VectorXd& w,
                                         const Eigen::VectorXd& categories,
                                         int& iterations) {
  const int m = static_cast<int>(X.rows());
  const int q = static_cast<int>(X.cols());
  const int C = static_cast<int>(categories.size());
  const int dim = (C - 1) * q;

  Eigen::VectorXi cat(m);
  for (int i = 0; i < m; ++i) {
    int c = -1;
    for (int k = 0; k < C; ++k)
      if (y[i] == categories[k]) c = k;
    if (c < 0)
      fail(ErrorCode::InvariantViolation, "predict_phase2", "unseen category value");
    cat[i] = c;
  }

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(dim);
  Eigen::MatrixXd P(m, C);
  bool converged = false;
  for (iterations = 0; iterations < 100 && !converged; ++iterations) {
    Eigen::MatrixXd B = Eigen::Map<Eigen::MatrixXd>(theta.data(), q, C - 1);
    Eigen::MatrixXd eta = X * B;  // m x (C-1)
    for (int i = 0; i < m; ++i) {
      double denom = 1.0;
      for (int c = 1; c < C; ++c) denom += std::exp(eta(i, c - 1));
      P(i, 0) = 1.0 / denom;
      for (int c = 1; c < C; ++c) P(i, c) = std::exp(eta(i, c - 1)) / denom;
    }
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(dim, dim);
    for (int i = 0; i < m; ++i) {
      for (int c = 1; c < C; ++c) {
        const double resid = (cat[i] == c ? 1.0 : 0.0) - P(i, c);
        g.segment((c - 1) * q, q) += w[i] * resid * X.row(i).transpose();
        for (int d = 1; d < C; ++d) {
          const double cov =
              P(i, c) * ((c == d ? 1.0 : 0.0) - P(i, d));
          H.block((c - 1) * q, (d - 1) * q, q, q) +=
              w[i] * cov * X.row(i).transpose() * X.row(i);
        }
      }
    }
    const Eigen::VectorXd step =
        solve_spd(H, g, ErrorCode::SingularDesign, "predict_phase2");
    theta += step;
    if (theta.cwiseAbs().maxCoeff() > 30.0)
      fail(ErrorCode::SeparableLogistic, "predict_phase2",
           "multinomial coefficients diverging");
    if (step.cwiseAbs().maxCoeff() < 1e-10) converged = true;
  }
  if (!converged)
    fail(ErrorCode::NonConvergence, "predict_phase2",
         "multinomial Newton did not converge");
  return Eigen::Map<Eigen::MatrixXd>(theta.data(), q, C - 1);
}

// Cox sample over the whole cohort with covariates supplied as a matrix
// (allows predicted phase-two columns without touching the table).
CoxSample sample_from_matrix(const CohortTable& cohort, const Eigen::MatrixXd& X,
                             const std::vector<std::string>& names) {
  CoxSample s;
  const int n = cohort.n();
  s.cohort_n = n;
  s.cohort_rows.resize(n);
  for (int i = 0; i < n; ++i) s.cohort_rows[i] = i;
  s.X = X;
  s.entry = cohort.entry;
  s.exit = cohort.exit;
  s.status = cohort.status;
  s.risk_weight = Eigen::VectorXd::Ones(n);
  s.event_weight = Eigen::VectorXd::Ones(n);
  s.covariate_names = names;
  return s;
}

// Raking and the stacked influence algebra are invariant to rescaling the
// auxiliary columns; unit-RMS columns keep the Gram matrix well conditioned
// (influence columns shrink like 1/n while the constant column grows like n).
void normalize_aux_columns(AuxiliaryMatrix& aux) {
  for (int k = 0; k < aux.A.cols(); ++k) {
    const double rms =
        std::sqrt(aux.A.col(k).squaredNorm() / static_cast<double>(aux.A.rows()));
    if (rms > 0.0) aux.A.col(k) /= rms;
  }
}

Eigen::MatrixXd model_matrix_with_predictions(const CohortTable& cohort,
                                              const Phase2Predictions& predictions,
                                              const std::vector<std::string>& phase1,
                                              const std::vector<std::string>& phase2,
                                              const std::string& stage) {
  const int n = cohort.n();
  Eigen::MatrixXd X(n, static_cast<int>(phase1.size() + phase2.size()));
  int col = 0;
  for (const auto& name : phase1) {
    const int c = cohort.covariate_index(name);
    if (c < 0) fail(ErrorCode::MissingColumn, stage, "covariate '" + name + "'");
    X.col(col) = cohort.covariates.col(c);
    for (int i = 0; i < n; ++i)
      if (std::isnan(X(i, col)))
        fail(ErrorCode::InvariantViolation, stage,
             "phase-one covariate '" + name + "' missing at row " + std::to_string(i + 1));
    ++col;
  }
  for (const auto& name : phase2) {
    auto it = std::find(predictions.targets.begin(), predictions.targets.end(), name);
    if (it == predictions.targets.end())
      fail(ErrorCode::MissingColumn, stage,
           "no prediction available for phase-two covariate '" + name + "'");
    X.col(col++) = predictions.values.col(
        static_cast<int>(it - predictions.targets.begin()));
  }
  return X;
}

}  // namespace

Phase2Predictions predict_phase2(
    const CohortTable& cohort, const Eigen::VectorXd& weights,
    const std::vector<std::string>& targets,
    const std::map<std::string, std::vector<std::string>>& predictors,
    const std::map<std::string, PredictionModel::Kind>& kind_override) {
  std::vector<int> rows;
  for (int i = 0; i < cohort.n(); ++i)
    if (weights[i] > 0.0) rows.push_back(i);
  if (rows.empty())
    fail(ErrorCode::InvariantViolation, "predict_phase2", "empty phase-two sample");

  Eigen::VectorXd w(static_cast<int>(rows.size()));
  for (size_t a = 0; a < rows.size(); ++a) w[static_cast<int>(a)] = weights[rows[a]];

  Phase2Predictions out;
  out.targets = targets;
  out.values.resize(cohort.n(), static_cast<int>(targets.size()));

  std::vector<int> all_rows(cohort.n());
  for (int i = 0; i < cohort.n(); ++i) all_rows[i] = i;

  for (size_t t = 0; t < targets.size(); ++t) {
    const auto pit = predictors.find(targets[t]);
    if (pit == predictors.end() || pit->second.empty())
      fail(ErrorCode::ConfigError, "predict_phase2",
           "no predictors given for phase-two covariate '" + targets[t] + "'");

    const int yc = cohort.covariate_index(targets[t]);
    if (yc < 0)
      fail(ErrorCode::MissingColumn, "predict_phase2",
           "target '" + targets[t] + "' not in cohort");
    Eigen::VectorXd y(static_cast<int>(rows.size()));
    for (size_t a = 0; a < rows.size(); ++a) {
      y[static_cast<int>(a)] = cohort.covariates(rows[a], yc);
      if (std::isnan(y[static_cast<int>(a)]))
        fail(ErrorCode::InvariantViolation, "predict_phase2",
             "row " + std::to_string(rows[a] + 1) + ": target '" + targets[t] +
                 "' missing for a phase-two member");
    }

    PredictionModel model;
    model.target = targets[t];
    model.predictors = pit->second;
    const auto kit = kind_override.find(targets[t]);
    model.kind = kit != kind_override.end() ? kit->second : detect_kind(y);

    const Eigen::MatrixXd X = design_matrix(cohort, model.predictors, rows, "predict_phase2");
    const Eigen::MatrixXd Xall =
        design_matrix(cohort, model.predictors, all_rows, "predict_phase2");

    switch (model.kind) {
      case PredictionModel::Kind::Linear: {
        model.coefficients = fit_wls(X, y, w);
        out.values.col(static_cast<int>(t)) = Xall * model.coefficients;
        break;
      }
      case PredictionModel::Kind::Logistic: {
        model.coefficients = fit_weighted_logistic(X, y, w, model.iterations);
        out.values.col(static_cast<int>(t)) =
            ((-(Xall * model.coefficients).array()).exp() + 1.0).inverse().matrix();
        break;
      }
      case PredictionModel::Kind::Multinomial: {
        std::set<double> distinct(y.data(), y.data() + y.size());
        model.category_values.resize(static_cast<int>(distinct.size()));
        int k = 0;
        for (double v : distinct) model.category_values[k++] = v;
        model.coefficients =
            fit_weighted_multinomial(X, y, w, model.category_values, model.iterations);
        // expected category value under the fitted probabilities
        const int C = static_cast<int>(model.category_values.size());
        Eigen::MatrixXd eta = Xall * model.coefficients;
        for (int i = 0; i < cohort.n(); ++i) {
          double denom = 1.0;
          for (int c = 1; c < C; ++c) denom += std::exp(eta(i, c - 1));
          double ev = model.category_values[0] / denom;
          for (int c = 1; c < C; ++c)
            ev += model.category_values[c] * std::exp(eta(i, c - 1)) / denom;
          out.values(i, static_cast<int>(t)) = ev;
        }
        break;
      }
    }
    out.models.push_back(std::move(model));
  }
  return out;
}

AuxiliaryMatrix build_aux_breslow(const CohortTable& cohort,
                                  const Phase2Predictions& predictions,
                                  const std::vector<std::string>& phase1,
                                  const std::vector<std::string>& phase2,
                                  const CoxOptions& cox_options) {
  std::vector<std::string> names = phase1;
  names.insert(names.end(), phase2.begin(), phase2.end());
  const Eigen::MatrixXd X = model_matrix_with_predictions(
      cohort, predictions, phase1, phase2, "build_aux_breslow");

  const CoxSample proxy = sample_from_matrix(cohort, X, names);
  const CoxFit fit = fit_cox(proxy, cox_options);
  const InfluenceWork work = influence_work(fit, proxy, cox_options.singular_rel_tol);
  const InfluenceSet infl = influence_beta(work, proxy);

  AuxiliaryMatrix aux;
  const int p = static_cast<int>(names.size());
  aux.A.resize(cohort.n(), 1 + p);
  aux.A.col(0).setOnes();
  aux.A.rightCols(p) = infl.rows;
  aux.method = AuxMethod::Breslow;
  aux.includes_constant = true;
  aux.column_names.push_back("(constant)");
  for (const auto& name : names) aux.column_names.push_back("infl." + name);
  normalize_aux_columns(aux);
  return aux;
}

CalibratedWeights calibrate_weights(const Eigen::VectorXd& design_weights,
                                    const AuxiliaryMatrix& aux,
                                    const CalibrationOptions& options,
                                    const Eigen::VectorXd* totals_override) {
  const int n = static_cast<int>(design_weights.size());
  const int q = static_cast<int>(aux.A.cols());
  if (aux.A.rows() != n)
    fail(ErrorCode::InvariantViolation, "calibrate_weights",
         "auxiliary matrix does not match cohort size");
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < q; ++k)
      if (!std::isfinite(aux.A(i, k)))
        fail(ErrorCode::InvariantViolation, "calibrate_weights",
             "non-finite auxiliary value at row " + std::to_string(i + 1));

  std::vector<int> members;
  for (int i = 0; i < n; ++i)
    if (design_weights[i] > 0.0) members.push_back(i);
  if (members.empty())
    fail(ErrorCode::InvariantViolation, "calibrate_weights", "empty phase-two sample");

  const Eigen::VectorXd target =
      totals_override ? *totals_override
                      : Eigen::VectorXd(aux.A.colwise().sum().transpose());
  // constraint scale: magnitude of the weighted terms being balanced
  Eigen::VectorXd scale = Eigen::VectorXd::Zero(q);
  for (int i : members) scale += design_weights[i] * aux.A.row(i).cwiseAbs().transpose();
  for (int k = 0; k < q; ++k)
    scale[k] = std::max({scale[k], std::abs(target[k]), 1e-300});

  auto constraint = [&](const Eigen::VectorXd& eta, Eigen::VectorXd& F,
                        Eigen::VectorXd& wexp) -> double {
    F.setZero(q);
    for (int i : members) {
      const double e = eta.dot(aux.A.row(i).transpose());
      if (e > 500.0) return std::numeric_limits<double>::infinity();
      wexp[i] = design_weights[i] * std::exp(e);
      F += wexp[i] * aux.A.row(i).transpose();
    }
    F -= target;
    return (F.array() / scale.array()).abs().maxCoeff();
  };

  CalibratedWeights cw;
  cw.eta = Eigen::VectorXd::Zero(q);
  Eigen::VectorXd F(q), wexp = Eigen::VectorXd::Zero(n);
  double residual = constraint(cw.eta, F, wexp);

  if (residual < options.rel_tol) {
    // already balanced: return the design weights bit for bit
    cw.w_star = design_weights;
    cw.residual = residual;
    return cw;
  }

  for (cw.iterations = 1; cw.iterations <= options.max_iterations; ++cw.iterations) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(q, q);
    for (int i : members)
      J.selfadjointView<Eigen::Lower>().rankUpdate(aux.A.row(i).transpose(), wexp[i]);
    Eigen::MatrixXd Jfull = J.selfadjointView<Eigen::Lower>();
    Eigen::VectorXd step =
        -solve_spd(Jfull, F, ErrorCode::CalibrationSingular, "calibrate_weights");

    Eigen::VectorXd eta_new = cw.eta + step;
    Eigen::VectorXd F_new(q), wexp_new = Eigen::VectorXd::Zero(n);
    double res_new = constraint(eta_new, F_new, wexp_new);
    int halvings = 0;
    while (!(res_new < residual) && halvings < options.max_halvings) {
      ++halvings;
      step *= 0.5;
      eta_new = cw.eta + step;
      res_new = constraint(eta_new, F_new, wexp_new);
    }
    if (!(res_new < residual))
      fail(ErrorCode::CalibrationNonConvergence, "calibrate_weights",
           "raking line search stalled at residual " + std::to_string(residual));
    cw.eta = eta_new;
    F = F_new;
    wexp = wexp_new;
    residual = res_new;
    if (residual < options.rel_tol) break;
  }
  if (!(residual < options.rel_tol))
    fail(ErrorCode::CalibrationNonConvergence, "calibrate_weights",
         "raking residual " + std::to_string(residual) + " after " +
             std::to_string(cw.iterations) + " iterations");

  cw.w_star = Eigen::VectorXd::Zero(n);
  for (int i : members) cw.w_star[i] = wexp[i];
  cw.residual = residual;
  return cw;
}

AuxiliaryMatrix build_aux_shin(const CohortTable& cohort,
                               const Eigen::VectorXd& design_weights,
                               const Phase2Predictions& predictions,
                               const std::vector<std::string>& phase1,
                               const std::vector<std::string>& phase2, double tau1,
                               double tau2, const CoxOptions& cox_options,
                               const CalibrationOptions& cal_options) {
  AuxiliaryMatrix rh =
      build_aux_breslow(cohort, predictions, phase1, phase2, cox_options);

  const CalibratedWeights intermediate =
      calibrate_weights(design_weights, rh, cal_options);

  std::vector<std::string> names = phase1;
  names.insert(names.end(), phase2.begin(), phase2.end());
  const CoxSample sample =
      make_cox_sample(cohort, intermediate.w_star, names, nullptr);
  const CoxFit check_fit = fit_cox(sample, cox_options);

  const Eigen::MatrixXd Xpred = model_matrix_with_predictions(
      cohort, predictions, phase1, phase2, "build_aux_shin");
  const Eigen::VectorXd rel_hazard = (Xpred * check_fit.beta).array().exp();

  AuxiliaryMatrix aux;
  aux.A.resize(cohort.n(), rh.A.cols() + 1);
  aux.A.leftCols(rh.A.cols()) = rh.A;
  for (int i = 0; i < cohort.n(); ++i) {
    const double overlap = std::max(
        0.0, std::min(cohort.exit[i], tau2) - std::max(cohort.entry[i], tau1));
    aux.A(i, static_cast<int>(rh.A.cols())) = overlap * rel_hazard[i];
  }
  aux.method = AuxMethod::Shin;
  aux.includes_constant = true;
  aux.column_names = rh.column_names;
  aux.column_names.push_back("purerisk.aux");
  normalize_aux_columns(aux);
  return aux;
}

CalibratedEstimands calibrated_influences(const CoxFit& fit, const CoxSample& sample,
                                          const InfluenceWork& work,
                                          const AuxiliaryMatrix& aux, double tau1,
                                          double tau2,
                                          const std::vector<RiskProfile>& profiles) {
  const int p = sample.p();
  const int q = static_cast<int>(aux.A.cols());

  // raking Jacobian G_A = sum_p2 w* A A' and score sensitivity
  // P = sum_p2 w* z A' at the solution
  Eigen::MatrixXd GA = Eigen::MatrixXd::Zero(q, q);
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(p, q);
  for (int i = 0; i < sample.size(); ++i) {
    const int row = sample.cohort_rows[i];
    const double w = sample.risk_weight[i];
    GA.selfadjointView<Eigen::Lower>().rankUpdate(aux.A.row(row).transpose(), w);
    P.noalias() += w * work.Z.row(i).transpose() * aux.A.row(row);
  }
  Eigen::MatrixXd GAfull = GA.selfadjointView<Eigen::Lower>();

  const Eigen::MatrixXd K = work.info_inverse * P;  // p x q
  const Eigen::MatrixXd GAinv_Kt = solve_spd(
      GAfull, K.transpose(), ErrorCode::CalibrationSingular, "calibrated_influences");

  // constraint contribution c_i = w*_i A_i - A_i (phase-two), -A_i otherwise
  Eigen::MatrixXd C = -aux.A;
  for (int i = 0; i < sample.size(); ++i)
    C.row(sample.cohort_rows[i]) += sample.risk_weight[i] * aux.A.row(sample.cohort_rows[i]);

  CalibratedEstimands out;

  const InfluenceSet base = influence_beta(work, sample);
  out.beta.delta.estimand = Estimand::Beta;
  out.beta.delta.rows = base.rows + C * GAinv_Kt;
  out.beta.anchor = -aux.A * GAinv_Kt;

  // Lambda0(tau1,tau2]
  const Lambda0DirectParts parts = lambda0_direct_parts(work, sample, tau1, tau2);
  const Eigen::VectorXd vbeta = lambda0_beta_gradient(work, tau1, tau2);
  Eigen::VectorXd veta = Eigen::VectorXd::Zero(q);
  for (int i = 0; i < sample.size(); ++i) {
    if (parts.window_sum[i] == 0.0) continue;
    veta -= sample.risk_weight[i] * work.exp_lp[i] * parts.window_sum[i] *
            aux.A.row(sample.cohort_rows[i]).transpose();
  }
  const Eigen::VectorXd GAinv_veta =
      solve_spd(GAfull, veta, ErrorCode::CalibrationSingular, "calibrated_influences");

  out.lambda0.delta.estimand = Estimand::Lambda0Interval;
  out.lambda0.delta.rows =
      parts.direct + out.beta.delta.rows * vbeta - C * GAinv_veta;
  out.lambda0.anchor = out.beta.anchor * vbeta + aux.A * GAinv_veta;

  const double lambda0_interval = cumulative_hazard(
      BaselineHazard{work.sums.times, work.masses}, tau1, tau2);

  for (const auto& profile : profiles) {
    const Eigen::VectorXd x = profile_vector(profile, sample.covariate_names);
    const double rr = std::exp(fit.beta.dot(x));
    const double pi = 1.0 - std::exp(-rr * lambda0_interval);
    CalibratedInfluence ci;
    ci.delta.estimand = Estimand::PureRisk;
    ci.delta.rows = (1.0 - pi) * rr *
                    (out.lambda0.delta.rows + lambda0_interval * (out.beta.delta.rows * x));
    ci.anchor = (1.0 - pi) * rr *
                (out.lambda0.anchor + lambda0_interval * (out.beta.anchor * x));
    out.pure_risk.push_back(std::move(ci));
  }
  return out;
}

CalibratedVarianceParts variance_calibrated_kernel(
    const Eigen::MatrixXd& delta, const Eigen::MatrixXd& anchor,
    const Eigen::VectorXi& status, const std::vector<int>& stratum2, int cohort_n,
    const StrataSummary& summary, const Eigen::VectorXd& design_weights) {
  const int n = cohort_n;
  const int d = static_cast<int>(delta.cols());

  // sampling response of a sampled non-case: its influence minus the pattern
  // it would contribute if unsampled
  Eigen::MatrixXd rho = Eigen::MatrixXd::Zero(n, d);
  for (int i = 0; i < n; ++i)
    if (status[i] == 0 && design_weights[i] > 0.0)
      rho.row(i) = delta.row(i) - anchor.row(i);

  CalibratedVarianceParts parts;
  parts.term2 =
      pairwise_sampling_term(rho, stratum2, status, design_weights, summary);

  parts.phase1 = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < n; ++i) {
    if (status[i] == 1) {
      const Eigen::VectorXd g = delta.row(i).transpose();
      parts.phase1 += g * g.transpose();
    } else if (design_weights[i] > 0.0) {
      const Eigen::VectorXd g =
          anchor.row(i).transpose() + rho.row(i).transpose() / design_weights[i];
      parts.phase1 += design_weights[i] * g * g.transpose();
    }
  }
  parts.phase1 *= static_cast<double>(n) / (n - 1.0);
  parts.total = parts.phase1 + parts.term2;
  return parts;
}

CalibratedVarianceParts variance_calibrated_parts(const CalibratedInfluence& infl,
                                                  const CohortTable& cohort,
                                                  const StrataSummary& summary,
                                                  const Eigen::VectorXd& design_weights) {
  return variance_calibrated_kernel(infl.delta.rows, infl.anchor, cohort.status,
                                    cohort.stratum2, cohort.n(), summary,
                                    design_weights);
}

Eigen::MatrixXd variance_calibrated(const CalibratedInfluence& infl,
                                    const CohortTable& cohort,
                                    const StrataSummary& summary,
                                    const Eigen::VectorXd& design_weights) {
  return variance_calibrated_parts(infl, cohort, summary, design_weights).total;
}

}  // namespace casecohort
