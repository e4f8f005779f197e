// Command-line front end: analyze / purerisk / simulate.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "casecohort/analysis.hpp"
#include "casecohort/csv.hpp"
#include "casecohort/error.hpp"
#include "casecohort/sampling_sim.hpp"

namespace {

using namespace casecohort;

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::pair<std::string, std::string> split_pair(const std::string& item,
                                               const std::string& what) {
  const auto pos = item.find('=');
  if (pos == std::string::npos)
    fail(ErrorCode::ConfigError, "cli", what + " entries must look like key=value");
  return {item.substr(0, pos), item.substr(pos + 1)};
}

RiskProfile parse_profile(const std::string& text) {
  RiskProfile profile;
  for (const auto& item : split(text, ',')) {
    auto [name, value] = split_pair(item, "--x");
    const auto parsed = parse_double(value);
    if (!parsed) fail(ErrorCode::ConfigError, "cli", "cannot parse profile value " + value);
    profile.x.push_back({name, *parsed});
  }
  return profile;
}

std::vector<RiskProfile> profiles_from_file(const std::string& path) {
  const CsvTable csv = read_csv(path);
  std::vector<RiskProfile> profiles;
  for (const auto& row : csv.rows) {
    RiskProfile profile;
    for (size_t k = 0; k < csv.header.size(); ++k) {
      const auto parsed = parse_double(row[k]);
      if (!parsed)
        fail(ErrorCode::ConfigError, "cli", "cannot parse profile value " + row[k]);
      profile.x.push_back({csv.header[k], *parsed});
    }
    profiles.push_back(std::move(profile));
  }
  return profiles;
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cli", "cannot write " + path);
  out << text;
}

int fail_with_error_object(const CcError& e) {
  nlohmann::ordered_json err;
  err["error"]["code"] = error_code_name(e.code());
  err["error"]["stage"] = e.stage();
  err["error"]["message"] = e.what();
  std::cout << err.dump(2) << "\n";
  return is_validation_error(e.code()) ? 2 : 3;
}

struct AnalyzeArgs {
  std::string data, out, save_fit, dump_influences;
  std::string status;
  std::vector<std::string> time;
  std::vector<std::string> cox_phase1, cox_phase2, aux_vars;
  std::string subcohort, strata, weights_phase2;
  std::string phase3, strata_phase3, weights_phase3;
  std::string weights_phase3_type = "both";
  std::vector<std::string> strata_counts, predicted, predictors, predict_kinds;
  std::string aux_method = "Shin";
  bool calibrated = false;
  bool predict = true;
  double tau1 = std::numeric_limits<double>::quiet_NaN();
  double tau2 = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> x;
  std::string profiles_file;
  std::string delimiter = ",";
  double newton_tol = 1e-8;
  int newton_max_iter = 25;
};

int run_analyze(const AnalyzeArgs& args) {
  ColumnMapping mapping;
  mapping.status = args.status;
  mapping.time = args.time;
  mapping.subcohort = args.subcohort;
  mapping.strata = args.strata;
  mapping.weights_phase2 = args.weights_phase2;
  mapping.phase3 = args.phase3;
  mapping.strata_phase3 = args.strata_phase3;
  mapping.weights_phase3 = args.weights_phase3;
  if (args.delimiter.size() != 1)
    fail(ErrorCode::ConfigError, "cli", "--delimiter must be a single character");
  mapping.delimiter = args.delimiter[0];

  const CohortTable cohort = load_cohort(args.data, mapping);

  AnalysisRequest request;
  request.cox_phase1 = args.cox_phase1;
  request.cox_phase2 = args.cox_phase2;
  request.calibrated = args.calibrated;
  request.predict = args.predict;
  request.aux_vars = args.aux_vars;
  if (args.aux_method == "Breslow") request.aux_method = AuxMethod::Breslow;
  else if (args.aux_method == "Shin") request.aux_method = AuxMethod::Shin;
  else fail(ErrorCode::ConfigError, "cli", "--aux-method must be Breslow or Shin");

  for (const auto& item : args.strata_counts) {
    auto [label, count] = split_pair(item, "--subcohort-strata-counts");
    request.subcohort_strata_counts[label] = std::stoi(count);
  }
  for (const auto& item : args.predicted) {
    auto [target, column] = split_pair(item, "--predicted-cox-phase2");
    request.predicted_cols[target] = column;
  }
  for (const auto& item : args.predictors) {
    auto [target, cols] = split_pair(item, "--predictors-cox-phase2");
    request.predictors[target] = split(cols, '+');
  }
  for (const auto& item : args.predict_kinds) {
    auto [target, kind] = split_pair(item, "--predict-kinds");
    if (kind == "linear") request.predict_kinds[target] = PredictionModel::Kind::Linear;
    else if (kind == "logistic")
      request.predict_kinds[target] = PredictionModel::Kind::Logistic;
    else if (kind == "multinomial")
      request.predict_kinds[target] = PredictionModel::Kind::Multinomial;
    else fail(ErrorCode::ConfigError, "cli", "unknown prediction kind " + kind);
  }
  if (!std::isnan(args.tau1)) request.tau1 = args.tau1;
  if (!std::isnan(args.tau2)) request.tau2 = args.tau2;
  for (const auto& text : args.x) request.profiles.push_back(parse_profile(text));
  if (!args.profiles_file.empty())
    for (auto& p : profiles_from_file(args.profiles_file))
      request.profiles.push_back(std::move(p));

  if (args.weights_phase3_type == "design")
    request.weights_phase3_type = Phase3Spec::Mode::Design;
  else if (args.weights_phase3_type == "estimated")
    request.weights_phase3_type = Phase3Spec::Mode::Estimated;
  else if (args.weights_phase3_type == "both")
    request.weights_phase3_type = Phase3Spec::Mode::Both;
  else
    fail(ErrorCode::ConfigError, "cli",
         "--weights-phase3-type must be design, estimated, or both");

  request.cox_options.score_tol = args.newton_tol;
  request.cox_options.max_iterations = args.newton_max_iter;
  request.influence_dump_path = args.dump_influences;

  FitArtifact artifact;
  const AnalysisResult result =
      run_analysis(cohort, request, args.save_fit.empty() ? nullptr : &artifact);
  if (!args.save_fit.empty()) save_fit_artifact(artifact, args.save_fit);
  write_output(args.out, result_to_json(result));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Case-cohort Cox inference: relative hazards, cumulative baseline "
               "hazard, and pure risk with design, calibrated, or phase-three "
               "weights"};
  app.require_subcommand(1);

  AnalyzeArgs a;
  auto* analyze = app.add_subcommand(
      "analyze", "Fit a case-cohort (or whole-cohort) Cox model and report "
                 "estimates with both variance estimators");
  analyze->add_option("--data", a.data, "cohort CSV file (R: data)")->required();
  analyze->add_option("--status", a.status, "case status column (R: status)")->required();
  analyze
      ->add_option("--time", a.time,
                   "one column for time-on-study, two (entry, exit) for age scale "
                   "(R: time)")
      ->required()
      ->expected(1, 2);
  analyze->add_option("--cox-phase1", a.cox_phase1,
                      "phase-one model covariates (R: cox.phase1)");
  analyze->add_option("--cox-phase2", a.cox_phase2,
                      "phase-two model covariates (R: cox.phase2)");
  analyze->add_option("--subcohort", a.subcohort,
                      "subcohort indicator column; omit for a whole-cohort analysis "
                      "(R: subcohort)");
  analyze->add_option("--strata", a.strata, "sampling stratum column (R: strata)");
  analyze->add_option("--subcohort-strata-counts", a.strata_counts,
                      "label=count sampled per stratum (R: subcohort.strata.counts)");
  analyze->add_option("--weights-phase2", a.weights_phase2,
                      "provided phase-two design weight column (R: weights.phase2)");
  analyze->add_flag("--calibrated", a.calibrated,
                    "calibrate the design weights (R: calibrated)");
  analyze->add_flag("--predict,!--no-predict", a.predict,
                    "predict phase-two covariates from predictors (R: predict)");
  analyze->add_option("--predicted-cox-phase2", a.predicted,
                      "target=column of user-supplied predictions "
                      "(R: predicted.cox.phase2)");
  analyze->add_option("--predictors-cox-phase2", a.predictors,
                      "target=col+col phase-one predictors (R: predictors.cox.phase2)");
  analyze->add_option("--predict-kinds", a.predict_kinds,
                      "target=linear|logistic|multinomial override of the detected "
                      "regression kind");
  analyze->add_option("--aux-vars", a.aux_vars,
                      "user-supplied auxiliary columns (R: aux.vars)");
  analyze->add_option("--aux-method", a.aux_method,
                      "Breslow or Shin auxiliaries (R: aux.method)");
  analyze->add_option("--tau1", a.tau1,
                      "left bound of the risk interval; default first event time "
                      "(R: Tau1)");
  analyze->add_option("--tau2", a.tau2,
                      "right bound of the risk interval; default last event time "
                      "(R: Tau2)");
  analyze->add_option("--x", a.x,
                      "covariate profile \"X1=1,X2=-0.7\" for pure risk; repeatable "
                      "(R: x)");
  analyze->add_option("--profiles-file", a.profiles_file,
                      "CSV of covariate profiles, header = covariate names (R: x)");
  analyze->add_option("--phase3", a.phase3,
                      "phase-three (complete data) indicator column (R: phase3)");
  analyze->add_option("--strata-phase3", a.strata_phase3,
                      "phase-three stratum column (R: strata.phase3)");
  analyze->add_option("--weights-phase3", a.weights_phase3,
                      "provided phase-three weight column (R: weights.phase3)");
  analyze->add_option("--weights-phase3-type", a.weights_phase3_type,
                      "design, estimated, or both (R: weights.phase3.type)");
  analyze->add_option("--delimiter", a.delimiter, "CSV delimiter (default comma)");
  analyze->add_option("--out", a.out, "write the result JSON here (default stdout)");
  analyze->add_option("--save-fit", a.save_fit,
                      "persist the fit artifact for later purerisk calls");
  analyze->add_option("--dump-influences", a.dump_influences,
                      "debug CSV of per-subject influence values");
  analyze->add_option("--newton-tol", a.newton_tol,
                      "score convergence tolerance of the Cox solver");
  analyze->add_option("--newton-max-iter", a.newton_max_iter,
                      "maximum Newton iterations of the Cox solver");

  std::string pr_fit, pr_out, pr_profiles_file;
  std::vector<std::string> pr_x;
  auto* purerisk = app.add_subcommand(
      "purerisk", "Pure risk for new covariate profiles from a saved fit artifact");
  purerisk->add_option("--fit", pr_fit, "fit artifact written by analyze --save-fit")
      ->required();
  purerisk->add_option("--x", pr_x, "covariate profile; repeatable");
  purerisk->add_option("--profiles-file", pr_profiles_file, "CSV of profiles");
  purerisk->add_option("--out", pr_out, "output path (default stdout)");

  std::string sim_config, sim_prefix;
  auto* simulate = app.add_subcommand(
      "simulate", "Monte Carlo experiments over synthetic case-cohort designs");
  simulate->add_option("--config", sim_config, "simulation config JSON")->required();
  simulate->add_option("--out-prefix", sim_prefix,
                       "write <prefix>.summary.csv and <prefix>.summary.json");

  CLI11_PARSE(app, argc, argv);

  try {
    if (analyze->parsed()) return run_analyze(a);
    if (purerisk->parsed()) {
      const FitArtifact artifact = load_fit_artifact(pr_fit);
      std::vector<RiskProfile> profiles;
      for (const auto& text : pr_x) profiles.push_back(parse_profile(text));
      if (!pr_profiles_file.empty())
        for (auto& p : profiles_from_file(pr_profiles_file))
          profiles.push_back(std::move(p));
      if (profiles.empty())
        fail(ErrorCode::ConfigError, "cli", "purerisk needs at least one profile");
      write_output(pr_out, pure_risk_rows_to_json(estimate_pure_risk(artifact, profiles)));
      return 0;
    }
    if (simulate->parsed()) {
      const auto [config, flavor] = load_sim_config(sim_config);
      const McSummary summary = run_monte_carlo(config, flavor);
      if (sim_prefix.empty()) {
        std::cout << summary.to_json();
      } else {
        write_output(sim_prefix + ".summary.csv", summary.to_csv());
        write_output(sim_prefix + ".summary.json", summary.to_json());
      }
      return 0;
    }
  } catch (const CcError& e) {
    return fail_with_error_object(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
