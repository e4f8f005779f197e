#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "casecohort/analysis.hpp"
#include "casecohort/data_model.hpp"

namespace casecohort {

struct CovariateSpec {
  enum class Kind { Normal, Bernoulli, Proxy };
  std::string name;
  Kind kind = Kind::Normal;
  double mean = 0.0, sd = 1.0;  // normal
  double p = 0.5;               // bernoulli
  std::string source;           // proxy: source covariate
  double noise_sd = 0.0;        // proxy: added gaussian noise
  bool binarize = false;        // proxy: 1{value > threshold}
  double threshold = 0.0;
  bool phase2 = false;  // masked outside the phase-two sample at analysis time
};

struct PiecewiseHazard {
  std::vector<double> knots;  // interior boundaries, ascending
  std::vector<double> rates;  // knots.size() + 1 rates

  double cumulative(double t) const;
  // smallest t with cumulative(t) = h (h >= 0)
  double inverse_cumulative(double h) const;
};

struct SimConfig {
  int n = 0;
  uint64_t seed = 1;
  int replicates = 1;

  TimeScaleKind time_scale = TimeScaleKind::TimeOnStudy;
  double entry_low = 0.0, entry_high = 0.0;  // uniform entry age (age scale)

  PiecewiseHazard baseline;
  double censoring_rate = 0.0;  // exponential from entry; 0 = none
  double horizon = 0.0;         // administrative censoring time/age

  std::vector<CovariateSpec> covariates;
  std::vector<std::string> model_covariates;
  Eigen::VectorXd beta_true;

  std::string strata_by;  // empty = unstratified (single stratum "all")
  std::map<std::string, int> subcohort_m;

  bool phase3 = false;
  std::string strata3_by;  // empty = single phase-three stratum
  std::map<std::string, double> retention;  // stratum label -> pi3

  double tau1 = 0.0, tau2 = 0.0;
  std::vector<RiskProfile> profiles;

  void validate() const;
  double true_pure_risk(const RiskProfile& profile) const;
};

struct AnalysisFlavor {
  enum class Kind { WholeCohort, Design, Calibrated };
  Kind kind = Kind::Design;
  AuxMethod aux_method = AuxMethod::Shin;
  std::map<std::string, std::vector<std::string>> predictors;
  bool use_phase3 = true;  // honor config.phase3 when present
  Phase3Spec::Mode phase3_mode = Phase3Spec::Mode::Both;
};

// Event times drawn from lambda0(t) exp(beta'X) conditional on survival to the
// (age-scale) entry; exit/status from the event, censoring, and horizon.
CohortTable generate_cohort(const SimConfig& config, uint64_t seed);

// SRSWOR of m_j per stratum, independent across strata; sets in_subcohort and
// the stratum labels (values of the strata_by covariate).
CohortTable sample_subcohort(const CohortTable& cohort, const std::string& strata_by,
                             const std::map<std::string, int>& m, uint64_t seed);

// Independent Bernoulli retention within phase-three strata, phase-two only.
CohortTable apply_phase3_retention(const CohortTable& cohort,
                                   const std::string& strata3_by,
                                   const std::map<std::string, double>& retention,
                                   uint64_t seed);

// Blanks phase-two covariates outside the phase-two (or phase-three) sample so
// the analysis cannot touch values it would not have.
void mask_phase2_covariates(CohortTable& cohort, const std::vector<std::string>& names);

struct McVarianceSummary {
  std::string label;  // "V", "V.design", "V.estimated", "V.robust"
  double mean = 0.0;
  double coverage = 0.0;  // 95% Wald CI coverage
};

struct McParamSummary {
  std::string name;
  double true_value = 0.0;
  double mean_estimate = 0.0;
  double empirical_variance = 0.0;
  std::vector<McVarianceSummary> variances;

  // robust-vs-finite-population comparisons per replicate (NaN when the "V"
  // label is absent, e.g. whole-cohort or phase-three analyses)
  double mean_ratio_robust_V = std::numeric_limits<double>::quiet_NaN();
  double frac_robust_ge_V = std::numeric_limits<double>::quiet_NaN();

  const McVarianceSummary* variance(const std::string& label) const;
};

struct McSummary {
  std::vector<McParamSummary> params;
  int replicates = 0;
  int failures = 0;

  const McParamSummary* param(const std::string& name) const;
  std::string to_csv() const;
  std::string to_json() const;
};

// Deterministic given (config.seed, flavor); replicate r uses substreams of
// splitmix64(seed ^ golden*(r+1)). Replicates run in parallel when
// CASECOHORT_THREADS > 1; aggregation order is fixed by replicate index.
McSummary run_monte_carlo(const SimConfig& config, const AnalysisFlavor& flavor);

// Reads a simulation config (JSON); the optional "analysis" object selects the
// flavor, defaulting to the design-weight analysis.
std::pair<SimConfig, AnalysisFlavor> load_sim_config(const std::string& path);

int env_thread_count();

}  // namespace casecohort
