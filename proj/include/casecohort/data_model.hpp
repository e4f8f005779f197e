#pragma once

#include <Eigen/Core>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace casecohort {

enum class TimeScaleKind { TimeOnStudy, AgeScale };

struct TimeScale {
  TimeScaleKind kind = TimeScaleKind::TimeOnStudy;
};

// One cohort member, used when building tables programmatically. Missing
// phase-two covariates are NaN; optional indicator fields use -1 for "absent".
struct SubjectRecord {
  std::string id;
  double entry = 0.0;
  double exit = std::numeric_limits<double>::quiet_NaN();
  int status = 0;
  std::string stratum2;
  int in_subcohort = -1;
  int in_phase3 = -1;
  std::string stratum3;
  std::vector<std::pair<std::string, double>> covariates;
  double weight2 = std::numeric_limits<double>::quiet_NaN();
  double weight3 = std::numeric_limits<double>::quiet_NaN();
};

// Column-oriented cohort store. Immutable after construction/validation;
// shared read-only by every downstream module. Strata labels are normalized
// to 0-based indices ordered by sorted label.
struct CohortTable {
  TimeScale timescale;
  std::vector<std::string> ids;
  Eigen::VectorXd entry;  // all zero on the time-on-study scale
  Eigen::VectorXd exit;
  Eigen::VectorXi status;

  std::vector<int> stratum2;  // all zero when unstratified
  std::vector<std::string> stratum2_labels;

  bool has_subcohort = false;
  Eigen::VectorXi in_subcohort;

  bool has_phase3 = false;
  Eigen::VectorXi in_phase3;
  std::vector<int> stratum3;
  std::vector<std::string> stratum3_labels;

  Eigen::MatrixXd covariates;  // n x C; NaN marks an absent phase-two cell
  std::vector<std::string> covariate_names;

  bool has_weight2 = false;
  Eigen::VectorXd weight2;
  bool has_weight3 = false;
  Eigen::VectorXd weight3;

  int n() const { return static_cast<int>(exit.size()); }
  int covariate_index(const std::string& name) const;
  // throws MissingColumn when absent
  Eigen::VectorXd covariate(const std::string& name) const;

  static CohortTable from_records(const std::vector<SubjectRecord>& records,
                                  TimeScale timescale);
  void validate() const;
};

struct StrataSummary {
  std::vector<std::string> labels;
  Eigen::VectorXi cohort_count;     // n_j
  Eigen::VectorXi subcohort_count;  // m_j
  Eigen::VectorXd design_weight;    // n_j / m_j

  int strata() const { return static_cast<int>(labels.size()); }
};

struct RiskProfile {
  std::vector<std::pair<std::string, double>> x;
  double tau1 = 0.0;
  double tau2 = 0.0;
};

// Builds the covariate vector for `profile` in the order given by `names`;
// errors if any model covariate is missing from the profile.
Eigen::VectorXd profile_vector(const RiskProfile& profile,
                               const std::vector<std::string>& names);

struct ColumnMapping {
  std::string status;
  std::vector<std::string> time;  // one column (time-on-study) or two (age scale)
  std::string subcohort;          // empty = column absent
  std::string strata;
  std::string weights_phase2;
  std::string phase3;
  std::string strata_phase3;
  std::string weights_phase3;
  char delimiter = ',';
};

// Reads a cohort CSV. Every unmapped column is loaded as a numeric covariate;
// empty cells and the literal "NA" mark absent values, anything else that does
// not parse is a ParseError naming the row and column.
CohortTable load_cohort(const std::string& path, const ColumnMapping& mapping);

// Writes a cohort in a form load_cohort reads back bit-for-bit (finite doubles).
void save_cohort(const CohortTable& cohort, const std::string& path,
                 const ColumnMapping& mapping);

// m_j comes from `counts_override` when provided, otherwise from the number of
// subcohort members (cases included) in each stratum.
StrataSummary strata_summary(const CohortTable& cohort,
                             const std::map<std::string, int>& counts_override = {});

// Phase-two design weights: 1 for cases, n_j/m_j for sampled non-cases, 0 for
// everyone else. A provided weights.phase2 column overrides phase-two members.
Eigen::VectorXd resolve_weights(const CohortTable& cohort, const StrataSummary& summary);

}  // namespace casecohort
