#include "casecohort/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "casecohort/csv.hpp"
#include "casecohort/error.hpp"

namespace casecohort {

namespace {

// sorted unique labels -> 0-based index per row
std::pair<std::vector<int>, std::vector<std::string>> normalize_labels(
    const std::vector<std::string>& raw) {
  std::vector<std::string> labels(raw);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  std::map<std::string, int> index;
  for (size_t k = 0; k < labels.size(); ++k) index[labels[k]] = static_cast<int>(k);
  std::vector<int> out(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) out[i] = index.at(raw[i]);
  return {std::move(out), std::move(labels)};
}

int parse_indicator(const std::string& token, const std::string& column, size_t row) {
  auto value = parse_double(token);
  if (!value || (*value != 0.0 && *value != 1.0))
    fail(ErrorCode::ParseError, "load_cohort",
         "row " + std::to_string(row) + ", column '" + column +
             "': expected 0/1, got '" + token + "'");
  return static_cast<int>(*value);
}

}  // namespace

int CohortTable::covariate_index(const std::string& name) const {
  for (size_t k = 0; k < covariate_names.size(); ++k)
    if (covariate_names[k] == name) return static_cast<int>(k);
  return -1;
}

Eigen::VectorXd CohortTable::covariate(const std::string& name) const {
  const int k = covariate_index(name);
  if (k < 0)
    fail(ErrorCode::MissingColumn, "CohortTable", "unknown covariate '" + name + "'");
  return covariates.col(k);
}

CohortTable CohortTable::from_records(const std::vector<SubjectRecord>& records,
                                      TimeScale timescale) {
  if (records.empty())
    fail(ErrorCode::InvariantViolation, "from_records", "no subjects");
  const int n = static_cast<int>(records.size());

  CohortTable t;
  t.timescale = timescale;
  t.entry.setZero(n);
  t.exit.resize(n);
  t.status.resize(n);

  std::vector<std::string> cov_names;
  for (const auto& [name, value] : records[0].covariates) cov_names.push_back(name);
  t.covariate_names = cov_names;
  t.covariates.resize(n, static_cast<int>(cov_names.size()));

  std::vector<std::string> raw2(n), raw3(n);
  bool any_sub = false, any_p3 = false, any_w2 = false, any_w3 = false;
  t.in_subcohort.setZero(n);
  t.in_phase3.setZero(n);
  t.weight2.setConstant(n, std::numeric_limits<double>::quiet_NaN());
  t.weight3.setConstant(n, std::numeric_limits<double>::quiet_NaN());

  for (int i = 0; i < n; ++i) {
    const auto& r = records[i];
    t.ids.push_back(r.id.empty() ? std::to_string(i + 1) : r.id);
    t.entry[i] = (timescale.kind == TimeScaleKind::AgeScale) ? r.entry : 0.0;
    t.exit[i] = r.exit;
    t.status[i] = r.status;
    raw2[i] = r.stratum2;
    raw3[i] = r.stratum3;
    if (r.in_subcohort >= 0) {
      any_sub = true;
      t.in_subcohort[i] = r.in_subcohort;
    }
    if (r.in_phase3 >= 0) {
      any_p3 = true;
      t.in_phase3[i] = r.in_phase3;
    }
    if (!std::isnan(r.weight2)) any_w2 = true;
    if (!std::isnan(r.weight3)) any_w3 = true;
    t.weight2[i] = r.weight2;
    t.weight3[i] = r.weight3;
    if (r.covariates.size() != cov_names.size())
      fail(ErrorCode::InvariantViolation, "from_records",
           "row " + std::to_string(i + 1) + ": inconsistent covariate set");
    for (size_t k = 0; k < cov_names.size(); ++k) {
      if (r.covariates[k].first != cov_names[k])
        fail(ErrorCode::InvariantViolation, "from_records",
             "row " + std::to_string(i + 1) + ": inconsistent covariate order");
      t.covariates(i, static_cast<int>(k)) = r.covariates[k].second;
    }
  }
  t.has_subcohort = any_sub;
  t.has_phase3 = any_p3;
  t.has_weight2 = any_w2;
  t.has_weight3 = any_w3;

  bool any_stratum2 = std::any_of(raw2.begin(), raw2.end(),
                                  [](const std::string& s) { return !s.empty(); });
  if (any_stratum2) {
    std::tie(t.stratum2, t.stratum2_labels) = normalize_labels(raw2);
  } else {
    t.stratum2.assign(n, 0);
    t.stratum2_labels = {"all"};
  }
  bool any_stratum3 = std::any_of(raw3.begin(), raw3.end(),
                                  [](const std::string& s) { return !s.empty(); });
  if (any_stratum3) {
    std::tie(t.stratum3, t.stratum3_labels) = normalize_labels(raw3);
  } else {
    t.stratum3.assign(n, 0);
    t.stratum3_labels = {"all"};
  }

  t.validate();
  return t;
}

void CohortTable::validate() const {
  if (n() == 0) fail(ErrorCode::InvariantViolation, "validate", "no subjects");
  for (int i = 0; i < n(); ++i) {
    if (!std::isfinite(exit[i]))
      fail(ErrorCode::InvariantViolation, "validate",
           "row " + std::to_string(i + 1) + ": non-finite exit time");
    if (!(entry[i] < exit[i]))
      fail(ErrorCode::InvariantViolation, "validate",
           "row " + std::to_string(i + 1) + ": entry must be strictly before exit");
    if (status[i] != 0 && status[i] != 1)
      fail(ErrorCode::InvariantViolation, "validate",
           "row " + std::to_string(i + 1) + ": status must be 0 or 1");
    if (has_phase3 && in_phase3[i] == 1) {
      const bool in_phase2 = status[i] == 1 || (has_subcohort && in_subcohort[i] == 1);
      if (!in_phase2)
        fail(ErrorCode::InvariantViolation, "validate",
             "row " + std::to_string(i + 1) +
                 ": phase-three member outside the phase-two sample");
    }
  }
}

Eigen::VectorXd profile_vector(const RiskProfile& profile,
                               const std::vector<std::string>& names) {
  Eigen::VectorXd x(static_cast<int>(names.size()));
  for (size_t k = 0; k < names.size(); ++k) {
    auto it = std::find_if(profile.x.begin(), profile.x.end(),
                           [&](const auto& kv) { return kv.first == names[k]; });
    if (it == profile.x.end())
      fail(ErrorCode::InvariantViolation, "profile",
           "profile missing model covariate '" + names[k] + "'");
    x[static_cast<int>(k)] = it->second;
  }
  return x;
}

CohortTable load_cohort(const std::string& path, const ColumnMapping& mapping) {
  const CsvTable csv = read_csv(path, mapping.delimiter);
  if (csv.rows.empty())
    fail(ErrorCode::InvariantViolation, "load_cohort", "no subjects");

  auto require = [&](const std::string& name) -> int {
    const int k = csv.column_index(name);
    if (k < 0)
      fail(ErrorCode::MissingColumn, "load_cohort", "missing column '" + name + "'");
    return k;
  };
  auto optional_col = [&](const std::string& name) -> int {
    if (name.empty()) return -1;
    return require(name);
  };

  if (mapping.time.empty() || mapping.time.size() > 2)
    fail(ErrorCode::ConfigError, "load_cohort",
         "time mapping must name one column (time-on-study) or two (age scale)");

  const int c_status = require(mapping.status);
  const int c_time1 = require(mapping.time[0]);
  const int c_time2 = mapping.time.size() == 2 ? require(mapping.time[1]) : -1;
  const int c_sub = optional_col(mapping.subcohort);
  const int c_strata = optional_col(mapping.strata);
  const int c_w2 = optional_col(mapping.weights_phase2);
  const int c_p3 = optional_col(mapping.phase3);
  const int c_strata3 = optional_col(mapping.strata_phase3);
  const int c_w3 = optional_col(mapping.weights_phase3);

  std::set<int> structural = {c_status, c_time1};
  for (int c : {c_time2, c_sub, c_strata, c_w2, c_p3, c_strata3, c_w3})
    if (c >= 0) structural.insert(c);

  // stratification variables are phase-one covariates and are commonly reused
  // as predictors or auxiliaries; keep them loadable as covariates when numeric
  for (int c : {c_strata, c_strata3}) {
    if (c < 0) continue;
    bool numeric = true;
    for (const auto& row : csv.rows)
      if (!parse_double(row[c])) numeric = false;
    if (numeric) structural.erase(c);
  }

  const int n = static_cast<int>(csv.rows.size());
  CohortTable t;
  t.timescale.kind =
      (c_time2 >= 0) ? TimeScaleKind::AgeScale : TimeScaleKind::TimeOnStudy;
  t.entry.setZero(n);
  t.exit.resize(n);
  t.status.resize(n);
  t.has_subcohort = c_sub >= 0;
  t.in_subcohort.setZero(n);
  t.has_phase3 = c_p3 >= 0;
  t.in_phase3.setZero(n);
  t.has_weight2 = c_w2 >= 0;
  t.weight2.setConstant(n, std::numeric_limits<double>::quiet_NaN());
  t.has_weight3 = c_w3 >= 0;
  t.weight3.setConstant(n, std::numeric_limits<double>::quiet_NaN());

  std::vector<int> cov_cols;
  for (int k = 0; k < static_cast<int>(csv.header.size()); ++k)
    if (!structural.count(k)) cov_cols.push_back(k);
  for (int k : cov_cols) t.covariate_names.push_back(csv.header[k]);
  t.covariates.resize(n, static_cast<int>(cov_cols.size()));

  auto parse_numeric = [&](const std::string& token, int col, size_t row) -> double {
    auto value = parse_double(token);
    if (!value)
      fail(ErrorCode::ParseError, "load_cohort",
           "row " + std::to_string(row) + ", column '" + csv.header[col] +
               "': cannot parse '" + token + "'");
    return *value;
  };

  std::vector<std::string> raw2(n), raw3(n);
  for (int i = 0; i < n; ++i) {
    const auto& row = csv.rows[i];
    const size_t row_no = static_cast<size_t>(i) + 2;  // 1-based incl. header
    t.ids.push_back(std::to_string(i + 1));
    t.status[i] = parse_indicator(row[c_status], csv.header[c_status], row_no);
    if (c_time2 >= 0) {
      t.entry[i] = parse_numeric(row[c_time1], c_time1, row_no);
      t.exit[i] = parse_numeric(row[c_time2], c_time2, row_no);
    } else {
      t.exit[i] = parse_numeric(row[c_time1], c_time1, row_no);
    }
    if (c_sub >= 0)
      t.in_subcohort[i] = parse_indicator(row[c_sub], csv.header[c_sub], row_no);
    if (c_strata >= 0) raw2[i] = row[c_strata];
    if (c_p3 >= 0)
      t.in_phase3[i] = parse_indicator(row[c_p3], csv.header[c_p3], row_no);
    if (c_strata3 >= 0) raw3[i] = row[c_strata3];
    if (c_w2 >= 0) t.weight2[i] = parse_numeric(row[c_w2], c_w2, row_no);
    if (c_w3 >= 0) t.weight3[i] = parse_numeric(row[c_w3], c_w3, row_no);
    for (size_t k = 0; k < cov_cols.size(); ++k) {
      const std::string& token = row[cov_cols[k]];
      if (token.empty() || token == "NA") {
        t.covariates(i, static_cast<int>(k)) = std::numeric_limits<double>::quiet_NaN();
      } else {
        t.covariates(i, static_cast<int>(k)) = parse_numeric(token, cov_cols[k], row_no);
      }
    }
  }

  if (c_strata >= 0) {
    std::tie(t.stratum2, t.stratum2_labels) = normalize_labels(raw2);
  } else {
    t.stratum2.assign(n, 0);
    t.stratum2_labels = {"all"};
  }
  if (c_strata3 >= 0) {
    std::tie(t.stratum3, t.stratum3_labels) = normalize_labels(raw3);
  } else {
    t.stratum3.assign(n, 0);
    t.stratum3_labels = {"all"};
  }

  t.validate();
  return t;
}

void save_cohort(const CohortTable& cohort, const std::string& path,
                 const ColumnMapping& mapping) {
  CsvTable csv;
  const bool age = cohort.timescale.kind == TimeScaleKind::AgeScale;
  if (mapping.time.size() != (age ? 2u : 1u))
    fail(ErrorCode::ConfigError, "save_cohort", "time mapping does not match time scale");

  csv.header.push_back(mapping.status);
  for (const auto& tcol : mapping.time) csv.header.push_back(tcol);
  if (!mapping.subcohort.empty()) csv.header.push_back(mapping.subcohort);
  if (!mapping.strata.empty()) csv.header.push_back(mapping.strata);
  if (!mapping.weights_phase2.empty()) csv.header.push_back(mapping.weights_phase2);
  if (!mapping.phase3.empty()) csv.header.push_back(mapping.phase3);
  if (!mapping.strata_phase3.empty()) csv.header.push_back(mapping.strata_phase3);
  if (!mapping.weights_phase3.empty()) csv.header.push_back(mapping.weights_phase3);
  for (const auto& name : cohort.covariate_names) csv.header.push_back(name);

  for (int i = 0; i < cohort.n(); ++i) {
    std::vector<std::string> row;
    row.push_back(std::to_string(cohort.status[i]));
    if (age) row.push_back(format_double(cohort.entry[i]));
    row.push_back(format_double(cohort.exit[i]));
    if (!mapping.subcohort.empty()) row.push_back(std::to_string(cohort.in_subcohort[i]));
    if (!mapping.strata.empty())
      row.push_back(cohort.stratum2_labels[cohort.stratum2[i]]);
    if (!mapping.weights_phase2.empty()) row.push_back(format_double(cohort.weight2[i]));
    if (!mapping.phase3.empty()) row.push_back(std::to_string(cohort.in_phase3[i]));
    if (!mapping.strata_phase3.empty())
      row.push_back(cohort.stratum3_labels[cohort.stratum3[i]]);
    if (!mapping.weights_phase3.empty()) row.push_back(format_double(cohort.weight3[i]));
    for (int k = 0; k < cohort.covariates.cols(); ++k)
      row.push_back(format_double(cohort.covariates(i, k)));
    csv.rows.push_back(std::move(row));
  }
  write_csv(path, csv, mapping.delimiter);
}

StrataSummary strata_summary(const CohortTable& cohort,
                             const std::map<std::string, int>& counts_override) {
  const int J = static_cast<int>(cohort.stratum2_labels.size());
  StrataSummary s;
  s.labels = cohort.stratum2_labels;
  s.cohort_count.setZero(J);
  s.subcohort_count.setZero(J);
  s.design_weight.setZero(J);

  for (int i = 0; i < cohort.n(); ++i) {
    s.cohort_count[cohort.stratum2[i]] += 1;
    if (cohort.has_subcohort && cohort.in_subcohort[i] == 1)
      s.subcohort_count[cohort.stratum2[i]] += 1;
  }

  for (const auto& [label, count] : counts_override) {
    auto it = std::find(s.labels.begin(), s.labels.end(), label);
    if (it == s.labels.end())
      fail(ErrorCode::UnknownStratumInOverride, "strata_summary",
           "override names unknown stratum '" + label + "'");
    s.subcohort_count[static_cast<int>(it - s.labels.begin())] = count;
  }

  for (int j = 0; j < J; ++j) {
    if (s.subcohort_count[j] <= 0)
      fail(ErrorCode::ZeroSampled, "strata_summary",
           "stratum '" + s.labels[j] + "' has no sampled subjects");
    if (s.subcohort_count[j] > s.cohort_count[j])
      fail(ErrorCode::InvariantViolation, "strata_summary",
           "stratum '" + s.labels[j] + "': m exceeds n");
    s.design_weight[j] =
        static_cast<double>(s.cohort_count[j]) / static_cast<double>(s.subcohort_count[j]);
  }
  return s;
}

Eigen::VectorXd resolve_weights(const CohortTable& cohort, const StrataSummary& summary) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(cohort.n());
  for (int i = 0; i < cohort.n(); ++i) {
    const bool sampled = cohort.has_subcohort && cohort.in_subcohort[i] == 1;
    if (cohort.status[i] == 1) {
      w[i] = 1.0;
    } else if (sampled) {
      w[i] = summary.design_weight[cohort.stratum2[i]];
    }
    if (w[i] > 0.0 && cohort.has_weight2) {
      const double provided = cohort.weight2[i];
      if (!std::isnan(provided)) {
        if (!(provided > 0.0))
          fail(ErrorCode::NegativeOrZeroProvidedWeight, "resolve_weights",
               "row " + std::to_string(i + 1) +
                   ": provided phase-two weight must be positive");
        w[i] = provided;
      }
    }
  }
  return w;
}

}  // namespace casecohort
