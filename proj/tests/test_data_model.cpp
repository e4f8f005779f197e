#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "casecohort/data_model.hpp"
#include "casecohort/error.hpp"
#include "casecohort/rng.hpp"
#include "oracles.hpp"

using namespace casecohort;

namespace {

std::string write_temp(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << text;
  return path.string();
}

ColumnMapping age_scale_mapping() {
  ColumnMapping m;
  m.status = "status";
  m.time = {"entryage", "exitage"};
  m.subcohort = "subcohort";
  m.strata = "W";
  return m;
}

// cohort with given per-stratum cohort/subcohort counts; non-cases only except
// `cases_per_stratum` case rows (cases outside the subcohort)
CohortTable counts_cohort(const std::vector<std::pair<int, int>>& counts,
                          int cases_per_stratum = 0) {
  std::vector<SubjectRecord> records;
  for (size_t j = 0; j < counts.size(); ++j) {
    const auto [nj, mj] = counts[j];
    for (int i = 0; i < nj; ++i) {
      SubjectRecord r;
      r.entry = 0.0;
      r.exit = 1.0 + 0.001 * static_cast<double>(records.size());
      r.status = i < cases_per_stratum ? 1 : 0;
      r.stratum2 = "s" + std::to_string(j);
      r.in_subcohort = (i >= cases_per_stratum && i < cases_per_stratum + mj) ? 1 : 0;
      r.covariates = {{"x1", static_cast<double>(i)}};
      records.push_back(std::move(r));
    }
  }
  return CohortTable::from_records(records, TimeScale{TimeScaleKind::TimeOnStudy});
}

}  // namespace

TEST_SUITE("data_model") {

TEST_CASE("loads a small age-scale file with missing phase-two cells") {
  const std::string path = write_temp(
      "cc_load.csv",
      "X1,X2,W,entryage,exitage,status,subcohort\n"
      "0,0.45,0,67,80,0,0\n"
      "0,0.78,0,62,69,1,0\n"
      "0,1.78,1,64,72,0,1\n"
      "1,NA,0,61,73,0,0\n");
  const CohortTable t = load_cohort(path, age_scale_mapping());
  CHECK(t.n() == 4);
  CHECK(t.timescale.kind == TimeScaleKind::AgeScale);
  CHECK(t.status[1] == 1);
  CHECK(t.in_subcohort[2] == 1);
  // missing X2 retained as an explicit absent marker
  CHECK(std::isnan(t.covariate("X2")[3]));
  CHECK(t.covariate("X2")[2] == doctest::Approx(1.78));
  CHECK(t.stratum2_labels == std::vector<std::string>{"0", "1"});
  CHECK(t.stratum2[2] == 1);
}

TEST_CASE("header-only file is rejected") {
  const std::string path =
      write_temp("cc_empty.csv", "X1,X2,W,entryage,exitage,status,subcohort\n");
  CHECK_THROWS_WITH_AS(load_cohort(path, age_scale_mapping()),
                       doctest::Contains("no subjects"), CcError);
}

TEST_CASE("entry == exit violates the time invariant") {
  const std::string path = write_temp(
      "cc_badtime.csv",
      "X1,X2,W,entryage,exitage,status,subcohort\n"
      "0,0.45,0,67,67,0,1\n");
  try {
    load_cohort(path, age_scale_mapping());
    FAIL("expected InvariantViolation");
  } catch (const CcError& e) {
    CHECK(e.code() == ErrorCode::InvariantViolation);
    CHECK(std::string(e.what()).find("row 1") != std::string::npos);
  }
}

TEST_CASE("unparsable structural cell names row and column") {
  const std::string path = write_temp(
      "cc_badparse.csv",
      "X1,X2,W,entryage,exitage,status,subcohort\n"
      "0,0.45,0,67,oops,0,1\n");
  try {
    load_cohort(path, age_scale_mapping());
    FAIL("expected ParseError");
  } catch (const CcError& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find("exitage") != std::string::npos);
  }
}

TEST_CASE("stratified design weights match the published arithmetic") {
  const CohortTable t = counts_cohort({{30882, 3177}, {2665, 2380}});
  const StrataSummary s = strata_summary(t);
  CHECK(s.cohort_count[0] == 30882);
  CHECK(s.subcohort_count[1] == 2380);
  CHECK(std::round(s.design_weight[0] * 100.0) / 100.0 == doctest::Approx(9.72));
  CHECK(std::round(s.design_weight[1] * 100.0) / 100.0 == doctest::Approx(1.12));
}

TEST_CASE("unstratified design weight matches the published arithmetic") {
  const CohortTable t = counts_cohort({{33547, 4719}});
  const StrataSummary s = strata_summary(t);
  CHECK(std::round(s.design_weight[0] * 100.0) / 100.0 == doctest::Approx(7.11));
}

TEST_CASE("census sampling gives weight exactly one") {
  const CohortTable t = counts_cohort({{12, 12}, {7, 7}});
  const StrataSummary s = strata_summary(t);
  CHECK(s.design_weight[0] == 1.0);
  CHECK(s.design_weight[1] == 1.0);
}

TEST_CASE("counts override and its error paths") {
  const CohortTable t = counts_cohort({{20, 5}});
  const StrataSummary s = strata_summary(t, {{"s0", 10}});
  CHECK(s.subcohort_count[0] == 10);
  CHECK(s.design_weight[0] == 2.0);
  CHECK_THROWS_AS(strata_summary(t, {{"nope", 3}}), CcError);
}

TEST_CASE("zero sampled stratum is an error") {
  std::vector<SubjectRecord> records;
  for (int i = 0; i < 4; ++i) {
    SubjectRecord r;
    r.exit = 1.0 + i;
    r.status = 0;
    r.stratum2 = i < 2 ? "a" : "b";
    r.in_subcohort = i < 2 ? 1 : 0;  // stratum b never sampled
    r.covariates = {{"x1", 0.0}};
    records.push_back(std::move(r));
  }
  const CohortTable t =
      CohortTable::from_records(records, TimeScale{TimeScaleKind::TimeOnStudy});
  try {
    strata_summary(t);
    FAIL("expected ZeroSampled");
  } catch (const CcError& e) {
    CHECK(e.code() == ErrorCode::ZeroSampled);
  }
}

TEST_CASE("weight resolution: cases 1, sampled non-cases n/m, others 0") {
  const CohortTable t = counts_cohort({{2665, 2380}}, /*cases_per_stratum=*/5);
  const StrataSummary s = strata_summary(t);
  const Eigen::VectorXd w = resolve_weights(t, s);
  CHECK(w[0] == 1.0);  // case not in the subcohort
  CHECK(w[5] == doctest::Approx(2665.0 / 2380.0).epsilon(1e-15));
  CHECK(w[t.n() - 1] == 0.0);  // unsampled non-case

  // stratum total identity: sum over sampled non-cases = count * n/m
  double total = 0.0;
  int count = 0;
  for (int i = 0; i < t.n(); ++i)
    if (t.status[i] == 0 && t.in_subcohort[i] == 1) {
      total += w[i];
      ++count;
    }
  CHECK(total == doctest::Approx(count * 2665.0 / 2380.0).epsilon(1e-12));

  // idempotence
  const Eigen::VectorXd w2 = resolve_weights(t, s);
  CHECK((w - w2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("provided phase-two weights override computed values") {
  std::vector<SubjectRecord> records;
  for (int i = 0; i < 4; ++i) {
    SubjectRecord r;
    r.exit = 1.0 + i;
    r.status = i == 0 ? 1 : 0;
    r.in_subcohort = i < 3 ? 1 : 0;
    r.weight2 = i < 3 ? 3.5 : std::numeric_limits<double>::quiet_NaN();
    r.covariates = {{"x1", 0.0}};
    records.push_back(std::move(r));
  }
  const CohortTable t =
      CohortTable::from_records(records, TimeScale{TimeScaleKind::TimeOnStudy});
  const Eigen::VectorXd w = resolve_weights(t, strata_summary(t));
  CHECK(w[0] == 3.5);
  CHECK(w[1] == 3.5);
  CHECK(w[3] == 0.0);

  std::vector<SubjectRecord> bad = records;
  bad[1].weight2 = -1.0;
  const CohortTable tb =
      CohortTable::from_records(bad, TimeScale{TimeScaleKind::TimeOnStudy});
  CHECK_THROWS_AS(resolve_weights(tb, strata_summary(tb)), CcError);
}

TEST_CASE("phase-three membership outside phase two is rejected") {
  std::vector<SubjectRecord> records(2);
  records[0].exit = 1.0;
  records[0].status = 0;
  records[0].in_subcohort = 0;
  records[0].in_phase3 = 1;  // not a case, not sampled
  records[0].covariates = {{"x1", 0.0}};
  records[1].exit = 2.0;
  records[1].status = 1;
  records[1].in_subcohort = 0;
  records[1].in_phase3 = 1;
  records[1].covariates = {{"x1", 1.0}};
  CHECK_THROWS_AS(
      CohortTable::from_records(records, TimeScale{TimeScaleKind::TimeOnStudy}),
      CcError);
}

TEST_CASE("save/load round-trips bit for bit") {
  Rng rng(77);
  oracles::RandomCohortSpec spec;
  spec.n = 40;
  spec.p = 3;
  spec.with_design = true;
  spec.left_truncation = true;
  CohortTable t = oracles::random_cohort(rng, spec);
  // punch a hole to exercise the NA marker
  t.covariates(3, 0) = std::numeric_limits<double>::quiet_NaN();

  ColumnMapping m;
  m.status = "status";
  m.time = {"entry", "exit"};
  m.subcohort = "subcohort";
  const auto path = write_temp("cc_roundtrip.csv", "");
  save_cohort(t, path, m);
  const CohortTable back = load_cohort(path, m);

  REQUIRE(back.n() == t.n());
  CHECK((back.entry - t.entry).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.exit - t.exit).cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < t.n(); ++i) {
    CHECK(back.status[i] == t.status[i]);
    CHECK(back.in_subcohort[i] == t.in_subcohort[i]);
    for (int c = 0; c < t.covariates.cols(); ++c) {
      const double a = t.covariates(i, c), b = back.covariates(i, c);
      if (std::isnan(a)) {
        CHECK(std::isnan(b));
      } else {
        CHECK(a == b);
      }
    }
  }
}

TEST_CASE("custom delimiter and empty-cell missing markers") {
  const std::string path = write_temp(
      "cc_semicolon.csv",
      "X1;X2;time;status;subcohort\n"
      "0.5;1.25;3;1;1\n"
      "0.25;;4;0;0\n");
  ColumnMapping m;
  m.status = "status";
  m.time = {"time"};
  m.subcohort = "subcohort";
  m.delimiter = ';';
  const CohortTable t = load_cohort(path, m);
  CHECK(t.timescale.kind == TimeScaleKind::TimeOnStudy);
  CHECK(t.covariate("X2")[0] == 1.25);
  CHECK(std::isnan(t.covariate("X2")[1]));  // empty cell = absent
}

TEST_CASE("profile vector demands every model covariate") {
  RiskProfile profile;
  profile.x = {{"x1", 1.0}};
  CHECK_THROWS_AS(profile_vector(profile, {"x1", "x2"}), CcError);
  profile.x.push_back({"x2", -0.5});
  const Eigen::VectorXd v = profile_vector(profile, {"x2", "x1"});
  CHECK(v[0] == -0.5);
  CHECK(v[1] == 1.0);
}

}  // TEST_SUITE
