#include "casecohort/fit_artifact.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "casecohort/error.hpp"
#include "casecohort/variance.hpp"
#include "casecohort/calibration.hpp"

namespace casecohort {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr const char* kMagic = "CCSFIT";
constexpr int kSchemaVersion = 1;

struct Block {
  std::string name;
  const double* data;
  int rows, cols;
};

void append_block(std::vector<Block>& blocks, const std::string& name,
                  const Eigen::MatrixXd& m) {
  blocks.push_back({name, m.data(), static_cast<int>(m.rows()),
                    static_cast<int>(m.cols())});
}
void append_block(std::vector<Block>& blocks, const std::string& name,
                  const Eigen::VectorXd& v) {
  blocks.push_back({name, v.data(), static_cast<int>(v.size()), 1});
}

}  // namespace

void save_fit_artifact(const FitArtifact& a, const std::string& path) {
  ordered_json header;
  header["schema_version"] = kSchemaVersion;
  header["variant"] = static_cast<int>(a.variant);
  header["phase3_mode"] = static_cast<int>(a.phase3_mode);
  header["covariate_names"] = a.covariate_names;
  header["tau1"] = a.tau1;
  header["tau2"] = a.tau2;
  header["lambda0"] = a.lambda0;
  header["cohort_n"] = a.cohort_n;
  header["stratum2_labels"] = a.stratum2_labels;
  header["stratum3_labels"] = a.stratum3_labels;
  header["strata_n"] = std::vector<int>(a.strata_n.data(), a.strata_n.data() + a.strata_n.size());
  header["strata_m"] = std::vector<int>(a.strata_m.data(), a.strata_m.data() + a.strata_m.size());
  header["status"] = std::vector<int>(a.status.data(), a.status.data() + a.status.size());
  header["stratum2"] = a.stratum2;
  header["stratum3"] = a.stratum3;

  std::vector<Block> blocks;
  append_block(blocks, "beta", a.beta);
  append_block(blocks, "design_w2", a.design_w2);
  append_block(blocks, "w3", a.w3);
  append_block(blocks, "overall", a.overall);
  append_block(blocks, "infl_beta", a.infl_beta);
  append_block(blocks, "infl_lambda", a.infl_lambda);
  append_block(blocks, "anchor_beta", a.anchor_beta);
  append_block(blocks, "anchor_lambda", a.anchor_lambda);

  ordered_json manifest = ordered_json::array();
  for (const auto& b : blocks) {
    ordered_json item;
    item["name"] = b.name;
    item["rows"] = b.rows;
    item["cols"] = b.cols;
    manifest.push_back(std::move(item));
  }
  header["blocks"] = std::move(manifest);

  const std::string header_text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "save_fit_artifact", "cannot write " + path);
  out << kMagic << ' ' << kSchemaVersion << ' ' << header_text.size() << '\n';
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (const auto& b : blocks)
    out.write(reinterpret_cast<const char*>(b.data),
              static_cast<std::streamsize>(sizeof(double)) * b.rows * b.cols);
  if (!out) fail(ErrorCode::IoError, "save_fit_artifact", "write failed: " + path);
}

FitArtifact load_fit_artifact(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "load_fit_artifact", "cannot open " + path);

  std::string magic;
  int version = 0;
  size_t header_size = 0;
  in >> magic >> version >> header_size;
  in.ignore(1);  // newline
  if (magic != kMagic)
    fail(ErrorCode::StaleArtifact, "load_fit_artifact", "not a fit artifact: " + path);
  if (version != kSchemaVersion)
    fail(ErrorCode::StaleArtifact, "load_fit_artifact",
         "artifact schema version " + std::to_string(version) + " != " +
             std::to_string(kSchemaVersion));

  std::string header_text(header_size, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_size));
  if (!in) fail(ErrorCode::StaleArtifact, "load_fit_artifact", "truncated header");
  ordered_json header = ordered_json::parse(header_text, nullptr, false);
  if (header.is_discarded())
    fail(ErrorCode::StaleArtifact, "load_fit_artifact", "corrupt header");

  FitArtifact a;
  a.schema_version = header["schema_version"].get<int>();
  a.variant = static_cast<AnalysisVariant>(header["variant"].get<int>());
  a.phase3_mode = static_cast<Phase3Spec::Mode>(header["phase3_mode"].get<int>());
  a.covariate_names = header["covariate_names"].get<std::vector<std::string>>();
  a.tau1 = header["tau1"].get<double>();
  a.tau2 = header["tau2"].get<double>();
  a.lambda0 = header["lambda0"].get<double>();
  a.cohort_n = header["cohort_n"].get<int>();
  a.stratum2_labels = header["stratum2_labels"].get<std::vector<std::string>>();
  a.stratum3_labels = header["stratum3_labels"].get<std::vector<std::string>>();
  const auto strata_n = header["strata_n"].get<std::vector<int>>();
  const auto strata_m = header["strata_m"].get<std::vector<int>>();
  a.strata_n = Eigen::Map<const Eigen::VectorXi>(strata_n.data(),
                                                 static_cast<int>(strata_n.size()));
  a.strata_m = Eigen::Map<const Eigen::VectorXi>(strata_m.data(),
                                                 static_cast<int>(strata_m.size()));
  const auto status = header["status"].get<std::vector<int>>();
  a.status = Eigen::Map<const Eigen::VectorXi>(status.data(),
                                               static_cast<int>(status.size()));
  a.stratum2 = header["stratum2"].get<std::vector<int>>();
  a.stratum3 = header["stratum3"].get<std::vector<int>>();

  auto read_block = [&](Eigen::MatrixXd& m, int rows, int cols) {
    m.resize(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double)) * rows * cols);
  };
  for (const auto& item : header["blocks"]) {
    const std::string name = item["name"].get<std::string>();
    const int rows = item["rows"].get<int>();
    const int cols = item["cols"].get<int>();
    Eigen::MatrixXd m;
    read_block(m, rows, cols);
    if (name == "beta") a.beta = m.col(0);
    else if (name == "design_w2") a.design_w2 = rows ? m.col(0) : Eigen::VectorXd();
    else if (name == "w3") a.w3 = rows ? m.col(0) : Eigen::VectorXd();
    else if (name == "overall") a.overall = rows ? m.col(0) : Eigen::VectorXd();
    else if (name == "infl_beta") a.infl_beta = m;
    else if (name == "infl_lambda") a.infl_lambda = rows ? m.col(0) : Eigen::VectorXd();
    else if (name == "anchor_beta") a.anchor_beta = m;
    else if (name == "anchor_lambda") a.anchor_lambda = rows ? m.col(0) : Eigen::VectorXd();
    else fail(ErrorCode::StaleArtifact, "load_fit_artifact", "unknown block " + name);
  }
  if (!in) fail(ErrorCode::StaleArtifact, "load_fit_artifact", "truncated blocks");
  return a;
}

std::vector<PureRiskRow> estimate_pure_risk(const FitArtifact& a,
                                            const std::vector<RiskProfile>& profiles) {
  std::vector<PureRiskRow> rows;
  const StrataSummary summary =
      a.strata_n.size() ? a.summary() : StrataSummary{};

  for (const auto& given : profiles) {
    RiskProfile profile = given;
    profile.tau1 = a.tau1;
    profile.tau2 = a.tau2;
    const Eigen::VectorXd x = profile_vector(profile, a.covariate_names);
    const double rr = std::exp(a.beta.dot(x));
    const double pi = 1.0 - std::exp(-rr * a.lambda0);

    const Eigen::MatrixXd delta =
        (1.0 - pi) * rr * (a.infl_lambda + a.lambda0 * (a.infl_beta * x));

    PureRiskRow row;
    row.profile = profile;
    row.risk = pi;
    row.robust_variance = (delta.transpose() * delta)(0, 0);

    switch (a.variant) {
      case AnalysisVariant::WholeCohort:
        break;
      case AnalysisVariant::Design: {
        const Eigen::MatrixXd V =
            horvitz_thompson_phase1_term(delta, a.design_w2, a.cohort_n) +
            pairwise_sampling_term(delta, a.stratum2, a.status, a.design_w2, summary);
        row.variance = V(0, 0);
        break;
      }
      case AnalysisVariant::Calibrated: {
        const Eigen::MatrixXd anchor =
            (1.0 - pi) * rr * (a.anchor_lambda + a.lambda0 * (a.anchor_beta * x));
        row.variance = variance_calibrated_kernel(delta, anchor, a.status, a.stratum2,
                                                  a.cohort_n, summary, a.design_w2)
                           .total(0, 0);
        break;
      }
      case AnalysisVariant::Phase3: {
        const Phase3Variance v = variance_phase3_kernel(
            delta, a.status, a.stratum2, summary, a.stratum3,
            static_cast<int>(a.stratum3_labels.size()), a.cohort_n, a.design_w2,
            a.w3, a.overall, a.phase3_mode);
        if (v.design) row.variance_design = (*v.design)(0, 0);
        if (v.estimated) row.variance_estimated = (*v.estimated)(0, 0);
        break;
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace casecohort
