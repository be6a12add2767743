#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcmrisk/explain.hpp"
#include "hcmrisk/longitudinal.hpp"
#include "hcmrisk/metrics.hpp"
#include "hcmrisk/pipeline.hpp"
#include "hcmrisk/survival.hpp"

namespace hcmrisk::report {

using nlohmann::json;

json to_json(const metrics::MetricBlock& m);
json to_json(const metrics::RocCurve& roc);
json to_json(const metrics::MeanRoc& roc);
json to_json(const metrics::TestResult& t);
json to_json(const metrics::WelchResult& t);
json to_json(const survival::KmCurve& km);
json to_json(const survival::LogRankResult& lr);
json to_json(const longitudinal::SlopeSummary& s);
json to_json(const explain::ImportanceRanking& r, std::size_t top = 0);
json hyperparams_json(const models::Hyperparams& h);

// Fold summary; the SHAP matrix itself goes to CSV.
json to_json(const pipeline::FoldReport& fold, std::span<const std::string> feature_names);

// CSV cells hold shortest round-trip doubles; NaN is an empty cell.
std::string shap_csv(const explain::ShapMatrix& shap, std::span<const std::string> patient_ids);
std::string roc_csv(const metrics::RocCurve& roc);
std::string mean_roc_csv(const metrics::MeanRoc& roc);
std::string km_csv(std::span<const std::pair<std::string, survival::KmCurve>> curves);
std::string trajectories_csv(std::span<const longitudinal::RiskTrajectory> trajectories);

// Gaussian kernel density on `grid` with Silverman's bandwidth.
std::vector<double> kernel_density(std::span<const double> values, std::span<const double> grid);

// Output writing: creates parent directories; JSON ends with a newline.
void write_text(const std::filesystem::path& path, const std::string& text);
void write_json(const std::filesystem::path& path, const json& j);

// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace hcmrisk::report
