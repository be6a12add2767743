#include "hcmrisk/report.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "hcmrisk/cohort.hpp"

namespace hcmrisk::report {

namespace {

// JSON has no infinity; the ROC origin threshold is written as a string.
json finite_or_tag(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return nullptr;
  return v > 0 ? "inf" : "-inf";
}

std::string cell(double v) { return is_missing(v) ? std::string() : cohort::format_double(v); }

}  // namespace

json to_json(const metrics::MetricBlock& m) {
  return {{"auc", m.auc},
          {"sensitivity", m.sensitivity},
          {"specificity", m.specificity},
          {"accuracy", m.accuracy},
          {"balanced_accuracy", m.balanced_accuracy},
          {"f1", m.f1},
          {"confusion", {{"tp", m.tp}, {"fp", m.fp}, {"tn", m.tn}, {"fn", m.fn}}},
          {"undefined",
           {{"sensitivity", m.undefined_sensitivity},
            {"specificity", m.undefined_specificity},
            {"f1", m.undefined_f1},
            {"auc", m.undefined_auc}}}};
}

json to_json(const metrics::RocCurve& roc) {
  json pts = json::array();
  for (const auto& p : roc.points) pts.push_back({p.fpr, p.tpr, finite_or_tag(p.threshold)});
  return {{"auc", roc.auc}, {"points_fpr_tpr_threshold", pts}};
}

json to_json(const metrics::MeanRoc& roc) {
  return {{"auc_mean", roc.auc_mean},
          {"auc_std", roc.auc_std},
          {"fpr", roc.fpr},
          {"mean_tpr", roc.mean_tpr},
          {"std_tpr", roc.std_tpr}};
}

json to_json(const metrics::TestResult& t) {
  return {{"statistic", t.statistic}, {"p_value", t.p_value}, {"exact", t.exact}, {"degenerate", t.degenerate}};
}

json to_json(const metrics::WelchResult& t) {
  return {{"t", finite_or_tag(t.t)}, {"df", t.df}, {"p_value", t.p_value}};
}

json to_json(const survival::KmCurve& km) {
  json steps = json::array();
  for (const auto& s : km.steps) steps.push_back({s.time, s.survival, s.at_risk, s.events, s.censored});
  return {{"columns", {"time", "survival", "at_risk", "events", "censored"}}, {"steps", steps}};
}

json to_json(const survival::LogRankResult& lr) {
  return {{"chi2", lr.chi2},
          {"p_value", lr.p_value},
          {"observed_group1", lr.observed1},
          {"expected_group1", lr.expected1},
          {"variance", lr.variance},
          {"degenerate", lr.degenerate}};
}

json to_json(const longitudinal::SlopeSummary& s) {
  auto group = [](const longitudinal::GroupSlopes& g) {
    return json{{"n", g.n},
                {"mean_slope", g.mean_slope},
                {"std_slope", g.std_slope},
                {"mean_abs_slope", g.mean_abs_slope},
                {"std_abs_slope", g.std_abs_slope}};
  };
  return {{"event", group(s.event)},
          {"event_free", group(s.event_free)},
          {"slope_welch", to_json(s.slope_test)},
          {"abs_slope_welch", to_json(s.abs_slope_test)},
          {"event_fraction_rising", s.event_fraction_rising},
          {"excluded_trajectories", s.excluded},
          {"units", "probability per year since first exam"}};
}

json to_json(const explain::ImportanceRanking& r, std::size_t top) {
  json rows = json::array();
  const std::size_t n = top == 0 ? r.order.size() : std::min(top, r.order.size());
  for (std::size_t k = 0; k < n; ++k) {
    const auto j = r.order[k];
    rows.push_back({{"rank", k + 1},
                    {"feature", r.names[j]},
                    {"mean_abs_shap", r.importance[j]},
                    {"direction", r.direction[j]}});
  }
  return rows;
}

json hyperparams_json(const models::Hyperparams& h) {
  json j = json::object();
  for (const auto& [k, v] : h) j[k] = v;
  return j;
}

json to_json(const pipeline::FoldReport& f, std::span<const std::string> names) {
  auto named = [&](std::span<const std::size_t> idx) {
    json a = json::array();
    for (auto i : idx) a.push_back(names[i]);
    return a;
  };
  json dropped = json::array();
  for (const auto& d : f.dropped) dropped.push_back({{"dropped", names[d.dropped]}, {"kept", names[d.kept]}, {"r", d.r}});
  json probs = json::array();
  for (std::size_t i = 0; i < f.test_patients.size(); ++i)
    probs.push_back({{"patient_id", f.test_patients[i]}, {"label", f.test_labels[i]}, {"probability", f.test_probabilities[i]}});
  json j{{"fold_index", f.fold_index},
         {"train_rows", f.train_rows},
         {"undersampled_rows", f.undersampled_rows},
         {"unmeasured_features", named(f.unmeasured)},
         {"retained_features", named(f.retained)},
         {"correlation_dropped", dropped},
         {"selected_features", named(f.selected)},
         {"selection_inner_auc", f.selection_score},
         {"best_hyperparams", hyperparams_json(f.best_hyperparams)},
         {"grid_inner_auc", f.grid_score},
         {"test_metrics", to_json(f.metrics)},
         {"roc", to_json(f.roc)},
         {"test_predictions", probs}};
  if (f.shap) {
    j["shap"] = {{"method", std::string(explain::to_string(f.shap->method))},
                 {"output_space", f.shap->output_space},
                 {"base_value", f.shap->base_value},
                 {"rows", f.shap->values.rows()}};
  }
  return j;
}

std::string shap_csv(const explain::ShapMatrix& shap, std::span<const std::string> patient_ids) {
  std::ostringstream os;
  os << "patient_id";
  for (const auto& n : shap.feature_names) os << ",phi_" << n;
  for (const auto& n : shap.feature_names) os << ",value_" << n;
  os << '\n';
  for (std::size_t i = 0; i < shap.values.rows(); ++i) {
    os << (i < patient_ids.size() ? patient_ids[i] : std::to_string(i));
    for (std::size_t c = 0; c < shap.values.cols(); ++c) os << ',' << cell(shap.values(i, c));
    for (std::size_t c = 0; c < shap.values.cols(); ++c) os << ',' << cell(shap.feature_values(i, c));
    os << '\n';
  }
  return os.str();
}

std::string roc_csv(const metrics::RocCurve& roc) {
  std::ostringstream os;
  os << "fpr,tpr,threshold\n";
  for (const auto& p : roc.points)
    os << cell(p.fpr) << ',' << cell(p.tpr) << ',' << (std::isinf(p.threshold) ? "inf" : cell(p.threshold)) << '\n';
  return os.str();
}

std::string mean_roc_csv(const metrics::MeanRoc& roc) {
  std::ostringstream os;
  os << "fpr,mean_tpr,std_tpr\n";
  for (std::size_t i = 0; i < roc.fpr.size(); ++i)
    os << cell(roc.fpr[i]) << ',' << cell(roc.mean_tpr[i]) << ',' << cell(roc.std_tpr[i]) << '\n';
  return os.str();
}

std::string km_csv(std::span<const std::pair<std::string, survival::KmCurve>> curves) {
  std::ostringstream os;
  os << "curve,time,survival,at_risk,events,censored\n";
  for (const auto& [name, km] : curves)
    for (const auto& s : km.steps)
      os << name << ',' << cell(s.time) << ',' << cell(s.survival) << ',' << s.at_risk << ',' << s.events << ','
         << s.censored << '\n';
  return os.str();
}

std::string trajectories_csv(std::span<const longitudinal::RiskTrajectory> trajectories) {
  std::ostringstream os;
  os << "patient_id,t_years,probability\n";
  for (const auto& tr : trajectories)
    for (const auto& p : tr.points) os << tr.patient_id << ',' << cell(p.t) << ',' << cell(p.p) << '\n';
  return os.str();
}

std::vector<double> kernel_density(std::span<const double> values, std::span<const double> grid) {
  std::vector<double> out(grid.size(), 0.0);
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  double sd = metrics::population_std(values);
  if (values.size() > 1) sd *= std::sqrt(n / (n - 1.0));
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  auto q = [&](double f) {
    const double pos = f * (n - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  };
  const double iqr = q(0.75) - q(0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = sd > 0.0 ? sd : 1.0;
  const double h = 0.9 * spread * std::pow(n, -0.2);
  const double norm = 1.0 / (n * h * std::sqrt(2.0 * std::numbers::pi));
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double s = 0.0;
    for (double v : sorted) {
      const double z = (grid[g] - v) / h;
      s += std::exp(-0.5 * z * z);
    }
    out[g] = s * norm;
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed while writing " + path.string());
}

void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string() + " for hashing");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed for " + path.string());
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

}  // namespace hcmrisk::report
