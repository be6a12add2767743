#include "hcmrisk/commands.hpp"

#include <openssl/opensslv.h>

#include <algorithm>
#include <boost/version.hpp>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include <Eigen/Core>

#include "hcmrisk/cohort.hpp"
#include "hcmrisk/esc.hpp"
#include "hcmrisk/explain.hpp"
#include "hcmrisk/longitudinal.hpp"
#include "hcmrisk/metrics.hpp"
#include "hcmrisk/pipeline.hpp"
#include "hcmrisk/report.hpp"
#include "hcmrisk/survival.hpp"
#include "hcmrisk/svg.hpp"
#include "hcmrisk/synth.hpp"

namespace hcmrisk::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// --- configuration --------------------------------------------------------------

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> k{
      "seed",        "output_dir",      "schema",          "cohort",         "external_cohort",
      "ensemble",    "horizon_years",   "models",          "grids",          "cv",
      "sffs_cap",    "correlation_threshold", "threshold", "shap",           "shap_permutations",
      "shap_background", "synth",       "display_min_exams"};
  return k;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

ExperimentConfig ExperimentConfig::load(const RunOptions& options) {
  if (options.config.empty()) throw ConfigError("--config is required");
  json j;
  try {
    j = json::parse(read_file(options.config));
  } catch (const json::exception& e) {
    throw ConfigError("config " + options.config.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j, options.config.parent_path(), options);
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir,
                                             const RunOptions& overrides) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!known_keys().contains(k)) throw ConfigError("unknown config key '" + k + "'");
  ExperimentConfig c;
  c.raw = j;
  c.base_dir = base_dir;
  if (overrides.seed) {
    c.seed = *overrides.seed;
    c.raw["seed"] = c.seed;
  } else if (!j.contains("seed")) {
    throw ConfigError("config is missing the mandatory 'seed' (an unsigned integer)");
  } else if (!j["seed"].is_number_unsigned() &&
             !(j["seed"].is_number_integer() && j["seed"].get<std::int64_t>() >= 0)) {
    throw ConfigError("config 'seed' must be an unsigned integer");
  } else {
    c.seed = j["seed"].get<std::uint64_t>();
    c.raw["seed"] = c.seed;
  }
  if (overrides.out) {
    c.output_dir = *overrides.out;
  } else {
    c.output_dir = c.path_or("output_dir", (base_dir / "out").lexically_normal());
  }
  return c;
}

fs::path ExperimentConfig::path(const std::string& key) const {
  if (!raw.contains(key)) throw ConfigError("config needs '" + key + "'");
  if (!raw[key].is_string()) throw ConfigError("config '" + key + "' must be a path string");
  fs::path p = raw[key].get<std::string>();
  return p.is_absolute() ? p : (base_dir / p).lexically_normal();
}

fs::path ExperimentConfig::path_or(const std::string& key, const fs::path& fallback) const {
  if (!raw.contains(key)) return fallback;
  return path(key);
}

double ExperimentConfig::number_or(const std::string& key, double fallback) const {
  if (!raw.contains(key)) return fallback;
  if (!raw[key].is_number()) throw ConfigError("config '" + key + "' must be a number");
  return raw[key].get<double>();
}

bool ExperimentConfig::flag_or(const std::string& key, bool fallback) const {
  if (!raw.contains(key)) return fallback;
  if (!raw[key].is_boolean()) throw ConfigError("config '" + key + "' must be true or false");
  return raw[key].get<bool>();
}

// --- shared helpers ----------------------------------------------------------------

namespace {

cohort::FeatureSchema load_schema(const ExperimentConfig& cfg) {
  return cfg.has("schema") ? cohort::FeatureSchema::load(cfg.path("schema")) : cohort::FeatureSchema::demo();
}

cohort::EndpointSpec endpoint(const ExperimentConfig& cfg) {
  cohort::EndpointSpec ep{cfg.number_or("horizon_years", 5.0)};
  ep.validate();
  return ep;
}

std::size_t size_or(const ExperimentConfig& cfg, const std::string& key, std::size_t fallback) {
  const double v = cfg.number_or(key, static_cast<double>(fallback));
  if (v < 0 || v != std::floor(v)) throw ConfigError("config '" + key + "' must be a non-negative integer");
  return static_cast<std::size_t>(v);
}

std::vector<models::ModelKind> model_kinds(const ExperimentConfig& cfg) {
  if (!cfg.has("models")) return {models::ModelKind::RandomForest};
  const auto& m = cfg.raw["models"];
  if (!m.is_array() || m.empty()) throw ConfigError("config 'models' must be a non-empty array");
  std::vector<models::ModelKind> out;
  for (const auto& v : m) {
    if (!v.is_string()) throw ConfigError("config 'models' entries must be strings (rf, gb, lr, svm)");
    try {
      const auto k = models::parse_model_kind(v.get<std::string>());
      if (std::find(out.begin(), out.end(), k) != out.end())
        throw ConfigError("model '" + v.get<std::string>() + "' listed twice");
      out.push_back(k);
    } catch (const models::ModelError& e) {
      throw ConfigError(e.what());
    }
  }
  return out;
}

pipeline::Grid grid_for(const ExperimentConfig& cfg, models::ModelKind kind) {
  const std::string name(models::to_string(kind));
  if (!cfg.has("grids") || !cfg.raw["grids"].contains(name)) return pipeline::default_grid(kind);
  pipeline::Grid g;
  try {
    for (const auto& [k, v] : cfg.raw["grids"][name].items()) g[k] = v.get<std::vector<double>>();
  } catch (const json::exception&) {
    throw ConfigError("grid for " + name + " must map names to arrays of numbers");
  }
  for (const auto& hp : pipeline::expand_grid(g)) {
    try {
      models::ClassifierSpec{kind, hp, 0}.validate();
    } catch (const models::ModelError& e) {
      throw ConfigError("grid for " + name + ": " + e.what());
    }
  }
  return g;
}

pipeline::CvPlan cv_plan(const ExperimentConfig& cfg) {
  pipeline::CvPlan plan;
  plan.seed = cfg.seed;
  if (cfg.has("cv")) {
    const auto& cv = cfg.raw["cv"];
    for (const auto& [k, v] : cv.items())
      if (k != "outer_folds" && k != "inner_folds") throw ConfigError("unknown cv key '" + k + "'");
    if (cv.contains("outer_folds")) plan.outer_folds = cv["outer_folds"].get<std::size_t>();
    if (cv.contains("inner_folds")) plan.inner_folds = cv["inner_folds"].get<std::size_t>();
  }
  try {
    plan.validate();
  } catch (const pipeline::PipelineError& e) {
    throw ConfigError(e.what());
  }
  return plan;
}

struct EscColumn {
  std::vector<double> scores;
  std::string unavailable;  // reason, empty when scores are valid
  std::size_t out_of_range = 0;
};

template <class ExamFor>
EscColumn esc_scores(const cohort::FeatureSchema& schema, const std::vector<std::string>& ids, ExamFor exam_for) {
  EscColumn c;
  try {
    for (const auto& id : ids) {
      const auto s = esc::esc_risk(esc::inputs_from_exam(schema, exam_for(id)));
      c.scores.push_back(s.risk);
      if (s.out_of_range.any()) ++c.out_of_range;
    }
  } catch (const std::exception& e) {
    c.scores.clear();
    c.unavailable = e.what();
  }
  return c;
}

json mean_std(const std::vector<double>& v) {
  return {{"mean", metrics::mean(v)}, {"std", metrics::population_std(v)}};
}

std::string mean_roc_svg(const metrics::MeanRoc& mr, const std::vector<metrics::RocCurve>& folds,
                         const std::string& title) {
  std::vector<svg::Series> series;
  for (std::size_t k = 0; k < folds.size(); ++k) {
    svg::Series s;
    for (const auto& p : folds[k].points) {
      s.x.push_back(p.fpr);
      s.y.push_back(p.tpr);
    }
    s.color = "#b0c4de";
    s.label = k == 0 ? "outer folds" : "";
    series.push_back(std::move(s));
  }
  svg::Series m;
  m.x = mr.fpr;
  m.y = mr.mean_tpr;
  for (std::size_t i = 0; i < mr.fpr.size(); ++i) {
    m.band_low.push_back(std::max(0.0, mr.mean_tpr[i] - mr.std_tpr[i]));
    m.band_high.push_back(std::min(1.0, mr.mean_tpr[i] + mr.std_tpr[i]));
  }
  char label[64];
  std::snprintf(label, sizeof label, "mean AUC %.3f +/- %.3f", mr.auc_mean, mr.auc_std);
  m.label = label;
  m.color = "#1f4e9c";
  series.push_back(std::move(m));
  svg::Axes ax{title, "false positive rate", "true positive rate", 0, 1, 0, 1, true};
  return svg::line_plot(ax, series);
}

std::string km_svg(const std::string& title, const survival::KmCurve& low, const survival::KmCurve& high,
                   const std::string& low_label, const std::string& high_label) {
  auto series = [](const survival::KmCurve& km, std::string label, std::string color) {
    svg::Series s;
    for (const auto& st : km.steps) {
      s.x.push_back(st.time);
      s.y.push_back(st.survival);
    }
    s.step = true;
    s.label = std::move(label);
    s.color = std::move(color);
    return s;
  };
  double tmax = 1.0;
  for (const auto* km : {&low, &high})
    if (!km->steps.empty()) tmax = std::max(tmax, km->steps.back().time);
  std::vector<svg::Series> s{series(low, low_label, "#1f77b4"), series(high, high_label, "#d62728")};
  svg::Axes ax{title, "years", "event-free survival", 0, tmax, 0, 1, false};
  return svg::line_plot(ax, s);
}

std::vector<survival::Subject> subjects_for(const cohort::Cohort& c, const std::vector<std::string>& ids,
                                            const std::vector<int>& groups) {
  std::vector<survival::Subject> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& o = c.outcomes.at(ids[i]);
    survival::Subject s;
    s.event = o.event_time_years.has_value();
    s.time = s.event ? *o.event_time_years : o.followup_years;
    s.group = groups[i];
    out.push_back(s);
  }
  return out;
}

json library_versions() {
  return {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"boost", BOOST_LIB_VERSION},
          {"openssl", OPENSSL_VERSION_TEXT},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

}  // namespace

// --- train -----------------------------------------------------------------------------

json cmd_train(const ExperimentConfig& cfg) {
  const auto schema = load_schema(cfg);
  const auto ep = endpoint(cfg);
  cohort::LoadStats stats;
  const auto loaded = cohort::derive_labels(cohort::load_cohort(cfg.path("cohort"), schema, &stats), ep);
  const auto train = cohort::apply_inclusion(loaded, ep);
  const auto table = cohort::baseline_table(train);
  const auto names = schema.names();
  const std::size_t n_pos = static_cast<std::size_t>(std::count(table.y.begin(), table.y.end(), 1));
  if (n_pos == 0 || n_pos == table.y.size())
    throw ConfigError("training cohort has a single outcome class after inclusion");

  const auto plan = cv_plan(cfg);
  pipeline::NestedCvOptions opt;
  opt.correlation_threshold = cfg.number_or("correlation_threshold", opt.correlation_threshold);
  opt.sffs_cap = size_or(cfg, "sffs_cap", opt.sffs_cap);
  opt.compute_shap = cfg.flag_or("shap", true);
  opt.shap_background = size_or(cfg, "shap_background", opt.shap_background);
  opt.shap_permutations = size_or(cfg, "shap_permutations", opt.shap_permutations);
  opt.threshold = cfg.number_or("threshold", opt.threshold);
  if (opt.sffs_cap < 1) throw ConfigError("config 'sffs_cap' must be at least 1");

  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < table.patient_ids.size(); ++i) row_of[table.patient_ids[i]] = i;

  const auto esc = esc_scores(schema, table.patient_ids,
                              [&](const std::string& id) -> const cohort::PatientExam& { return cohort::baseline_exam(train, id); });
  std::optional<double> esc_threshold;
  json esc_block;
  if (esc.unavailable.empty()) {
    const auto roc = metrics::roc_auc(esc.scores, table.y);
    esc_threshold = metrics::upper_left_threshold(roc);
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < table.y.size(); ++i) (table.y[i] ? pos : neg).push_back(esc.scores[i]);
    esc_block = {{"available", true},
                 {"auc_training_cohort", roc.auc},
                 {"upper_left_threshold", report::json(*esc_threshold)},
                 {"mann_whitney_by_label", report::to_json(metrics::mann_whitney_u(pos, neg))},
                 {"out_of_range_patients", esc.out_of_range}};
    if (!std::isfinite(*esc_threshold)) esc_block["upper_left_threshold"] = "inf";
  } else {
    esc_block = {{"available", false}, {"reason", esc.unavailable}};
  }

  json rep;
  rep["cohort"] = {{"patients_loaded", loaded.patients().size()},
                   {"rejected_missing_outcome", stats.rejected_patients},
                   {"excluded_by_inclusion", loaded.patients().size() - table.patient_ids.size()},
                   {"patients", table.patient_ids.size()},
                   {"positives", n_pos},
                   {"horizon_years", ep.horizon_years}};
  rep["settings"] = {{"outer_folds", plan.outer_folds},
                     {"inner_folds", plan.inner_folds},
                     {"seed", plan.seed},
                     {"correlation_threshold", opt.correlation_threshold},
                     {"sffs_cap", opt.sffs_cap},
                     {"sffs_scoring", "inner-CV ROC AUC"},
                     {"selection_order", "SFFS at selection defaults, then grid search on the selected subset"},
                     {"classification_threshold", opt.threshold},
                     {"shap_background_rows", opt.shap_background},
                     {"shap_permutations", opt.shap_permutations}};

  // Out-of-fold probability per patient and model, for the Friedman test.
  std::vector<std::vector<double>> oof_probability;
  std::vector<std::string> kind_names;
  json models_block = json::object();
  for (const auto kind : model_kinds(cfg)) {
    const std::string kname(models::to_string(kind));
    const auto grid = grid_for(cfg, kind);
    auto res = pipeline::nested_cv(table.X, table.y, table.patient_ids, names, kind, grid, plan, opt);
    const fs::path dir = cfg.output_dir / kname;

    std::vector<metrics::RocCurve> curves;
    std::vector<explain::ShapMatrix> shaps;
    std::map<std::string, std::vector<double>> metric_values;
    std::vector<double> esc_fold_auc;
    std::vector<double> oof(table.patient_ids.size(), 0.0);
    for (std::size_t k = 0; k < res.folds.size(); ++k) {
      const auto& f = res.folds[k];
      for (std::size_t i = 0; i < f.test_patients.size(); ++i) oof[row_of.at(f.test_patients[i])] = f.test_probabilities[i];
      json fj = report::to_json(f, names);
      fj["model"] = kname;
      if (kind == models::ModelKind::Logistic) {
        const auto lin = explain::linear_attribution(res.members[k].model);
        json coefs = json::object();
        for (std::size_t c = 0; c < f.selected.size(); ++c) coefs[names[f.selected[c]]] = lin.coefficients[c];
        fj["coefficients"] = {{"intercept", lin.intercept}, {"standardized", coefs}};
      }
      if (esc.unavailable.empty()) {
        std::vector<double> s;
        for (const auto& id : f.test_patients) s.push_back(esc.scores[row_of.at(id)]);
        const double a = metrics::roc_auc(s, f.test_labels).auc;
        esc_fold_auc.push_back(a);
        fj["esc_test_auc"] = a;
      }
      report::write_json(dir / ("fold_" + std::to_string(k) + ".json"), fj);
      report::write_text(dir / ("roc_fold_" + std::to_string(k) + ".csv"), report::roc_csv(f.roc));
      if (f.shap) {
        report::write_text(dir / ("shap_fold_" + std::to_string(k) + ".csv"), report::shap_csv(*f.shap, f.test_patients));
        shaps.push_back(*f.shap);
      }
      curves.push_back(f.roc);
      metric_values["auc"].push_back(f.metrics.auc);
      metric_values["sensitivity"].push_back(f.metrics.sensitivity);
      metric_values["specificity"].push_back(f.metrics.specificity);
      metric_values["accuracy"].push_back(f.metrics.accuracy);
      metric_values["balanced_accuracy"].push_back(f.metrics.balanced_accuracy);
      metric_values["f1"].push_back(f.metrics.f1);
    }
    auto ens = pipeline::build_ensemble(std::move(res.members), names);
    ens.esc_threshold = esc_threshold && std::isfinite(*esc_threshold) ? esc_threshold : std::nullopt;
    report::write_text(dir / "ensemble.json", pipeline::to_json(ens) + "\n");
    report::write_text(dir / "mean_roc.csv", report::mean_roc_csv(res.mean_roc));
    report::write_text(dir / "mean_roc.svg", mean_roc_svg(res.mean_roc, curves, kname + ": outer-fold ROC"));

    json mb;
    json table_row = json::object();
    for (const auto& [m, v] : metric_values) table_row[m] = mean_std(v);
    mb["metrics"] = table_row;
    mb["mean_roc_auc"] = {{"mean", res.mean_roc.auc_mean}, {"std", res.mean_roc.auc_std}};
    mb["fold_auc"] = metric_values["auc"];
    if (!esc_fold_auc.empty()) mb["esc_fold_auc"] = esc_fold_auc;
    json grids = json::object();
    for (const auto& [k, v] : grid) grids[k] = v;
    mb["grid"] = grids;
    if (!shaps.empty()) {
      const auto ranking = explain::pool_importance(shaps, names);
      report::write_json(dir / "importance.json",
                         {{"method", std::string(explain::to_string(shaps.front().method))},
                          {"output_space", shaps.front().output_space},
                          {"ranking", report::to_json(ranking)}});
      std::vector<svg::SwarmLane> lanes;
      for (std::size_t r = 0; r < std::min<std::size_t>(15, ranking.order.size()); ++r) {
        const auto j = ranking.order[r];
        if (ranking.importance[j] == 0.0) break;
        svg::SwarmLane lane{names[j], {}, {}};
        for (const auto& s : shaps)
          for (std::size_t c = 0; c < s.feature_index.size(); ++c)
            if (s.feature_index[c] == j)
              for (std::size_t i = 0; i < s.values.rows(); ++i) {
                lane.phi.push_back(s.values(i, c));
                lane.value.push_back(s.feature_values(i, c));
              }
        lanes.push_back(std::move(lane));
      }
      report::write_text(dir / "beeswarm.svg", svg::beeswarm(kname + ": pooled SHAP values", lanes));
      mb["top_features"] = report::to_json(ranking, 10);
    }
    models_block[kname] = mb;
    oof_probability.push_back(std::move(oof));
    kind_names.push_back(kname);
  }
  rep["models"] = models_block;

  if (oof_probability.size() >= 2) {
    Matrix m(table.patient_ids.size(), oof_probability.size());
    for (std::size_t c = 0; c < oof_probability.size(); ++c)
      for (std::size_t r = 0; r < m.rows(); ++r) m(r, c) = oof_probability[c][r];
    auto fr = report::to_json(metrics::friedman_test(m));
    fr["models"] = kind_names;
    fr["subjects"] = "patients (out-of-fold test probabilities)";
    rep["friedman"] = fr;
  } else {
    rep["friedman"] = nullptr;
  }
  rep["esc"] = esc_block;
  report::write_json(cfg.output_dir / "experiment_report.json", rep);
  return rep;
}

// --- validate --------------------------------------------------------------------------

namespace {

struct ExternalData {
  cohort::Cohort cohort;
  pipeline::EnsembleModel ensemble;
  pipeline::ExternalReport result;
  EscColumn esc;
};

ExternalData load_external(const ExperimentConfig& cfg) {
  const auto schema = load_schema(cfg);
  const auto ep = endpoint(cfg);
  ExternalData d;
  d.ensemble = pipeline::ensemble_from_json(read_file(cfg.path_or("ensemble", cfg.output_dir / "rf" / "ensemble.json")));
  d.cohort = cohort::derive_labels(cohort::load_cohort(cfg.path("external_cohort"), schema), ep);
  d.result = pipeline::external_validate(d.ensemble, d.cohort, cfg.number_or("threshold", 0.5));
  d.esc = esc_scores(schema, d.result.patient_ids,
                     [&](const std::string& id) -> const cohort::PatientExam& { return cohort::baseline_exam(d.cohort, id); });
  return d;
}

void split_by_label(const std::vector<double>& v, const std::vector<int>& y, std::vector<double>& pos,
                    std::vector<double>& neg) {
  for (std::size_t i = 0; i < v.size(); ++i) (y[i] ? pos : neg).push_back(v[i]);
}

}  // namespace

json cmd_validate(const ExperimentConfig& cfg) {
  const auto d = load_external(cfg);
  const fs::path dir = cfg.output_dir / "validate";
  const auto& r = d.result;

  std::vector<double> pos, neg;
  split_by_label(r.probabilities, r.labels, pos, neg);
  json rep;
  rep["patients"] = r.patient_ids.size();
  rep["positives"] = pos.size();
  rep["model"] = std::string(models::to_string(d.ensemble.kind));
  rep["threshold"] = cfg.number_or("threshold", 0.5);
  rep["metrics"] = report::to_json(r.metrics);
  rep["ml_mann_whitney_by_label"] = report::to_json(metrics::mann_whitney_u(pos, neg));
  rep["ml_mean_probability"] = {{"event", metrics::mean(pos)}, {"event_free", metrics::mean(neg)}};
  if (d.esc.unavailable.empty()) {
    std::vector<double> ep, en;
    split_by_label(d.esc.scores, r.labels, ep, en);
    rep["esc"] = {{"available", true},
                  {"auc", metrics::roc_auc(d.esc.scores, r.labels).auc},
                  {"mann_whitney_by_label", report::to_json(metrics::mann_whitney_u(ep, en))},
                  {"out_of_range_patients", d.esc.out_of_range}};
  } else {
    rep["esc"] = {{"available", false}, {"reason", d.esc.unavailable}};
  }

  // Probability distributions split by outcome.
  std::vector<double> edges;
  for (int i = 0; i <= 20; ++i) edges.push_back(i / 20.0);
  auto density_hist = [&](const std::vector<double>& v) {
    std::vector<double> h(20, 0.0);
    for (double p : v) h[std::min<std::size_t>(19, static_cast<std::size_t>(p * 20.0))] += 1.0;
    for (auto& x : h) x = v.empty() ? 0.0 : x / (static_cast<double>(v.size()) * 0.05);
    return h;
  };
  const auto h1 = density_hist(pos), h0 = density_hist(neg);
  std::vector<double> grid;
  for (int i = 0; i <= 100; ++i) grid.push_back(i / 100.0);
  const auto k1 = report::kernel_density(pos, grid), k0 = report::kernel_density(neg, grid);
  std::ostringstream csv;
  csv << "probability,density_event,density_event_free\n";
  for (std::size_t i = 0; i < grid.size(); ++i)
    csv << cohort::format_double(grid[i]) << ',' << cohort::format_double(k1[i]) << ',' << cohort::format_double(k0[i]) << '\n';
  report::write_text(dir / "density.csv", csv.str());
  std::ostringstream pcsv;
  pcsv << "patient_id,label,probability" << (d.esc.unavailable.empty() ? ",esc_risk" : "") << '\n';
  for (std::size_t i = 0; i < r.patient_ids.size(); ++i) {
    pcsv << r.patient_ids[i] << ',' << r.labels[i] << ',' << cohort::format_double(r.probabilities[i]);
    if (d.esc.unavailable.empty()) pcsv << ',' << cohort::format_double(d.esc.scores[i]);
    pcsv << '\n';
  }
  report::write_text(dir / "predictions.csv", pcsv.str());
  double ymax = 1.0;
  for (const auto* v : {&h1, &h0, &k1, &k0})
    for (double x : *v) ymax = std::max(ymax, x);
  std::vector<svg::Bars> bars{{"event", h1, "#d62728"}, {"event-free", h0, "#1f77b4"}};
  svg::Axes ax{"ensemble probability on the external cohort", "predicted probability", "density", 0, 1, 0, ymax * 1.05, false};
  report::write_text(dir / "distribution.svg", svg::histogram(ax, edges, bars));
  report::write_text(dir / "roc.csv", report::roc_csv(r.roc));
  report::write_json(dir / "external_report.json", rep);
  return rep;
}

// --- survival ----------------------------------------------------------------------------

json cmd_survival(const ExperimentConfig& cfg) {
  const auto d = load_external(cfg);
  const fs::path dir = cfg.output_dir / "survival";
  const double thr = cfg.number_or("threshold", 0.5);
  const auto& r = d.result;

  auto analyse = [&](const std::vector<int>& groups, const std::string& name, double threshold, json& out,
                     std::vector<std::pair<std::string, survival::KmCurve>>& curves) {
    const auto subjects = subjects_for(d.cohort, r.patient_ids, groups);
    std::vector<survival::Subject> low, high;
    for (const auto& s : subjects) (s.group ? high : low).push_back(s);
    const auto lr = survival::log_rank(low, high);
    const auto km_low = low.empty() ? survival::KmCurve{} : survival::kaplan_meier(low);
    const auto km_high = high.empty() ? survival::KmCurve{} : survival::kaplan_meier(high);
    out[name] = {{"threshold", threshold},
                 {"low_risk_patients", low.size()},
                 {"high_risk_patients", high.size()},
                 {"single_group", low.empty() || high.empty()},
                 {"log_rank", report::to_json(lr)},
                 {"km_low_risk", report::to_json(km_low)},
                 {"km_high_risk", report::to_json(km_high)}};
    curves.emplace_back(name + "_low", km_low);
    curves.emplace_back(name + "_high", km_high);
    report::write_text(dir / ("km_" + name + ".svg"),
                       km_svg(name + " grouping", km_low, km_high, "low risk", "high risk"));
  };

  json rep;
  std::vector<std::pair<std::string, survival::KmCurve>> curves;
  analyse(survival::stratify_by_prediction(r.probabilities, thr), "ml", thr, rep, curves);
  if (!d.esc.unavailable.empty()) {
    rep["esc"] = {{"available", false}, {"reason", d.esc.unavailable}};
  } else if (!d.ensemble.esc_threshold) {
    rep["esc"] = {{"available", false}, {"reason", "ensemble carries no ESC threshold from training"}};
  } else {
    analyse(survival::stratify_by_prediction(d.esc.scores, *d.ensemble.esc_threshold), "esc",
            *d.ensemble.esc_threshold, rep, curves);
  }
  rep["patients"] = r.patient_ids.size();
  report::write_text(dir / "km.csv", report::km_csv(curves));
  report::write_json(dir / "survival_report.json", rep);
  return rep;
}

// --- longitudinal ------------------------------------------------------------------------

json cmd_longitudinal(const ExperimentConfig& cfg) {
  const auto schema = load_schema(cfg);
  const auto ep = endpoint(cfg);
  const auto ens = pipeline::ensemble_from_json(read_file(cfg.path_or("ensemble", cfg.output_dir / "rf" / "ensemble.json")));
  const auto c = cohort::derive_labels(cohort::load_cohort(cfg.path("cohort"), schema), ep);
  if (schema.names() != ens.feature_names) throw ConfigError("cohort schema does not match the ensemble's features");

  std::map<std::string, std::size_t> owner;
  for (std::size_t m = 0; m < ens.members.size(); ++m)
    for (const auto& id : ens.members[m].test_patients)
      if (!owner.emplace(id, m).second) throw ConfigError("patient " + id + " is a test patient of two folds");

  std::vector<longitudinal::RiskTrajectory> trajectories;
  std::size_t without_model = 0;
  for (const auto& id : c.patients()) {
    const auto it = owner.find(id);
    if (it == owner.end()) {
      ++without_model;
      continue;
    }
    const auto& member = ens.members[it->second];
    std::vector<const cohort::PatientExam*> exams;
    for (auto i : c.exam_indices(id)) exams.push_back(&c.exams[i]);
    trajectories.push_back(longitudinal::trajectory(
        [&member](const cohort::PatientExam& e) { return pipeline::member_predict(member, e.values); }, exams));
  }
  const auto summary = longitudinal::slope_summary(trajectories, c.labels);

  const fs::path dir = cfg.output_dir / "longitudinal";
  json per_patient = json::array();
  for (const auto& t : trajectories)
    per_patient.push_back({{"patient_id", t.patient_id},
                           {"label", c.labels.at(t.patient_id)},
                           {"n_exams", t.n_exams},
                           {"slope", t.slope ? json(*t.slope) : json(nullptr)}});
  json rep{{"summary", report::to_json(summary)},
           {"patients_without_test_model", without_model},
           {"trajectories", per_patient}};
  report::write_text(dir / "trajectories.csv", report::trajectories_csv(trajectories));
  report::write_json(dir / "slope_summary.json", rep);

  const std::size_t min_exams = size_or(cfg, "display_min_exams", 5);
  std::vector<svg::Panel> panels;
  for (const auto& t : trajectories) {
    if (t.points.size() < min_exams || !t.slope || panels.size() >= 24) continue;
    svg::Panel p;
    p.title = t.patient_id + (c.labels.at(t.patient_id) ? " (event)" : "");
    double tm = 0, pm = 0;
    for (const auto& q : t.points) {
      p.t.push_back(q.t);
      p.p.push_back(q.p);
      tm += q.t;
      pm += q.p;
    }
    tm /= static_cast<double>(t.points.size());
    pm /= static_cast<double>(t.points.size());
    p.slope = *t.slope;
    p.intercept = pm - p.slope * tm;
    panels.push_back(std::move(p));
  }
  report::write_text(dir / "trajectories.svg",
                     svg::small_multiples("risk trajectories (patients with >= " + std::to_string(min_exams) + " exams)", panels));
  return rep;
}

// --- synth / esc-score ----------------------------------------------------------------------

json cmd_synth(const ExperimentConfig& cfg) {
  const auto schema = load_schema(cfg);
  if (!cfg.has("synth") || !cfg.raw["synth"].is_object()) throw ConfigError("config needs a 'synth' object");
  json sj = cfg.raw["synth"];
  const bool repeated = sj.value("longitudinal", false);
  sj.erase("longitudinal");
  sj["seed"] = cfg.seed;
  synth::GeneratorSpec spec;
  try {
    spec = synth::GeneratorSpec::from_json(sj.dump());
  } catch (const synth::SynthError& e) {
    throw ConfigError(e.what());
  }
  const auto out = repeated ? synth::generate_longitudinal(spec, schema) : synth::generate_cohort(spec, schema);
  fs::create_directories(cfg.output_dir);
  cohort::save_cohort(out.cohort, cfg.output_dir / "cohort.csv");
  schema.save(cfg.output_dir / "schema.json");
  const auto meta = json::parse(out.metadata.to_json());
  report::write_json(cfg.output_dir / "metadata.json", meta);
  return meta;
}

json cmd_esc_score(const ExperimentConfig& cfg) {
  const auto schema = load_schema(cfg);
  const auto c = cohort::load_cohort(cfg.path("cohort"), schema);
  std::ostringstream csv;
  csv << "patient_id,exam_date,risk,prognostic_index,age_out_of_range,mwt_out_of_range,gradient_out_of_range\n";
  std::size_t flagged = 0, n = 0;
  for (const auto& id : c.patients()) {
    const auto& ex = cohort::baseline_exam(c, id);
    const auto s = esc::esc_risk(esc::inputs_from_exam(schema, ex));
    csv << id << ',' << cohort::format_date(ex.exam_date) << ',' << cohort::format_double(s.risk) << ','
        << cohort::format_double(s.prognostic_index) << ',' << s.out_of_range.age << ',' << s.out_of_range.mwt << ','
        << s.out_of_range.gradient << '\n';
    flagged += s.out_of_range.any() ? 1 : 0;
    ++n;
  }
  report::write_text(cfg.output_dir / "esc_scores.csv", csv.str());
  json rep{{"patients", n}, {"out_of_range_patients", flagged}};
  report::write_json(cfg.output_dir / "esc_summary.json", rep);
  return rep;
}

// --- dispatch -------------------------------------------------------------------------------

json run_command(const std::string& name, const ExperimentConfig& cfg) {
  static const std::map<std::string, std::vector<std::string>> inputs_of{
      {"train", {"schema", "cohort"}},
      {"validate", {"schema", "ensemble", "external_cohort"}},
      {"survival", {"schema", "ensemble", "external_cohort"}},
      {"longitudinal", {"schema", "ensemble", "cohort"}},
      {"synth", {"schema"}},
      {"esc-score", {"schema", "cohort"}},
  };
  const auto it = inputs_of.find(name);
  if (it == inputs_of.end()) throw ConfigError("unknown command '" + name + "'");

  // Digests are taken before the run so they describe what was read.
  json inputs = json::array();
  for (const auto& key : it->second) {
    fs::path p;
    if (key == "ensemble") p = cfg.path_or("ensemble", cfg.output_dir / "rf" / "ensemble.json");
    else if (cfg.has(key)) p = cfg.path(key);
    else continue;
    if (!fs::exists(p)) throw ConfigError("input '" + key + "' not found at " + p.string());
    inputs.push_back({{"key", key}, {"path", p.generic_string()}, {"sha256", report::sha256_file(p)}});
  }

  json rep;
  if (name == "train") rep = cmd_train(cfg);
  else if (name == "validate") rep = cmd_validate(cfg);
  else if (name == "survival") rep = cmd_survival(cfg);
  else if (name == "longitudinal") rep = cmd_longitudinal(cfg);
  else if (name == "synth") rep = cmd_synth(cfg);
  else rep = cmd_esc_score(cfg);

  json manifest{{"tool", "hcmrisk"},
                {"version", kVersion},
                {"command", name},
                {"seed", cfg.seed},
                {"config", cfg.raw},
                {"inputs", inputs},
                {"libraries", library_versions()}};
  report::write_json(cfg.output_dir / ("manifest_" + name + ".json"), manifest);
  return rep;
}

}  // namespace hcmrisk::cli
