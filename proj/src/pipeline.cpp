#include "hcmrisk/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "hcmrisk/rng.hpp"

namespace hcmrisk::pipeline {

using models::ModelKind;
using nlohmann::json;

void CvPlan::validate() const {
  if (outer_folds < 2) throw PipelineError("outer_folds must be at least 2");
  if (inner_folds < 2) throw PipelineError("inner_folds must be at least 2");
  if (!stratified) throw PipelineError("only stratified splitting is supported");
}

const Grid& default_grid(ModelKind kind) {
  static const Grid rf{{"n_trees", {100, 300}}, {"max_depth", {4, 8, -1}}, {"min_leaf", {1, 5}}};
  static const Grid gb{{"rounds", {100, 200}}, {"shrinkage", {0.05, 0.1}}, {"max_depth", {2, 3}}};
  static const Grid lr{{"lambda", {0.01, 0.1, 1}}};
  static const Grid svm{{"C", {0.1, 1, 10}}};
  switch (kind) {
    case ModelKind::RandomForest: return rf;
    case ModelKind::GradientBoosting: return gb;
    case ModelKind::Logistic: return lr;
    case ModelKind::LinearSvm: return svm;
  }
  return rf;
}

std::vector<models::Hyperparams> expand_grid(const Grid& grid) {
  std::vector<models::Hyperparams> out{{}};
  for (const auto& [name, values] : grid) {
    if (values.empty()) throw PipelineError("grid entry '" + name + "' has no values");
    std::vector<models::Hyperparams> next;
    for (const auto& partial : out)
      for (double v : values) {
        auto h = partial;
        h[name] = v;
        next.push_back(std::move(h));
      }
    out = std::move(next);
  }
  return out;
}

models::Hyperparams selection_defaults(ModelKind kind) { return models::default_hyperparams(kind); }

// --- SFFS -------------------------------------------------------------------

std::vector<std::size_t> sffs(std::size_t n_features, const SubsetScorer& score, std::size_t cap,
                              SffsTrace* trace) {
  if (cap < 1) throw PipelineError("SFFS cap must be at least 1");
  if (n_features == 0) throw PipelineError("SFFS needs at least one feature");
  cap = std::min(cap, n_features);

  std::map<std::vector<std::size_t>, double> memo;
  SffsTrace local;
  SffsTrace& tr = trace ? *trace : local;
  tr = SffsTrace{};
  auto J = [&](std::vector<std::size_t> s) {
    std::sort(s.begin(), s.end());
    if (auto it = memo.find(s); it != memo.end()) return it->second;
    const double v = score(s);
    ++tr.evaluations;
    memo.emplace(std::move(s), v);
    return v;
  };

  constexpr double kNone = -std::numeric_limits<double>::infinity();
  std::vector<double> best_at(cap + 1, kNone);
  std::vector<std::size_t> current;
  double current_score = kNone;
  auto accept = [&](std::vector<std::size_t> s, double v) {
    std::sort(s.begin(), s.end());
    current = s;
    current_score = v;
    best_at[s.size()] = std::max(best_at[s.size()], v);
    tr.accepted.push_back(std::move(s));
    tr.scores.push_back(v);
  };

  while (current.size() < cap) {
    std::size_t best_f = n_features;
    double best_v = kNone;
    for (std::size_t f = 0; f < n_features; ++f) {
      if (std::find(current.begin(), current.end(), f) != current.end()) continue;
      auto s = current;
      s.push_back(f);
      const double v = J(s);
      if (v > best_v) {
        best_v = v;
        best_f = f;
      }
    }
    if (best_f == n_features || !(best_v > current_score)) break;
    auto added = current;
    added.push_back(best_f);
    accept(added, best_v);

    while (current.size() > 2) {
      std::size_t drop = n_features;
      double drop_v = kNone;
      for (std::size_t g : current) {
        if (g == best_f) continue;
        std::vector<std::size_t> s;
        for (std::size_t h : current)
          if (h != g) s.push_back(h);
        const double v = J(s);
        if (v > drop_v) {
          drop_v = v;
          drop = g;
        }
      }
      if (drop == n_features || !(drop_v > best_at[current.size() - 1]) || !(drop_v > current_score))
        break;
      std::vector<std::size_t> s;
      for (std::size_t h : current)
        if (h != drop) s.push_back(h);
      accept(s, drop_v);
      ++tr.removals;
    }
  }
  if (tr.accepted.empty()) {
    // Every singleton scored -inf or NaN; fall back to the first feature.
    return {0};
  }
  return tr.accepted.back();
}

// --- nested CV ----------------------------------------------------------------

namespace {

enum StreamTag : std::uint64_t {
  kInnerFolds = 0x696e6e72,
  kInnerUndersample = 0x696e7573,
  kOuterUndersample = 0x6f757573,
  kModel = 0x6d6f646c,
  kBackground = 0x62616b67,
  kShap = 0x73686170,
};

// One inner split, preprocessed with statistics from its own training rows.
struct InnerSplit {
  Matrix train;  // undersampled, all retained columns
  std::vector<int> train_y;
  Matrix test;
  std::vector<int> test_y;
};

Matrix take_columns(const Matrix& X, std::span<const std::size_t> cols) { return X.select_cols(cols); }

double inner_cv_auc(const std::vector<InnerSplit>& splits, std::span<const std::size_t> cols,
                    const models::ClassifierSpec& spec) {
  double total = 0.0;
  for (const auto& s : splits) {
    const Matrix tr = take_columns(s.train, cols);
    const Matrix te = take_columns(s.test, cols);
    const auto model = models::fit_classifier(spec, tr, s.train_y, Exec::Serial);
    const auto p = model.predict_proba(te);
    total += metrics::roc_auc(p, s.test_y).auc;
  }
  return total / static_cast<double>(splits.size());
}

Matrix background_rows(const Matrix& X, std::size_t cap, std::uint64_t seed) {
  if (X.rows() <= cap) return X;
  std::vector<std::size_t> idx(X.rows());
  std::iota(idx.begin(), idx.end(), 0);
  auto rng = make_rng(seed, {kBackground});
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  return X.select_rows(idx);
}

}  // namespace

FoldOutcome run_outer_fold(const Matrix& X, std::span<const int> y,
                           std::span<const std::string> patient_ids,
                           std::span<const std::string> feature_names, const Split& split,
                           std::size_t fold_index, ModelKind kind, const Grid& grid,
                           const CvPlan& plan, const NestedCvOptions& options, Exec exec) {
  const std::uint64_t fold_seed = derive_seed(plan.seed, {fold_index});
  const Matrix train_raw = X.select_rows(split.train);
  const auto y_train = gather<int>(y, split.train);
  const auto y_test = gather<int>(y, split.test);
  for (auto* ys : {&y_train, &y_test})
    if (std::find(ys->begin(), ys->end(), 0) == ys->end() || std::find(ys->begin(), ys->end(), 1) == ys->end())
      throw PipelineError("outer fold " + std::to_string(fold_index) + " contains a single class");

  FoldReport rep;
  rep.fold_index = fold_index;
  rep.train_rows = split.train.size();

  // Columns never measured in outer-train cannot be imputed.
  const auto missing = preprocess::missing_counts(train_raw);
  std::vector<std::size_t> measured;
  for (std::size_t j = 0; j < X.cols(); ++j) {
    if (missing[j] == train_raw.rows()) rep.unmeasured.push_back(j);
    else measured.push_back(j);
  }
  if (measured.empty()) throw PipelineError("no feature is measured in outer fold " + std::to_string(fold_index));
  {
    const Matrix m = train_raw.select_cols(measured);
    const auto filt = preprocess::correlation_filter(m, options.correlation_threshold,
                                                     gather<std::size_t>(missing, measured));
    for (auto r : filt.retained) rep.retained.push_back(measured[r]);
    for (const auto& d : filt.dropped) rep.dropped.push_back({measured[d.dropped], measured[d.kept], d.r});
  }
  std::vector<std::string> retained_names;
  for (auto j : rep.retained) retained_names.push_back(std::string(feature_names[j]));

  const Matrix train_ret = train_raw.select_cols(rep.retained);
  const auto outer_pre = preprocess::fit_preprocessor(train_ret, retained_names);

  // Inner splits: preprocess each on its own training rows, then undersample.
  const auto inner = stratified_folds(y_train, plan.inner_folds, derive_seed(fold_seed, {kInnerFolds}));
  std::vector<InnerSplit> inner_splits;
  for (std::size_t s = 0; s < inner.size(); ++s) {
    const Matrix itr = train_ret.select_rows(inner[s].train);
    const auto ity = gather<int>(y_train, inner[s].train);
    const auto pre = preprocess::fit_preprocessor(itr, retained_names);
    const auto keep = preprocess::undersample(ity, derive_seed(fold_seed, {kInnerUndersample, s}));
    InnerSplit is;
    is.train = preprocess::transform(pre, itr.select_rows(keep));
    is.train_y = gather<int>(ity, keep);
    is.test = preprocess::transform(pre, train_ret.select_rows(inner[s].test));
    is.test_y = gather<int>(y_train, inner[s].test);
    inner_splits.push_back(std::move(is));
  }

  const std::uint64_t model_seed = derive_seed(fold_seed, {kModel});
  models::ClassifierSpec sel_spec{kind, selection_defaults(kind), model_seed};
  const std::size_t cap = std::min(options.sffs_cap, rep.retained.size());
  SffsTrace trace;
  const auto chosen = sffs(
      rep.retained.size(),
      [&](std::span<const std::size_t> cols) { return inner_cv_auc(inner_splits, cols, sel_spec); },
      cap, &trace);
  rep.selection_score = trace.scores.empty() ? 0.0 : trace.scores.back();
  for (auto c : chosen) rep.selected.push_back(rep.retained[c]);

  const auto points = expand_grid(grid);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& hp : points) {
    models::ClassifierSpec spec{kind, hp, model_seed};
    spec.validate();
    const double v = inner_cv_auc(inner_splits, chosen, spec);
    if (v > best) {
      best = v;
      rep.best_hyperparams = hp;
    }
  }
  rep.grid_score = best;

  // Refit on undersampled outer-train with the chosen subset.
  const Matrix train_t = preprocess::transform(outer_pre, train_ret);
  const auto keep = preprocess::undersample(y_train, derive_seed(fold_seed, {kOuterUndersample}));
  rep.undersampled_rows = keep.size();
  const Matrix fit_X = take_columns(train_t.select_rows(keep), chosen);
  const auto fit_y = gather<int>(y_train, keep);
  models::ClassifierSpec final_spec{kind, rep.best_hyperparams, model_seed};
  auto model = models::fit_classifier(final_spec, fit_X, fit_y, exec);

  preprocess::FittedPreprocessor member_pre;
  member_pre.fitted_on = outer_pre.fitted_on;
  for (auto c : chosen) {
    member_pre.medians.push_back(outer_pre.medians[c]);
    member_pre.means.push_back(outer_pre.means[c]);
    member_pre.stds.push_back(outer_pre.stds[c]);
  }

  const Matrix test_t = preprocess::transform(member_pre, X.select_rows(split.test).select_cols(rep.selected));
  rep.test_probabilities = model.predict_proba(test_t);
  rep.test_labels = y_test;
  for (auto i : split.test) rep.test_patients.push_back(std::string(patient_ids[i]));
  rep.metrics = metrics::confusion_metrics(rep.test_probabilities, y_test, options.threshold);
  rep.roc = metrics::roc_auc(rep.test_probabilities, y_test);

  if (options.compute_shap) {
    const Matrix bg = background_rows(take_columns(train_t, chosen), options.shap_background, fold_seed);
    explain::ShapOptions so{options.shap_permutations, derive_seed(fold_seed, {kShap})};
    auto shap = explain::explain_rows(model, test_t, bg, so, exec);
    shap.feature_index = rep.selected;
    for (auto j : rep.selected) shap.feature_names.push_back(std::string(feature_names[j]));
    rep.shap = std::move(shap);
  }

  EnsembleMember member{std::move(model), std::move(member_pre), rep.selected, rep.test_patients};
  return {std::move(rep), std::move(member), outer_pre};
}

NestedCvResult nested_cv(const Matrix& X, std::span<const int> y,
                         std::span<const std::string> patient_ids,
                         std::span<const std::string> feature_names, ModelKind kind,
                         const Grid& grid, const CvPlan& plan, const NestedCvOptions& options,
                         Exec exec) {
  plan.validate();
  if (X.rows() != y.size() || patient_ids.size() != y.size())
    throw PipelineError("matrix, labels and patient ids disagree in length");
  if (feature_names.size() != X.cols()) throw PipelineError("feature names do not match matrix width");
  const auto outer = stratified_folds(y, plan.outer_folds, plan.seed);

  std::vector<std::optional<FoldOutcome>> outcomes(outer.size());
  const auto n = static_cast<long>(outer.size());
  if (exec == Exec::Parallel) {
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (long k = 0; k < n; ++k) {
      try {
        outcomes[k] = run_outer_fold(X, y, patient_ids, feature_names, outer[k],
                                     static_cast<std::size_t>(k), kind, grid, plan, options, exec);
      } catch (...) {
#pragma omp critical
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  } else {
    for (long k = 0; k < n; ++k)
      outcomes[k] = run_outer_fold(X, y, patient_ids, feature_names, outer[k],
                                   static_cast<std::size_t>(k), kind, grid, plan, options, exec);
  }

  NestedCvResult res;
  res.kind = kind;
  std::vector<metrics::RocCurve> curves;
  for (auto& o : outcomes) {
    curves.push_back(o->report.roc);
    res.folds.push_back(std::move(o->report));
    res.members.push_back(std::move(o->member));
  }
  res.mean_roc = metrics::mean_roc(curves);
  return res;
}

NestedCvResult nested_cv(const cohort::Cohort& cohort, ModelKind kind, const Grid& grid,
                         const CvPlan& plan, const NestedCvOptions& options, Exec exec) {
  if (!cohort.has_labels()) throw PipelineError("nested CV needs a labeled cohort");
  const auto table = cohort::baseline_table(cohort);
  const auto names = cohort.schema.names();
  return nested_cv(table.X, table.y, table.patient_ids, names, kind, grid, plan, options, exec);
}

// --- ensemble -----------------------------------------------------------------

EnsembleModel build_ensemble(std::vector<EnsembleMember> members,
                             std::vector<std::string> feature_names) {
  if (members.size() != kEnsembleSize)
    throw PipelineError("an ensemble needs exactly " + std::to_string(kEnsembleSize) + " members, got " +
                        std::to_string(members.size()));
  EnsembleModel ens;
  ens.kind = members.front().model.kind();
  for (const auto& m : members) {
    if (m.model.kind() != ens.kind) throw PipelineError("ensemble members mix model kinds");
    if (m.features.size() != m.model.feature_count() || m.preprocessor.width() != m.features.size())
      throw PipelineError("ensemble member feature list does not match its model");
    for (auto j : m.features)
      if (j >= feature_names.size()) throw PipelineError("ensemble member uses a feature outside the schema");
  }
  ens.members = std::move(members);
  ens.feature_names = std::move(feature_names);
  return ens;
}

double member_predict(const EnsembleMember& member, std::span<const double> values) {
  std::vector<double> x;
  x.reserve(member.features.size());
  for (auto j : member.features) x.push_back(values[j]);
  return member.model.predict_proba(preprocess::transform_row(member.preprocessor, x));
}

double ensemble_predict(const EnsembleModel& ens, std::span<const double> values) {
  if (values.size() != ens.feature_names.size())
    throw PipelineError("exam has " + std::to_string(values.size()) + " values, ensemble expects " +
                        std::to_string(ens.feature_names.size()));
  if (ens.members.empty()) throw PipelineError("ensemble has no members");
  std::vector<double> p;
  for (const auto& m : ens.members) p.push_back(member_predict(m, values));
  // Summed in sorted order so member order cannot change the result.
  std::sort(p.begin(), p.end());
  double s = 0.0;
  for (double v : p) s += v;
  return std::clamp(s / static_cast<double>(p.size()), p.front(), p.back());
}

double ensemble_predict(const EnsembleModel& ens, const cohort::PatientExam& exam) {
  return ensemble_predict(ens, std::span<const double>(exam.values));
}

namespace {

json preprocessor_json(const preprocess::FittedPreprocessor& p) {
  return {{"medians", p.medians}, {"means", p.means}, {"stds", p.stds}, {"fitted_on", p.fitted_on}};
}

}  // namespace

std::string to_json(const EnsembleModel& ens) {
  json members = json::array();
  for (const auto& m : ens.members) {
    std::vector<std::string> names;
    for (auto j : m.features) names.push_back(ens.feature_names[j]);
    members.push_back({{"model", json::parse(models::to_json(m.model))},
                       {"preprocessor", preprocessor_json(m.preprocessor)},
                       {"features", m.features},
                       {"feature_names", names},
                       {"test_patients", m.test_patients}});
  }
  json j{{"format", "hcmrisk.ensemble"},
         {"version", 1},
         {"kind", std::string(models::to_string(ens.kind))},
         {"feature_names", ens.feature_names},
         {"members", members}};
  j["esc_threshold"] = ens.esc_threshold ? json(*ens.esc_threshold) : json(nullptr);
  return j.dump(1);
}

EnsembleModel ensemble_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.at("format") != "hcmrisk.ensemble") throw PipelineError("not an ensemble file");
    if (j.at("version") != 1) throw PipelineError("unsupported ensemble format version");
    std::vector<EnsembleMember> members;
    for (const auto& m : j.at("members")) {
      preprocess::FittedPreprocessor pre;
      const auto& pj = m.at("preprocessor");
      pre.medians = pj.at("medians").get<std::vector<double>>();
      pre.means = pj.at("means").get<std::vector<double>>();
      pre.stds = pj.at("stds").get<std::vector<double>>();
      pre.fitted_on = pj.at("fitted_on").get<std::size_t>();
      members.push_back({models::classifier_from_json(m.at("model").dump()), std::move(pre),
                         m.at("features").get<std::vector<std::size_t>>(),
                         m.at("test_patients").get<std::vector<std::string>>()});
    }
    auto ens = build_ensemble(std::move(members), j.at("feature_names").get<std::vector<std::string>>());
    if (!j.at("esc_threshold").is_null()) ens.esc_threshold = j.at("esc_threshold").get<double>();
    return ens;
  } catch (const json::exception& e) {
    throw PipelineError(std::string("malformed ensemble file: ") + e.what());
  } catch (const models::ModelError& e) {
    throw PipelineError(std::string("malformed ensemble member: ") + e.what());
  }
}

ExternalReport external_validate(const EnsembleModel& ens, const cohort::Cohort& external,
                                 double threshold) {
  if (external.schema.names() != ens.feature_names)
    throw PipelineError("external cohort schema does not match the ensemble's features");
  if (!external.has_labels()) throw PipelineError("external cohort has no labels");
  const auto ids = external.patients();
  if (ids.empty()) throw PipelineError("external cohort is empty");
  ExternalReport r;
  for (const auto& id : ids) {
    const auto lab = external.labels.find(id);
    if (lab == external.labels.end()) throw PipelineError("patient " + id + " has no label");
    r.patient_ids.push_back(id);
    r.labels.push_back(lab->second);
    r.probabilities.push_back(ensemble_predict(ens, cohort::baseline_exam(external, id)));
  }
  r.metrics = metrics::confusion_metrics(r.probabilities, r.labels, threshold);
  r.roc = metrics::roc_auc(r.probabilities, r.labels);
  return r;
}

}  // namespace hcmrisk::pipeline
