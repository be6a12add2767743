// Serial reference path versus the OpenMP path for the parallel kernels.
#include <benchmark/benchmark.h>

#include "hcmrisk/explain.hpp"
#include "hcmrisk/models.hpp"
#include "hcmrisk/pipeline.hpp"
#include "hcmrisk/preprocess.hpp"
#include "hcmrisk/synth.hpp"

namespace {

using namespace hcmrisk;

struct Data {
  Matrix X;
  std::vector<int> y;
  std::vector<std::string> ids;
  std::vector<std::string> names;
};

const Data& data() {
  static const Data d = [] {
    auto spec = synth::preset("florence-like", 11);
    spec.n_patients = 600;
    auto sc = synth::generate_cohort(spec, cohort::FeatureSchema::demo());
    auto t = cohort::baseline_table(sc.cohort);
    std::vector<std::size_t> cols{0, 1, 2, 3, 4, 6, 7, 9, 10, 11};
    Data out;
    out.X = preprocess::transform(preprocess::fit_preprocessor(t.X.select_cols(cols)), t.X.select_cols(cols));
    out.y = t.y;
    out.ids = t.patient_ids;
    for (auto c : cols) out.names.push_back(sc.cohort.schema[c].name);
    return out;
  }();
  return d;
}

Exec exec_of(const benchmark::State& s) { return s.range(0) == 0 ? Exec::Serial : Exec::Parallel; }

void BM_FitForest(benchmark::State& state) {
  const auto& d = data();
  models::ForestParams p;
  p.n_trees = 200;
  p.max_depth = 8;
  p.min_leaf = 5;
  for (auto _ : state) benchmark::DoNotOptimize(models::fit_forest(d.X, d.y, p, 3, exec_of(state)));
  state.SetLabel(exec_of(state) == Exec::Serial ? "serial" : "parallel");
}
BENCHMARK(BM_FitForest)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_TreeShapRows(benchmark::State& state) {
  const auto& d = data();
  models::ClassifierSpec spec{models::ModelKind::RandomForest, {{"n_trees", 100}}, 5};
  const auto model = models::fit_classifier(spec, d.X, d.y);
  const Matrix rows = d.X.select_rows(std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15});
  for (auto _ : state)
    benchmark::DoNotOptimize(explain::explain_rows(model, rows, d.X, {}, exec_of(state)));
  state.SetLabel(exec_of(state) == Exec::Serial ? "serial" : "parallel");
}
BENCHMARK(BM_TreeShapRows)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_SamplingShapRows(benchmark::State& state) {
  const auto& d = data();
  models::ClassifierSpec spec{models::ModelKind::LinearSvm, {}, 5};
  const auto model = models::fit_classifier(spec, d.X, d.y);
  const Matrix rows = d.X.select_rows(std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7});
  const Matrix bg = d.X.select_rows(std::vector<std::size_t>{20, 21, 22, 23, 24, 25, 26, 27, 28, 29});
  explain::ShapOptions opt{500, 1};
  for (auto _ : state) benchmark::DoNotOptimize(explain::explain_rows(model, rows, bg, opt, exec_of(state)));
  state.SetLabel(exec_of(state) == Exec::Serial ? "serial" : "parallel");
}
BENCHMARK(BM_SamplingShapRows)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_NestedCvLogistic(benchmark::State& state) {
  const auto& d = data();
  pipeline::CvPlan plan;
  plan.seed = 2;
  pipeline::NestedCvOptions opt;
  opt.compute_shap = false;
  for (auto _ : state)
    benchmark::DoNotOptimize(pipeline::nested_cv(d.X, d.y, d.ids, d.names, models::ModelKind::Logistic,
                                                 pipeline::default_grid(models::ModelKind::Logistic), plan, opt,
                                                 exec_of(state)));
  state.SetLabel(exec_of(state) == Exec::Serial ? "serial" : "parallel");
}
BENCHMARK(BM_NestedCvLogistic)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
