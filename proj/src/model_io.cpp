#include <nlohmann/json.hpp>

#include "hcmrisk/models.hpp"

namespace hcmrisk::models {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

json tree_to_json(const DecisionTree& t) {
  json j;
  std::vector<int> feature, left, right;
  std::vector<double> threshold, value, cover;
  for (const auto& n : t.nodes()) {
    feature.push_back(n.feature);
    left.push_back(n.left);
    right.push_back(n.right);
    threshold.push_back(n.threshold);
    value.push_back(n.value);
    cover.push_back(n.cover);
  }
  j["feature"] = feature;
  j["threshold"] = threshold;
  j["left"] = left;
  j["right"] = right;
  j["value"] = value;
  j["cover"] = cover;
  return j;
}

DecisionTree tree_from_json(const json& j) {
  const auto feature = j.at("feature").get<std::vector<int>>();
  const auto threshold = j.at("threshold").get<std::vector<double>>();
  const auto left = j.at("left").get<std::vector<int>>();
  const auto right = j.at("right").get<std::vector<int>>();
  const auto value = j.at("value").get<std::vector<double>>();
  const auto cover = j.at("cover").get<std::vector<double>>();
  const std::size_t n = feature.size();
  if (threshold.size() != n || left.size() != n || right.size() != n || value.size() != n ||
      cover.size() != n)
    throw ModelError("tree arrays have inconsistent lengths");
  std::vector<TreeNode> nodes(n);
  for (std::size_t i = 0; i < n; ++i)
    nodes[i] = {feature[i], threshold[i], left[i], right[i], value[i], cover[i]};
  try {
    return DecisionTree(std::move(nodes));
  } catch (const std::logic_error& e) {
    throw ModelError(std::string("malformed tree: ") + e.what());
  }
}

json trees_to_json(const std::vector<DecisionTree>& trees) {
  json arr = json::array();
  for (const auto& t : trees) arr.push_back(tree_to_json(t));
  return arr;
}

std::vector<DecisionTree> trees_from_json(const json& j) {
  std::vector<DecisionTree> out;
  for (const auto& t : j) out.push_back(tree_from_json(t));
  return out;
}

}  // namespace

std::string to_json(const FittedClassifier& model) {
  json j;
  j["format"] = "hcmrisk.classifier";
  j["version"] = kFormatVersion;
  j["kind"] = std::string(to_string(model.kind()));
  j["hyperparams"] = model.hyperparams();
  j["seed"] = model.seed();
  j["feature_count"] = model.feature_count();
  std::visit(
      [&j](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, RandomForest>) {
          j["trees"] = trees_to_json(m.trees);
        } else if constexpr (std::is_same_v<T, GradientBoosting>) {
          j["base_margin"] = m.base_margin;
          j["shrinkage"] = m.shrinkage;
          j["trees"] = trees_to_json(m.trees);
        } else if constexpr (std::is_same_v<T, LogisticModel>) {
          j["weights"] = m.weights;
          j["intercept"] = m.intercept;
        } else {
          j["weights"] = m.weights;
          j["intercept"] = m.intercept;
          j["platt"] = {{"a", m.platt.a}, {"b", m.platt.b}};
        }
      },
      model.model());
  return j.dump();
}

FittedClassifier classifier_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ModelError(std::string("model JSON does not parse: ") + e.what());
  }
  try {
    if (j.value("format", "") != "hcmrisk.classifier") throw ModelError("not a classifier document");
    const int version = j.at("version").get<int>();
    if (version != kFormatVersion)
      throw ModelError("unsupported classifier format version " + std::to_string(version));
    const ModelKind kind = parse_model_kind(j.at("kind").get<std::string>());
    auto hp = j.at("hyperparams").get<Hyperparams>();
    const auto seed = j.at("seed").get<std::uint64_t>();
    const auto width = j.at("feature_count").get<std::size_t>();
    ModelVariant model;
    switch (kind) {
      case ModelKind::RandomForest: {
        RandomForest rf;
        rf.trees = trees_from_json(j.at("trees"));
        if (rf.trees.empty()) throw ModelError("forest without trees");
        model = std::move(rf);
        break;
      }
      case ModelKind::GradientBoosting: {
        GradientBoosting gb;
        gb.base_margin = j.at("base_margin").get<double>();
        gb.shrinkage = j.at("shrinkage").get<double>();
        gb.trees = trees_from_json(j.at("trees"));
        model = std::move(gb);
        break;
      }
      case ModelKind::Logistic: {
        LogisticModel lr;
        lr.weights = j.at("weights").get<std::vector<double>>();
        lr.intercept = j.at("intercept").get<double>();
        model = std::move(lr);
        break;
      }
      case ModelKind::LinearSvm: {
        LinearSvm svm;
        svm.weights = j.at("weights").get<std::vector<double>>();
        svm.intercept = j.at("intercept").get<double>();
        svm.platt = {j.at("platt").at("a").get<double>(), j.at("platt").at("b").get<double>()};
        model = std::move(svm);
        break;
      }
    }
    return FittedClassifier(kind, std::move(hp), seed, width, std::move(model));
  } catch (const json::exception& e) {
    throw ModelError(std::string("malformed classifier JSON: ") + e.what());
  }
}

}  // namespace hcmrisk::models
