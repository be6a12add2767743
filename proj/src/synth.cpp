#include "hcmrisk/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "hcmrisk/metrics.hpp"
#include "hcmrisk/rng.hpp"

namespace hcmrisk::synth {

using nlohmann::json;
using cohort::FeatureKind;

double bayes_auc(double delta, std::size_t k) {
  return metrics::normal_cdf(delta * std::sqrt(static_cast<double>(k)) / std::sqrt(2.0));
}

double effect_size_for_auc(double auc, std::size_t k) {
  if (!(auc > 0.0 && auc < 1.0)) throw SynthError("target AUC must lie in (0, 1)");
  if (k == 0) throw SynthError("need at least one signal feature");
  return metrics::normal_quantile(auc) * std::sqrt(2.0) / std::sqrt(static_cast<double>(k));
}

namespace {

struct UnitMap {
  double center;
  double scale;
  std::optional<double> floor;
};

// Clinical units for the ESC score inputs; they carry no label signal.
const std::map<std::string, UnitMap, std::less<>>& esc_continuous() {
  static const std::map<std::string, UnitMap, std::less<>> m{
      {"age", {50.0, 15.0, std::nullopt}},
      {"mwt", {20.0, 5.0, 1.0}},
      {"la_diameter", {42.0, 7.0, std::nullopt}},
      {"lvot_gradient_max", {25.0, 25.0, 0.0}},
  };
  return m;
}

const std::map<std::string, double, std::less<>>& esc_binary() {
  static const std::map<std::string, double, std::less<>> m{
      {"fh_scd", 0.2}, {"nsvt", 0.2}, {"unexplained_syncope", 0.1}};
  return m;
}

bool is_esc(std::string_view name) {
  return esc_continuous().contains(name) || esc_binary().contains(name);
}

std::size_t positive_count(const GeneratorSpec& s) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(s.n_patients) * s.prevalence));
}

struct Roles {
  std::vector<bool> signal;
  std::vector<bool> may_be_missing;
  std::vector<bool> all_missing;
  std::vector<std::optional<std::size_t>> decoy_source;
};

Roles assign_roles(const GeneratorSpec& spec, const cohort::FeatureSchema& schema) {
  const std::size_t P = schema.size();
  Roles r;
  r.signal.assign(P, false);
  r.may_be_missing.assign(P, false);
  r.all_missing.assign(P, false);
  r.decoy_source.assign(P, std::nullopt);
  for (auto j : spec.signal_features) r.signal[j] = true;
  for (const auto& name : spec.all_missing) r.all_missing[schema.require_index(name)] = true;
  std::vector<std::size_t> noise;
  for (std::size_t j = 0; j < P; ++j) {
    const auto& e = schema[j];
    if (!r.signal[j] && !is_esc(e.name) && e.allow_missing) r.may_be_missing[j] = true;
    if (!r.signal[j] && !is_esc(e.name) && e.kind == FeatureKind::Continuous)
      noise.push_back(j);
  }
  if (spec.decoys >= noise.size())
    throw SynthError("requested " + std::to_string(spec.decoys) + " decoys but only " +
                     std::to_string(noise.size()) + " continuous noise features exist");
  const std::size_t n_sources = noise.size() - spec.decoys;
  for (std::size_t d = 0; d < spec.decoys; ++d)
    r.decoy_source[noise[n_sources + d]] = noise[d % n_sources];
  return r;
}

double draw_followup_free(const GeneratorSpec& spec, Rng& rng) {
  if (spec.followup_gamma_mean > 0.0) {
    const double shape = std::pow(spec.followup_gamma_mean / spec.followup_gamma_sd, 2.0);
    const double scale = spec.followup_gamma_sd * spec.followup_gamma_sd / spec.followup_gamma_mean;
    return std::gamma_distribution<double>(shape, scale)(rng);
  }
  return std::uniform_real_distribution<double>(spec.horizon_years, spec.horizon_years + 5.0)(rng);
}

std::string patient_name(std::size_t i, std::size_t n) {
  const auto width = std::to_string(n).size();
  auto s = std::to_string(i + 1);
  return "SYN" + std::string(width - std::min(width, s.size()), '0') + s;
}

SynthCohort generate(const GeneratorSpec& spec, const cohort::FeatureSchema& schema, bool repeated) {
  spec.validate(schema);
  const std::size_t P = schema.size(), N = spec.n_patients;
  const Roles roles = assign_roles(spec, schema);

  std::vector<int> label(N, 0);
  {
    std::vector<std::size_t> perm(N);
    std::iota(perm.begin(), perm.end(), 0);
    auto rng = make_rng(spec.seed, {1});
    std::shuffle(perm.begin(), perm.end(), rng);
    const std::size_t n_pos = positive_count(spec);
    for (std::size_t i = 0; i < n_pos; ++i) label[perm[i]] = 1;
  }

  SynthCohort out;
  out.cohort.schema = schema;
  const double sigma = spec.exam_noise;
  const double persist_sd = std::sqrt(1.0 - sigma * sigma);
  const double rho = spec.decoy_correlation;
  const double decoy_sd = std::sqrt(1.0 - rho * rho);
  const cohort::Date epoch = cohort::parse_date("2000-01-01");

  for (std::size_t i = 0; i < N; ++i) {
    auto rng = make_rng(spec.seed, {2, i});
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const std::string id = patient_name(i, N);
    const int y = label[i];

    std::vector<double> times{0.0};
    if (repeated) {
      const auto k = std::uniform_int_distribution<std::size_t>(spec.exams_per_patient.min,
                                                                spec.exams_per_patient.max)(rng);
      while (times.size() < k) {
        const double t = times.back() + 0.5 + 1.5 * unif(rng);
        if (t >= spec.horizon_years - 0.5) break;
        times.push_back(t);
      }
    }
    const double last = times.back();
    cohort::Outcome o;
    if (y == 1) {
      const double lo = last + 0.1;
      const double ev = lo + (spec.horizon_years - lo) * unif(rng);
      o.event_time_years = ev;
      o.followup_years = ev + 3.0 * unif(rng);
    } else {
      o.followup_years = std::max(draw_followup_free(spec, rng), last);
    }
    out.cohort.outcomes[id] = o;

    // Per-patient persistent latents and fixed binary traits.
    std::vector<double> persistent(P, 0.0), binary(P, 0.0);
    for (std::size_t j = 0; j < P; ++j) {
      const auto& e = schema[j];
      if (e.kind == FeatureKind::Binary) {
        const auto it = esc_binary().find(e.name);
        binary[j] = unif(rng) < (it != esc_binary().end() ? it->second : 0.2) ? 1.0 : 0.0;
      } else {
        const double mu = (roles.signal[j] && y == 1 ? spec.effect_size : 0.0);
        persistent[j] = mu + persist_sd * gauss(rng);
      }
    }
    const auto base_days = std::chrono::days(std::uniform_int_distribution<int>(0, 3650)(rng));

    for (double t : times) {
      cohort::PatientExam ex;
      ex.patient_id = id;
      ex.exam_date = epoch + base_days + std::chrono::days(std::llround(t * 365.25));
      ex.values.assign(P, 0.0);
      std::vector<double> latent(P, 0.0);
      for (std::size_t j = 0; j < P; ++j) {
        if (schema[j].kind == FeatureKind::Continuous && !roles.decoy_source[j]) {
          latent[j] = persistent[j] + sigma * gauss(rng);
          if (roles.signal[j] && y == 1) latent[j] += spec.drift_rate * t;
        }
      }
      for (std::size_t j = 0; j < P; ++j)
        if (const auto src = roles.decoy_source[j]) latent[j] = rho * latent[*src] + decoy_sd * gauss(rng);
      for (std::size_t j = 0; j < P; ++j) {
        const auto& e = schema[j];
        double v;
        if (e.kind == FeatureKind::Binary) {
          v = binary[j];
        } else if (const auto it = esc_continuous().find(e.name); it != esc_continuous().end()) {
          v = it->second.center + it->second.scale * (latent[j] + spec.mean_shift);
          if (it->second.floor) v = std::max(v, *it->second.floor);
        } else {
          v = latent[j] + spec.mean_shift;
        }
        const double u = unif(rng);
        if (roles.all_missing[j] || (roles.may_be_missing[j] && u < spec.missing_rate)) v = kMissing;
        ex.values[j] = v;
      }
      out.cohort.exams.push_back(std::move(ex));
    }
  }

  cohort::EndpointSpec endpoint{spec.horizon_years};
  out.cohort = cohort::derive_labels(out.cohort, endpoint);
  out.cohort.validate();

  auto& m = out.metadata;
  m.spec = spec;
  m.n_patients = N;
  m.n_positive = positive_count(spec);
  m.n_exams = out.cohort.exams.size();
  m.bayes_auc = bayes_auc(spec.effect_size, spec.signal_features.size());
  for (auto j : spec.signal_features) m.signal_names.push_back(schema[j].name);
  for (std::size_t j = 0; j < P; ++j)
    if (const auto src = roles.decoy_source[j]) m.decoy_of.emplace_back(schema[j].name, schema[*src].name);
  return out;
}

}  // namespace

void GeneratorSpec::validate(const cohort::FeatureSchema& schema) const {
  if (!(prevalence > 0.0 && prevalence < 1.0)) throw SynthError("prevalence must lie in (0, 1)");
  const std::size_t n_pos = positive_count(*this);
  if (n_pos < 1 || n_pos >= n_patients)
    throw SynthError("prevalence " + cohort::format_double(prevalence) + " with " +
                     std::to_string(n_patients) + " patients leaves a class empty");
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw SynthError("missing_rate must lie in [0, 1)");
  if (!(exam_noise >= 0.0 && exam_noise < 1.0)) throw SynthError("exam_noise must lie in [0, 1)");
  if (!(decoy_correlation > 0.0 && decoy_correlation < 1.0))
    throw SynthError("decoy_correlation must lie in (0, 1)");
  if (!std::isfinite(effect_size) || !std::isfinite(drift_rate) || !std::isfinite(mean_shift))
    throw SynthError("effect_size, drift_rate and mean_shift must be finite");
  if (!(horizon_years > 0.0)) throw SynthError("horizon must be positive");
  if (exams_per_patient.min < 1 || exams_per_patient.min > exams_per_patient.max)
    throw SynthError("exams_per_patient needs 1 <= min <= max");
  if (followup_gamma_mean > 0.0 && !(followup_gamma_sd > 0.0))
    throw SynthError("gamma follow-up needs a positive sd");
  std::set<std::size_t> seen;
  for (auto j : signal_features) {
    if (j >= schema.size())
      throw SynthError("signal feature " + std::to_string(j) + " is outside the schema");
    if (schema[j].kind != FeatureKind::Continuous)
      throw SynthError("signal feature " + schema[j].name + " is not continuous");
    if (!seen.insert(j).second) throw SynthError("signal feature " + schema[j].name + " listed twice");
  }
  for (const auto& name : all_missing) {
    const auto j = schema.index_of(name);
    if (!j) throw SynthError("all-missing feature " + name + " is not in the schema");
    if (!schema[*j].allow_missing || seen.contains(*j) || is_esc(name))
      throw SynthError("feature " + name + " cannot be left unmeasured");
  }
}

std::string GeneratorSpec::to_json() const {
  json j{{"n_patients", n_patients},
         {"prevalence", prevalence},
         {"signal_features", signal_features},
         {"effect_size", effect_size},
         {"exams_per_patient", {{"min", exams_per_patient.min}, {"max", exams_per_patient.max}}},
         {"drift_rate", drift_rate},
         {"exam_noise", exam_noise},
         {"missing_rate", missing_rate},
         {"decoys", decoys},
         {"decoy_correlation", decoy_correlation},
         {"mean_shift", mean_shift},
         {"all_missing", all_missing},
         {"horizon_years", horizon_years},
         {"followup_gamma_mean", followup_gamma_mean},
         {"followup_gamma_sd", followup_gamma_sd},
         {"seed", seed}};
  return j.dump(2);
}

GeneratorSpec GeneratorSpec::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw SynthError(std::string("generator spec is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw SynthError("generator spec must be a JSON object");
  static const std::set<std::string> known{
      "preset", "n_patients", "prevalence", "signal_features", "effect_size", "target_auc",
      "exams_per_patient", "drift_rate", "exam_noise", "missing_rate", "decoys",
      "decoy_correlation", "mean_shift", "all_missing", "horizon_years", "followup_gamma_mean",
      "followup_gamma_sd", "seed"};
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw SynthError("unknown generator spec field '" + k + "'");
  try {
    GeneratorSpec s = j.contains("preset") ? preset(j["preset"].get<std::string>()) : GeneratorSpec{};
    if (j.contains("n_patients")) s.n_patients = j["n_patients"].get<std::size_t>();
    if (j.contains("prevalence")) s.prevalence = j["prevalence"].get<double>();
    if (j.contains("signal_features")) s.signal_features = j["signal_features"].get<std::vector<std::size_t>>();
    if (j.contains("effect_size")) s.effect_size = j["effect_size"].get<double>();
    if (j.contains("target_auc")) {
      if (j.contains("effect_size")) throw SynthError("give either effect_size or target_auc, not both");
      s.effect_size = effect_size_for_auc(j["target_auc"].get<double>(), s.signal_features.size());
    }
    if (j.contains("exams_per_patient")) {
      const auto& e = j["exams_per_patient"];
      if (e.is_number_unsigned()) {
        s.exams_per_patient = {e.get<std::size_t>(), e.get<std::size_t>()};
      } else {
        s.exams_per_patient = {e.at("min").get<std::size_t>(), e.at("max").get<std::size_t>()};
      }
    }
    if (j.contains("drift_rate")) s.drift_rate = j["drift_rate"].get<double>();
    if (j.contains("exam_noise")) s.exam_noise = j["exam_noise"].get<double>();
    if (j.contains("missing_rate")) s.missing_rate = j["missing_rate"].get<double>();
    if (j.contains("decoys")) s.decoys = j["decoys"].get<std::size_t>();
    if (j.contains("decoy_correlation")) s.decoy_correlation = j["decoy_correlation"].get<double>();
    if (j.contains("mean_shift")) s.mean_shift = j["mean_shift"].get<double>();
    if (j.contains("all_missing")) s.all_missing = j["all_missing"].get<std::vector<std::string>>();
    if (j.contains("horizon_years")) s.horizon_years = j["horizon_years"].get<double>();
    if (j.contains("followup_gamma_mean")) s.followup_gamma_mean = j["followup_gamma_mean"].get<double>();
    if (j.contains("followup_gamma_sd")) s.followup_gamma_sd = j["followup_gamma_sd"].get<double>();
    if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
    return s;
  } catch (const json::exception& e) {
    throw SynthError(std::string("generator spec field has the wrong type: ") + e.what());
  }
}

GeneratorSpec preset(std::string_view name, std::uint64_t seed) {
  GeneratorSpec s;
  s.seed = seed;
  s.signal_features = {0, 1};
  if (name == "florence-like") {
    s.n_patients = 1201;
    s.prevalence = 0.257;
    s.effect_size = effect_size_for_auc(0.85, 2);
    s.missing_rate = 0.1;
    return s;
  }
  if (name == "rennes-like") {
    s.n_patients = 382;
    s.prevalence = 0.149;
    s.effect_size = 0.6 * effect_size_for_auc(0.85, 2);
    s.mean_shift = 0.5;
    s.missing_rate = 0.1;
    s.all_missing = {"average_e_e_prime", "tapse", "rv_s_prime", "pasp", "la_volume_index"};
    s.followup_gamma_mean = 2.3;
    s.followup_gamma_sd = 1.7;
    return s;
  }
  throw SynthError("unknown preset '" + std::string(name) + "' (expected florence-like or rennes-like)");
}

std::string SynthMetadata::to_json() const {
  json decoys = json::array();
  for (const auto& [d, s] : decoy_of) decoys.push_back({{"decoy", d}, {"source", s}});
  json j{{"bayes_auc", bayes_auc},
         {"n_patients", n_patients},
         {"n_positive", n_positive},
         {"n_exams", n_exams},
         {"signal_features", signal_names},
         {"decoys", decoys},
         {"spec", json::parse(spec.to_json())}};
  return j.dump(2);
}

SynthCohort generate_cohort(const GeneratorSpec& spec, const cohort::FeatureSchema& schema) {
  return generate(spec, schema, false);
}

SynthCohort generate_longitudinal(const GeneratorSpec& spec, const cohort::FeatureSchema& schema) {
  return generate(spec, schema, true);
}

}  // namespace hcmrisk::synth
