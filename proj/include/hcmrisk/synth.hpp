#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hcmrisk/cohort.hpp"

namespace hcmrisk::synth {

class SynthError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExamCount {
  std::size_t min = 1;
  std::size_t max = 1;  // uniform on [min, max]
};

struct GeneratorSpec {
  std::size_t n_patients = 1201;
  double prevalence = 0.257;
  std::vector<std::size_t> signal_features{0, 1};
  double effect_size = 1.0;   // latent mean shift of positives per signal feature
  ExamCount exams_per_patient;
  double drift_rate = 0.0;    // latent units per year, positives only
  double exam_noise = 0.15;   // within-patient sd of the latent between exams
  double missing_rate = 0.0;
  std::size_t decoys = 49;    // r ~ 0.9 copies of other noise features
  double decoy_correlation = 0.9;
  double mean_shift = 0.0;    // added to every continuous latent
  std::vector<std::string> all_missing;
  double horizon_years = 5.0;
  // Event-free follow-up: uniform on [horizon, horizon + 5] unless a gamma
  // mean/sd is given.
  double followup_gamma_mean = 0.0;
  double followup_gamma_sd = 0.0;
  std::uint64_t seed = 0;

  void validate(const cohort::FeatureSchema& schema) const;
  std::string to_json() const;
  static GeneratorSpec from_json(std::string_view text);
};

// Best achievable AUC with k independent unit-variance signal features
// shifted by delta: Phi(delta sqrt(k) / sqrt(2)).
double bayes_auc(double delta, std::size_t k);
double effect_size_for_auc(double auc, std::size_t k);

// "florence-like" (1201 patients, prevalence 0.257, Bayes AUC 0.85) or
// "rennes-like" (382 patients, prevalence 0.149, shifted means, weaker signal,
// shorter follow-up, five echo features never measured).
GeneratorSpec preset(std::string_view name, std::uint64_t seed = 0);

struct SynthMetadata {
  double bayes_auc = 0.5;
  std::size_t n_patients = 0;
  std::size_t n_positive = 0;
  std::size_t n_exams = 0;
  std::vector<std::string> signal_names;
  std::vector<std::pair<std::string, std::string>> decoy_of;  // decoy -> source
  GeneratorSpec spec;
  std::string to_json() const;
};

struct SynthCohort {
  cohort::Cohort cohort;  // labels derived at horizon_years
  SynthMetadata metadata;
};

// One exam per patient.
SynthCohort generate_cohort(const GeneratorSpec& spec, const cohort::FeatureSchema& schema);
// Exams spaced 0.5-2 years apart, all before the event (positives) and
// before the horizon.
SynthCohort generate_longitudinal(const GeneratorSpec& spec, const cohort::FeatureSchema& schema);

}  // namespace hcmrisk::synth
