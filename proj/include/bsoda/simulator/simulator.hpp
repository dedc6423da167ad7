#ifndef BSODA_SIMULATOR_SIMULATOR_HPP
#define BSODA_SIMULATOR_SIMULATOR_HPP

#include <optional>

#include "bsoda/core/dataset.hpp"
#include "bsoda/core/knowledge_base.hpp"
#include "bsoda/simulator/rng.hpp"

namespace bsoda {

struct SimConfig {
  std::uint64_t seed = 0;
  std::size_t train = 50000;
  std::size_t val = 5000;
  std::size_t test = 5000;
};

struct DatasetSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Uniform disease, then an independent Bernoulli trial per associated symptom.
DatasetRecord generate_record(const KnowledgeBase& kb, Rng& rng);

/// Record i of split k is drawn from stream (k, i) of the seed, so output
/// depends only on (kb, config).
DatasetSplits generate_dataset(const KnowledgeBase& kb, const SimConfig& config);

/// Uniform choice among the record's positives; nullopt when there are none.
std::optional<SymptomId> pick_self_report(const DatasetRecord& record, Rng& rng);

/// Shape of a randomly generated knowledge base. Symptom popularity is
/// Zipf-like so a few symptoms are shared by many diseases, which gives the
/// heavy overlap seen in real symptom-disease tables.
struct SyntheticKbConfig {
  std::size_t diseases = 50;
  std::size_t symptoms = 150;
  std::size_t min_symptoms_per_disease = 4;
  std::size_t max_symptoms_per_disease = 9;
  double zipf_exponent = 0.8;
  double min_probability = 0.05;
  double max_probability = 0.95;
  std::uint64_t seed = 0;
};

KnowledgeBase generate_knowledge_base(const SyntheticKbConfig& config);

}  // namespace bsoda

#endif  // BSODA_SIMULATOR_SIMULATOR_HPP
