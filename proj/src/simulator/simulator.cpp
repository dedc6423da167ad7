#include "bsoda/simulator/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace bsoda {

DatasetRecord generate_record(const KnowledgeBase& kb, Rng& rng) {
  DatasetRecord record;
  record.disease = DiseaseId(static_cast<std::uint32_t>(rng.index(kb.num_diseases())));
  for (const auto& m : kb.disease(record.disease).symptoms) {
    if (rng.bernoulli(m.probability)) record.positives.push_back(m.symptom);
  }
  return record;
}

namespace {

Dataset generate_split(const KnowledgeBase& kb, const Rng& root, std::uint64_t split,
                       std::size_t count) {
  Dataset out;
  out.reserve(count);
  const Rng stream = root.split(split);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = stream.split(i);
    out.push_back(generate_record(kb, rng));
  }
  return out;
}

}  // namespace

DatasetSplits generate_dataset(const KnowledgeBase& kb, const SimConfig& config) {
  const Rng root(config.seed);
  return {generate_split(kb, root, 1, config.train), generate_split(kb, root, 2, config.val),
          generate_split(kb, root, 3, config.test)};
}

std::optional<SymptomId> pick_self_report(const DatasetRecord& record, Rng& rng) {
  if (record.positives.empty()) return std::nullopt;
  return record.positives[rng.index(record.positives.size())];
}

KnowledgeBase generate_knowledge_base(const SyntheticKbConfig& config) {
  if (config.symptoms < config.max_symptoms_per_disease ||
      config.min_symptoms_per_disease == 0 ||
      config.min_symptoms_per_disease > config.max_symptoms_per_disease) {
    throw ContractError("generate_knowledge_base: inconsistent symptom counts");
  }
  Rng rng(config.seed);

  std::vector<double> popularity(config.symptoms);
  for (std::size_t i = 0; i < config.symptoms; ++i) {
    popularity[i] = 1.0 / std::pow(static_cast<double>(i + 1), config.zipf_exponent);
  }

  auto code = [](char prefix, std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%c%04zu", prefix, i);
    return std::string(buf);
  };

  std::vector<CatalogEntry> symptoms;
  for (std::size_t i = 0; i < config.symptoms; ++i) {
    symptoms.push_back({code('S', i), "symptom " + std::to_string(i)});
  }

  std::vector<KnowledgeBase::RawDisease> diseases;
  const std::size_t span = config.max_symptoms_per_disease - config.min_symptoms_per_disease + 1;
  for (std::size_t d = 0; d < config.diseases; ++d) {
    KnowledgeBase::RawDisease raw;
    raw.code = code('D', d);
    raw.name = "disease " + std::to_string(d);
    const std::size_t n = config.min_symptoms_per_disease + rng.index(span);

    // Weighted sampling without replacement over symptom popularity.
    std::vector<double> weights = popularity;
    for (std::size_t k = 0; k < n; ++k) {
      double total = 0.0;
      for (double w : weights) total += w;
      double u = rng.uniform() * total;
      std::size_t pick = 0;
      for (; pick + 1 < weights.size(); ++pick) {
        if (u < weights[pick]) break;
        u -= weights[pick];
      }
      while (weights[pick] == 0.0) pick = (pick + 1) % weights.size();
      weights[pick] = 0.0;
      const double p = config.min_probability +
                       (config.max_probability - config.min_probability) * rng.uniform();
      raw.symptoms.emplace_back(code('S', pick), std::round(p * 100.0) / 100.0);
    }
    diseases.push_back(std::move(raw));
  }
  return KnowledgeBase::from_raw(std::move(symptoms), std::move(diseases));
}

}  // namespace bsoda
