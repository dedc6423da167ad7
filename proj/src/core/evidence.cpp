#include "bsoda/core/evidence.hpp"

#include <algorithm>
#include <iterator>

#include "bsoda/core/json_io.hpp"

namespace bsoda {

CooccurrenceIndex::CooccurrenceIndex(double threshold, std::vector<std::vector<SymptomId>> sets)
    : threshold_(threshold), sets_(std::move(sets)) {
  for (auto& s : sets_) {
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
  }
}

const std::vector<SymptomId>& CooccurrenceIndex::related(SymptomId s) const {
  if (s.value >= sets_.size()) throw ContractError("symptom id out of range for co-occurrence index");
  return sets_[s.value];
}

CooccurrenceIndex build_cooccurrence(const Dataset& records, std::size_t num_symptoms,
                                     double threshold) {
  if (records.empty()) throw ContractError("build_cooccurrence: no records");
  if (!(threshold >= 0.0 && threshold < 1.0)) {
    throw ContractError("build_cooccurrence: threshold must lie in [0, 1)");
  }
  std::vector<std::size_t> support(num_symptoms, 0);
  // Rows are allocated only for symptoms seen positive at least once.
  std::vector<std::vector<std::size_t>> counts(num_symptoms);
  for (const auto& r : records) {
    for (SymptomId s : r.positives) {
      ++support[s.value];
      auto& row = counts[s.value];
      if (row.empty()) row.assign(num_symptoms, 0);
      for (SymptomId j : r.positives) ++row[j.value];
    }
  }

  std::vector<std::vector<SymptomId>> sets(num_symptoms);
  for (std::size_t s = 0; s < num_symptoms; ++s) {
    if (support[s] == 0) {
      sets[s].reserve(num_symptoms);
      for (std::size_t j = 0; j < num_symptoms; ++j) sets[s].emplace_back(static_cast<std::uint32_t>(j));
      continue;
    }
    const double denom = static_cast<double>(support[s]);
    for (std::size_t j = 0; j < num_symptoms; ++j) {
      if (static_cast<double>(counts[s][j]) / denom > threshold) {
        sets[s].emplace_back(static_cast<std::uint32_t>(j));
      }
    }
  }
  return CooccurrenceIndex(threshold, std::move(sets));
}

std::string serialize_cooccurrence(const CooccurrenceIndex& index, const KnowledgeBase& kb) {
  nlohmann::ordered_json doc;
  doc["threshold"] = index.threshold();
  doc["sets"] = nlohmann::ordered_json::object();
  for (std::uint32_t s = 0; s < index.num_symptoms(); ++s) {
    auto& arr = doc["sets"][kb.symptom(SymptomId(s)).code] = nlohmann::ordered_json::array();
    for (SymptomId j : index.related(SymptomId(s))) arr.push_back(kb.symptom(j).code);
  }
  return doc.dump() + "\n";
}

CooccurrenceIndex parse_cooccurrence(std::string_view json_text, const KnowledgeBase& kb) {
  auto doc = parse_json(json_text, "co-occurrence index");
  try {
    std::vector<std::vector<SymptomId>> sets(kb.num_symptoms());
    std::vector<bool> present(kb.num_symptoms(), false);
    for (const auto& [code, members] : doc.at("sets").items()) {
      auto s = kb.find_symptom(code);
      if (!s) throw ValidationError("co-occurrence index: unknown symptom '" + code + "'");
      present[s->value] = true;
      for (const auto& m : members) {
        auto j = kb.find_symptom(m.get<std::string>());
        if (!j) throw ValidationError("co-occurrence index: unknown symptom '" + m.get<std::string>() + "'");
        sets[s->value].push_back(*j);
      }
    }
    if (std::find(present.begin(), present.end(), false) != present.end()) {
      throw ValidationError("co-occurrence index does not cover every symptom");
    }
    return CooccurrenceIndex(doc.at("threshold").get<double>(), std::move(sets));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("co-occurrence index: ") + e.what());
  }
}

bool EvidenceState::is_candidate(SymptomId s) const {
  return std::binary_search(candidates.begin(), candidates.end(), s);
}

std::vector<SymptomId> EvidenceState::unobserved(std::size_t num_symptoms) const {
  std::vector<SymptomId> out;
  for (std::uint32_t s = 0; s < num_symptoms; ++s) {
    if (!observed.contains(SymptomId(s))) out.emplace_back(s);
  }
  return out;
}

EvidenceState initial_evidence(const std::vector<std::pair<SymptomId, BinaryValue>>& reports,
                               const CooccurrenceIndex& index, bool enable_filtering) {
  EvidenceState state;
  bool any_positive = false;
  for (const auto& [s, v] : reports) {
    if (v > 1) throw ContractError("observed values must be 0 or 1");
    if (s.value >= index.num_symptoms()) throw ContractError("symptom id out of range");
    if (state.observed.contains(s)) throw ContractError("symptom reported twice");
    state.observed.emplace(s, v);
    any_positive = any_positive || v == 1;
  }
  if (!any_positive) throw ContractError("at least one positive self-reported symptom is required");
  state.initial_reports = reports.size();

  std::vector<SymptomId> pool;
  if (enable_filtering) {
    bool first = true;
    for (const auto& [s, v] : reports) {
      if (v != 1) continue;
      const auto& related = index.related(s);
      if (first) {
        pool = related;
        first = false;
      } else {
        std::vector<SymptomId> next;
        std::set_intersection(pool.begin(), pool.end(), related.begin(), related.end(),
                              std::back_inserter(next));
        pool = std::move(next);
      }
    }
  } else {
    for (std::uint32_t s = 0; s < index.num_symptoms(); ++s) pool.emplace_back(s);
  }
  for (SymptomId s : pool) {
    if (!state.observed.contains(s)) state.candidates.push_back(s);
  }
  return state;
}

EvidenceState update_candidates(const EvidenceState& state, const CooccurrenceIndex& index,
                                SymptomId s, BinaryValue value, bool enable_filtering) {
  if (value > 1) throw ContractError("observed values must be 0 or 1");
  if (state.observed.contains(s)) {
    throw ContractError("symptom '" + std::to_string(s.value) + "' has already been observed");
  }
  EvidenceState next = state;
  next.observed.emplace(s, value);
  next.candidates.erase(std::remove(next.candidates.begin(), next.candidates.end(), s),
                        next.candidates.end());
  if (value == 1 && enable_filtering) {
    const auto& related = index.related(s);
    std::vector<SymptomId> kept;
    std::set_intersection(next.candidates.begin(), next.candidates.end(), related.begin(),
                          related.end(), std::back_inserter(kept));
    next.candidates = std::move(kept);
  }
  ++next.rounds;
  return next;
}

}  // namespace bsoda
