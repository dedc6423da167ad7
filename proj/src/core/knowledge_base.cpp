#include "bsoda/core/knowledge_base.hpp"

#include <algorithm>
#include <set>

#include "bsoda/core/json_io.hpp"

namespace bsoda {

namespace {

template <typename Entry>
std::vector<std::size_t> order_by_code(const std::vector<Entry>& entries) {
  std::vector<std::size_t> order(entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return entries[a].code < entries[b].code; });
  return order;
}

template <typename Entry>
void require_unique_codes(const std::vector<Entry>& sorted, std::string_view what) {
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].code == sorted[i - 1].code) {
      throw ValidationError("duplicate " + std::string(what) + " code '" + sorted[i].code + "'");
    }
  }
}

}  // namespace

KnowledgeBase KnowledgeBase::from_raw(std::vector<CatalogEntry> symptoms,
                                      std::vector<RawDisease> diseases) {
  KnowledgeBase kb;
  if (symptoms.empty()) throw ValidationError("knowledge base needs at least one symptom");
  if (diseases.size() < 2) throw ValidationError("knowledge base needs at least two diseases");

  for (std::size_t i : order_by_code(symptoms)) kb.symptoms_.push_back(std::move(symptoms[i]));
  require_unique_codes(kb.symptoms_, "symptom");

  for (std::size_t i : order_by_code(diseases)) {
    RawDisease& raw = diseases[i];
    DiseaseEntry entry{raw.code, raw.name, {}};
    if (raw.symptoms.empty()) {
      throw ValidationError("disease '" + raw.code + "' has no associated symptoms");
    }
    std::set<std::uint32_t> seen;
    for (const auto& [code, prob] : raw.symptoms) {
      auto id = kb.find_symptom(code);
      if (!id) {
        throw ValidationError("disease '" + raw.code + "' references unknown symptom '" + code + "'");
      }
      if (!(prob > 0.0 && prob <= 1.0)) {
        throw ValidationError("disease '" + raw.code + "', symptom '" + code +
                              "': probability " + std::to_string(prob) + " outside (0, 1]");
      }
      if (!seen.insert(id->value).second) {
        throw ValidationError("disease '" + raw.code + "' lists symptom '" + code + "' twice");
      }
      entry.symptoms.push_back({*id, prob});
    }
    std::sort(entry.symptoms.begin(), entry.symptoms.end(),
              [](const SymptomMarginal& a, const SymptomMarginal& b) { return a.symptom < b.symptom; });
    kb.diseases_.push_back(std::move(entry));
  }
  require_unique_codes(kb.diseases_, "disease");
  return kb;
}

const CatalogEntry& KnowledgeBase::symptom(SymptomId id) const {
  if (id.value >= symptoms_.size()) throw ContractError("symptom id out of range");
  return symptoms_[id.value];
}

const DiseaseEntry& KnowledgeBase::disease(DiseaseId id) const {
  if (id.value >= diseases_.size()) throw ContractError("disease id out of range");
  return diseases_[id.value];
}

std::optional<SymptomId> KnowledgeBase::find_symptom(std::string_view code) const {
  auto it = std::lower_bound(symptoms_.begin(), symptoms_.end(), code,
                             [](const CatalogEntry& e, std::string_view c) { return e.code < c; });
  if (it == symptoms_.end() || it->code != code) return std::nullopt;
  return SymptomId(static_cast<std::uint32_t>(it - symptoms_.begin()));
}

std::optional<DiseaseId> KnowledgeBase::find_disease(std::string_view code) const {
  auto it = std::lower_bound(diseases_.begin(), diseases_.end(), code,
                             [](const DiseaseEntry& e, std::string_view c) { return e.code < c; });
  if (it == diseases_.end() || it->code != code) return std::nullopt;
  return DiseaseId(static_cast<std::uint32_t>(it - diseases_.begin()));
}

double KnowledgeBase::marginal(DiseaseId d, SymptomId s) const {
  const auto& list = disease(d).symptoms;
  auto it = std::lower_bound(list.begin(), list.end(), s,
                             [](const SymptomMarginal& m, SymptomId id) { return m.symptom < id; });
  return (it != list.end() && it->symptom == s) ? it->probability : 0.0;
}

std::string KnowledgeBase::fingerprint() const { return fnv1a_hex(serialize_knowledge_base(*this)); }

KnowledgeBase parse_knowledge_base(std::string_view json_text) {
  nlohmann::json doc = parse_json(json_text, "knowledge base");
  try {
    std::vector<CatalogEntry> symptoms;
    for (const auto& s : doc.at("symptoms")) {
      symptoms.push_back({s.at("code").get<std::string>(), s.value("name", s.at("code").get<std::string>())});
    }
    std::vector<KnowledgeBase::RawDisease> diseases;
    for (const auto& d : doc.at("diseases")) {
      KnowledgeBase::RawDisease raw;
      raw.code = d.at("code").get<std::string>();
      raw.name = d.value("name", raw.code);
      for (const auto& s : d.at("symptoms")) {
        raw.symptoms.emplace_back(s.at("code").get<std::string>(), s.at("prob").get<double>());
      }
      diseases.push_back(std::move(raw));
    }
    return KnowledgeBase::from_raw(std::move(symptoms), std::move(diseases));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("knowledge base: ") + e.what());
  }
}

KnowledgeBase load_knowledge_base(const std::filesystem::path& path) {
  try {
    return parse_knowledge_base(read_text_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string serialize_knowledge_base(const KnowledgeBase& kb) {
  nlohmann::ordered_json doc;
  doc["symptoms"] = nlohmann::ordered_json::array();
  for (const auto& s : kb.symptoms()) {
    doc["symptoms"].push_back({{"code", s.code}, {"name", s.name}});
  }
  doc["diseases"] = nlohmann::ordered_json::array();
  for (const auto& d : kb.diseases()) {
    nlohmann::ordered_json entry{{"code", d.code}, {"name", d.name}};
    entry["symptoms"] = nlohmann::ordered_json::array();
    for (const auto& m : d.symptoms) {
      entry["symptoms"].push_back({{"code", kb.symptom(m.symptom).code}, {"prob", m.probability}});
    }
    doc["diseases"].push_back(std::move(entry));
  }
  return doc.dump(1) + "\n";
}

void save_knowledge_base(const KnowledgeBase& kb, const std::filesystem::path& path) {
  write_text_file(path, serialize_knowledge_base(kb));
}

}  // namespace bsoda
