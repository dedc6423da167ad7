#ifndef BSODA_CORE_KNOWLEDGE_BASE_HPP
#define BSODA_CORE_KNOWLEDGE_BASE_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bsoda/core/types.hpp"

namespace bsoda {

struct CatalogEntry {
  std::string code;
  std::string name;

  bool operator==(const CatalogEntry&) const = default;
};

struct SymptomMarginal {
  SymptomId symptom;
  double probability = 0.0;  // p(symptom present | disease)

  bool operator==(const SymptomMarginal&) const = default;
};

struct DiseaseEntry {
  std::string code;
  std::string name;
  std::vector<SymptomMarginal> symptoms;  // sorted by symptom id

  bool operator==(const DiseaseEntry&) const = default;
};

/// Diseases, symptoms and the marginal probability of each symptom under
/// each disease. Indices follow the sorted order of the string codes, so a
/// given file always yields the same ids.
///
/// Feature layout used by both models: symptoms occupy [0, |S|) and
/// diseases occupy [|S|, |S| + |D|).
class KnowledgeBase {
 public:
  struct RawDisease {
    std::string code;
    std::string name;
    std::vector<std::pair<std::string, double>> symptoms;  // (symptom code, prob)
  };
  /// Builds and validates. Entries may be given in any order; they are
  /// re-indexed by code. Throws ValidationError.
  static KnowledgeBase from_raw(std::vector<CatalogEntry> symptoms,
                                std::vector<RawDisease> diseases);

  std::size_t num_symptoms() const { return symptoms_.size(); }
  std::size_t num_diseases() const { return diseases_.size(); }
  std::size_t num_features() const { return symptoms_.size() + diseases_.size(); }

  const CatalogEntry& symptom(SymptomId id) const;
  const DiseaseEntry& disease(DiseaseId id) const;
  const std::vector<CatalogEntry>& symptoms() const { return symptoms_; }
  const std::vector<DiseaseEntry>& diseases() const { return diseases_; }

  std::optional<SymptomId> find_symptom(std::string_view code) const;
  std::optional<DiseaseId> find_disease(std::string_view code) const;

  /// p(symptom | disease), 0 when the symptom is not associated.
  double marginal(DiseaseId d, SymptomId s) const;

  std::size_t feature_of(SymptomId s) const { return s.value; }
  std::size_t feature_of(DiseaseId d) const { return symptoms_.size() + d.value; }

  /// Stable 64-bit FNV-1a hash of the canonical JSON serialization, hex.
  std::string fingerprint() const;

  bool operator==(const KnowledgeBase&) const = default;

 private:
  KnowledgeBase() = default;

  std::vector<CatalogEntry> symptoms_;
  std::vector<DiseaseEntry> diseases_;
};

KnowledgeBase load_knowledge_base(const std::filesystem::path& path);
KnowledgeBase parse_knowledge_base(std::string_view json_text);
std::string serialize_knowledge_base(const KnowledgeBase& kb);
void save_knowledge_base(const KnowledgeBase& kb, const std::filesystem::path& path);

}  // namespace bsoda

#endif  // BSODA_CORE_KNOWLEDGE_BASE_HPP
