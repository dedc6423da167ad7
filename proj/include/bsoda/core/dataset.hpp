#ifndef BSODA_CORE_DATASET_HPP
#define BSODA_CORE_DATASET_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "bsoda/core/knowledge_base.hpp"
#include "bsoda/core/types.hpp"

namespace bsoda {

/// One complete patient: the disease and the symptoms that are present.
/// Every symptom not listed is absent.
struct DatasetRecord {
  DiseaseId disease;
  std::vector<SymptomId> positives;  // sorted, unique

  bool has_symptom(SymptomId s) const;
  bool operator==(const DatasetRecord&) const = default;
};

using Dataset = std::vector<DatasetRecord>;

/// JSON-lines, one `{"disease": code, "positives": [codes]}` per line.
Dataset load_dataset(const std::filesystem::path& path, const KnowledgeBase& kb);
Dataset parse_dataset(std::string_view text, const KnowledgeBase& kb);
std::string serialize_dataset(const Dataset& records, const KnowledgeBase& kb);
void save_dataset(const Dataset& records, const KnowledgeBase& kb,
                  const std::filesystem::path& path);

/// Dense 0/1 matrix row for the symptom part of a record.
std::vector<BinaryValue> symptom_vector(const DatasetRecord& record, std::size_t num_symptoms);

}  // namespace bsoda

#endif  // BSODA_CORE_DATASET_HPP
