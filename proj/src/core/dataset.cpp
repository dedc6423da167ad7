#include "bsoda/core/dataset.hpp"

#include <algorithm>
#include <sstream>

#include "bsoda/core/json_io.hpp"

namespace bsoda {

bool DatasetRecord::has_symptom(SymptomId s) const {
  return std::binary_search(positives.begin(), positives.end(), s);
}

Dataset parse_dataset(std::string_view text, const KnowledgeBase& kb) {
  Dataset records;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    const std::string where = "dataset line " + std::to_string(line_no);
    nlohmann::json row = parse_json(line, where);
    DatasetRecord record;
    try {
      const auto code = row.at("disease").get<std::string>();
      auto d = kb.find_disease(code);
      if (!d) throw ValidationError(where + ": unknown disease '" + code + "'");
      record.disease = *d;
      for (const auto& p : row.at("positives")) {
        const auto sc = p.get<std::string>();
        auto s = kb.find_symptom(sc);
        if (!s) throw ValidationError(where + ": unknown symptom '" + sc + "'");
        record.positives.push_back(*s);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
    std::sort(record.positives.begin(), record.positives.end());
    record.positives.erase(std::unique(record.positives.begin(), record.positives.end()),
                           record.positives.end());
    records.push_back(std::move(record));
  }
  return records;
}

Dataset load_dataset(const std::filesystem::path& path, const KnowledgeBase& kb) {
  return parse_dataset(read_text_file(path), kb);
}

std::string serialize_dataset(const Dataset& records, const KnowledgeBase& kb) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json row;
    row["disease"] = kb.disease(r.disease).code;
    row["positives"] = nlohmann::ordered_json::array();
    for (SymptomId s : r.positives) row["positives"].push_back(kb.symptom(s).code);
    out += row.dump();
    out += '\n';
  }
  return out;
}

void save_dataset(const Dataset& records, const KnowledgeBase& kb,
                  const std::filesystem::path& path) {
  write_text_file(path, serialize_dataset(records, kb));
}

std::vector<BinaryValue> symptom_vector(const DatasetRecord& record, std::size_t num_symptoms) {
  std::vector<BinaryValue> x(num_symptoms, 0);
  for (SymptomId s : record.positives) x.at(s.value) = 1;
  return x;
}

}  // namespace bsoda
