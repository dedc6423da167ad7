#ifndef BSODA_TESTS_TEST_SUPPORT_HPP
#define BSODA_TESTS_TEST_SUPPORT_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "bsoda/core/knowledge_base.hpp"
#include "bsoda/simulator/rng.hpp"

namespace bsoda::testing {

/// Symptom codes s0..s{n-1}; diseases given as lists of (symptom index, prob).
inline KnowledgeBase make_kb(std::size_t num_symptoms,
                             const std::vector<std::vector<std::pair<std::size_t, double>>>& diseases) {
  std::vector<CatalogEntry> symptoms;
  for (std::size_t i = 0; i < num_symptoms; ++i) {
    char code[16];
    std::snprintf(code, sizeof code, "s%02zu", i);
    symptoms.push_back({code, std::string("symptom ") + code});
  }
  std::vector<KnowledgeBase::RawDisease> raw;
  for (std::size_t d = 0; d < diseases.size(); ++d) {
    char code[16];
    std::snprintf(code, sizeof code, "d%02zu", d);
    KnowledgeBase::RawDisease r{code, std::string("disease ") + code, {}};
    for (const auto& [s, p] : diseases[d]) r.symptoms.emplace_back(symptoms[s].code, p);
    raw.push_back(std::move(r));
  }
  return KnowledgeBase::from_raw(std::move(symptoms), std::move(raw));
}

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
 public:
  TempDir() {
    Rng rng(static_cast<std::uint64_t>(reinterpret_cast<std::uintptr_t>(this)) ^ 0xabcdefULL);
    path_ = std::filesystem::temp_directory_path() / ("bsoda_test_" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::filesystem::path source_dir() { return BSODA_SOURCE_DIR; }

}  // namespace bsoda::testing

#endif  // BSODA_TESTS_TEST_SUPPORT_HPP
