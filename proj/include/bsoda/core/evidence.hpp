#ifndef BSODA_CORE_EVIDENCE_HPP
#define BSODA_CORE_EVIDENCE_HPP

#include <map>
#include <string>
#include <vector>

#include "bsoda/core/dataset.hpp"
#include "bsoda/core/types.hpp"

namespace bsoda {

/// For every symptom s, the set of symptoms that co-occurred with s in the
/// training data with empirical P(x_j = 1 | x_s = 1) > threshold.
class CooccurrenceIndex {
 public:
  CooccurrenceIndex(double threshold, std::vector<std::vector<SymptomId>> sets);

  double threshold() const { return threshold_; }
  std::size_t num_symptoms() const { return sets_.size(); }

  /// Sorted members of S_s.
  const std::vector<SymptomId>& related(SymptomId s) const;

  bool operator==(const CooccurrenceIndex&) const = default;

 private:
  double threshold_;
  std::vector<std::vector<SymptomId>> sets_;
};

/// Symptoms never seen positive get the full symptom set.
CooccurrenceIndex build_cooccurrence(const Dataset& records, std::size_t num_symptoms,
                                     double threshold = 0.0);

std::string serialize_cooccurrence(const CooccurrenceIndex& index, const KnowledgeBase& kb);
CooccurrenceIndex parse_cooccurrence(std::string_view json_text, const KnowledgeBase& kb);

/// Per-session observations and the filtered candidate set S_c.
struct EvidenceState {
  std::map<SymptomId, BinaryValue> observed;
  std::vector<SymptomId> candidates;  // sorted, disjoint from observed
  std::size_t initial_reports = 0;
  std::size_t rounds = 0;

  bool is_observed(SymptomId s) const { return observed.contains(s); }
  bool is_candidate(SymptomId s) const;
  std::vector<SymptomId> unobserved(std::size_t num_symptoms) const;

  bool operator==(const EvidenceState&) const = default;
};

/// Candidate set after a set of positive self-reports: the intersection of
/// their co-occurrence sets minus everything observed. With filtering off,
/// every unobserved symptom is a candidate.
EvidenceState initial_evidence(const std::vector<std::pair<SymptomId, BinaryValue>>& reports,
                               const CooccurrenceIndex& index, bool enable_filtering = true);

/// Records the answer to symptom s. A positive answer intersects the
/// candidates with S_s; a negative answer only removes s.
EvidenceState update_candidates(const EvidenceState& state, const CooccurrenceIndex& index,
                                SymptomId s, BinaryValue value, bool enable_filtering = true);

}  // namespace bsoda

#endif  // BSODA_CORE_EVIDENCE_HPP
