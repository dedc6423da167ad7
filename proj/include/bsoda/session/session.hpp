#ifndef BSODA_SESSION_SESSION_HPP
#define BSODA_SESSION_SESSION_HPP

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsoda/core/evidence.hpp"
#include "bsoda/core/knowledge_base.hpp"
#include "bsoda/diagnosis/diag_model.hpp"
#include "bsoda/inquiry/vae.hpp"
#include "bsoda/reward/reward.hpp"

namespace bsoda {

/// Trained models and the lookup tables a session needs. Immutable once
/// built and shared by every session.
struct Engine {
  KnowledgeBase kb;
  CooccurrenceIndex cooccurrence;
  DiagModel diag;
  Vae vae;
};

enum class InquiryPolicy { Reward, Random };
enum class TerminationReason { Confidence, Budget, NoCandidates };

std::string to_string(TerminationReason reason);
std::optional<TerminationReason> parse_termination_reason(std::string_view text);

struct SessionConfig {
  std::size_t max_inquiries = 15;  // N_T
  std::size_t n_mc = 100;          // N_M, used for both rewards and diagnosis
  RewardConfig reward{};           // reward.n_mc is overridden by n_mc
  InquiryPolicy policy = InquiryPolicy::Reward;
  std::uint64_t seed = 0;
};

/// One pass of the loop: the answer that opened it (none for the intake
/// round), the diagnosis after it and, unless the session ended, the next
/// question with the rewards that chose it.
struct RoundRecord {
  std::size_t round = 0;
  std::optional<SymptomId> asked;
  std::optional<BinaryValue> answer;
  PredictiveSummary diagnosis;
  std::size_t num_candidates = 0;
  std::optional<SymptomId> question;
  std::optional<RewardBreakdown> rewards;
};

struct SessionRecord {
  std::string id;
  std::uint64_t seed = 0;
  std::vector<std::pair<SymptomId, BinaryValue>> initial;
  std::vector<RoundRecord> rounds;
  std::optional<TerminationReason> termination;
  std::vector<std::pair<DiseaseId, double>> ranking;  // by mu descending

  std::size_t inquiries() const { return rounds.empty() ? 0 : rounds.size() - 1; }
  std::optional<SymptomId> pending() const;
};

/// For d = argmax mu, terminate iff mu_d > mu_j + 3 sigma_j for every
/// j != d. Confidence is checked before the budget rounds >= max_inquiries.
std::optional<TerminationReason> should_terminate(const PredictiveSummary& summary, std::size_t rounds,
                                                  std::size_t max_inquiries);

/// N_M completions of the unobserved symptoms from the VAE, each run through
/// the diagnosis model. Without use_diag the decoder's own disease
/// probabilities, normalised per draw, stand in for the diagnosis model.
PredictiveSummary diagnose(const Engine& engine, const EvidenceState& state, std::size_t n_mc, bool use_diag,
                           Rng& rng);

/// A single consultation: start with self-reports, then answer each
/// question until the session terminates.
class Session {
 public:
  Session(const Engine& engine, SessionConfig config, std::string id = {});

  const SessionRecord& start(const std::vector<std::pair<SymptomId, BinaryValue>>& initial);
  const SessionRecord& answer(SymptomId s, BinaryValue value);

  bool started() const { return started_; }
  bool complete() const { return record_.termination.has_value(); }
  std::optional<SymptomId> pending() const { return record_.pending(); }
  const SessionRecord& record() const { return record_; }
  const EvidenceState& evidence() const { return state_; }
  const SessionConfig& config() const { return config_; }

 private:
  void step(std::optional<SymptomId> asked, std::optional<BinaryValue> answer);

  const Engine& engine_;
  SessionConfig config_;
  EvidenceState state_;
  SessionRecord record_;
  Rng root_;
  bool started_ = false;
};

/// Replays a transcript's initial reports and answers through a fresh
/// session with `config` and the transcript's own seed.
SessionRecord replay(const Engine& engine, const SessionConfig& config, const SessionRecord& transcript);

nlohmann::ordered_json summary_to_json(const PredictiveSummary& summary, const KnowledgeBase& kb, std::size_t top_k);
/// With include_rewards the full per-round breakdowns are included.
nlohmann::ordered_json session_to_json(const SessionRecord& record, const KnowledgeBase& kb, bool include_rewards);

}  // namespace bsoda

#endif  // BSODA_SESSION_SESSION_HPP
