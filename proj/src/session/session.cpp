#include "bsoda/session/session.hpp"

#include <algorithm>

namespace bsoda {

using nn::Tensor2;

std::string to_string(TerminationReason reason) {
  switch (reason) {
    case TerminationReason::Confidence: return "confidence";
    case TerminationReason::Budget: return "budget";
    case TerminationReason::NoCandidates: return "no_candidates";
  }
  return "unknown";
}

std::optional<TerminationReason> parse_termination_reason(std::string_view text) {
  if (text == "confidence") return TerminationReason::Confidence;
  if (text == "budget") return TerminationReason::Budget;
  if (text == "no_candidates") return TerminationReason::NoCandidates;
  return std::nullopt;
}

std::optional<SymptomId> SessionRecord::pending() const {
  if (termination || rounds.empty()) return std::nullopt;
  return rounds.back().question;
}

std::optional<TerminationReason> should_terminate(const PredictiveSummary& summary, std::size_t rounds,
                                                  std::size_t max_inquiries) {
  const Eigen::Index n = summary.mu.size();
  if (n > 0) {
    Eigen::Index d = 0;
    summary.mu.maxCoeff(&d);
    bool confident = true;
    for (Eigen::Index j = 0; j < n && confident; ++j) {
      if (j != d && !(summary.mu(d) > summary.mu(j) + 3.0 * summary.sigma(j))) confident = false;
    }
    if (confident) return TerminationReason::Confidence;
  }
  if (rounds >= max_inquiries) return TerminationReason::Budget;
  return std::nullopt;
}

PredictiveSummary diagnose(const Engine& engine, const EvidenceState& state, std::size_t n_mc, bool use_diag,
                           Rng& rng) {
  const auto num_s = static_cast<Eigen::Index>(engine.kb.num_symptoms());
  if (use_diag) {
    const Imputation imp = sample_unobserved(engine.vae, feature_evidence(state), n_mc, rng);
    return summarize_predictions(engine.diag, imp.completions.leftCols(num_s));
  }
  Tensor2 probs = engine.vae.decode(sample_latents(engine.vae.encode(feature_evidence(state)), n_mc, rng));
  Tensor2 p = probs.rightCols(static_cast<Eigen::Index>(engine.kb.num_diseases()));
  for (Eigen::Index r = 0; r < p.rows(); ++r) p.row(r) /= p.row(r).sum();
  return summarize_distributions(p);
}

Session::Session(const Engine& engine, SessionConfig config, std::string id)
    : engine_(engine), config_(config), root_(config.seed) {
  config_.reward.n_mc = config_.n_mc;
  record_.id = std::move(id);
  record_.seed = config.seed;
}

const SessionRecord& Session::start(const std::vector<std::pair<SymptomId, BinaryValue>>& initial) {
  if (started_) throw ContractError("session already started");
  for (const auto& [s, v] : initial) {
    if (s.value >= engine_.kb.num_symptoms()) throw ContractError("unknown symptom in self-report");
    if (v > 1) throw ContractError("self-report values must be 0 or 1");
  }
  if (std::none_of(initial.begin(), initial.end(), [](const auto& r) { return r.second == 1; })) {
    throw ContractError("intake needs at least one symptom reported as present");
  }
  state_ = initial_evidence(initial, engine_.cooccurrence, config_.reward.enable_filtering);
  started_ = true;
  record_.initial = initial;
  step(std::nullopt, std::nullopt);
  return record_;
}

const SessionRecord& Session::answer(SymptomId s, BinaryValue value) {
  if (!started_) throw ContractError("session not started");
  if (complete()) throw ContractError("session complete");
  if (pending() != s) throw ContractError("answer does not match the pending question");
  if (value > 1) throw ContractError("answer must be 0 or 1");
  state_ = update_candidates(state_, engine_.cooccurrence, s, value, config_.reward.enable_filtering);
  step(s, value);
  return record_;
}

void Session::step(std::optional<SymptomId> asked, std::optional<BinaryValue> answer) {
  const std::size_t round = record_.rounds.size();
  Rng reward_rng = root_.split(2 * round);
  Rng diag_rng = root_.split(2 * round + 1);

  RoundRecord r;
  r.round = round;
  r.asked = asked;
  r.answer = answer;
  r.diagnosis = diagnose(engine_, state_, config_.n_mc, config_.reward.use_diag_for_joint, diag_rng);
  r.num_candidates = state_.candidates.size();

  std::optional<TerminationReason> reason = should_terminate(r.diagnosis, state_.rounds, config_.max_inquiries);
  if (!reason && state_.candidates.empty()) reason = TerminationReason::NoCandidates;
  if (!reason) {
    if (config_.policy == InquiryPolicy::Random) {
      r.question = state_.candidates[reward_rng.index(state_.candidates.size())];
    } else {
      r.rewards = candidate_rewards(engine_.vae, engine_.diag, state_, config_.reward, reward_rng);
      r.question = select_next(*r.rewards);
    }
  }
  record_.ranking.clear();
  for (DiseaseId d : r.diagnosis.ranking()) record_.ranking.emplace_back(d, r.diagnosis.mu(d.value));
  record_.termination = reason;
  record_.rounds.push_back(std::move(r));
}

SessionRecord replay(const Engine& engine, const SessionConfig& config, const SessionRecord& transcript) {
  SessionConfig c = config;
  c.seed = transcript.seed;
  Session s(engine, c, transcript.id);
  s.start(transcript.initial);
  for (std::size_t i = 1; i < transcript.rounds.size(); ++i) {
    const RoundRecord& r = transcript.rounds[i];
    if (!r.asked || !r.answer) throw ValidationError("transcript round without an answer");
    s.answer(*r.asked, *r.answer);
  }
  return s.record();
}

nlohmann::ordered_json summary_to_json(const PredictiveSummary& summary, const KnowledgeBase& kb,
                                       std::size_t top_k) {
  nlohmann::ordered_json top = nlohmann::ordered_json::array();
  const auto order = summary.ranking();
  for (std::size_t i = 0; i < std::min(top_k, order.size()); ++i) {
    const DiseaseId d = order[i];
    top.push_back({{"disease", kb.disease(d).code},
                   {"name", kb.disease(d).name},
                   {"mu", summary.mu(d.value)},
                   {"sigma", summary.sigma(d.value)}});
  }
  return top;
}

nlohmann::ordered_json session_to_json(const SessionRecord& record, const KnowledgeBase& kb, bool include_rewards) {
  nlohmann::ordered_json initial = nlohmann::ordered_json::array();
  for (const auto& [s, v] : record.initial) initial.push_back({{"symptom", kb.symptom(s).code}, {"present", v == 1}});
  nlohmann::ordered_json rounds = nlohmann::ordered_json::array();
  for (const auto& r : record.rounds) {
    nlohmann::ordered_json j{{"round", r.round}};
    j["asked"] = r.asked ? nlohmann::ordered_json(kb.symptom(*r.asked).code) : nlohmann::ordered_json(nullptr);
    j["answer"] = r.answer ? nlohmann::ordered_json(*r.answer == 1) : nlohmann::ordered_json(nullptr);
    j["num_candidates"] = r.num_candidates;
    j["question"] = r.question ? nlohmann::ordered_json(kb.symptom(*r.question).code) : nlohmann::ordered_json(nullptr);
    j["top5"] = summary_to_json(r.diagnosis, kb, 5);
    if (r.rewards) {
      if (include_rewards) {
        j["rewards"] = reward_to_json(*r.rewards, kb);
      } else {
        double best = r.rewards->candidates.front().reward;
        for (const auto& c : r.rewards->candidates) best = std::max(best, c.reward);
        j["max_reward"] = best;
      }
    }
    rounds.push_back(std::move(j));
  }
  nlohmann::ordered_json ranking = nlohmann::ordered_json::array();
  for (const auto& [d, mu] : record.ranking) ranking.push_back({{"disease", kb.disease(d).code}, {"mu", mu}});
  return {{"id", record.id},
          {"seed", record.seed},
          {"initial", std::move(initial)},
          {"rounds", std::move(rounds)},
          {"inquiries", record.inquiries()},
          {"termination", record.termination ? nlohmann::ordered_json(to_string(*record.termination))
                                             : nlohmann::ordered_json(nullptr)},
          {"ranking", std::move(ranking)}};
}

}  // namespace bsoda
