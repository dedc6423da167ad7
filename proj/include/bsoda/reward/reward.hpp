#ifndef BSODA_REWARD_REWARD_HPP
#define BSODA_REWARD_REWARD_HPP

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsoda/core/evidence.hpp"
#include "bsoda/core/knowledge_base.hpp"
#include "bsoda/diagnosis/diag_model.hpp"
#include "bsoda/inquiry/vae.hpp"

namespace bsoda {

enum class RewardMode {
  Enumerated,  // weighted sum over the distinct (x_s, disease) combinations
  MonteCarlo,  // per-sample two-step draws, one diagnosis forward per draw
};

struct RewardConfig {
  std::size_t n_mc = 100;            // N_M
  double prune_ratio = 0.9;
  std::optional<double> prune_floor;  // defaults to 1/|D|
  bool enable_filtering = true;
  bool enable_pruning = true;
  bool enable_positive_only = true;
  bool use_diag_for_joint = true;
  bool full_onehot_disease = false;
  RewardMode mode = RewardMode::Enumerated;
};

/// One (x_s, x_D = d) term of a candidate's reward.
struct RewardCombination {
  DiseaseId disease;
  BinaryValue symptom_value = 1;
  double weight = 0.0;          // p(d, x_s | x_O), or the draw frequency in Monte Carlo mode
  double kl_symptom = 0.0;      // KL(q(z|x_s, x_O) || q(z|x_O))
  double kl_conditional = 0.0;  // KL(q(z|d, x_s, x_O) || q(z|d, x_O))
  double term() const { return kl_symptom - kl_conditional; }
};

struct CandidateReward {
  SymptomId symptom;
  double reward = 0.0;
  double p_present = 0.0;  // p-hat(x_s = 1 | x_O)
  std::vector<RewardCombination> combinations;
};

struct RewardBreakdown {
  std::vector<CandidateReward> candidates;  // in SymptomId order
  std::size_t n_mc = 0;
  RewardMode mode = RewardMode::Enumerated;
};

/// Observed symptoms as VAE evidence.
FeatureEvidence feature_evidence(const EvidenceState& state);

/// Diagnosis input with observed values and every unobserved symptom at 0.
Eigen::RowVectorXd zero_filled_input(const EvidenceState& state, std::size_t num_symptoms);

/// Mean decoder probability of x_s = 1 over n_mc latent draws from q(z|x_O).
double estimate_symptom_probability(const Vae& vae, const EvidenceState& state, SymptomId s,
                                    std::size_t n_mc, Rng& rng);

/// p_D(d | x_s = value, x_O). With use_diag the diagnosis model runs on the
/// zero-filled input; otherwise the VAE decoder's disease probabilities are
/// averaged over the given latent noise and normalised over D.
Eigen::VectorXd disease_factor(const Vae& vae, const DiagModel& diag, const EvidenceState& state,
                               SymptomId s, BinaryValue value, bool use_diag, const nn::Tensor2& noise);

/// p(d, x_s = 1 | x_O) = p_present * p_D(d | x_s = 1, x_O).
Eigen::VectorXd joint_weights(const Eigen::VectorXd& disease_probabilities, double p_present);

/// Diseases with p >= ratio * max(p) and p >= floor, plus the top-1.
std::vector<DiseaseId> prune_diseases(const Eigen::VectorXd& p, double ratio, double floor);

/// R-hat_s for every candidate in state.candidates. Throws ContractError
/// when there are no candidates.
RewardBreakdown candidate_rewards(const Vae& vae, const DiagModel& diag, const EvidenceState& state,
                                  const RewardConfig& config, Rng& rng);

/// Highest reward; ties go to the lowest SymptomId.
SymptomId select_next(const RewardBreakdown& breakdown);

nlohmann::ordered_json reward_to_json(const RewardBreakdown& breakdown, const KnowledgeBase& kb);

}  // namespace bsoda

#endif  // BSODA_REWARD_REWARD_HPP
