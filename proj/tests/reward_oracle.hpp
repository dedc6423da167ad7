#ifndef BSODA_TESTS_REWARD_ORACLE_HPP
#define BSODA_TESTS_REWARD_ORACLE_HPP

#include <memory>

#include "bsoda/diagnosis/diag_model.hpp"
#include "bsoda/inquiry/vae.hpp"
#include "bsoda/reward/reward.hpp"
#include "bsoda/simulator/simulator.hpp"

namespace bsoda::testing {

/// Untrained diagnosis model and VAE sharing embeddings; weights are random
/// so rewards are generic rather than degenerate.
struct RandomInstance {
  std::size_t num_symptoms = 0;
  std::size_t num_diseases = 0;
  std::unique_ptr<DiagModel> diag;
  std::unique_ptr<Vae> vae;
};

inline RandomInstance random_instance(std::size_t num_symptoms, std::size_t num_diseases, std::uint64_t seed) {
  RandomInstance inst;
  inst.num_symptoms = num_symptoms;
  inst.num_diseases = num_diseases;
  DiagConfig dc;
  dc.embedding_dim = dc.attention_dim = dc.mlp_hidden = dc.head_hidden = 6;
  dc.seed = seed;
  inst.diag = std::make_unique<DiagModel>(num_symptoms, num_diseases, dc);
  VaeConfig vc;
  vc.latent_dim = 4;
  vc.hidden = 8;
  vc.seed = seed + 1;
  inst.vae = std::make_unique<Vae>(num_symptoms, num_diseases, inst.diag->export_embeddings(), vc);
  // Spread the expert means so posteriors move noticeably with evidence.
  inst.vae->params().at("expert.w3").value *= 3.0;
  inst.vae->refresh_experts();
  return inst;
}

/// Random observed symptoms; every unobserved symptom is a candidate.
inline EvidenceState random_state(std::size_t num_symptoms, Rng& rng) {
  EvidenceState state;
  const std::size_t observed = rng.index(num_symptoms - 1);
  while (state.observed.size() < observed) {
    state.observed[SymptomId(static_cast<std::uint32_t>(rng.index(num_symptoms)))] = rng.bernoulli(0.5) ? 1 : 0;
  }
  for (std::uint32_t s = 0; s < num_symptoms; ++s) {
    if (!state.is_observed(SymptomId(s))) state.candidates.emplace_back(s);
  }
  return state;
}

/// Direct evaluation of every (x_s, d) combination with from-scratch
/// encodings, for each candidate. `rng` must be the stream passed to
/// candidate_rewards; its first child supplies the shared latent noise.
inline std::vector<double> brute_force_rewards(const Vae& vae, const DiagModel& diag, const EvidenceState& state,
                                               std::size_t n_mc, const Rng& rng, bool full_onehot = false) {
  const std::size_t ns = vae.num_symptoms();
  const std::size_t nd = vae.num_diseases();
  FeatureEvidence base;
  for (const auto& [s, v] : state.observed) base.push_back({s.value, v});
  auto with = [](FeatureEvidence ev, std::initializer_list<Observation> extra) {
    ev.insert(ev.end(), extra);
    return ev;
  };
  auto disease_evidence = [&](FeatureEvidence ev, std::size_t d) {
    for (std::size_t j = 0; j < nd; ++j) {
      if (j == d) {
        ev.push_back({ns + j, 1});
      } else if (full_onehot) {
        ev.push_back({ns + j, 0});
      }
    }
    return ev;
  };

  std::vector<double> rewards;
  for (SymptomId s : state.candidates) {
    Rng latent = rng.split(0);
    const double p_hat = estimate_symptom_probability(vae, state, s, n_mc, latent);
    double total = 0.0;
    for (BinaryValue v : {BinaryValue{0}, BinaryValue{1}}) {
      nn::Tensor2 x = nn::Tensor2::Zero(1, static_cast<Eigen::Index>(ns));
      for (const auto& [o, value] : state.observed) x(0, o.value) = value;
      x(0, s.value) = v;
      const Eigen::RowVectorXd p_d = diag.predict(x).row(0);
      const double p_v = v == 1 ? p_hat : 1.0 - p_hat;
      const double kl_s = gaussian_kl(vae.encode(with(base, {{s.value, v}})), vae.encode(base));
      for (std::size_t d = 0; d < nd; ++d) {
        const FeatureEvidence given_d = disease_evidence(base, d);
        const double kl_d = gaussian_kl(vae.encode(with(given_d, {{s.value, v}})), vae.encode(given_d));
        total += p_v * p_d(static_cast<Eigen::Index>(d)) * (kl_s - kl_d);
      }
    }
    rewards.push_back(total);
  }
  return rewards;
}

}  // namespace bsoda::testing

#endif  // BSODA_TESTS_REWARD_ORACLE_HPP
