#include "bsoda/reward/reward.hpp"

#include <algorithm>
#include <map>

namespace bsoda {

using nn::Tensor2;

FeatureEvidence feature_evidence(const EvidenceState& state) {
  FeatureEvidence ev;
  ev.reserve(state.observed.size());
  for (const auto& [s, v] : state.observed) ev.push_back({s.value, v});
  return ev;
}

Eigen::RowVectorXd zero_filled_input(const EvidenceState& state, std::size_t num_symptoms) {
  Eigen::RowVectorXd x = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(num_symptoms));
  for (const auto& [s, v] : state.observed) x(s.value) = v;
  return x;
}

double estimate_symptom_probability(const Vae& vae, const EvidenceState& state, SymptomId s,
                                    std::size_t n_mc, Rng& rng) {
  if (state.is_observed(s)) throw ContractError("estimate_symptom_probability: symptom already observed");
  if (n_mc == 0) throw ContractError("estimate_symptom_probability: n_mc must be at least 1");
  const Tensor2 probs = vae.decode(sample_latents(vae.encode(feature_evidence(state)), n_mc, rng));
  return probs.col(s.value).mean();
}

namespace {

Tensor2 shift_noise(const DiagGaussian& q, const Tensor2& noise) {
  Tensor2 z = noise;
  const Eigen::RowVectorXd sd = q.var.cwiseSqrt().transpose();
  const Eigen::RowVectorXd mu = q.mu.transpose();
  for (Eigen::Index r = 0; r < z.rows(); ++r) z.row(r) = mu + z.row(r).cwiseProduct(sd);
  return z;
}

Eigen::VectorXd normalised_disease_columns(const Tensor2& probs, std::size_t num_symptoms, std::size_t num_diseases) {
  Eigen::VectorXd p = probs.middleCols(static_cast<Eigen::Index>(num_symptoms), static_cast<Eigen::Index>(num_diseases))
                          .colwise()
                          .mean()
                          .transpose();
  return p / p.sum();
}

Eigen::VectorXd vae_disease_factor(const Vae& vae, const GaussianProduct& product, const Tensor2& noise) {
  const Tensor2 probs = vae.decode(shift_noise(product.gaussian(), noise));
  return normalised_disease_columns(probs, vae.num_symptoms(), vae.num_diseases());
}

}  // namespace

Eigen::VectorXd disease_factor(const Vae& vae, const DiagModel& diag, const EvidenceState& state, SymptomId s,
                               BinaryValue value, bool use_diag, const Tensor2& noise) {
  if (use_diag) {
    Tensor2 x = zero_filled_input(state, diag.num_symptoms());
    x(0, s.value) = value;
    return diag.predict(x).row(0).transpose();
  }
  FeatureEvidence ev = feature_evidence(state);
  ev.push_back({s.value, value});
  return vae_disease_factor(vae, vae.encode_product(ev), noise);
}

Eigen::VectorXd joint_weights(const Eigen::VectorXd& disease_probabilities, double p_present) {
  return disease_probabilities * p_present;
}

std::vector<DiseaseId> prune_diseases(const Eigen::VectorXd& p, double ratio, double floor) {
  if (p.size() == 0) return {};
  Eigen::Index top = 0;
  const double max = p.maxCoeff(&top);
  std::vector<DiseaseId> kept;
  for (Eigen::Index d = 0; d < p.size(); ++d) {
    if (d == top || (p(d) >= ratio * max && p(d) >= floor)) kept.emplace_back(static_cast<std::uint32_t>(d));
  }
  return kept;
}

namespace {

/// Posteriors shared by every candidate in one round.
class RoundCache {
 public:
  RoundCache(const Vae& vae, const EvidenceState& state, bool full_onehot)
      : vae_(vae), base_(vae.encode_product(feature_evidence(state))), base_q_(base_.gaussian()),
        full_onehot_(full_onehot), disease_(vae.num_diseases()) {
    if (full_onehot_) {
      all_absent_precision_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(vae.latent_dim()));
      all_absent_weighted_ = all_absent_precision_;
      for (std::size_t d = 0; d < vae.num_diseases(); ++d) {
        all_absent_precision_ += vae.expert_precision(vae.num_symptoms() + d, 0);
        all_absent_weighted_ += vae.expert_weighted_mean(vae.num_symptoms() + d, 0);
      }
    }
  }

  const GaussianProduct& base() const { return base_; }
  const DiagGaussian& base_gaussian() const { return base_q_; }

  /// q(z | x_D = d, x_O) as a product.
  const GaussianProduct& with_disease(DiseaseId d) {
    auto& slot = disease_[d.value];
    if (!slot) {
      GaussianProduct p = base_;
      add_disease(p, d);
      slot.emplace(std::move(p), DiagGaussian{});
      slot->second = slot->first.gaussian();
    }
    return slot->first;
  }
  const DiagGaussian& with_disease_gaussian(DiseaseId d) {
    with_disease(d);
    return disease_[d.value]->second;
  }

  void add_disease(GaussianProduct& p, DiseaseId d) const {
    const std::size_t f = vae_.num_symptoms() + d.value;
    if (full_onehot_) {
      p.add_natural(all_absent_precision_ - vae_.expert_precision(f, 0) + vae_.expert_precision(f, 1),
                    all_absent_weighted_ - vae_.expert_weighted_mean(f, 0) + vae_.expert_weighted_mean(f, 1));
    } else {
      p.add_natural(vae_.expert_precision(f, 1), vae_.expert_weighted_mean(f, 1));
    }
  }

  /// Fills the two KL terms of combination (value, d) for symptom s.
  RewardCombination combination(SymptomId s, BinaryValue value, DiseaseId d, double kl_symptom) {
    const GaussianProduct& qd = with_disease(d);
    GaussianProduct qds = qd;
    qds.add_natural(vae_.expert_precision(s.value, value), vae_.expert_weighted_mean(s.value, value));
    RewardCombination c;
    c.disease = d;
    c.symptom_value = value;
    c.kl_symptom = kl_symptom;
    c.kl_conditional = gaussian_kl(qds.gaussian(), with_disease_gaussian(d));
    return c;
  }

  double symptom_kl(SymptomId s, BinaryValue value) const {
    GaussianProduct q = base_;
    q.add_natural(vae_.expert_precision(s.value, value), vae_.expert_weighted_mean(s.value, value));
    return gaussian_kl(q.gaussian(), base_q_);
  }

 private:
  const Vae& vae_;
  GaussianProduct base_;
  DiagGaussian base_q_;
  bool full_onehot_;
  Eigen::VectorXd all_absent_precision_;
  Eigen::VectorXd all_absent_weighted_;
  std::vector<std::optional<std::pair<GaussianProduct, DiagGaussian>>> disease_;
};

/// Disease factors for x_s = 1 for every candidate (one row each) and, as
/// the last row, for the observed evidence alone, which is also the x_s = 0
/// factor under zero fill.
Tensor2 diag_factors(const DiagModel& diag, const EvidenceState& state) {
  const auto n = static_cast<Eigen::Index>(state.candidates.size());
  const Eigen::RowVectorXd base = zero_filled_input(state, diag.num_symptoms());
  Tensor2 x(n + 1, base.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    x.row(i) = base;
    x(i, state.candidates[static_cast<std::size_t>(i)].value) = 1.0;
  }
  x.row(n) = base;
  return diag.predict(x);
}

void add_enumerated(CandidateReward& out, RoundCache& cache, const Eigen::VectorXd& p_d, double p_value,
                    BinaryValue value, const RewardConfig& config, double floor) {
  std::vector<DiseaseId> kept;
  if (config.enable_pruning) {
    kept = prune_diseases(p_d, config.prune_ratio, floor);
  } else {
    for (Eigen::Index d = 0; d < p_d.size(); ++d) kept.emplace_back(static_cast<std::uint32_t>(d));
  }
  const double kl_symptom = cache.symptom_kl(out.symptom, value);
  for (DiseaseId d : kept) {
    RewardCombination c = cache.combination(out.symptom, value, d, kl_symptom);
    c.weight = p_value * p_d(d.value);
    out.reward += c.weight * c.term();
    out.combinations.push_back(c);
  }
}

std::size_t draw_category(const Eigen::VectorXd& p, Rng& rng) {
  const double u = rng.uniform() * p.sum();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    acc += p(i);
    if (u < acc) return static_cast<std::size_t>(i);
  }
  return static_cast<std::size_t>(p.size() - 1);
}

/// Per-sample estimator: for each latent draw, sample x_s from the decoder,
/// run the diagnosis model on that draw, sample a disease, and average the
/// combination terms over the draws.
void add_monte_carlo(CandidateReward& out, RoundCache& cache, const Vae& vae, const DiagModel& diag,
                     const EvidenceState& state, const Tensor2& probs, const RewardConfig& config, Rng& rng) {
  const auto n = probs.rows();
  const Eigen::RowVectorXd base = zero_filled_input(state, diag.num_symptoms());
  std::vector<BinaryValue> xs(static_cast<std::size_t>(n));
  Tensor2 x(n, base.size());
  for (Eigen::Index m = 0; m < n; ++m) {
    xs[static_cast<std::size_t>(m)] = rng.uniform() < probs(m, out.symptom.value) ? 1 : 0;
    x.row(m) = base;
    x(m, out.symptom.value) = xs[static_cast<std::size_t>(m)];
  }
  Tensor2 p_d;
  if (config.use_diag_for_joint) {
    p_d = diag.predict(x);
  } else {
    p_d = probs.middleCols(static_cast<Eigen::Index>(vae.num_symptoms()), static_cast<Eigen::Index>(vae.num_diseases()));
  }
  std::map<std::pair<BinaryValue, std::uint32_t>, std::size_t> counts;
  for (Eigen::Index m = 0; m < n; ++m) {
    const auto d = static_cast<std::uint32_t>(draw_category(p_d.row(m).transpose(), rng));
    ++counts[{xs[static_cast<std::size_t>(m)], d}];
  }
  const double kl[2] = {cache.symptom_kl(out.symptom, 0), cache.symptom_kl(out.symptom, 1)};
  for (const auto& [key, count] : counts) {
    RewardCombination c = cache.combination(out.symptom, key.first, DiseaseId(key.second), kl[key.first]);
    c.weight = static_cast<double>(count) / static_cast<double>(n);
    out.reward += c.weight * c.term();
    out.combinations.push_back(c);
  }
}

}  // namespace

RewardBreakdown candidate_rewards(const Vae& vae, const DiagModel& diag, const EvidenceState& state,
                                  const RewardConfig& config, Rng& rng) {
  if (state.candidates.empty()) throw ContractError("candidate_rewards: no candidate symptoms");
  if (config.n_mc == 0) throw ContractError("candidate_rewards: n_mc must be at least 1");
  if (!(config.prune_ratio > 0.0 && config.prune_ratio <= 1.0)) {
    throw ContractError("candidate_rewards: prune_ratio must lie in (0, 1]");
  }
  const std::size_t num_diseases = vae.num_diseases();
  const double floor = config.prune_floor ? *config.prune_floor : 1.0 / static_cast<double>(num_diseases);

  RoundCache cache(vae, state, config.full_onehot_disease);
  Rng latent_rng = rng.split(0);
  const Tensor2 noise = normal_matrix(static_cast<Eigen::Index>(config.n_mc),
                                      static_cast<Eigen::Index>(vae.latent_dim()), latent_rng);
  const Tensor2 probs = vae.decode(shift_noise(cache.base_gaussian(), noise));
  const Eigen::RowVectorXd p_hat = probs.colwise().mean();

  RewardBreakdown out;
  out.n_mc = config.n_mc;
  out.mode = config.mode;
  out.candidates.reserve(state.candidates.size());

  if (config.mode == RewardMode::MonteCarlo) {
    for (SymptomId s : state.candidates) {
      CandidateReward c;
      c.symptom = s;
      c.p_present = p_hat(s.value);
      Rng draw_rng = rng.split(1 + s.value);
      add_monte_carlo(c, cache, vae, diag, state, probs, config, draw_rng);
      out.candidates.push_back(std::move(c));
    }
    return out;
  }

  Tensor2 factors;
  if (config.use_diag_for_joint) factors = diag_factors(diag, state);
  Eigen::VectorXd absent_factor;
  if (!config.enable_positive_only) {
    absent_factor = config.use_diag_for_joint
                        ? Eigen::VectorXd(factors.row(factors.rows() - 1).transpose())
                        : Eigen::VectorXd();
  }

  for (std::size_t i = 0; i < state.candidates.size(); ++i) {
    const SymptomId s = state.candidates[i];
    CandidateReward c;
    c.symptom = s;
    c.p_present = p_hat(s.value);
    Eigen::VectorXd present;
    if (config.use_diag_for_joint) {
      present = factors.row(static_cast<Eigen::Index>(i)).transpose();
    } else {
      GaussianProduct q = cache.base();
      q.add_natural(vae.expert_precision(s.value, 1), vae.expert_weighted_mean(s.value, 1));
      present = vae_disease_factor(vae, q, noise);
    }
    add_enumerated(c, cache, present, c.p_present, 1, config, floor);
    if (!config.enable_positive_only) {
      Eigen::VectorXd absent = absent_factor;
      if (!config.use_diag_for_joint) {
        GaussianProduct q = cache.base();
        q.add_natural(vae.expert_precision(s.value, 0), vae.expert_weighted_mean(s.value, 0));
        absent = vae_disease_factor(vae, q, noise);
      }
      add_enumerated(c, cache, absent, 1.0 - c.p_present, 0, config, floor);
    }
    out.candidates.push_back(std::move(c));
  }
  return out;
}

SymptomId select_next(const RewardBreakdown& breakdown) {
  if (breakdown.candidates.empty()) throw ContractError("select_next: empty breakdown");
  const CandidateReward* best = &breakdown.candidates.front();
  for (const auto& c : breakdown.candidates) {
    if (c.reward > best->reward || (c.reward == best->reward && c.symptom < best->symptom)) best = &c;
  }
  return best->symptom;
}

nlohmann::ordered_json reward_to_json(const RewardBreakdown& breakdown, const KnowledgeBase& kb) {
  nlohmann::ordered_json cands = nlohmann::ordered_json::array();
  for (const auto& c : breakdown.candidates) {
    nlohmann::ordered_json combos = nlohmann::ordered_json::array();
    for (const auto& k : c.combinations) {
      combos.push_back({{"disease", kb.disease(k.disease).code},
                        {"symptom_value", k.symptom_value},
                        {"weight", k.weight},
                        {"kl_symptom", k.kl_symptom},
                        {"kl_conditional", k.kl_conditional},
                        {"term", k.term()}});
    }
    cands.push_back({{"symptom", kb.symptom(c.symptom).code},
                     {"reward", c.reward},
                     {"p_present", c.p_present},
                     {"combinations", std::move(combos)}});
  }
  return {{"mode", breakdown.mode == RewardMode::Enumerated ? "enumerated" : "monte_carlo"},
          {"n_mc", breakdown.n_mc},
          {"candidates", std::move(cands)}};
}

}  // namespace bsoda
