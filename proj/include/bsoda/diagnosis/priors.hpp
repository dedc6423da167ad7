#ifndef BSODA_DIAGNOSIS_PRIORS_HPP
#define BSODA_DIAGNOSIS_PRIORS_HPP

#include "bsoda/core/dataset.hpp"
#include "bsoda/core/knowledge_base.hpp"
#include "bsoda/nn/tensor.hpp"

namespace bsoda {

/// Additive logit for excluded attention pairs. Finite so that softmax of a
/// fully masked row never produces NaN.
inline constexpr double kMaskedLogit = -1e9;

/// Prior knowledge over the |S|+|D| features.
///
/// mask: 0 where the pair (i, j) is considered, kMaskedLogit for every
/// disease-disease pair.
/// conditional: row i is P(. | i), nonzero only in symptom columns of
/// disease rows (from the knowledge-base marginals) and symptom rows (from
/// record co-occurrence). Nonzero rows sum to 1.
struct PriorMatrices {
  std::size_t num_symptoms = 0;
  std::size_t num_diseases = 0;
  nn::Tensor2 mask;
  nn::Tensor2 conditional;
};

nn::Tensor2 attention_mask(std::size_t num_symptoms, std::size_t num_diseases);

PriorMatrices build_priors(const KnowledgeBase& kb, const Dataset& records);

}  // namespace bsoda

#endif  // BSODA_DIAGNOSIS_PRIORS_HPP
