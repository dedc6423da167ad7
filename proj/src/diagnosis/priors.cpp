#include "bsoda/diagnosis/priors.hpp"

namespace bsoda {

nn::Tensor2 attention_mask(std::size_t num_symptoms, std::size_t num_diseases) {
  const auto f = static_cast<Eigen::Index>(num_symptoms + num_diseases);
  const auto s = static_cast<Eigen::Index>(num_symptoms);
  nn::Tensor2 mask = nn::Tensor2::Zero(f, f);
  mask.bottomRightCorner(f - s, f - s).setConstant(kMaskedLogit);
  return mask;
}

PriorMatrices build_priors(const KnowledgeBase& kb, const Dataset& records) {
  const std::size_t ns = kb.num_symptoms();
  const std::size_t nd = kb.num_diseases();
  const auto f = static_cast<Eigen::Index>(ns + nd);

  PriorMatrices priors;
  priors.num_symptoms = ns;
  priors.num_diseases = nd;
  priors.mask = attention_mask(ns, nd);
  priors.conditional = nn::Tensor2::Zero(f, f);

  // P(symptom | symptom) from co-occurrence counts, diagonal included.
  for (const auto& r : records) {
    for (SymptomId a : r.positives) {
      for (SymptomId b : r.positives) priors.conditional(a.value, b.value) += 1.0;
    }
  }
  // P(symptom | disease) from the marginals.
  for (std::uint32_t d = 0; d < nd; ++d) {
    const auto row = static_cast<Eigen::Index>(kb.feature_of(DiseaseId(d)));
    for (const auto& m : kb.disease(DiseaseId(d)).symptoms) {
      priors.conditional(row, m.symptom.value) = m.probability;
    }
  }
  for (Eigen::Index i = 0; i < f; ++i) {
    const double total = priors.conditional.row(i).sum();
    if (total > 0.0) priors.conditional.row(i) /= total;
  }
  return priors;
}

}  // namespace bsoda
