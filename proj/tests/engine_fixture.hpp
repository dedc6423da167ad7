#ifndef BSODA_TESTS_ENGINE_FIXTURE_HPP
#define BSODA_TESTS_ENGINE_FIXTURE_HPP

#include <memory>

#include "bsoda/cli/engine_io.hpp"
#include "bsoda/session/session.hpp"
#include "bsoda/simulator/simulator.hpp"
#include "reward_oracle.hpp"

namespace bsoda::testing {

/// Small but trained engine; a few seconds on the toy tables.
inline TrainOptions quick_options() {
  TrainOptions o;
  o.diag.embedding_dim = o.diag.attention_dim = o.diag.mlp_hidden = o.diag.head_hidden = 16;
  o.diag_train.max_epochs = 150;
  o.diag_train.batch_size = 2;
  o.diag_train.patience = 60;
  o.diag_train.adam.learning_rate = 0.003;
  o.vae.latent_dim = 4;
  o.vae.hidden = 16;
  o.vae_train.epochs = 30;
  o.vae_train.batch_size = 32;
  o.vae_train.adam.learning_rate = 0.01;
  return o;
}

inline std::shared_ptr<const Engine> trained_engine(const KnowledgeBase& kb, std::size_t records,
                                                   std::uint64_t seed) {
  SimConfig sim;
  sim.seed = seed;
  sim.train = records;
  sim.val = records / 5;
  sim.test = 0;
  return std::make_shared<const Engine>(train_engine(kb, generate_dataset(kb, sim), quick_options()));
}

/// Untrained models over `kb` with a caller-chosen co-occurrence index.
inline std::shared_ptr<const Engine> random_engine(const KnowledgeBase& kb, CooccurrenceIndex index,
                                                  std::uint64_t seed) {
  RandomInstance inst = random_instance(kb.num_symptoms(), kb.num_diseases(), seed);
  return std::make_shared<const Engine>(Engine{kb, std::move(index), std::move(*inst.diag), std::move(*inst.vae)});
}

/// Every symptom co-occurs with every other.
inline CooccurrenceIndex full_index(std::size_t num_symptoms) {
  std::vector<SymptomId> all;
  for (std::uint32_t s = 0; s < num_symptoms; ++s) all.emplace_back(s);
  return CooccurrenceIndex(0.0, std::vector<std::vector<SymptomId>>(num_symptoms, all));
}

}  // namespace bsoda::testing

#endif  // BSODA_TESTS_ENGINE_FIXTURE_HPP
