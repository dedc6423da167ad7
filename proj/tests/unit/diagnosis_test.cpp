#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "bsoda/diagnosis/diag_model.hpp"
#include "bsoda/diagnosis/diag_trainer.hpp"
#include "bsoda/diagnosis/priors.hpp"
#include "bsoda/simulator/simulator.hpp"
#include "gradcheck.hpp"
#include "test_support.hpp"

namespace bsoda {
namespace {

using nn::Tensor2;
using testing::make_kb;

DiagConfig small_config(std::size_t width = 8) {
  DiagConfig c;
  c.embedding_dim = c.attention_dim = c.mlp_hidden = c.head_hidden = width;
  return c;
}

// Each disease has one private symptom that is always present, plus shared noise.
KnowledgeBase separable_kb() {
  return make_kb(6, {{{0, 1.0}, {3, 0.5}, {4, 0.3}},
                     {{1, 1.0}, {3, 0.5}, {5, 0.4}},
                     {{2, 1.0}, {4, 0.6}, {5, 0.2}}});
}

Dataset simulate(const KnowledgeBase& kb, std::size_t n, std::uint64_t seed) {
  SimConfig config;
  config.seed = seed;
  config.train = n;
  config.val = 0;
  config.test = 0;
  return generate_dataset(kb, config).train;
}

TEST(Priors, DiseaseRowIsNormalisedKbMarginals) {
  const KnowledgeBase kb = make_kb(3, {{{0, 0.73}, {1, 0.62}}, {{2, 0.5}}});
  const PriorMatrices p = build_priors(kb, {});
  EXPECT_NEAR(p.conditional(3, 0), 0.541, 5e-4);
  EXPECT_NEAR(p.conditional(3, 1), 0.459, 5e-4);
  EXPECT_NEAR(p.conditional(3, 0), 0.73 / 1.35, 1e-12);
  EXPECT_DOUBLE_EQ(p.conditional(3, 2), 0.0);
  EXPECT_DOUBLE_EQ(p.conditional(4, 2), 1.0);
}

TEST(Priors, MaskForbidsExactlyDiseasePairs) {
  const Tensor2 m = attention_mask(3, 2);
  for (Eigen::Index i = 0; i < 5; ++i) {
    for (Eigen::Index j = 0; j < 5; ++j) {
      EXPECT_DOUBLE_EQ(m(i, j), (i >= 3 && j >= 3) ? -1e9 : 0.0) << i << "," << j;
    }
  }
}

TEST(Priors, ConditionalSupportAndRowSums) {
  const KnowledgeBase kb = separable_kb();
  const PriorMatrices p = build_priors(kb, simulate(kb, 500, 1));
  const auto f = static_cast<Eigen::Index>(kb.num_features());
  for (Eigen::Index i = 0; i < f; ++i) {
    const double s = p.conditional.row(i).sum();
    if (s != 0.0) {
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
    for (Eigen::Index j = 6; j < f; ++j) EXPECT_DOUBLE_EQ(p.conditional(i, j), 0.0);
  }
}

TEST(Priors, SymptomWithoutCooccurrenceHasZeroRow) {
  const KnowledgeBase kb = make_kb(3, {{{0, 1.0}, {1, 0.5}}, {{2, 0.5}}});
  Dataset records = {{DiseaseId(0), {SymptomId(0), SymptomId(1)}}, {DiseaseId(0), {SymptomId(0)}}};
  const PriorMatrices p = build_priors(kb, records);
  EXPECT_TRUE(p.conditional.row(2).isZero(0.0));
  // Row 0: seen twice with itself, once with symptom 1.
  EXPECT_NEAR(p.conditional(0, 0), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(p.conditional(0, 1), 1.0 / 3.0, 1e-12);
}

TEST(DiagModel, AllZeroInputGivesDistribution) {
  DiagModel m(6, 3, small_config());
  const Tensor2 p = m.predict(Tensor2::Zero(1, 6));
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
  EXPECT_TRUE((p.array() >= 0.0).all());
}

TEST(DiagModel, PredictMatchesTapeForward) {
  DiagModel m(6, 3, small_config());
  Tensor2 x(3, 6);
  x << 1, 0, 0, 1, 0, 0, 0, 1, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0;
  nn::Tape tape;
  const Tensor2 logits = tape.value(m.forward(tape, x).logits);
  const Tensor2 p = m.predict(x);
  for (Eigen::Index r = 0; r < 3; ++r) {
    Eigen::RowVectorXd e = (logits.row(r).array() - logits.row(r).maxCoeff()).exp();
    EXPECT_LT((p.row(r) - e / e.sum()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((m.inspect({static_cast<BinaryValue>(x(r, 0)), static_cast<BinaryValue>(x(r, 1)),
                          static_cast<BinaryValue>(x(r, 2)), static_cast<BinaryValue>(x(r, 3)),
                          static_cast<BinaryValue>(x(r, 4)), static_cast<BinaryValue>(x(r, 5))})
                   .probabilities.transpose() -
               p.row(r))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-12);
  }
}

TEST(DiagModel, MaskedAttentionIsZeroForAnyInput) {
  DiagModel m(6, 3, small_config());
  for (std::uint32_t bits : {0u, 5u, 63u, 18u}) {
    std::vector<BinaryValue> x(6);
    for (std::size_t i = 0; i < 6; ++i) x[i] = (bits >> i) & 1u;
    const DiagForward f = m.inspect(x);
    ASSERT_EQ(f.attentions.size(), 2u);
    EXPECT_EQ(f.final_embeddings.rows(), 9);
    for (const Tensor2& a : f.attentions) {
      for (Eigen::Index i = 0; i < 9; ++i) {
        EXPECT_NEAR(a.row(i).sum(), 1.0, 1e-12);
        for (Eigen::Index j = 0; j < 9; ++j) {
          if (i >= 6 && j >= 6) {
            EXPECT_LT(a(i, j), 1e-12);
          } else {
            EXPECT_GT(a(i, j), 1e-12);
          }
        }
      }
    }
  }
}

TEST(DiagModel, RejectsBadInputs) {
  DiagModel m(6, 3, small_config());
  EXPECT_THROW(m.predict(Tensor2::Zero(1, 5)), ContractError);
  EXPECT_THROW(m.inspect({0, 0, 2, 0, 0, 0}), ContractError);
  DiagConfig c = small_config();
  c.blocks = 0;
  EXPECT_THROW(DiagModel(6, 3, c), ContractError);
}

TEST(DiagModel, PriorKlIsFiniteAtInitialisation) {
  const KnowledgeBase kb = separable_kb();
  const PriorMatrices priors = build_priors(kb, simulate(kb, 200, 2));
  DiagModel m(6, 3, small_config());
  nn::Tape tape;
  const auto out = m.forward(tape, Tensor2::Ones(1, 6));
  const double kl =
      tape.value(nn::kl_rows_mean(tape, tape.constant(priors.conditional), out.attentions[0], m.mask()))(0, 0);
  EXPECT_TRUE(std::isfinite(kl));
  EXPECT_GT(kl, 0.0);
}

TEST(DiagModel, FullLossMatchesFiniteDifferences) {
  const KnowledgeBase kb = separable_kb();
  const PriorMatrices priors = build_priors(kb, simulate(kb, 200, 3));
  DiagConfig c = small_config(4);
  c.kl_weight = 0.7;
  DiagModel m(6, 3, c);
  Tensor2 x(3, 6);
  x << 1, 0, 0, 1, 1, 0, 0, 1, 0, 1, 0, 1, 0, 0, 1, 0, 0, 0;
  Tensor2 y = Tensor2::Zero(3, 3);
  y(0, 0) = 2;
  y(1, 1) = 1;
  y(2, 2) = 1;
  y(2, 0) = 1;
  const auto r = testing::check_gradients(
      m.params(),
      [&](nn::Tape& t) { return m.loss(t, x, y, 5.0, priors.conditional, {2.0, 1.0, 2.0}).total; }, 1e-5);
  EXPECT_LT(r.worst_relative, 1e-4) << r.worst_entry;
}

TEST(DiagModel, PermutingFeaturesPermutesPrediction) {
  DiagModel m(4, 3, small_config());
  DiagModel p(4, 3, small_config());
  const std::vector<Eigen::Index> sym = {2, 0, 3, 1};  // new symptom i is old sym[i]
  const std::vector<Eigen::Index> dis = {1, 2, 0};
  for (const std::string& name : m.params().names()) p.params().at(name).value = m.params().value(name);
  Tensor2& emb = p.params().at("embedding").value;
  const Tensor2& old = m.params().value("embedding");
  for (Eigen::Index i = 0; i < 4; ++i) emb.row(i) = old.row(sym[i]);
  for (Eigen::Index d = 0; d < 3; ++d) emb.row(4 + d) = old.row(4 + dis[d]);

  Tensor2 x(2, 4);
  x << 1, 0, 1, 0, 0, 1, 1, 1;
  Tensor2 xp(2, 4);
  for (Eigen::Index i = 0; i < 4; ++i) xp.col(i) = x.col(sym[i]);
  const Tensor2 a = m.predict(x);
  const Tensor2 b = p.predict(xp);
  for (Eigen::Index r = 0; r < 2; ++r) {
    for (Eigen::Index d = 0; d < 3; ++d) EXPECT_NEAR(b(r, d), a(r, dis[d]), 1e-12);
  }
}

TEST(Summaries, IdenticalInputsHaveZeroSigma) {
  DiagModel m(6, 3, small_config());
  Tensor2 x = Tensor2::Zero(5, 6);
  x.col(1).setOnes();
  const PredictiveSummary s = summarize_predictions(m, x);
  EXPECT_EQ(s.n_samples, 5u);
  EXPECT_LT(s.sigma.maxCoeff(), 1e-12);
  EXPECT_NEAR(s.mu.sum(), 1.0, 1e-12);
}

TEST(Summaries, TwoPointStatistics) {
  Tensor2 d(2, 2);
  d << 1, 0, 0, 1;
  const PredictiveSummary s = summarize_distributions(d);
  EXPECT_DOUBLE_EQ(s.mu(0), 0.5);
  EXPECT_DOUBLE_EQ(s.mu(1), 0.5);
  EXPECT_DOUBLE_EQ(s.sigma(0), 0.5);
  EXPECT_DOUBLE_EQ(s.sigma(1), 0.5);
  EXPECT_THROW(summarize_distributions(Tensor2::Ones(1, 2)), ContractError);
}

TEST(Summaries, MeanSumsToOneForRandomInputs) {
  DiagModel m(6, 3, small_config());
  Rng rng(8);
  Tensor2 x(20, 6);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
  const PredictiveSummary s = summarize_predictions(m, x);
  EXPECT_NEAR(s.mu.sum(), 1.0, 1e-9);
  EXPECT_TRUE((s.sigma.array() >= 0.0).all());
}

TEST(Summaries, RankingBreaksTiesByIndex) {
  PredictiveSummary s;
  s.mu = Eigen::Vector3d(0.25, 0.5, 0.25);
  const auto r = s.ranking();
  EXPECT_EQ(r[0].value, 1u);
  EXPECT_EQ(r[1].value, 0u);
  EXPECT_EQ(r[2].value, 2u);
}

TEST(Grouping, CollapsesDuplicateInputs) {
  Dataset records = {{DiseaseId(0), {SymptomId(0)}}, {DiseaseId(1), {SymptomId(0)}},
                     {DiseaseId(0), {SymptomId(0)}}, {DiseaseId(1), {SymptomId(1)}}};
  const GroupedInputs g = group_records(records, 2, 2);
  EXPECT_EQ(g.symptoms.rows(), 2);
  EXPECT_EQ(g.total, 4u);
  EXPECT_DOUBLE_EQ(g.labels.sum(), 4.0);
}

class SeparableTraining : public ::testing::Test {
 protected:
  static DiagTrainResult train(double lambda, std::size_t epochs, DiagModel* out = nullptr) {
    const KnowledgeBase kb = separable_kb();
    const Dataset train = simulate(kb, 600, 4);
    const Dataset val = simulate(kb, 200, 5);
    DiagConfig c = small_config();
    c.kl_weight = lambda;
    DiagModel m(6, 3, c);
    DiagTrainConfig t;
    t.max_epochs = epochs;
    t.batch_size = 4;
    t.patience = epochs;
    t.adam.learning_rate = 0.003;
    DiagTrainResult r = train_diag(m, build_priors(kb, train), train, val, t);
    if (out != nullptr) *out = m;
    return r;
  }
};

TEST_F(SeparableTraining, ReachesFullValidationAccuracy) {
  DiagModel m(6, 3, small_config());
  const DiagTrainResult r = train(0.1, 50, &m);
  EXPECT_DOUBLE_EQ(r.best_val_top1, 1.0);
  EXPECT_LE(r.best_epoch, 50u);
  // A private symptom alone identifies its disease.
  Tensor2 x = Tensor2::Zero(3, 6);
  for (Eigen::Index d = 0; d < 3; ++d) x(d, d) = 1;
  const Tensor2 p = m.predict(x);
  for (Eigen::Index d = 0; d < 3; ++d) {
    Eigen::Index arg = 0;
    p.row(d).maxCoeff(&arg);
    EXPECT_EQ(arg, d);
  }
}

TEST_F(SeparableTraining, RegulariserShrinksAttentionDeviation) {
  const DiagTrainResult free = train(0.0, 150);
  const DiagTrainResult anchored = train(1.0, 150);
  EXPECT_DOUBLE_EQ(free.best_val_top1, 1.0);
  EXPECT_DOUBLE_EQ(anchored.best_val_top1, 1.0);
  EXPECT_LT(anchored.history.back().attention_kl, free.history.back().attention_kl);
}

TEST(DiagCheckpoint, RoundTripIsBitwiseAtSavedPrecision) {
  const KnowledgeBase kb = separable_kb();
  DiagModel m(6, 3, small_config());
  m.params().round_to_float();
  testing::TempDir dir;
  save_diag_model(m, dir.path() / "diag", kb.fingerprint());
  const DiagModel back = load_diag_model(dir.path() / "diag", kb.fingerprint());
  EXPECT_EQ(back.export_embeddings(), m.export_embeddings());
  EXPECT_EQ(back.export_embeddings().rows(), 9);
  EXPECT_EQ(back.export_embeddings().cols(), 8);
  const Tensor2 x = Tensor2::Ones(2, 6);
  EXPECT_EQ(back.predict(x), m.predict(x));
  EXPECT_THROW(load_diag_model(dir.path() / "diag", "0000000000000000"), ValidationError);
}

}  // namespace
}  // namespace bsoda

namespace bsoda {
namespace {

TEST(ValidationScore, TopOneFirstThenCrossEntropy) {
  EXPECT_TRUE((ValidationScore{0.8, 2.0}).better_than({0.7, 0.1}));
  EXPECT_TRUE((ValidationScore{0.8, 0.3}).better_than({0.8, 0.4}));
  EXPECT_FALSE((ValidationScore{0.8, 0.4}).better_than({0.8, 0.4}));
  EXPECT_FALSE((ValidationScore{0.7, 0.0}).better_than({0.8, 0.4}));
}

}  // namespace
}  // namespace bsoda
