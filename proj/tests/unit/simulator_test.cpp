#include <gtest/gtest.h>

#include <map>
#include <set>

#include "bsoda/simulator/simulator.hpp"
#include "test_support.hpp"

namespace bsoda {
namespace {

using testing::make_kb;

TEST(Rng, SplitIsDeterministicAndLeavesParentAlone) {
  Rng a(42);
  Rng b(42);
  Rng child = a.split(3);
  EXPECT_EQ(a(), b());
  EXPECT_EQ(child(), Rng(42).split(3)());
  EXPECT_NE(Rng(42).split(3)(), Rng(42).split(4)());
}

TEST(Rng, IndexStaysInRange) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(rng.index(7), 7u);
}

TEST(Simulator, MarginalRatesMatchKnowledgeBase) {
  const KnowledgeBase kb = make_kb(4, {{{0, 0.73}, {1, 0.62}}, {{1, 0.2}, {2, 0.9}, {3, 0.5}}});
  SimConfig config;
  config.seed = 5;
  config.train = 20000;
  config.val = 0;
  config.test = 0;
  const Dataset data = generate_dataset(kb, config).train;

  std::map<std::uint32_t, std::size_t> per_disease;
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> hits;
  for (const auto& r : data) {
    ++per_disease[r.disease.value];
    for (SymptomId s : r.positives) ++hits[{r.disease.value, s.value}];
  }
  for (std::uint32_t d = 0; d < 2; ++d) {
    EXPECT_NEAR(static_cast<double>(per_disease[d]) / data.size(), 0.5, 0.02);
    for (std::uint32_t s = 0; s < 4; ++s) {
      const double rate = static_cast<double>(hits[{d, s}]) / per_disease[d];
      EXPECT_NEAR(rate, kb.marginal(DiseaseId(d), SymptomId(s)), 0.02) << "d" << d << " s" << s;
    }
  }
}

TEST(Simulator, UnassociatedSymptomsNeverAppear) {
  const KnowledgeBase kb = make_kb(3, {{{0, 0.5}}, {{1, 0.5}}});
  Rng rng(9);
  for (int i = 0; i < 500; ++i) {
    const DatasetRecord r = generate_record(kb, rng);
    for (SymptomId s : r.positives) EXPECT_GT(kb.marginal(r.disease, s), 0.0);
  }
}

TEST(Simulator, SameSeedGivesIdenticalSplits) {
  const KnowledgeBase kb = load_knowledge_base(testing::source_dir() / "data/toy_kb.json");
  SimConfig config;
  config.seed = 17;
  config.train = 300;
  config.val = 50;
  config.test = 50;
  const DatasetSplits a = generate_dataset(kb, config);
  const DatasetSplits b = generate_dataset(kb, config);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.val, b.val);
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(serialize_dataset(a.test, kb), serialize_dataset(b.test, kb));

  config.seed = 18;
  EXPECT_NE(generate_dataset(kb, config).train, a.train);
}

TEST(Simulator, SplitsDoNotShareStreams) {
  const KnowledgeBase kb = load_knowledge_base(testing::source_dir() / "data/toy_kb.json");
  SimConfig config;
  config.seed = 2;
  config.train = config.val = config.test = 200;
  const DatasetSplits s = generate_dataset(kb, config);
  EXPECT_NE(s.train, s.val);
  EXPECT_NE(s.val, s.test);
}

TEST(SelfReport, PicksAPositiveUniformly) {
  DatasetRecord r{DiseaseId(0), {SymptomId(1), SymptomId(4), SymptomId(6)}};
  Rng rng(3);
  std::map<std::uint32_t, int> counts;
  for (int i = 0; i < 6000; ++i) ++counts[pick_self_report(r, rng)->value];
  ASSERT_EQ(counts.size(), 3u);
  for (const auto& [s, c] : counts) {
    EXPECT_TRUE(r.has_symptom(SymptomId(s)));
    EXPECT_NEAR(c / 6000.0, 1.0 / 3.0, 0.03);
  }
}

TEST(SelfReport, NoPositivesGivesNothing) {
  DatasetRecord r{DiseaseId(0), {}};
  Rng rng(3);
  EXPECT_FALSE(pick_self_report(r, rng).has_value());
}

TEST(SyntheticKb, RespectsShapeAndIsReproducible) {
  SyntheticKbConfig config;
  config.diseases = 20;
  config.symptoms = 40;
  config.seed = 8;
  const KnowledgeBase kb = generate_knowledge_base(config);
  EXPECT_EQ(kb.num_diseases(), 20u);
  EXPECT_EQ(kb.num_symptoms(), 40u);
  for (const auto& d : kb.diseases()) {
    EXPECT_GE(d.symptoms.size(), config.min_symptoms_per_disease);
    EXPECT_LE(d.symptoms.size(), config.max_symptoms_per_disease);
    for (const auto& m : d.symptoms) {
      EXPECT_GE(m.probability, config.min_probability);
      EXPECT_LE(m.probability, config.max_probability);
    }
  }
  EXPECT_EQ(serialize_knowledge_base(kb), serialize_knowledge_base(generate_knowledge_base(config)));
  EXPECT_NO_THROW(parse_knowledge_base(serialize_knowledge_base(kb)));
}

}  // namespace
}  // namespace bsoda
