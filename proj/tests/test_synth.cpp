#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include <lsl/synth.hpp>
#include <lsl/trainer.hpp>

#include "fixtures.hpp"

using namespace lsl;
using lsl::testing::read_file;
using lsl::testing::TempDir;

TEST(Synth, RejectsInfeasibleGeometry) {
  SynthOptions o;
  o.separation = 0.0;
  EXPECT_THROW(generate_synth(o), std::invalid_argument);
  o.separation = -1.0;
  EXPECT_THROW(generate_synth(o), std::invalid_argument);
  o = {};
  o.num_subclasses = 0;
  EXPECT_THROW(generate_synth(o), std::invalid_argument);
  o = {};
  o.num_subclasses = 20;
  EXPECT_THROW(generate_synth(o), std::invalid_argument);
}

TEST(Synth, CountsAndLabels) {
  SynthOptions o;
  o.num_positives = 600;
  const auto b = generate_synth(o);
  EXPECT_EQ(b.examples.size(), 1200u);
  std::size_t pos = 0, dev = 0;
  for (std::size_t i = 0; i < b.examples.size(); ++i) {
    const auto& ex = b.examples[i];
    pos += ex.label;
    dev += ex.split == Split::dev;
    if (ex.label) {
      EXPECT_EQ(*ex.gold, planted_label(b.planted[i]));
    } else {
      EXPECT_FALSE(ex.gold);
      EXPECT_EQ(b.planted[i], -1);
    }
  }
  EXPECT_EQ(pos, 600u);
  EXPECT_EQ(dev, 240u);
}

TEST(Synth, SixSubclassOracleIsNearlyPerfect) {
  SynthOptions o;
  o.num_positives = 5000;
  const auto b = generate_synth(o);
  EXPECT_GE(b.oracle_accuracy, 0.99);
  for (std::size_t i = 0; i < b.centers.size(); ++i)
    for (std::size_t j = i + 1; j < b.centers.size(); ++j) EXPECT_NEAR((b.centers[i] - b.centers[j]).norm(), 6.0, 1e-12);
}

TEST(Synth, SingleSubclassHasDiversityOneTarget) {
  SynthOptions o;
  o.num_subclasses = 1;
  o.num_positives = 100;
  const auto b = generate_synth(o);
  std::vector<std::string> gold;
  for (const auto& ex : b.examples)
    if (ex.gold) gold.push_back(*ex.gold);
  EXPECT_EQ(diversity(gold), 1.0);
}

TEST(Synth, FilesAreByteIdenticalUnderSeedAndPassValidators) {
  SynthOptions o;
  o.num_positives = 300;
  o.seed = 17;
  TempDir a("synth-a"), b("synth-b");
  write_synth(a.path(), generate_synth(o));
  write_synth(b.path(), generate_synth(o));
  for (const char* f : {"embeddings.bin", "task.jsonl", "manifest.json"})
    EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;

  const auto idx = load_embeddings(a / "embeddings.bin");
  const auto task = load_task(a / "task.jsonl", &idx, true);
  EXPECT_EQ(task.train.size() + task.dev.size(), 600u);
  EXPECT_EQ(task.train.label_inventory.size(), 6u);
  const auto manifest = nlohmann::json::parse(read_file(a / "manifest.json"));
  EXPECT_EQ(manifest["planted"].size(), 300u);
  EXPECT_GE(manifest["oracle_accuracy"].get<double>(), 0.9);

  o.seed = 18;
  TempDir c("synth-c");
  write_synth(c.path(), generate_synth(o));
  EXPECT_NE(read_file(a / "embeddings.bin"), read_file(c / "embeddings.bin"));
}

TEST(Synth, MultiLayerModeTeachesTheMixToFindTheSignalLayer) {
  SynthOptions o;
  o.num_positives = 1500;
  o.layers = 3;
  o.signal_layer = 1;
  const auto bench = generate_synth(o);
  EmbeddingIndex idx;
  for (const auto& b : bench.bundles) idx.add(b);
  TaskSplits splits;
  for (const auto& ex : bench.examples) splits.get(ex.split).examples.push_back(ex);
  TrainConfig cfg;
  cfg.hidden_size = 16;
  cfg.max_epochs = 15;
  cfg.learning_rate = 1e-2;
  const auto run = train(splits, idx, cfg);
  const Vec w = softmax(run.model.probe.mix_logits);
  Eigen::Index best = 0;
  w.maxCoeff(&best);
  EXPECT_EQ(best, 1);
  EXPECT_GE(run.dev.accuracy, 0.9);
}
