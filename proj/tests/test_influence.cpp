#include <gtest/gtest.h>

#include <cmath>

#include "iaop/gac.hpp"
#include "iaop/gtc.hpp"
#include "iaop/influence.hpp"

using namespace iaop;

namespace {

// Binary dataset with one input bit; the target is either that bit or a coin.
InfluenceDataset synthetic(bool copy_input, int episodes, int len, std::uint64_t seed) {
  InfluenceDataset ds;
  ds.input_width = 1;
  ds.seq_len = len;
  ds.source_spec = SourceSpec::binary(1);
  RngStream rng(seed);
  for (int e = 0; e < episodes; ++e) {
    EpisodeRecord rec;
    for (int t = 0; t < len; ++t) {
      const int bit = static_cast<int>(rng.below(2));
      rec.inputs.push_back(bit);
      rec.targets.push_back(copy_input ? bit : static_cast<int>(rng.below(2)));
    }
    ds.episodes.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace

TEST(Collect, GacShapes) {
  gac::GacConfig cfg;
  const auto ds = collect_dataset(gac::GacGlobalSimulator(cfg), gac::GacLocalSimulator(cfg),
                                  UniformPolicy{2}, 1000, 10, RngStream(1));
  EXPECT_EQ(ds.episodes.size(), 1000u);
  EXPECT_EQ(ds.seq_len, 9);
  EXPECT_EQ(ds.train_size(), 800u);
  for (const auto& e : ds.episodes) {
    ASSERT_EQ(e.inputs.size(), 27u);
    ASSERT_EQ(e.targets.size(), 18u);
  }
  EXPECT_NO_THROW(ds.validate());
}

TEST(Collect, GacAlignmentAtZeroP) {
  // With p = 0 the outcome x_{t+1} is 1 exactly when the chosen side is uncontested,
  // which ties input row k+1 (a_t, x_{t+1}) to target row k (y_t).
  gac::GacConfig cfg;
  const auto ds = collect_dataset(gac::GacGlobalSimulator(cfg), gac::GacLocalSimulator(cfg),
                                  UniformPolicy{2}, 200, 10, RngStream(2));
  for (const auto& e : ds.episodes)
    for (int k = 0; k + 1 < ds.seq_len; ++k) {
      const auto row = static_cast<std::size_t>(k + 1) * 3;
      const bool right = e.inputs[row + 1] > 0.5;
      const int x = static_cast<int>(e.inputs[row + 2]);
      const int contest = e.targets[static_cast<std::size_t>(k) * 2 + (right ? 1 : 0)];
      ASSERT_EQ(x, 1 - contest);
    }
}

TEST(Collect, FirstRecordedSourceIsFair) {
  gac::GacConfig cfg;
  const auto ds = collect_dataset(gac::GacGlobalSimulator(cfg), gac::GacLocalSimulator(cfg),
                                  UniformPolicy{2}, 10000, 3, RngStream(3));
  double left = 0;
  for (const auto& e : ds.episodes) left += e.targets[0];
  EXPECT_NEAR(left / 10000, 0.5, 0.02);
}

TEST(Collect, Deterministic) {
  gtc::GtcConfig cfg;
  const auto a = collect_dataset(gtc::GtcGlobalSimulator(cfg), gtc::GtcLocalSimulator(cfg),
                                 UniformPolicy{2}, 5, 30, RngStream(4));
  const auto b = collect_dataset(gtc::GtcGlobalSimulator(cfg), gtc::GtcLocalSimulator(cfg),
                                 UniformPolicy{2}, 5, 30, RngStream(4));
  ASSERT_EQ(a.episodes.size(), b.episodes.size());
  for (std::size_t i = 0; i < a.episodes.size(); ++i) {
    EXPECT_EQ(a.episodes[i].inputs, b.episodes[i].inputs);
    EXPECT_EQ(a.episodes[i].targets, b.episodes[i].targets);
  }
  EXPECT_EQ(a.input_width, 27);
  EXPECT_EQ(a.seq_len, 29);
}

TEST(Train, RefusesEmptyDataset) {
  gac::GacConfig cfg;
  const auto ds = collect_dataset(gac::GacGlobalSimulator(cfg), gac::GacLocalSimulator(cfg),
                                  UniformPolicy{2}, 0, 10, RngStream(5));
  EXPECT_TRUE(ds.episodes.empty());
  EXPECT_THROW(train(ds, TrainConfig{}), TrainingError);
}

TEST(Train, CoinTargetsStayAtLn2) {
  const auto ds = synthetic(false, 500, 8, 6);
  TrainConfig cfg;
  cfg.optimizer = TrainConfig::Optimizer::adam;
  cfg.learning_rate = 0.01;
  cfg.epochs = 40;
  cfg.hidden_width = 2;
  cfg.batch_size = 32;
  const auto r = train(ds, cfg);
  const double best = r.curve.val_ce[static_cast<std::size_t>(r.curve.best_epoch)];
  EXPECT_NEAR(best, std::log(2.0), 0.02);
  EXPECT_GE(best, std::log(2.0) - 0.02);
}

TEST(Train, CopyTaskIsLearned) {
  const auto ds = synthetic(true, 200, 8, 7);
  TrainConfig cfg;
  cfg.optimizer = TrainConfig::Optimizer::adam;
  cfg.learning_rate = 0.05;
  cfg.epochs = 150;
  cfg.hidden_width = 2;
  cfg.batch_size = 16;
  cfg.grad_clip_norm = 0;
  const auto r = train(ds, cfg);
  EXPECT_LT(r.curve.val_ce[static_cast<std::size_t>(r.curve.best_epoch)], 0.01);
  // the returned predictor is the best-validation checkpoint
  EXPECT_NEAR(mean_cross_entropy(r.predictor, ds, ds.train_size(), ds.episodes.size()),
              r.curve.val_ce[static_cast<std::size_t>(r.curve.best_epoch)], 1e-12);
}

TEST(Train, GacBeatsUniformBaseline) {
  gac::GacConfig gcfg;
  const auto ds = collect_dataset(gac::GacGlobalSimulator(gcfg), gac::GacLocalSimulator(gcfg),
                                  UniformPolicy{2}, 500, 10, RngStream(8));
  TrainConfig cfg;
  cfg.optimizer = TrainConfig::Optimizer::adam;
  cfg.learning_rate = 0.01;
  cfg.epochs = 30;
  cfg.batch_size = 32;
  const auto r = train(ds, cfg);
  EXPECT_LT(r.curve.val_ce[static_cast<std::size_t>(r.curve.best_epoch)], std::log(2.0));
  EXPECT_EQ(r.curve.train_ce.size(), 30u);
}

TEST(Train, SameSeedSameModel) {
  const auto ds = synthetic(true, 50, 4, 9);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 8;
  cfg.seed = 3;
  const auto a = train(ds, cfg);
  const auto b = train(ds, cfg);
  ASSERT_EQ(a.predictor.params().size(), b.predictor.params().size());
  for (std::size_t i = 0; i < a.predictor.params().size(); ++i)
    EXPECT_EQ(a.predictor.params()[i], b.predictor.params()[i]);
  EXPECT_EQ(a.curve.val_ce, b.curve.val_ce);
}

TEST(Train, WeightDecayShrinksWeights) {
  const auto ds = synthetic(false, 100, 4, 10);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.05;
  cfg.hidden_width = 2;
  const auto plain = train(ds, cfg);
  cfg.weight_decay = 1.0;
  const auto decayed = train(ds, cfg);
  double n_plain = 0, n_decayed = 0;
  for (double p : plain.predictor.params()) n_plain += p * p;
  for (double p : decayed.predictor.params()) n_decayed += p * p;
  EXPECT_LT(n_decayed, n_plain);
}

TEST(Train, ConfigValidation) {
  TrainConfig cfg;
  cfg.learning_rate = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_EQ(optimizer_from_string("adam"), TrainConfig::Optimizer::adam);
  EXPECT_THROW(optimizer_from_string("rmsprop"), ConfigError);
}

TEST(JointFromHeads, Product) {
  const auto joint = joint_from_heads(SourceSpec::binary(2), {{0.3, 0.7}, {0.9, 0.1}});
  ASSERT_EQ(joint.size(), 4u);
  EXPECT_NEAR(joint[0], 0.27, 1e-12);
  EXPECT_NEAR(joint[1], 0.63, 1e-12);
  EXPECT_NEAR(joint[2], 0.03, 1e-12);
  EXPECT_NEAR(joint[3], 0.07, 1e-12);
}
