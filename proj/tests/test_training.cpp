// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <cstring>
#include <filesystem>

#include "mnet/errors.hpp"
#include "mnet/training.hpp"

using namespace mnet;

namespace {

FaceSet random_set(Rng& rng, std::size_t n, std::size_t d, std::uint32_t label) {
  FaceSet s;
  s.identity = label;
  for (std::size_t i = 0; i < n; ++i) {
    Vec v(d);
    for (auto& x : v) x = rng.normal();
    s.members.push_back(std::move(v));
  }
  return s;
}

GateParams random_params(Rng& rng, std::size_t d, std::size_t c, double scale) {
  auto p = init_params(d, c, rng, true);
  for (auto& x : p.theta2) x = rng.normal(0.0, scale);
  for (auto& x : p.theta3) x = rng.normal(0.0, scale);
  p.bias2 = rng.normal(0.0, scale);
  p.bias3 = rng.normal(0.0, scale);
  return p;
}

double composite_error(const FaceSet& set, GateParams p, Mode mode) {
  const auto analytic = set_loss(set, p, mode).flat_gradient();
  Vec flat = p.flatten();
  auto f = [&](std::span<const double> x) {
    GateParams q = p;
    q.assign_flat(x);
    return set_loss(set, q, mode).loss;
  };
  return grad_check(f, flat, analytic, 1e-5);
}

SyntheticConfig small_corpus_config() {
  SyntheticConfig c;
  c.num_identities = 8;
  c.sets_per_identity = 5;
  c.dim = 12;
  c.seed = 4;
  c.test_fraction = 0.25;
  return c;
}

TrainConfig quick_config() {
  TrainConfig t;
  t.batch_size = 16;
  t.sets_per_identity = 8;
  t.max_epochs = 4;
  t.seed = 5;
  return t;
}

}  // namespace

TEST(SetLoss, ZeroClassifierGivesLogC) {
  Rng rng(1);
  const auto set = random_set(rng, 3, 6, 2);
  const auto p = GateParams::zeros(6, 7, true);
  for (Mode m : {Mode::Avg, Mode::MnV, Mode::MnVc}) EXPECT_EQ(set_loss(set, p, m).loss, std::log(7.0));
}

TEST(SetLoss, CompositeGradientMatchesFiniteDifferences) {
  Rng rng(9);
  const auto set = random_set(rng, 3, 8, 4);
  const auto p = random_params(rng, 8, 5, 0.5);
  EXPECT_LT(composite_error(set, p, Mode::MnVc), 1e-5);
  EXPECT_LT(composite_error(set, p, Mode::MnV), 1e-5);
}

TEST(SetLoss, DuplicateMembersMatchSingleMember) {
  Rng rng(2);
  const auto single = random_set(rng, 1, 5, 1);
  FaceSet dup = single;
  dup.members = {single.members[0], single.members[0], single.members[0]};
  const auto p = random_params(rng, 5, 3, 0.7);
  for (Mode m : {Mode::Avg, Mode::MnV, Mode::MnVc}) {
    EXPECT_NEAR(set_loss(dup, p, m).loss, set_loss(single, p, m).loss, 1e-12);
  }
}

TEST(SetLoss, LabelOutsideClassesIsProtocolError) {
  Rng rng(3);
  const auto set = random_set(rng, 2, 4, 3);
  EXPECT_THROW(set_loss(set, GateParams::zeros(4, 3, true), Mode::MnVc), ProtocolError);
}

TEST(InitParams, ZeroGatesReproduceAveraging) {
  Rng rng(4);
  const auto p = init_params(6, 3, rng, true);
  for (double x : p.theta2) EXPECT_EQ(x, 0.0);
  for (double x : p.theta3) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(p.bias2, 0.0);
  EXPECT_EQ(p.bias3, 0.0);
  for (int trial = 0; trial < 50; ++trial) {
    const auto set = random_set(rng, 1 + trial % 6, 6, trial % 3);
    const auto avg = aggregate(set, p, Mode::Avg).v_d;
    EXPECT_EQ(aggregate(set, p, Mode::MnV).v_d, avg);
    EXPECT_EQ(aggregate(set, p, Mode::MnVc).v_d, avg);
    const double base = set_loss(set, p, Mode::Avg).loss;
    EXPECT_NEAR(set_loss(set, p, Mode::MnV).loss, base, 1e-12);
    EXPECT_NEAR(set_loss(set, p, Mode::MnVc).loss, base, 1e-12);
  }
}

TEST(InitParams, ParameterCountAndClassifierVariance) {
  Rng rng(5);
  EXPECT_EQ(init_params(2048, 2, rng, false).gate_parameter_count(), 6144u);
  const auto p = init_params(64, 50, rng, true);
  double mean = 0.0;
  for (double w : p.classifier) mean += w;
  mean /= p.classifier.size();
  double var = 0.0;
  for (double w : p.classifier) var += (w - mean) * (w - mean);
  var /= p.classifier.size() - 1;
  EXPECT_NEAR(var, 2.0 / 64.0, 0.2 * 2.0 / 64.0);
}

TEST(Plateau, DecaysTwiceThenStops) {
  PlateauSchedule s(0.1, 10.0, 2);
  EXPECT_TRUE(s.observe(1.0));
  EXPECT_TRUE(s.observe(0.5));
  EXPECT_TRUE(s.observe(0.49995));  // within threshold: stale 1
  EXPECT_TRUE(s.observe(0.6));      // stale 2 -> decay
  EXPECT_EQ(s.decays(), 1);
  EXPECT_NEAR(s.lr(), 0.01, 1e-18);
  EXPECT_TRUE(s.observe(0.3));  // improvement resets
  EXPECT_TRUE(s.observe(0.3));
  EXPECT_TRUE(s.observe(0.3));  // second decay
  EXPECT_EQ(s.decays(), 2);
  EXPECT_NEAR(s.lr(), 0.001, 1e-18);
  EXPECT_TRUE(s.observe(0.3));
  EXPECT_FALSE(s.observe(0.3));  // plateau after the second decay
}

TEST(Checkpoint, RoundTripGivesIdenticalForward) {
  Rng rng(6);
  Checkpoint ck;
  ck.params = random_params(rng, 7, 3, 0.8);
  ck.mode = Mode::MnV;
  ck.epoch = 12;
  ck.loss_history = {2.0, 1.5, 1.25};
  ck.config_hash = sha256("config");
  const auto path = std::filesystem::temp_directory_path() / "mnet_test_ckpt.bin";
  save_checkpoint(ck, path);
  const auto back = load_checkpoint(path);
  EXPECT_TRUE(back == ck);
  EXPECT_EQ(back.mode, Mode::MnV);
  EXPECT_EQ(back.loss_history, ck.loss_history);
  const auto probe = random_set(rng, 4, 7, 0);
  EXPECT_EQ(aggregate(probe, back.params, Mode::MnVc).v_d, aggregate(probe, ck.params, Mode::MnVc).v_d);
}

TEST(Checkpoint, LayoutAndParseErrors) {
  Checkpoint ck;
  ck.params = GateParams::zeros(2, 1, false);
  ck.params.theta2 = {1.5, -2.0};
  const auto bytes = encode_checkpoint(ck);
  // magic, hash, epoch, D, C, flags, 3D+2+CD doubles, history length
  EXPECT_EQ(bytes.size(), 8u + 32u + 16u + 8u * (3 * 2 + 2 + 2) + 4u);
  EXPECT_EQ(bytes.substr(0, 8), "MNCKPT01");
  double first;
  std::memcpy(&first, bytes.data() + 56, 8);
  EXPECT_EQ(first, 1.5);

  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), ParseError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), ParseError);
  EXPECT_THROW(decode_checkpoint(bytes + "xx"), ParseError);
}

TEST(Sha256, KnownVector) {
  EXPECT_EQ(to_hex(sha256("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  const auto corpus = generate_synthetic(small_corpus_config());
  auto cfg = quick_config();
  cfg.lr_initial = 0.0;
  std::vector<double> losses;
  const auto ck = train(corpus, cfg, [&](const EpochStats& s) { losses.push_back(s.loss); });
  Rng init_rng = Rng(cfg.seed).split();
  const auto fresh = init_params(corpus.dim(), corpus.split->train_identities.size(), init_rng, true);
  EXPECT_EQ(ck.params.flatten(), fresh.flatten());
  ASSERT_EQ(losses.size(), cfg.max_epochs);
  // Only the sampled sets change between epochs.
  for (double l : losses) EXPECT_NEAR(l, losses.front(), 0.1 * losses.front());
}

TEST(Train, DeterministicAcrossRunsAndThreads) {
  const auto corpus = generate_synthetic(small_corpus_config());
  auto cfg = quick_config();
  const auto a = encode_checkpoint(train(corpus, cfg));
  const auto b = encode_checkpoint(train(corpus, cfg));
  cfg.threads = 4;
  const auto c = encode_checkpoint(train(corpus, cfg));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
}

TEST(Train, DivergenceIsReported) {
  const auto corpus = generate_synthetic(small_corpus_config());
  auto cfg = quick_config();
  cfg.lr_initial = 1e300;
  EXPECT_THROW(train(corpus, cfg), DivergenceError);
}

TEST(Train, RejectsBadInputs) {
  auto corpus = generate_synthetic(small_corpus_config());
  auto cfg = quick_config();
  cfg.mode = Mode::Avg;
  EXPECT_THROW(train(corpus, cfg), ConfigError);
  cfg = quick_config();
  corpus.split->train_identities.resize(1);
  EXPECT_THROW(train(corpus, cfg), ProtocolError);
}

TEST(Train, SmallStepDoesNotIncreaseBatchLoss) {
  const auto corpus = generate_synthetic(small_corpus_config());
  Rng rng(21);
  const auto& ids = corpus.split->train_identities;
  int passes = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng init_rng = rng.split();
    auto p = init_params(corpus.dim(), ids.size(), init_rng, true);
    for (auto& x : p.theta2) x = rng.normal(0.0, 0.5);
    for (auto& x : p.theta3) x = rng.normal(0.0, 0.5);
    auto batch = assemble_training_sets(corpus, ids, 3, 16, rng);
    for (auto& s : batch) s.identity = static_cast<std::uint32_t>(std::find(ids.begin(), ids.end(), s.identity) - ids.begin());
    const Mode mode = trial % 2 ? Mode::MnV : Mode::MnVc;
    double before = 0.0;
    Vec grad(p.flat_size(), 0.0);
    for (const auto& s : batch) {
      const auto r = set_loss(s, p, mode);
      before += r.loss;
      axpy(1.0, r.flat_gradient(), grad);
    }
    before /= batch.size();
    Vec flat = p.flatten();
    for (std::size_t k = 0; k < flat.size(); ++k) flat[k] -= 1e-3 * grad[k] / batch.size();
    p.assign_flat(flat);
    double after = 0.0;
    for (const auto& s : batch) after += set_loss(s, p, mode).loss;
    after /= batch.size();
    passes += after <= before + 1e-6;
  }
  EXPECT_GE(passes, 99);
}

TEST(Train, LossDropsOnDefaultCorpus) {
  const auto corpus = generate_synthetic(SyntheticConfig{});
  TrainConfig cfg;
  cfg.max_epochs = 30;
  cfg.seed = 2;
  const auto ck = train(corpus, cfg);
  ASSERT_FALSE(ck.loss_history.empty());
  const double ln_c = std::log(static_cast<double>(corpus.split->train_identities.size()));
  EXPECT_LE(ck.loss_history.back(), 0.5 * ln_c);
}
