// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "mnet/mnet.h"

namespace {

mnet_corpus* small_corpus(uint64_t seed = 3) {
  mnet_synthetic_config cfg;
  mnet_synthetic_config_default(&cfg);
  cfg.num_identities = 10;
  cfg.sets_per_identity = 6;
  cfg.dim = 16;
  cfg.seed = seed;
  cfg.test_fraction = 0.4;
  mnet_corpus* c = nullptr;
  EXPECT_EQ(mnet_corpus_generate(&cfg, &c), MNET_OK);
  return c;
}

mnet_train_config quick_train() {
  mnet_train_config t;
  mnet_train_config_default(&t);
  t.max_epochs = 3;
  t.batch_size = 16;
  t.sets_per_identity = 4;
  return t;
}

void count_epochs(uint32_t, double, double, void* user) { ++*static_cast<int*>(user); }

}  // namespace

TEST(CApi, ModeNamesRoundTrip) {
  for (mnet_mode m : {MNET_MODE_AVG, MNET_MODE_MN_V, MNET_MODE_MN_VC}) {
    mnet_mode back;
    ASSERT_EQ(mnet_mode_parse(mnet_mode_name(m), &back), MNET_OK);
    EXPECT_EQ(back, m);
  }
  mnet_mode out;
  EXPECT_EQ(mnet_mode_parse("median", &out), MNET_ERR_CONFIG);
  EXPECT_NE(std::string(mnet_last_error()).find("median"), std::string::npos);
}

TEST(CApi, InvalidConfigIsRejected) {
  mnet_synthetic_config cfg;
  mnet_synthetic_config_default(&cfg);
  cfg.aberrant_fraction = 1.5;
  mnet_corpus* c = nullptr;
  EXPECT_EQ(mnet_corpus_generate(&cfg, &c), MNET_ERR_CONFIG);
  EXPECT_EQ(c, nullptr);
  EXPECT_EQ(mnet_corpus_generate(nullptr, &c), MNET_ERR_USAGE);
}

TEST(CApi, CorpusRoundTripAndSummary) {
  mnet_corpus* c = small_corpus();
  const auto path = (std::filesystem::temp_directory_path() / "mnet_capi_corpus.bin").string();
  ASSERT_EQ(mnet_corpus_write(c, path.c_str()), MNET_OK);
  mnet_corpus* back = nullptr;
  ASSERT_EQ(mnet_corpus_read(path.c_str(), &back), MNET_OK);
  mnet_corpus_summary a, b;
  ASSERT_EQ(mnet_corpus_summary_get(c, &a), MNET_OK);
  ASSERT_EQ(mnet_corpus_summary_get(back, &b), MNET_OK);
  EXPECT_EQ(a.records, b.records);
  EXPECT_EQ(a.templates, 60u);
  EXPECT_EQ(a.identities, 10u);
  EXPECT_TRUE(b.has_split);
  EXPECT_EQ(a.train_identities + a.test_identities, 10u);
  mnet_corpus_free(c);
  mnet_corpus_free(back);
  mnet_corpus* none = nullptr;
  EXPECT_EQ(mnet_corpus_read("/nonexistent/x.bin", &none), MNET_ERR_IO);
}

TEST(CApi, TrainSaveLoadEvaluate) {
  mnet_corpus* c = small_corpus();
  auto t = quick_train();
  int epochs = 0;
  mnet_model* m = nullptr;
  ASSERT_EQ(mnet_train(c, &t, count_epochs, &epochs, &m), MNET_OK) << mnet_last_error();
  EXPECT_EQ(epochs, 3);
  mnet_model_info info;
  ASSERT_EQ(mnet_model_info_get(m, &info), MNET_OK);
  EXPECT_EQ(info.dim, 16u);
  EXPECT_EQ(info.gate_parameters, 3u * 16u + 2u);
  EXPECT_EQ(info.mode, MNET_MODE_MN_VC);
  EXPECT_EQ(std::string(info.config_hash).size(), 64u);

  const auto path = (std::filesystem::temp_directory_path() / "mnet_capi_model.ckpt").string();
  ASSERT_EQ(mnet_model_save(m, path.c_str()), MNET_OK);
  mnet_model* loaded = nullptr;
  ASSERT_EQ(mnet_model_load(path.c_str(), &loaded), MNET_OK);

  const mnet_mode modes[] = {MNET_MODE_AVG, MNET_MODE_MN_VC};
  mnet_eval_config e;
  mnet_eval_config_default(&e);
  e.modes = modes;
  e.mode_count = 2;
  e.model_mn_vc = m;
  mnet_evaluation* ev1 = nullptr;
  ASSERT_EQ(mnet_evaluate(c, &e, &ev1), MNET_OK) << mnet_last_error();
  e.model_mn_vc = loaded;
  mnet_evaluation* ev2 = nullptr;
  ASSERT_EQ(mnet_evaluate(c, &e, &ev2), MNET_OK);
  ASSERT_EQ(mnet_evaluation_count(ev1), 2u);
  for (size_t k = 0; k < 2; ++k) {
    mnet_report_row r1, r2;
    ASSERT_EQ(mnet_evaluation_row(ev1, k, &r1), MNET_OK);
    ASSERT_EQ(mnet_evaluation_row(ev2, k, &r2), MNET_OK);
    EXPECT_EQ(r1.mode, modes[k]);
    EXPECT_GT(r1.n_genuine, 0u);
    for (size_t f = 0; f < MNET_REPORT_FAR_COUNT; ++f) EXPECT_EQ(r1.tar[f], r2.tar[f]);
  }
  mnet_report_row bad;
  EXPECT_EQ(mnet_evaluation_row(ev1, 5, &bad), MNET_ERR_USAGE);

  const auto prefix = (std::filesystem::temp_directory_path() / "mnet_capi_report").string();
  ASSERT_EQ(mnet_evaluation_write(ev1, prefix.c_str()), MNET_OK);
  EXPECT_TRUE(std::filesystem::exists(prefix + ".mn-vc.json"));
  EXPECT_TRUE(std::filesystem::exists(prefix + ".avg.csv"));

  mnet_evaluation_free(ev1);
  mnet_evaluation_free(ev2);
  mnet_model_free(m);
  mnet_model_free(loaded);
  mnet_corpus_free(c);
}

TEST(CApi, GatedModeNeedsModel) {
  mnet_corpus* c = small_corpus();
  const mnet_mode modes[] = {MNET_MODE_MN_V};
  mnet_eval_config e;
  mnet_eval_config_default(&e);
  e.modes = modes;
  e.mode_count = 1;
  mnet_evaluation* ev = nullptr;
  EXPECT_EQ(mnet_evaluate(c, &e, &ev), MNET_ERR_USAGE);
  mnet_corpus_free(c);
}

TEST(CApi, InspectTwoCallPattern) {
  mnet_corpus* c = small_corpus();
  mnet_model* m = nullptr;
  ASSERT_EQ(mnet_model_init(16, 6, 1, 1, MNET_MODE_MN_VC, &m), MNET_OK);
  size_t count = 0;
  ASSERT_EQ(mnet_inspect(c, m, 0, MNET_MODE_MN_VC, nullptr, 0, &count), MNET_OK);
  ASSERT_GT(count, 0u);
  std::vector<mnet_member_quality> rows(count);
  ASSERT_EQ(mnet_inspect(c, m, 0, MNET_MODE_MN_VC, rows.data(), rows.size(), &count), MNET_OK);
  double sum = 0.0;
  for (const auto& r : rows) {
    sum += r.gamma;
    EXPECT_TRUE(r.has_quality);
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  if (count > 1) {
    EXPECT_EQ(mnet_inspect(c, m, 0, MNET_MODE_MN_VC, rows.data(), 1, &count), MNET_ERR_USAGE);
  }
  EXPECT_EQ(mnet_inspect(c, m, 999999, MNET_MODE_MN_VC, nullptr, 0, &count), MNET_ERR_USAGE);
  EXPECT_EQ(mnet_inspect(c, nullptr, 0, MNET_MODE_AVG, nullptr, 0, &count), MNET_OK);
  mnet_model_free(m);
  mnet_corpus_free(c);
}

TEST(CApi, NullHandlesAreUsageErrors) {
  mnet_corpus_summary s;
  EXPECT_EQ(mnet_corpus_summary_get(nullptr, &s), MNET_ERR_USAGE);
  mnet_model_info i;
  EXPECT_EQ(mnet_model_info_get(nullptr, &i), MNET_ERR_USAGE);
  mnet_corpus_free(nullptr);
  mnet_model_free(nullptr);
  mnet_evaluation_free(nullptr);
  EXPECT_STREQ(mnet_status_string(MNET_OK), "ok");
}
