// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: generate, train, eval, inspect.
// Exit codes: 0 success, 1 runtime/protocol failure, 2 usage error.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "mnet/mnet.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

int report_failure(mnet_status status, const char* action) {
  std::fprintf(stderr, "error: %s failed: %s: %s\n", action, mnet_status_string(status),
               mnet_last_error());
  return (status == MNET_ERR_USAGE || status == MNET_ERR_CONFIG) ? kExitUsage : kExitFailure;
}

// Owning wrappers around the C handles.
template <typename T, void (*Free)(T*)>
struct Handle {
  T* ptr = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(ptr); }
  T** out() { return &ptr; }
  T* get() const { return ptr; }
};
using CorpusHandle = Handle<mnet_corpus, mnet_corpus_free>;
using ModelHandle = Handle<mnet_model, mnet_model_free>;
using EvaluationHandle = Handle<mnet_evaluation, mnet_evaluation_free>;

struct GenerateOptions {
  mnet_synthetic_config config{};
  std::string out;
  bool json = false;
};

struct TrainOptions {
  mnet_train_config config{};
  std::string corpus;
  std::string mode = "mn-vc";
  bool no_gate_bias = false;
  std::string out;
};

struct EvalOptions {
  std::string corpus;
  std::string checkpoint;
  std::string checkpoint_mn_v;
  std::string checkpoint_mn_vc;
  std::vector<std::string> modes{"avg", "mn-v", "mn-vc"};
  std::string pairs = "all";
  uint32_t impostors_per_genuine = 10;
  uint64_t pair_seed = 1;
  std::string out = "report";
  bool json = false;
};

struct InspectOptions {
  std::string corpus;
  std::string checkpoint;
  int64_t template_id = -1;
  std::string mode = "mn-vc";
  bool summary = false;
  bool json = false;
};

int run_generate(const GenerateOptions& opt, int verbosity) {
  CorpusHandle corpus;
  if (auto s = mnet_corpus_generate(&opt.config, corpus.out()); s != MNET_OK) {
    return report_failure(s, "generate");
  }
  if (auto s = mnet_corpus_write(corpus.get(), opt.out.c_str()); s != MNET_OK) {
    return report_failure(s, "write corpus");
  }
  mnet_corpus_summary sum{};
  mnet_corpus_summary_get(corpus.get(), &sum);
  const double realized =
      sum.records_with_quality ? static_cast<double>(sum.aberrant_records) / sum.records_with_quality : 0.0;
  if (opt.json) {
    nlohmann::ordered_json j;
    j["identities"] = sum.identities;
    j["templates"] = sum.templates;
    j["records"] = sum.records;
    j["dim"] = sum.dim;
    j["train_identities"] = sum.train_identities;
    j["test_identities"] = sum.test_identities;
    j["aberrant_records"] = sum.aberrant_records;
    j["aberrant_fraction_realized"] = realized;
    std::printf("%s\n", j.dump(2).c_str());
  } else {
    std::printf("identities %llu\ntemplates %llu\nrecords %llu\naberrant_fraction %.6f\n",
                static_cast<unsigned long long>(sum.identities),
                static_cast<unsigned long long>(sum.templates),
                static_cast<unsigned long long>(sum.records), realized);
    if (verbosity > 0) {
      std::fprintf(stderr, "wrote %s (dim %u, %llu train / %llu test identities)\n", opt.out.c_str(),
                   sum.dim, static_cast<unsigned long long>(sum.train_identities),
                   static_cast<unsigned long long>(sum.test_identities));
    }
  }
  return kExitOk;
}

void print_epoch(uint32_t epoch, double loss, double lr, void*) {
  std::printf("%u,%.12g,%.12g\n", epoch, loss, lr);
  std::fflush(stdout);
}

int run_train(TrainOptions opt, int verbosity) {
  if (auto s = mnet_mode_parse(opt.mode.c_str(), &opt.config.mode); s != MNET_OK) {
    return report_failure(s, "parse mode");
  }
  opt.config.gate_bias = opt.no_gate_bias ? 0 : 1;
  CorpusHandle corpus;
  if (auto s = mnet_corpus_read(opt.corpus.c_str(), corpus.out()); s != MNET_OK) {
    return report_failure(s, "read corpus");
  }
  ModelHandle model;
  if (auto s = mnet_train(corpus.get(), &opt.config, print_epoch, nullptr, model.out()); s != MNET_OK) {
    return report_failure(s, "train");
  }
  if (auto s = mnet_model_save(model.get(), opt.out.c_str()); s != MNET_OK) {
    return report_failure(s, "save checkpoint");
  }
  if (verbosity > 0) {
    mnet_model_info info{};
    mnet_model_info_get(model.get(), &info);
    std::fprintf(stderr, "wrote %s after %u epochs (%llu gate parameters)\n", opt.out.c_str(),
                 info.epoch, static_cast<unsigned long long>(info.gate_parameters));
  }
  return kExitOk;
}

int run_eval(const EvalOptions& opt, uint32_t threads) {
  std::vector<mnet_mode> modes;
  for (const auto& name : opt.modes) {
    mnet_mode m;
    if (auto s = mnet_mode_parse(name.c_str(), &m); s != MNET_OK) return report_failure(s, "parse mode");
    if (std::find(modes.begin(), modes.end(), m) == modes.end()) modes.push_back(m);
  }
  std::sort(modes.begin(), modes.end());

  CorpusHandle corpus;
  if (auto s = mnet_corpus_read(opt.corpus.c_str(), corpus.out()); s != MNET_OK) {
    return report_failure(s, "read corpus");
  }
  ModelHandle shared, for_v, for_vc;
  auto load = [](const std::string& path, ModelHandle& h) {
    return path.empty() ? MNET_OK : mnet_model_load(path.c_str(), h.out());
  };
  for (auto [path, handle] : {std::pair{&opt.checkpoint, &shared}, std::pair{&opt.checkpoint_mn_v, &for_v},
                              std::pair{&opt.checkpoint_mn_vc, &for_vc}}) {
    if (auto s = load(*path, *handle); s != MNET_OK) return report_failure(s, "load checkpoint");
  }

  mnet_eval_config cfg;
  mnet_eval_config_default(&cfg);
  cfg.modes = modes.data();
  cfg.mode_count = modes.size();
  cfg.model_mn_v = for_v.get() ? for_v.get() : shared.get();
  cfg.model_mn_vc = for_vc.get() ? for_vc.get() : shared.get();
  cfg.sampled_pairs = opt.pairs == "sampled" ? 1 : 0;
  cfg.impostors_per_genuine = opt.impostors_per_genuine;
  cfg.pair_seed = opt.pair_seed;
  cfg.threads = threads;

  EvaluationHandle eval;
  if (auto s = mnet_evaluate(corpus.get(), &cfg, eval.out()); s != MNET_OK) {
    return report_failure(s, "evaluate");
  }
  if (auto s = mnet_evaluation_write(eval.get(), opt.out.c_str()); s != MNET_OK) {
    return report_failure(s, "write report");
  }

  const std::size_t rows = mnet_evaluation_count(eval.get());
  if (opt.json) {
    nlohmann::ordered_json all = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < rows; ++i) {
      mnet_report_row row{};
      mnet_evaluation_row(eval.get(), i, &row);
      nlohmann::ordered_json j;
      j["mode"] = mnet_mode_name(row.mode);
      nlohmann::ordered_json table;
      static const char* keys[] = {"1e-5", "1e-4", "1e-3", "1e-2", "1e-1"};
      for (std::size_t k = 0; k < MNET_REPORT_FAR_COUNT; ++k) {
        table[keys[k]] = {{"tar", row.tar[k]}, {"flagged", row.flagged[k] != 0}};
      }
      j["tar_at_far"] = table;
      j["n_genuine"] = row.n_genuine;
      j["n_impostor"] = row.n_impostor;
      j["excluded_pairs"] = row.excluded_pairs;
      j["config_hash"] = row.config_hash;
      all.push_back(j);
    }
    std::printf("%s\n", all.dump(2).c_str());
    return kExitOk;
  }

  std::printf("%-6s", "mode");
  for (std::size_t k = 0; k < MNET_REPORT_FAR_COUNT; ++k) std::printf("  FAR=%-8.0e", mnet_report_far(k));
  std::printf("\n");
  for (std::size_t i = 0; i < rows; ++i) {
    mnet_report_row row{};
    mnet_evaluation_row(eval.get(), i, &row);
    std::printf("%-6s", mnet_mode_name(row.mode));
    for (std::size_t k = 0; k < MNET_REPORT_FAR_COUNT; ++k) {
      std::printf("  %.6f%c    ", row.tar[k], row.flagged[k] ? '*' : ' ');
    }
    std::printf("\n");
  }
  mnet_report_row first{};
  mnet_evaluation_row(eval.get(), 0, &first);
  std::printf("genuine pairs %llu, impostor pairs %llu, excluded %llu\n",
              static_cast<unsigned long long>(first.n_genuine),
              static_cast<unsigned long long>(first.n_impostor),
              static_cast<unsigned long long>(first.excluded_pairs));
  std::printf("* FAR below 1/impostor-count; value is the FAR=0 operating point\n");
  return kExitOk;
}

int run_inspect(const InspectOptions& opt) {
  mnet_mode mode;
  if (auto s = mnet_mode_parse(opt.mode.c_str(), &mode); s != MNET_OK) return report_failure(s, "parse mode");
  CorpusHandle corpus;
  if (auto s = mnet_corpus_read(opt.corpus.c_str(), corpus.out()); s != MNET_OK) {
    return report_failure(s, "read corpus");
  }
  ModelHandle model;
  if (!opt.checkpoint.empty()) {
    if (auto s = mnet_model_load(opt.checkpoint.c_str(), model.out()); s != MNET_OK) {
      return report_failure(s, "load checkpoint");
    }
  }

  if (opt.summary) {
    double mean = 0.0;
    uint64_t used = 0;
    if (auto s = mnet_quality_correlation(corpus.get(), model.get(), mode, &mean, &used); s != MNET_OK) {
      return report_failure(s, "quality correlation");
    }
    if (opt.json) {
      nlohmann::ordered_json j;
      j["mode"] = mnet_mode_name(mode);
      j["mean_spearman_alpha_quality"] = mean;
      j["sets_used"] = used;
      std::printf("%s\n", j.dump(2).c_str());
    } else {
      std::printf("mean spearman(alpha, quality_truth) %.6f over %llu test templates\n", mean,
                  static_cast<unsigned long long>(used));
    }
    return kExitOk;
  }

  if (opt.template_id < 0) {
    std::fprintf(stderr, "error: --template is required unless --summary is given\n");
    return kExitUsage;
  }
  const auto tid = static_cast<uint32_t>(opt.template_id);
  size_t count = 0;
  if (auto s = mnet_inspect(corpus.get(), model.get(), tid, mode, nullptr, 0, &count); s != MNET_OK) {
    return report_failure(s, "inspect");
  }
  std::vector<mnet_member_quality> rows(count);
  if (auto s = mnet_inspect(corpus.get(), model.get(), tid, mode, rows.data(), rows.size(), &count);
      s != MNET_OK) {
    return report_failure(s, "inspect");
  }
  if (opt.json) {
    nlohmann::ordered_json j;
    j["template_id"] = tid;
    j["mode"] = mnet_mode_name(mode);
    j["members"] = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
      nlohmann::ordered_json m;
      m["media_id"] = r.media_id;
      m["alpha"] = r.alpha;
      m["beta"] = r.beta;
      m["gamma"] = r.gamma;
      m["quality_truth"] = r.has_quality ? nlohmann::ordered_json(r.quality_truth) : nullptr;
      j["members"].push_back(m);
    }
    std::printf("%s\n", j.dump(2).c_str());
    return kExitOk;
  }
  std::printf("%-10s %-12s %-12s %-12s %s\n", "media_id", "alpha", "beta", "gamma", "quality_truth");
  for (const auto& r : rows) {
    std::printf("%-10u %-12.8f %-12.8f %-12.8f ", r.media_id, r.alpha, r.beta, r.gamma);
    if (r.has_quality) {
      std::printf("%g\n", static_cast<double>(r.quality_truth));
    } else {
      std::printf("-\n");
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multicolumn set aggregation: synthetic corpora, head training, verification"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  int verbosity = 0;
  uint32_t threads = 1;
  app.add_flag("-v,--verbose", verbosity, "Increase diagnostic output on stderr");
  app.add_option("--threads", threads, "Worker threads (1 guarantees bit-determinism)")
      ->envname("MN_THREADS")
      ->check(CLI::Range(1u, 1024u));

  GenerateOptions gen;
  mnet_synthetic_config_default(&gen.config);
  auto* generate = app.add_subcommand("generate", "Write a synthetic embedding corpus and split manifest");
  generate->add_option("--seed", gen.config.seed, "Random seed");
  generate->add_option("--identities", gen.config.num_identities, "Number of identities")
      ->check(CLI::Range(1u, 1u << 24));
  generate->add_option("--sets-per-identity", gen.config.sets_per_identity, "Templates per identity")
      ->check(CLI::Range(1u, 1u << 20));
  generate->add_option("--set-size-min", gen.config.set_size_min, "Smallest template size")
      ->check(CLI::Range(1u, 1u << 20));
  generate->add_option("--set-size-max", gen.config.set_size_max, "Largest template size")
      ->check(CLI::Range(1u, 1u << 20));
  generate->add_option("--dim", gen.config.dim, "Embedding dimension")->check(CLI::Range(1u, 1u << 20));
  generate->add_option("--prototype-norm", gen.config.prototype_norm, "Identity prototype length")
      ->check(CLI::PositiveNumber);
  generate->add_option("--sigma-clean", gen.config.noise_sigma_clean, "Noise sigma of clean members")
      ->check(CLI::PositiveNumber);
  generate->add_option("--sigma-aberrant", gen.config.noise_sigma_aberrant, "Noise sigma of aberrant members")
      ->check(CLI::PositiveNumber);
  generate->add_option("--aberrant-fraction", gen.config.aberrant_fraction, "Probability a member is aberrant")
      ->check(CLI::Range(0.0, 1.0));
  generate->add_option("--degradation-strength", gen.config.degradation_strength,
                       "Shared degradation offset of aberrant members, in units of sigma*sqrt(D)")
      ->check(CLI::NonNegativeNumber);
  generate->add_option("--content-rank", gen.config.content_subspace_rank, "Rank of the shared pose subspace")
      ->check(CLI::Range(1u, 1u << 20));
  generate->add_option("--content-fraction", gen.config.content_fraction,
                       "Probability a clean member carries a pose offset")
      ->check(CLI::Range(0.0, 1.0));
  generate->add_option("--content-strength", gen.config.content_strength, "Pose offset length")
      ->check(CLI::NonNegativeNumber);
  generate->add_option("--test-fraction", gen.config.test_fraction, "Fraction of identities held out for test")
      ->check(CLI::Range(0.0, 1.0));
  generate->add_option("-o,--out", gen.out, "Corpus output path (manifest goes to <basename>.json)")
      ->required();
  generate->add_flag("--json", gen.json, "Print the summary as JSON");

  TrainOptions tr;
  mnet_train_config_default(&tr.config);
  auto* train = app.add_subcommand("train", "Train the aggregation head with set-wise classification");
  train->add_option("-c,--corpus", tr.corpus, "Corpus file")->required()->check(CLI::ExistingFile);
  train->add_option("--mode", tr.mode, "Head variant")->check(CLI::IsMember({"mn-v", "mn-vc"}));
  train->add_option("--epochs", tr.config.max_epochs, "Maximum epochs")->check(CLI::Range(0u, 1u << 20));
  train->add_option("--set-size", tr.config.set_size, "Members per training set")
      ->check(CLI::Range(1u, 1u << 16));
  train->add_option("--batch-size", tr.config.batch_size, "Sets per SGD step")->check(CLI::Range(1u, 1u << 24));
  train->add_option("--sets-per-identity", tr.config.sets_per_identity, "Sets per identity per epoch")
      ->check(CLI::Range(1u, 1u << 24));
  train->add_option("--lr", tr.config.lr_initial, "Initial learning rate")->check(CLI::NonNegativeNumber);
  train->add_option("--lr-decay", tr.config.lr_decay_factor, "Learning-rate divisor on plateau")
      ->check(CLI::Range(1.0, 1e12));
  train->add_option("--patience", tr.config.plateau_patience, "Plateau patience in epochs")
      ->check(CLI::Range(1u, 1u << 20));
  train->add_option("--weight-decay", tr.config.weight_decay, "L2 weight decay")->check(CLI::NonNegativeNumber);
  train->add_option("--seed", tr.config.seed, "Random seed");
  train->add_flag("--no-gate-bias", tr.no_gate_bias, "Disable the gate bias terms");
  train->add_option("-o,--out", tr.out, "Checkpoint output path")->required();

  EvalOptions ev;
  auto* eval = app.add_subcommand("eval", "1:1 verification on the test split");
  eval->add_option("-c,--corpus", ev.corpus, "Corpus file")->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint for the gated modes")->check(CLI::ExistingFile);
  eval->add_option("--checkpoint-mn-v", ev.checkpoint_mn_v, "Checkpoint used for mn-v only")
      ->check(CLI::ExistingFile);
  eval->add_option("--checkpoint-mn-vc", ev.checkpoint_mn_vc, "Checkpoint used for mn-vc only")
      ->check(CLI::ExistingFile);
  eval->add_option("--modes", ev.modes, "Comma-separated subset of avg,mn-v,mn-vc")
      ->delimiter(',')
      ->check(CLI::IsMember({"avg", "mn-v", "mn-vc"}));
  eval->add_option("--pairs", ev.pairs, "Pair protocol")->check(CLI::IsMember({"all", "sampled"}));
  eval->add_option("--impostors-per-genuine", ev.impostors_per_genuine, "Impostors drawn per genuine pair (sampled)")
      ->check(CLI::Range(1u, 1u << 20));
  eval->add_option("--pair-seed", ev.pair_seed, "Seed of the sampled pair protocol");
  eval->add_option("-o,--out", ev.out, "Report prefix: writes <prefix>.<mode>.json and .csv");
  eval->add_flag("--json", ev.json, "Print the report table as JSON");

  InspectOptions in;
  auto* inspect = app.add_subcommand("inspect", "Per-member quality scores of one template");
  inspect->add_option("-c,--corpus", in.corpus, "Corpus file")->required()->check(CLI::ExistingFile);
  inspect->add_option("--checkpoint", in.checkpoint, "Checkpoint (not needed for avg)")->check(CLI::ExistingFile);
  inspect->add_option("--template", in.template_id, "Template id")->check(CLI::Range(int64_t{0}, int64_t{UINT32_MAX}));
  inspect->add_option("--mode", in.mode, "Aggregation mode")->check(CLI::IsMember({"avg", "mn-v", "mn-vc"}));
  inspect->add_flag("--summary", in.summary, "Mean alpha/quality rank correlation over the test split");
  inspect->add_flag("--json", in.json, "Print JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (generate->parsed()) {
    if (gen.config.set_size_max < gen.config.set_size_min) {
      std::fprintf(stderr, "error: --set-size-max must be >= --set-size-min\n");
      return kExitUsage;
    }
    return run_generate(gen, verbosity);
  }
  if (train->parsed()) {
    tr.config.threads = threads;
    return run_train(tr, verbosity);
  }
  if (eval->parsed()) {
    const bool gated = std::any_of(ev.modes.begin(), ev.modes.end(), [](const std::string& m) { return m != "avg"; });
    if (gated && ev.checkpoint.empty() &&
        (ev.checkpoint_mn_v.empty() || ev.checkpoint_mn_vc.empty())) {
      const bool need_v = std::count(ev.modes.begin(), ev.modes.end(), "mn-v") && ev.checkpoint_mn_v.empty();
      const bool need_vc = std::count(ev.modes.begin(), ev.modes.end(), "mn-vc") && ev.checkpoint_mn_vc.empty();
      if (need_v || need_vc) {
        std::fprintf(stderr, "error: gated modes need --checkpoint (or --checkpoint-mn-v / --checkpoint-mn-vc)\n");
        return kExitUsage;
      }
    }
    return run_eval(ev, threads);
  }
  if (inspect->parsed()) {
    if (in.mode != "avg" && in.checkpoint.empty()) {
      std::fprintf(stderr, "error: --checkpoint is required for mode %s\n", in.mode.c_str());
      return kExitUsage;
    }
    return run_inspect(in);
  }
  return kExitUsage;
}
