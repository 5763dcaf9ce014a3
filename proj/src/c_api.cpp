// SPDX-License-Identifier: Apache-2.0
#include "mnet/mnet.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "mnet/data.hpp"
#include "mnet/errors.hpp"
#include "mnet/evaluation.hpp"
#include "mnet/training.hpp"

struct mnet_corpus {
  mnet::Corpus corpus;
};

struct mnet_model {
  mnet::Checkpoint checkpoint;
};

struct mnet_evaluation {
  std::vector<mnet::ModeCurve> curves;
  std::vector<mnet::EvalReport> reports;
};

namespace {

thread_local std::string g_last_error;

mnet_status fail(mnet_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename Fn>
mnet_status guarded(Fn&& fn) {
  try {
    fn();
    return MNET_OK;
  } catch (const mnet::ConfigError& e) {
    return fail(MNET_ERR_CONFIG, e.what());
  } catch (const mnet::DegenerateError& e) {
    return fail(MNET_ERR_DEGENERATE, e.what());
  } catch (const mnet::UsageError& e) {
    return fail(MNET_ERR_USAGE, e.what());
  } catch (const mnet::ProtocolError& e) {
    return fail(MNET_ERR_PROTOCOL, e.what());
  } catch (const mnet::IoError& e) {
    return fail(MNET_ERR_IO, e.what());
  } catch (const mnet::ParseError& e) {
    return fail(MNET_ERR_PARSE, e.what());
  } catch (const mnet::OracleError& e) {
    return fail(MNET_ERR_ORACLE, e.what());
  } catch (const mnet::DivergenceError& e) {
    return fail(MNET_ERR_DIVERGED, e.what());
  } catch (const std::bad_alloc&) {
    return fail(MNET_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(MNET_ERR_INTERNAL, e.what());
  }
}

void require(const void* p, const char* what) {
  if (!p) throw mnet::UsageError(std::string(what) + " must not be NULL");
}

mnet::Mode to_mode(mnet_mode m) {
  switch (m) {
    case MNET_MODE_AVG: return mnet::Mode::Avg;
    case MNET_MODE_MN_V: return mnet::Mode::MnV;
    case MNET_MODE_MN_VC: return mnet::Mode::MnVc;
  }
  throw mnet::ConfigError("unknown mode value " + std::to_string(static_cast<int>(m)));
}

mnet_mode from_mode(mnet::Mode m) { return static_cast<mnet_mode>(static_cast<int>(m)); }

void copy_hash(const std::string& hex, char (&out)[65]) {
  std::memset(out, 0, sizeof(out));
  std::memcpy(out, hex.data(), std::min<std::size_t>(hex.size(), 64));
}

// Parameters used for a mode: AVG needs none, gated modes need a model.
const mnet::GateParams& params_for(mnet::Mode mode, const mnet_model* model,
                                   const mnet::GateParams& fallback) {
  if (model) return model->checkpoint.params;
  if (mode == mnet::Mode::Avg) return fallback;
  throw mnet::UsageError(std::string("mode ") + std::string(mnet::mode_name(mode)) +
                         " requires a checkpoint");
}

}  // namespace

extern "C" {

const char* mnet_last_error(void) { return g_last_error.c_str(); }

const char* mnet_status_string(mnet_status status) {
  switch (status) {
    case MNET_OK: return "ok";
    case MNET_ERR_CONFIG: return "configuration error";
    case MNET_ERR_DEGENERATE: return "degenerate input";
    case MNET_ERR_USAGE: return "usage error";
    case MNET_ERR_PROTOCOL: return "protocol error";
    case MNET_ERR_IO: return "i/o error";
    case MNET_ERR_PARSE: return "parse error";
    case MNET_ERR_ORACLE: return "oracle failure";
    case MNET_ERR_DIVERGED: return "training diverged";
    case MNET_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* mnet_mode_name(mnet_mode mode) {
  switch (mode) {
    case MNET_MODE_AVG: return "avg";
    case MNET_MODE_MN_V: return "mn-v";
    case MNET_MODE_MN_VC: return "mn-vc";
  }
  return "unknown";
}

mnet_status mnet_mode_parse(const char* name, mnet_mode* out) {
  return guarded([&] {
    require(name, "name");
    require(out, "out");
    *out = from_mode(mnet::parse_mode(name));
  });
}

void mnet_synthetic_config_default(mnet_synthetic_config* config) {
  if (!config) return;
  const mnet::SyntheticConfig d;
  *config = {d.num_identities,      d.sets_per_identity,    d.set_size_min,
             d.set_size_max,        d.dim,                  d.prototype_norm,
             d.noise_sigma_clean,   d.noise_sigma_aberrant, d.aberrant_fraction,
             d.degradation_strength, d.content_subspace_rank, d.content_fraction,
             d.content_strength,    d.test_fraction,        d.seed};
}

mnet_status mnet_corpus_generate(const mnet_synthetic_config* config, mnet_corpus** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    mnet::SyntheticConfig c;
    c.num_identities = config->num_identities;
    c.sets_per_identity = config->sets_per_identity;
    c.set_size_min = config->set_size_min;
    c.set_size_max = config->set_size_max;
    c.dim = config->dim;
    c.prototype_norm = config->prototype_norm;
    c.noise_sigma_clean = config->noise_sigma_clean;
    c.noise_sigma_aberrant = config->noise_sigma_aberrant;
    c.aberrant_fraction = config->aberrant_fraction;
    c.degradation_strength = config->degradation_strength;
    c.content_subspace_rank = config->content_subspace_rank;
    c.content_fraction = config->content_fraction;
    c.content_strength = config->content_strength;
    c.test_fraction = config->test_fraction;
    c.seed = config->seed;
    *out = new mnet_corpus{mnet::generate_synthetic(c)};
  });
}

mnet_status mnet_corpus_read(const char* path, mnet_corpus** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new mnet_corpus{mnet::read_corpus(path)};
  });
}

mnet_status mnet_corpus_write(const mnet_corpus* corpus, const char* path) {
  return guarded([&] {
    require(corpus, "corpus");
    require(path, "path");
    mnet::write_corpus(corpus->corpus, path);
  });
}

void mnet_corpus_free(mnet_corpus* corpus) { delete corpus; }

mnet_status mnet_corpus_summary_get(const mnet_corpus* corpus, mnet_corpus_summary* out) {
  return guarded([&] {
    require(corpus, "corpus");
    require(out, "out");
    const auto& c = corpus->corpus;
    mnet_corpus_summary s{};
    s.dim = c.dim();
    s.records = c.size();
    s.templates = c.template_count();
    s.identities = c.identities().size();
    s.has_split = c.split.has_value();
    if (c.split) {
      s.train_identities = c.split->train_identities.size();
      s.test_identities = c.split->test_identities.size();
    }
    for (const auto& r : c.records()) {
      if (!r.has_quality()) continue;
      ++s.records_with_quality;
      if (r.quality_truth == mnet::kQualityAberrant) ++s.aberrant_records;
    }
    *out = s;
  });
}

void mnet_train_config_default(mnet_train_config* config) {
  if (!config) return;
  const mnet::TrainConfig d;
  *config = {from_mode(d.mode),
             static_cast<uint32_t>(d.set_size),
             static_cast<uint32_t>(d.batch_size),
             static_cast<uint32_t>(d.sets_per_identity),
             d.lr_initial,
             d.lr_decay_factor,
             d.plateau_patience,
             d.max_epochs,
             d.weight_decay,
             d.seed,
             d.gate_bias ? 1 : 0,
             d.threads};
}

mnet_status mnet_train(const mnet_corpus* corpus, const mnet_train_config* config,
                       mnet_epoch_callback callback, void* user, mnet_model** out) {
  return guarded([&] {
    require(corpus, "corpus");
    require(config, "config");
    require(out, "out");
    mnet::TrainConfig c;
    c.mode = to_mode(config->mode);
    c.set_size = config->set_size;
    c.batch_size = config->batch_size;
    c.sets_per_identity = config->sets_per_identity;
    c.lr_initial = config->lr_initial;
    c.lr_decay_factor = config->lr_decay_factor;
    c.plateau_patience = config->plateau_patience;
    c.max_epochs = config->max_epochs;
    c.weight_decay = config->weight_decay;
    c.seed = config->seed;
    c.gate_bias = config->gate_bias != 0;
    c.threads = config->threads;
    auto ck = mnet::train(corpus->corpus, c, [&](const mnet::EpochStats& s) {
      if (callback) callback(s.epoch, s.loss, s.lr, user);
    });
    *out = new mnet_model{std::move(ck)};
  });
}

mnet_status mnet_model_init(uint32_t dim, uint32_t classes, uint64_t seed, int gate_bias,
                            mnet_mode mode, mnet_model** out) {
  return guarded([&] {
    require(out, "out");
    mnet::Rng rng(seed);
    mnet::Checkpoint ck;
    ck.mode = to_mode(mode);
    ck.params = mnet::init_params(dim, classes, rng, gate_bias != 0);
    *out = new mnet_model{std::move(ck)};
  });
}

mnet_status mnet_model_load(const char* path, mnet_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new mnet_model{mnet::load_checkpoint(path)};
  });
}

mnet_status mnet_model_save(const mnet_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    mnet::save_checkpoint(model->checkpoint, path);
  });
}

void mnet_model_free(mnet_model* model) { delete model; }

mnet_status mnet_model_info_get(const mnet_model* model, mnet_model_info* out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    const auto& ck = model->checkpoint;
    mnet_model_info info{};
    info.dim = static_cast<uint32_t>(ck.params.dim);
    info.classes = static_cast<uint32_t>(ck.params.classes);
    info.gate_bias = ck.params.gate_bias ? 1 : 0;
    info.mode = from_mode(ck.mode);
    info.epoch = ck.epoch;
    info.gate_parameters = ck.params.gate_parameter_count();
    copy_hash(mnet::to_hex(ck.config_hash), info.config_hash);
    *out = info;
  });
}

double mnet_report_far(size_t index) {
  return index < mnet::kReportFars.size() ? mnet::kReportFars[index] : 0.0;
}

void mnet_eval_config_default(mnet_eval_config* config) {
  if (!config) return;
  *config = mnet_eval_config{};
  config->impostors_per_genuine = 10;
  config->pair_seed = 1;
  config->threads = 1;
}

mnet_status mnet_evaluate(const mnet_corpus* corpus, const mnet_eval_config* config,
                          mnet_evaluation** out) {
  return guarded([&] {
    require(corpus, "corpus");
    require(config, "config");
    require(out, "out");
    if (config->mode_count == 0) throw mnet::UsageError("no evaluation modes requested");
    require(config->modes, "modes");
    const auto& c = corpus->corpus;

    mnet::PairProtocol protocol;
    if (config->sampled_pairs) {
      protocol.kind = mnet::PairProtocol::Kind::Sampled;
      protocol.impostors_per_genuine = config->impostors_per_genuine;
      protocol.seed = config->pair_seed;
    }
    const auto templates = mnet::assemble_templates(c, mnet::Split::Test);
    const auto pairs = mnet::build_pairs(templates, protocol);
    const auto corpus_hash = mnet::to_hex(mnet::sha256(mnet::encode_corpus(c)));
    const auto unused = mnet::GateParams::zeros(c.dim(), 0, false);
    const unsigned threads = std::max<uint32_t>(config->threads, 1);

    auto result = std::make_unique<mnet_evaluation>();
    for (std::size_t k = 0; k < config->mode_count; ++k) {
      const auto mode = to_mode(config->modes[k]);
      const mnet_model* model = mode == mnet::Mode::MnV    ? config->model_mn_v
                                : mode == mnet::Mode::MnVc ? config->model_mn_vc
                                                           : nullptr;
      const auto& params = params_for(mode, model, unused);
      if (params.dim != c.dim()) {
        throw mnet::ConfigError("checkpoint dimension " + std::to_string(params.dim) +
                                " does not match corpus dimension " + std::to_string(c.dim()));
      }
      auto scores = mnet::score_pairs(pairs, templates, params, mode, threads);
      mnet::ModeCurve mc;
      mc.mode = mode;
      mc.excluded = scores.excluded;
      mc.curve = mnet::roc(std::move(scores.genuine), std::move(scores.impostor));
      const std::string model_hash =
          model ? mnet::to_hex(mnet::sha256(mnet::encode_checkpoint(model->checkpoint))) : "none";
      mc.config_hash = mnet::to_hex(mnet::sha256(corpus_hash + "\n" + protocol.describe() + "\n" +
                                                 std::string(mnet::mode_name(mode)) + "\n" + model_hash));
      result->reports.push_back(mnet::make_report(mode, mc.curve, mc.excluded, mc.config_hash));
      result->curves.push_back(std::move(mc));
    }
    *out = result.release();
  });
}

size_t mnet_evaluation_count(const mnet_evaluation* evaluation) {
  return evaluation ? evaluation->reports.size() : 0;
}

mnet_status mnet_evaluation_row(const mnet_evaluation* evaluation, size_t index,
                                mnet_report_row* out) {
  return guarded([&] {
    require(evaluation, "evaluation");
    require(out, "out");
    if (index >= evaluation->reports.size()) throw mnet::UsageError("report index out of range");
    const auto& r = evaluation->reports[index];
    mnet_report_row row{};
    row.mode = from_mode(r.mode);
    for (std::size_t k = 0; k < MNET_REPORT_FAR_COUNT; ++k) {
      row.tar[k] = r.tar_at_far[k].tar;
      row.flagged[k] = r.tar_at_far[k].flagged ? 1 : 0;
    }
    row.n_genuine = r.n_genuine;
    row.n_impostor = r.n_impostor;
    row.excluded_pairs = r.excluded_pairs;
    copy_hash(r.config_hash, row.config_hash);
    *out = row;
  });
}

mnet_status mnet_evaluation_write(const mnet_evaluation* evaluation, const char* prefix) {
  return guarded([&] {
    require(evaluation, "evaluation");
    require(prefix, "prefix");
    mnet::emit_report(evaluation->curves, prefix);
  });
}

void mnet_evaluation_free(mnet_evaluation* evaluation) { delete evaluation; }

mnet_status mnet_inspect(const mnet_corpus* corpus, const mnet_model* model, uint32_t template_id,
                         mnet_mode mode, mnet_member_quality* rows, size_t capacity, size_t* count) {
  return guarded([&] {
    require(corpus, "corpus");
    require(count, "count");
    const auto m = to_mode(mode);
    const auto unused = mnet::GateParams::zeros(corpus->corpus.dim(), 0, false);
    const auto& params = params_for(m, model, unused);
    const auto result = mnet::inspect_template(corpus->corpus, template_id, params, m);
    *count = result.size();
    if (!rows) return;
    if (capacity < result.size()) throw mnet::UsageError("row buffer too small");
    for (std::size_t i = 0; i < result.size(); ++i) {
      const auto& q = result[i];
      rows[i] = {q.media_id, q.alpha, q.beta, q.gamma, std::isnan(q.quality_truth) ? 0 : 1,
                 q.quality_truth};
    }
  });
}

mnet_status mnet_quality_correlation(const mnet_corpus* corpus, const mnet_model* model,
                                     mnet_mode mode, double* mean, uint64_t* sets_used) {
  return guarded([&] {
    require(corpus, "corpus");
    require(mean, "mean");
    const auto m = to_mode(mode);
    const auto unused = mnet::GateParams::zeros(corpus->corpus.dim(), 0, false);
    const auto& params = params_for(m, model, unused);
    const auto templates = mnet::assemble_templates(corpus->corpus, mnet::Split::Test);
    const auto corr = mnet::alpha_quality_correlation(corpus->corpus, templates, params, m);
    *mean = corr.mean;
    if (sets_used) *sets_used = corr.sets_used;
  });
}

}  // extern "C"
