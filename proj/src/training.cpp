// SPDX-License-Identifier: Apache-2.0
#include "mnet/training.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"
#include "mnet/errors.hpp"
#include "mnet/parallel.hpp"

namespace mnet {

namespace {

constexpr char kCheckpointMagic[8] = {'M', 'N', 'C', 'K', 'P', 'T', '0', '1'};

template <typename T>
void put_raw(std::string& out, T value) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    if (bytes_.size() - at_ < sizeof(T)) {
      throw ParseError(ParseError::Kind::Truncated, std::string("checkpoint: truncated ") + what, at_);
    }
    T value;
    std::memcpy(&value, bytes_.data() + at_, sizeof(T));
    at_ += sizeof(T);
    return value;
  }
  std::size_t offset() const { return at_; }
  std::size_t remaining() const { return bytes_.size() - at_; }

 private:
  std::string_view bytes_;
  std::size_t at_ = 0;
};

double squared_norm(std::span<const double> v) { return dot(v, v); }

}  // namespace

Digest sha256(std::string_view bytes) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != out.size()) {
    throw Error("sha256: digest computation failed");
  }
  return out;
}

std::string to_hex(const Digest& digest) {
  static const char* kHex = "0123456789abcdef";
  std::string s;
  for (auto b : digest) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 0xf]);
  }
  return s;
}

void TrainConfig::validate() const {
  if (mode == Mode::Avg) throw ConfigError("training requires mode mn-v or mn-vc");
  if (set_size < 1) throw ConfigError("set_size must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (sets_per_identity < 1) throw ConfigError("sets_per_identity must be >= 1");
  if (!(lr_initial >= 0.0) || !std::isfinite(lr_initial)) throw ConfigError("lr_initial must be >= 0");
  if (!(lr_decay_factor >= 1.0)) throw ConfigError("lr_decay_factor must be >= 1");
  if (plateau_patience < 1) throw ConfigError("plateau_patience must be >= 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

std::string TrainConfig::canonical_json() const {
  nlohmann::ordered_json j;
  j["mode"] = std::string(mode_name(mode));
  j["set_size"] = set_size;
  j["batch_size"] = batch_size;
  j["sets_per_identity"] = sets_per_identity;
  j["lr_initial"] = lr_initial;
  j["lr_decay_factor"] = lr_decay_factor;
  j["plateau_patience"] = plateau_patience;
  j["max_epochs"] = max_epochs;
  j["weight_decay"] = weight_decay;
  j["seed"] = seed;
  j["gate_bias"] = gate_bias;
  return j.dump();
}

bool operator==(const Checkpoint& a, const Checkpoint& b) {
  return encode_checkpoint(a) == encode_checkpoint(b);
}

std::string encode_checkpoint(const Checkpoint& ck) {
  ck.params.validate();
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  out.append(reinterpret_cast<const char*>(ck.config_hash.data()), ck.config_hash.size());
  put_raw<std::uint32_t>(out, ck.epoch);
  put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(ck.params.dim));
  put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(ck.params.classes));
  const std::uint32_t flags = (ck.params.gate_bias ? 1u : 0u) | (static_cast<std::uint32_t>(ck.mode) << 8);
  put_raw<std::uint32_t>(out, flags);
  for (double x : ck.params.flatten()) put_raw(out, x);
  put_raw<std::uint32_t>(out, static_cast<std::uint32_t>(ck.loss_history.size()));
  for (double x : ck.loss_history) put_raw(out, x);
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  using Kind = ParseError::Kind;
  if (bytes.size() < sizeof(kCheckpointMagic) ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw ParseError(Kind::BadMagic, "checkpoint: magic mismatch, expected MNCKPT01", 0);
  }
  Reader in(bytes.substr(0));
  for (std::size_t i = 0; i < sizeof(kCheckpointMagic); ++i) in.get<char>("magic");
  Checkpoint ck;
  for (auto& b : ck.config_hash) b = in.get<std::uint8_t>("config hash");
  ck.epoch = in.get<std::uint32_t>("epoch");
  const auto dim_at = in.offset();
  const auto dim = in.get<std::uint32_t>("dimension");
  const auto classes = in.get<std::uint32_t>("class count");
  if (dim == 0 || dim > (1u << 20) || classes > (1u << 20)) {
    throw ParseError(Kind::BadDimension, "checkpoint: implausible dimensions", dim_at);
  }
  const auto flags_at = in.offset();
  const auto flags = in.get<std::uint32_t>("flags");
  const auto mode_bits = (flags >> 8) & 0xff;
  if ((flags & ~0xff01u) != 0 || mode_bits > 2) {
    throw ParseError(Kind::Inconsistent, "checkpoint: unknown flag bits", flags_at);
  }
  ck.mode = static_cast<Mode>(mode_bits);
  ck.params = GateParams::zeros(dim, classes, (flags & 1u) != 0);
  Vec flat(ck.params.flat_size());
  for (double& x : flat) {
    const auto at = in.offset();
    x = in.get<double>("parameters");
    if (!std::isfinite(x)) throw ParseError(Kind::NonFinite, "checkpoint: non-finite parameter", at);
  }
  ck.params.assign_flat(flat);
  const auto count = in.get<std::uint32_t>("history length");
  if (in.remaining() != 8ull * count) {
    throw ParseError(Kind::Truncated, "checkpoint: loss history length does not match file size",
                     in.offset());
  }
  ck.loss_history.resize(count);
  for (double& x : ck.loss_history) x = in.get<double>("loss history");
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

GateParams init_params(std::size_t dim, std::size_t classes, Rng& rng, bool gate_bias) {
  if (dim < 1 || classes < 1) throw ConfigError("init_params: D and C must be >= 1");
  GateParams p = GateParams::zeros(dim, classes, gate_bias);
  const double stddev = std::sqrt(2.0 / static_cast<double>(dim));
  for (double& w : p.classifier) w = rng.normal(0.0, stddev);
  return p;
}

Vec SetLossResult::flat_gradient() const {
  Vec flat(3 * gates.d_theta2.size() + 2 + d_classifier.size(), 0.0);
  accumulate_into(flat);
  return flat;
}

void SetLossResult::accumulate_into(std::span<double> flat) const {
  const std::size_t d = gates.d_theta2.size();
  if (flat.size() != 3 * d + 2 + d_classifier.size()) {
    throw ConfigError("gradient accumulator has the wrong size");
  }
  axpy(1.0, gates.d_theta2, flat.subspan(0, d));
  flat[d] += gates.d_bias2;
  axpy(1.0, gates.d_theta3, flat.subspan(d + 1, 2 * d));
  flat[3 * d + 1] += gates.d_bias3;
  axpy(1.0, d_classifier, flat.subspan(3 * d + 2));
}

SetLossResult set_loss(const FaceSet& set, const GateParams& params, Mode mode) {
  params.validate();
  if (set.identity >= params.classes) {
    throw ProtocolError("set label " + std::to_string(set.identity) + " outside [0, " +
                        std::to_string(params.classes) + ")");
  }
  const auto fwd = aggregate(set, params, mode);
  const std::size_t d = params.dim;
  Vec logits(params.classes);
  for (std::size_t c = 0; c < params.classes; ++c) logits[c] = dot(params.classifier_row(c), fwd.v_d);
  auto ce = softmax_cross_entropy(logits, set.identity);

  SetLossResult out;
  out.loss = ce.loss;
  out.d_classifier.assign(params.classes * d, 0.0);
  Vec d_vd(d, 0.0);
  for (std::size_t c = 0; c < params.classes; ++c) {
    axpy(ce.grad[c], fwd.v_d, std::span<double>(out.d_classifier).subspan(c * d, d));
    axpy(ce.grad[c], params.classifier_row(c), d_vd);
  }
  out.gates = aggregate_backward(set, params, fwd, d_vd);
  return out;
}

bool PlateauSchedule::observe(double epoch_loss) {
  if (epoch_loss < best_ - kPlateauThreshold) {
    best_ = epoch_loss;
    stale_ = 0;
    return true;
  }
  if (++stale_ < patience_) return true;
  if (decays_ == kMaxDecays) return false;
  lr_ /= factor_;
  ++decays_;
  stale_ = 0;
  return true;
}

Checkpoint train(const Corpus& corpus, const TrainConfig& config,
                 const std::function<void(const EpochStats&)>& on_epoch) {
  config.validate();
  if (!corpus.split) throw ProtocolError("training requires a corpus split manifest");
  check_split_disjoint(*corpus.split);
  const auto& train_ids = corpus.split->train_identities;
  if (train_ids.size() < 2) throw ProtocolError("training needs at least 2 train identities");

  std::map<std::uint32_t, std::uint32_t> class_of;
  for (std::size_t c = 0; c < train_ids.size(); ++c) {
    class_of[train_ids[c]] = static_cast<std::uint32_t>(c);
  }

  Rng rng(config.seed);
  Rng init_rng = rng.split();
  Rng sample_rng = rng.split();

  Checkpoint ck;
  ck.mode = config.mode;
  ck.params = init_params(corpus.dim(), train_ids.size(), init_rng, config.gate_bias);
  ck.config_hash = sha256(config.canonical_json() + "\n" + to_hex(sha256(encode_corpus(corpus))));

  const std::size_t flat_size = ck.params.flat_size();
  const std::size_t bias2_index = ck.params.dim;
  const std::size_t bias3_index = 3 * ck.params.dim + 1;

  PlateauSchedule schedule(config.lr_initial, config.lr_decay_factor, config.plateau_patience);

  for (std::uint32_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    auto sets = assemble_training_sets(corpus, train_ids, config.set_size,
                                       config.sets_per_identity * train_ids.size(), sample_rng);
    for (auto& s : sets) s.identity = class_of.at(s.identity);

    const double lr = schedule.lr();
    double epoch_loss = 0.0;
    std::vector<SetLossResult> results;
    for (std::size_t begin = 0; begin < sets.size(); begin += config.batch_size) {
      const std::size_t end = std::min(sets.size(), begin + config.batch_size);
      auto diverged = [&](std::string_view what) {
        std::ostringstream msg;
        msg << "training diverged (" << what << "): epoch " << epoch << ", batch starting at set "
            << begin << ", lr " << lr << ", |theta2|^2 " << squared_norm(ck.params.theta2)
            << ", |theta3|^2 " << squared_norm(ck.params.theta3) << ", |classifier|^2 "
            << squared_norm(ck.params.classifier);
        return DivergenceError(msg.str());
      };
      results.assign(end - begin, {});
      try {
        parallel_for(end - begin, config.threads,
                     [&](std::size_t i) { results[i] = set_loss(sets[begin + i], ck.params, config.mode); });
      } catch (const DegenerateError& e) {
        throw diverged(e.what());
      }

      Vec grad(flat_size, 0.0);
      double batch_loss = 0.0;
      for (const auto& r : results) {
        batch_loss += r.loss;
        r.accumulate_into(grad);
      }
      if (!std::isfinite(batch_loss)) throw diverged("non-finite loss");
      epoch_loss += batch_loss;

      const double scale = 1.0 / static_cast<double>(results.size());
      Vec flat = ck.params.flatten();
      for (std::size_t k = 0; k < flat_size; ++k) {
        double g = grad[k] * scale;
        const bool is_bias = k == bias2_index || k == bias3_index;
        if (is_bias && !config.gate_bias) continue;
        if (!is_bias) g += config.weight_decay * flat[k];
        flat[k] -= lr * g;
      }
      ck.params.assign_flat(flat);
    }
    epoch_loss /= static_cast<double>(sets.size());
    ck.loss_history.push_back(epoch_loss);
    ck.epoch = epoch;
    if (on_epoch) on_epoch({epoch, epoch_loss, lr});
    if (!schedule.observe(epoch_loss)) break;
  }
  return ck;
}

}  // namespace mnet
