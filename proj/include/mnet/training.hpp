// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mnet/aggregator.hpp"
#include "mnet/data.hpp"
#include "mnet/numerics.hpp"

namespace mnet {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::string_view bytes);
std::string to_hex(const Digest& digest);

struct TrainConfig {
  Mode mode = Mode::MnVc;
  std::size_t set_size = 3;
  std::size_t batch_size = 256;
  // Sets drawn per training identity in one epoch.
  std::size_t sets_per_identity = 1024;
  double lr_initial = 0.1;
  double lr_decay_factor = 10.0;
  std::uint32_t plateau_patience = 3;
  std::uint32_t max_epochs = 60;
  double weight_decay = 0.0;
  std::uint64_t seed = 1;
  bool gate_bias = true;
  // Worker count for per-set forward/backward. Results do not depend on it.
  unsigned threads = 1;

  void validate() const;
  // Stable text form of every field that influences the result.
  std::string canonical_json() const;
};

// Minimum epoch-loss improvement that resets the plateau counter.
constexpr double kPlateauThreshold = 1e-4;
// The learning rate is decayed at most this many times.
constexpr int kMaxDecays = 2;

/// Step decay on plateau: after `patience` consecutive epochs without an
/// improvement of more than kPlateauThreshold over the best epoch loss, the
/// rate is divided by `factor`. Once kMaxDecays decays have happened, the
/// next plateau ends training.
class PlateauSchedule {
 public:
  PlateauSchedule(double lr, double factor, std::uint32_t patience)
      : lr_(lr), factor_(factor), patience_(patience) {}

  // Records one epoch loss. Returns false when training should stop.
  bool observe(double epoch_loss);
  double lr() const noexcept { return lr_; }
  int decays() const noexcept { return decays_; }

 private:
  double lr_;
  double factor_;
  std::uint32_t patience_;
  double best_ = std::numeric_limits<double>::infinity();
  std::uint32_t stale_ = 0;
  int decays_ = 0;
};

struct Checkpoint {
  GateParams params;
  Mode mode = Mode::MnVc;
  std::uint32_t epoch = 0;
  std::vector<double> loss_history;
  Digest config_hash{};
};

bool operator==(const Checkpoint& a, const Checkpoint& b);

// "MNCKPT01" binary layout, see README.
std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Zero gates (the averaging baseline) and a N(0, 2/D) classifier.
GateParams init_params(std::size_t dim, std::size_t classes, Rng& rng, bool gate_bias);

struct SetLossResult {
  double loss = 0.0;
  AggregationGradients gates;
  Vec d_classifier;  // row-major C x D

  // Gradient in GateParams::flatten() order.
  Vec flat_gradient() const;
  // Adds the gradient, in the same order, to `flat`.
  void accumulate_into(std::span<double> flat) const;
};

/// Softmax cross-entropy of classifier * v_d against `set.identity`, which
/// must already be a class index in [0, C).
SetLossResult set_loss(const FaceSet& set, const GateParams& params, Mode mode);

struct EpochStats {
  std::uint32_t epoch = 0;  // 1-based
  double loss = 0.0;        // mean set loss over the epoch
  double lr = 0.0;          // learning rate used during the epoch
};

/// Set-wise classification training of the head on frozen embeddings.
///
/// Uses the corpus' train split. Gradients are averaged over each batch and
/// reduced in set order, so the result is bit-identical for any thread count.
/// Throws DivergenceError when a batch loss is non-finite.
Checkpoint train(const Corpus& corpus, const TrainConfig& config,
                 const std::function<void(const EpochStats&)>& on_epoch = {});

}  // namespace mnet
