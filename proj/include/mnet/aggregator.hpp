// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "mnet/numerics.hpp"

namespace mnet {

enum class Mode : std::uint8_t { Avg = 0, MnV = 1, MnVc = 2 };

std::string_view mode_name(Mode mode);  // "avg", "mn-v", "mn-vc"
Mode parse_mode(std::string_view name);  // throws ConfigError

// Guard on the weight denominators of every weighted average.
constexpr double kDenominatorEpsilon = 1e-30;

/// Variable-size set of embeddings of one subject.
struct FaceSet {
  std::vector<Vec> members;
  std::uint32_t identity = 0;

  std::size_t size() const noexcept { return members.size(); }
  std::size_t dim() const noexcept { return members.empty() ? 0 : members.front().size(); }
  // Throws ConfigError unless n >= 1, dimensions agree and values are finite.
  void validate() const;
};

/// Learnable head.
///
/// The visual gate scores each member on its own descriptor. The content
/// gate scores the concatenation [mean face : member], so `theta3` holds the
/// mean-face weights in [0, D) followed by the member weights in [D, 2D).
/// Biases exist in storage always but are only read and trained when
/// `gate_bias` is set. `classifier` is row-major classes x dim and only
/// participates in training.
struct GateParams {
  std::size_t dim = 0;
  std::size_t classes = 0;
  bool gate_bias = true;
  Vec theta2;
  double bias2 = 0.0;
  Vec theta3;
  double bias3 = 0.0;
  Vec classifier;

  static GateParams zeros(std::size_t dim, std::size_t classes, bool gate_bias);

  // Trainable gate parameters: 3D, plus 2 when biases are enabled.
  std::size_t gate_parameter_count() const noexcept;
  std::size_t flat_size() const noexcept { return 3 * dim + 2 + classes * dim; }

  // Flat order: theta2, bias2, theta3, bias3, classifier (row-major).
  Vec flatten() const;
  void assign_flat(std::span<const double> flat);

  std::span<const double> classifier_row(std::size_t c) const {
    return std::span<const double>(classifier).subspan(c * dim, dim);
  }

  void validate() const;
};

struct AggregationOutput {
  Mode mode = Mode::Avg;
  Vec v_d;
  Vec v_m;
  Vec alpha;
  Vec beta;
  Vec gamma;
  // Forward cache for the backward pass.
  double alpha_sum = 0.0;
  double weight_sum = 0.0;
  std::vector<std::size_t> order;

  bool has_cache() const noexcept { return !v_d.empty() && !order.empty(); }
};

struct AggregationGradients {
  Vec d_theta2;
  Vec d_theta3;
  double d_bias2 = 0.0;
  double d_bias3 = 0.0;
  std::vector<Vec> d_members;
};

// Lexicographic order of the members. Every sum over members runs in this
// order, which makes the forward pass bit-exact under member permutation.
std::vector<std::size_t> canonical_order(const FaceSet& set);

Vec visual_quality(const FaceSet& set, const GateParams& params);
Vec mean_face(const FaceSet& set, std::span<const double> alpha);
Vec content_quality(const FaceSet& set, std::span<const double> v_m, const GateParams& params);
Vec recalibrated_importance(std::span<const double> alpha, std::span<const double> beta);

/// Set descriptor for the given mode.
///
/// Avg: plain mean, alpha = beta = 1, gamma = 1/n.
/// MnV: alpha-weighted mean face, beta = 1, gamma = alpha / sum(alpha).
/// MnVc: weights alpha*beta, gamma = alpha*beta / sum(alpha*beta).
AggregationOutput aggregate(const FaceSet& set, const GateParams& params, Mode mode);

// Gradients of a scalar L given dL/dv_d, using the cache from `forward`.
AggregationGradients aggregate_backward(const FaceSet& set, const GateParams& params,
                                        const AggregationOutput& forward,
                                        std::span<const double> upstream);

}  // namespace mnet
