// SPDX-License-Identifier: Apache-2.0
#include "mnet/aggregator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mnet/errors.hpp"

namespace mnet {

std::string_view mode_name(Mode mode) {
  switch (mode) {
    case Mode::Avg: return "avg";
    case Mode::MnV: return "mn-v";
    case Mode::MnVc: return "mn-vc";
  }
  return "unknown";
}

Mode parse_mode(std::string_view name) {
  if (name == "avg") return Mode::Avg;
  if (name == "mn-v") return Mode::MnV;
  if (name == "mn-vc") return Mode::MnVc;
  throw ConfigError("unknown aggregation mode '" + std::string(name) + "'");
}

void FaceSet::validate() const {
  if (members.empty()) throw ConfigError("face set must hold at least one member");
  const std::size_t d = members.front().size();
  if (d == 0) throw ConfigError("face set members must have positive dimension");
  for (const auto& m : members) {
    if (m.size() != d) throw ConfigError("face set members disagree on dimension");
    for (double x : m) {
      if (!std::isfinite(x)) throw ConfigError("face set member holds a non-finite value");
    }
  }
}

GateParams GateParams::zeros(std::size_t dim, std::size_t classes, bool gate_bias) {
  if (dim == 0) throw ConfigError("gate dimension must be positive");
  GateParams p;
  p.dim = dim;
  p.classes = classes;
  p.gate_bias = gate_bias;
  p.theta2.assign(dim, 0.0);
  p.theta3.assign(2 * dim, 0.0);
  p.classifier.assign(classes * dim, 0.0);
  return p;
}

std::size_t GateParams::gate_parameter_count() const noexcept {
  return theta2.size() + theta3.size() + (gate_bias ? 2 : 0);
}

Vec GateParams::flatten() const {
  Vec flat;
  flat.reserve(flat_size());
  flat.insert(flat.end(), theta2.begin(), theta2.end());
  flat.push_back(bias2);
  flat.insert(flat.end(), theta3.begin(), theta3.end());
  flat.push_back(bias3);
  flat.insert(flat.end(), classifier.begin(), classifier.end());
  return flat;
}

void GateParams::assign_flat(std::span<const double> flat) {
  if (flat.size() != flat_size()) throw ConfigError("flat parameter vector has the wrong size");
  auto it = flat.begin();
  std::copy_n(it, dim, theta2.begin());
  it += static_cast<std::ptrdiff_t>(dim);
  bias2 = *it++;
  std::copy_n(it, 2 * dim, theta3.begin());
  it += static_cast<std::ptrdiff_t>(2 * dim);
  bias3 = *it++;
  std::copy_n(it, classes * dim, classifier.begin());
}

void GateParams::validate() const {
  if (dim == 0) throw ConfigError("gate dimension must be positive");
  if (theta2.size() != dim) throw ConfigError("theta2 length must equal D");
  if (theta3.size() != 2 * dim) throw ConfigError("theta3 length must equal 2D");
  if (classifier.size() != classes * dim) throw ConfigError("classifier must be C x D");
}

namespace {

void check_dims(const FaceSet& set, const GateParams& params) {
  set.validate();
  if (params.theta2.size() != set.dim() || params.theta3.size() != 2 * set.dim()) {
    throw ConfigError("gate parameters expect D=" + std::to_string(params.theta2.size()) +
                      " but the set has D=" + std::to_string(set.dim()));
  }
}

double ordered_sum(std::span<const double> values, std::span<const std::size_t> order) {
  double acc = 0.0;
  for (std::size_t i : order) acc += values[i];
  return acc;
}

// (sum_i w_i V_i) / (sum_i w_i), both sums in `order`.
Vec weighted_mean(const FaceSet& set, std::span<const double> weights,
                  std::span<const std::size_t> order, double* denominator_out) {
  const double denominator = ordered_sum(weights, order);
  if (!(denominator > kDenominatorEpsilon)) {
    throw DegenerateError("weighted mean: weight sum below guard");
  }
  Vec acc(set.dim(), 0.0);
  for (std::size_t i : order) axpy(weights[i] / denominator, set.members[i], acc);
  if (denominator_out) *denominator_out = denominator;
  return acc;
}

double visual_bias(const GateParams& p) { return p.gate_bias ? p.bias2 : 0.0; }
double content_bias(const GateParams& p) { return p.gate_bias ? p.bias3 : 0.0; }

std::span<const double> mean_weights(const GateParams& p) {
  return std::span<const double>(p.theta3).first(p.dim);
}
std::span<const double> member_weights(const GateParams& p) {
  return std::span<const double>(p.theta3).subspan(p.dim, p.dim);
}

}  // namespace

std::vector<std::size_t> canonical_order(const FaceSet& set) {
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(set.members[a].begin(), set.members[a].end(),
                                        set.members[b].begin(), set.members[b].end());
  });
  return order;
}

Vec visual_quality(const FaceSet& set, const GateParams& params) {
  check_dims(set, params);
  Vec alpha(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    alpha[i] = sigmoid(dot(params.theta2, set.members[i]) + visual_bias(params));
  }
  return alpha;
}

Vec mean_face(const FaceSet& set, std::span<const double> alpha) {
  set.validate();
  if (alpha.size() != set.size()) throw ConfigError("mean_face: one weight per member required");
  return weighted_mean(set, alpha, canonical_order(set), nullptr);
}

Vec content_quality(const FaceSet& set, std::span<const double> v_m, const GateParams& params) {
  check_dims(set, params);
  if (v_m.size() != set.dim()) throw ConfigError("content_quality: mean face dimension mismatch");
  const double anchor = dot(mean_weights(params), v_m);
  Vec beta(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    beta[i] = sigmoid(anchor + dot(member_weights(params), set.members[i]) + content_bias(params));
  }
  return beta;
}

Vec recalibrated_importance(std::span<const double> alpha, std::span<const double> beta) {
  if (alpha.size() != beta.size() || alpha.empty()) {
    throw ConfigError("recalibrated_importance: alpha and beta must be non-empty and equal length");
  }
  Vec products(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) products[i] = alpha[i] * beta[i];
  // Summing in value order keeps gamma exactly co-permuted with its inputs.
  Vec sorted = products;
  std::sort(sorted.begin(), sorted.end());
  const double total = std::accumulate(sorted.begin(), sorted.end(), 0.0);
  if (!(total > kDenominatorEpsilon)) throw DegenerateError("recalibrated_importance: zero total");
  for (double& p : products) p /= total;
  return products;
}

AggregationOutput aggregate(const FaceSet& set, const GateParams& params, Mode mode) {
  check_dims(set, params);
  const std::size_t n = set.size();
  AggregationOutput out;
  out.mode = mode;
  out.order = canonical_order(set);

  if (mode == Mode::Avg) {
    out.alpha.assign(n, 1.0);
    out.beta.assign(n, 1.0);
    out.gamma.assign(n, 1.0 / static_cast<double>(n));
    Vec acc(set.dim(), 0.0);
    for (std::size_t i : out.order) axpy(out.gamma[i], set.members[i], acc);
    out.alpha_sum = static_cast<double>(n);
    out.weight_sum = static_cast<double>(n);
    out.v_m = acc;
    out.v_d = std::move(acc);
    return out;
  }

  out.alpha = visual_quality(set, params);
  out.v_m = weighted_mean(set, out.alpha, out.order, &out.alpha_sum);

  if (mode == Mode::MnV) {
    out.beta.assign(n, 1.0);
    out.weight_sum = out.alpha_sum;
    out.gamma.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.gamma[i] = out.alpha[i] / out.alpha_sum;
    out.v_d = out.v_m;
    return out;
  }

  out.beta = content_quality(set, out.v_m, params);
  Vec weights(n);
  for (std::size_t i = 0; i < n; ++i) weights[i] = out.alpha[i] * out.beta[i];
  out.v_d = weighted_mean(set, weights, out.order, &out.weight_sum);
  out.gamma.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.gamma[i] = weights[i] / out.weight_sum;
  return out;
}

AggregationGradients aggregate_backward(const FaceSet& set, const GateParams& params,
                                        const AggregationOutput& fwd,
                                        std::span<const double> upstream) {
  if (!fwd.has_cache()) throw UsageError("aggregate_backward: forward cache is missing");
  check_dims(set, params);
  const std::size_t n = set.size();
  const std::size_t d = set.dim();
  if (fwd.alpha.size() != n || fwd.v_d.size() != d || fwd.order.size() != n) {
    throw UsageError("aggregate_backward: forward cache does not belong to this set");
  }
  if (upstream.size() != d) throw ConfigError("aggregate_backward: upstream dimension mismatch");

  AggregationGradients g;
  g.d_theta2.assign(d, 0.0);
  g.d_theta3.assign(2 * d, 0.0);
  g.d_members.assign(n, Vec(d, 0.0));

  if (fwd.mode == Mode::Avg) {
    for (auto& dm : g.d_members) axpy(1.0 / static_cast<double>(n), upstream, dm);
    return g;
  }

  const double g_dot_vd = dot(upstream, fwd.v_d);
  // dL/dalpha_i, accumulated from every path that reads alpha.
  Vec d_alpha(n, 0.0);
  // dL/dV_m: the anchor feeds the content gate of every member.
  Vec d_vm(d, 0.0);

  if (fwd.mode == Mode::MnV) {
    d_vm.assign(upstream.begin(), upstream.end());
  } else {
    const auto theta3_mean = mean_weights(params);
    const auto theta3_member = member_weights(params);
    double d_anchor = 0.0;
    for (std::size_t i : fwd.order) {
      const double a = fwd.alpha[i];
      const double b = fwd.beta[i];
      // V_d = sum w_i V_i / sum w_i  =>  dV_d/dw_i = (V_i - V_d) / S_w
      const double d_w = (dot(upstream, set.members[i]) - g_dot_vd) / fwd.weight_sum;
      d_alpha[i] += d_w * b;
      const double d_logit = d_w * a * b * (1.0 - b);
      axpy(d_logit, set.members[i], std::span<double>(g.d_theta3).subspan(d, d));
      d_anchor += d_logit;
      axpy(a * b / fwd.weight_sum, upstream, g.d_members[i]);
      axpy(d_logit, theta3_member, g.d_members[i]);
    }
    axpy(d_anchor, fwd.v_m, std::span<double>(g.d_theta3).first(d));
    if (params.gate_bias) g.d_bias3 = d_anchor;
    for (std::size_t k = 0; k < d; ++k) d_vm[k] = d_anchor * theta3_mean[k];
  }

  // V_m = sum alpha_i V_i / S_alpha
  const double dvm_dot_vm = dot(d_vm, fwd.v_m);
  for (std::size_t i : fwd.order) {
    d_alpha[i] += (dot(d_vm, set.members[i]) - dvm_dot_vm) / fwd.alpha_sum;
    axpy(fwd.alpha[i] / fwd.alpha_sum, d_vm, g.d_members[i]);
  }

  double d_bias2 = 0.0;
  for (std::size_t i : fwd.order) {
    const double a = fwd.alpha[i];
    const double d_logit = d_alpha[i] * a * (1.0 - a);
    axpy(d_logit, set.members[i], g.d_theta2);
    axpy(d_logit, params.theta2, g.d_members[i]);
    d_bias2 += d_logit;
  }
  if (params.gate_bias) g.d_bias2 = d_bias2;
  return g;
}

}  // namespace mnet
