// SPDX-License-Identifier: Apache-2.0
#include "mnet/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "mnet/errors.hpp"

namespace mnet {

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_index(std::uint64_t bound) {
  if (bound == 0) throw ConfigError("uniform_index: bound must be positive");
  // Rejection sampling on the top of the range keeps the result unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % bound;
}

double Rng::normal(double mean, double stddev) {
  if (has_spare_) {
    has_spare_ = false;
    return mean + stddev * spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return mean + stddev * r * std::cos(theta);
}

Rng Rng::split() {
  // SplitMix64 finalizer over the next raw draw.
  std::uint64_t z = engine_() + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return Rng(z ^ (z >> 31));
}

double sigmoid(double x) {
  const double z = std::exp(-std::fabs(x));
  return x >= 0.0 ? 1.0 / (1.0 + z) : z / (1.0 + z);
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ConfigError("dot: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                      std::to_string(b.size()) + ")");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  const double ab = dot(a, b);
  const double na = norm(a);
  const double nb = norm(b);
  if (!(na > kNormEpsilon) || !(nb > kNormEpsilon)) {
    throw DegenerateError("cosine_similarity: zero-norm input");
  }
  return std::clamp(ab / (na * nb), -1.0, 1.0);
}

void axpy(double scale, std::span<const double> x, std::span<double> out) {
  if (x.size() != out.size()) throw ConfigError("axpy: dimension mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) out[i] += scale * x[i];
}

CrossEntropy softmax_cross_entropy(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size()) {
    throw ProtocolError("softmax_cross_entropy: target " + std::to_string(target) +
                        " outside [0, " + std::to_string(logits.size()) + ")");
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - peak);
  const double log_norm = peak + std::log(total);

  CrossEntropy out;
  out.loss = log_norm - logits[target];
  out.grad.resize(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) out.grad[k] = std::exp(logits[k] - log_norm);
  out.grad[target] -= 1.0;
  return out;
}

double grad_check(const std::function<double(std::span<const double>)>& f,
                  std::span<double> params, std::span<const double> analytic_grad,
                  double step) {
  if (!(step >= 1e-7 && step <= 1e-3)) {
    throw ConfigError("grad_check: step must lie in [1e-7, 1e-3]");
  }
  if (params.size() != analytic_grad.size()) {
    throw ConfigError("grad_check: gradient size does not match parameter size");
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double saved = params[k];
    params[k] = saved + step;
    const double up = f(params);
    params[k] = saved - step;
    const double down = f(params);
    params[k] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw OracleError("grad_check: non-finite evaluation at coordinate " + std::to_string(k));
    }
    const double fd = (up - down) / (2.0 * step);
    const double an = analytic_grad[k];
    const double err = std::fabs(fd - an) / std::max({1.0, std::fabs(fd), std::fabs(an)});
    worst = std::max(worst, err);
  }
  return worst;
}

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ConfigError("spearman: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double mean = 0.5 * static_cast<double>(n + 1);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace mnet
