// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace mnet {

// Dense real vector. 64-bit internally; files store 32-bit.
using Vec = std::vector<double>;

/// Seeded random stream.
///
/// Bits come from std::mt19937_64, whose output sequence is fixed by the
/// standard. The distributions on top of it (uniform real, bounded integers,
/// Box-Muller normals, Fisher-Yates shuffle) are implemented here rather than
/// taken from <random>, because the standard library distributions are not
/// required to produce the same values across implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t uniform_index(std::uint64_t bound);
  double normal(double mean = 0.0, double stddev = 1.0);
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // Derive an independent child stream, e.g. one per worker or per phase.
  Rng split();

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

constexpr double kNormEpsilon = 1e-12;

double sigmoid(double x);
double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// out += scale * x
void axpy(double scale, std::span<const double> x, std::span<double> out);

struct CrossEntropy {
  double loss = 0.0;
  Vec grad;  // d loss / d logits
};

// Log-sum-exp stable softmax cross-entropy against a class index.
CrossEntropy softmax_cross_entropy(std::span<const double> logits, std::size_t target);

/// Central-difference gradient check.
///
/// Returns max_k |g_fd - g_an| / max(1, |g_fd|, |g_an|). `params` is
/// perturbed in place and restored before returning. Throws OracleError if
/// `f` is non-finite at a probe point and ConfigError if `step` lies outside
/// [1e-7, 1e-3].
double grad_check(const std::function<double(std::span<const double>)>& f,
                  std::span<double> params, std::span<const double> analytic_grad,
                  double step);

// Spearman rank correlation with average ranks for ties. Returns NaN when
// either input has zero rank variance.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace mnet
