// SPDX-License-Identifier: Apache-2.0
//
// Reference computations for tests. Plain loops, no shared code with the
// library beyond the data containers.
#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace oracle {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Aggregate {
  std::vector<double> v_d, alpha, beta, gamma;
};

// mode: 0 averaging, 1 visual gate only, 2 visual + content gates.
inline Aggregate aggregate(const std::vector<std::vector<double>>& v, const std::vector<double>& theta2,
                           double bias2, const std::vector<double>& theta3, double bias3, int mode) {
  const std::size_t n = v.size(), d = v[0].size();
  Aggregate out;
  out.v_d.assign(d, 0.0);
  out.alpha.assign(n, 1.0);
  out.beta.assign(n, 1.0);
  if (mode == 0) {
    for (std::size_t k = 0; k < d; ++k) {
      for (std::size_t i = 0; i < n; ++i) out.v_d[k] += v[i][k];
      out.v_d[k] /= static_cast<double>(n);
    }
    out.gamma.assign(n, 1.0 / static_cast<double>(n));
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = bias2;
    for (std::size_t k = 0; k < d; ++k) s += theta2[k] * v[i][k];
    out.alpha[i] = logistic(s);
  }
  double alpha_total = 0.0;
  for (double a : out.alpha) alpha_total += a;
  std::vector<double> mean(d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t i = 0; i < n; ++i) mean[k] += out.alpha[i] * v[i][k];
    mean[k] /= alpha_total;
  }
  if (mode == 2) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = bias3;
      for (std::size_t k = 0; k < d; ++k) s += theta3[k] * mean[k] + theta3[d + k] * v[i][k];
      out.beta[i] = logistic(s);
    }
  }
  double w_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) w_total += out.alpha[i] * out.beta[i];
  out.gamma.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.gamma[i] = out.alpha[i] * out.beta[i] / w_total;
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t i = 0; i < n; ++i) out.v_d[k] += out.gamma[i] * v[i][k];
  }
  return out;
}

struct Rates {
  double far, tar;
};

inline Rates rates_at(const std::vector<double>& genuine, const std::vector<double>& impostor, double t) {
  std::size_t g = 0, i = 0;
  for (double s : genuine) g += s >= t;
  for (double s : impostor) i += s >= t;
  return {static_cast<double>(i) / impostor.size(), static_cast<double>(g) / genuine.size()};
}

// Best TAR over every candidate threshold (each score and +inf) whose FAR
// does not exceed the target.
inline double tar_at_far(const std::vector<double>& genuine, const std::vector<double>& impostor,
                         double target) {
  double best = 0.0;
  std::vector<double> thresholds = genuine;
  thresholds.insert(thresholds.end(), impostor.begin(), impostor.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());
  for (double t : thresholds) {
    const auto r = rates_at(genuine, impostor, t);
    if (r.far <= target && r.tar > best) best = r.tar;
  }
  return best;
}

}  // namespace oracle
