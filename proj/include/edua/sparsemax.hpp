#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "edua/errors.hpp"
#include "edua/tensor.hpp"

namespace edua {

// A point on the probability simplex together with its support.
struct AttentionVector {
  std::vector<double> scores;  // nonnegative, sums to 1
  std::vector<int> support;    // indices with scores[i] > 0, ascending

  int size() const { return static_cast<int>(scores.size()); }
};

// Euclidean projection of z onto the probability simplex via the
// sort-and-threshold rule: with z sorted descending, keep the largest k
// such that 1 + k*z_(k) > sum_{j<=k} z_(j), set tau = (sum_{j<=k} z_(j) - 1)/k
// and output max(z - tau, 0). Ties are broken by index (stable sort), which
// cannot change the output values, only the enumeration order.
inline AttentionVector sparsemax(const std::vector<double>& z) {
  const int n = static_cast<int>(z.size());
  if (n == 0) throw DimensionError("sparsemax of empty vector");
  for (double x : z)
    if (!std::isfinite(x)) throw NumericError("sparsemax input is not finite");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return z[a] > z[b]; });

  double running = 0.0;
  double tau = 0.0;
  int k = 0;
  for (int i = 0; i < n; ++i) {
    const double zi = z[order[i]];
    running += zi;
    if (1.0 + (i + 1) * zi > running) {
      k = i + 1;
      tau = (running - 1.0) / k;
    } else {
      break;
    }
  }

  AttentionVector out;
  out.scores.assign(n, 0.0);
  for (int i = 0; i < k; ++i) out.scores[order[i]] = z[order[i]] - tau;
  for (int i = 0; i < n; ++i)
    if (out.scores[i] > 0.0) out.support.push_back(i);
  return out;
}

inline AttentionVector sparsemax(const Tensor& z) { return sparsemax(z.v); }

// Gradient of sparsemax: on the support the Jacobian acts as centering
// (g_i minus the support mean of g), zero off the support.
inline std::vector<double> sparsemax_backward(const AttentionVector& out,
                                              const std::vector<double>& upstream) {
  std::vector<double> grad(out.scores.size(), 0.0);
  if (out.support.empty()) return grad;
  double mean = 0.0;
  for (int i : out.support) mean += upstream[static_cast<std::size_t>(i)];
  mean /= static_cast<double>(out.support.size());
  for (int i : out.support) grad[static_cast<std::size_t>(i)] = upstream[static_cast<std::size_t>(i)] - mean;
  return grad;
}

// Independent projection oracle: enumerate every nonempty candidate support,
// solve the equality-constrained projection on it, keep the feasible
// minimizer of ||p - z||^2. Exponential in n; test-scale only.
inline AttentionVector simplex_project_oracle(const std::vector<double>& z) {
  const int n = static_cast<int>(z.size());
  if (n == 0) throw DimensionError("projection of empty vector");
  if (n > 10) throw ScaleError("oracle supports n <= 10, got n = " + std::to_string(n));

  double best_obj = std::numeric_limits<double>::infinity();
  std::vector<double> best;
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    double sum = 0.0;
    int sz = 0;
    for (int i = 0; i < n; ++i)
      if (mask & (1u << i)) {
        sum += z[i];
        ++sz;
      }
    const double shift = (sum - 1.0) / sz;
    std::vector<double> p(n, 0.0);
    bool feasible = true;
    double obj = 0.0;
    for (int i = 0; i < n; ++i) {
      if (mask & (1u << i)) {
        p[i] = z[i] - shift;
        if (p[i] < 0.0) {
          feasible = false;
          break;
        }
      }
      const double d = p[i] - z[i];
      obj += d * d;
    }
    if (feasible && obj < best_obj) {
      best_obj = obj;
      best = std::move(p);
    }
  }

  AttentionVector out;
  out.scores = std::move(best);
  for (int i = 0; i < n; ++i)
    if (out.scores[i] > 0.0) out.support.push_back(i);
  return out;
}

inline AttentionVector simplex_project_oracle(const Tensor& z) { return simplex_project_oracle(z.v); }

// Max-subtracted softmax; strictly positive, sums to 1.
inline std::vector<double> softmax(const std::vector<double>& z) {
  if (z.empty()) throw DimensionError("softmax of empty vector");
  const double m = *std::max_element(z.begin(), z.end());
  if (!std::isfinite(m)) throw NumericError("softmax input is not finite");
  std::vector<double> out(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] - m);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

inline Tensor softmax(const Tensor& z) { return Tensor(z.shape, softmax(z.v)); }

}  // namespace edua
