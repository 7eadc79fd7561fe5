#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "edua/errors.hpp"

namespace edua {

// Dense 64-bit float tensor, row-major. Rank is 1 or 2 everywhere in this
// library; scalars are rank-1 tensors of size 1.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), v(numel_of(shape), 0.0) {}
  Tensor(std::vector<int> s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {
    if (static_cast<std::size_t>(numel_of(shape)) != v.size())
      throw DimensionError("value count " + std::to_string(v.size()) + " does not match shape " + shape_str());
  }

  static int numel_of(const std::vector<int>& s) {
    int n = 1;
    for (int d : s) {
      if (d < 0) throw DimensionError("negative dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<int> s, double value) {
    Tensor t(std::move(s));
    std::fill(t.v.begin(), t.v.end(), value);
    return t;
  }

  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  static Tensor identity(int n) {
    Tensor t({n, n});
    for (int i = 0; i < n; ++i) t.v[static_cast<std::size_t>(i) * n + i] = 1.0;
    return t;
  }

  static Tensor uniform(std::vector<int> s, double lo, double hi, std::mt19937_64& rng) {
    Tensor t(std::move(s));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& x : t.v) x = dist(rng);
    return t;
  }

  int numel() const { return static_cast<int>(v.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const { return rank() == 2 ? shape[0] : (rank() == 1 ? shape[0] : 1); }
  int cols() const { return rank() == 2 ? shape[1] : 1; }
  bool is_scalar() const { return numel() == 1; }

  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols() + c]; }
  double& operator[](int i) { return v[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return v[static_cast<std::size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
  }

  using EigenMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstEigenMap =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  EigenMap mat() { return EigenMap(v.data(), rows(), cols()); }
  ConstEigenMap mat() const { return ConstEigenMap(v.data(), rows(), cols()); }
};

inline Tensor matmul_values(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0])
    throw DimensionError("matmul shapes " + a.shape_str() + " and " + b.shape_str());
  Tensor c({a.shape[0], b.shape[1]});
  c.mat().noalias() = a.mat() * b.mat();
  return c;
}

inline double dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) throw DimensionError("dot sizes " + a.shape_str() + " and " + b.shape_str());
  return std::inner_product(a.v.begin(), a.v.end(), b.v.begin(), 0.0);
}

inline double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

}  // namespace edua
