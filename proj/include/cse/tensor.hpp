// Copyright 2026 The CSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cse/error.hpp"

namespace cse {

// Dense row-major tensor of rank 1..3. Small fixed feature set: the
// autodiff layer (autodiff.hpp) builds everything else on top of it.
template <typename S>
struct Tensor {
  std::vector<int> shape;
  std::vector<S> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel_of(shape), S(0)) {}
  Tensor(std::vector<int> s, std::vector<S> d) : shape(std::move(s)), data(std::move(d)) {
    check_arg(data.size() == static_cast<size_t>(numel_of(shape)), "tensor data/shape mismatch");
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

  static Tensor from_vector(const std::vector<S>& v) {
    return Tensor({static_cast<int>(v.size())}, v);
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  bool empty() const { return data.empty(); }

  // Rows/cols of the 2D view with all leading axes flattened.
  int64_t view_rows() const { return rank() == 0 ? 0 : numel() / shape.back(); }
  int last_dim() const { return shape.empty() ? 0 : shape.back(); }

  S& at(int i) { return data[static_cast<size_t>(i)]; }
  const S& at(int i) const { return data[static_cast<size_t>(i)]; }
  S& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
  const S& at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }
  S& at(int i, int j, int k) {
    return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
  }
  const S& at(int i, int j, int k) const {
    return data[(static_cast<size_t>(i) * shape[1] + j) * shape[2] + k];
  }

  void fill(S v) { std::fill(data.begin(), data.end(), v); }

  bool all_finite() const {
    for (S v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
    return out;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
  }
};

namespace detail {
template <typename S>
using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using EMap = Eigen::Map<EMat<S>>;
template <typename S>
using ECMap = Eigen::Map<const EMat<S>>;
}  // namespace detail

// out[m,n] (+)= a[m,k] . b[k,n], raw pointers, row-major.
template <typename S>
void gemm(const S* a, const S* b, S* out, int64_t m, int64_t k, int64_t n, bool accumulate) {
  detail::ECMap<S> A(a, m, k), B(b, k, n);
  detail::EMap<S> O(out, m, n);
  if (accumulate)
    O.noalias() += A * B;
  else
    O.noalias() = A * B;
}

// out[m,n] (+)= a[m,k] . b[n,k]^T
template <typename S>
void gemm_nt(const S* a, const S* b, S* out, int64_t m, int64_t k, int64_t n, bool accumulate) {
  detail::ECMap<S> A(a, m, k), B(b, n, k);
  detail::EMap<S> O(out, m, n);
  if (accumulate)
    O.noalias() += A * B.transpose();
  else
    O.noalias() = A * B.transpose();
}

// out[k,n] (+)= a[m,k]^T . b[m,n]
template <typename S>
void gemm_tn(const S* a, const S* b, S* out, int64_t m, int64_t k, int64_t n, bool accumulate) {
  detail::ECMap<S> A(a, m, k), B(b, m, n);
  detail::EMap<S> O(out, k, n);
  if (accumulate)
    O.noalias() += A.transpose() * B;
  else
    O.noalias() = A.transpose() * B;
}

}  // namespace cse
