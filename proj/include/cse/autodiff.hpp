// Copyright 2026 The CSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Eager tape-based reverse-mode autodiff over dense tensors. Each op
// computes its value immediately and records a closure that scatters the
// output gradient back to its parents. Single-threaded, fixed reduction
// order, so results are bit-reproducible within one build.

#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "cse/error.hpp"
#include "cse/tensor.hpp"

namespace cse {

template <typename S>
class Tape {
 public:
  struct Node {
    Tensor<S> value;
    Tensor<S> grad;  // empty until first accumulation
    bool needs_grad = false;
    std::function<void(Tape&, const Tensor<S>&)> backward;  // arg: this node's grad
  };

  int leaf(Tensor<S> v, bool needs_grad = false) {
    return push(std::move(v), needs_grad, nullptr);
  }

  const Tensor<S>& val(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  Tensor<S>& val(int id) { return nodes_[static_cast<size_t>(id)].value; }

  bool needs_grad(int id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

  Tensor<S>& grad(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.empty()) n.grad = Tensor<S>::zeros(n.value.shape);
    return n.grad;
  }

  bool has_grad(int id) const { return !nodes_[static_cast<size_t>(id)].grad.empty(); }

  size_t size() const { return nodes_.size(); }

  // Seeds d(root)/d(root) = 1 and sweeps the tape in reverse creation order.
  void backward(int root) {
    check_arg(val(root).numel() == 1, "backward: root must be a scalar");
    grad(root).data[0] = S(1);
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.backward && !n.grad.empty()) n.backward(*this, n.grad);
    }
  }

  // ---- arithmetic ----

  int add(int a, int b) {
    check_arg(val(a).same_shape(val(b)), "add: shape mismatch");
    Tensor<S> out = val(a);
    const Tensor<S>& B = val(b);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += B.data[i];
    return push(std::move(out), wants(a, b), [a, b](Tape& t, const Tensor<S>& g) {
      t.accum_eq(a, g);
      t.accum_eq(b, g);
    });
  }

  int sub(int a, int b) {
    check_arg(val(a).same_shape(val(b)), "sub: shape mismatch");
    Tensor<S> out = val(a);
    const Tensor<S>& B = val(b);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= B.data[i];
    return push(std::move(out), wants(a, b), [a, b](Tape& t, const Tensor<S>& g) {
      t.accum_eq(a, g);
      if (t.needs_grad(b)) {
        Tensor<S>& gb = t.grad(b);
        for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] -= g.data[i];
      }
    });
  }

  int mul(int a, int b) {
    check_arg(val(a).same_shape(val(b)), "mul: shape mismatch");
    Tensor<S> out = val(a);
    const Tensor<S>& B = val(b);
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= B.data[i];
    return push(std::move(out), wants(a, b), [a, b](Tape& t, const Tensor<S>& g) {
      if (t.needs_grad(a)) {
        Tensor<S>& ga = t.grad(a);
        const Tensor<S>& B = t.val(b);
        for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * B.data[i];
      }
      if (t.needs_grad(b)) {
        Tensor<S>& gb = t.grad(b);
        const Tensor<S>& A = t.val(a);
        for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i] * A.data[i];
      }
    });
  }

  // out = alpha * a + beta, elementwise.
  int affine(int a, double alpha, double beta = 0.0) {
    Tensor<S> out = val(a);
    for (S& v : out.data) v = static_cast<S>(alpha) * v + static_cast<S>(beta);
    return push(std::move(out), wants(a), [a, alpha](Tape& t, const Tensor<S>& g) {
      if (!t.needs_grad(a)) return;
      Tensor<S>& ga = t.grad(a);
      for (size_t i = 0; i < g.data.size(); ++i)
        ga.data[i] += static_cast<S>(alpha) * g.data[i];
    });
  }

  // Broadcast a rank-1 vector over the last axis: out[..., j] = a[..., j] + v[j].
  int add_last(int a, int v) {
    const Tensor<S>& A = val(a);
    const Tensor<S>& V = val(v);
    check_arg(V.rank() == 1 && V.dim(0) == A.last_dim(), "add_last: bad bias shape");
    Tensor<S> out = A;
    const int64_t rows = A.view_rows();
    const int d = A.last_dim();
    for (int64_t r = 0; r < rows; ++r)
      for (int j = 0; j < d; ++j) out.data[static_cast<size_t>(r * d + j)] += V.data[static_cast<size_t>(j)];
    return push(std::move(out), wants(a, v), [a, v, rows, d](Tape& t, const Tensor<S>& g) {
      t.accum_eq(a, g);
      if (t.needs_grad(v)) {
        Tensor<S>& gv = t.grad(v);
        for (int64_t r = 0; r < rows; ++r)
          for (int j = 0; j < d; ++j) gv.data[static_cast<size_t>(j)] += g.data[static_cast<size_t>(r * d + j)];
      }
    });
  }

  // Broadcast over the leading axis: out[i, ...] = a[i, ...] + v[...],
  // v.shape == a.shape[1:].
  int add_bcast0(int a, int v) {
    const Tensor<S>& A = val(a);
    const Tensor<S>& V = val(v);
    check_arg(A.rank() >= 2, "add_bcast0: need rank >= 2");
    check_arg(std::vector<int>(A.shape.begin() + 1, A.shape.end()) == V.shape,
              "add_bcast0: shape mismatch");
    Tensor<S> out = A;
    const int64_t b0 = A.dim(0), stride = V.numel();
    for (int64_t i = 0; i < b0; ++i)
      for (int64_t j = 0; j < stride; ++j)
        out.data[static_cast<size_t>(i * stride + j)] += V.data[static_cast<size_t>(j)];
    return push(std::move(out), wants(a, v), [a, v, b0, stride](Tape& t, const Tensor<S>& g) {
      t.accum_eq(a, g);
      if (t.needs_grad(v)) {
        Tensor<S>& gv = t.grad(v);
        for (int64_t i = 0; i < b0; ++i)
          for (int64_t j = 0; j < stride; ++j)
            gv.data[static_cast<size_t>(j)] += g.data[static_cast<size_t>(i * stride + j)];
      }
    });
  }

  // ---- linear algebra ----

  // a: rank >= 2, leading axes flattened to rows; b: [k, n].
  int matmul(int a, int b) {
    const Tensor<S>& A = val(a);
    const Tensor<S>& B = val(b);
    check_arg(A.rank() >= 2 && B.rank() == 2, "matmul: bad ranks");
    const int k = A.last_dim();
    check_arg(B.dim(0) == k, "matmul: inner dim mismatch");
    const int64_t m = A.view_rows();
    const int n = B.dim(1);
    std::vector<int> out_shape(A.shape.begin(), A.shape.end() - 1);
    out_shape.push_back(n);
    Tensor<S> out(out_shape);
    gemm(A.data.data(), B.data.data(), out.data.data(), m, k, n, false);
    return push(std::move(out), wants(a, b), [a, b, m, k, n](Tape& t, const Tensor<S>& g) {
      if (t.needs_grad(a))
        gemm_nt(g.data.data(), t.val(b).data.data(), t.grad(a).data.data(), m, n, k, true);
      if (t.needs_grad(b))
        gemm_tn(t.val(a).data.data(), g.data.data(), t.grad(b).data.data(), m, k, n, true);
    });
  }

  // Batched: a [B,m,k] . b [B,k,n] -> [B,m,n].
  int bmm(int a, int b) {
    const Tensor<S>& A = val(a);
    const Tensor<S>& B = val(b);
    check_arg(A.rank() == 3 && B.rank() == 3 && A.dim(0) == B.dim(0) && A.dim(2) == B.dim(1),
              "bmm: bad shapes");
    const int nb = A.dim(0), m = A.dim(1), k = A.dim(2), n = B.dim(2);
    Tensor<S> out({nb, m, n});
    for (int i = 0; i < nb; ++i)
      gemm(&A.data[static_cast<size_t>(i) * m * k], &B.data[static_cast<size_t>(i) * k * n],
           &out.data[static_cast<size_t>(i) * m * n], m, k, n, false);
    return push(std::move(out), wants(a, b), [a, b, nb, m, k, n](Tape& t, const Tensor<S>& g) {
      for (int i = 0; i < nb; ++i) {
        const S* gi = &g.data[static_cast<size_t>(i) * m * n];
        if (t.needs_grad(a))
          gemm_nt(gi, &t.val(b).data[static_cast<size_t>(i) * k * n],
                  &t.grad(a).data[static_cast<size_t>(i) * m * k], m, n, k, true);
        if (t.needs_grad(b))
          gemm_tn(&t.val(a).data[static_cast<size_t>(i) * m * k], gi,
                  &t.grad(b).data[static_cast<size_t>(i) * k * n], m, k, n, true);
      }
    });
  }

  // Batched with transposed rhs: a [B,m,k] . b [B,n,k]^T -> [B,m,n].
  int bmm_nt(int a, int b) {
    const Tensor<S>& A = val(a);
    const Tensor<S>& B = val(b);
    check_arg(A.rank() == 3 && B.rank() == 3 && A.dim(0) == B.dim(0) && A.dim(2) == B.dim(2),
              "bmm_nt: bad shapes");
    const int nb = A.dim(0), m = A.dim(1), k = A.dim(2), n = B.dim(1);
    Tensor<S> out({nb, m, n});
    for (int i = 0; i < nb; ++i)
      gemm_nt(&A.data[static_cast<size_t>(i) * m * k], &B.data[static_cast<size_t>(i) * n * k],
              &out.data[static_cast<size_t>(i) * m * n], m, k, n, false);
    return push(std::move(out), wants(a, b), [a, b, nb, m, k, n](Tape& t, const Tensor<S>& g) {
      for (int i = 0; i < nb; ++i) {
        const S* gi = &g.data[static_cast<size_t>(i) * m * n];
        if (t.needs_grad(a))  // dA = g . B
          gemm(gi, &t.val(b).data[static_cast<size_t>(i) * n * k],
               &t.grad(a).data[static_cast<size_t>(i) * m * k], m, n, k, true);
        if (t.needs_grad(b))  // dB = g^T . A
          gemm_tn(gi, &t.val(a).data[static_cast<size_t>(i) * m * k],
                  &t.grad(b).data[static_cast<size_t>(i) * n * k], m, n, k, true);
      }
    });
  }

  // ---- nonlinearities / normalization ----

  int relu(int a) {
    Tensor<S> out = val(a);
    for (S& v : out.data)
      if (v < S(0)) v = S(0);
    return push(std::move(out), wants(a), [a](Tape& t, const Tensor<S>& g) {
      if (!t.needs_grad(a)) return;
      Tensor<S>& ga = t.grad(a);
      const Tensor<S>& A = t.val(a);
      for (size_t i = 0; i < g.data.size(); ++i)
        if (A.data[i] > S(0)) ga.data[i] += g.data[i];
    });
  }

  // Layer normalization over the last axis, with gain/offset.
  int layer_norm(int a, int gamma, int beta, double eps = 1e-5) {
    const Tensor<S>& A = val(a);
    const int d = A.last_dim();
    check_arg(val(gamma).numel() == d && val(beta).numel() == d, "layer_norm: bad gain shape");
    const int64_t rows = A.view_rows();
    Tensor<S> out = A;
    const Tensor<S>& G = val(gamma);
    const Tensor<S>& Bt = val(beta);
    for (int64_t r = 0; r < rows; ++r) {
      const S* x = &A.data[static_cast<size_t>(r * d)];
      S* y = &out.data[static_cast<size_t>(r * d)];
      S mean = S(0);
      for (int j = 0; j < d; ++j) mean += x[j];
      mean /= static_cast<S>(d);
      S var = S(0);
      for (int j = 0; j < d; ++j) var += (x[j] - mean) * (x[j] - mean);
      var /= static_cast<S>(d);
      const S inv = S(1) / std::sqrt(var + static_cast<S>(eps));
      for (int j = 0; j < d; ++j) y[j] = (x[j] - mean) * inv * G.data[static_cast<size_t>(j)] + Bt.data[static_cast<size_t>(j)];
    }
    return push(std::move(out), wants(a, gamma, beta),
                [a, gamma, beta, rows, d, eps](Tape& t, const Tensor<S>& g) {
      const Tensor<S>& A = t.val(a);
      const Tensor<S>& G = t.val(gamma);
      for (int64_t r = 0; r < rows; ++r) {
        const S* x = &A.data[static_cast<size_t>(r * d)];
        const S* go = &g.data[static_cast<size_t>(r * d)];
        S mean = S(0);
        for (int j = 0; j < d; ++j) mean += x[j];
        mean /= static_cast<S>(d);
        S var = S(0);
        for (int j = 0; j < d; ++j) var += (x[j] - mean) * (x[j] - mean);
        var /= static_cast<S>(d);
        const S inv = S(1) / std::sqrt(var + static_cast<S>(eps));

        if (t.needs_grad(gamma)) {
          Tensor<S>& gg = t.grad(gamma);
          for (int j = 0; j < d; ++j) gg.data[static_cast<size_t>(j)] += go[j] * (x[j] - mean) * inv;
        }
        if (t.needs_grad(beta)) {
          Tensor<S>& gb = t.grad(beta);
          for (int j = 0; j < d; ++j) gb.data[static_cast<size_t>(j)] += go[j];
        }
        if (t.needs_grad(a)) {
          // dL/dx via the usual two reductions over the row.
          S sum_dxhat = S(0), sum_dxhat_xhat = S(0);
          for (int j = 0; j < d; ++j) {
            const S dxhat = go[j] * G.data[static_cast<size_t>(j)];
            const S xhat = (x[j] - mean) * inv;
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
          }
          Tensor<S>& ga = t.grad(a);
          S* gx = &ga.data[static_cast<size_t>(r * d)];
          for (int j = 0; j < d; ++j) {
            const S dxhat = go[j] * G.data[static_cast<size_t>(j)];
            const S xhat = (x[j] - mean) * inv;
            gx[j] += inv * (dxhat - (sum_dxhat + xhat * sum_dxhat_xhat) / static_cast<S>(d));
          }
        }
      }
    });
  }

  int softmax_last(int a) {
    const Tensor<S>& A = val(a);
    const int d = A.last_dim();
    const int64_t rows = A.view_rows();
    Tensor<S> out = A;
    for (int64_t r = 0; r < rows; ++r) {
      S* y = &out.data[static_cast<size_t>(r * d)];
      S mx = y[0];
      for (int j = 1; j < d; ++j) mx = std::max(mx, y[j]);
      S sum = S(0);
      for (int j = 0; j < d; ++j) {
        y[j] = std::exp(y[j] - mx);
        sum += y[j];
      }
      const S inv = S(1) / sum;
      for (int j = 0; j < d; ++j) y[j] *= inv;
    }
    const int self = static_cast<int>(nodes_.size());
    return push(std::move(out), wants(a), [a, self, rows, d](Tape& t, const Tensor<S>& g) {
      if (!t.needs_grad(a)) return;
      const Tensor<S>& Y = t.val(self);
      Tensor<S>& ga = t.grad(a);
      for (int64_t r = 0; r < rows; ++r) {
        const S* y = &Y.data[static_cast<size_t>(r * d)];
        const S* go = &g.data[static_cast<size_t>(r * d)];
        S dot = S(0);
        for (int j = 0; j < d; ++j) dot += go[j] * y[j];
        S* gx = &ga.data[static_cast<size_t>(r * d)];
        for (int j = 0; j < d; ++j) gx[j] += y[j] * (go[j] - dot);
      }
    });
  }

  // ---- shape ops ----

  // out[i] = a[map[i]]; entries may repeat (backward scatter-adds) and -1
  // reads as zero (padding).
  int gather(int a, std::vector<int64_t> map, std::vector<int> out_shape) {
    const Tensor<S>& A = val(a);
    Tensor<S> out(std::move(out_shape));
    check_arg(static_cast<int64_t>(map.size()) == out.numel(), "gather: map size mismatch");
    for (size_t i = 0; i < map.size(); ++i)
      out.data[i] = map[i] < 0 ? S(0) : A.data[static_cast<size_t>(map[i])];
    auto shared = std::make_shared<std::vector<int64_t>>(std::move(map));
    return push(std::move(out), wants(a), [a, shared](Tape& t, const Tensor<S>& g) {
      if (!t.needs_grad(a)) return;
      Tensor<S>& ga = t.grad(a);
      const auto& m = *shared;
      for (size_t i = 0; i < m.size(); ++i)
        if (m[i] >= 0) ga.data[static_cast<size_t>(m[i])] += g.data[i];
    });
  }

  int reshape(int a, std::vector<int> new_shape) {
    const Tensor<S>& A = val(a);
    Tensor<S> out(std::move(new_shape));
    check_arg(out.numel() == A.numel(), "reshape: numel mismatch");
    out.data = A.data;
    return push(std::move(out), wants(a), [a](Tape& t, const Tensor<S>& g) {
      if (!t.needs_grad(a)) return;
      Tensor<S>& ga = t.grad(a);
      for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
    });
  }

  // Prepend one row per vector along axis 1: a [B,L,D] + k vectors [D] -> [B,k+L,D].
  int prepend_rows(int a, const std::vector<int>& vecs) {
    const Tensor<S>& A = val(a);
    check_arg(A.rank() == 3, "prepend_rows: need rank 3");
    const int B = A.dim(0), L = A.dim(1), D = A.dim(2);
    const int k = static_cast<int>(vecs.size());
    for (int v : vecs) check_arg(val(v).numel() == D, "prepend_rows: bad cue dim");
    Tensor<S> out({B, k + L, D});
    for (int b = 0; b < B; ++b) {
      for (int j = 0; j < k; ++j) {
        const Tensor<S>& V = val(vecs[static_cast<size_t>(j)]);
        std::copy(V.data.begin(), V.data.end(), &out.at(b, j, 0));
      }
      std::copy(&A.at(b, 0, 0), &A.at(b, 0, 0) + static_cast<size_t>(L) * D, &out.at(b, k, 0));
    }
    bool needs = needs_grad(a);
    for (int v : vecs) needs = needs || needs_grad(v);
    auto vs = vecs;
    return push(std::move(out), needs, [a, vs, B, L, D, k](Tape& t, const Tensor<S>& g) {
      auto gat = [&](int b, int l, int d) -> const S& {
        return g.data[(static_cast<size_t>(b) * (k + L) + l) * D + d];
      };
      for (int j = 0; j < k; ++j) {
        if (!t.needs_grad(vs[static_cast<size_t>(j)])) continue;
        Tensor<S>& gv = t.grad(vs[static_cast<size_t>(j)]);
        for (int b = 0; b < B; ++b)
          for (int d = 0; d < D; ++d) gv.data[static_cast<size_t>(d)] += gat(b, j, d);
      }
      if (t.needs_grad(a)) {
        Tensor<S>& ga = t.grad(a);
        for (int b = 0; b < B; ++b)
          for (int l = 0; l < L; ++l)
            for (int d = 0; d < D; ++d) ga.at(b, l, d) += gat(b, k + l, d);
      }
    });
  }

  // Drop the first k rows of axis 1: [B,L,D] -> [B,L-k,D].
  int drop_rows(int a, int k) {
    const Tensor<S>& A = val(a);
    check_arg(A.rank() == 3 && A.dim(1) > k, "drop_rows: bad k");
    const int B = A.dim(0), L = A.dim(1), D = A.dim(2);
    Tensor<S> out({B, L - k, D});
    for (int b = 0; b < B; ++b)
      std::copy(&A.at(b, k, 0), &A.at(b, k, 0) + static_cast<size_t>(L - k) * D, &out.at(b, 0, 0));
    return push(std::move(out), wants(a), [a, B, L, D, k](Tape& t, const Tensor<S>& g) {
      if (!t.needs_grad(a)) return;
      Tensor<S>& ga = t.grad(a);
      for (int b = 0; b < B; ++b)
        for (int l = 0; l < L - k; ++l)
          for (int d = 0; d < D; ++d)
            ga.at(b, k + l, d) += g.data[(static_cast<size_t>(b) * (L - k) + l) * D + d];
    });
  }

  // Slice one row of axis 1: [B,L,D] -> [B,D].
  int slice_row(int a, int row) {
    const Tensor<S>& A = val(a);
    check_arg(A.rank() == 3 && row >= 0 && row < A.dim(1), "slice_row: bad row");
    const int B = A.dim(0), D = A.dim(2);
    Tensor<S> out({B, D});
    for (int b = 0; b < B; ++b)
      std::copy(&A.at(b, row, 0), &A.at(b, row, 0) + D, &out.at(b, 0));
    return push(std::move(out), wants(a), [a, B, D, row](Tape& t, const Tensor<S>& g) {
      if (!t.needs_grad(a)) return;
      Tensor<S>& ga = t.grad(a);
      for (int b = 0; b < B; ++b)
        for (int d = 0; d < D; ++d) ga.at(b, row, d) += g.at(b, d);
    });
  }

  // [R,C] -> [C], arithmetic mean over rows.
  int mean_axis0(int a) {
    const Tensor<S>& A = val(a);
    check_arg(A.rank() == 2, "mean_axis0: need rank 2");
    const int R = A.dim(0), C = A.dim(1);
    Tensor<S> out({C});
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c) out.data[static_cast<size_t>(c)] += A.at(r, c);
    for (S& v : out.data) v /= static_cast<S>(R);
    return push(std::move(out), wants(a), [a, R, C](Tape& t, const Tensor<S>& g) {
      if (!t.needs_grad(a)) return;
      Tensor<S>& ga = t.grad(a);
      for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) ga.at(r, c) += g.data[static_cast<size_t>(c)] / static_cast<S>(R);
    });
  }

  // ---- chunk round trips ----

  // Overlap-add with per-position count normalization; inverse of
  // segmentation. a: [N,C,D] chunks at the given hop; output [F_out, D]
  // (F_out strips the segmentation padding).
  int overlap_add_chunks(int a, int hop, int f_out) {
    const Tensor<S>& A = val(a);
    check_arg(A.rank() == 3, "overlap_add_chunks: need rank 3");
    const int N = A.dim(0), C = A.dim(1), D = A.dim(2);
    const int fp = (N - 1) * hop + C;
    check_arg(f_out > 0 && f_out <= fp, "overlap_add_chunks: bad output length");
    std::vector<int> count(static_cast<size_t>(fp), 0);
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) count[static_cast<size_t>(n * hop + c)]++;
    Tensor<S> out({f_out, D});
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c) {
        const int f = n * hop + c;
        if (f >= f_out) continue;
        for (int d = 0; d < D; ++d) out.at(f, d) += A.at(n, c, d);
      }
    for (int f = 0; f < f_out; ++f)
      for (int d = 0; d < D; ++d) out.at(f, d) /= static_cast<S>(count[static_cast<size_t>(f)]);
    auto cnt = std::make_shared<std::vector<int>>(std::move(count));
    return push(std::move(out), wants(a), [a, N, C, D, hop, f_out, cnt](Tape& t, const Tensor<S>& g) {
      if (!t.needs_grad(a)) return;
      Tensor<S>& ga = t.grad(a);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const int f = n * hop + c;
          if (f >= f_out) continue;
          const S inv = S(1) / static_cast<S>((*cnt)[static_cast<size_t>(f)]);
          for (int d = 0; d < D; ++d) ga.at(n, c, d) += g.data[(static_cast<size_t>(f)) * D + d] * inv;
        }
    });
  }

  // Transposed-convolution style overlap-add: a [F,K] frames of taps at
  // the given stride, raw sum into a length-T signal.
  int frame_overlap_add(int a, int stride, int t_out) {
    const Tensor<S>& A = val(a);
    check_arg(A.rank() == 2, "frame_overlap_add: need rank 2");
    const int F = A.dim(0), K = A.dim(1);
    Tensor<S> out({t_out});
    for (int f = 0; f < F; ++f)
      for (int k = 0; k < K; ++k) {
        const int tpos = f * stride + k;
        if (tpos < t_out) out.data[static_cast<size_t>(tpos)] += A.at(f, k);
      }
    return push(std::move(out), wants(a), [a, F, K, stride, t_out](Tape& t, const Tensor<S>& g) {
      if (!t.needs_grad(a)) return;
      Tensor<S>& ga = t.grad(a);
      for (int f = 0; f < F; ++f)
        for (int k = 0; k < K; ++k) {
          const int tpos = f * stride + k;
          if (tpos < t_out) ga.at(f, k) += g.data[static_cast<size_t>(tpos)];
        }
    });
  }

  // Trim or zero-pad a rank-1 signal to a target length.
  int fit_length1d(int a, int t_out) {
    const Tensor<S>& A = val(a);
    check_arg(A.rank() == 1, "fit_length1d: need rank 1");
    const int n = std::min<int>(A.dim(0), t_out);
    Tensor<S> out({t_out});
    std::copy(A.data.begin(), A.data.begin() + n, out.data.begin());
    return push(std::move(out), wants(a), [a, n](Tape& t, const Tensor<S>& g) {
      if (!t.needs_grad(a)) return;
      Tensor<S>& ga = t.grad(a);
      for (int i = 0; i < n; ++i) ga.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(i)];
    });
  }

  // ---- scalar graph ----

  int dot(int a, int b) {
    const Tensor<S>& A = val(a);
    const Tensor<S>& B = val(b);
    check_arg(A.numel() == B.numel(), "dot: length mismatch");
    S acc = S(0);
    for (size_t i = 0; i < A.data.size(); ++i) acc += A.data[i] * B.data[i];
    Tensor<S> out({1});
    out.data[0] = acc;
    return push(std::move(out), wants(a, b), [a, b](Tape& t, const Tensor<S>& g) {
      const S g0 = g.data[0];
      if (t.needs_grad(a)) {
        Tensor<S>& ga = t.grad(a);
        const Tensor<S>& B = t.val(b);
        for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g0 * B.data[i];
      }
      if (t.needs_grad(b)) {
        Tensor<S>& gb = t.grad(b);
        const Tensor<S>& A = t.val(a);
        for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += g0 * A.data[i];
      }
    });
  }

  // out = s * v, scalar node times vector node.
  int vscale(int v, int s) {
    const Tensor<S>& V = val(v);
    check_arg(val(s).numel() == 1, "vscale: scale must be scalar");
    const S sv = val(s).data[0];
    Tensor<S> out = V;
    for (S& x : out.data) x *= sv;
    return push(std::move(out), wants(v, s), [v, s](Tape& t, const Tensor<S>& g) {
      if (t.needs_grad(v)) {
        const S sv = t.val(s).data[0];
        Tensor<S>& gv = t.grad(v);
        for (size_t i = 0; i < g.data.size(); ++i) gv.data[i] += sv * g.data[i];
      }
      if (t.needs_grad(s)) {
        const Tensor<S>& V = t.val(v);
        S acc = S(0);
        for (size_t i = 0; i < g.data.size(); ++i) acc += g.data[i] * V.data[i];
        t.grad(s).data[0] += acc;
      }
    });
  }

  int sdiv(int a, int b) {
    check_arg(val(a).numel() == 1 && val(b).numel() == 1, "sdiv: scalars only");
    Tensor<S> out({1});
    out.data[0] = val(a).data[0] / val(b).data[0];
    return push(std::move(out), wants(a, b), [a, b](Tape& t, const Tensor<S>& g) {
      const S g0 = g.data[0];
      const S av = t.val(a).data[0], bv = t.val(b).data[0];
      if (t.needs_grad(a)) t.grad(a).data[0] += g0 / bv;
      if (t.needs_grad(b)) t.grad(b).data[0] -= g0 * av / (bv * bv);
    });
  }

  int smul(int a, int b) {
    check_arg(val(a).numel() == 1 && val(b).numel() == 1, "smul: scalars only");
    Tensor<S> out({1});
    out.data[0] = val(a).data[0] * val(b).data[0];
    return push(std::move(out), wants(a, b), [a, b](Tape& t, const Tensor<S>& g) {
      const S g0 = g.data[0];
      if (t.needs_grad(a)) t.grad(a).data[0] += g0 * t.val(b).data[0];
      if (t.needs_grad(b)) t.grad(b).data[0] += g0 * t.val(a).data[0];
    });
  }

  int sln(int a) {
    check_arg(val(a).numel() == 1, "sln: scalar only");
    Tensor<S> out({1});
    out.data[0] = std::log(val(a).data[0]);
    return push(std::move(out), wants(a), [a](Tape& t, const Tensor<S>& g) {
      if (t.needs_grad(a)) t.grad(a).data[0] += g.data[0] / t.val(a).data[0];
    });
  }

  // -log softmax(logits)[target]; numerically stable fused form.
  int cross_entropy_logits(int a, int target) {
    const Tensor<S>& A = val(a);
    check_arg(A.rank() == 1, "cross_entropy_logits: need rank-1 logits");
    const int n = A.dim(0);
    check_arg(target >= 0 && target < n, "cross_entropy_logits: bad target");
    S mx = A.data[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, A.data[static_cast<size_t>(j)]);
    S lse = S(0);
    for (int j = 0; j < n; ++j) lse += std::exp(A.data[static_cast<size_t>(j)] - mx);
    lse = std::log(lse) + mx;
    Tensor<S> out({1});
    out.data[0] = lse - A.data[static_cast<size_t>(target)];
    return push(std::move(out), wants(a), [a, target, n](Tape& t, const Tensor<S>& g) {
      if (!t.needs_grad(a)) return;
      const Tensor<S>& A = t.val(a);
      S mx = A.data[0];
      for (int j = 1; j < n; ++j) mx = std::max(mx, A.data[static_cast<size_t>(j)]);
      S sum = S(0);
      for (int j = 0; j < n; ++j) sum += std::exp(A.data[static_cast<size_t>(j)] - mx);
      Tensor<S>& ga = t.grad(a);
      const S g0 = g.data[0];
      for (int j = 0; j < n; ++j) {
        const S p = std::exp(A.data[static_cast<size_t>(j)] - mx) / sum;
        ga.data[static_cast<size_t>(j)] += g0 * (p - (j == target ? S(1) : S(0)));
      }
    });
  }

 private:
  template <typename... Ids>
  bool wants(Ids... ids) const {
    return (... || needs_grad(ids));
  }

  void accum_eq(int id, const Tensor<S>& g) {
    if (!needs_grad(id)) return;
    Tensor<S>& t = grad(id);
    for (size_t i = 0; i < g.data.size(); ++i) t.data[i] += g.data[i];
  }

  int push(Tensor<S> v, bool needs, std::function<void(Tape&, const Tensor<S>&)> bw) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs;
    if (needs) n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
};

}  // namespace cse
