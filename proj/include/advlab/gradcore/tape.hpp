#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "advlab/error.hpp"
#include "advlab/gradcore/tensor.hpp"

namespace advlab {

/// Handle to a node on a Tape.
struct Var {
  std::uint32_t id = 0;
  friend bool operator==(Var, Var) = default;
};

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// C (+)= op(A) * op(B), all row-major. A is rows_a x cols_a as stored.
template <class T>
void gemm(const T* a, std::size_t rows_a, std::size_t cols_a, bool trans_a, const T* b,
          std::size_t rows_b, std::size_t cols_b, bool trans_b, T* c, bool accumulate) {
  using Map = Eigen::Map<const RowMat<T>>;
  const Map am(a, static_cast<Eigen::Index>(rows_a), static_cast<Eigen::Index>(cols_a));
  const Map bm(b, static_cast<Eigen::Index>(rows_b), static_cast<Eigen::Index>(cols_b));
  const auto m = static_cast<Eigen::Index>(trans_a ? cols_a : rows_a);
  const auto n = static_cast<Eigen::Index>(trans_b ? rows_b : cols_b);
  Eigen::Map<RowMat<T>> cm(c, m, n);
  if (!accumulate) cm.setZero();
  if (!trans_a && !trans_b) {
    cm.noalias() += am * bm;
  } else if (trans_a && !trans_b) {
    cm.noalias() += am.transpose() * bm;
  } else if (!trans_a && trans_b) {
    cm.noalias() += am * bm.transpose();
  } else {
    cm.noalias() += am.transpose() * bm.transpose();
  }
}

inline std::atomic<std::uint64_t>& backward_pass_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

}  // namespace detail

enum class Reduction { mean, sum };

/// Wengert list for reverse-mode differentiation. Nodes are appended in
/// evaluation order, so ascending id is a topological order and backward()
/// walks ids in descending order. A tape supports one backward pass.
///
/// Not thread-safe; use one tape per thread.
template <std::floating_point T>
class Tape {
 public:
  using Grad = std::vector<T>;
  using BackwardFn = std::function<void(Tape&, const Grad&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  Var constant(Tensor<T> value) { return push(std::move(value), false, nullptr); }
  Var variable(Tensor<T> value) { return push(std::move(value), true, nullptr); }

  const Tensor<T>& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  /// Gradient of the differentiated scalar w.r.t. `v`; zeros when no path
  /// from `v` reached the scalar.
  Tensor<T> grad(Var v) const {
    const Node& n = node(v);
    if (!consumed_) throw Error("grad() requested before backward()");
    if (n.grad.empty()) return Tensor<T>(n.value.shape());
    return Tensor<T>(n.value.shape(), n.grad);
  }

  void backward(Var scalar) {
    if (consumed_) throw Error("tape already consumed by a backward pass");
    consumed_ = true;
    detail::backward_pass_counter().fetch_add(1, std::memory_order_relaxed);
    Node& root = nodes_.at(scalar.id);
    if (root.value.size() != 1) {
      throw ShapeError("backward() needs a scalar, got shape " + shape_str(root.value.shape()));
    }
    if (!root.requires_grad) return;
    root.grad.assign(1, T{1});
    for (std::size_t i = scalar.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
      n.backward(*this, n.grad);
    }
    for (const Node& n : nodes_) {
      if (!n.backward && n.requires_grad) {
        for (const T g : n.grad) {
          if (!std::isfinite(g)) throw NumericError("non-finite gradient in backward pass");
        }
      }
    }
  }

  /// Total backward passes run by all tapes in this process.
  static std::uint64_t backward_passes() {
    return detail::backward_pass_counter().load(std::memory_order_relaxed);
  }

  // ---- primitives ---------------------------------------------------------

  /// a + b, where b has a's shape or a suffix of it (broadcast over the
  /// leading dimensions).
  Var add(Var a, Var b) {
    const Tensor<T>& av = value(a);
    const Tensor<T>& bv = value(b);
    const std::size_t inner = bv.size();
    if (!is_suffix(bv.shape(), av.shape())) {
      throw ShapeError("add: " + shape_str(bv.shape()) + " does not broadcast to " +
                       shape_str(av.shape()));
    }
    Tensor<T> out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % inner];
    return push_op(std::move(out), {a, b}, [a, b, inner](Tape& t, const Grad& g) {
      if (t.requires_grad(a)) {
        auto ga = t.acc(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (t.requires_grad(b)) {
        auto gb = t.acc(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % inner] += g[i];
      }
    });
  }

  /// Elementwise product of same-shape tensors.
  Var mul(Var a, Var b) {
    const Tensor<T>& av = value(a);
    const Tensor<T>& bv = value(b);
    if (av.shape() != bv.shape()) throw ShapeError("mul: shape mismatch");
    Tensor<T> out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return push_op(std::move(out), {a, b}, [a, b](Tape& t, const Grad& g) {
      const auto& av = t.value(a);
      const auto& bv = t.value(b);
      if (t.requires_grad(a)) {
        auto ga = t.acc(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
      }
      if (t.requires_grad(b)) {
        auto gb = t.acc(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
      }
    });
  }

  /// a * scale + shift with constant scale and shift.
  Var affine(Var a, T scale, T shift = T{0}) {
    Tensor<T> out = value(a);
    for (auto& v : out.data()) v = v * scale + shift;
    return push_op(std::move(out), {a}, [a, scale](Tape& t, const Grad& g) {
      auto ga = t.acc(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * scale;
    });
  }

  /// [..., K] x [K, N] -> [..., N].
  Var matmul(Var a, Var w) {
    const Tensor<T>& av = value(a);
    const Tensor<T>& wv = value(w);
    if (wv.rank() != 2 || av.rank() < 1 || av.shape().back() != wv.dim(0)) {
      throw ShapeError("matmul: " + shape_str(av.shape()) + " x " + shape_str(wv.shape()));
    }
    const std::size_t k = wv.dim(0);
    const std::size_t n = wv.dim(1);
    const std::size_t m = av.size() / k;
    Shape s = av.shape();
    s.back() = n;
    Tensor<T> out(std::move(s));
    detail::gemm(av.data().data(), m, k, false, wv.data().data(), k, n, false, out.data().data(),
                 false);
    return push_op(std::move(out), {a, w}, [a, w, m, k, n](Tape& t, const Grad& g) {
      if (t.requires_grad(a)) {
        detail::gemm(g.data(), m, n, false, t.value(w).data().data(), k, n, true,
                     t.acc(a).data(), true);
      }
      if (t.requires_grad(w)) {
        detail::gemm(t.value(a).data().data(), m, k, true, g.data(), m, n, false,
                     t.acc(w).data(), true);
      }
    });
  }

  /// Batched product: [B,M,K] x [B,K,N], or [B,M,K] x [B,N,K]^T when
  /// transpose_b is set.
  Var bmm(Var a, Var b, bool transpose_b = false) {
    const Tensor<T>& av = value(a);
    const Tensor<T>& bv = value(b);
    if (av.rank() != 3 || bv.rank() != 3 || av.dim(0) != bv.dim(0)) {
      throw ShapeError("bmm: " + shape_str(av.shape()) + " x " + shape_str(bv.shape()));
    }
    const std::size_t batch = av.dim(0), m = av.dim(1), k = av.dim(2);
    const std::size_t br = bv.dim(1), bc = bv.dim(2);
    const std::size_t n = transpose_b ? br : bc;
    if ((transpose_b ? bc : br) != k) throw ShapeError("bmm: inner dimension mismatch");
    Tensor<T> out({batch, m, n});
    for (std::size_t i = 0; i < batch; ++i) {
      detail::gemm(av.data().data() + i * m * k, m, k, false, bv.data().data() + i * br * bc, br,
                   bc, transpose_b, out.data().data() + i * m * n, false);
    }
    return push_op(std::move(out), {a, b},
                   [a, b, batch, m, k, br, bc, n, transpose_b](Tape& t, const Grad& g) {
                     const T* ad = t.value(a).data().data();
                     const T* bd = t.value(b).data().data();
                     const bool need_a = t.requires_grad(a);
                     const bool need_b = t.requires_grad(b);
                     T* ga = need_a ? t.acc(a).data() : nullptr;
                     T* gb = need_b ? t.acc(b).data() : nullptr;
                     for (std::size_t i = 0; i < batch; ++i) {
                       const T* gi = g.data() + i * m * n;
                       if (need_a) {
                         // out = a b  -> ga = g b^T ; out = a b^T -> ga = g b
                         detail::gemm(gi, m, n, false, bd + i * br * bc, br, bc, !transpose_b,
                                      ga + i * m * k, true);
                       }
                       if (need_b) {
                         if (transpose_b) {
                           detail::gemm(gi, m, n, true, ad + i * m * k, m, k, false,
                                        gb + i * br * bc, true);
                         } else {
                           detail::gemm(ad + i * m * k, m, k, true, gi, m, n, false,
                                        gb + i * br * bc, true);
                         }
                       }
                     }
                   });
  }

  /// 2-D convolution, NHWC input, weights [kh, kw, C_in, C_out], bias [C_out].
  Var conv2d(Var x, Var w, Var bias, std::size_t stride, std::size_t pad) {
    const Tensor<T>& xv = value(x);
    const Tensor<T>& wv = value(w);
    if (xv.rank() != 4 || wv.rank() != 4 || wv.dim(2) != xv.dim(3) || stride == 0) {
      throw ShapeError("conv2d: input " + shape_str(xv.shape()) + " weights " +
                       shape_str(wv.shape()));
    }
    if (value(bias).shape() != Shape{wv.dim(3)}) throw ShapeError("conv2d: bias shape");
    ConvGeom geo{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), wv.dim(0), wv.dim(1), wv.dim(3),
                 stride, pad, 0, 0};
    if (geo.h + 2 * pad < geo.kh || geo.w + 2 * pad < geo.kw) throw ShapeError("conv2d: kernel too large");
    geo.ho = (geo.h + 2 * pad - geo.kh) / stride + 1;
    geo.wo = (geo.w + 2 * pad - geo.kw) / stride + 1;
    const std::size_t rows = geo.n * geo.ho * geo.wo;
    const std::size_t cols = geo.kh * geo.kw * geo.c;
    std::vector<T> col(rows * cols);
    im2col(geo, xv.data().data(), col.data());
    Tensor<T> out({geo.n, geo.ho, geo.wo, geo.o});
    detail::gemm(col.data(), rows, cols, false, wv.data().data(), cols, geo.o, false,
                 out.data().data(), false);
    const auto& bv = value(bias);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t o = 0; o < geo.o; ++o) out[r * geo.o + o] += bv[o];
    }
    return push_op(std::move(out), {x, w, bias},
                   [x, w, bias, geo, rows, cols, col = std::move(col)](Tape& t, const Grad& g) {
                     if (t.requires_grad(w)) {
                       detail::gemm(col.data(), rows, cols, true, g.data(), rows, geo.o, false,
                                    t.acc(w).data(), true);
                     }
                     if (t.requires_grad(bias)) {
                       auto gb = t.acc(bias);
                       for (std::size_t r = 0; r < rows; ++r) {
                         for (std::size_t o = 0; o < geo.o; ++o) gb[o] += g[r * geo.o + o];
                       }
                     }
                     if (t.requires_grad(x)) {
                       std::vector<T> gcol(rows * cols);
                       detail::gemm(g.data(), rows, geo.o, false, t.value(w).data().data(), cols,
                                    geo.o, true, gcol.data(), false);
                       col2im(geo, gcol.data(), t.acc(x).data());
                     }
                   });
  }

  Var relu(Var a) {
    Tensor<T> out = value(a);
    for (auto& v : out.data()) {
      relu_margin_ = std::min(relu_margin_, std::abs(v));
      v = v > T{0} ? v : T{0};
    }
    return push_op(std::move(out), {a}, [a](Tape& t, const Grad& g) {
      const auto& av = t.value(a);
      auto ga = t.acc(a);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (av[i] > T{0}) ga[i] += g[i];
      }
    });
  }

  /// Exact GELU, x * Phi(x).
  Var gelu(Var a) {
    Tensor<T> out = value(a);
    for (auto& v : out.data()) v = v * T{0.5} * (T{1} + std::erf(v * T{std::numbers::sqrt2 / 2}));
    return push_op(std::move(out), {a}, [a](Tape& t, const Grad& g) {
      const auto& av = t.value(a);
      auto ga = t.acc(a);
      const T inv_sqrt_2pi = T{std::numbers::inv_sqrtpi / std::numbers::sqrt2};
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T x = av[i];
        const T cdf = T{0.5} * (T{1} + std::erf(x * T{std::numbers::sqrt2 / 2}));
        const T pdf = inv_sqrt_2pi * std::exp(T{-0.5} * x * x);
        ga[i] += g[i] * (cdf + x * pdf);
      }
    });
  }

  /// Normalizes over the last dimension, then applies gamma and beta.
  Var layer_norm(Var x, Var gamma, Var beta, T eps = T{1e-6}) {
    const Tensor<T>& xv = value(x);
    const std::size_t d = xv.shape().back();
    if (value(gamma).shape() != Shape{d} || value(beta).shape() != Shape{d}) {
      throw ShapeError("layer_norm: gamma/beta must have shape (" + std::to_string(d) + ")");
    }
    const std::size_t rows = xv.size() / d;
    std::vector<T> xhat(xv.size());
    std::vector<T> inv_std(rows);
    Tensor<T> out(xv.shape());
    const auto& gv = value(gamma);
    const auto& bv = value(beta);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* row = xv.data().data() + r * d;
      T mean = 0;
      for (std::size_t j = 0; j < d; ++j) mean += row[j];
      mean /= static_cast<T>(d);
      T var = 0;
      for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
      var /= static_cast<T>(d);
      inv_std[r] = T{1} / std::sqrt(var + eps);
      for (std::size_t j = 0; j < d; ++j) {
        const T h = (row[j] - mean) * inv_std[r];
        xhat[r * d + j] = h;
        out[r * d + j] = h * gv[j] + bv[j];
      }
    }
    return push_op(std::move(out), {x, gamma, beta},
                   [x, gamma, beta, d, rows, xhat = std::move(xhat),
                    inv_std = std::move(inv_std)](Tape& t, const Grad& g) {
                     if (t.requires_grad(gamma)) {
                       auto gg = t.acc(gamma);
                       for (std::size_t i = 0; i < g.size(); ++i) gg[i % d] += g[i] * xhat[i];
                     }
                     if (t.requires_grad(beta)) {
                       auto gb = t.acc(beta);
                       for (std::size_t i = 0; i < g.size(); ++i) gb[i % d] += g[i];
                     }
                     if (t.requires_grad(x)) {
                       const auto& gv = t.value(gamma);
                       auto gx = t.acc(x);
                       for (std::size_t r = 0; r < rows; ++r) {
                         T mean_g = 0, mean_gh = 0;
                         for (std::size_t j = 0; j < d; ++j) {
                           const T gh = g[r * d + j] * gv[j];
                           mean_g += gh;
                           mean_gh += gh * xhat[r * d + j];
                         }
                         mean_g /= static_cast<T>(d);
                         mean_gh /= static_cast<T>(d);
                         for (std::size_t j = 0; j < d; ++j) {
                           const T gh = g[r * d + j] * gv[j];
                           gx[r * d + j] +=
                               inv_std[r] * (gh - mean_g - xhat[r * d + j] * mean_gh);
                         }
                       }
                     }
                   });
  }

  /// Softmax over the last dimension.
  Var softmax(Var a) {
    const Tensor<T>& av = value(a);
    const std::size_t d = av.shape().back();
    Tensor<T> out(av.shape());
    softmax_rows(av.data().data(), out.data().data(), av.size() / d, d);
    return push_op(std::move(out), {a}, [a, d, self = next_id()](Tape& t, const Grad& g) {
      const auto& y = t.value(Var{self});
      auto ga = t.acc(a);
      for (std::size_t r = 0; r < g.size() / d; ++r) {
        T dot = 0;
        for (std::size_t j = 0; j < d; ++j) dot += g[r * d + j] * y[r * d + j];
        for (std::size_t j = 0; j < d; ++j) ga[r * d + j] += y[r * d + j] * (g[r * d + j] - dot);
      }
    });
  }

  /// Softmax cross-entropy of logits [N, C] against integer labels.
  Var cross_entropy(Var logits, std::span<const int> labels, Reduction reduction = Reduction::mean) {
    const Tensor<T>& lv = value(logits);
    check_labels(lv, labels, "cross_entropy");
    const std::size_t n = lv.dim(0), c = lv.dim(1);
    std::vector<T> prob(lv.size());
    softmax_rows(lv.data().data(), prob.data(), n, c);
    T loss = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const T* row = lv.data().data() + i * c;
      const T mx = *std::max_element(row, row + c);
      T se = 0;
      for (std::size_t j = 0; j < c; ++j) se += std::exp(row[j] - mx);
      loss += mx + std::log(se) - row[labels[i]];
    }
    const T scale = reduction == Reduction::mean ? T{1} / static_cast<T>(n) : T{1};
    loss *= scale;
    if (!std::isfinite(loss)) throw NumericError("non-finite cross-entropy loss");
    std::vector<int> lab(labels.begin(), labels.end());
    return push_op(Tensor<T>({}, std::vector<T>{loss}), {logits},
                   [logits, c, scale, prob = std::move(prob), lab = std::move(lab)](
                       Tape& t, const Grad& g) {
                     auto gl = t.acc(logits);
                     const T s = g[0] * scale;
                     for (std::size_t i = 0; i < lab.size(); ++i) {
                       for (std::size_t j = 0; j < c; ++j) {
                         const T onehot = static_cast<int>(j) == lab[i] ? T{1} : T{0};
                         gl[i * c + j] += s * (prob[i * c + j] - onehot);
                       }
                     }
                   });
  }

  /// Sum over rows of values[n, labels[n]] for a [N, C] tensor.
  Var pick(Var values, std::span<const int> labels) {
    const Tensor<T>& v = value(values);
    check_labels(v, labels, "pick");
    const std::size_t c = v.dim(1);
    T total = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) total += v[i * c + labels[i]];
    std::vector<int> lab(labels.begin(), labels.end());
    return push_op(Tensor<T>({}, std::vector<T>{total}), {values},
                   [values, c, lab = std::move(lab)](Tape& t, const Grad& g) {
                     auto gv = t.acc(values);
                     for (std::size_t i = 0; i < lab.size(); ++i) gv[i * c + lab[i]] += g[0];
                   });
  }

  Var sum(Var a) {
    const auto& av = value(a);
    T total = 0;
    for (const T v : av.data()) total += v;
    return push_op(Tensor<T>({}, std::vector<T>{total}), {a}, [a](Tape& t, const Grad& g) {
      auto ga = t.acc(a);
      for (auto& v : ga) v += g[0];
    });
  }

  Var reshape(Var a, Shape shape) {
    Tensor<T> out = value(a).reshaped(std::move(shape));
    return push_op(std::move(out), {a}, [a](Tape& t, const Grad& g) {
      auto ga = t.acc(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }

  /// Non-overlapping k x k average pooling on NHWC; H and W must divide by k.
  Var avg_pool2d(Var x, std::size_t k) {
    const auto& xv = value(x);
    if (xv.rank() != 4 || k == 0 || xv.dim(1) % k || xv.dim(2) % k) {
      throw ShapeError("avg_pool2d: " + shape_str(xv.shape()) + " not divisible by " +
                       std::to_string(k));
    }
    const std::size_t n = xv.dim(0), h = xv.dim(1), w = xv.dim(2), c = xv.dim(3);
    const std::size_t ho = h / k, wo = w / k;
    const T inv = T{1} / static_cast<T>(k * k);
    Tensor<T> out({n, ho, wo, c});
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j)
          for (std::size_t ch = 0; ch < c; ++ch)
            out[((b * ho + i / k) * wo + j / k) * c + ch] += xv[((b * h + i) * w + j) * c + ch] * inv;
    return push_op(std::move(out), {x}, [x, n, h, w, c, k, ho, wo, inv](Tape& t, const Grad& g) {
      auto gx = t.acc(x);
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < h; ++i)
          for (std::size_t j = 0; j < w; ++j)
            for (std::size_t ch = 0; ch < c; ++ch)
              gx[((b * h + i) * w + j) * c + ch] += g[((b * ho + i / k) * wo + j / k) * c + ch] * inv;
    });
  }

  /// NHWC -> [N, C] mean over spatial positions.
  Var global_avg_pool(Var x) {
    const auto& xv = value(x);
    if (xv.rank() != 4) throw ShapeError("global_avg_pool expects NHWC");
    const std::size_t n = xv.dim(0), hw = xv.dim(1) * xv.dim(2), c = xv.dim(3);
    const T inv = T{1} / static_cast<T>(hw);
    Tensor<T> out({n, c});
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t p = 0; p < hw; ++p)
        for (std::size_t ch = 0; ch < c; ++ch) out[b * c + ch] += xv[(b * hw + p) * c + ch] * inv;
    return push_op(std::move(out), {x}, [x, n, hw, c, inv](Tape& t, const Grad& g) {
      auto gx = t.acc(x);
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t p = 0; p < hw; ++p)
          for (std::size_t ch = 0; ch < c; ++ch) gx[(b * hw + p) * c + ch] += g[b * c + ch] * inv;
    });
  }

  /// Axis permutation of a rank-4 tensor: out.dim(i) = in.dim(perm[i]).
  Var permute(Var x, std::array<std::size_t, 4> perm) {
    const auto& xv = value(x);
    if (xv.rank() != 4) throw ShapeError("permute expects rank 4");
    std::array<std::size_t, 4> in_dims{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3)};
    std::array<std::size_t, 4> in_strides{in_dims[1] * in_dims[2] * in_dims[3],
                                          in_dims[2] * in_dims[3], in_dims[3], 1};
    Shape out_shape(4);
    std::array<std::size_t, 4> strides{};
    for (std::size_t i = 0; i < 4; ++i) {
      out_shape[i] = in_dims[perm[i]];
      strides[i] = in_strides[perm[i]];
    }
    std::vector<std::size_t> src(xv.size());
    std::size_t o = 0;
    for (std::size_t a = 0; a < out_shape[0]; ++a)
      for (std::size_t b = 0; b < out_shape[1]; ++b)
        for (std::size_t c = 0; c < out_shape[2]; ++c)
          for (std::size_t d = 0; d < out_shape[3]; ++d)
            src[o++] = a * strides[0] + b * strides[1] + c * strides[2] + d * strides[3];
    Tensor<T> out(out_shape);
    for (std::size_t i = 0; i < src.size(); ++i) out[i] = xv[src[i]];
    return push_op(std::move(out), {x}, [x, src = std::move(src)](Tape& t, const Grad& g) {
      auto gx = t.acc(x);
      for (std::size_t i = 0; i < src.size(); ++i) gx[src[i]] += g[i];
    });
  }

  /// [B, T, D] with token [D] -> [B, T + 1, D], token first.
  Var prepend_token(Var x, Var token) {
    const auto& xv = value(x);
    const auto& tv = value(token);
    if (xv.rank() != 3 || tv.shape() != Shape{xv.dim(2)}) throw ShapeError("prepend_token shapes");
    const std::size_t b = xv.dim(0), n = xv.dim(1), d = xv.dim(2);
    Tensor<T> out({b, n + 1, d});
    for (std::size_t i = 0; i < b; ++i) {
      std::copy(tv.data().begin(), tv.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * (n + 1) * d));
      std::copy(xv.data().begin() + static_cast<std::ptrdiff_t>(i * n * d),
                xv.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * n * d),
                out.data().begin() + static_cast<std::ptrdiff_t>((i * (n + 1) + 1) * d));
    }
    return push_op(std::move(out), {x, token}, [x, token, b, n, d](Tape& t, const Grad& g) {
      if (t.requires_grad(token)) {
        auto gt = t.acc(token);
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < d; ++j) gt[j] += g[i * (n + 1) * d + j];
      }
      if (t.requires_grad(x)) {
        auto gx = t.acc(x);
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < n * d; ++j) gx[i * n * d + j] += g[(i * (n + 1) + 1) * d + j];
      }
    });
  }

  /// [B, T, D] -> [B, D], the token at `index`.
  Var select_token(Var x, std::size_t index) {
    const auto& xv = value(x);
    if (xv.rank() != 3 || index >= xv.dim(1)) throw ShapeError("select_token out of range");
    const std::size_t b = xv.dim(0), n = xv.dim(1), d = xv.dim(2);
    Tensor<T> out({b, d});
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] = xv[(i * n + index) * d + j];
    return push_op(std::move(out), {x}, [x, b, n, d, index](Tape& t, const Grad& g) {
      auto gx = t.acc(x);
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < d; ++j) gx[(i * n + index) * d + j] += g[i * d + j];
    });
  }

  /// NHWC -> [N, (H/p)(W/p), p*p*C]; patches in row-major order, each patch
  /// flattened as (row, col, channel).
  Var patchify(Var x, std::size_t p) {
    const auto& xv = value(x);
    if (xv.rank() != 4 || p == 0 || xv.dim(1) % p || xv.dim(2) % p) {
      throw ShapeError("patchify: " + shape_str(xv.shape()) + " not divisible by patch " +
                       std::to_string(p));
    }
    const std::size_t n = xv.dim(0), h = xv.dim(1), w = xv.dim(2), c = xv.dim(3);
    const std::size_t ph = h / p, pw = w / p, plen = p * p * c;
    std::vector<std::size_t> src(xv.size());
    std::size_t o = 0;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < ph; ++i)
        for (std::size_t j = 0; j < pw; ++j)
          for (std::size_t di = 0; di < p; ++di)
            for (std::size_t dj = 0; dj < p; ++dj)
              for (std::size_t ch = 0; ch < c; ++ch)
                src[o++] = ((b * h + i * p + di) * w + j * p + dj) * c + ch;
    Tensor<T> out({n, ph * pw, plen});
    for (std::size_t i = 0; i < src.size(); ++i) out[i] = xv[src[i]];
    return push_op(std::move(out), {x}, [x, src = std::move(src)](Tape& t, const Grad& g) {
      auto gx = t.acc(x);
      for (std::size_t i = 0; i < src.size(); ++i) gx[src[i]] += g[i];
    });
  }

  // ---- composites ---------------------------------------------------------

  /// x [B, N, D] times w [D, D_out] plus bias.
  Var dense(Var x, Var w, Var b) { return add(matmul(x, w), b); }

  /// Multi-head scaled dot-product self-attention built from primitives.
  /// x: [B, N, D]; qkv_w: [D, 3D]; qkv_b: [3D]; proj_w: [D, D]; proj_b: [D].
  Var self_attention(Var x, Var qkv_w, Var qkv_b, Var proj_w, Var proj_b, std::size_t heads) {
    const auto& xs = value(x).shape();
    if (xs.size() != 3 || heads == 0 || xs[2] % heads) throw ShapeError("self_attention shapes");
    const std::size_t b = xs[0], n = xs[1], d = xs[2], dh = d / heads;
    Var qkv = dense(x, qkv_w, qkv_b);                         // [B, N, 3D]
    qkv = reshape(qkv, {b, n, 3 * heads, dh});
    qkv = permute(qkv, {0, 2, 1, 3});                          // [B, 3H, N, dh]
    Var q = split_heads(qkv, 0, b, heads, n, dh);
    Var k = split_heads(qkv, 1, b, heads, n, dh);
    Var v = split_heads(qkv, 2, b, heads, n, dh);
    Var scores = affine(bmm(q, k, true), T{1} / std::sqrt(static_cast<T>(dh)));
    Var attn = softmax(scores);                                // [BH, N, N]
    Var ctx = bmm(attn, v);                                    // [BH, N, dh]
    ctx = permute(reshape(ctx, {b, heads, n, dh}), {0, 2, 1, 3});
    ctx = reshape(ctx, {b, n, d});
    return dense(ctx, proj_w, proj_b);
  }

  /// Smallest |input| seen by any relu on this tape (distance to the kink).
  T relu_margin() const { return relu_margin_; }

 private:
  struct Node {
    Tensor<T> value;
    Grad grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  struct ConvGeom {
    std::size_t n, h, w, c, kh, kw, o, stride, pad, ho, wo;
  };

  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw Error("invalid tape variable");
    return nodes_[v.id];
  }

  std::uint32_t next_id() const { return static_cast<std::uint32_t>(nodes_.size()); }

  Var push(Tensor<T> value, bool requires_grad, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad, std::move(fn)});
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  Var push_op(Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn fn) {
    bool rg = false;
    for (const Var v : inputs) rg = rg || requires_grad(v);
    return push(std::move(value), rg, rg ? std::move(fn) : BackwardFn{});
  }

  /// Gradient accumulator for an input node, zero-initialised on first use.
  std::span<T> acc(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.empty()) n.grad.assign(n.value.size(), T{0});
    return n.grad;
  }

  static bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
  }

  static void check_labels(const Tensor<T>& v, std::span<const int> labels, const char* what) {
    if (v.rank() != 2 || v.dim(0) != labels.size()) {
      throw ShapeError(std::string(what) + ": logits " + shape_str(v.shape()) + " vs " +
                       std::to_string(labels.size()) + " labels");
    }
    for (const int y : labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= v.dim(1)) {
        throw ShapeError(std::string(what) + ": label " + std::to_string(y) + " out of range");
      }
    }
  }

  static void softmax_rows(const T* in, T* out, std::size_t rows, std::size_t d) {
    for (std::size_t r = 0; r < rows; ++r) {
      const T* row = in + r * d;
      T* o = out + r * d;
      const T mx = *std::max_element(row, row + d);
      T se = 0;
      for (std::size_t j = 0; j < d; ++j) {
        o[j] = std::exp(row[j] - mx);
        se += o[j];
      }
      for (std::size_t j = 0; j < d; ++j) o[j] /= se;
    }
  }

  /// Slice part `which` (0=q,1=k,2=v) out of a [B, 3H, N, dh] tensor as [B*H, N, dh].
  Var split_heads(Var qkv, std::size_t which, std::size_t b, std::size_t heads, std::size_t n,
                  std::size_t dh) {
    const auto& src = value(qkv);
    const std::size_t block = heads * n * dh;
    Tensor<T> out({b * heads, n, dh});
    for (std::size_t i = 0; i < b; ++i) {
      const T* from = src.data().data() + (i * 3 + which) * block;
      std::copy(from, from + block, out.data().data() + i * block);
    }
    return push_op(std::move(out), {qkv}, [qkv, which, b, block](Tape& t, const Grad& g) {
      auto gq = t.acc(qkv);
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < block; ++j) gq[(i * 3 + which) * block + j] += g[i * block + j];
    });
  }

  static void im2col(const ConvGeom& g, const T* x, T* col) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < g.n; ++b)
      for (std::size_t oi = 0; oi < g.ho; ++oi)
        for (std::size_t oj = 0; oj < g.wo; ++oj, ++r) {
          T* dst = col + r * g.kh * g.kw * g.c;
          for (std::size_t ki = 0; ki < g.kh; ++ki) {
            const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * g.stride + ki) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            for (std::size_t kj = 0; kj < g.kw; ++kj, dst += g.c) {
              const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(oj * g.stride + kj) -
                                        static_cast<std::ptrdiff_t>(g.pad);
              if (ii < 0 || jj < 0 || ii >= static_cast<std::ptrdiff_t>(g.h) ||
                  jj >= static_cast<std::ptrdiff_t>(g.w)) {
                std::fill(dst, dst + g.c, T{0});
              } else {
                const T* s = x + ((b * g.h + static_cast<std::size_t>(ii)) * g.w +
                                  static_cast<std::size_t>(jj)) * g.c;
                std::copy(s, s + g.c, dst);
              }
            }
          }
        }
  }

  static void col2im(const ConvGeom& g, const T* col, T* x) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < g.n; ++b)
      for (std::size_t oi = 0; oi < g.ho; ++oi)
        for (std::size_t oj = 0; oj < g.wo; ++oj, ++r) {
          const T* src = col + r * g.kh * g.kw * g.c;
          for (std::size_t ki = 0; ki < g.kh; ++ki) {
            const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi * g.stride + ki) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            for (std::size_t kj = 0; kj < g.kw; ++kj, src += g.c) {
              const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(oj * g.stride + kj) -
                                        static_cast<std::ptrdiff_t>(g.pad);
              if (ii < 0 || jj < 0 || ii >= static_cast<std::ptrdiff_t>(g.h) ||
                  jj >= static_cast<std::ptrdiff_t>(g.w)) {
                continue;
              }
              T* d = x + ((b * g.h + static_cast<std::size_t>(ii)) * g.w +
                          static_cast<std::size_t>(jj)) * g.c;
              for (std::size_t ch = 0; ch < g.c; ++ch) d[ch] += src[ch];
            }
          }
        }
  }

  std::vector<Node> nodes_;
  bool consumed_ = false;
  T relu_margin_ = std::numeric_limits<T>::infinity();
};

}  // namespace advlab
