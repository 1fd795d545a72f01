#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "segcode/tensor.hpp"

// Differentiable operations on Tensor<S>. Each op computes its value eagerly
// (Eigen does the heavy lifting) and, when a tape is active and some input
// requires grad, records a closure that routes the output gradient back to
// the inputs. Reductions and matrix products use fixed evaluation orders, so
// identical inputs give bit-identical outputs run to run.

namespace segcode {

namespace detail {

template <typename S>
bool wants_grad(std::initializer_list<const Tensor<S>*> inputs) {
  if (!Tape<S>::active()) return false;
  for (const Tensor<S>* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

template <typename S, typename Fn>
void record(Tensor<S>& out, Fn&& rule) {
  out.set_requires_grad(true);
  Tape<S>::active()->record(std::forward<Fn>(rule));
}

template <typename S>
void check_same_shape(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shapes disagree: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape("add", a, b);
  Tensor<S> y = Tensor<S>::zeros(a.shape());
  y.arr() = a.arr() + b.arr();
  if (detail::wants_grad<S>({&a, &b})) {
    detail::record(y, [a, b, y]() mutable {
      if (!y.has_grad()) return;
      if (a.requires_grad()) a.grad_arr() += y.grad_arr();
      if (b.requires_grad()) b.grad_arr() += y.grad_arr();
    });
  }
  return y;
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::check_same_shape("mul", a, b);
  Tensor<S> y = Tensor<S>::zeros(a.shape());
  y.arr() = a.arr() * b.arr();
  if (detail::wants_grad<S>({&a, &b})) {
    detail::record(y, [a, b, y]() mutable {
      if (!y.has_grad()) return;
      if (a.requires_grad()) a.grad_arr() += b.arr() * y.grad_arr();
      if (b.requires_grad()) b.grad_arr() += a.arr() * y.grad_arr();
    });
  }
  return y;
}

/// y = s * x for a one-element gate tensor s.
template <typename S>
Tensor<S> scale(const Tensor<S>& x, const Tensor<S>& s) {
  if (s.numel() != 1) throw DimensionError("scale: gate must be scalar, got " + shape_str(s.shape()));
  const S sv = s.item();
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  y.arr() = x.arr() * sv;
  if (detail::wants_grad<S>({&x, &s})) {
    detail::record(y, [x, s, y, sv]() mutable {
      if (!y.has_grad()) return;
      if (x.requires_grad()) x.grad_arr() += y.grad_arr() * sv;
      if (s.requires_grad()) s.grad_data()[0] += (x.arr() * y.grad_arr()).sum();
    });
  }
  return y;
}

/// Per-row scaling: y[n, :] = a[n] * h[n, :]. a has shape [k] or [k, 1].
template <typename S>
Tensor<S> mul_rows(const Tensor<S>& h, const Tensor<S>& a) {
  if (h.rank() != 2) throw DimensionError("mul_rows: expected matrix, got " + shape_str(h.shape()));
  const Index k = h.dim(0), m = h.dim(1);
  if (a.numel() != k)
    throw DimensionError("mul_rows: row weights " + shape_str(a.shape()) + " vs matrix " +
                         shape_str(h.shape()));
  Tensor<S> y = Tensor<S>::zeros(h.shape());
  auto hm = h.mat(k, m);
  auto ym = y.mat(k, m);
  for (Index n = 0; n < k; ++n) ym.row(n) = hm.row(n) * a.data()[n];
  if (detail::wants_grad<S>({&h, &a})) {
    detail::record(y, [h, a, y, k, m]() mutable {
      if (!y.has_grad()) return;
      auto gy = y.grad_mat(k, m);
      if (h.requires_grad()) {
        auto gh = h.grad_mat(k, m);
        for (Index n = 0; n < k; ++n) gh.row(n) += gy.row(n) * a.data()[n];
      }
      if (a.requires_grad()) {
        auto hm = h.mat(k, m);
        for (Index n = 0; n < k; ++n) a.grad_data()[n] += hm.row(n).dot(gy.row(n));
      }
    });
  }
  return y;
}

/// y = x / s for a one-element tensor s.
template <typename S>
Tensor<S> div_scalar(const Tensor<S>& x, const Tensor<S>& s) {
  if (s.numel() != 1) throw DimensionError("div_scalar: divisor must be scalar");
  const S sv = s.item();
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  y.arr() = x.arr() / sv;
  if (detail::wants_grad<S>({&x, &s})) {
    detail::record(y, [x, s, y, sv]() mutable {
      if (!y.has_grad()) return;
      if (x.requires_grad()) x.grad_arr() += y.grad_arr() / sv;
      if (s.requires_grad()) s.grad_data()[0] += -(x.arr() * y.grad_arr()).sum() / (sv * sv);
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Activations

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  y.arr() = x.arr().max(S(0));
  if (detail::wants_grad<S>({&x})) {
    detail::record(y, [x, y]() mutable {
      if (!y.has_grad()) return;
      x.grad_arr() += (x.arr() > S(0)).template cast<S>() * y.grad_arr();
    });
  }
  return y;
}

namespace detail {

// Stable logistic; output clamped into the open interval (0, 1) so the
// strict-bound invariant survives saturation in either precision.
template <typename S>
S stable_sigmoid(S v) {
  S y;
  if (v >= S(0)) {
    y = S(1) / (S(1) + std::exp(-v));
  } else {
    const S e = std::exp(v);
    y = e / (S(1) + e);
  }
  const S lo = std::numeric_limits<S>::min();
  const S hi = S(1) - std::numeric_limits<S>::epsilon() / S(2);
  return std::min(std::max(y, lo), hi);
}

}  // namespace detail

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  const S* xv = x.data();
  S* yv = y.data();
  for (Index i = 0; i < x.numel(); ++i) yv[i] = detail::stable_sigmoid(xv[i]);
  if (detail::wants_grad<S>({&x})) {
    detail::record(y, [x, y]() mutable {
      if (!y.has_grad()) return;
      x.grad_arr() += y.arr() * (S(1) - y.arr()) * y.grad_arr();
    });
  }
  return y;
}

template <typename S>
Tensor<S> tanh(const Tensor<S>& x) {
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  y.arr() = x.arr().tanh();
  if (detail::wants_grad<S>({&x})) {
    detail::record(y, [x, y]() mutable {
      if (!y.has_grad()) return;
      x.grad_arr() += (S(1) - y.arr() * y.arr()) * y.grad_arr();
    });
  }
  return y;
}

/// Row-wise softmax with max subtraction.
template <typename S>
Tensor<S> softmax(const Tensor<S>& x) {
  if (x.rank() != 2) throw DimensionError("softmax: expected [batch, classes], got " + shape_str(x.shape()));
  const Index b = x.dim(0), c = x.dim(1);
  Tensor<S> y = Tensor<S>::zeros(x.shape());
  auto xm = x.mat(b, c);
  auto ym = y.mat(b, c);
  for (Index r = 0; r < b; ++r) {
    const S m = xm.row(r).maxCoeff();
    ym.row(r) = (xm.row(r).array() - m).exp();
    ym.row(r) /= ym.row(r).sum();
  }
  if (detail::wants_grad<S>({&x})) {
    detail::record(y, [x, y, b, c]() mutable {
      if (!y.has_grad()) return;
      auto ym = y.mat(b, c);
      auto gy = y.grad_mat(b, c);
      auto gx = x.grad_mat(b, c);
      for (Index r = 0; r < b; ++r) {
        const S dot = ym.row(r).dot(gy.row(r));
        gx.row(r) += (ym.row(r).array() * (gy.row(r).array() - dot)).matrix();
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Linear algebra

/// y[r, c] = sum_k x[r, k] w[k, c] + bias[c].
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& bias) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0))
    throw DimensionError("linear: inner extents disagree: x " + shape_str(x.shape()) + " vs w " +
                         shape_str(w.shape()));
  const Index b = x.dim(0), i = x.dim(1), o = w.dim(1);
  if (bias.numel() != o)
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " vs w " + shape_str(w.shape()));
  Tensor<S> y = Tensor<S>::zeros({b, o});
  auto ym = y.mat(b, o);
  ym.noalias() = x.mat(b, i) * w.mat(i, o);
  ym.rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(bias.data(), o);
  if (detail::wants_grad<S>({&x, &w, &bias})) {
    detail::record(y, [x, w, bias, y, b, i, o]() mutable {
      if (!y.has_grad()) return;
      auto gy = y.grad_mat(b, o);
      if (x.requires_grad()) x.grad_mat(b, i).noalias() += gy * w.mat(i, o).transpose();
      if (w.requires_grad()) w.grad_mat(i, o).noalias() += x.mat(b, i).transpose() * gy;
      if (bias.requires_grad())
        Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(bias.grad_data(), o) += gy.colwise().sum();
    });
  }
  return y;
}

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: inner extents disagree: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<S> y = Tensor<S>::zeros({m, n});
  y.mat(m, n).noalias() = a.mat(m, k) * b.mat(k, n);
  if (detail::wants_grad<S>({&a, &b})) {
    detail::record(y, [a, b, y, m, k, n]() mutable {
      if (!y.has_grad()) return;
      auto gy = y.grad_mat(m, n);
      if (a.requires_grad()) a.grad_mat(m, k).noalias() += gy * b.mat(k, n).transpose();
      if (b.requires_grad()) b.grad_mat(k, n).noalias() += a.mat(m, k).transpose() * gy;
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Structure: concatenation, slicing, stacking

/// Concatenates along the last axis; all leading extents must agree. The
/// first d1 entries of every output row come from `a` — callers rely on this
/// ordering (RGB half first in the fused feature).
template <typename S>
Tensor<S> concat_last(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != b.rank() || a.rank() < 1)
    throw DimensionError("concat_last: rank mismatch: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  for (Index d = 0; d + 1 < a.rank(); ++d)
    if (a.dim(d) != b.dim(d))
      throw DimensionError("concat_last: leading extents disagree: " + shape_str(a.shape()) + " vs " +
                           shape_str(b.shape()));
  const Index d1 = a.dim(a.rank() - 1), d2 = b.dim(b.rank() - 1);
  const Index rows = a.numel() / d1;
  Shape out_shape = a.shape();
  out_shape.back() = d1 + d2;
  Tensor<S> y = Tensor<S>::zeros(out_shape);
  auto ym = y.mat(rows, d1 + d2);
  ym.leftCols(d1) = a.mat(rows, d1);
  ym.rightCols(d2) = b.mat(rows, d2);
  if (detail::wants_grad<S>({&a, &b})) {
    detail::record(y, [a, b, y, rows, d1, d2]() mutable {
      if (!y.has_grad()) return;
      auto gy = y.grad_mat(rows, d1 + d2);
      if (a.requires_grad()) a.grad_mat(rows, d1) += gy.leftCols(d1);
      if (b.requires_grad()) b.grad_mat(rows, d2) += gy.rightCols(d2);
    });
  }
  return y;
}

/// Slice [start, start+len) of the last axis.
template <typename S>
Tensor<S> slice_last(const Tensor<S>& x, Index start, Index len) {
  const Index d = x.dim(x.rank() - 1);
  if (start < 0 || len < 1 || start + len > d)
    throw DimensionError("slice_last: [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") out of axis extent " + std::to_string(d));
  const Index rows = x.numel() / d;
  Shape out_shape = x.shape();
  out_shape.back() = len;
  Tensor<S> y = Tensor<S>::zeros(out_shape);
  y.mat(rows, len) = x.mat(rows, d).middleCols(start, len);
  if (detail::wants_grad<S>({&x})) {
    detail::record(y, [x, y, rows, d, start, len]() mutable {
      if (!y.has_grad()) return;
      x.grad_mat(rows, d).middleCols(start, len) += y.grad_mat(rows, len);
    });
  }
  return y;
}

/// Row i of a matrix as a [1, m] tensor.
template <typename S>
Tensor<S> row(const Tensor<S>& x, Index i) {
  if (x.rank() != 2) throw DimensionError("row: expected matrix, got " + shape_str(x.shape()));
  const Index k = x.dim(0), m = x.dim(1);
  if (i < 0 || i >= k) throw DimensionError("row: index " + std::to_string(i) + " out of " + std::to_string(k));
  Tensor<S> y = Tensor<S>::zeros({1, m});
  y.mat(1, m) = x.mat(k, m).row(i);
  if (detail::wants_grad<S>({&x})) {
    detail::record(y, [x, y, i, k, m]() mutable {
      if (!y.has_grad()) return;
      x.grad_mat(k, m).row(i) += y.grad_mat(1, m);
    });
  }
  return y;
}

/// Stacks k tensors of shape [1, m] (or [m]) into [k, m].
template <typename S>
Tensor<S> stack_rows(const std::vector<Tensor<S>>& rows) {
  if (rows.empty()) throw DimensionError("stack_rows: empty input");
  const Index m = rows[0].numel();
  for (const auto& r : rows)
    if (r.numel() != m)
      throw DimensionError("stack_rows: row widths disagree: " + shape_str(rows[0].shape()) + " vs " +
                           shape_str(r.shape()));
  const Index k = static_cast<Index>(rows.size());
  Tensor<S> y = Tensor<S>::zeros({k, m});
  for (Index n = 0; n < k; ++n) y.mat(k, m).row(n) = Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(rows[n].data(), m);
  bool any = false;
  for (const auto& r : rows) any = any || r.requires_grad();
  if (Tape<S>::active() && any) {
    detail::record(y, [rows, y, k, m]() mutable {
      if (!y.has_grad()) return;
      auto gy = y.grad_mat(k, m);
      for (Index n = 0; n < k; ++n) {
        if (!rows[n].requires_grad()) continue;
        Tensor<S> r = rows[n];
        Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(r.grad_data(), m) += gy.row(n);
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Reductions

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x) {
  S acc = S(0);
  const S* v = x.data();
  for (Index i = 0; i < x.numel(); ++i) acc += v[i];
  Tensor<S> y = Tensor<S>::scalar(acc);
  if (detail::wants_grad<S>({&x})) {
    detail::record(y, [x, y]() mutable {
      if (!y.has_grad()) return;
      x.grad_arr() += y.grad_view()[0];
    });
  }
  return y;
}

template <typename S>
Tensor<S> mean_all(const Tensor<S>& x) {
  const S inv = S(1) / static_cast<S>(x.numel());
  S acc = S(0);
  const S* v = x.data();
  for (Index i = 0; i < x.numel(); ++i) acc += v[i];
  Tensor<S> y = Tensor<S>::scalar(acc * inv);
  if (detail::wants_grad<S>({&x})) {
    detail::record(y, [x, y, inv]() mutable {
      if (!y.has_grad()) return;
      x.grad_arr() += y.grad_view()[0] * inv;
    });
  }
  return y;
}

/// Sums the rows of [k, m] into [1, m].
template <typename S>
Tensor<S> sum_rows(const Tensor<S>& x) {
  if (x.rank() != 2) throw DimensionError("sum_rows: expected matrix, got " + shape_str(x.shape()));
  const Index k = x.dim(0), m = x.dim(1);
  Tensor<S> y = Tensor<S>::zeros({1, m});
  auto ym = y.mat(1, m);
  auto xm = x.mat(k, m);
  for (Index n = 0; n < k; ++n) ym.row(0) += xm.row(n);
  if (detail::wants_grad<S>({&x})) {
    detail::record(y, [x, y, k, m]() mutable {
      if (!y.has_grad()) return;
      auto gy = y.grad_mat(1, m);
      auto gx = x.grad_mat(k, m);
      for (Index n = 0; n < k; ++n) gx.row(n) += gy.row(0);
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Convolution and pooling

namespace detail {

// Unpacks the receptive fields of one image [c, h, w] into a column matrix
// [c*kh*kw, oh*ow] with zero padding (cross-correlation layout).
template <typename S>
void im2col(const S* x, Index c, Index h, Index w, Index kh, Index kw, Index stride, Index pad,
            Index oh, Index ow, S* cols) {
  for (Index ci = 0; ci < c; ++ci) {
    for (Index ky = 0; ky < kh; ++ky) {
      for (Index kx = 0; kx < kw; ++kx) {
        S* dst = cols + (((ci * kh) + ky) * kw + kx) * (oh * ow);
        for (Index oy = 0; oy < oh; ++oy) {
          const Index iy = oy * stride - pad + ky;
          for (Index ox = 0; ox < ow; ++ox) {
            const Index ix = ox * stride - pad + kx;
            const bool in = iy >= 0 && iy < h && ix >= 0 && ix < w;
            dst[oy * ow + ox] = in ? x[(ci * h + iy) * w + ix] : S(0);
          }
        }
      }
    }
  }
}

// Transpose of im2col: scatter-adds a column matrix back into an image.
template <typename S>
void col2im_add(const S* cols, Index c, Index h, Index w, Index kh, Index kw, Index stride, Index pad,
                Index oh, Index ow, S* x) {
  for (Index ci = 0; ci < c; ++ci) {
    for (Index ky = 0; ky < kh; ++ky) {
      for (Index kx = 0; kx < kw; ++kx) {
        const S* src = cols + (((ci * kh) + ky) * kw + kx) * (oh * ow);
        for (Index oy = 0; oy < oh; ++oy) {
          const Index iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (Index ox = 0; ox < ow; ++ox) {
            const Index ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            x[(ci * h + iy) * w + ix] += src[oy * ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// 2-D cross-correlation of x [b, c, h, w] with kernels [f, c, kh, kw].
/// Output extent: floor((h + 2*padding - kh) / stride) + 1.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& kernels, const Tensor<S>& bias, Index stride,
                 Index padding) {
  if (x.rank() != 4 || kernels.rank() != 4)
    throw DimensionError("conv2d: expected x [b,c,h,w] and kernels [f,c,kh,kw], got " +
                         shape_str(x.shape()) + " and " + shape_str(kernels.shape()));
  const Index b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index f = kernels.dim(0), kc = kernels.dim(1), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kc != c)
    throw DimensionError("conv2d: channel mismatch: x " + shape_str(x.shape()) + " vs kernels " +
                         shape_str(kernels.shape()));
  if (stride < 1 || padding < 0) throw DimensionError("conv2d: stride must be >= 1 and padding >= 0");
  if (kh > h + 2 * padding || kw > w + 2 * padding)
    throw DimensionError("conv2d: kernel " + shape_str(kernels.shape()) + " larger than padded input " +
                         shape_str(x.shape()) + " with padding " + std::to_string(padding));
  if (bias.numel() != f)
    throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " vs kernels " +
                         shape_str(kernels.shape()));
  const Index oh = (h + 2 * padding - kh) / stride + 1;
  const Index ow = (w + 2 * padding - kw) / stride + 1;
  const Index ckk = c * kh * kw;

  Tensor<S> y = Tensor<S>::zeros({b, f, oh, ow});
  std::vector<S> cols(static_cast<std::size_t>(ckk * oh * ow));
  Eigen::Map<const RowMat<S>> K(kernels.data(), f, ckk);
  Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> bv(bias.data(), f);
  for (Index n = 0; n < b; ++n) {
    detail::im2col(x.data() + n * c * h * w, c, h, w, kh, kw, stride, padding, oh, ow, cols.data());
    Eigen::Map<const RowMat<S>> C(cols.data(), ckk, oh * ow);
    Eigen::Map<RowMat<S>> Y(y.data() + n * f * oh * ow, f, oh * ow);
    Y.noalias() = K * C;
    Y.colwise() += bv;
  }

  if (detail::wants_grad<S>({&x, &kernels, &bias})) {
    detail::record(y, [x, kernels, bias, y, b, c, h, w, f, kh, kw, stride, padding, oh, ow, ckk]() mutable {
      if (!y.has_grad()) return;
      std::vector<S> cols(static_cast<std::size_t>(ckk * oh * ow));
      Eigen::Map<const RowMat<S>> K(kernels.data(), f, ckk);
      for (Index n = 0; n < b; ++n) {
        Eigen::Map<const RowMat<S>> gY(y.grad_data() + n * f * oh * ow, f, oh * ow);
        if (kernels.requires_grad()) {
          detail::im2col(x.data() + n * c * h * w, c, h, w, kh, kw, stride, padding, oh, ow, cols.data());
          Eigen::Map<const RowMat<S>> C(cols.data(), ckk, oh * ow);
          Eigen::Map<RowMat<S>> gK(kernels.grad_data(), f, ckk);
          gK.noalias() += gY * C.transpose();
        }
        if (bias.requires_grad()) {
          Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>> gb(bias.grad_data(), f);
          gb += gY.rowwise().sum();
        }
        if (x.requires_grad()) {
          Eigen::Map<RowMat<S>> C(cols.data(), ckk, oh * ow);
          C.noalias() = K.transpose() * gY;
          detail::col2im_add(cols.data(), c, h, w, kh, kw, stride, padding, oh, ow,
                             x.grad_data() + n * c * h * w);
        }
      }
    });
  }
  return y;
}

/// 2x2 max pooling with stride 2; trailing odd rows/columns are dropped.
template <typename S>
Tensor<S> maxpool2x2(const Tensor<S>& x) {
  if (x.rank() != 4) throw DimensionError("maxpool2x2: expected [b,c,h,w], got " + shape_str(x.shape()));
  const Index b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < 2 || w < 2)
    throw DimensionError("maxpool2x2: spatial extent too small: " + shape_str(x.shape()));
  const Index oh = h / 2, ow = w / 2;
  Tensor<S> y = Tensor<S>::zeros({b, c, oh, ow});
  auto argmax = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(b * c * oh * ow));
  const S* xv = x.data();
  S* yv = y.data();
  Index o = 0;
  for (Index n = 0; n < b * c; ++n) {
    const S* plane = xv + n * h * w;
    for (Index oy = 0; oy < oh; ++oy) {
      for (Index ox = 0; ox < ow; ++ox, ++o) {
        Index best = (2 * oy) * w + 2 * ox;
        S bv = plane[best];
        // fixed scan order; first maximum wins on ties
        for (Index dy = 0; dy < 2; ++dy)
          for (Index dx = 0; dx < 2; ++dx) {
            const Index idx = (2 * oy + dy) * w + (2 * ox + dx);
            if (plane[idx] > bv) {
              bv = plane[idx];
              best = idx;
            }
          }
        yv[o] = bv;
        (*argmax)[static_cast<std::size_t>(o)] = n * h * w + best;
      }
    }
  }
  if (detail::wants_grad<S>({&x})) {
    detail::record(y, [x, y, argmax]() mutable {
      if (!y.has_grad()) return;
      S* gx = x.grad_data();
      const S* gy = y.grad_data();
      for (std::size_t i = 0; i < argmax->size(); ++i) gx[(*argmax)[i]] += gy[i];
    });
  }
  return y;
}

/// Mean over the spatial axes of [b, c, h, w] -> [b, c].
template <typename S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
  if (x.rank() != 4) throw DimensionError("global_avg_pool: expected [b,c,h,w], got " + shape_str(x.shape()));
  const Index b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const S inv = S(1) / static_cast<S>(hw);
  Tensor<S> y = Tensor<S>::zeros({b, c});
  const S* xv = x.data();
  S* yv = y.data();
  for (Index n = 0; n < b * c; ++n) {
    S acc = S(0);
    for (Index i = 0; i < hw; ++i) acc += xv[n * hw + i];
    yv[n] = acc * inv;
  }
  if (detail::wants_grad<S>({&x})) {
    detail::record(y, [x, y, b, c, hw, inv]() mutable {
      if (!y.has_grad()) return;
      S* gx = x.grad_data();
      const S* gy = y.grad_data();
      for (Index n = 0; n < b * c; ++n)
        for (Index i = 0; i < hw; ++i) gx[n * hw + i] += gy[n] * inv;
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Loss

/// Mean of per-example weighted negative log softmax probabilities, fused
/// with log-sum-exp stabilization. `class_weights` may be undefined (all
/// ones) or a [c] tensor; it is a constant, not a differentiable input.
template <typename S>
Tensor<S> cross_entropy(const Tensor<S>& logits, const std::vector<Index>& labels,
                        const Tensor<S>& class_weights = {}) {
  if (logits.rank() != 2)
    throw DimensionError("cross_entropy: expected [batch, classes], got " + shape_str(logits.shape()));
  const Index b = logits.dim(0), c = logits.dim(1);
  if (static_cast<Index>(labels.size()) != b)
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                         std::to_string(b));
  if (class_weights.defined() && class_weights.numel() != c)
    throw DimensionError("cross_entropy: class_weights " + shape_str(class_weights.shape()) +
                         " vs classes " + std::to_string(c));
  for (Index i = 0; i < b; ++i)
    if (labels[static_cast<std::size_t>(i)] < 0 || labels[static_cast<std::size_t>(i)] >= c)
      throw DimensionError("cross_entropy: label " + std::to_string(labels[static_cast<std::size_t>(i)]) +
                           " out of range [0, " + std::to_string(c) + ") at example " + std::to_string(i));

  auto probs = std::make_shared<std::vector<S>>(static_cast<std::size_t>(b * c));
  auto xm = logits.mat(b, c);
  S loss = S(0);
  for (Index i = 0; i < b; ++i) {
    const S m = xm.row(i).maxCoeff();
    S z = S(0);
    for (Index j = 0; j < c; ++j) {
      const S e = std::exp(xm(i, j) - m);
      (*probs)[static_cast<std::size_t>(i * c + j)] = e;
      z += e;
    }
    for (Index j = 0; j < c; ++j) (*probs)[static_cast<std::size_t>(i * c + j)] /= z;
    const S nll = std::log(z) + m - xm(i, labels[static_cast<std::size_t>(i)]);
    const S wi = class_weights.defined() ? class_weights.data()[labels[static_cast<std::size_t>(i)]] : S(1);
    loss += wi * nll;
  }
  Tensor<S> y = Tensor<S>::scalar(loss / static_cast<S>(b));

  if (detail::wants_grad<S>({&logits})) {
    detail::record(y, [logits, class_weights, y, labels, probs, b, c]() mutable {
      if (!y.has_grad()) return;
      const S g = y.grad_view()[0] / static_cast<S>(b);
      auto gx = logits.grad_mat(b, c);
      for (Index i = 0; i < b; ++i) {
        const Index yi = labels[static_cast<std::size_t>(i)];
        const S wi = class_weights.defined() ? class_weights.data()[yi] : S(1);
        for (Index j = 0; j < c; ++j) {
          S p = (*probs)[static_cast<std::size_t>(i * c + j)];
          gx(i, j) += g * wi * (p - (j == yi ? S(1) : S(0)));
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// LSTM cell

/// Parameters of one LSTM cell. Gate layout along the 4u axis is [i | f | g | o].
template <typename S>
struct LstmParams {
  Tensor<S> w_ih;  // [input, 4u]
  Tensor<S> w_hh;  // [u, 4u]
  Tensor<S> bias;  // [4u]

  Index hidden_size() const { return w_hh.dim(0); }
};

/// Standard four-gate LSTM update:
///   i = sigmoid(.), f = sigmoid(.), g = tanh(.), o = sigmoid(.)
///   c = f * c_prev + i * g,  h = o * tanh(c)
/// Built from primitive ops, so the backward rule is exact by composition.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> lstm_cell(const Tensor<S>& x, const Tensor<S>& h_prev,
                                          const Tensor<S>& c_prev, const LstmParams<S>& p) {
  const Index u = p.hidden_size();
  if (x.rank() != 2 || h_prev.rank() != 2 || c_prev.rank() != 2 || x.dim(0) != h_prev.dim(0) ||
      h_prev.dim(1) != u || c_prev.dim(1) != u || x.dim(1) != p.w_ih.dim(0) || p.w_ih.dim(1) != 4 * u)
    throw DimensionError("lstm_cell: inconsistent extents: x " + shape_str(x.shape()) + ", h " +
                         shape_str(h_prev.shape()) + ", c " + shape_str(c_prev.shape()) + ", w_ih " +
                         shape_str(p.w_ih.shape()) + ", w_hh " + shape_str(p.w_hh.shape()));
  Tensor<S> pre = add(linear(x, p.w_ih, p.bias), matmul(h_prev, p.w_hh));
  Tensor<S> gi = sigmoid(slice_last(pre, 0, u));
  Tensor<S> gf = sigmoid(slice_last(pre, u, u));
  Tensor<S> gg = tanh(slice_last(pre, 2 * u, u));
  Tensor<S> go = sigmoid(slice_last(pre, 3 * u, u));
  Tensor<S> c = add(mul(gf, c_prev), mul(gi, gg));
  Tensor<S> h = mul(go, tanh(c));
  return {h, c};
}

}  // namespace segcode
