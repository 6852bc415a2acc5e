#pragma once

#include <cmath>
#include <span>

#include "tfrn/tensor.hpp"

namespace tfrn {

enum class MaskKind {
  None,          // full attention (test-only readouts)
  Causal,        // row t sees columns i <= t
  CausalStrict,  // row t sees columns i < t; row 0 is degenerate
};

namespace detail {

template <typename S>
TensorT<S> make_output(std::vector<int> shape, bool track) {
  TensorT<S> out = TensorT<S>::zeros(std::move(shape));
  if (track && recording<S>()) out.enable_grad();
  return out;
}

template <typename S>
void require_same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
}

template <typename S>
void require_rank2(const TensorT<S>& t, const char* op) {
  if (t.rank() != 2)
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape));
}

}  // namespace detail

// c[i,j] = sum_p a[i,p] * b[p,j]
template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
  detail::require_rank2(a, "matmul");
  detail::require_rank2(b, "matmul");
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
  const int m = a.rows(), k = a.cols(), n = b.cols();
  TensorT<S> out = detail::make_output<S>({m, n}, a.requires_grad || b.requires_grad);
  const S* pa = a.data->data();
  const S* pb = b.data->data();
  S* pc = out.data->data();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const S aip = pa[i * k + p];
      if (aip == S(0)) continue;
      const S* brow = pb + p * n;
      S* crow = pc + i * n;
      for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  if (out.requires_grad) {
    active_tape<S>()->record("matmul", [a, b, out, m, k, n] {
      const S* dc = out.grad->data();
      if (a.requires_grad) {
        S* da = a.grad->data();
        const S* pb2 = b.data->data();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            const S g = dc[i * n + j];
            if (g == S(0)) continue;
            for (int p = 0; p < k; ++p) da[i * k + p] += g * pb2[p * n + j];
          }
      }
      if (b.requires_grad) {
        S* db = b.grad->data();
        const S* pa2 = a.data->data();
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            const S av = pa2[i * k + p];
            if (av == S(0)) continue;
            for (int j = 0; j < n; ++j) db[p * n + j] += av * dc[i * n + j];
          }
      }
    });
  }
  return out;
}

// c[i,j] = sum_p a[i,p] * b[j,p]  (a times b-transposed)
template <typename S>
TensorT<S> matmul_nt(const TensorT<S>& a, const TensorT<S>& b) {
  detail::require_rank2(a, "matmul_nt");
  detail::require_rank2(b, "matmul_nt");
  if (a.cols() != b.cols())
    throw ShapeError("matmul_nt: inner dimensions disagree: " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
  const int m = a.rows(), k = a.cols(), n = b.rows();
  TensorT<S> out = detail::make_output<S>({m, n}, a.requires_grad || b.requires_grad);
  const S* pa = a.data->data();
  const S* pb = b.data->data();
  S* pc = out.data->data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      S acc = S(0);
      const S* arow = pa + i * k;
      const S* brow = pb + j * k;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      pc[i * n + j] = acc;
    }
  if (out.requires_grad) {
    active_tape<S>()->record("matmul_nt", [a, b, out, m, k, n] {
      const S* dc = out.grad->data();
      if (a.requires_grad) {
        S* da = a.grad->data();
        const S* pb2 = b.data->data();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            const S g = dc[i * n + j];
            if (g == S(0)) continue;
            const S* brow = pb2 + j * k;
            for (int p = 0; p < k; ++p) da[i * k + p] += g * brow[p];
          }
      }
      if (b.requires_grad) {
        S* db = b.grad->data();
        const S* pa2 = a.data->data();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            const S g = dc[i * n + j];
            if (g == S(0)) continue;
            const S* arow = pa2 + i * k;
            for (int p = 0; p < k; ++p) db[j * k + p] += g * arow[p];
          }
      }
    });
  }
  return out;
}

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  detail::require_same_shape(a, b, "add");
  TensorT<S> out = detail::make_output<S>(a.shape, a.requires_grad || b.requires_grad);
  for (size_t i = 0; i < out.numel(); ++i) (*out.data)[i] = (*a.data)[i] + (*b.data)[i];
  if (out.requires_grad) {
    active_tape<S>()->record("add", [a, b, out] {
      const size_t n = out.numel();
      if (a.requires_grad)
        for (size_t i = 0; i < n; ++i) (*a.grad)[i] += (*out.grad)[i];
      if (b.requires_grad)
        for (size_t i = 0; i < n; ++i) (*b.grad)[i] += (*out.grad)[i];
    });
  }
  return out;
}

template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
  detail::require_same_shape(a, b, "mul");
  TensorT<S> out = detail::make_output<S>(a.shape, a.requires_grad || b.requires_grad);
  for (size_t i = 0; i < out.numel(); ++i) (*out.data)[i] = (*a.data)[i] * (*b.data)[i];
  if (out.requires_grad) {
    active_tape<S>()->record("mul", [a, b, out] {
      const size_t n = out.numel();
      if (a.requires_grad)
        for (size_t i = 0; i < n; ++i) (*a.grad)[i] += (*out.grad)[i] * (*b.data)[i];
      if (b.requires_grad)
        for (size_t i = 0; i < n; ++i) (*b.grad)[i] += (*out.grad)[i] * (*a.data)[i];
    });
  }
  return out;
}

template <typename S>
TensorT<S> mul_scalar(const TensorT<S>& a, S s) {
  TensorT<S> out = detail::make_output<S>(a.shape, a.requires_grad);
  for (size_t i = 0; i < out.numel(); ++i) (*out.data)[i] = (*a.data)[i] * s;
  if (out.requires_grad) {
    active_tape<S>()->record("mul_scalar", [a, out, s] {
      for (size_t i = 0; i < out.numel(); ++i) (*a.grad)[i] += (*out.grad)[i] * s;
    });
  }
  return out;
}

// x: [T x d], bias: [d], broadcast over rows.
template <typename S>
TensorT<S> add_bias(const TensorT<S>& x, const TensorT<S>& bias) {
  detail::require_rank2(x, "add_bias");
  if (bias.rank() != 1 || bias.dim(0) != x.cols())
    throw ShapeError("add_bias: bias " + shape_str(bias.shape) + " does not match " +
                     shape_str(x.shape));
  const int rows = x.rows(), cols = x.cols();
  TensorT<S> out = detail::make_output<S>(x.shape, x.requires_grad || bias.requires_grad);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out.at(i, j) = x.at(i, j) + bias.at(j);
  if (out.requires_grad) {
    active_tape<S>()->record("add_bias", [x, bias, out, rows, cols] {
      if (x.requires_grad)
        for (size_t i = 0; i < out.numel(); ++i) (*x.grad)[i] += (*out.grad)[i];
      if (bias.requires_grad)
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < cols; ++j)
            (*bias.grad)[static_cast<size_t>(j)] += (*out.grad)[static_cast<size_t>(i) * cols + j];
    });
  }
  return out;
}

template <typename S>
TensorT<S> sigmoid(const TensorT<S>& x) {
  TensorT<S> out = detail::make_output<S>(x.shape, x.requires_grad);
  for (size_t i = 0; i < out.numel(); ++i) {
    const S v = (*x.data)[i];
    (*out.data)[i] = v >= S(0) ? S(1) / (S(1) + std::exp(-v))
                               : std::exp(v) / (S(1) + std::exp(v));
  }
  if (out.requires_grad) {
    active_tape<S>()->record("sigmoid", [x, out] {
      for (size_t i = 0; i < out.numel(); ++i) {
        const S y = (*out.data)[i];
        (*x.grad)[i] += (*out.grad)[i] * y * (S(1) - y);
      }
    });
  }
  return out;
}

template <typename S>
TensorT<S> tanh(const TensorT<S>& x) {
  TensorT<S> out = detail::make_output<S>(x.shape, x.requires_grad);
  for (size_t i = 0; i < out.numel(); ++i) (*out.data)[i] = std::tanh((*x.data)[i]);
  if (out.requires_grad) {
    active_tape<S>()->record("tanh", [x, out] {
      for (size_t i = 0; i < out.numel(); ++i) {
        const S y = (*out.data)[i];
        (*x.grad)[i] += (*out.grad)[i] * (S(1) - y * y);
      }
    });
  }
  return out;
}

template <typename S>
TensorT<S> relu(const TensorT<S>& x) {
  TensorT<S> out = detail::make_output<S>(x.shape, x.requires_grad);
  for (size_t i = 0; i < out.numel(); ++i) {
    const S v = (*x.data)[i];
    (*out.data)[i] = v > S(0) ? v : S(0);
  }
  if (out.requires_grad) {
    active_tape<S>()->record("relu", [x, out] {
      for (size_t i = 0; i < out.numel(); ++i)
        if ((*x.data)[i] > S(0)) (*x.grad)[i] += (*out.grad)[i];
    });
  }
  return out;
}

template <typename S>
TensorT<S> sum(const TensorT<S>& x) {
  TensorT<S> out = detail::make_output<S>({1}, x.requires_grad);
  S acc = S(0);
  for (size_t i = 0; i < x.numel(); ++i) acc += (*x.data)[i];
  (*out.data)[0] = acc;
  if (out.requires_grad) {
    active_tape<S>()->record("sum", [x, out] {
      const S g = (*out.grad)[0];
      for (size_t i = 0; i < x.numel(); ++i) (*x.grad)[i] += g;
    });
  }
  return out;
}

template <typename S>
TensorT<S> slice_cols(const TensorT<S>& x, int c0, int c1) {
  detail::require_rank2(x, "slice_cols");
  if (c0 < 0 || c1 > x.cols() || c0 >= c1)
    throw ShapeError("slice_cols: invalid range [" + std::to_string(c0) + "," +
                     std::to_string(c1) + ") for " + shape_str(x.shape));
  const int rows = x.rows(), w = c1 - c0;
  TensorT<S> out = detail::make_output<S>({rows, w}, x.requires_grad);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < w; ++j) out.at(i, j) = x.at(i, c0 + j);
  if (out.requires_grad) {
    active_tape<S>()->record("slice_cols", [x, out, c0, rows, w] {
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < w; ++j)
          (*x.grad)[static_cast<size_t>(i) * x.cols() + c0 + j] +=
              (*out.grad)[static_cast<size_t>(i) * w + j];
    });
  }
  return out;
}

template <typename S>
TensorT<S> concat_cols(const std::vector<TensorT<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const int rows = parts[0].rows();
  int total = 0;
  bool track = false;
  for (const auto& p : parts) {
    detail::require_rank2(p, "concat_cols");
    if (p.rows() != rows)
      throw ShapeError("concat_cols: row mismatch " + shape_str(parts[0].shape) + " vs " +
                       shape_str(p.shape));
    total += p.cols();
    track = track || p.requires_grad;
  }
  TensorT<S> out = detail::make_output<S>({rows, total}, track);
  int off = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < p.cols(); ++j) out.at(i, off + j) = p.at(i, j);
    off += p.cols();
  }
  if (out.requires_grad) {
    active_tape<S>()->record("concat_cols", [parts, out, rows, total] {
      int off2 = 0;
      for (const auto& p : parts) {
        if (p.requires_grad)
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < p.cols(); ++j)
              (*p.grad)[static_cast<size_t>(i) * p.cols() + j] +=
                  (*out.grad)[static_cast<size_t>(i) * total + off2 + j];
        off2 += p.cols();
      }
    });
  }
  return out;
}

template <typename S>
TensorT<S> slice_rows(const TensorT<S>& x, int r0, int r1) {
  detail::require_rank2(x, "slice_rows");
  if (r0 < 0 || r1 > x.rows() || r0 >= r1)
    throw ShapeError("slice_rows: invalid range [" + std::to_string(r0) + "," +
                     std::to_string(r1) + ") for " + shape_str(x.shape));
  const int h = r1 - r0, cols = x.cols();
  TensorT<S> out = detail::make_output<S>({h, cols}, x.requires_grad);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < cols; ++j) out.at(i, j) = x.at(r0 + i, j);
  if (out.requires_grad) {
    active_tape<S>()->record("slice_rows", [x, out, r0, h, cols] {
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < cols; ++j)
          (*x.grad)[static_cast<size_t>(r0 + i) * cols + j] +=
              (*out.grad)[static_cast<size_t>(i) * cols + j];
    });
  }
  return out;
}

template <typename S>
TensorT<S> concat_rows(const std::vector<TensorT<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  const int cols = parts[0].cols();
  int total = 0;
  bool track = false;
  for (const auto& p : parts) {
    detail::require_rank2(p, "concat_rows");
    if (p.cols() != cols)
      throw ShapeError("concat_rows: column mismatch " + shape_str(parts[0].shape) + " vs " +
                       shape_str(p.shape));
    total += p.rows();
    track = track || p.requires_grad;
  }
  TensorT<S> out = detail::make_output<S>({total, cols}, track);
  int off = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < p.rows(); ++i)
      for (int j = 0; j < cols; ++j) out.at(off + i, j) = p.at(i, j);
    off += p.rows();
  }
  if (out.requires_grad) {
    active_tape<S>()->record("concat_rows", [parts, out, cols] {
      int off2 = 0;
      for (const auto& p : parts) {
        if (p.requires_grad)
          for (int i = 0; i < p.rows(); ++i)
            for (int j = 0; j < cols; ++j)
              (*p.grad)[static_cast<size_t>(i) * cols + j] +=
                  (*out.grad)[static_cast<size_t>(off2 + i) * cols + j];
        off2 += p.rows();
      }
    });
  }
  return out;
}

inline int mask_row_limit(MaskKind mask, int row, int cols) {
  switch (mask) {
    case MaskKind::None: return cols;
    case MaskKind::Causal: return row + 1;
    case MaskKind::CausalStrict: return row;
  }
  return cols;
}

// Row-wise softmax with masked entries pinned to exactly 0. Stabilized by
// row-max subtraction over the unmasked prefix.
template <typename S>
TensorT<S> softmax_masked(const TensorT<S>& scores, MaskKind mask) {
  detail::require_rank2(scores, "softmax_masked");
  if (mask != MaskKind::None && scores.rows() != scores.cols())
    throw ShapeError("softmax_masked: causal mask needs square scores, got " +
                     shape_str(scores.shape));
  const int rows = scores.rows(), cols = scores.cols();
  TensorT<S> out = detail::make_output<S>(scores.shape, scores.requires_grad);
  for (int t = 0; t < rows; ++t) {
    const int limit = mask_row_limit(mask, t, cols);
    if (limit == 0)
      throw DegenerateRowError("softmax_masked: row " + std::to_string(t) +
                               " has no unmasked entries");
    S mx = scores.at(t, 0);
    for (int j = 1; j < limit; ++j) mx = std::max(mx, scores.at(t, j));
    S denom = S(0);
    for (int j = 0; j < limit; ++j) {
      const S e = std::exp(scores.at(t, j) - mx);
      out.at(t, j) = e;
      denom += e;
    }
    for (int j = 0; j < limit; ++j) out.at(t, j) /= denom;
    for (int j = limit; j < cols; ++j) out.at(t, j) = S(0);
  }
  if (out.requires_grad) {
    active_tape<S>()->record("softmax_masked", [scores, out, mask, rows, cols] {
      for (int t = 0; t < rows; ++t) {
        const int limit = mask_row_limit(mask, t, cols);
        S dot = S(0);
        for (int j = 0; j < limit; ++j)
          dot += (*out.grad)[static_cast<size_t>(t) * cols + j] * out.at(t, j);
        for (int j = 0; j < limit; ++j)
          (*scores.grad)[static_cast<size_t>(t) * cols + j] +=
              out.at(t, j) * ((*out.grad)[static_cast<size_t>(t) * cols + j] - dot);
      }
    });
  }
  return out;
}

constexpr double kLayerNormEps = 1e-5;

// Per-row normalization to zero mean / unit variance, then gain and bias.
// Accepts [d], [T x d], or [B x T x d]; the last axis is normalized.
template <typename S>
TensorT<S> layer_norm(const TensorT<S>& x, const TensorT<S>& gain, const TensorT<S>& bias,
                      S eps = S(kLayerNormEps)) {
  const int d = x.shape.back();
  if (gain.rank() != 1 || gain.dim(0) != d || bias.rank() != 1 || bias.dim(0) != d)
    throw ShapeError("layer_norm: gain/bias " + shape_str(gain.shape) + "/" +
                     shape_str(bias.shape) + " do not match " + shape_str(x.shape));
  const size_t rows = x.numel() / static_cast<size_t>(d);
  TensorT<S> out =
      detail::make_output<S>(x.shape, x.requires_grad || gain.requires_grad || bias.requires_grad);
  // normalized values and inverse stddevs are reused by the backward pass
  auto xhat = std::make_shared<std::vector<S>>(x.numel());
  auto inv_std = std::make_shared<std::vector<S>>(rows);
  for (size_t r = 0; r < rows; ++r) {
    const S* xr = x.data->data() + r * d;
    S mu = S(0);
    for (int j = 0; j < d; ++j) mu += xr[j];
    mu /= S(d);
    S var = S(0);
    for (int j = 0; j < d; ++j) {
      const S c = xr[j] - mu;
      var += c * c;
    }
    var /= S(d);
    const S inv = S(1) / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (int j = 0; j < d; ++j) {
      const S xh = (xr[j] - mu) * inv;
      (*xhat)[r * d + j] = xh;
      (*out.data)[r * d + j] = gain.at(j) * xh + bias.at(j);
    }
  }
  if (out.requires_grad) {
    active_tape<S>()->record("layer_norm", [x, gain, bias, out, xhat, inv_std, rows, d] {
      for (size_t r = 0; r < rows; ++r) {
        const S* dy = out.grad->data() + r * d;
        const S* xh = xhat->data() + r * d;
        if (gain.requires_grad)
          for (int j = 0; j < d; ++j) (*gain.grad)[static_cast<size_t>(j)] += dy[j] * xh[j];
        if (bias.requires_grad)
          for (int j = 0; j < d; ++j) (*bias.grad)[static_cast<size_t>(j)] += dy[j];
        if (x.requires_grad) {
          S mean_dxh = S(0), mean_dxh_xh = S(0);
          for (int j = 0; j < d; ++j) {
            const S dxh = dy[j] * gain.at(j);
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[j];
          }
          mean_dxh /= S(d);
          mean_dxh_xh /= S(d);
          const S inv = (*inv_std)[r];
          for (int j = 0; j < d; ++j) {
            const S dxh = dy[j] * gain.at(j);
            (*x.grad)[r * d + j] += inv * (dxh - mean_dxh - xh[j] * mean_dxh_xh);
          }
        }
      }
    });
  }
  return out;
}

// Mean over rows of -log softmax(logits[t])[target[t]], log-sum-exp stabilized.
template <typename S>
TensorT<S> cross_entropy(const TensorT<S>& logits, std::span<const int> targets) {
  detail::require_rank2(logits, "cross_entropy");
  const int t_count = logits.rows(), v = logits.cols();
  if (static_cast<int>(targets.size()) != t_count)
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     shape_str(logits.shape) + " logits");
  for (int t = 0; t < t_count; ++t)
    if (targets[static_cast<size_t>(t)] < 0 || targets[static_cast<size_t>(t)] >= v)
      throw IndexError("cross_entropy: target " + std::to_string(targets[static_cast<size_t>(t)]) +
                       " at row " + std::to_string(t) + " out of range for vocab " +
                       std::to_string(v));
  TensorT<S> out = detail::make_output<S>({1}, logits.requires_grad);
  auto probs = std::make_shared<std::vector<S>>(logits.numel());
  S total = S(0);
  for (int t = 0; t < t_count; ++t) {
    const S* row = logits.data->data() + static_cast<size_t>(t) * v;
    S mx = row[0];
    for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    S denom = S(0);
    for (int j = 0; j < v; ++j) {
      const S e = std::exp(row[j] - mx);
      (*probs)[static_cast<size_t>(t) * v + j] = e;
      denom += e;
    }
    for (int j = 0; j < v; ++j) (*probs)[static_cast<size_t>(t) * v + j] /= denom;
    const S lse = mx + std::log(denom);
    total += lse - row[targets[static_cast<size_t>(t)]];
  }
  (*out.data)[0] = total / S(t_count);
  if (out.requires_grad) {
    std::vector<int> tgt(targets.begin(), targets.end());
    active_tape<S>()->record("cross_entropy", [logits, out, probs, tgt, t_count, v] {
      const S g = (*out.grad)[0] / S(t_count);
      for (int t = 0; t < t_count; ++t) {
        for (int j = 0; j < v; ++j)
          (*logits.grad)[static_cast<size_t>(t) * v + j] +=
              g * (*probs)[static_cast<size_t>(t) * v + j];
        (*logits.grad)[static_cast<size_t>(t) * v + tgt[static_cast<size_t>(t)]] -= g;
      }
    });
  }
  return out;
}

}  // namespace tfrn
