#pragma once

#include <span>
#include <vector>

#include "tfrn/ops.hpp"

namespace tfrn {

// Gather rows of a [V x d] table; backward scatter-adds into the table.
template <typename S>
TensorT<S> embed(const TensorT<S>& table, std::span<const int> ids) {
  detail::require_rank2(table, "embed");
  const int v = table.rows(), d = table.cols();
  const int t_count = static_cast<int>(ids.size());
  if (t_count == 0) throw ShapeError("embed: empty id sequence");
  for (int t = 0; t < t_count; ++t)
    if (ids[static_cast<size_t>(t)] < 0 || ids[static_cast<size_t>(t)] >= v)
      throw IndexError("embed: id " + std::to_string(ids[static_cast<size_t>(t)]) +
                       " at position " + std::to_string(t) + " out of range for vocab " +
                       std::to_string(v));
  TensorT<S> out = detail::make_output<S>({t_count, d}, table.requires_grad);
  for (int t = 0; t < t_count; ++t) {
    const S* src = table.data->data() + static_cast<size_t>(ids[static_cast<size_t>(t)]) * d;
    S* dst = out.data->data() + static_cast<size_t>(t) * d;
    for (int j = 0; j < d; ++j) dst[j] = src[j];
  }
  if (out.requires_grad) {
    std::vector<int> idv(ids.begin(), ids.end());
    active_tape<S>()->record("embed", [table, out, idv, t_count, d] {
      for (int t = 0; t < t_count; ++t) {
        S* dst = table.grad->data() + static_cast<size_t>(idv[static_cast<size_t>(t)]) * d;
        const S* src = out.grad->data() + static_cast<size_t>(t) * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

// pe[pos, 2i] = sin(pos / 10000^(2i/d)), pe[pos, 2i+1] = cos(pos / 10000^(2i/d)).
// Computed in double regardless of S; not part of the autodiff graph.
template <typename S>
TensorT<S> sinusoidal_positions(int t_count, int d) {
  if (t_count <= 0 || d <= 0)
    throw ShapeError("sinusoidal_positions: invalid size " + std::to_string(t_count) + " x " +
                     std::to_string(d));
  TensorT<S> pe = TensorT<S>::zeros({t_count, d});
  for (int pos = 0; pos < t_count; ++pos)
    for (int i = 0; 2 * i < d; ++i) {
      const double angle = pos / std::pow(10000.0, (2.0 * i) / d);
      pe.at(pos, 2 * i) = static_cast<S>(std::sin(angle));
      if (2 * i + 1 < d) pe.at(pos, 2 * i + 1) = static_cast<S>(std::cos(angle));
    }
  return pe;
}

// Token lookup with the original-implementation input conventions:
// row t = scale * table[token_t] + (use_pos ? PE(t) : 0).
template <typename S>
TensorT<S> embed_tokens(const TensorT<S>& table, std::span<const int> ids, bool use_pos,
                        S scale) {
  TensorT<S> e = embed(table, ids);
  if (scale != S(1)) e = mul_scalar(e, scale);
  if (use_pos)
    e = add(e, sinusoidal_positions<S>(static_cast<int>(ids.size()), table.cols()));
  return e;
}

// Projection to vocabulary logits: tied reuses the embedding table
// (transposed application), untied uses a dedicated [d x V] matrix. Exactly
// one of the two must be supplied.
template <typename S>
TensorT<S> output_logits(const TensorT<S>& features, const TensorT<S>* tied_table,
                         const TensorT<S>* untied_proj) {
  if ((tied_table != nullptr) == (untied_proj != nullptr))
    throw ConfigError("output_logits: exactly one of tied table / untied projection required");
  return tied_table ? matmul_nt(features, *tied_table) : matmul(features, *untied_proj);
}

template <typename S>
struct AttentionParamsT {
  TensorT<S> w_q, w_k, w_v, w_o;  // [d x d]
  TensorT<S> b_q, b_k, b_v, b_o;  // [d]
};

template <typename S>
struct TransformerLayerParamsT {
  AttentionParamsT<S> attn;
  TensorT<S> ln1_gain, ln1_bias;  // after the attention residual
  TensorT<S> w_ff1;               // [d x d_ff]
  TensorT<S> b_ff1;               // [d_ff]
  TensorT<S> w_ff2;               // [d_ff x d]
  TensorT<S> b_ff2;               // [d]
  TensorT<S> ln2_gain, ln2_bias;  // after the feed-forward residual
};

template <typename S>
struct LstmLayerParamsT {
  TensorT<S> w_x;  // [d_in x 4h], gate blocks input|forget|cell|output
  TensorT<S> w_h;  // [h x 4h]
  TensorT<S> b;    // [4h]
};

// Recurrent carry. Plain values, never part of a graph.
template <typename S>
struct LstmStateT {
  TensorT<S> h, c;  // [1 x h]
};

template <typename S>
LstmStateT<S> zero_lstm_state(int hidden) {
  return {TensorT<S>::zeros({1, hidden}), TensorT<S>::zeros({1, hidden})};
}

// Multi-head scaled dot-product self-attention over x: [T x d]. If
// attn_weights is non-null it receives one [T x T] probability matrix per
// head (detached copies).
template <typename S>
TensorT<S> causal_self_attention(const TensorT<S>& x, const AttentionParamsT<S>& p, int heads,
                                 MaskKind mask = MaskKind::Causal,
                                 std::vector<TensorT<S>>* attn_weights = nullptr) {
  detail::require_rank2(x, "causal_self_attention");
  const int d = x.cols();
  if (heads <= 0 || d % heads != 0)
    throw ConfigError("causal_self_attention: model width " + std::to_string(d) +
                      " not divisible by " + std::to_string(heads) + " heads");
  const int dh = d / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));
  TensorT<S> q = add_bias(matmul(x, p.w_q), p.b_q);
  TensorT<S> k = add_bias(matmul(x, p.w_k), p.b_k);
  TensorT<S> v = add_bias(matmul(x, p.w_v), p.b_v);
  if (attn_weights) attn_weights->clear();
  std::vector<TensorT<S>> head_outs;
  head_outs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    TensorT<S> qh = slice_cols(q, h * dh, (h + 1) * dh);
    TensorT<S> kh = slice_cols(k, h * dh, (h + 1) * dh);
    TensorT<S> vh = slice_cols(v, h * dh, (h + 1) * dh);
    TensorT<S> scores = mul_scalar(matmul_nt(qh, kh), scale);
    TensorT<S> probs = softmax_masked(scores, mask);
    if (attn_weights) attn_weights->push_back(probs.detach());
    head_outs.push_back(matmul(probs, vh));
  }
  TensorT<S> merged = heads == 1 ? head_outs[0] : concat_cols(head_outs);
  return add_bias(matmul(merged, p.w_o), p.b_o);
}

// One decoder block: attention with residual + layer norm, then a two-matrix
// ReLU feed-forward with residual + layer norm.
template <typename S>
TensorT<S> transformer_layer(const TensorT<S>& z_prev, const TransformerLayerParamsT<S>& p,
                             int heads, MaskKind mask = MaskKind::Causal) {
  TensorT<S> attn = causal_self_attention(z_prev, p.attn, heads, mask);
  TensorT<S> x = layer_norm(add(attn, z_prev), p.ln1_gain, p.ln1_bias);
  TensorT<S> hidden = relu(add_bias(matmul(x, p.w_ff1), p.b_ff1));
  TensorT<S> ff = add_bias(matmul(hidden, p.w_ff2), p.b_ff2);
  TensorT<S> y = add(x, ff);
  return layer_norm(y, p.ln2_gain, p.ln2_bias);
}

// Runs the LSTM over x: [T x d_in], seeded from state_in, and returns the
// hidden sequence [T x h]. state_out (if non-null) receives the final h and
// c detached from the graph, so gradients never cross window boundaries.
template <typename S>
TensorT<S> lstm_forward(const TensorT<S>& x, const LstmLayerParamsT<S>& p,
                        const LstmStateT<S>& state_in, LstmStateT<S>* state_out = nullptr) {
  detail::require_rank2(x, "lstm_forward");
  const int t_count = x.rows();
  const int hidden = p.w_h.rows();
  if (p.w_x.rows() != x.cols() || p.w_x.cols() != 4 * hidden || p.w_h.cols() != 4 * hidden)
    throw ShapeError("lstm_forward: weights " + shape_str(p.w_x.shape) + "/" +
                     shape_str(p.w_h.shape) + " do not match input " + shape_str(x.shape));
  if (state_in.h.rank() != 2 || state_in.h.rows() != 1 || state_in.h.cols() != hidden ||
      !state_in.c.same_shape(state_in.h))
    throw StateError("lstm_forward: carried state " + shape_str(state_in.h.shape) + "/" +
                     shape_str(state_in.c.shape) + " does not match hidden size " +
                     std::to_string(hidden));
  // Input contributions for every step at once; the recurrent term is added per step.
  TensorT<S> pre_x = add_bias(matmul(x, p.w_x), p.b);
  TensorT<S> h_prev = state_in.h;
  TensorT<S> c_prev = state_in.c;
  std::vector<TensorT<S>> rows;
  rows.reserve(static_cast<size_t>(t_count));
  for (int t = 0; t < t_count; ++t) {
    TensorT<S> pre = add(slice_rows(pre_x, t, t + 1), matmul(h_prev, p.w_h));
    TensorT<S> gi = sigmoid(slice_cols(pre, 0, hidden));
    TensorT<S> gf = sigmoid(slice_cols(pre, hidden, 2 * hidden));
    TensorT<S> gc = tanh(slice_cols(pre, 2 * hidden, 3 * hidden));
    TensorT<S> go = sigmoid(slice_cols(pre, 3 * hidden, 4 * hidden));
    TensorT<S> c = add(mul(gf, c_prev), mul(gi, gc));
    TensorT<S> h = mul(go, tanh(c));
    rows.push_back(h);
    h_prev = h;
    c_prev = c;
  }
  if (state_out) *state_out = {h_prev.detach(), c_prev.detach()};
  return t_count == 1 ? rows[0] : concat_rows(rows);
}

}  // namespace tfrn
