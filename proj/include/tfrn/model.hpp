#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "tfrn/layers.hpp"

namespace tfrn {

enum class Family { Transformer, Lstm, TransfoRnn };
enum class InferenceMode { All, Final };

std::string to_string(Family f);
std::string to_string(InferenceMode m);
Family family_from_string(const std::string& s);
InferenceMode inference_mode_from_string(const std::string& s);

struct ModelConfig {
  Family family = Family::TransfoRnn;
  int vocab_size = 0;
  int d_model = 0;
  int n_transformer_layers = 0;  // transformer stack depth
  int m_lstm_layers = 0;         // recurrent stack depth
  int heads = 1;
  int d_ff = 0;
  int lstm_hidden = 0;
  bool use_positional = true;
  bool tied_output = true;
  InferenceMode inference_mode = InferenceMode::All;
  std::uint64_t seed = 1;

  // Fills derived defaults (lstm_hidden <- d_model when recurrent layers exist).
  ModelConfig normalized() const;
  void validate() const;  // throws ConfigError
  // Width of the representation entering the output projection.
  int feature_width() const { return m_lstm_layers > 0 ? lstm_hidden : d_model; }
};

// Parameter names and shapes implied by a config, in enumeration order.
std::vector<std::pair<std::string, std::vector<int>>> named_shapes(const ModelConfig& cfg);
std::size_t parameter_count(const ModelConfig& cfg);

// Recurrent state across windows; empty for transformer-only models.
template <typename S>
struct CarryT {
  std::vector<LstmStateT<S>> layers;
};

// NLL of one logit row, with the log-sum-exp accumulated in 64-bit.
template <typename S>
double row_nll(const TensorT<S>& logits, int row, int target) {
  const int v = logits.cols();
  if (target < 0 || target >= v)
    throw IndexError("row_nll: target " + std::to_string(target) + " out of range for vocab " +
                     std::to_string(v));
  const S* r = logits.data->data() + static_cast<size_t>(row) * v;
  double mx = static_cast<double>(r[0]);
  for (int j = 1; j < v; ++j) mx = std::max(mx, static_cast<double>(r[j]));
  double denom = 0.0;
  for (int j = 0; j < v; ++j) denom += std::exp(static_cast<double>(r[j]) - mx);
  return mx + std::log(denom) - static_cast<double>(r[target]);
}

template <typename S>
struct NamedParamT {
  std::string name;
  TensorT<S>& tensor;  // references the model's storage
};

template <typename S>
struct LanguageModelT {
  ModelConfig config;
  TensorT<S> embedding;  // [V x d]
  std::vector<TransformerLayerParamsT<S>> transformer;
  std::vector<LstmLayerParamsT<S>> lstm;
  TensorT<S> output_weight;  // [feature x V], absent when tied_output

  static LanguageModelT build(const ModelConfig& raw, bool trainable = true) {
    const ModelConfig cfg = raw.normalized();
    cfg.validate();
    LanguageModelT m;
    m.config = cfg;
    const int d = cfg.d_model, v = cfg.vocab_size;
    m.embedding = TensorT<S>::zeros({v, d});
    for (int l = 0; l < cfg.n_transformer_layers; ++l) {
      TransformerLayerParamsT<S> p;
      p.attn.w_q = TensorT<S>::zeros({d, d});
      p.attn.b_q = TensorT<S>::zeros({d});
      p.attn.w_k = TensorT<S>::zeros({d, d});
      p.attn.b_k = TensorT<S>::zeros({d});
      p.attn.w_v = TensorT<S>::zeros({d, d});
      p.attn.b_v = TensorT<S>::zeros({d});
      p.attn.w_o = TensorT<S>::zeros({d, d});
      p.attn.b_o = TensorT<S>::zeros({d});
      p.ln1_gain = TensorT<S>::zeros({d});
      p.ln1_bias = TensorT<S>::zeros({d});
      p.w_ff1 = TensorT<S>::zeros({d, cfg.d_ff});
      p.b_ff1 = TensorT<S>::zeros({cfg.d_ff});
      p.w_ff2 = TensorT<S>::zeros({cfg.d_ff, d});
      p.b_ff2 = TensorT<S>::zeros({d});
      p.ln2_gain = TensorT<S>::zeros({d});
      p.ln2_bias = TensorT<S>::zeros({d});
      m.transformer.push_back(std::move(p));
    }
    for (int l = 0; l < cfg.m_lstm_layers; ++l) {
      const int d_in = l == 0 ? d : cfg.lstm_hidden;
      LstmLayerParamsT<S> p;
      p.w_x = TensorT<S>::zeros({d_in, 4 * cfg.lstm_hidden});
      p.w_h = TensorT<S>::zeros({cfg.lstm_hidden, 4 * cfg.lstm_hidden});
      p.b = TensorT<S>::zeros({4 * cfg.lstm_hidden});
      m.lstm.push_back(std::move(p));
    }
    if (!cfg.tied_output)
      m.output_weight = TensorT<S>::zeros({cfg.feature_width(), v});
    if (trainable)
      for (auto& np : m.params()) np.tensor.enable_grad();
    return m;
  }

  // Parameters in enumeration order; tensors alias the model's storage.
  std::vector<NamedParamT<S>> params() {
    std::vector<NamedParamT<S>> out;
    out.push_back({"embedding.weight", embedding});
    for (std::size_t l = 0; l < transformer.size(); ++l) {
      const std::string base = "transformer." + std::to_string(l) + ".";
      auto& p = transformer[l];
      out.push_back({base + "attn.w_q", p.attn.w_q});
      out.push_back({base + "attn.b_q", p.attn.b_q});
      out.push_back({base + "attn.w_k", p.attn.w_k});
      out.push_back({base + "attn.b_k", p.attn.b_k});
      out.push_back({base + "attn.w_v", p.attn.w_v});
      out.push_back({base + "attn.b_v", p.attn.b_v});
      out.push_back({base + "attn.w_o", p.attn.w_o});
      out.push_back({base + "attn.b_o", p.attn.b_o});
      out.push_back({base + "ln1.gain", p.ln1_gain});
      out.push_back({base + "ln1.bias", p.ln1_bias});
      out.push_back({base + "ff.w1", p.w_ff1});
      out.push_back({base + "ff.b1", p.b_ff1});
      out.push_back({base + "ff.w2", p.w_ff2});
      out.push_back({base + "ff.b2", p.b_ff2});
      out.push_back({base + "ln2.gain", p.ln2_gain});
      out.push_back({base + "ln2.bias", p.ln2_bias});
    }
    for (std::size_t l = 0; l < lstm.size(); ++l) {
      const std::string base = "lstm." + std::to_string(l) + ".";
      auto& p = lstm[l];
      out.push_back({base + "w_x", p.w_x});
      out.push_back({base + "w_h", p.w_h});
      out.push_back({base + "b", p.b});
    }
    if (!config.tied_output) out.push_back({"output.weight", output_weight});
    return out;
  }
  std::vector<NamedParamT<S>> params() const {
    return const_cast<LanguageModelT*>(this)->params();
  }

  // Weight matrices uniform in [-0.1, 0.1); biases zero except the LSTM
  // forget-gate block (+1); layer-norm gains one. Deterministic in the seed.
  void init_params() {
    Rng rng(config.seed);
    for (auto& np : params()) {
      TensorT<S>& t = np.tensor;
      if (t.rank() == 2) {
        for (std::size_t i = 0; i < t.numel(); ++i)
          (*t.data)[i] = static_cast<S>(rng.uniform(-0.1, 0.1));
      } else if (np.name.find("ln") != std::string::npos && np.name.ends_with(".gain")) {
        for (std::size_t i = 0; i < t.numel(); ++i) (*t.data)[i] = S(1);
      } else if (np.name.starts_with("lstm.") && np.name.ends_with(".b")) {
        const int h = config.lstm_hidden;
        for (int j = 0; j < 4 * h; ++j) t.at(j) = (j >= h && j < 2 * h) ? S(1) : S(0);
      } else {
        for (std::size_t i = 0; i < t.numel(); ++i) (*t.data)[i] = S(0);
      }
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& np : params()) n += np.tensor.numel();
    return n;
  }

  CarryT<S> make_carry() const {
    CarryT<S> c;
    for (int l = 0; l < config.m_lstm_layers; ++l)
      c.layers.push_back(zero_lstm_state<S>(config.lstm_hidden));
    return c;
  }

  void zero_grad() {
    for (auto& np : params()) np.tensor.zero_grad();
  }

  // Logits for every position: [T x V]. A carry, when given, seeds the
  // recurrent stack and is advanced past the window (values detached).
  TensorT<S> forward(std::span<const int> ids, CarryT<S>* carry = nullptr) const {
    check_carry(carry);
    TensorT<S> h = through_transformer(input_rows(ids));
    h = through_lstm(h, carry);
    return project(h);
  }

  // Logits for the final window position only: [1 x V]. The transformer
  // stack sees the whole window; the recurrent stack advances by exactly one
  // step on the final position's representation.
  TensorT<S> forward_final(std::span<const int> window, CarryT<S>* carry = nullptr) const {
    check_carry(carry);
    if (window.empty()) throw ShapeError("forward_final: empty window");
    TensorT<S> h;
    if (config.n_transformer_layers > 0) {
      h = through_transformer(input_rows(window));
      if (h.rows() > 1) h = slice_rows(h, h.rows() - 1, h.rows());
    } else {
      h = input_rows(window.subspan(window.size() - 1, 1));
    }
    h = through_lstm(h, carry);
    return project(h);
  }

  // Mean cross-entropy over all window positions.
  TensorT<S> loss_all_positions(std::span<const int> inputs, std::span<const int> targets,
                                CarryT<S>* carry = nullptr) const {
    return cross_entropy(forward(inputs, carry), targets);
  }

  // -log P(next | context), from the logits of the final context position.
  // Runs the full window, so this equals the last-row component of
  // loss_all_positions on the same window.
  double nll_final_position(std::span<const int> context, int next,
                            CarryT<S>* carry = nullptr) const {
    TensorT<S> logits = forward(context, carry);
    return row_nll(logits, logits.rows() - 1, next);
  }

  LanguageModelT clone(bool trainable = true) const {
    LanguageModelT copy = build(config, trainable);
    auto src = params();
    auto dst = copy.params();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].tensor.data = *src[i].tensor.data;
    return copy;
  }

 private:
  void check_carry(const CarryT<S>* carry) const {
    if (!carry) return;
    if (static_cast<int>(carry->layers.size()) != config.m_lstm_layers)
      throw StateError("forward: carry has " + std::to_string(carry->layers.size()) +
                       " layer states, model has " + std::to_string(config.m_lstm_layers) +
                       " recurrent layers");
  }

  // Embedding scale and positional encoding apply only when a transformer
  // stack consumes the rows; pure LSTM models read raw embeddings (Eq.-style
  // recurrence over e_t directly).
  TensorT<S> input_rows(std::span<const int> ids) const {
    const bool has_transformer = config.n_transformer_layers > 0;
    const S scale = has_transformer ? std::sqrt(static_cast<S>(config.d_model)) : S(1);
    return embed_tokens(embedding, ids, has_transformer && config.use_positional, scale);
  }

  TensorT<S> through_transformer(TensorT<S> h) const {
    for (const auto& layer : transformer)
      h = transformer_layer(h, layer, config.heads, MaskKind::Causal);
    return h;
  }

  TensorT<S> through_lstm(TensorT<S> h, CarryT<S>* carry) const {
    for (std::size_t l = 0; l < lstm.size(); ++l) {
      LstmStateT<S> in = carry ? carry->layers[l] : zero_lstm_state<S>(config.lstm_hidden);
      LstmStateT<S> out;
      h = lstm_forward(h, lstm[l], in, &out);
      if (carry) carry->layers[l] = out;
    }
    return h;
  }

  TensorT<S> project(const TensorT<S>& h) const {
    return config.tied_output ? output_logits<S>(h, &embedding, nullptr)
                              : output_logits<S>(h, nullptr, &output_weight);
  }
};

using LanguageModel = LanguageModelT<float>;
using Carry = CarryT<float>;

template <typename To, typename From>
LanguageModelT<To> convert_model(const LanguageModelT<From>& m) {
  LanguageModelT<To> out = LanguageModelT<To>::build(m.config, /*trainable=*/true);
  auto src = m.params();
  auto dst = out.params();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto& s = *src[i].tensor.data;
    auto& d = *dst[i].tensor.data;
    for (std::size_t j = 0; j < s.size(); ++j) d[j] = static_cast<To>(s[j]);
  }
  return out;
}

// key=value lines, one per config field; the checkpoint's config block.
std::string config_to_text(const ModelConfig& cfg);
ModelConfig config_from_text(const std::string& text);

// Binary checkpoint round-trip. Bit-exact for every parameter.
void save_checkpoint(const LanguageModel& model, const std::string& path);
LanguageModel load_checkpoint(const std::string& path);

}  // namespace tfrn
