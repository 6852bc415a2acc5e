#include "tfrn/train.hpp"

#include <cmath>
#include <sstream>

#include "tfrn/eval.hpp"

namespace tfrn {

std::vector<Batch> batchify(std::span<const int> corpus, int batch, int window) {
  if (batch < 1) throw ConfigError("batchify: batch must be >= 1");
  if (window < 2) throw ConfigError("batchify: window must be >= 2");
  const long long l = static_cast<long long>(corpus.size());
  const long long b = batch, w = window;
  if (l < b * (w + 1))
    throw DataError("batchify: corpus of " + std::to_string(l) + " tokens is shorter than one " +
                    std::to_string(window) + "-token window per stream across " +
                    std::to_string(batch) + " streams");
  const long long n_steps = (l - 1) / (b * w);
  const long long stride = n_steps * w;  // stream length in input positions
  std::vector<Batch> out;
  out.reserve(static_cast<std::size_t>(n_steps));
  for (long long s = 0; s < n_steps; ++s) {
    Batch step;
    step.stream_reset = s == 0;
    for (long long bs = 0; bs < b; ++bs) {
      const long long start = bs * stride + s * w;
      std::vector<int> inputs(corpus.begin() + start, corpus.begin() + start + w);
      std::vector<int> targets(corpus.begin() + start + 1, corpus.begin() + start + w + 1);
      step.inputs.push_back(std::move(inputs));
      step.targets.push_back(std::move(targets));
    }
    out.push_back(std::move(step));
  }
  return out;
}

template <typename S>
void sgd_step(LanguageModelT<S>& model, double lr, double clip) {
  auto params = model.params();
  double sq_norm = 0.0;
  for (auto& np : params) {
    if (!np.tensor.grad)
      throw ContractError("sgd_step: parameter " + np.name + " has no gradient buffer");
    for (S g : *np.tensor.grad) {
      if (!std::isfinite(static_cast<double>(g)))
        throw NumericError("sgd_step: non-finite gradient in " + np.name +
                           "; aborting training");
      sq_norm += static_cast<double>(g) * static_cast<double>(g);
    }
  }
  const double norm = std::sqrt(sq_norm);
  const double scale = (clip > 0.0 && norm > clip) ? clip / norm : 1.0;
  for (auto& np : params) {
    auto& data = *np.tensor.data;
    const auto& grad = *np.tensor.grad;
    for (std::size_t i = 0; i < data.size(); ++i)
      data[i] -= static_cast<S>(lr * scale * static_cast<double>(grad[i]));
    np.tensor.zero_grad();
  }
}

template void sgd_step<float>(LanguageModelT<float>&, double, double);
template void sgd_step<double>(LanguageModelT<double>&, double, double);

NewBobState new_bob_update(NewBobState state, double val_ppl, const NewBobConfig& cfg) {
  if (!std::isfinite(val_ppl))
    throw NumericError("new_bob_update: non-finite validation perplexity");
  const bool improved = val_ppl < state.best_val_ppl;
  const double relative = std::isfinite(state.best_val_ppl)
                              ? (state.best_val_ppl - val_ppl) / state.best_val_ppl
                              : 1.0;
  if (relative < cfg.threshold) {
    if (state.halvings >= 1) ++state.epochs_without_improvement;
    if (state.epochs_without_improvement >= cfg.patience) {
      state.halted = true;
    } else {
      state.current_lr *= cfg.decay;
      ++state.halvings;
    }
  } else {
    state.epochs_without_improvement = 0;
  }
  if (improved) state.best_val_ppl = val_ppl;
  return state;
}

TrainResult train_model(const LanguageModel& model, std::span<const int> train_corpus,
                        std::span<const int> valid_corpus, const TrainerConfig& cfg) {
  if (train_corpus.empty() || valid_corpus.empty())
    throw DataError("train: empty corpus");
  LanguageModel current = model.clone(/*trainable=*/true);
  const auto batches = batchify(train_corpus, cfg.batch, cfg.window);
  NewBobState state;
  state.current_lr = cfg.lr0;
  TrainResult result;
  result.model = model.clone(/*trainable=*/true);
  double best_valid = std::numeric_limits<double>::infinity();
  std::vector<Carry> carries;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double nll_sum = 0.0;
    long long nll_count = 0;
    for (const auto& step : batches) {
      if (step.stream_reset) {
        carries.clear();
        for (int b = 0; b < cfg.batch; ++b) carries.push_back(current.make_carry());
      }
      for (int b = 0; b < cfg.batch; ++b) {
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = current.loss_all_positions(step.inputs[static_cast<std::size_t>(b)],
                                                 step.targets[static_cast<std::size_t>(b)],
                                                 &carries[static_cast<std::size_t>(b)]);
        nll_sum += static_cast<double>(loss.at(0)) * cfg.window;
        nll_count += cfg.window;
        Tensor scaled = mul_scalar(loss, 1.0f / static_cast<float>(cfg.batch));
        backward(scaled, tape);
      }
      sgd_step(current, state.current_lr, cfg.clip);
    }
    const double train_ppl = std::exp(nll_sum / static_cast<double>(nll_count));
    const double valid_ppl = perplexity(current, valid_corpus, InferenceMode::All, cfg.window);
    result.log.push_back({epoch, train_ppl, valid_ppl, state.current_lr});
    if (valid_ppl < best_valid) {
      best_valid = valid_ppl;
      result.model = current.clone(/*trainable=*/true);
    }
    state = new_bob_update(state, valid_ppl, cfg.newbob);
    if (state.halted) break;
  }
  return result;
}

std::string format_training_log(const std::vector<EpochRecord>& log) {
  std::ostringstream os;
  for (const auto& r : log) {
    char line[128];
    std::snprintf(line, sizeof line, "%d\t%.4f\t%.4f\t%.6g\n", r.epoch, r.train_ppl, r.valid_ppl,
                  r.lr);
    os << line;
  }
  return os.str();
}

}  // namespace tfrn
