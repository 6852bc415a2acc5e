#pragma once

#include <limits>

#include "tfrn/model.hpp"

namespace tfrn {

struct NewBobConfig {
  double decay = 0.5;        // lr multiplier on stagnation
  double threshold = 0.001;  // minimum relative improvement (0.1%)
  int patience = 2;          // stagnant epochs after the first halving before halting
};

struct TrainerConfig {
  double lr0 = 0.1;
  int batch = 16;
  int window = 64;
  double clip = 5.0;  // max global gradient L2 norm
  NewBobConfig newbob;
  int max_epochs = 20;
};

struct NewBobState {
  double current_lr = 0.0;
  double best_val_ppl = std::numeric_limits<double>::infinity();
  int epochs_without_improvement = 0;  // counted after the first halving
  int halvings = 0;
  bool halted = false;
};

// One training step over B parallel streams. stream_reset marks the first
// window of each stream, where recurrent carries must be zeroed.
struct Batch {
  std::vector<std::vector<int>> inputs;   // B x W
  std::vector<std::vector<int>> targets;  // B x W
  bool stream_reset = false;
};

// Splits the corpus into `batch` contiguous streams of floor((L-1)/(B*W))
// windows each; consecutive windows within a stream are adjacent, the
// remainder is dropped.
std::vector<Batch> batchify(std::span<const int> corpus, int batch, int window);

// Clips the global gradient norm to `clip`, applies theta -= lr * grad, and
// zeroes the gradients. Throws NumericError on non-finite gradients.
template <typename S>
void sgd_step(LanguageModelT<S>& model, double lr, double clip);

NewBobState new_bob_update(NewBobState state, double val_ppl, const NewBobConfig& cfg);

struct EpochRecord {
  int epoch;  // 1-based
  double train_ppl;
  double valid_ppl;
  double lr;  // rate in effect during this epoch
};

struct TrainResult {
  LanguageModel model;  // parameters from the best-validation epoch
  std::vector<EpochRecord> log;
};

TrainResult train_model(const LanguageModel& model, std::span<const int> train_corpus,
                        std::span<const int> valid_corpus, const TrainerConfig& cfg);

// Tab-separated `epoch train_ppl valid_ppl lr`, one line per epoch.
std::string format_training_log(const std::vector<EpochRecord>& log);

}  // namespace tfrn
