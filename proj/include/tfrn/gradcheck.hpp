#pragma once

#include <map>

#include "tfrn/model.hpp"

namespace tfrn {

// Name -> flat gradient, one entry per parameter tensor, all in 64-bit.
using GradMap = std::map<std::string, std::vector<double>>;

// Gradients of loss_all_positions via the tape.
GradMap analytic_param_grads(LanguageModelT<double>& model, std::span<const int> inputs,
                             std::span<const int> targets);

// Central finite differences, (f(x+h) - f(x-h)) / 2h per coordinate.
GradMap fd_param_grads(LanguageModelT<double>& model, std::span<const int> inputs,
                       std::span<const int> targets, double h);

// Elementwise |a-b| / max(1e-4, |a|+|b|), maximised per tensor.
std::map<std::string, double> compare_grads(const GradMap& analytic, const GradMap& fd);

struct GradCheckReport {
  struct Entry {
    std::string name;
    double max_rel_err;
  };
  std::vector<Entry> tensors;
  double worst = 0.0;
  bool passed(double tol = 1e-3) const { return worst < tol; }
};

// Builds a randomly initialized 64-bit model from the config, draws a random
// token window of length t_window, and compares tape gradients against
// finite differences for every parameter coordinate.
GradCheckReport grad_check_model(const ModelConfig& cfg, int t_window, double fd_step = 1e-3);

}  // namespace tfrn
