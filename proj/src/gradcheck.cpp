#include "tfrn/gradcheck.hpp"

#include <cmath>

namespace tfrn {

GradMap analytic_param_grads(LanguageModelT<double>& model, std::span<const int> inputs,
                             std::span<const int> targets) {
  model.zero_grad();
  TapeT<double> tape;
  {
    TapeScopeT<double> scope(tape);
    TensorT<double> loss = model.loss_all_positions(inputs, targets);
    backward(loss, tape);
  }
  GradMap out;
  for (auto& np : model.params()) out[np.name] = *np.tensor.grad;
  model.zero_grad();
  return out;
}

GradMap fd_param_grads(LanguageModelT<double>& model, std::span<const int> inputs,
                       std::span<const int> targets, double h) {
  if (h <= 0.0) throw ConfigError("fd_param_grads: step must be positive");
  GradMap out;
  for (auto& np : model.params()) {
    std::vector<double>& values = *np.tensor.data;
    std::vector<double> est(values.size(), 0.0);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + h;
      const double up = model.loss_all_positions(inputs, targets).at(0);
      values[i] = orig - h;
      const double down = model.loss_all_positions(inputs, targets).at(0);
      values[i] = orig;
      est[i] = (up - down) / (2.0 * h);
    }
    out[np.name] = std::move(est);
  }
  return out;
}

std::map<std::string, double> compare_grads(const GradMap& analytic, const GradMap& fd) {
  if (analytic.size() != fd.size())
    throw ContractError("compare_grads: tensor sets differ in size");
  std::map<std::string, double> out;
  for (const auto& [name, a] : analytic) {
    const auto it = fd.find(name);
    if (it == fd.end()) throw ContractError("compare_grads: missing tensor " + name);
    const auto& b = it->second;
    if (a.size() != b.size()) throw ContractError("compare_grads: size mismatch for " + name);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double rel = std::abs(a[i] - b[i]) / std::max(1e-4, std::abs(a[i]) + std::abs(b[i]));
      worst = std::max(worst, rel);
    }
    out[name] = worst;
  }
  return out;
}

GradCheckReport grad_check_model(const ModelConfig& cfg, int t_window, double fd_step) {
  if (t_window < 1) throw ConfigError("grad_check: window must be >= 1");
  LanguageModelT<double> model = LanguageModelT<double>::build(cfg, /*trainable=*/true);
  model.init_params();
  Rng rng(cfg.seed + 1);  // token draw independent of the init stream
  std::vector<int> tokens(static_cast<std::size_t>(t_window) + 1);
  for (int& t : tokens) t = static_cast<int>(rng.uniform_int(cfg.vocab_size));
  std::span<const int> inputs(tokens.data(), tokens.size() - 1);
  std::span<const int> targets(tokens.data() + 1, tokens.size() - 1);
  const GradMap analytic = analytic_param_grads(model, inputs, targets);
  const GradMap fd = fd_param_grads(model, inputs, targets, fd_step);
  GradCheckReport report;
  for (const auto& [name, err] : compare_grads(analytic, fd)) {
    report.tensors.push_back({name, err});
    report.worst = std::max(report.worst, err);
  }
  return report;
}

}  // namespace tfrn
