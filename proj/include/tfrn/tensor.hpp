#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace tfrn {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape/dimension disagreement between operands.
struct ShapeError : Error {
  using Error::Error;
};
// Token id or coordinate out of range.
struct IndexError : Error {
  using Error::Error;
};
// Invalid model/trainer configuration.
struct ConfigError : Error {
  using Error::Error;
};
// Corpus or fixture data unusable.
struct DataError : Error {
  using Error::Error;
};
// Recurrent carry does not match the model it is fed to.
struct StateError : Error {
  using Error::Error;
};
// Malformed text input (vocab file, n-best list, reference list).
struct FormatError : Error {
  using Error::Error;
};
// Misuse of the autodiff contract (e.g. backward on a non-scalar).
struct ContractError : Error {
  using Error::Error;
};
// Non-finite values where finite ones are required.
struct NumericError : Error {
  using Error::Error;
};

// Softmax row with every entry masked out.
struct DegenerateRowError : Error {
  using Error::Error;
};

// Deterministic RNG. mt19937_64 output is pinned by the standard, so models
// initialized from the same seed are bit-identical across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int n) { return static_cast<int>(gen_() % static_cast<std::uint64_t>(n)); }
  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

inline std::string shape_str(const std::vector<int>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense rank-1..3 tensor, row-major. Copies are shallow: handles share the
// underlying data and grad buffers, which is what the tape relies on.
template <typename S>
struct TensorT {
  std::vector<int> shape;
  std::shared_ptr<std::vector<S>> data;
  std::shared_ptr<std::vector<S>> grad;  // allocated iff requires_grad
  bool requires_grad = false;

  TensorT() = default;

  static size_t check_shape(const std::vector<int>& shape) {
    if (shape.empty() || shape.size() > 3)
      throw ShapeError("tensor rank must be 1..3, got " + shape_str(shape));
    size_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw ShapeError("tensor dims must be positive, got " + shape_str(shape));
      n *= static_cast<size_t>(d);
    }
    return n;
  }

  static TensorT zeros(std::vector<int> shape, bool requires_grad = false) {
    size_t n = check_shape(shape);
    TensorT t;
    t.shape = std::move(shape);
    t.data = std::make_shared<std::vector<S>>(n, S(0));
    if (requires_grad) t.enable_grad();
    return t;
  }

  static TensorT full(std::vector<int> shape, S value, bool requires_grad = false) {
    TensorT t = zeros(std::move(shape), requires_grad);
    for (S& v : *t.data) v = value;
    return t;
  }

  static TensorT from(std::vector<int> shape, std::vector<S> values, bool requires_grad = false) {
    size_t n = check_shape(shape);
    if (values.size() != n)
      throw ShapeError("value count " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(shape));
    TensorT t;
    t.shape = std::move(shape);
    t.data = std::make_shared<std::vector<S>>(std::move(values));
    if (requires_grad) t.enable_grad();
    return t;
  }

  static TensorT scalar(S value, bool requires_grad = false) {
    return from({1}, {value}, requires_grad);
  }

  static TensorT randu(std::vector<int> shape, S lo, S hi, Rng& rng, bool requires_grad = false) {
    TensorT t = zeros(std::move(shape), requires_grad);
    for (S& v : *t.data) v = static_cast<S>(rng.uniform(lo, hi));
    return t;
  }

  void enable_grad() {
    requires_grad = true;
    if (!grad) grad = std::make_shared<std::vector<S>>(data->size(), S(0));
  }

  int rank() const { return static_cast<int>(shape.size()); }
  size_t numel() const { return data ? data->size() : 0; }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rows() const { return shape[0]; }
  int cols() const { return shape[1]; }

  S& at(int i) { return (*data)[static_cast<size_t>(i)]; }
  S at(int i) const { return (*data)[static_cast<size_t>(i)]; }
  S& at(int i, int j) { return (*data)[static_cast<size_t>(i) * cols() + j]; }
  S at(int i, int j) const { return (*data)[static_cast<size_t>(i) * cols() + j]; }

  void zero_grad() {
    if (grad) std::fill(grad->begin(), grad->end(), S(0));
  }

  // Deep copy; the result owns fresh buffers.
  TensorT clone() const {
    TensorT t;
    t.shape = shape;
    t.data = std::make_shared<std::vector<S>>(*data);
    if (requires_grad) {
      t.requires_grad = true;
      t.grad = std::make_shared<std::vector<S>>(*grad);
    }
    return t;
  }

  // Value-only copy with no gradient tracking.
  TensorT detach() const {
    TensorT t;
    t.shape = shape;
    t.data = std::make_shared<std::vector<S>>(*data);
    return t;
  }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

// Reverse-mode tape. Ops append nodes in execution order (inputs always
// precede their consumers), so a single reverse sweep propagates adjoints.
template <typename S>
struct TapeT {
  struct Node {
    const char* op;
    std::function<void()> backward;
  };
  std::vector<Node> nodes;
  bool consumed = false;

  void record(const char* op, std::function<void()> fn) {
    nodes.push_back(Node{op, std::move(fn)});
  }
  size_t size() const { return nodes.size(); }
};

using Tape = TapeT<float>;

template <typename S>
inline TapeT<S>*& active_tape() {
  thread_local TapeT<S>* tape = nullptr;
  return tape;
}

// Activates a tape for the current thread while in scope. Ops record onto
// the active tape only; with no active tape they run forward-only.
template <typename S>
class TapeScopeT {
 public:
  explicit TapeScopeT(TapeT<S>& tape) : prev_(active_tape<S>()) { active_tape<S>() = &tape; }
  ~TapeScopeT() { active_tape<S>() = prev_; }
  TapeScopeT(const TapeScopeT&) = delete;
  TapeScopeT& operator=(const TapeScopeT&) = delete;

 private:
  TapeT<S>* prev_;
};

using TapeScope = TapeScopeT<float>;

template <typename S>
inline bool recording() {
  return active_tape<S>() != nullptr;
}

// Seeds d(loss)/d(loss)=1 and replays the tape once in reverse, accumulating
// adjoints into the grad buffer of every requires_grad tensor. The tape is
// consumed.
template <typename S>
void backward(const TensorT<S>& loss, TapeT<S>& tape) {
  if (loss.numel() != 1)
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape));
  if (!loss.requires_grad || !loss.grad)
    throw ContractError("backward on a tensor that was not produced through the tape");
  if (tape.consumed) throw ContractError("backward on a consumed tape");
  (*loss.grad)[0] += S(1);
  for (auto it = tape.nodes.rbegin(); it != tape.nodes.rend(); ++it) it->backward();
  tape.nodes.clear();
  tape.consumed = true;
}

// Central finite differences in 64-bit: (f(x+h e_i) - f(x-h e_i)) / 2h.
// The gradient oracle used by grad-check.
inline TensorD finite_difference_grad(const std::function<double(const TensorD&)>& f,
                                      const TensorD& x, double h) {
  TensorD est = TensorD::zeros(x.shape);
  TensorD probe = x.clone();
  for (size_t i = 0; i < x.numel(); ++i) {
    const double orig = (*probe.data)[i];
    (*probe.data)[i] = orig + h;
    const double up = f(probe);
    (*probe.data)[i] = orig - h;
    const double down = f(probe);
    (*probe.data)[i] = orig;
    (*est.data)[i] = (up - down) / (2.0 * h);
  }
  return est;
}

}  // namespace tfrn
