#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hnmt/common.hpp"

namespace hnmt {

inline std::string format_shape(std::span<const std::size_t> shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << "]";
  return os.str();
}

// Dense row-major tensor of 64-bit floats. A Tensor is a cheap handle onto
// shared storage: copies alias, which is what lets the tape accumulate
// gradients into the same buffers the caller holds.
class Tensor {
public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape) : s_(std::make_shared<Storage>()) {
    s_->shape = std::move(shape);
    s_->data.assign(count(s_->shape), 0.0);
  }

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : s_(std::make_shared<Storage>()) {
    if (count(shape) != data.size())
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + format_shape(shape));
    s_->shape = std::move(shape);
    s_->data = std::move(data);
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

  static Tensor randu(std::vector<std::size_t> shape, double lo, double hi, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& x : t.s_->data) x = rng.uniform(lo, hi);
    return t;
  }

  bool defined() const { return static_cast<bool>(s_); }

  const std::vector<std::size_t>& shape() const { return st().shape; }
  std::size_t ndim() const { return st().shape.size(); }
  std::size_t size() const { return st().data.size(); }
  std::size_t dim(std::size_t i) const { return st().shape.at(i); }

  // 2-D views; a 1-D tensor counts as a single column
  std::size_t rows() const { return st().shape.empty() ? 0 : st().shape[0]; }
  std::size_t cols() const { return st().shape.size() >= 2 ? st().shape[1] : 1; }

  double* data() { return st().data.data(); }
  const double* data() const { return st().data.data(); }
  std::vector<double>& vec() { return st().data; }
  const std::vector<double>& vec() const { return st().data; }

  double& at(std::size_t i) { return st().data[i]; }
  double at(std::size_t i) const { return st().data[i]; }
  double& at(std::size_t i, std::size_t j) { return st().data[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return st().data[i * cols() + j]; }

  double value() const {
    if (size() != 1) throw ContractError("value() on non-scalar tensor " + format_shape(shape()));
    return st().data[0];
  }

  bool requires_grad() const { return defined() && s_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    st().requires_grad = on;
    return *this;
  }

  bool has_grad() const { return defined() && !s_->grad.empty(); }

  // gradient buffer, allocated (zero) on first touch
  std::vector<double>& grad() {
    auto& g = st().grad;
    if (g.empty()) g.assign(st().data.size(), 0.0);
    return g;
  }

  const std::vector<double>& grad() const {
    if (!has_grad()) throw ContractError("missing gradient on tensor '" + label() + "'");
    return s_->grad;
  }

  void zero_grad() {
    if (has_grad()) std::fill(s_->grad.begin(), s_->grad.end(), 0.0);
  }

  void drop_grad() {
    if (defined()) s_->grad.clear();
  }

  const std::string& label() const {
    static const std::string empty;
    return defined() ? s_->label : empty;
  }
  Tensor& set_label(std::string l) {
    st().label = std::move(l);
    return *this;
  }

  bool same_storage(const Tensor& o) const { return s_ == o.s_; }

private:
  struct Storage {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty = absent
    bool requires_grad = false;
    std::string label;
  };

  static std::size_t count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }

  Storage& st() {
    if (!s_) throw ContractError("use of undefined tensor");
    return *s_;
  }
  const Storage& st() const {
    if (!s_) throw ContractError("use of undefined tensor");
    return *s_;
  }

  std::shared_ptr<Storage> s_;
};

}  // namespace hnmt
