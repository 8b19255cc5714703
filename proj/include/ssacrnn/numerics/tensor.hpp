// Copyright 2026 The SSA-CRNN Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ssacrnn {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;

  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Row-major N-dimensional array of doubles with optional gradient storage.
///
/// A Tensor is a shared handle: copies alias the same storage. Values produced
/// by operations are never modified afterwards; parameters are the exception
/// and are updated in place by the optimizer through mutable_data().
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    if (shape.empty()) shape = {1};
    for (std::size_t extent : shape) {
      if (extent == 0) throw ShapeError("tensor extents must be positive: " + ssacrnn::to_string(shape));
    }
    if (element_count(shape) != values.size()) {
      throw ShapeError("shape " + ssacrnn::to_string(shape) + " does not hold " +
                       std::to_string(values.size()) + " values");
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = element_count(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor({1}, {v}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> data() const { return node_->value; }
  std::span<double> mutable_data() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + ssacrnn::to_string(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  /// Gradient values; empty span when nothing has flowed into this tensor.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }
  void clear_grad() { node_->grad.clear(); }

  /// Deep copy of the values with no gradient linkage.
  Tensor clone(bool requires_grad = false) const {
    return Tensor(node_->shape, node_->value, requires_grad);
  }

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Ordered record of differentiable operations executed on this thread.
///
/// Constructing a Tape makes it the active recorder for the current thread
/// until it is destroyed. Operations append themselves as they execute, so
/// the record is always in topological order; backward() replays it in
/// reverse.
class Tape {
 public:
  struct Entry {
    std::string op;
    std::vector<std::shared_ptr<detail::Node>> inputs;
    std::vector<std::shared_ptr<detail::Node>> outputs;
    std::function<void()> backward;
  };

  Tape() : previous_(active_slot()) { active_slot() = this; }
  ~Tape() { active_slot() = previous_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_slot(); }

  void record(Entry entry) { entries_.push_back(std::move(entry)); }
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable tensor that
  /// requires a gradient. Leaf gradients accumulate across calls.
  void backward(const Tensor& loss) {
    if (loss.size() != 1) {
      throw ShapeError("backward() needs a scalar loss, got " + to_string(loss.shape()));
    }
    loss.node()->ensure_grad()[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      bool any_output_grad = false;
      for (const auto& out : it->outputs) any_output_grad |= !out->grad.empty();
      if (any_output_grad) it->backward();
    }
    entries_.clear();
  }

 private:
  static Tape*& active_slot() {
    thread_local Tape* slot = nullptr;
    return slot;
  }

  Tape* previous_;
  std::vector<Entry> entries_;
};

namespace detail {

inline bool& recording_suppressed() {
  thread_local bool suppressed = false;
  return suppressed;
}

inline bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

inline Tape* recording_tape() {
  return recording_suppressed() ? nullptr : Tape::active();
}

/// Appends a backward rule to the recording tape. The rule runs only if some
/// output received a gradient.
inline void record(const char* op, std::initializer_list<const Tensor*> inputs,
                   std::initializer_list<const Tensor*> outputs,
                   std::function<void()> backward) {
  Tape* tape = recording_tape();
  if (tape == nullptr) return;
  Tape::Entry entry;
  entry.op = op;
  for (const Tensor* t : inputs) {
    if (t->defined()) entry.inputs.push_back(t->node());
  }
  for (const Tensor* t : outputs) entry.outputs.push_back(t->node());
  entry.backward = std::move(backward);
  tape->record(std::move(entry));
}

/// Builds the output of a single-output operation and attaches its backward
/// rule when a tape is recording and some input needs a gradient. The rule
/// receives the output node, whose grad is populated.
inline Tensor finish(const char* op, Shape shape, std::vector<double> values,
                     std::initializer_list<const Tensor*> inputs,
                     std::function<void(Node& out)> backward) {
  const bool needs_grad = any_requires_grad(inputs);
  Tensor out(std::move(shape), std::move(values), needs_grad);
  if (needs_grad) {
    auto node = out.node();
    record(op, inputs, {&out}, [node, bw = std::move(backward)]() { bw(*node); });
  }
  return out;
}

}  // namespace detail

/// Disables recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : saved_(detail::recording_suppressed()) {
    detail::recording_suppressed() = true;
  }
  ~NoGradGuard() { detail::recording_suppressed() = saved_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

}  // namespace ssacrnn
