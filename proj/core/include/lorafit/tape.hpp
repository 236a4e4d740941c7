#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lorafit/tensor.hpp"

namespace lorafit::ad {

class Tape;

enum class OpKind : std::uint8_t {
  Constant,
  Variable,
  MatMul,
  Add,
  Sub,
  Mul,
  Relu,
  Tanh,
  Scale,
  SoftmaxRows,
  LayerNormRows,
  Transpose,
  ConcatRows,
  ConcatCols,
  SliceRows,
  SliceCols,
  MeanRows,
  Sum,
  AddRowVector,
  GatherRows,
  CrossEntropy,
};

/// Handle to a value recorded on a tape. Cheap to copy; valid while the tape
/// lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  /// Gradient of the last backward() target with respect to this value.
  /// Zero-filled if the value was not reachable.
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  std::size_t id() const noexcept { return id_; }
  Tape& tape() const noexcept { return *tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// What a node's backward function sees: the incoming gradient, the forward
/// values, and accumulators for inputs that require a gradient (nullptr for
/// the others).
class BackwardContext {
 public:
  const Tensor& out_grad() const { return *out_grad_; }
  const Tensor& output() const { return *output_; }
  const Tensor& input(std::size_t k) const { return *inputs_[k]; }
  Tensor* input_grad(std::size_t k) const { return input_grads_[k]; }

 private:
  friend class Tape;
  const Tensor* out_grad_ = nullptr;
  const Tensor* output_ = nullptr;
  std::vector<const Tensor*> inputs_;
  std::vector<Tensor*> input_grads_;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

/// Define-by-run gradient tape. Nodes are appended in evaluation order, so
/// the node list is always a topological order. Not thread-safe.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf that receives a gradient on backward().
  Var variable(Tensor value);

  /// Appends an op node. `requires_grad` is inherited from the inputs; when no
  /// input requires a gradient the backward function is dropped.
  Var record(OpKind kind, std::span<const Var> inputs, Tensor value, BackwardFn backward);

  /// Reverse sweep from a one-element `loss`. Gradients from any earlier sweep
  /// are discarded first, so repeated calls give identical results.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  OpKind kind(std::size_t id) const { return nodes_.at(id).kind; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }

 private:
  friend class Var;

  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  void check_owned(const Var& v) const;
  const Tensor& grad_of(std::size_t id);

  std::vector<Node> nodes_;
};

}  // namespace lorafit::ad
