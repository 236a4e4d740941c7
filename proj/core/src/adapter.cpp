#include "lorafit/adapter.hpp"

#include <algorithm>

#include "lorafit/error.hpp"
#include "lorafit/ops.hpp"
#include "lorafit/tensor_ops.hpp"

namespace lorafit {

namespace {

void check_rank(const Tensor& weight, std::size_t rank) {
  if (weight.rank() != 2) {
    throw ShapeError("adapter base must be a matrix, got " + to_string(weight.shape()));
  }
  const std::size_t limit = std::min(weight.rows(), weight.cols());
  if (rank == 0 || rank >= limit) {
    throw RankError("adapter rank " + std::to_string(rank) + " must satisfy 1 <= r < min(d, k) = " +
                    std::to_string(limit) + " for weight " + to_string(weight.shape()));
  }
}

}  // namespace

LoraAdapter::LoraAdapter(Tensor base, Tensor a, Tensor b, double scale)
    : base_(std::move(base)), a_(std::move(a)), b_(std::move(b)), scale_(scale) {}

LoraAdapter LoraAdapter::inject(const Tensor& layer_weight, std::size_t rank, Rng& rng,
                                double scale) {
  check_rank(layer_weight, rank);
  Tensor a = gaussian({layer_weight.rows(), rank}, kInitStddev, rng);
  Tensor b = Tensor::zeros({layer_weight.cols(), rank});
  return LoraAdapter(layer_weight, std::move(a), std::move(b), scale);
}

LoraAdapter LoraAdapter::from_factors(Tensor base, Tensor a, Tensor b, double scale) {
  check_rank(base, a.rank() == 2 ? a.cols() : 0);
  if (a.shape() != Shape{base.rows(), a.cols()} || b.shape() != Shape{base.cols(), a.cols()}) {
    throw ShapeError("adapter factors " + to_string(a.shape()) + ", " + to_string(b.shape()) +
                     " do not fit base " + to_string(base.shape()));
  }
  return LoraAdapter(std::move(base), std::move(a), std::move(b), scale);
}

Tensor& LoraAdapter::mutable_a() {
  if (merged_) throw StateError("cannot update factors of a merged adapter");
  return a_;
}

Tensor& LoraAdapter::mutable_b() {
  if (merged_) throw StateError("cannot update factors of a merged adapter");
  return b_;
}

void LoraAdapter::set_factors(Tensor a, Tensor b) {
  if (merged_) throw StateError("cannot update factors of a merged adapter");
  if (!a.same_shape(a_) || !b.same_shape(b_)) {
    throw ShapeError("set_factors: expected " + to_string(a_.shape()) + ", " +
                     to_string(b_.shape()) + " got " + to_string(a.shape()) + ", " +
                     to_string(b.shape()));
  }
  a_ = std::move(a);
  b_ = std::move(b);
}

Tensor LoraAdapter::forward(const Tensor& x) const {
  if (merged_) throw StateError("adapter_forward on a merged adapter");
  Tensor out = ops::matmul(x, base_);
  Tensor low = ops::matmul_nt(ops::matmul(x, a_), b_);
  ops::axpy(out, scale_, low);
  return out;
}

LoraAdapter::Bound LoraAdapter::bind(ad::Tape& tape) const {
  if (merged_) throw StateError("cannot bind a merged adapter for training");
  return Bound{tape.constant(base_), tape.variable(a_), tape.variable(b_)};
}

ad::Var LoraAdapter::forward(ad::Var x, const Bound& vars) const {
  if (merged_) throw StateError("adapter_forward on a merged adapter");
  ad::Var dense = ad::matmul(x, vars.base);
  ad::Var low = ad::matmul(ad::matmul(x, vars.a), ad::transpose(vars.b));
  if (scale_ != 1.0) low = ad::scale(low, scale_);
  return ad::add(dense, low);
}

Tensor LoraAdapter::delta() const { return ops::scale(ops::matmul_nt(a_, b_), scale_); }

Tensor LoraAdapter::merge() {
  if (merged_) throw StateError("adapter is already merged");
  merged_weight_ = ops::add(base_, delta());
  merged_ = true;
  return merged_weight_;
}

void LoraAdapter::unmerge(const Tensor& merged_weight) {
  if (!merged_) throw StateError("unmerge of an adapter that is not merged");
  if (!merged_weight.same_shape(base_)) {
    throw ShapeError("unmerge: weight " + to_string(merged_weight.shape()) +
                     " does not match base " + to_string(base_.shape()));
  }
  merged_weight_ = Tensor();
  merged_ = false;
}

const Tensor& LoraAdapter::merged_weight() const {
  if (!merged_) throw StateError("adapter is not merged");
  return merged_weight_;
}

}  // namespace lorafit
