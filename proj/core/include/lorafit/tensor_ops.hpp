#pragma once

#include <optional>

#include "lorafit/tensor.hpp"

// Value-level kernels. These never touch a tape; the autodiff layer in
// ops.hpp is built on top of them.
namespace lorafit::ops {

enum class Elementwise { Add, Sub, Mul, Relu, Tanh };

/// Standard product of an m×n and an n×p matrix.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ for a: m×n, b: p×n.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// aᵀ · b for a: n×m, b: n×p.
Tensor matmul_tn(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a);

/// Pointwise op. Binary kinds require `b` with exactly the shape of `a`;
/// unary kinds reject a second operand.
Tensor elementwise(Elementwise op, const Tensor& a, const std::optional<Tensor>& b = std::nullopt);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor scale(const Tensor& a, double s);

/// Row-wise softmax with max subtraction.
Tensor softmax_rows(const Tensor& a);

/// acc += s * x, shapes must match.
void axpy(Tensor& acc, double s, const Tensor& x);

double sum(const Tensor& a) noexcept;

}  // namespace lorafit::ops
