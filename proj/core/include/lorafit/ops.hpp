#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "lorafit/tape.hpp"
#include "lorafit/tensor_ops.hpp"

// Differentiable ops. Each one computes its value with the kernels in
// tensor_ops.hpp and appends a node to the tape that owns its inputs. No op
// broadcasts implicitly; shapes must match exactly.
namespace lorafit::ad {

Var matmul(Var a, Var b);
Var elementwise(ops::Elementwise op, Var a, std::optional<Var> b = std::nullopt);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var relu(Var a);
Var tanh(Var a);
Var scale(Var a, double s);
Var softmax_rows(Var a);
/// Per-row standardization (x - mean) / sqrt(var + eps), no learned affine.
Var layer_norm_rows(Var a, double eps = 1e-5);
Var transpose(Var a);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
/// Rows [begin, end).
Var slice_rows(Var a, std::size_t begin, std::size_t end);
/// Columns [begin, end).
Var slice_cols(Var a, std::size_t begin, std::size_t end);
/// m×n → 1×n column means.
Var mean_rows(Var a);
/// Sum of all entries as a one-element tensor.
Var sum(Var a);
/// m×n plus a 1×n row added to every row. The explicit stand-in for
/// bias broadcasting.
Var add_row_vector(Var a, Var row);
/// Selects rows of `table` by index (embedding lookup).
Var gather_rows(Var table, std::span<const int> ids);
/// Mean negative log-likelihood of binary `labels` under softmax(logits),
/// logits of shape m×2.
Var cross_entropy_loss(Var logits, std::span<const int> labels);

/// Central-difference gradient of `f` at `x`, one coordinate at a time.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double h = 1e-5);

}  // namespace lorafit::ad
