#include "lorafit/ops.hpp"

#include <array>
#include <cmath>
#include <string>

#include "lorafit/error.hpp"

namespace lorafit::ad {

namespace {

Tape& same_tape(Var a, Var b) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
    throw ContractError("operands live on different tapes");
  }
  return a.tape();
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  Tensor out = ops::matmul(a.value(), b.value());
  const std::array<Var, 2> in{a, b};
  return tape.record(OpKind::MatMul, in, std::move(out), [](const BackwardContext& c) {
    if (Tensor* ga = c.input_grad(0)) ops::axpy(*ga, 1.0, ops::matmul_nt(c.out_grad(), c.input(1)));
    if (Tensor* gb = c.input_grad(1)) ops::axpy(*gb, 1.0, ops::matmul_tn(c.input(0), c.out_grad()));
  });
}

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  Tensor out = ops::add(a.value(), b.value());
  const std::array<Var, 2> in{a, b};
  return tape.record(OpKind::Add, in, std::move(out), [](const BackwardContext& c) {
    if (Tensor* ga = c.input_grad(0)) ops::axpy(*ga, 1.0, c.out_grad());
    if (Tensor* gb = c.input_grad(1)) ops::axpy(*gb, 1.0, c.out_grad());
  });
}

Var sub(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  Tensor out = ops::sub(a.value(), b.value());
  const std::array<Var, 2> in{a, b};
  return tape.record(OpKind::Sub, in, std::move(out), [](const BackwardContext& c) {
    if (Tensor* ga = c.input_grad(0)) ops::axpy(*ga, 1.0, c.out_grad());
    if (Tensor* gb = c.input_grad(1)) ops::axpy(*gb, -1.0, c.out_grad());
  });
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  Tensor out = ops::mul(a.value(), b.value());
  const std::array<Var, 2> in{a, b};
  return tape.record(OpKind::Mul, in, std::move(out), [](const BackwardContext& c) {
    if (Tensor* ga = c.input_grad(0)) ops::axpy(*ga, 1.0, ops::mul(c.out_grad(), c.input(1)));
    if (Tensor* gb = c.input_grad(1)) ops::axpy(*gb, 1.0, ops::mul(c.out_grad(), c.input(0)));
  });
}

Var relu(Var a) {
  Tensor out = ops::relu(a.value());
  const std::array<Var, 1> in{a};
  return a.tape().record(OpKind::Relu, in, std::move(out), [](const BackwardContext& c) {
    Tensor* ga = c.input_grad(0);
    const Tensor& x = c.input(0);
    for (std::size_t i = 0; i < x.numel(); ++i) {
      if (x[i] > 0.0) (*ga)[i] += c.out_grad()[i];
    }
  });
}

Var tanh(Var a) {
  Tensor out = ops::tanh(a.value());
  const std::array<Var, 1> in{a};
  return a.tape().record(OpKind::Tanh, in, std::move(out), [](const BackwardContext& c) {
    Tensor* ga = c.input_grad(0);
    const Tensor& y = c.output();
    for (std::size_t i = 0; i < y.numel(); ++i) (*ga)[i] += c.out_grad()[i] * (1.0 - y[i] * y[i]);
  });
}

Var elementwise(ops::Elementwise op, Var a, std::optional<Var> b) {
  const bool binary =
      op == ops::Elementwise::Add || op == ops::Elementwise::Sub || op == ops::Elementwise::Mul;
  if (binary != b.has_value()) {
    throw ShapeError(binary ? "elementwise: binary op needs a second operand"
                            : "elementwise: unary op given a second operand");
  }
  switch (op) {
    case ops::Elementwise::Add: return add(a, *b);
    case ops::Elementwise::Sub: return sub(a, *b);
    case ops::Elementwise::Mul: return mul(a, *b);
    case ops::Elementwise::Relu: return relu(a);
    case ops::Elementwise::Tanh: return tanh(a);
  }
  throw ShapeError("elementwise: unknown op");
}

Var scale(Var a, double s) {
  Tensor out = ops::scale(a.value(), s);
  const std::array<Var, 1> in{a};
  return a.tape().record(OpKind::Scale, in, std::move(out), [s](const BackwardContext& c) {
    ops::axpy(*c.input_grad(0), s, c.out_grad());
  });
}

Var softmax_rows(Var a) {
  Tensor out = ops::softmax_rows(a.value());
  const std::array<Var, 1> in{a};
  return a.tape().record(OpKind::SoftmaxRows, in, std::move(out), [](const BackwardContext& c) {
    const Tensor& y = c.output();
    const Tensor& gy = c.out_grad();
    Tensor& gx = *c.input_grad(0);
    const std::size_t m = y.rows(), n = y.cols();
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += gy(i, j) * y(i, j);
      for (std::size_t j = 0; j < n; ++j) gx(i, j) += y(i, j) * (gy(i, j) - dot);
    }
  });
}

Var layer_norm_rows(Var a, double eps) {
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out({m, n});
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += x(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (x(i, j) - mean) * (x(i, j) - mean);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) out(i, j) = (x(i, j) - mean) * inv_std[i];
  }
  const std::array<Var, 1> in{a};
  return a.tape().record(
      OpKind::LayerNormRows, in, std::move(out),
      [inv_std = std::move(inv_std)](const BackwardContext& c) {
        const Tensor& y = c.output();
        const Tensor& gy = c.out_grad();
        Tensor& gx = *c.input_grad(0);
        const std::size_t rows = y.rows(), cols = y.cols();
        const double inv_n = 1.0 / static_cast<double>(cols);
        for (std::size_t i = 0; i < rows; ++i) {
          double mean_g = 0.0, mean_gy = 0.0;
          for (std::size_t j = 0; j < cols; ++j) {
            mean_g += gy(i, j);
            mean_gy += gy(i, j) * y(i, j);
          }
          mean_g *= inv_n;
          mean_gy *= inv_n;
          for (std::size_t j = 0; j < cols; ++j) {
            gx(i, j) += inv_std[i] * (gy(i, j) - mean_g - y(i, j) * mean_gy);
          }
        }
      });
}

Var transpose(Var a) {
  Tensor out = ops::transpose(a.value());
  const std::array<Var, 1> in{a};
  return a.tape().record(OpKind::Transpose, in, std::move(out), [](const BackwardContext& c) {
    ops::axpy(*c.input_grad(0), 1.0, ops::transpose(c.out_grad()));
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  const std::size_t cols = parts.front().value().cols();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (&p.tape() != &parts.front().tape()) throw ContractError("operands live on different tapes");
    if (p.value().cols() != cols) {
      throw ShapeError("concat_rows: column counts differ, " + to_string(parts.front().shape()) +
                       " vs " + to_string(p.shape()));
    }
    rows += p.value().rows();
  }
  Tensor out({rows, cols});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    std::copy(v.data(), v.data() + v.numel(), out.data() + offset);
    offset += v.numel();
  }
  return parts.front().tape().record(OpKind::ConcatRows, parts, std::move(out),
                                     [](const BackwardContext& c) {
                                       std::size_t off = 0;
                                       for (std::size_t k = 0;; ++k) {
                                         if (off >= c.out_grad().numel()) break;
                                         const std::size_t len = c.input(k).numel();
                                         if (Tensor* g = c.input_grad(k)) {
                                           for (std::size_t i = 0; i < len; ++i)
                                             (*g)[i] += c.out_grad()[off + i];
                                         }
                                         off += len;
                                       }
                                     });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  const std::size_t rows = parts.front().value().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    if (&p.tape() != &parts.front().tape()) throw ContractError("operands live on different tapes");
    if (p.value().rows() != rows) {
      throw ShapeError("concat_cols: row counts differ, " + to_string(parts.front().shape()) +
                       " vs " + to_string(p.shape()));
    }
    widths.push_back(p.value().cols());
    cols += widths.back();
  }
  Tensor out({rows, cols});
  std::size_t c0 = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, c0 + j) = v(i, j);
    c0 += v.cols();
  }
  return parts.front().tape().record(
      OpKind::ConcatCols, parts, std::move(out),
      [widths = std::move(widths)](const BackwardContext& c) {
        const Tensor& g = c.out_grad();
        std::size_t col = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
          if (Tensor* gi = c.input_grad(k)) {
            for (std::size_t i = 0; i < g.rows(); ++i)
              for (std::size_t j = 0; j < widths[k]; ++j) (*gi)(i, j) += g(i, col + j);
          }
          col += widths[k];
        }
      });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  if (begin >= end || end > x.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for shape " + to_string(x.shape()));
  }
  const std::size_t cols = x.cols();
  Tensor out({end - begin, cols});
  std::copy(x.data() + begin * cols, x.data() + end * cols, out.data());
  const std::array<Var, 1> in{a};
  return a.tape().record(OpKind::SliceRows, in, std::move(out),
                         [begin, cols](const BackwardContext& c) {
                           Tensor& g = *c.input_grad(0);
                           const Tensor& gy = c.out_grad();
                           for (std::size_t i = 0; i < gy.numel(); ++i) g[begin * cols + i] += gy[i];
                         });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  if (begin >= end || end > x.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for shape " + to_string(x.shape()));
  }
  const std::size_t rows = x.rows(), width = end - begin;
  Tensor out({rows, width});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < width; ++j) out(i, j) = x(i, begin + j);
  const std::array<Var, 1> in{a};
  return a.tape().record(OpKind::SliceCols, in, std::move(out),
                         [begin](const BackwardContext& c) {
                           Tensor& g = *c.input_grad(0);
                           const Tensor& gy = c.out_grad();
                           for (std::size_t i = 0; i < gy.rows(); ++i)
                             for (std::size_t j = 0; j < gy.cols(); ++j) g(i, begin + j) += gy(i, j);
                         });
}

Var mean_rows(Var a) {
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out({1, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += x(i, j);
  const double inv = 1.0 / static_cast<double>(m);
  for (std::size_t j = 0; j < n; ++j) out[j] *= inv;
  const std::array<Var, 1> in{a};
  return a.tape().record(OpKind::MeanRows, in, std::move(out), [inv](const BackwardContext& c) {
    Tensor& g = *c.input_grad(0);
    const std::size_t rows = g.rows(), cols = g.cols();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) g(i, j) += inv * c.out_grad()[j];
  });
}

Var sum(Var a) {
  Tensor out = Tensor::scalar(ops::sum(a.value()));
  const std::array<Var, 1> in{a};
  return a.tape().record(OpKind::Sum, in, std::move(out), [](const BackwardContext& c) {
    Tensor& g = *c.input_grad(0);
    const double gy = c.out_grad()[0];
    for (double& v : g.values()) v += gy;
  });
}

Var add_row_vector(Var a, Var row) {
  Tape& tape = same_tape(a, row);
  const Tensor& x = a.value();
  const Tensor& r = row.value();
  if (r.rank() != 2 || r.rows() != 1 || r.cols() != x.cols()) {
    throw ShapeError("add_row_vector: row " + to_string(r.shape()) + " does not fit " +
                     to_string(x.shape()));
  }
  Tensor out = x;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) += r[j];
  const std::array<Var, 2> in{a, row};
  return tape.record(OpKind::AddRowVector, in, std::move(out), [](const BackwardContext& c) {
    const Tensor& gy = c.out_grad();
    if (Tensor* ga = c.input_grad(0)) ops::axpy(*ga, 1.0, gy);
    if (Tensor* gr = c.input_grad(1)) {
      for (std::size_t i = 0; i < gy.rows(); ++i)
        for (std::size_t j = 0; j < gy.cols(); ++j) (*gr)[j] += gy(i, j);
    }
  });
}

Var gather_rows(Var table, std::span<const int> ids) {
  const Tensor& t = table.value();
  const std::size_t rows = t.rows(), cols = t.cols();
  if (ids.empty()) throw ShapeError("gather_rows: empty index list");
  std::vector<int> idx(ids.begin(), ids.end());
  Tensor out({idx.size(), cols});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= rows) {
      throw ValidationError("gather_rows: index " + std::to_string(idx[i]) + " outside table of " +
                            std::to_string(rows) + " rows");
    }
    std::copy(t.data() + idx[i] * cols, t.data() + (idx[i] + 1) * cols, out.data() + i * cols);
  }
  const std::array<Var, 1> in{table};
  return table.tape().record(OpKind::GatherRows, in, std::move(out),
                             [idx = std::move(idx), cols](const BackwardContext& c) {
                               Tensor& g = *c.input_grad(0);
                               const Tensor& gy = c.out_grad();
                               for (std::size_t i = 0; i < idx.size(); ++i)
                                 for (std::size_t j = 0; j < cols; ++j)
                                   g(static_cast<std::size_t>(idx[i]), j) += gy(i, j);
                             });
}

Var cross_entropy_loss(Var logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  if (z.rank() != 2 || z.cols() != 2) {
    throw ShapeError("cross_entropy_loss: logits must be m×2, got " + to_string(z.shape()));
  }
  const std::size_t m = z.rows();
  if (labels.size() != m) {
    throw ValidationError("cross_entropy_loss: " + std::to_string(m) + " logit rows but " +
                          std::to_string(labels.size()) + " labels");
  }
  std::vector<int> y(labels.begin(), labels.end());
  for (int label : y) {
    if (label != 0 && label != 1) {
      throw ValidationError("cross_entropy_loss: label " + std::to_string(label) +
                            " outside {0,1}");
    }
  }
  Tensor probs = ops::softmax_rows(z);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double mx = std::max(z(i, 0), z(i, 1));
    const double lse = mx + std::log(std::exp(z(i, 0) - mx) + std::exp(z(i, 1) - mx));
    total += lse - z(i, static_cast<std::size_t>(y[i]));
  }
  const std::array<Var, 1> in{logits};
  return logits.tape().record(
      OpKind::CrossEntropy, in, Tensor::scalar(total / static_cast<double>(m)),
      [probs = std::move(probs), y = std::move(y)](const BackwardContext& c) {
        Tensor& g = *c.input_grad(0);
        const double scale = c.out_grad()[0] / static_cast<double>(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) {
          for (std::size_t j = 0; j < 2; ++j) {
            const double target = static_cast<std::size_t>(y[i]) == j ? 1.0 : 0.0;
            g(i, j) += scale * (probs(i, j) - target);
          }
        }
      });
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw ValidationError("finite_diff_grad: step must be positive");
  Tensor probe = x;
  Tensor grad(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double up = f(probe);
    probe[i] = orig - h;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace lorafit::ad
