#include "lorafit/tensor_ops.hpp"

#include <algorithm>
#include <cmath>

#include "lorafit/error.hpp"

namespace lorafit::ops {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

template <typename F>
Tensor map(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = f(a[i]);
  return out;
}

template <typename F>
Tensor zip(const char* op, const Tensor& a, const Tensor& b, F f) {
  require_same_shape(op, a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree for " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols(), p = b.cols();
  Tensor out({m, p});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = po + i * p;
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = pa[i * n + k];
      if (aik == 0.0) continue;
      const double* brow = pb + k * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: inner dimensions disagree for " + to_string(a.shape()) +
                     " x transpose " + to_string(b.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols(), p = b.rows();
  Tensor out({m, p});
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.data() + i * n;
    for (std::size_t j = 0; j < p; ++j) {
      const double* brow = b.data() + j * n;
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += arow[k] * brow[k];
      out(i, j) = s;
    }
  }
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: inner dimensions disagree for transpose " + to_string(a.shape()) +
                     " x " + to_string(b.shape()));
  }
  const std::size_t n = a.rows(), m = a.cols(), p = b.cols();
  Tensor out({m, p});
  double* po = out.data();
  for (std::size_t k = 0; k < n; ++k) {
    const double* arow = a.data() + k * m;
    const double* brow = b.data() + k * p;
    for (std::size_t i = 0; i < m; ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* orow = po + i * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = a(i, j);
  return out;
}

Tensor elementwise(Elementwise op, const Tensor& a, const std::optional<Tensor>& b) {
  const bool binary = op == Elementwise::Add || op == Elementwise::Sub || op == Elementwise::Mul;
  if (binary && !b) throw ShapeError("elementwise: binary op needs a second operand");
  if (!binary && b) throw ShapeError("elementwise: unary op given a second operand");
  switch (op) {
    case Elementwise::Add: return add(a, *b);
    case Elementwise::Sub: return sub(a, *b);
    case Elementwise::Mul: return mul(a, *b);
    case Elementwise::Relu: return relu(a);
    case Elementwise::Tanh: return tanh(a);
  }
  throw ShapeError("elementwise: unknown op");
}

Tensor add(const Tensor& a, const Tensor& b) {
  return zip("add", a, b, [](double x, double y) { return x + y; });
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return zip("sub", a, b, [](double x, double y) { return x - y; });
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return zip("mul", a, b, [](double x, double y) { return x * y; });
}
Tensor relu(const Tensor& a) {
  return map(a, [](double x) { return x > 0.0 ? x : 0.0; });
}
Tensor tanh(const Tensor& a) {
  return map(a, [](double x) { return std::tanh(x); });
}
Tensor scale(const Tensor& a, double s) {
  return map(a, [s](double x) { return s * x; });
}

Tensor softmax_rows(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = a.data() + i * n;
    double* orow = out.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - mx);
      total += orow[j];
    }
    for (std::size_t j = 0; j < n; ++j) orow[j] /= total;
  }
  return out;
}

void axpy(Tensor& acc, double s, const Tensor& x) {
  require_same_shape("axpy", acc, x);
  double* pa = acc.data();
  const double* px = x.data();
  for (std::size_t i = 0; i < acc.numel(); ++i) pa[i] += s * px[i];
}

double sum(const Tensor& a) noexcept {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return s;
}

}  // namespace lorafit::ops
