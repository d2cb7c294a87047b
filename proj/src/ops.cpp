#include "hmws/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hmws/error.hpp"

namespace hmws::ad {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Tape& same_tape(Var a, Var b) {
  if (!a.valid() || a.tape() != b.tape()) throw Error("operands recorded on different tapes");
  return *a.tape();
}

// How operand b maps onto the elements of a (or the reverse).
enum class Broadcast { kSame, kScalarB, kScalarA, kRowB, kRowA };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() == b.shape()) return Broadcast::kSame;
  if (b.size() == 1) return Broadcast::kScalarB;
  if (a.size() == 1) return Broadcast::kScalarA;
  if (a.rank() == 2 && b.size() == a.cols() && b.rank() <= 2 && b.rows() == 1) return Broadcast::kRowB;
  if (b.rank() == 2 && a.size() == b.cols() && a.rank() <= 2 && a.rows() == 1) return Broadcast::kRowA;
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                   shape_string(b.shape()));
}

struct BinaryLayout {
  Broadcast kind;
  Shape out_shape;
  std::size_t n;
  std::size_t row;  // broadcast row length

  std::size_t ia(std::size_t i) const {
    switch (kind) {
      case Broadcast::kScalarA: return 0;
      case Broadcast::kRowA: return i % row;
      default: return i;
    }
  }
  std::size_t ib(std::size_t i) const {
    switch (kind) {
      case Broadcast::kScalarB: return 0;
      case Broadcast::kRowB: return i % row;
      default: return i;
    }
  }
};

BinaryLayout layout(const Tensor& a, const Tensor& b, std::string_view op) {
  BinaryLayout l;
  l.kind = broadcast_kind(a, b, op);
  const bool a_is_out = l.kind == Broadcast::kSame || l.kind == Broadcast::kScalarB || l.kind == Broadcast::kRowB;
  l.out_shape = a_is_out ? a.shape() : b.shape();
  l.n = shape_size(l.out_shape);
  l.row = (l.kind == Broadcast::kRowB) ? a.cols() : (l.kind == Broadcast::kRowA ? b.cols() : 1);
  return l;
}

// f(x, y) forward; da(x, y, out), db(x, y, out) local partials.
template <class F, class DA, class DB>
Var binary(std::string_view op, Var a, Var b, F f, DA da, DB db) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const BinaryLayout l = layout(av, bv, op);
  Tensor out(l.out_shape);
  for (std::size_t i = 0; i < l.n; ++i) out[i] = f(av[l.ia(i)], bv[l.ib(i)]);
  Var av_keep = a, bv_keep = b;
  return tape.record(op, {a, b}, std::move(out),
                     [l, av_keep, bv_keep, da, db](const Tensor& g, std::span<Tensor* const> gin) {
                       const Tensor& x = av_keep.value();
                       const Tensor& y = bv_keep.value();
                       for (std::size_t i = 0; i < l.n; ++i) {
                         const double xi = x[l.ia(i)];
                         const double yi = y[l.ib(i)];
                         if (gin[0]) (*gin[0])[l.ia(i)] += g[i] * da(xi, yi);
                         if (gin[1]) (*gin[1])[l.ib(i)] += g[i] * db(xi, yi);
                       }
                     });
}

// f(x) forward; df(x, fx) local derivative.
template <class F, class DF>
Var unary(std::string_view op, Var a, F f, DF df, bool may_emit_neg_inf = false) {
  Tape& tape = *a.tape();
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  Var in = a;
  const std::size_t id = tape.node_count();
  Tape* tp = &tape;
  return tape.record(
      op, {a}, std::move(out),
      [in, id, tp, df](const Tensor& g, std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        const Tensor& x = in.value();
        const Tensor& y = tp->value_of(id);
        for (std::size_t i = 0; i < x.size(); ++i) (*gin[0])[i] += g[i] * df(x[i], y[i]);
      },
      may_emit_neg_inf);
}

}  // namespace

double log_sum_exp(std::span<const double> xs) {
  double m = kNegInf;
  for (double x : xs) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  if (std::isinf(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double softplus_inverse(double y) {
  if (y <= 0.0) throw NumericalError("softplus_inverse of non-positive value");
  return y > 30.0 ? y : std::log(std::expm1(y));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var add(Var a, Var b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var div(Var a, Var b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Var add(Var a, double c) {
  return unary(
      "add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var mul(Var a, double c) {
  return unary(
      "mul_scalar", a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Var neg(Var a) { return mul(a, -1.0); }

Var exp(Var a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; }, true);
}

Var tanh(Var a) {
  return unary(
      "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(
      "sigmoid", a, [](double x) { return sigmoid(x); }, [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var a) {
  return unary(
      "softplus", a, [](double x) { return softplus(x); }, [](double x, double) { return sigmoid(x); });
}

Var square(Var a) {
  return unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() > 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
    throw ShapeError("matmul: shape mismatch " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Shape out_shape = av.rank() == 2 ? Shape{m, n} : Shape{n};
  Tensor out(out_shape);
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return tape.record("matmul", {a, b}, std::move(out), [a, b, m, k, n](const Tensor& g, std::span<Tensor* const> gin) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (gin[0]) {
      // dA = G B^T
      Tensor& ga = *gin[0];
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = bv.data() + p * n;
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          ga[i * k + p] += s;
        }
      }
    }
    if (gin[1]) {
      // dB = A^T G
      Tensor& gb = *gin[1];
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          if (aip == 0.0) continue;
          double* gbrow = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
        }
      }
    }
  });
}

Var sum(Var a) {
  const Tensor& av = a.value();
  double s = 0.0;
  for (double x : av.values()) s += x;
  return a.tape()->record("sum", {a}, Tensor::scalar(s), [](const Tensor& g, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    const double gv = g[0];
    for (auto& x : gin[0]->values()) x += gv;
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.size());
  if (n == 0) throw ShapeError("mean of empty tensor");
  return mul(sum(a), 1.0 / n);
}

Var softmax(Var a) {
  const Tensor& av = a.value();
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor out(av.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    std::span<const double> row(av.data() + r * cols, cols);
    const double lse = log_sum_exp(row);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = std::exp(row[c] - lse);
  }
  Tape* tp = a.tape();
  const std::size_t id = tp->node_count();
  return tp->record("softmax", {a}, std::move(out),
                    [tp, id, rows, cols](const Tensor& g, std::span<Tensor* const> gin) {
                      if (!gin[0]) return;
                      const Tensor& y = tp->value_of(id);
                      for (std::size_t r = 0; r < rows; ++r) {
                        double dot = 0.0;
                        for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
                        for (std::size_t c = 0; c < cols; ++c) {
                          (*gin[0])[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
                        }
                      }
                    });
}

Var log_softmax(Var a) {
  const Tensor& av = a.value();
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor out(av.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    std::span<const double> row(av.data() + r * cols, cols);
    const double lse = log_sum_exp(row);
    if (!std::isfinite(lse)) throw NumericalError("log_softmax over a row with no finite logit");
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = row[c] - lse;
  }
  Tape* tp = a.tape();
  const std::size_t id = tp->node_count();
  return tp->record(
      "log_softmax", {a}, std::move(out),
      [tp, id, rows, cols](const Tensor& g, std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        const Tensor& y = tp->value_of(id);
        for (std::size_t r = 0; r < rows; ++r) {
          double gs = 0.0;
          for (std::size_t c = 0; c < cols; ++c) gs += g[r * cols + c];
          for (std::size_t c = 0; c < cols; ++c) {
            (*gin[0])[r * cols + c] += g[r * cols + c] - std::exp(y[r * cols + c]) * gs;
          }
        }
      },
      true);
}

Var logsumexp(Var a) {
  const Tensor& av = a.value();
  const double lse = log_sum_exp(av.values());
  return a.tape()->record(
      "logsumexp", {a}, Tensor::scalar(lse),
      [a, lse](const Tensor& g, std::span<Tensor* const> gin) {
        if (!gin[0] || !std::isfinite(lse)) return;
        const Tensor& x = a.value();
        for (std::size_t i = 0; i < x.size(); ++i) (*gin[0])[i] += g[0] * std::exp(x[i] - lse);
      },
      true);
}

Var gather(Var a, std::vector<std::size_t> indices, Shape shape) {
  const Tensor& av = a.value();
  if (shape.empty()) shape = Shape{indices.size()};
  if (shape_size(shape) != indices.size()) {
    throw ShapeError("gather: " + std::to_string(indices.size()) + " indices for shape " + shape_string(shape));
  }
  Tensor out(std::move(shape));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= av.size()) {
      throw ShapeError("gather: index " + std::to_string(indices[i]) + " out of range for " +
                       shape_string(av.shape()));
    }
    out[i] = av[indices[i]];
  }
  return a.tape()->record("gather", {a}, std::move(out),
                          [idx = std::move(indices)](const Tensor& g, std::span<Tensor* const> gin) {
                            if (!gin[0]) return;
                            for (std::size_t i = 0; i < idx.size(); ++i) (*gin[0])[idx[i]] += g[i];
                          });
}

Var index(Var a, std::size_t i) { return gather(a, {i}, Shape{}); }

Var slice(Var a, std::size_t begin, std::size_t end) {
  if (end < begin || end > a.size()) throw ShapeError("slice out of range");
  std::vector<std::size_t> idx(end - begin);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
  return gather(a, std::move(idx));
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  Tape* tp = parts.front().tape();
  std::vector<double> values;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    offsets.push_back(values.size());
    const Tensor& v = p.value();
    values.insert(values.end(), v.values().begin(), v.values().end());
  }
  return tp->record("concat", parts, Tensor::vector(std::move(values)),
                    [offsets](const Tensor& g, std::span<Tensor* const> gin) {
                      for (std::size_t j = 0; j < gin.size(); ++j) {
                        if (!gin[j]) continue;
                        for (std::size_t i = 0; i < gin[j]->size(); ++i) (*gin[j])[i] += g[offsets[j] + i];
                      }
                    });
}

Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape()->record("reshape", {a}, std::move(out), [](const Tensor& g, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i];
  });
}

}  // namespace hmws::ad
