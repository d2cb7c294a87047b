#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hmws/tape.hpp"

// Differentiable primitives over Vars. Binary elementwise ops accept equal
// shapes, a single-element operand, or a length-n operand against an [m, n]
// matrix (row broadcast). Nothing broadcasts beyond rank 2.
namespace hmws::ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var add(Var a, double c);
Var mul(Var a, double c);
Var neg(Var a);

// [m,k] x [k,n]. A rank-1 left operand is a single row and yields rank 1.
Var matmul(Var a, Var b);

Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var square(Var a);

Var sum(Var a);
Var mean(Var a);
// Over the last axis: each row of a matrix, or the whole vector.
Var softmax(Var a);
Var log_softmax(Var a);
// Over all elements; -inf entries contribute nothing.
Var logsumexp(Var a);

// out[i] = a.flat[indices[i]], reshaped to `shape` (defaults to [indices.size()]).
Var gather(Var a, std::vector<std::size_t> indices, Shape shape = {});
Var index(Var a, std::size_t i);
Var slice(Var a, std::size_t begin, std::size_t end);
// Flattens and concatenates into a rank-1 result.
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
Var reshape(Var a, Shape shape);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator+(Var a, double c) { return add(a, c); }
inline Var operator+(double c, Var a) { return add(a, c); }
inline Var operator-(Var a, double c) { return add(a, -c); }
inline Var operator*(Var a, double c) { return mul(a, c); }
inline Var operator*(double c, Var a) { return mul(a, c); }
inline Var operator-(Var a) { return neg(a); }

// Numerically stable scalar helpers shared with non-tape code.
double log_sum_exp(std::span<const double> xs);
double softplus(double x);
double softplus_inverse(double y);
double sigmoid(double x);

}  // namespace hmws::ad
