#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rws/ad/tape.hpp"

// Differentiable ops over Var. Binary elementwise ops require equal shapes;
// the only broadcast is a one-element operand against a tensor. Row-wise ops
// act on the last axis.
namespace rws::ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var neg(Var a);
Var scale(Var a, double c);
Var shift(Var a, double c);
Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var square(Var a);

Var sum(Var a);
Var mean(Var a);
Var sum_last(Var a);
Var mean_last(Var a);

Var softmax(Var a);
Var log_softmax(Var a);
Var logsumexp(Var a);

// [m,k] x [k,n] -> [m,n]
Var matmul(Var a, Var b);
// x[m,k] W[k,n] + b[n], bias added to every row.
Var affine(Var x, Var w, Var b);

// out[r] = a[r, index[r]]; drops the last axis.
Var gather(Var a, std::span<const std::size_t> index);
// Selects rows (along everything but the last axis) into an [n, cols] matrix.
Var index_rows(Var a, std::span<const std::size_t> rows);
// Each row of a repeated `times` times consecutively: [R,C] -> [R*times, C].
Var repeat_rows(Var a, std::size_t times);
Var concat_last(std::span<const Var> parts);
Var reshape(Var a, Shape shape);

// Same values, no gradient path.
Var detach(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator+(Var a, double c) { return shift(a, c); }
inline Var operator-(Var a, double c) { return shift(a, -c); }

}  // namespace rws::ad
