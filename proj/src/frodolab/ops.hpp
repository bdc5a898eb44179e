#pragma once

#include <vector>

#include "frodolab/tape.hpp"

namespace frodolab {

// Op builders. Binary elementwise ops accept equal shapes, or a scalar
// (numel 1) on either side which broadcasts against the other operand; no
// other broadcasting exists.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var exp(Var a);
Var log(Var a);
Var sqrt(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var maximum(Var a, Var b);
Var square(Var a);  // composite: mul(a, a)

Var sum(Var a);   // all elements -> scalar
Var mean(Var a);  // all elements -> scalar
Var sum_axis(Var a, int axis);
Var mean_axis(Var a, int axis);
Var max_axis(Var a, int axis);
Var repeat_axis(Var a, int axis, int64_t count);

// Optional flags read an operand transposed in place of materializing the
// transpose (the backward rules use this to avoid copies of large weights).
Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
Var transpose(Var a);
Var concat(const std::vector<Var>& parts, int axis);
Var slice(Var a, int axis, int64_t start, int64_t stop);
Var reverse(Var a);  // flip along axis 0
Var reshape(Var a, Shape shape);

Var softmax(Var a, int axis);
Var log_softmax(Var a, int axis);
Var stop_gradient(Var a);

// Picks element idx[r] from row r of a rank-2 tensor; returns rank-1.
// Composite: one-hot mask, multiply, reduce over columns.
Var index_select(Var a, const std::vector<int64_t>& idx);

// Convenience: wrap a scalar constant on the same tape as `like`.
Var scalar_like(Var like, double v);

// Operator sugar. Double operands become scalar constants.
inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator+(Var a, double b) { return add(a, scalar_like(a, b)); }
inline Var operator-(Var a, double b) { return sub(a, scalar_like(a, b)); }
inline Var operator*(Var a, double b) { return mul(a, scalar_like(a, b)); }
inline Var operator/(Var a, double b) { return div(a, scalar_like(a, b)); }
inline Var operator+(double a, Var b) { return add(scalar_like(b, a), b); }
inline Var operator-(double a, Var b) { return sub(scalar_like(b, a), b); }
inline Var operator*(double a, Var b) { return mul(scalar_like(b, a), b); }
inline Var operator/(double a, Var b) { return div(scalar_like(b, a), b); }

}  // namespace frodolab
