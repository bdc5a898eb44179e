#include "frodolab/ops.hpp"

namespace frodolab {

namespace {

Tape* same_tape(Var a, Var b, const char* what) {
  if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
    throw Error(std::string(what) + ": operands must live on one tape");
  }
  return a.tape();
}

Var unary(Op op, Var a) {
  if (!a.valid()) throw Error(std::string(op_name(op)) + ": invalid operand");
  return a.tape()->record(op, {a.id()});
}

Var binary(Op op, Var a, Var b) {
  return same_tape(a, b, op_name(op))->record(op, {a.id(), b.id()});
}

}  // namespace

Var add(Var a, Var b) { return binary(Op::kAdd, a, b); }
Var sub(Var a, Var b) { return binary(Op::kSub, a, b); }
Var mul(Var a, Var b) { return binary(Op::kMul, a, b); }
Var div(Var a, Var b) { return binary(Op::kDiv, a, b); }
Var maximum(Var a, Var b) { return binary(Op::kMaximum, a, b); }
Var neg(Var a) { return unary(Op::kNeg, a); }
Var exp(Var a) { return unary(Op::kExp, a); }
Var log(Var a) { return unary(Op::kLog, a); }
Var sqrt(Var a) { return unary(Op::kSqrt, a); }
Var tanh(Var a) { return unary(Op::kTanh, a); }
Var sigmoid(Var a) { return unary(Op::kSigmoid, a); }
Var square(Var a) { return mul(a, a); }
Var stop_gradient(Var a) { return unary(Op::kStopGradient, a); }
Var sum(Var a) { return unary(Op::kSumAll, a); }

Var mean(Var a) {
  if (!a.valid()) throw Error("mean: invalid operand");
  if (a.value().numel() == 0) throw Error("mean: empty tensor");
  return mul(sum(a), scalar_like(a, 1.0 / static_cast<double>(a.value().numel())));
}

Var sum_axis(Var a, int axis) {
  OpAttrs attrs;
  attrs.axis = axis;
  return a.tape()->record(Op::kSumAxis, {a.id()}, attrs);
}

Var mean_axis(Var a, int axis) {
  Var s = sum_axis(a, axis);
  return mul(s, scalar_like(a, 1.0 / static_cast<double>(a.value().dim(axis))));
}

Var max_axis(Var a, int axis) {
  OpAttrs attrs;
  attrs.axis = axis;
  return a.tape()->record(Op::kMaxAxis, {a.id()}, attrs);
}

Var repeat_axis(Var a, int axis, int64_t count) {
  OpAttrs attrs;
  attrs.axis = axis;
  attrs.count = count;
  return a.tape()->record(Op::kRepeatAxis, {a.id()}, attrs);
}

Var matmul(Var a, Var b, bool trans_a, bool trans_b) {
  if (!a.valid() || !b.valid()) throw Error("matmul: invalid operand");
  if (a.tape() != b.tape()) throw Error("matmul: operands on different tapes");
  OpAttrs attrs;
  attrs.trans_a = trans_a;
  attrs.trans_b = trans_b;
  return a.tape()->record(Op::kMatmul, {a.id(), b.id()}, attrs);
}
Var transpose(Var a) { return unary(Op::kTranspose, a); }

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw Error("concat: needs at least one input");
  std::vector<NodeId> ids;
  ids.reserve(parts.size());
  for (const Var& p : parts) {
    same_tape(parts[0], p, "concat");
    ids.push_back(p.id());
  }
  OpAttrs attrs;
  attrs.axis = axis;
  return parts[0].tape()->record(Op::kConcat, std::move(ids), attrs);
}

Var slice(Var a, int axis, int64_t start, int64_t stop) {
  OpAttrs attrs;
  attrs.axis = axis;
  attrs.start = start;
  attrs.stop = stop;
  return a.tape()->record(Op::kSlice, {a.id()}, attrs);
}

Var reverse(Var a) { return unary(Op::kReverse, a); }

Var reshape(Var a, Shape shape) {
  OpAttrs attrs;
  attrs.shape = std::move(shape);
  return a.tape()->record(Op::kReshape, {a.id()}, attrs);
}

Var softmax(Var a, int axis) {
  OpAttrs attrs;
  attrs.axis = axis;
  return a.tape()->record(Op::kSoftmax, {a.id()}, attrs);
}

Var log_softmax(Var a, int axis) {
  OpAttrs attrs;
  attrs.axis = axis;
  return a.tape()->record(Op::kLogSoftmax, {a.id()}, attrs);
}

Var index_select(Var a, const std::vector<int64_t>& idx) {
  if (a.value().rank() != 2) {
    throw Error("index_select: expects rank 2, got " + shape_str(a.shape()));
  }
  int64_t rows = a.value().rows(), cols = a.value().cols();
  if (static_cast<int64_t>(idx.size()) != rows) {
    throw Error("index_select: need one index per row");
  }
  Tensor mask = Tensor::zeros({rows, cols});
  for (int64_t r = 0; r < rows; ++r) {
    int64_t c = idx[static_cast<size_t>(r)];
    if (c < 0 || c >= cols) throw Error("index_select: index out of range");
    mask.at(r, c) = 1.0;
  }
  return sum_axis(mul(a, a.tape()->constant(std::move(mask))), 1);
}

Var scalar_like(Var like, double v) {
  if (!like.valid()) throw Error("scalar_like: invalid operand");
  return like.tape()->constant(Tensor::scalar(v));
}

}  // namespace frodolab
