#include "frodolab/tape.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <utility>

#include "frodolab/ops.hpp"

namespace frodolab {

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kConstant: return "constant";
    case Op::kStopGradient: return "stop_gradient";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kNeg: return "neg";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSqrt: return "sqrt";
    case Op::kTanh: return "tanh";
    case Op::kSigmoid: return "sigmoid";
    case Op::kMaximum: return "maximum";
    case Op::kSumAll: return "sum";
    case Op::kSumAxis: return "sum_axis";
    case Op::kMaxAxis: return "max_axis";
    case Op::kRepeatAxis: return "repeat_axis";
    case Op::kMatmul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kConcat: return "concat";
    case Op::kSlice: return "slice";
    case Op::kReverse: return "reverse";
    case Op::kReshape: return "reshape";
    case Op::kSoftmax: return "softmax";
    case Op::kLogSoftmax: return "log_softmax";
  }
  return "?";
}

const Tensor& Var::value() const { return tape_->node(id_).value; }
bool Var::requires_grad() const { return tape_->node(id_).requires_grad; }

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ColMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using ConstColMap = Eigen::Map<const ColMat>;
using MutMap = Eigen::Map<RowMat>;

[[noreturn]] void shape_error(Op op, const std::string& detail) {
  throw Error(std::string(op_name(op)) + ": " + detail);
}

// The only broadcast is rank-0 scalar with tensor; in particular a [1]
// tensor is not a scalar and must match shapes exactly.
template <class F>
Tensor ew_binary(Op op, const Tensor& a, const Tensor& b, F f) {
  if (a.same_shape(b)) {
    Tensor out = Tensor::uninitialized(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) {
      out.data()[i] = f(a.data()[i], b.data()[i]);
    }
    return out;
  }
  if (a.rank() == 0) {
    Tensor out = Tensor::uninitialized(b.shape());
    double av = a.data()[0];
    for (int64_t i = 0; i < b.numel(); ++i) out.data()[i] = f(av, b.data()[i]);
    return out;
  }
  if (b.rank() == 0) {
    Tensor out = Tensor::uninitialized(a.shape());
    double bv = b.data()[0];
    for (int64_t i = 0; i < a.numel(); ++i) out.data()[i] = f(a.data()[i], bv);
    return out;
  }
  shape_error(op, "incompatible shapes " + shape_str(a.shape()) + " and " +
                      shape_str(b.shape()));
}

template <class F>
Tensor ew_unary(const Tensor& a, F f) {
  Tensor out = Tensor::uninitialized(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out.data()[i] = f(a.data()[i]);
  return out;
}

// Iteration scheme for rank-2 reductions: `lanes` independent runs of
// length `len`; element k of lane l sits at data[l*lane_stride + k*stride].
// `axis` is the axis being reduced / repeated over.
struct LaneView {
  int64_t lanes, len, stride, lane_stride;
};

LaneView lanes_of(const Shape& s, int axis) {
  if (axis == 0) return {s[1], s[0], s[1], 1};
  return {s[0], s[1], 1, s[1]};
}

void check_axis(Op op, const Tensor& a, int axis) {
  if (a.rank() != 2) {
    shape_error(op, "expects rank 2, got " + shape_str(a.shape()));
  }
  if (axis != 0 && axis != 1) {
    shape_error(op, "axis must be 0 or 1, got " + std::to_string(axis));
  }
}

Tensor softmax_forward(Op op, const Tensor& a, int axis, bool log_form) {
  Tensor out = Tensor::uninitialized(a.shape());
  auto lane_apply = [&](const double* in, double* dst, int64_t len,
                        int64_t stride) {
    double mx = in[0];
    for (int64_t k = 1; k < len; ++k) mx = std::max(mx, in[k * stride]);
    double denom = 0.0;
    for (int64_t k = 0; k < len; ++k) denom += std::exp(in[k * stride] - mx);
    if (log_form) {
      double lse = std::log(denom);
      for (int64_t k = 0; k < len; ++k) {
        dst[k * stride] = in[k * stride] - mx - lse;
      }
    } else {
      for (int64_t k = 0; k < len; ++k) {
        dst[k * stride] = std::exp(in[k * stride] - mx) / denom;
      }
    }
  };
  if (a.rank() == 1) {
    if (axis != 0) shape_error(op, "axis must be 0 for rank 1");
    if (a.numel() == 0) shape_error(op, "empty input");
    lane_apply(a.data().data(), out.data().data(), a.numel(), 1);
    return out;
  }
  check_axis(op, a, axis);
  LaneView lv = lanes_of(a.shape(), axis);
  if (lv.len == 0) shape_error(op, "empty reduction axis");
  for (int64_t l = 0; l < lv.lanes; ++l) {
    lane_apply(a.data().data() + l * lv.lane_stride,
               out.data().data() + l * lv.lane_stride, lv.len, lv.stride);
  }
  return out;
}

Tensor compute_value(Op op, const std::vector<const Tensor*>& in,
                     const OpAttrs& attrs) {
  switch (op) {
    case Op::kLeaf:
    case Op::kConstant:
      throw Error("leaf/constant nodes have no forward computation");
    case Op::kStopGradient:
      return *in[0];
    case Op::kAdd:
      return ew_binary(op, *in[0], *in[1], [](double a, double b) { return a + b; });
    case Op::kSub:
      return ew_binary(op, *in[0], *in[1], [](double a, double b) { return a - b; });
    case Op::kMul:
      return ew_binary(op, *in[0], *in[1], [](double a, double b) { return a * b; });
    case Op::kDiv:
      return ew_binary(op, *in[0], *in[1], [](double a, double b) { return a / b; });
    case Op::kNeg:
      return ew_unary(*in[0], [](double a) { return -a; });
    case Op::kExp:
      return ew_unary(*in[0], [](double a) { return std::exp(a); });
    case Op::kLog:
      return ew_unary(*in[0], [](double a) { return std::log(a); });
    case Op::kSqrt:
      return ew_unary(*in[0], [](double a) { return std::sqrt(a); });
    case Op::kTanh:
      return ew_unary(*in[0], [](double a) { return std::tanh(a); });
    case Op::kSigmoid:
      return ew_unary(*in[0], [](double a) { return 1.0 / (1.0 + std::exp(-a)); });
    case Op::kMaximum:
      return ew_binary(op, *in[0], *in[1],
                       [](double a, double b) { return a >= b ? a : b; });
    case Op::kSumAll: {
      double s = 0.0;
      for (double v : in[0]->data()) s += v;
      return Tensor::scalar(s);
    }
    case Op::kSumAxis: {
      const Tensor& a = *in[0];
      check_axis(op, a, attrs.axis);
      LaneView lv = lanes_of(a.shape(), attrs.axis);
      Tensor out = Tensor::uninitialized({lv.lanes});
      for (int64_t l = 0; l < lv.lanes; ++l) {
        double s = 0.0;
        const double* p = a.data().data() + l * lv.lane_stride;
        for (int64_t k = 0; k < lv.len; ++k) s += p[k * lv.stride];
        out.data()[static_cast<size_t>(l)] = s;
      }
      return out;
    }
    case Op::kMaxAxis: {
      const Tensor& a = *in[0];
      check_axis(op, a, attrs.axis);
      LaneView lv = lanes_of(a.shape(), attrs.axis);
      if (lv.len == 0) shape_error(op, "empty reduction axis");
      Tensor out = Tensor::uninitialized({lv.lanes});
      for (int64_t l = 0; l < lv.lanes; ++l) {
        const double* p = a.data().data() + l * lv.lane_stride;
        double m = p[0];
        for (int64_t k = 1; k < lv.len; ++k) m = std::max(m, p[k * lv.stride]);
        out.data()[static_cast<size_t>(l)] = m;
      }
      return out;
    }
    case Op::kRepeatAxis: {
      const Tensor& a = *in[0];
      if (a.rank() != 1) {
        shape_error(op, "expects rank 1, got " + shape_str(a.shape()));
      }
      if (attrs.count <= 0) shape_error(op, "count must be positive");
      int64_t n = a.numel();
      if (attrs.axis == 0) {  // -> [count, n]
        Tensor out = Tensor::uninitialized({attrs.count, n});
        for (int64_t r = 0; r < attrs.count; ++r) {
          for (int64_t j = 0; j < n; ++j) out.at(r, j) = a.data()[static_cast<size_t>(j)];
        }
        return out;
      }
      if (attrs.axis == 1) {  // -> [n, count]
        Tensor out = Tensor::uninitialized({n, attrs.count});
        for (int64_t i = 0; i < n; ++i) {
          for (int64_t c = 0; c < attrs.count; ++c) out.at(i, c) = a.data()[static_cast<size_t>(i)];
        }
        return out;
      }
      shape_error(op, "axis must be 0 or 1");
    }
    case Op::kMatmul: {
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      if (a.rank() != 2 || b.rank() != 2) {
        shape_error(op, "incompatible shapes " + shape_str(a.shape()) +
                            " and " + shape_str(b.shape()));
      }
      // Transposed operands are read through a column-major view of the
      // same buffer instead of materializing the transpose (the backward
      // rules lean on this heavily).
      const int64_t arows = attrs.trans_a ? a.cols() : a.rows();
      const int64_t ak = attrs.trans_a ? a.rows() : a.cols();
      const int64_t bk = attrs.trans_b ? b.cols() : b.rows();
      const int64_t bcols = attrs.trans_b ? b.rows() : b.cols();
      if (ak != bk) {
        shape_error(op, std::string("incompatible shapes ") +
                            (attrs.trans_a ? "T" : "") + shape_str(a.shape()) +
                            " and " + (attrs.trans_b ? "T" : "") +
                            shape_str(b.shape()));
      }
      Tensor out = Tensor::uninitialized({arows, bcols});
      MutMap o(out.data().data(), arows, bcols);
      ConstMap an(a.data().data(), a.rows(), a.cols());
      ConstMap bn(b.data().data(), b.rows(), b.cols());
      ConstColMap at(a.data().data(), a.cols(), a.rows());
      ConstColMap bt(b.data().data(), b.cols(), b.rows());
      if (!attrs.trans_a && !attrs.trans_b) {
        o = an * bn;
      } else if (attrs.trans_a && !attrs.trans_b) {
        o = at * bn;
      } else if (!attrs.trans_a && attrs.trans_b) {
        o = an * bt;
      } else {
        o = at * bt;
      }
      return out;
    }
    case Op::kTranspose: {
      const Tensor& a = *in[0];
      if (a.rank() != 2) {
        shape_error(op, "expects rank 2, got " + shape_str(a.shape()));
      }
      Tensor out = Tensor::uninitialized({a.cols(), a.rows()});
      for (int64_t i = 0; i < a.rows(); ++i) {
        for (int64_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
      }
      return out;
    }
    case Op::kConcat: {
      if (in.empty()) shape_error(op, "needs at least one input");
      int rank = in[0]->rank();
      int axis = attrs.axis;
      if (rank == 1) {
        if (axis != 0) shape_error(op, "axis must be 0 for rank 1");
        int64_t total = 0;
        for (auto* t : in) {
          if (t->rank() != 1) shape_error(op, "mixed ranks");
          total += t->numel();
        }
        Tensor out = Tensor::uninitialized({total});
        int64_t off = 0;
        for (auto* t : in) {
          for (int64_t i = 0; i < t->numel(); ++i) {
            out.data()[static_cast<size_t>(off + i)] = t->data()[static_cast<size_t>(i)];
          }
          off += t->numel();
        }
        return out;
      }
      if (rank != 2 || (axis != 0 && axis != 1)) {
        shape_error(op, "expects rank 1 or 2 with axis 0/1");
      }
      int64_t keep = axis == 0 ? in[0]->cols() : in[0]->rows();
      int64_t total = 0;
      for (auto* t : in) {
        if (t->rank() != 2) shape_error(op, "mixed ranks");
        int64_t k = axis == 0 ? t->cols() : t->rows();
        if (k != keep) {
          shape_error(op, "mismatched shapes " + shape_str(in[0]->shape()) +
                              " and " + shape_str(t->shape()));
        }
        total += t->dim(axis);
      }
      Tensor out = axis == 0 ? Tensor::uninitialized({total, keep})
                             : Tensor::uninitialized({keep, total});
      int64_t off = 0;
      for (auto* t : in) {
        int64_t d = t->dim(axis);
        for (int64_t i = 0; i < t->rows(); ++i) {
          for (int64_t j = 0; j < t->cols(); ++j) {
            if (axis == 0) {
              out.at(off + i, j) = t->at(i, j);
            } else {
              out.at(i, off + j) = t->at(i, j);
            }
          }
        }
        off += d;
      }
      return out;
    }
    case Op::kSlice: {
      const Tensor& a = *in[0];
      int axis = attrs.axis;
      int64_t start = attrs.start, stop = attrs.stop;
      if (a.rank() == 1) {
        if (axis != 0) shape_error(op, "axis must be 0 for rank 1");
        if (start < 0 || stop < start || stop > a.numel()) {
          shape_error(op, "range [" + std::to_string(start) + "," +
                              std::to_string(stop) + ") out of bounds for " +
                              shape_str(a.shape()));
        }
        Tensor out = Tensor::uninitialized({stop - start});
        for (int64_t i = start; i < stop; ++i) {
          out.data()[static_cast<size_t>(i - start)] = a.data()[static_cast<size_t>(i)];
        }
        return out;
      }
      check_axis(op, a, axis);
      if (start < 0 || stop < start || stop > a.dim(axis)) {
        shape_error(op, "range [" + std::to_string(start) + "," +
                            std::to_string(stop) + ") out of bounds for " +
                            shape_str(a.shape()));
      }
      if (axis == 0) {
        Tensor out = Tensor::uninitialized({stop - start, a.cols()});
        for (int64_t i = start; i < stop; ++i) {
          for (int64_t j = 0; j < a.cols(); ++j) out.at(i - start, j) = a.at(i, j);
        }
        return out;
      }
      Tensor out = Tensor::uninitialized({a.rows(), stop - start});
      for (int64_t i = 0; i < a.rows(); ++i) {
        for (int64_t j = start; j < stop; ++j) out.at(i, j - start) = a.at(i, j);
      }
      return out;
    }
    case Op::kReverse: {
      const Tensor& a = *in[0];
      if (a.rank() == 1) {
        Tensor out = Tensor::uninitialized(a.shape());
        int64_t n = a.numel();
        for (int64_t i = 0; i < n; ++i) {
          out.data()[static_cast<size_t>(i)] = a.data()[static_cast<size_t>(n - 1 - i)];
        }
        return out;
      }
      if (a.rank() != 2) {
        shape_error(op, "expects rank 1 or 2, got " + shape_str(a.shape()));
      }
      Tensor out = Tensor::uninitialized(a.shape());
      for (int64_t i = 0; i < a.rows(); ++i) {
        for (int64_t j = 0; j < a.cols(); ++j) out.at(i, j) = a.at(a.rows() - 1 - i, j);
      }
      return out;
    }
    case Op::kReshape: {
      const Tensor& a = *in[0];
      if (shape_numel(attrs.shape) != a.numel()) {
        shape_error(op, "cannot reshape " + shape_str(a.shape()) + " to " +
                            shape_str(attrs.shape));
      }
      return Tensor(attrs.shape, a.data());
    }
    case Op::kSoftmax:
      return softmax_forward(op, *in[0], attrs.axis, /*log_form=*/false);
    case Op::kLogSoftmax:
      return softmax_forward(op, *in[0], attrs.axis, /*log_form=*/true);
  }
  throw Error("unknown op");
}

// 1 where a wins the elementwise max (ties included), else 0, computed at
// the broadcast output shape.
Tensor maximum_mask(const Tensor& a, const Tensor& b) {
  return ew_binary(Op::kMaximum, a, b,
                   [](double x, double y) { return x >= y ? 1.0 : 0.0; });
}

Tensor max_axis_mask(const Tensor& a, int axis) {
  LaneView lv = lanes_of(a.shape(), axis);
  Tensor mask = Tensor::zeros(a.shape());
  for (int64_t l = 0; l < lv.lanes; ++l) {
    const double* p = a.data().data() + l * lv.lane_stride;
    int64_t best = 0;
    for (int64_t k = 1; k < lv.len; ++k) {
      if (p[k * lv.stride] > p[best * lv.stride]) best = k;
    }
    mask.data()[static_cast<size_t>(l * lv.lane_stride + best * lv.stride)] = 1.0;
  }
  return mask;
}

}  // namespace

Var Tape::add_node(Node node) {
  node.generation = static_cast<uint8_t>(std::min(generation_, 255));
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return add_node(std::move(n));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(value);
  n.requires_grad = false;
  return add_node(std::move(n));
}

Var Tape::record(Op op, std::vector<NodeId> parents, OpAttrs attrs) {
  std::vector<const Tensor*> inputs;
  inputs.reserve(parents.size());
  bool rg = false;
  for (NodeId p : parents) {
    if (p < 0 || p >= static_cast<NodeId>(nodes_.size())) {
      throw Error("record: parent id out of range");
    }
    inputs.push_back(&nodes_[static_cast<size_t>(p)].value);
    rg = rg || nodes_[static_cast<size_t>(p)].requires_grad;
  }
  Node n;
  n.op = op;
  n.value = compute_value(op, inputs, attrs);
  n.parents = std::move(parents);
  n.attrs = std::move(attrs);
  n.requires_grad = op == Op::kStopGradient ? false : rg;
  return add_node(std::move(n));
}

Tape::~Tape() {
  for (Node& n : nodes_) detail::release_buffer(std::move(n.value.data()));
}

void Tape::truncate(size_t mark) {
  if (mark > nodes_.size()) throw Error("truncate: mark beyond tape end");
  for (size_t i = mark; i < nodes_.size(); ++i) {
    detail::release_buffer(std::move(nodes_[i].value.data()));
  }
  nodes_.resize(mark);
}

std::vector<Var> Tape::backward(Var loss, std::span<const Var> wrt,
                                bool create_graph) {
  (void)create_graph;  // gradients are always recorded as differentiable nodes
  if (!loss.valid() || loss.tape() != this) {
    throw Error("backward: loss is not on this tape");
  }
  if (loss.value().numel() != 1) {
    throw Error("backward: loss must be scalar, got shape " +
                shape_str(loss.shape()));
  }
  for (const Var& w : wrt) {
    if (!w.valid() || w.tape() != this) {
      throw Error("backward: wrt entry is not on this tape");
    }
  }
  ++generation_;

  const NodeId loss_id = loss.id();
  // Forward pass over ids: mark nodes reachable from the wrt set through
  // differentiable edges. Only these can carry gradient, so the reverse
  // sweep skips everything else.
  std::vector<char> useful(static_cast<size_t>(loss_id) + 1, 0);
  for (const Var& w : wrt) {
    if (w.id() <= loss_id && node(w.id()).requires_grad) {
      useful[static_cast<size_t>(w.id())] = 1;
    }
  }
  for (NodeId id = 0; id <= loss_id; ++id) {
    if (useful[static_cast<size_t>(id)]) continue;
    const Node& n = nodes_[static_cast<size_t>(id)];
    if (n.op == Op::kStopGradient) continue;
    for (NodeId p : n.parents) {
      if (useful[static_cast<size_t>(p)]) {
        useful[static_cast<size_t>(id)] = 1;
        break;
      }
    }
  }

  auto zeros_result = [&](const Var& w) {
    return constant(Tensor::zeros(w.shape()));
  };

  std::vector<Var> result;
  if (!useful[static_cast<size_t>(loss_id)]) {
    result.reserve(wrt.size());
    for (const Var& w : wrt) result.push_back(zeros_result(w));
    return result;
  }

  std::vector<Var> adj(static_cast<size_t>(loss_id) + 1);
  adj[static_cast<size_t>(loss_id)] =
      constant(Tensor::full(loss.shape(), 1.0));

  auto contribute = [&](NodeId parent, Var g) {
    if (!useful[static_cast<size_t>(parent)]) return;
    Var& slot = adj[static_cast<size_t>(parent)];
    slot = slot.valid() ? add(slot, g) : g;
  };
  // Collapses a gradient at the broadcast output shape back to the shape of
  // a scalar operand. Takes the shape by value: emitting ops reallocates
  // node storage, so references into it must not be held across recording.
  auto reduce_to = [&](Var g, Shape target) {
    if (g.shape() == target) return g;
    Var s = sum(g);
    if (s.shape() == target) return s;
    return reshape(s, target);
  };

  for (NodeId id = loss_id; id >= 0; --id) {
    if (!useful[static_cast<size_t>(id)] || !adj[static_cast<size_t>(id)].valid()) {
      continue;
    }
    // Copy what we need: recording gradient ops reallocates nodes_.
    const Op op = nodes_[static_cast<size_t>(id)].op;
    const std::vector<NodeId> parents = nodes_[static_cast<size_t>(id)].parents;
    const OpAttrs attrs = nodes_[static_cast<size_t>(id)].attrs;
    Var y(this, id);
    Var g = adj[static_cast<size_t>(id)];

    switch (op) {
      case Op::kLeaf:
      case Op::kConstant:
      case Op::kStopGradient:
        break;
      case Op::kAdd: {
        Var a(this, parents[0]), b(this, parents[1]);
        contribute(parents[0], reduce_to(g, a.shape()));
        contribute(parents[1], reduce_to(g, b.shape()));
        break;
      }
      case Op::kSub: {
        Var a(this, parents[0]), b(this, parents[1]);
        contribute(parents[0], reduce_to(g, a.shape()));
        contribute(parents[1], reduce_to(neg(g), b.shape()));
        break;
      }
      case Op::kMul: {
        Var a(this, parents[0]), b(this, parents[1]);
        if (useful[static_cast<size_t>(parents[0])]) {
          contribute(parents[0], reduce_to(mul(g, b), a.shape()));
        }
        if (useful[static_cast<size_t>(parents[1])]) {
          contribute(parents[1], reduce_to(mul(g, a), b.shape()));
        }
        break;
      }
      case Op::kDiv: {
        Var a(this, parents[0]), b(this, parents[1]);
        if (useful[static_cast<size_t>(parents[0])]) {
          contribute(parents[0], reduce_to(div(g, b), a.shape()));
        }
        if (useful[static_cast<size_t>(parents[1])]) {
          contribute(parents[1], reduce_to(neg(div(mul(g, y), b)), b.shape()));
        }
        break;
      }
      case Op::kNeg:
        contribute(parents[0], neg(g));
        break;
      case Op::kExp:
        contribute(parents[0], mul(g, y));
        break;
      case Op::kLog:
        contribute(parents[0], div(g, Var(this, parents[0])));
        break;
      case Op::kSqrt:
        contribute(parents[0], div(g, mul(y, constant(2.0))));
        break;
      case Op::kTanh:
        contribute(parents[0], mul(g, sub(constant(1.0), mul(y, y))));
        break;
      case Op::kSigmoid:
        contribute(parents[0], mul(g, mul(y, sub(constant(1.0), y))));
        break;
      case Op::kMaximum: {
        Var a(this, parents[0]), b(this, parents[1]);
        Var m = constant(maximum_mask(a.value(), b.value()));
        if (useful[static_cast<size_t>(parents[0])]) {
          contribute(parents[0], reduce_to(mul(g, m), a.shape()));
        }
        if (useful[static_cast<size_t>(parents[1])]) {
          contribute(parents[1],
                     reduce_to(mul(g, sub(constant(1.0), m)), b.shape()));
        }
        break;
      }
      case Op::kSumAll: {
        Var a(this, parents[0]);
        contribute(parents[0], mul(constant(Tensor::full(a.shape(), 1.0)), g));
        break;
      }
      case Op::kSumAxis: {
        Var a(this, parents[0]);
        contribute(parents[0], repeat_axis(g, attrs.axis, a.value().dim(attrs.axis)));
        break;
      }
      case Op::kMaxAxis: {
        Var a(this, parents[0]);
        Var m = constant(max_axis_mask(a.value(), attrs.axis));
        contribute(parents[0],
                   mul(repeat_axis(g, attrs.axis, a.value().dim(attrs.axis)), m));
        break;
      }
      case Op::kRepeatAxis:
        contribute(parents[0], sum_axis(g, attrs.axis));
        break;
      case Op::kMatmul: {
        // Gradients of y = A'.B' (' = optional transpose), expressed with
        // transpose flags so no transposed copy is ever materialized. The
        // four cases come from transposing the classic dA = g.B^T,
        // dB = A^T.g as needed to land on the stored operand's layout.
        Var a(this, parents[0]), b(this, parents[1]);
        if (useful[static_cast<size_t>(parents[0])]) {
          Var da = attrs.trans_a ? matmul(b, g, attrs.trans_b, true)
                                 : matmul(g, b, false, !attrs.trans_b);
          contribute(parents[0], da);
        }
        if (useful[static_cast<size_t>(parents[1])]) {
          Var db = attrs.trans_b ? matmul(g, a, true, attrs.trans_a)
                                 : matmul(a, g, !attrs.trans_a, false);
          contribute(parents[1], db);
        }
        break;
      }
      case Op::kTranspose:
        contribute(parents[0], transpose(g));
        break;
      case Op::kConcat: {
        int64_t off = 0;
        for (NodeId p : parents) {
          int64_t d = node(p).value.rank() == 1 ? node(p).value.numel()
                                                : node(p).value.dim(attrs.axis);
          if (useful[static_cast<size_t>(p)]) {
            contribute(p, slice(g, attrs.axis, off, off + d));
          }
          off += d;
        }
        break;
      }
      case Op::kSlice: {
        Var a(this, parents[0]);
        const Shape as = a.shape();
        int64_t dim = a.value().rank() == 1 ? a.value().numel() : a.value().dim(attrs.axis);
        auto zeros_part = [&](int64_t count) {
          Shape s = as;
          s[static_cast<size_t>(a.value().rank() == 1 ? 0 : attrs.axis)] = count;
          return constant(Tensor::zeros(s));
        };
        std::vector<Var> parts;
        if (attrs.start > 0) parts.push_back(zeros_part(attrs.start));
        parts.push_back(g);
        if (attrs.stop < dim) parts.push_back(zeros_part(dim - attrs.stop));
        contribute(parents[0],
                   parts.size() == 1 ? g : concat(parts, attrs.axis));
        break;
      }
      case Op::kReverse:
        contribute(parents[0], reverse(g));
        break;
      case Op::kReshape:
        contribute(parents[0], reshape(g, node(parents[0]).value.shape()));
        break;
      case Op::kSoftmax: {
        // dx = y * (g - sum_lane(g * y))
        Var gy = mul(g, y);
        Var s;
        if (y.value().rank() == 1) {
          s = sum(gy);
        } else {
          s = repeat_axis(sum_axis(gy, attrs.axis), attrs.axis,
                          y.value().dim(attrs.axis));
        }
        contribute(parents[0], mul(y, sub(g, s)));
        break;
      }
      case Op::kLogSoftmax: {
        // dx = g - exp(y) * sum_lane(g)
        Var s;
        if (y.value().rank() == 1) {
          s = sum(g);
        } else {
          s = repeat_axis(sum_axis(g, attrs.axis), attrs.axis,
                          y.value().dim(attrs.axis));
        }
        contribute(parents[0], sub(g, mul(exp(y), s)));
        break;
      }
    }
  }

  result.reserve(wrt.size());
  for (const Var& w : wrt) {
    if (w.id() > loss_id) {
      result.push_back(zeros_result(w));
      continue;
    }
    Var a = adj[static_cast<size_t>(w.id())];
    result.push_back(a.valid() && useful[static_cast<size_t>(w.id())]
                         ? a
                         : zeros_result(w));
  }
  return result;
}

}  // namespace frodolab
