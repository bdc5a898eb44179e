#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "frodolab/tensor.hpp"

namespace frodolab {

class Tape;

// Primitive operations. Every backward rule is itself expressed with these
// ops, so gradients recorded with create_graph can be differentiated again.
enum class Op : uint8_t {
  kLeaf,          // user input (parameter or data)
  kConstant,      // non-differentiable value created during the program
  kStopGradient,  // identity forward, blocks gradient flow
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kExp,
  kLog,
  kSqrt,
  kTanh,
  kSigmoid,
  kMaximum,     // elementwise max of two tensors
  kSumAll,      // -> scalar
  kSumAxis,     // rank2 -> rank1
  kMaxAxis,     // rank2 -> rank1, subgradient at ties goes to first max
  kRepeatAxis,  // rank1 -> rank2, dual of kSumAxis
  kMatmul,      // rank2 x rank2
  kTranspose,   // rank2
  kConcat,      // along axis 0 or 1
  kSlice,       // contiguous range along one axis
  kReverse,     // flip along axis 0
  kReshape,
  kSoftmax,     // numerically stable, along one axis
  kLogSoftmax,  // numerically stable, along one axis
};

const char* op_name(Op op);

// Static per-node metadata (axis/range for slicing ops, target shape for
// reshape, operand transposes for matmul). Unused fields stay at their
// defaults.
struct OpAttrs {
  int axis = 0;
  int64_t start = 0;
  int64_t stop = 0;
  int64_t count = 0;      // repeat count for kRepeatAxis
  bool trans_a = false;   // kMatmul: read the first operand transposed
  bool trans_b = false;   // kMatmul: read the second operand transposed
  Shape shape;            // target shape for kReshape
};

using NodeId = int32_t;
inline constexpr NodeId kInvalidNode = -1;

struct Node {
  Op op = Op::kConstant;
  std::vector<NodeId> parents;
  Tensor value;
  OpAttrs attrs;
  bool requires_grad = false;
  uint8_t generation = 0;  // how many backward passes had run when this node was recorded
};

// Lightweight handle to a node on a tape. Copyable; valid as long as the
// tape outlives it and is not reset.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr && id_ >= 0; }
  Tape* tape() const { return tape_; }
  NodeId id() const { return id_; }

  const Tensor& value() const;
  // By value: recording ops can reallocate the tape's node storage, which
  // would invalidate a reference held across an emission.
  Shape shape() const { return value().shape(); }
  bool requires_grad() const;
  double item() const { return value().item(); }

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = kInvalidNode;
};

// Gradient tape: append-only list of nodes recording every operation.
// backward() walks it in reverse, accumulating adjoints; with create_graph
// the adjoint computation is recorded as new nodes on the same tape, which
// is what makes second-order (meta-)gradients possible. Not thread-safe.
class Tape {
 public:
  Tape() = default;
  // Donates node buffers back to the thread-local pool (see
  // detail::acquire_buffer) so the next tape can reuse them.
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value);
  Var constant(double v) { return constant(Tensor::scalar(v)); }

  // Records one op: validates shapes, computes the forward value eagerly,
  // derives requires_grad from the parents.
  Var record(Op op, std::vector<NodeId> parents, OpAttrs attrs = {});

  // Reverse-mode sweep from `loss` (scalar). Returns one gradient per entry
  // of `wrt`, as nodes on this tape; a wrt that does not influence the loss
  // gets a zero constant of its shape. With create_graph=true the returned
  // gradients are themselves differentiable.
  std::vector<Var> backward(Var loss, std::span<const Var> wrt,
                            bool create_graph = false);

  const Node& node(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }
  size_t size() const { return nodes_.size(); }
  // Nesting depth: number of backward passes recorded so far.
  int generation() const { return generation_; }

  // Drops every node from `mark` on. Handles taken before the mark stay
  // valid; anything recorded after it is forgotten.
  size_t mark() const { return nodes_.size(); }
  void truncate(size_t mark);
  void reserve(size_t n) { nodes_.reserve(n); }

 private:
  std::vector<Node> nodes_;
  int generation_ = 0;

  Var add_node(Node node);
};

}  // namespace frodolab
