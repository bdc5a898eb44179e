#pragma once

// Seeded random computation graphs for fuzzing the autodiff engine against
// the finite-difference oracle. Graph structure depends only on the seed and
// the leaf shapes (never on leaf values), so rebuilding with perturbed
// inputs replays the exact same graph.
//
// Ops with kinks or value-dependent subgradients (maximum, max_axis) and
// stop_gradient are excluded here — finite differences cannot check them —
// and get dedicated deterministic tests instead. Domain-restricted ops are
// wrapped into safe composites (log(0.1+x^2), exp(tanh(x)), ...).

#include <cstdint>
#include <random>
#include <vector>

#include "frodolab/ops.hpp"
#include "frodolab/tape.hpp"

namespace fdcheck {

using frodolab::Shape;
using frodolab::Tape;
using frodolab::Tensor;
using frodolab::Var;

struct RandomGraphSpec {
  uint64_t seed = 0;
  int n_leaves = 3;
  int n_ops = 12;
};

inline std::vector<Tensor> random_graph_inputs(const RandomGraphSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::uniform_int_distribution<int64_t> dim(2, 4);
  std::uniform_int_distribution<int> kind(0, 2);
  std::uniform_real_distribution<double> val(-1.5, 1.5);
  std::vector<Tensor> inputs;
  for (int i = 0; i < spec.n_leaves; ++i) {
    Shape shape;
    switch (kind(rng)) {
      case 0: shape = {}; break;
      case 1: shape = {dim(rng)}; break;
      default: shape = {dim(rng), dim(rng)}; break;
    }
    Tensor t = Tensor::zeros(shape);
    for (double& v : t.data()) v = val(rng);
    inputs.push_back(std::move(t));
  }
  return inputs;
}

inline Var build_random_graph(Tape& tape, const std::vector<Var>& leaves,
                              const RandomGraphSpec& spec) {
  (void)tape;  // ops reach the tape through the leaf handles
  // Separate stream from the one that drew the inputs.
  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<Var> pool = leaves;
  auto pick = [&](auto pred) -> Var {
    std::uniform_int_distribution<size_t> d(0, pool.size() - 1);
    for (int attempt = 0; attempt < 64; ++attempt) {
      Var v = pool[d(rng)];
      if (pred(v)) return v;
    }
    return Var();
  };
  auto any = [](Var) { return true; };
  auto rank1 = [](Var v) { return v.value().rank() == 1; };
  auto rank2 = [](Var v) { return v.value().rank() == 2; };

  std::uniform_int_distribution<int> op_pick(0, 17);
  std::uniform_int_distribution<int> axis_pick(0, 1);
  std::uniform_int_distribution<int64_t> count_pick(2, 4);

  for (int step = 0; step < spec.n_ops; ++step) {
    Var out;
    switch (op_pick(rng)) {
      case 0: {  // binary elementwise: equal shapes or scalar broadcast
        Var a = pick(any);
        auto compatible = [&](Var v) {
          return v.value().same_shape(a.value()) || v.value().numel() == 1 ||
                 a.value().numel() == 1;
        };
        Var b = pick(compatible);
        if (!b.valid()) break;
        switch (axis_pick(rng) * 2 + axis_pick(rng)) {
          case 0: out = add(a, b); break;
          case 1: out = sub(a, b); break;
          case 2: out = mul(a, b); break;
          default: out = div(a, 0.5 + square(b)); break;
        }
        break;
      }
      case 1: out = neg(pick(any)); break;
      case 2: out = frodolab::exp(frodolab::tanh(pick(any))); break;
      case 3: out = frodolab::log(0.1 + square(pick(any))); break;
      case 4: out = frodolab::sqrt(0.1 + square(pick(any))); break;
      case 5: out = frodolab::tanh(pick(any)); break;
      case 6: out = sigmoid(pick(any)); break;
      case 7: out = square(pick(any)); break;
      case 8: out = mean(pick(any)); break;
      case 9: {
        Var a = pick(rank2);
        if (a.valid()) {
          out = axis_pick(rng) ? sum_axis(a, axis_pick(rng))
                               : mean_axis(a, axis_pick(rng));
        }
        break;
      }
      case 10: {
        Var a = pick(rank1);
        if (a.valid()) out = repeat_axis(a, axis_pick(rng), count_pick(rng));
        break;
      }
      case 11: {  // matmul, tanh-wrapped to keep magnitudes bounded
        Var a = pick(rank2);
        if (!a.valid()) break;
        auto fits = [&](Var v) {
          return v.value().rank() == 2 && v.value().rows() == a.value().cols();
        };
        Var b = pick(fits);
        if (b.valid()) out = frodolab::tanh(matmul(a, b));
        break;
      }
      case 12: {
        Var a = pick(rank2);
        if (a.valid()) out = transpose(a);
        break;
      }
      case 13: {  // concat two rank-1s
        Var a = pick(rank1);
        Var b = pick(rank1);
        if (a.valid() && b.valid()) out = frodolab::concat({a, b}, 0);
        break;
      }
      case 14: {  // slice a random non-empty subrange
        Var a = pick([](Var v) { return v.value().rank() >= 1 && v.value().numel() > 0; });
        if (!a.valid()) break;
        int axis = a.value().rank() == 1 ? 0 : axis_pick(rng);
        int64_t d = a.value().rank() == 1 ? a.value().numel() : a.value().dim(axis);
        std::uniform_int_distribution<int64_t> s(0, d - 1);
        int64_t start = s(rng);
        std::uniform_int_distribution<int64_t> e(start + 1, d);
        out = slice(a, axis, start, e(rng));
        break;
      }
      case 15: {
        Var a = pick([](Var v) { return v.value().rank() >= 1; });
        if (a.valid()) out = reverse(a);
        break;
      }
      case 16: {  // reshape rank2 <-> rank1
        Var a = pick(rank2);
        if (a.valid()) out = reshape(a, {a.value().numel()});
        break;
      }
      default: {
        Var a = pick([](Var v) { return v.value().rank() >= 1 && v.value().numel() > 0; });
        if (!a.valid()) break;
        int axis = a.value().rank() == 1 ? 0 : axis_pick(rng);
        out = axis_pick(rng) ? softmax(a, axis) : log_softmax(a, axis);
        break;
      }
    }
    if (out.valid()) pool.push_back(out);
  }

  // Fold the whole pool into the loss so every op influences it.
  Var loss;
  for (const Var& v : pool) {
    Var s = sum(frodolab::tanh(v));
    loss = loss.valid() ? add(loss, s) : s;
  }
  return loss;
}

inline GraphFn random_graph_fn(const RandomGraphSpec& spec) {
  return [spec](Tape& tape, const std::vector<Var>& leaves) {
    return build_random_graph(tape, leaves, spec);
  };
}

}  // namespace fdcheck
