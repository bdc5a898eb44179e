#pragma once

// Finite-difference oracle for gradient checks: central differences with the
// loss evaluated on freshly built graphs, compared against reverse-mode
// gradients. Relative error uses 1+|fd| in the denominator so near-zero
// gradients are judged on absolute error.

#include <cmath>
#include <functional>
#include <vector>

#include "frodolab/ops.hpp"
#include "frodolab/tape.hpp"

namespace fdcheck {

using frodolab::Shape;
using frodolab::Tape;
using frodolab::Tensor;
using frodolab::Var;

// Builds a scalar loss from leaves. Must be a pure function of the leaf
// values (same structure on every call).
using GraphFn = std::function<Var(Tape&, const std::vector<Var>&)>;

inline double eval_loss(const GraphFn& f, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
  return f(tape, leaves).value().item();
}

inline double rel_error(double ad, double fd) {
  return std::abs(ad - fd) / (1.0 + std::abs(fd));
}

// Max relative error between reverse-mode and central-difference gradients,
// over every element of every input.
inline double max_grad_error(const GraphFn& f, std::vector<Tensor> inputs,
                             double h = 1e-5) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
  Var loss = f(tape, leaves);
  std::vector<Var> grads = tape.backward(loss, leaves);

  double worst = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (size_t k = 0; k < inputs[i].data().size(); ++k) {
      double orig = inputs[i].data()[k];
      inputs[i].data()[k] = orig + h;
      double up = eval_loss(f, inputs);
      inputs[i].data()[k] = orig - h;
      double down = eval_loss(f, inputs);
      inputs[i].data()[k] = orig;
      double fd = (up - down) / (2.0 * h);
      double ad = grads[i].value().data()[k];
      worst = std::max(worst, rel_error(ad, fd));
    }
  }
  return worst;
}

// Same oracle one level up: perturbs inputs, recomputes the first-order
// reverse-mode gradient, and compares its central difference against the
// double-backward result. `second_loss` maps the first gradients to the
// scalar whose gradient is checked (defaults to sum of squares, which
// touches every element).
inline double max_second_order_error(const GraphFn& f,
                                     std::vector<Tensor> inputs,
                                     double h = 1e-5) {
  auto grad_scalar = [&](const std::vector<Tensor>& in) {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& t : in) leaves.push_back(tape.leaf(t));
    Var loss = f(tape, leaves);
    auto grads = tape.backward(loss, leaves, /*create_graph=*/false);
    double s = 0.0;
    for (const Var& g : grads) {
      for (double v : g.value().data()) s += v * v;
    }
    return s;
  };

  // Double-backward: d/dx sum_i g_i(x)^2.
  Tape tape;
  std::vector<Var> leaves;
  for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
  Var loss = f(tape, leaves);
  auto grads = tape.backward(loss, leaves, /*create_graph=*/true);
  Var l2;
  for (const Var& g : grads) {
    Var s = frodolab::sum(frodolab::square(g));
    l2 = l2.valid() ? frodolab::add(l2, s) : s;
  }
  auto grads2 = tape.backward(l2, leaves);

  double worst = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (size_t k = 0; k < inputs[i].data().size(); ++k) {
      double orig = inputs[i].data()[k];
      inputs[i].data()[k] = orig + h;
      double up = grad_scalar(inputs);
      inputs[i].data()[k] = orig - h;
      double down = grad_scalar(inputs);
      inputs[i].data()[k] = orig;
      double fd = (up - down) / (2.0 * h);
      double ad = grads2[i].value().data()[k];
      worst = std::max(worst, rel_error(ad, fd));
    }
  }
  return worst;
}

}  // namespace fdcheck
