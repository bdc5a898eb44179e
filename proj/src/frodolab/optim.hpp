#pragma once

#include <span>
#include <vector>

#include "frodolab/nn.hpp"
#include "frodolab/ops.hpp"

namespace frodolab {

// Whether backward may differentiate through the RMSProp second-moment
// accumulator chain. Stopping it (the default for the inner optimizer)
// removes the 1/sqrt path, a known source of exploding meta-gradients;
// forward values are identical either way.
enum class DiffPolicy {
  kFull,
  kStopGradAccumulators,
};

struct OptimConfig {
  double lr = 1e-3;
  double decay = 0.99;     // rmsprop only
  double eps = 0.1;        // rmsprop only
  double momentum = 0.0;   // defaults off
};

// ---- On-tape updates (differentiable; used for the inner optimizer) ----

// theta' = theta - lr * g, expressed as tape ops so d theta'/d eta flows.
std::vector<Var> sgd_update(std::span<const Var> params,
                            std::span<const Var> grads, double lr);

struct RmsPropTapeState {
  std::vector<Var> acc;  // second moments
  std::vector<Var> vel;  // momentum buffers; empty when momentum == 0
};

struct RmsPropTapeResult {
  std::vector<Var> params;
  RmsPropTapeState state;
};

// acc' = decay*acc + (1-decay)*g^2; theta' = theta - lr*g/(sqrt(acc')+eps)
// (with an optional momentum buffer applied to the scaled step).
RmsPropTapeResult rmsprop_update(const OptimConfig& cfg, DiffPolicy policy,
                                 std::span<const Var> params,
                                 std::span<const Var> grads,
                                 const RmsPropTapeState& state);

// Rescales all gradients by max_norm/norm when the global L2 norm exceeds
// max_norm; identity otherwise. Differentiable (kink at the threshold).
std::vector<Var> clip_global_norm(std::span<const Var> grads, double max_norm);

// ---- Off-tape updates (plain tensors; used for the meta optimizer) ----

double global_norm(const std::vector<Tensor>& grads);
// Returns the pre-clip norm.
double clip_global_norm(std::vector<Tensor>& grads, double max_norm);

void sgd_apply(ParamSet& params, const std::vector<Tensor>& grads, double lr);

// Stateful RMSProp over a ParamSet.
class RmsProp {
 public:
  RmsProp() = default;
  RmsProp(OptimConfig cfg, const ParamSet& shape_of);
  void apply(ParamSet& params, const std::vector<Tensor>& grads);
  const std::vector<Tensor>& accumulators() const { return acc_; }

 private:
  OptimConfig cfg_;
  std::vector<Tensor> acc_;
  std::vector<Tensor> vel_;
};

}  // namespace frodolab
