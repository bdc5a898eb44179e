#pragma once

#include <vector>

#include "frodolab/ops.hpp"
#include "frodolab/tape.hpp"

namespace frodolab {

// Which canonical return feeds a loss. n/lambda_/clip_* are read only by the
// kinds that use them.
struct ReturnSpec {
  enum class Kind {
    kOneStepTd,
    kNStep,
    kLambdaReturn,
    kMonteCarlo,  // discounted returns, zero bootstrap
    kVtrace,
  };
  Kind kind = Kind::kLambdaReturn;
  int64_t n = 1;
  double lambda_ = 1.0;
  double clip_rho = 1.0;
  double clip_pg_rho = 1.0;
};

// All return operators are pure functions over rank-1 [T] (values [T+1])
// tape nodes and produce [T] targets in forward time order. Gradient
// stopping is the caller's business: these compute the math only.

// G_t = r_t + d_t * G_{t+1}, seeded by the bootstrap scalar.
Var discounted_returns(Var rewards, Var discounts, Var bootstrap);

// Truncated n-step bootstrapped return; the horizon shrinks near the end.
Var n_step_return(Var rewards, Var discounts, Var values, int64_t n);

// G_t = r_t + d_t * ((1-lambda) v_{t+1} + lambda G_{t+1}).
Var lambda_return(Var rewards, Var discounts, Var values, double lambda);

// G_t = r_t + d_t * max_a q_next[t, a].
Var q_learning_target(Var rewards, Var discounts, Var q_next);

struct VtraceResult {
  Var errors;        // vs_t - v_t
  Var pg_advantage;  // clipped-rho * (r_t + d_t vs_{t+1} - v_t)
};

// Standard VTrace backward recursion with clipped importance weights:
//   delta_t = min(rho_t, clip_rho) * (r_t + d_t v_{t+1} - v_t)
//   vs_t - v_t = delta_t + d_t * lambda*min(rho_t, 1) * (vs_{t+1} - v_{t+1})
VtraceResult vtrace(Var values, Var rewards, Var discounts, Var rhos,
                    double lambda, double clip_rho, double clip_pg_rho);

// Dispatches on spec.kind; vtrace is excluded here (it needs rhos and
// returns two streams — call vtrace() directly).
Var compute_return(const ReturnSpec& spec, Var rewards, Var discounts,
                   Var values);

}  // namespace frodolab
