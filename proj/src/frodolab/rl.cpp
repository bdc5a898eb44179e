#include "frodolab/rl.hpp"

namespace frodolab {

namespace {

int64_t check_lengths(Var rewards, Var discounts, const char* what) {
  if (rewards.value().rank() != 1 || discounts.value().rank() != 1 ||
      rewards.value().numel() != discounts.value().numel()) {
    throw Error(std::string(what) + ": rewards " + shape_str(rewards.shape()) +
                " and discounts " + shape_str(discounts.shape()) +
                " must be equal-length rank-1");
  }
  return rewards.value().numel();
}

void check_values(Var values, int64_t t_len, const char* what) {
  if (values.value().rank() != 1 || values.value().numel() != t_len + 1) {
    throw Error(std::string(what) + ": values must have shape [" +
                std::to_string(t_len + 1) + "], got " +
                shape_str(values.shape()));
  }
}

Var at(Var v, int64_t t) { return slice(v, 0, t, t + 1); }  // [1]

Var minimum(Var a, Var b) { return neg(maximum(neg(a), neg(b))); }

}  // namespace

Var discounted_returns(Var rewards, Var discounts, Var bootstrap) {
  int64_t t_len = check_lengths(rewards, discounts, "discounted_returns");
  if (bootstrap.value().numel() != 1) {
    throw Error("discounted_returns: bootstrap must be scalar");
  }
  Var carry = bootstrap.value().rank() == 1 ? bootstrap : reshape(bootstrap, {1});
  std::vector<Var> out(static_cast<size_t>(t_len));
  for (int64_t t = t_len - 1; t >= 0; --t) {
    carry = add(at(rewards, t), mul(at(discounts, t), carry));
    out[static_cast<size_t>(t)] = carry;
  }
  return concat(out, 0);
}

Var n_step_return(Var rewards, Var discounts, Var values, int64_t n) {
  int64_t t_len = check_lengths(rewards, discounts, "n_step_return");
  check_values(values, t_len, "n_step_return");
  if (n < 1) throw Error("n_step_return: n must be >= 1");
  std::vector<Var> out(static_cast<size_t>(t_len));
  for (int64_t t = 0; t < t_len; ++t) {
    int64_t horizon = std::min(n, t_len - t);  // truncate at rollout end
    Var acc = at(values, t + horizon);
    for (int64_t k = t + horizon - 1; k >= t; --k) {
      acc = add(at(rewards, k), mul(at(discounts, k), acc));
    }
    out[static_cast<size_t>(t)] = acc;
  }
  return concat(out, 0);
}

Var lambda_return(Var rewards, Var discounts, Var values, double lambda) {
  int64_t t_len = check_lengths(rewards, discounts, "lambda_return");
  check_values(values, t_len, "lambda_return");
  if (lambda < 0.0 || lambda > 1.0) {
    throw Error("lambda_return: lambda must be in [0,1]");
  }
  Var carry = at(values, t_len);
  std::vector<Var> out(static_cast<size_t>(t_len));
  for (int64_t t = t_len - 1; t >= 0; --t) {
    Var mix = add(mul(at(values, t + 1), scalar_like(carry, 1.0 - lambda)),
                  mul(carry, scalar_like(carry, lambda)));
    carry = add(at(rewards, t), mul(at(discounts, t), mix));
    out[static_cast<size_t>(t)] = carry;
  }
  return concat(out, 0);
}

Var q_learning_target(Var rewards, Var discounts, Var q_next) {
  int64_t t_len = check_lengths(rewards, discounts, "q_learning_target");
  if (q_next.value().rank() != 2 || q_next.value().rows() != t_len) {
    throw Error("q_learning_target: q_next must be [" + std::to_string(t_len) +
                ", A], got " + shape_str(q_next.shape()));
  }
  return add(rewards, mul(discounts, max_axis(q_next, 1)));
}

VtraceResult vtrace(Var values, Var rewards, Var discounts, Var rhos,
                    double lambda, double clip_rho, double clip_pg_rho) {
  int64_t t_len = check_lengths(rewards, discounts, "vtrace");
  check_values(values, t_len, "vtrace");
  if (rhos.value().rank() != 1 || rhos.value().numel() != t_len) {
    throw Error("vtrace: rhos must be [" + std::to_string(t_len) + "]");
  }
  for (double r : rhos.value().data()) {
    if (!(r > 0.0)) throw Error("vtrace: importance ratios must be positive");
  }

  // D_t = vs_t - v_t obeys D_t = delta_t + d_t c_t D_{t+1}, D_T = 0.
  std::vector<Var> d(static_cast<size_t>(t_len));
  std::vector<Var> pg(static_cast<size_t>(t_len));
  Var carry;  // D_{t+1}
  for (int64_t t = t_len - 1; t >= 0; --t) {
    Var rho = at(rhos, t);
    Var rho_bar = minimum(rho, scalar_like(rho, clip_rho));
    Var c = mul(minimum(rho, scalar_like(rho, 1.0)), scalar_like(rho, lambda));
    Var td = sub(add(at(rewards, t), mul(at(discounts, t), at(values, t + 1))),
                 at(values, t));
    Var delta = mul(rho_bar, td);
    Var dt = carry.valid() ? add(delta, mul(mul(at(discounts, t), c), carry))
                           : delta;
    // vs_{t+1} = v_{t+1} + D_{t+1}
    Var vs_next = carry.valid() ? add(at(values, t + 1), carry) : at(values, t + 1);
    Var pg_td = sub(add(at(rewards, t), mul(at(discounts, t), vs_next)),
                    at(values, t));
    pg[static_cast<size_t>(t)] =
        mul(minimum(rho, scalar_like(rho, clip_pg_rho)), pg_td);
    d[static_cast<size_t>(t)] = dt;
    carry = dt;
  }
  return {concat(d, 0), concat(pg, 0)};
}

Var compute_return(const ReturnSpec& spec, Var rewards, Var discounts,
                   Var values) {
  switch (spec.kind) {
    case ReturnSpec::Kind::kOneStepTd:
      return n_step_return(rewards, discounts, values, 1);
    case ReturnSpec::Kind::kNStep:
      return n_step_return(rewards, discounts, values, spec.n);
    case ReturnSpec::Kind::kLambdaReturn:
      return lambda_return(rewards, discounts, values, spec.lambda_);
    case ReturnSpec::Kind::kMonteCarlo: {
      Var zero = rewards.tape()->constant(Tensor::zeros({1}));
      return discounted_returns(rewards, discounts, zero);
    }
    case ReturnSpec::Kind::kVtrace:
      throw Error("compute_return: vtrace needs rhos; call vtrace()");
  }
  throw Error("compute_return: unknown kind");
}

}  // namespace frodolab
