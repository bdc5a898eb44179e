#include "frodolab/envs.hpp"

#include <algorithm>
#include <memory>

#include "frodolab/ops.hpp"
#include "frodolab/rng.hpp"
#include "frodolab/tape.hpp"

namespace frodolab {

CatchState catch_reset(std::mt19937_64& rng) {
  CatchState s;
  s.pellet_row = 0;
  s.pellet_col = uniform_int(rng, 0, kCatchCols - 1);
  s.paddle_col = kCatchCols / 2;  // centre
  return s;
}

bool catch_terminal(const CatchState& state) {
  return state.pellet_row >= kCatchRows - 1;
}

StepOutcome catch_step(CatchState& state, int64_t action) {
  if (catch_terminal(state)) throw Error("catch: step on terminal state");
  if (action < 0 || action >= kCatchActions) {
    throw Error("catch: action must be 0 (left), 1 (stay) or 2 (right)");
  }
  state.paddle_col =
      std::clamp<int64_t>(state.paddle_col + action - 1, 0, kCatchCols - 1);
  state.pellet_row += 1;
  StepOutcome out;
  out.done = catch_terminal(state);
  if (out.done) {
    out.reward = state.paddle_col == state.pellet_col ? 1.0 : -1.0;
  }
  return out;
}

Tensor catch_observation(const CatchState& state) {
  Tensor obs = Tensor::zeros({kCatchObsDim});
  obs.data()[static_cast<size_t>(state.pellet_row * kCatchCols +
                                 state.pellet_col)] = 1.0;
  obs.data()[static_cast<size_t>((kCatchRows - 1) * kCatchCols +
                                 state.paddle_col)] = 1.0;
  return obs;
}

StepOutcome walk_step(WalkState& state, const WalkConfig& cfg,
                      std::mt19937_64& rng) {
  if (state.position < 1 || state.position > 5) {
    throw Error("walk: position outside the chain");
  }
  state.position += unit_uniform(rng) < 0.5 ? -1 : 1;
  StepOutcome out;
  if (state.position == 0) {
    out.done = true;
    out.reward = cfg.left_rewards[state.phase];
  } else if (state.position == 6) {
    out.done = true;
    out.reward = 1.0;
  }
  if (++state.phase_clock >= cfg.switch_period) {
    state.phase_clock = 0;
    state.phase ^= 1;
  }
  return out;
}

Tensor walk_observation(const WalkState& state) {
  if (state.position < 1 || state.position > 5) {
    throw Error("walk: no observation outside the chain");
  }
  Tensor obs = Tensor::zeros({5});
  obs.data()[static_cast<size_t>(state.position - 1)] = 1.0;
  return obs;
}

Tensor walk_true_values(double left_reward) {
  // v(i) = (v(i-1) + v(i+1))/2 with v(0) = left_reward, v(6) = 1 is linear
  // interpolation between the boundary rewards.
  Tensor v = Tensor::zeros({5});
  for (int64_t i = 1; i <= 5; ++i) {
    v.data()[static_cast<size_t>(i - 1)] =
        left_reward + (1.0 - left_reward) * static_cast<double>(i) / 6.0;
  }
  return v;
}

Policy uniform_policy(int64_t n_actions) {
  if (n_actions < 0) throw Error("uniform_policy: negative action count");
  if (n_actions == 0) {
    // Action-less environments ignore the decision; report certainty.
    return [](const Tensor&, std::mt19937_64&) { return PolicyDecision{}; };
  }
  return [n_actions](const Tensor&, std::mt19937_64& rng) {
    PolicyDecision d;
    d.action = uniform_int(rng, 0, n_actions - 1);
    d.prob = 1.0 / static_cast<double>(n_actions);
    return d;
  };
}

Policy softmax_policy(const AgentNetwork& agent, const ParamSet& params) {
  // Copy the parameter values so the snapshot is stable even if the caller
  // keeps training the source set.
  auto snapshot = std::make_shared<ParamSet>(params);
  return [agent, snapshot](const Tensor& obs, std::mt19937_64& rng) {
    Tape tape;
    std::vector<Var> pv = snapshot->to_tape(tape, /*requires_grad=*/false);
    Var row = tape.constant(Tensor({1, obs.numel()}, obs.data()));
    Tensor probs = softmax(agent.action_scores(pv, row), 1).value();
    double u = unit_uniform(rng);
    double cdf = 0.0;
    PolicyDecision d;
    int64_t last = probs.numel() - 1;
    for (int64_t a = 0; a <= last; ++a) {
      double p = probs.data()[static_cast<size_t>(a)];
      cdf += p;
      if (u < cdf || a == last) {
        d.action = a;
        d.prob = p;
        break;
      }
    }
    return d;
  };
}

Trajectory collect(Env& env, const Policy& policy, int64_t t_len,
                   std::mt19937_64& rng, double discount) {
  if (t_len < 1) throw Error("collect: need at least one step");
  if (env.n_actions() > 0 && !policy) {
    throw Error("collect: this environment needs a policy");
  }
  Trajectory traj;
  traj.observations = Tensor::zeros({t_len + 1, env.obs_dim()});
  traj.rewards = Tensor::zeros({t_len});
  traj.discounts = Tensor::zeros({t_len});
  traj.behavior_probs = Tensor::zeros({t_len});
  traj.actions.resize(static_cast<size_t>(t_len));
  traj.step_types.resize(static_cast<size_t>(t_len));

  auto write_obs = [&](int64_t row) {
    Tensor obs = env.observation();
    std::copy(obs.data().begin(), obs.data().end(),
              traj.observations.data().begin() +
                  static_cast<ptrdiff_t>(row * env.obs_dim()));
    return obs;
  };

  for (int64_t t = 0; t < t_len; ++t) {
    bool fresh = env.needs_reset();
    if (fresh) env.reset(rng);
    Tensor obs = write_obs(t);

    PolicyDecision d;
    if (env.n_actions() > 0) d = policy(obs, rng);
    StepOutcome out = env.step(d.action, rng);

    size_t i = static_cast<size_t>(t);
    traj.actions[i] = d.action;
    traj.behavior_probs.data()[i] = d.prob;
    traj.rewards.data()[i] = out.reward;
    traj.discounts.data()[i] = out.done ? 0.0 : discount;
    traj.step_types[i] =
        out.done ? StepType::kLast : (fresh ? StepType::kFirst : StepType::kMid);
    if (out.done) traj.completed_returns.push_back(env.episode_return());
  }
  // The trailing observation starts the next episode when the rollout ended
  // on a terminal step.
  if (env.needs_reset()) env.reset(rng);
  write_obs(t_len);
  return traj;
}

namespace {

// Exact truncated-return lookahead over the deterministic Catch dynamics.
double catch_best_return(const CatchState& state, int64_t depth) {
  if (depth == 0 || catch_terminal(state)) return 0.0;
  double best = 0.0;
  for (int64_t a = 0; a < kCatchActions; ++a) {
    CatchState next = state;
    StepOutcome out = catch_step(next, a);
    double q = out.reward + catch_best_return(next, depth - 1);
    if (a == 0 || q > best) best = q;
  }
  return best;
}

}  // namespace

int64_t catch_lookahead_action(const CatchState& state, int64_t horizon,
                               std::mt19937_64& rng) {
  if (horizon < 1) throw Error("lookahead: horizon must be >= 1");
  if (catch_terminal(state)) throw Error("lookahead: terminal state");
  double q[kCatchActions];
  double best = 0.0;
  for (int64_t a = 0; a < kCatchActions; ++a) {
    CatchState next = state;
    StepOutcome out = catch_step(next, a);
    q[a] = out.reward + catch_best_return(next, horizon - 1);
    if (a == 0 || q[a] > best) best = q[a];
  }
  int64_t ties[kCatchActions];
  int64_t n_ties = 0;
  for (int64_t a = 0; a < kCatchActions; ++a) {
    if (q[a] == best) ties[n_ties++] = a;
  }
  return ties[uniform_int(rng, 0, n_ties - 1)];
}

double catch_lookahead_baseline(std::mt19937_64& rng, int64_t episodes,
                                int64_t horizon) {
  if (episodes < 1) throw Error("lookahead baseline: episodes must be >= 1");
  double total = 0.0;
  for (int64_t e = 0; e < episodes; ++e) {
    CatchState s = catch_reset(rng);
    while (!catch_terminal(s)) {
      total += catch_step(s, catch_lookahead_action(s, horizon, rng)).reward;
    }
  }
  return total / static_cast<double>(episodes);
}

}  // namespace frodolab
