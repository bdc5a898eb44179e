#include "frodolab/frodo.hpp"

#include <cmath>
#include <utility>

namespace frodolab {

namespace {

struct TrajData {
  Var obs;        // [T+1, D]
  Var rewards;    // [T]
  Var discounts;  // [T]
  Var mu;         // [T]
  int64_t t = 0;
};

TrajData upload(Tape& tape, const Trajectory& traj) {
  TrajData d;
  d.t = traj.t_len();
  if (d.t < 1) throw Error("frodo: empty trajectory");
  if (traj.observations.rank() != 2 ||
      traj.observations.dim(0) != d.t + 1) {
    throw Error("frodo: observations must be [T+1, obs_dim]");
  }
  d.obs = tape.constant(traj.observations);
  d.rewards = tape.constant(traj.rewards);
  d.discounts = tape.constant(traj.discounts);
  d.mu = tape.constant(traj.behavior_probs);
  return d;
}

struct Features {
  TrajData data;
  Var g;       // [T] meta-network outputs
  Var v_full;  // [T+1] state values (prediction / actor-critic)
  Var q_head;  // [T, A] action values (value control)
  Var logits;  // [T, A] policy logits (actor-critic)
};

// Builds the per-step inputs the meta-network consumes and runs it. The
// next-value feature stays differentiable so gradient reaches the value
// parameters through the target itself.
Features build_features(const FrodoConfig& cfg, const AgentNetwork& agent,
                        const MetaNetwork& meta, std::span<const Var> theta,
                        std::span<const Var> eta, const Trajectory& traj,
                        Tape& tape) {
  Features f;
  f.data = upload(tape, traj);
  const int64_t t = f.data.t;

  MetaInputs in;
  in.rewards = f.data.rewards;
  in.discounts = f.data.discounts;
  if (cfg.variant == FrodoVariant::kValueControl) {
    Var q_full = agent.action_scores(theta, f.data.obs);  // [T+1, A]
    f.q_head = slice(q_full, 0, 0, t);
    in.next_values = slice(max_axis(q_full, 1), 0, 1, t + 1);
  } else {
    f.v_full = agent.values(theta, f.data.obs);  // [T+1]
    in.next_values = slice(f.v_full, 0, 1, t + 1);
  }
  if (cfg.variant == FrodoVariant::kActorCritic ||
      meta.input_spec().policy_probs) {
    f.logits = agent.action_scores(theta, slice(f.data.obs, 0, 0, t));
  }
  if (meta.input_spec().policy_probs) {
    if (cfg.variant != FrodoVariant::kActorCritic) {
      throw Error("frodo: policy features need the actor-critic variant");
    }
    in.pi_probs = index_select(softmax(f.logits, 1), traj.actions);
    in.mu_probs = f.data.mu;
  }
  f.g = meta(eta, in);
  return f;
}

Var entropy_sum(Var logits) {
  Var logp = log_softmax(logits, 1);
  Var p = softmax(logits, 1);
  return sum(neg(sum_axis(mul(p, logp), 1)));
}

// Stop-gradient that the derivative-verification mode can disable. Forward
// values are identical either way; only gradient flow changes.
Var guarded_stop(bool transparent, Var x) {
  return transparent ? x : stop_gradient(x);
}

// The canonical target used both by the outer loss and as the reference
// stream for the target-divergence diagnostic.
Var reference_targets(const FrodoConfig& cfg, const AgentNetwork& agent,
                      std::span<const Var> theta, const Trajectory& traj,
                      Tape& tape) {
  TrajData d = upload(tape, traj);
  Var v_full = cfg.variant == FrodoVariant::kValueControl
                   ? max_axis(agent.action_scores(theta, d.obs), 1)
                   : agent.values(theta, d.obs);
  if (cfg.outer_return.kind == ReturnSpec::Kind::kVtrace) {
    Var logits = agent.action_scores(theta, slice(d.obs, 0, 0, d.t));
    Var pi = index_select(softmax(logits, 1), traj.actions);
    Var rhos = stop_gradient(div(pi, d.mu));
    VtraceResult vt =
        vtrace(v_full, d.rewards, d.discounts, rhos, cfg.outer_return.lambda_,
               cfg.outer_return.clip_rho, cfg.outer_return.clip_pg_rho);
    return add(vt.errors, slice(v_full, 0, 0, d.t));
  }
  return compute_return(cfg.outer_return, d.rewards, d.discounts, v_full);
}

}  // namespace

void FrodoConfig::validate() const {
  if (inner_updates < 1) throw Error("frodo: need at least one inner update");
  if (consistency_weight < 0.0)
    throw Error("frodo: consistency_weight must be >= 0");
  if (consistency_n < 1) throw Error("frodo: consistency_n must be >= 1");
  if (meta_hidden < 1) throw Error("frodo: meta_hidden must be >= 1");
  if (!(std::isfinite(inner_opt.lr) && std::isfinite(meta_opt.lr)))
    throw Error("frodo: non-finite learning rate");
  if (outer_return.kind == ReturnSpec::Kind::kVtrace &&
      variant != FrodoVariant::kActorCritic) {
    throw Error("frodo: vtrace outer loss needs the actor-critic variant");
  }
  if (meta_policy_features && variant != FrodoVariant::kActorCritic) {
    throw Error("frodo: policy features need the actor-critic variant");
  }
}

InnerLossResult inner_loss_prediction(const AgentNetwork& agent,
                                      const MetaNetwork& meta,
                                      std::span<const Var> theta,
                                      std::span<const Var> eta,
                                      const Trajectory& traj, Tape& tape) {
  FrodoConfig cfg;
  cfg.variant = FrodoVariant::kPrediction;
  Features f = build_features(cfg, agent, meta, theta, eta, traj, tape);
  Var v_head = slice(f.v_full, 0, 0, f.data.t);
  return {mean(square(sub(f.g, v_head))), f.g};
}

InnerLossResult inner_loss_value_control(const AgentNetwork& agent,
                                         const MetaNetwork& meta,
                                         std::span<const Var> theta,
                                         std::span<const Var> eta,
                                         const Trajectory& traj, Tape& tape) {
  FrodoConfig cfg;
  cfg.variant = FrodoVariant::kValueControl;
  Features f = build_features(cfg, agent, meta, theta, eta, traj, tape);
  Var q_taken = index_select(f.q_head, traj.actions);
  return {mean(square(sub(f.g, q_taken))), f.g};
}

InnerLossResult inner_loss_actor_critic(const FrodoConfig& cfg,
                                        const AgentNetwork& agent,
                                        const MetaNetwork& meta,
                                        std::span<const Var> theta,
                                        std::span<const Var> eta,
                                        const Trajectory& traj, Tape& tape) {
  Features f = build_features(cfg, agent, meta, theta, eta, traj, tape);
  Var v_head = slice(f.v_full, 0, 0, f.data.t);
  Var logp_taken = index_select(log_softmax(f.logits, 1), traj.actions);
  Var adv = sub(f.g, guarded_stop(cfg.stop_grads_transparent, v_head));
  Var pi_loss = neg(sum(mul(adv, logp_taken)));
  Var baseline = (cfg.c1 * 0.5) * sum(square(sub(f.g, v_head)));
  Var loss = pi_loss + baseline - cfg.c2 * entropy_sum(f.logits);
  return {loss, f.g};
}

InnerLossResult inner_loss_direct(const FrodoConfig& cfg,
                                  const AgentNetwork& agent,
                                  const MetaNetwork& meta,
                                  std::span<const Var> theta,
                                  std::span<const Var> eta,
                                  const Trajectory& traj, Tape& tape) {
  Features f = build_features(cfg, agent, meta, theta, eta, traj, tape);
  return {sum(f.g), f.g};
}

InnerLossResult inner_loss(const FrodoConfig& cfg, const AgentNetwork& agent,
                           const MetaNetwork& meta, std::span<const Var> theta,
                           std::span<const Var> eta, const Trajectory& traj,
                           Tape& tape) {
  if (cfg.inner_mode == InnerMode::kDirectLoss) {
    return inner_loss_direct(cfg, agent, meta, theta, eta, traj, tape);
  }
  switch (cfg.variant) {
    case FrodoVariant::kPrediction:
      return inner_loss_prediction(agent, meta, theta, eta, traj, tape);
    case FrodoVariant::kValueControl:
      return inner_loss_value_control(agent, meta, theta, eta, traj, tape);
    case FrodoVariant::kActorCritic:
      return inner_loss_actor_critic(cfg, agent, meta, theta, eta, traj, tape);
  }
  throw Error("frodo: unknown variant");
}

Var outer_loss_prediction(const AgentNetwork& agent,
                          std::span<const Var> theta, const ReturnSpec& spec,
                          const Trajectory& traj, Tape& tape,
                          bool stop_grads_transparent) {
  TrajData d = upload(tape, traj);
  Var v_full = agent.values(theta, d.obs);
  Var v_head = slice(v_full, 0, 0, d.t);
  Var g = compute_return(spec, d.rewards, d.discounts, v_full);
  return 0.5 * mean(square(sub(guarded_stop(stop_grads_transparent, g),
                               v_head)));
}

Var outer_loss_value_control(const AgentNetwork& agent,
                             std::span<const Var> theta,
                             const ReturnSpec& spec, const Trajectory& traj,
                             Tape& tape, bool stop_grads_transparent) {
  TrajData d = upload(tape, traj);
  Var q_full = agent.action_scores(theta, d.obs);  // [T+1, A]
  Var q_taken = index_select(slice(q_full, 0, 0, d.t), traj.actions);
  Var v_full = max_axis(q_full, 1);  // greedy value stream for bootstrapping
  Var g = compute_return(spec, d.rewards, d.discounts, v_full);
  return 0.5 * mean(square(sub(guarded_stop(stop_grads_transparent, g),
                               q_taken)));
}

Var outer_loss_actor_critic(const FrodoConfig& cfg, const AgentNetwork& agent,
                            std::span<const Var> theta, const Trajectory& traj,
                            Tape& tape) {
  TrajData d = upload(tape, traj);
  Var v_full = agent.values(theta, d.obs);
  Var v_head = slice(v_full, 0, 0, d.t);
  Var logits = agent.action_scores(theta, slice(d.obs, 0, 0, d.t));
  Var logp_taken = index_select(log_softmax(logits, 1), traj.actions);

  Var adv;       // policy-gradient advantage, treated as data
  Var b_target;  // regression target for the value head, treated as data
  if (cfg.outer_return.kind == ReturnSpec::Kind::kVtrace) {
    Var pi = index_select(softmax(logits, 1), traj.actions);
    Var rhos = guarded_stop(cfg.stop_grads_transparent, div(pi, d.mu));
    VtraceResult vt =
        vtrace(v_full, d.rewards, d.discounts, rhos, cfg.outer_return.lambda_,
               cfg.outer_return.clip_rho, cfg.outer_return.clip_pg_rho);
    adv = guarded_stop(cfg.stop_grads_transparent, vt.pg_advantage);
    b_target = guarded_stop(cfg.stop_grads_transparent,
                            add(vt.errors, v_head));
  } else {
    Var g = compute_return(cfg.outer_return, d.rewards, d.discounts, v_full);
    adv = guarded_stop(cfg.stop_grads_transparent, sub(g, v_head));
    b_target = guarded_stop(cfg.stop_grads_transparent, g);
  }
  Var pi_loss = neg(sum(mul(adv, logp_taken)));
  Var baseline = (cfg.c1 * 0.5) * sum(square(sub(b_target, v_head)));
  return pi_loss + baseline - cfg.c2 * entropy_sum(logits);
}

Var outer_loss(const FrodoConfig& cfg, const AgentNetwork& agent,
               std::span<const Var> theta, const Trajectory& traj,
               Tape& tape) {
  switch (cfg.variant) {
    case FrodoVariant::kPrediction:
      return outer_loss_prediction(agent, theta, cfg.outer_return, traj, tape,
                                   cfg.stop_grads_transparent);
    case FrodoVariant::kValueControl:
      return outer_loss_value_control(agent, theta, cfg.outer_return, traj,
                                      tape, cfg.stop_grads_transparent);
    case FrodoVariant::kActorCritic:
      return outer_loss_actor_critic(cfg, agent, theta, traj, tape);
  }
  throw Error("frodo: unknown variant");
}

Var consistency_loss(Var targets, Var rewards, Var discounts, int64_t n,
                     bool stop_grads_transparent) {
  if (n < 1) throw Error("consistency_loss: n must be >= 1");
  if (!targets.valid() || !rewards.valid() || !discounts.valid()) {
    throw Error("consistency_loss: invalid operand");
  }
  int64_t t = targets.value().numel();
  if (rewards.value().numel() != t || discounts.value().numel() != t) {
    throw Error("consistency_loss: lengths disagree");
  }
  if (t < 2) return scalar_like(targets, 0.0);
  // The learned targets further down the trajectory serve as the bootstrap
  // value stream of the rollup, so the final compared step rolls up into
  // the last learned target.
  Var rollup = n_step_return(slice(rewards, 0, 0, t - 1),
                             slice(discounts, 0, 0, t - 1), targets, n);
  Var compared = slice(targets, 0, 0, t - 1);
  return 0.5 * sum(square(sub(guarded_stop(stop_grads_transparent, rollup),
                              compared)));
}

double target_divergence(const Tensor& learned, const Tensor& reference) {
  if (learned.numel() != reference.numel() || learned.numel() == 0) {
    throw Error("target_divergence: lengths disagree");
  }
  double acc = 0.0;
  for (int64_t i = 0; i < learned.numel(); ++i) {
    double d = learned.data()[static_cast<size_t>(i)] -
               reference.data()[static_cast<size_t>(i)];
    acc += d * d;
  }
  return acc / static_cast<double>(learned.numel());
}

TwoLevelRun run_two_level(const FrodoConfig& cfg, const AgentNetwork& agent,
                          const MetaNetwork& meta, const ParamSet& theta_set,
                          std::span<const Var> theta0,
                          std::span<const Var> acc0, std::span<const Var> eta,
                          const TrajectorySource& source, Tape& tape) {
  cfg.validate();
  if (theta0.size() != theta_set.size()) {
    throw Error("frodo: theta vars do not match the parameter set");
  }

  TwoLevelRun out;
  std::vector<Var> theta_cur(theta0.begin(), theta0.end());
  RmsPropTapeState state;
  if (cfg.inner_optimizer == InnerOptimizer::kRmsProp) {
    if (!acc0.empty()) {
      if (acc0.size() != theta0.size()) {
        throw Error("frodo: accumulator count mismatch");
      }
      state.acc.assign(acc0.begin(), acc0.end());
    } else {
      for (const Var& p : theta0) {
        state.acc.push_back(tape.constant(Tensor::zeros(p.shape())));
      }
    }
  }

  ParamSet theta_now = theta_set;
  Var cons;
  for (int64_t i = 0; i < cfg.inner_updates; ++i) {
    theta_now.set_values(theta_cur);
    Trajectory traj = source(theta_now, i);
    InnerLossResult in =
        inner_loss(cfg, agent, meta, theta_cur, eta, traj, tape);
    out.inner_losses.push_back(in.loss);
    Var c = consistency_loss(in.targets, tape.constant(traj.rewards),
                             tape.constant(traj.discounts), cfg.consistency_n,
                             cfg.stop_grads_transparent);
    cons = cons.valid() ? add(cons, c) : c;

    std::vector<Var> grads =
        tape.backward(in.loss, theta_cur, /*create_graph=*/true);
    grads = clip_global_norm(std::span<const Var>(grads), cfg.inner_clip);
    if (cfg.inner_optimizer == InnerOptimizer::kSgd) {
      theta_cur = sgd_update(theta_cur, grads, cfg.inner_opt.lr);
    } else {
      RmsPropTapeResult res =
          rmsprop_update(cfg.inner_opt, cfg.inner_diff, theta_cur, grads,
                         state);
      theta_cur = std::move(res.params);
      state = std::move(res.state);
    }
  }

  theta_now.set_values(theta_cur);
  Trajectory validation = source(theta_now, cfg.inner_updates);
  out.outer = outer_loss(cfg, agent, theta_cur, validation, tape);
  out.consistency = cons;
  out.total = cfg.consistency_weight > 0.0
                  ? add(out.outer, mul(cons, scalar_like(cons,
                                                         cfg.consistency_weight)))
                  : out.outer;

  // Diagnostics: the learned targets vs the canonical return, both under
  // the post-update parameters on the validation data.
  InnerLossResult val_targets =
      inner_loss(cfg, agent, meta, theta_cur, eta, validation, tape);
  out.validation_targets = val_targets.targets.value();
  out.validation_reference =
      reference_targets(cfg, agent, theta_cur, validation, tape).value();

  out.theta_final = std::move(theta_cur);
  out.inner_state_final = std::move(state);
  return out;
}

FrodoLearner::FrodoLearner(FrodoConfig cfg, AgentNetConfig agent_cfg,
                           uint64_t seed)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  agent_ = AgentNetwork(theta_, agent_cfg, rng);
  MetaInputSpec spec;
  spec.policy_probs = cfg_.meta_policy_features;
  meta_ = MetaNetwork(eta_, cfg_.meta_hidden, spec, rng);
  meta_opt_ = RmsProp(cfg_.meta_opt, eta_);
  for (size_t i = 0; i < theta_.size(); ++i) {
    inner_acc_.push_back(Tensor::zeros(theta_.value(i).shape()));
  }
}

MetaUpdateReport FrodoLearner::meta_step(const TrajectorySource& source) {
  Tape tape;
  std::vector<Var> theta0 = theta_.to_tape(tape, /*requires_grad=*/true);
  std::vector<Var> eta = eta_.to_tape(tape, /*requires_grad=*/true);
  std::vector<Var> acc0;
  if (cfg_.inner_optimizer == InnerOptimizer::kRmsProp) {
    for (const Tensor& a : inner_acc_) acc0.push_back(tape.constant(a));
  }

  TwoLevelRun run = run_two_level(cfg_, agent_, meta_, theta_, theta0, acc0,
                                  eta, source, tape);

  MetaUpdateReport rep;
  rep.outer_loss_value = run.outer.value().item();
  for (const Var& l : run.inner_losses) {
    rep.inner_loss_values.push_back(l.value().item());
  }
  rep.consistency_loss_value =
      run.consistency.valid() ? run.consistency.value().item() : 0.0;
  rep.target_divergence =
      target_divergence(run.validation_targets, run.validation_reference);

  std::vector<Var> grad_vars =
      tape.backward(run.total, eta, /*create_graph=*/false);
  std::vector<Tensor> grads;
  grads.reserve(grad_vars.size());
  bool grads_finite = true;
  for (const Var& gv : grad_vars) {
    grads.push_back(gv.value());
    grads_finite = grads_finite && gv.value().all_finite();
  }
  rep.meta_grad_norm = global_norm(grads);

  bool losses_finite = std::isfinite(rep.outer_loss_value) &&
                       std::isfinite(rep.consistency_loss_value);
  for (double v : rep.inner_loss_values) {
    losses_finite = losses_finite && std::isfinite(v);
  }

  bool theta_finite = true;
  for (const Var& p : run.theta_final) {
    theta_finite = theta_finite && p.value().all_finite();
  }
  for (const Var& a : run.inner_state_final.acc) {
    theta_finite = theta_finite && a.value().all_finite();
  }

  if (theta_finite) {
    theta_.set_values(run.theta_final);
    for (size_t i = 0; i < run.inner_state_final.acc.size(); ++i) {
      inner_acc_[i] = run.inner_state_final.acc[i].value();
    }
  } else {
    rep.diverged = true;  // keep the previous parameters
  }

  if (grads_finite && std::isfinite(rep.meta_grad_norm) && losses_finite) {
    clip_global_norm(grads, cfg_.meta_clip);
    meta_opt_.apply(eta_, grads);
  } else {
    rep.diverged = true;  // skip the meta update
  }
  return rep;
}

}  // namespace frodolab
