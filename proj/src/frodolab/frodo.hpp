#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "frodolab/envs.hpp"
#include "frodolab/nn.hpp"
#include "frodolab/optim.hpp"
#include "frodolab/rl.hpp"

namespace frodolab {

enum class FrodoVariant { kPrediction, kValueControl, kActorCritic };

// The meta-network either emits per-step update targets that feed a squared
// regression (target mode) or its summed outputs are the loss itself.
enum class InnerMode { kTarget, kDirectLoss };

enum class InnerOptimizer { kSgd, kRmsProp };

struct FrodoConfig {
  FrodoVariant variant = FrodoVariant::kPrediction;
  InnerMode inner_mode = InnerMode::kTarget;
  int64_t inner_updates = 5;  // M: inner updates per meta-update

  InnerOptimizer inner_optimizer = InnerOptimizer::kRmsProp;
  OptimConfig inner_opt{0.1, 0.99, 0.1, 0.0};
  DiffPolicy inner_diff = DiffPolicy::kStopGradAccumulators;
  double inner_clip = 1e4;

  OptimConfig meta_opt{0.01, 0.99, 0.1, 0.0};
  double meta_clip = 1e4;

  double c1 = 0.5;   // critic (baseline) weight in actor-critic losses
  double c2 = 0.01;  // entropy weight in actor-critic losses

  double consistency_weight = 0.0;
  int64_t consistency_n = 16;

  ReturnSpec outer_return;  // canonical target for the outer loss

  int64_t meta_hidden = 32;
  bool meta_policy_features = false;  // feed pi/mu of the taken action to g

  // Diagnostic mode for derivative verification: every stop-gradient site
  // in the losses passes gradients through instead. Finite differences
  // measure the total derivative, so that check must run on the
  // derivative-transparent pipeline; the stopping behavior itself is
  // verified separately by constant-substitution tests. Outer-loss and
  // consistency stops only shape gradients, so forward values stay
  // untouched; a stop inside an inner loss feeds the unrolled updates, and
  // making it transparent changes the theta trajectory as well.
  bool stop_grads_transparent = false;

  void validate() const;
};

struct MetaUpdateReport {
  double outer_loss_value = 0.0;
  std::vector<double> inner_loss_values;  // one per inner update
  double consistency_loss_value = 0.0;
  double meta_grad_norm = 0.0;  // global norm before clipping
  double target_divergence = 0.0;
  bool diverged = false;
};

// ---- Loss builders (pure tape constructions) ----

struct InnerLossResult {
  Var loss;     // scalar
  Var targets;  // g, [T], the meta-network outputs
};

InnerLossResult inner_loss_prediction(const AgentNetwork& agent,
                                      const MetaNetwork& meta,
                                      std::span<const Var> theta,
                                      std::span<const Var> eta,
                                      const Trajectory& traj, Tape& tape);
InnerLossResult inner_loss_value_control(const AgentNetwork& agent,
                                         const MetaNetwork& meta,
                                         std::span<const Var> theta,
                                         std::span<const Var> eta,
                                         const Trajectory& traj, Tape& tape);
InnerLossResult inner_loss_actor_critic(const FrodoConfig& cfg,
                                        const AgentNetwork& agent,
                                        const MetaNetwork& meta,
                                        std::span<const Var> theta,
                                        std::span<const Var> eta,
                                        const Trajectory& traj, Tape& tape);
// Ablation: the summed meta-network outputs are the inner loss.
InnerLossResult inner_loss_direct(const FrodoConfig& cfg,
                                  const AgentNetwork& agent,
                                  const MetaNetwork& meta,
                                  std::span<const Var> theta,
                                  std::span<const Var> eta,
                                  const Trajectory& traj, Tape& tape);
// Dispatch on cfg.variant / cfg.inner_mode.
InnerLossResult inner_loss(const FrodoConfig& cfg, const AgentNetwork& agent,
                           const MetaNetwork& meta, std::span<const Var> theta,
                           std::span<const Var> eta, const Trajectory& traj,
                           Tape& tape);

Var outer_loss_prediction(const AgentNetwork& agent,
                          std::span<const Var> theta, const ReturnSpec& spec,
                          const Trajectory& traj, Tape& tape,
                          bool stop_grads_transparent = false);
// Q-regression toward the canonical return over the greedy value stream
// max_a q(s, .); the taken action's value carries the gradient.
Var outer_loss_value_control(const AgentNetwork& agent,
                             std::span<const Var> theta,
                             const ReturnSpec& spec, const Trajectory& traj,
                             Tape& tape, bool stop_grads_transparent = false);
Var outer_loss_actor_critic(const FrodoConfig& cfg, const AgentNetwork& agent,
                            std::span<const Var> theta, const Trajectory& traj,
                            Tape& tape);
Var outer_loss(const FrodoConfig& cfg, const AgentNetwork& agent,
               std::span<const Var> theta, const Trajectory& traj, Tape& tape);

// Self-consistency penalty: 1/2 sum_t (stop_grad(rollup_t) - g_t)^2 where
// rollup_t is the n-step discounted rollup of the observed rewards
// bootstrapped from g further down the trajectory. Gradient reaches only
// the g side. Returns a zero constant when the trajectory is too short.
Var consistency_loss(Var targets, Var rewards, Var discounts, int64_t n,
                     bool stop_grads_transparent = false);

// Mean squared difference between the learned and a reference target.
double target_divergence(const Tensor& learned, const Tensor& reference);

// ---- Two-level core ----

// Supplies trajectory index `idx` (0..M-1 inner, M validation); theta_now
// holds the current inner-parameter values so the caller can act with the
// up-to-date policy (or ignore it for action-less environments / replays).
using TrajectorySource =
    std::function<Trajectory(const ParamSet& theta_now, int64_t idx)>;

struct TwoLevelRun {
  Var total;  // outer + consistency_weight * consistency
  Var outer;
  std::vector<Var> inner_losses;
  Var consistency;  // accumulated across inner-step trajectories
  std::vector<Var> theta_final;
  RmsPropTapeState inner_state_final;  // empty vectors under SGD
  Tensor validation_targets;           // g on the validation trajectory
  Tensor validation_reference;         // canonical return on the same data
};

// Records M inner updates and the outer loss on one tape, eta as leaves.
// theta0 are the current agent parameters as tape leaves; acc0 the current
// second-moment accumulators as constants (ignored under SGD).
TwoLevelRun run_two_level(const FrodoConfig& cfg, const AgentNetwork& agent,
                          const MetaNetwork& meta, const ParamSet& theta_set,
                          std::span<const Var> theta0,
                          std::span<const Var> acc0, std::span<const Var> eta,
                          const TrajectorySource& source, Tape& tape);

// ---- Online two-level learner ----

// Owns theta, eta, both optimizer states and the network index structures.
// meta_step() runs one full meta-update: M inner updates + validation
// trajectory + meta-gradient, keeping the updated theta (single lifetime).
class FrodoLearner {
 public:
  FrodoLearner(FrodoConfig cfg, AgentNetConfig agent_cfg, uint64_t seed);

  MetaUpdateReport meta_step(const TrajectorySource& source);

  const FrodoConfig& config() const { return cfg_; }
  const AgentNetwork& agent() const { return agent_; }
  const MetaNetwork& meta_net() const { return meta_; }
  const ParamSet& theta() const { return theta_; }
  ParamSet& theta() { return theta_; }
  const ParamSet& eta() const { return eta_; }
  ParamSet& eta() { return eta_; }
  const std::vector<Tensor>& inner_accumulators() const { return inner_acc_; }

 private:
  FrodoConfig cfg_;
  ParamSet theta_;
  ParamSet eta_;
  AgentNetwork agent_;
  MetaNetwork meta_;
  std::vector<Tensor> inner_acc_;  // persists across meta-steps
  RmsProp meta_opt_;
};

}  // namespace frodolab
