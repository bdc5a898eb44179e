#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "frodolab/nn.hpp"
#include "frodolab/tensor.hpp"

namespace frodolab {

enum class StepType : uint8_t { kFirst, kMid, kLast };

struct StepOutcome {
  double reward = 0.0;
  bool done = false;
};

// Episodic environment. Concrete dynamics live in do_reset/do_step; the base
// class owns the bookkeeping every experiment needs: a needs-reset latch
// (stepping a finished episode throws) and the running episode return, which
// survives across fixed-length rollouts that cut episodes mid-way.
class Env {
 public:
  virtual ~Env() = default;
  virtual int64_t obs_dim() const = 0;
  virtual int64_t n_actions() const = 0;  // 0: environment ignores actions
  virtual Tensor observation() const = 0;

  void reset(std::mt19937_64& rng) {
    do_reset(rng);
    episode_return_ = 0.0;
    needs_reset_ = false;
  }
  StepOutcome step(int64_t action, std::mt19937_64& rng) {
    if (needs_reset_) throw Error("step on a finished episode; reset first");
    StepOutcome out = do_step(action, rng);
    episode_return_ += out.reward;
    needs_reset_ = out.done;
    return out;
  }
  bool needs_reset() const { return needs_reset_; }
  double episode_return() const { return episode_return_; }

 private:
  virtual void do_reset(std::mt19937_64& rng) = 0;
  virtual StepOutcome do_step(int64_t action, std::mt19937_64& rng) = 0;

  double episode_return_ = 0.0;
  bool needs_reset_ = true;
};

// ---- Catch: a pellet falls down a 6x11 grid; the paddle moves on the
// bottom row and earns +1 for catching it, -1 for missing. ----

struct CatchState {
  int64_t pellet_row = 0;
  int64_t pellet_col = 0;
  int64_t paddle_col = 5;
};

inline constexpr int64_t kCatchRows = 6;
inline constexpr int64_t kCatchCols = 11;
inline constexpr int64_t kCatchActions = 3;  // left, stay, right
inline constexpr int64_t kCatchObsDim = kCatchRows * kCatchCols;

CatchState catch_reset(std::mt19937_64& rng);  // pellet on a random top cell
bool catch_terminal(const CatchState& state);  // pellet on the bottom row
StepOutcome catch_step(CatchState& state, int64_t action);
// Flattened binary grid: a 1 at the pellet cell and at the paddle cell
// (a shared cell encodes a single 1).
Tensor catch_observation(const CatchState& state);

class CatchEnv final : public Env {
 public:
  int64_t obs_dim() const override { return kCatchObsDim; }
  int64_t n_actions() const override { return kCatchActions; }
  Tensor observation() const override { return catch_observation(state_); }
  const CatchState& state() const { return state_; }

 private:
  void do_reset(std::mt19937_64& rng) override { state_ = catch_reset(rng); }
  StepOutcome do_step(int64_t action, std::mt19937_64&) override {
    return catch_step(state_, action);
  }
  CatchState state_;
};

// ---- Random walk: five states in a chain, uniform random moves. Exiting
// right pays 1; exiting left pays 0 or -1, flipping every switch_period
// environment steps. The phase clock ticks across episodes. ----

struct WalkConfig {
  int64_t switch_period = 960;
  double left_rewards[2] = {0.0, -1.0};
};

struct WalkState {
  int64_t position = 3;     // 1..5; C = 3 is the start
  int64_t phase_clock = 0;  // env steps since the last reward switch
  int64_t phase = 0;        // selects left_rewards[phase]
};

StepOutcome walk_step(WalkState& state, const WalkConfig& cfg,
                      std::mt19937_64& rng);
Tensor walk_observation(const WalkState& state);  // one-hot over 5 states
// Exact undiscounted values of the five interior states for a fixed left
// exit reward (right exit pays 1): the linear Bellman system solves to the
// straight line between the two boundary rewards.
Tensor walk_true_values(double left_reward);

class WalkEnv final : public Env {
 public:
  WalkEnv() = default;
  explicit WalkEnv(WalkConfig cfg) : cfg_(cfg) {}

  int64_t obs_dim() const override { return 5; }
  int64_t n_actions() const override { return 0; }
  Tensor observation() const override { return walk_observation(state_); }
  const WalkState& state() const { return state_; }
  const WalkConfig& config() const { return cfg_; }
  double current_left_reward() const {
    return cfg_.left_rewards[state_.phase];
  }

 private:
  void do_reset(std::mt19937_64&) override { state_.position = 3; }
  StepOutcome do_step(int64_t, std::mt19937_64& rng) override {
    return walk_step(state_, cfg_, rng);
  }
  WalkState state_;
  WalkConfig cfg_;
};

// ---- Trajectory collection ----

struct PolicyDecision {
  int64_t action = 0;
  double prob = 1.0;  // behavior probability of the chosen action
};
using Policy =
    std::function<PolicyDecision(const Tensor& obs, std::mt19937_64& rng)>;

Policy uniform_policy(int64_t n_actions);
// Samples from softmax(action_scores) computed on a scratch tape; the prob
// reported is the sampled action's.
Policy softmax_policy(const AgentNetwork& agent, const ParamSet& params);

// Fixed-length rollout. Episodes may end inside it: the terminal transition
// carries discount 0 and the environment restarts immediately, so the next
// observation (possibly the trailing one) is the new episode's first.
struct Trajectory {
  Tensor observations;               // [T+1, obs_dim]
  std::vector<int64_t> actions;      // T
  Tensor rewards;                    // [T]
  Tensor discounts;                  // [T]; 0 exactly at episode ends
  Tensor behavior_probs;             // [T]
  std::vector<StepType> step_types;  // T; kLast exactly where discount is 0
  std::vector<double> completed_returns;  // episodes finished in this rollout

  int64_t t_len() const { return rewards.numel(); }
};

Trajectory collect(Env& env, const Policy& policy, int64_t t_len,
                   std::mt19937_64& rng, double discount = 1.0);

// Behavior-policy parameter snapshot that refreshes from the learner only
// every lag_k updates (lag_k <= 1: refresh on every update, i.e. on-policy).
class LaggedActor {
 public:
  LaggedActor(const ParamSet& source, int64_t lag_k)
      : snapshot_(source), lag_k_(lag_k) {}

  void on_learner_update(const ParamSet& source) {
    if (++since_refresh_ >= std::max<int64_t>(lag_k_, 1)) {
      snapshot_ = source;
      since_refresh_ = 0;
    }
  }
  const ParamSet& params() const { return snapshot_; }
  int64_t lag() const { return lag_k_; }

 private:
  ParamSet snapshot_;
  int64_t lag_k_ = 0;
  int64_t since_refresh_ = 0;
};

// ---- Catch planning baseline ----

// Best action under exact `horizon`-step lookahead of the truncated return;
// ties are broken uniformly at random.
int64_t catch_lookahead_action(const CatchState& state, int64_t horizon,
                               std::mt19937_64& rng);
// Mean episode return of the lookahead agent.
double catch_lookahead_baseline(std::mt19937_64& rng, int64_t episodes,
                                int64_t horizon = 3);

}  // namespace frodolab
