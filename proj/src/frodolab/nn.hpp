#pragma once

#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "frodolab/ops.hpp"
#include "frodolab/tape.hpp"

namespace frodolab {

// Ordered collection of named parameter tensors (agent theta or meta eta).
// Layers register entries at construction and remember their indices; the
// same indices address the Vars produced by to_tape(), so a layer can be
// applied to any parameter snapshot with the right structure.
class ParamSet {
 public:
  size_t add(std::string name, Tensor value);

  size_t size() const { return items_.size(); }
  const std::string& name(size_t i) const { return items_[i].name; }
  const Tensor& value(size_t i) const { return items_[i].value; }
  Tensor& value(size_t i) { return items_[i].value; }
  const Tensor& value(const std::string& name) const;
  int64_t total_elements() const;
  bool same_structure(const ParamSet& other) const;

  // Places every entry on the tape as a differentiable leaf, in order.
  std::vector<Var> to_tape(Tape& tape, bool requires_grad = true) const;
  // Copies values back (e.g. the post-update parameters read off the tape).
  void set_values(std::span<const Var> vars);
  void set_values(const std::vector<Tensor>& values);

  // Text checkpoint: count, then per entry one header line
  // (name rank dims...) and one line of row-major values.
  void save(const std::string& path) const;
  static ParamSet load(const std::string& path);

 private:
  struct Item {
    std::string name;
    Tensor value;
  };
  std::vector<Item> items_;
};

// Weights ~ truncated-normal(|z|<=2) / sqrt(fan_in); biases are zero-filled
// by the layers themselves.
Tensor init_weight(Shape shape, int64_t fan_in, std::mt19937_64& rng);

class Linear {
 public:
  Linear() = default;
  Linear(ParamSet& ps, const std::string& prefix, int64_t in, int64_t out,
         std::mt19937_64& rng);
  // x: [N, in] -> [N, out]
  Var operator()(std::span<const Var> params, Var x) const;
  int64_t in_dim() const { return in_; }
  int64_t out_dim() const { return out_; }

 private:
  size_t w_ = 0, b_ = 0;
  int64_t in_ = 0, out_ = 0;
};

// Stack of linear layers with tanh between them; tanh after the last layer
// only when activate_output is set (torso use).
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamSet& ps, const std::string& prefix, int64_t in,
      const std::vector<int64_t>& hidden, int64_t out, std::mt19937_64& rng,
      bool activate_output = false);
  Var operator()(std::span<const Var> params, Var x) const;
  int64_t out_dim() const;

 private:
  std::vector<Linear> layers_;
  bool activate_output_ = false;
};

// Standard LSTM cell. The packed gate layout along the 4H axis is
// [input | forget | candidate | output].
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(ParamSet& ps, const std::string& prefix, int64_t in, int64_t hidden,
           std::mt19937_64& rng);

  struct State {
    Var h, c;  // [1, hidden]
  };
  State initial_state(Tape& tape) const;  // zeros
  State step(std::span<const Var> params, Var x, const State& s) const;
  int64_t hidden_size() const { return hidden_; }

 private:
  size_t wx_ = 0, wh_ = 0, b_ = 0;
  int64_t in_ = 0, hidden_ = 0;
};

// Which per-step features the meta-network consumes. Prediction experiments
// use {reward, discount, next value}; the off-policy variant also feeds the
// target- and behavior-policy probabilities of the taken action.
struct MetaInputSpec {
  bool policy_probs = false;
  int64_t count() const { return policy_probs ? 5 : 3; }
};

// Per-step feature columns, each rank-1 [T], already on the tape. The
// next_values column is v(S_{t+1}) and stays differentiable: gradient must
// flow from the target into the value network.
struct MetaInputs {
  Var rewards;
  Var discounts;
  Var next_values;
  Var pi_probs;  // only read when the spec asks for policy features
  Var mu_probs;
};

// The meta-network g_eta: an LSTM run across the trajectory in reverse time
// order from a zero initial state, with a linear readout per step producing
// one scalar target; outputs are returned in forward time order.
class MetaNetwork {
 public:
  MetaNetwork() = default;
  MetaNetwork(ParamSet& eta, int64_t hidden, MetaInputSpec spec,
              std::mt19937_64& rng);
  // -> [T] targets
  Var operator()(std::span<const Var> eta_params, const MetaInputs& in) const;
  const MetaInputSpec& input_spec() const { return spec_; }

 private:
  LstmCell cell_;
  Linear readout_;
  MetaInputSpec spec_;
};

// Agent network: optional tanh MLP torso, a scalar value head, and an
// optional action head (policy logits, or q-values in value-control mode).
struct AgentNetConfig {
  int64_t obs_dim = 0;
  std::vector<int64_t> hidden;  // empty -> heads read the observation
  int64_t n_actions = 0;        // 0 -> value head only
};

class AgentNetwork {
 public:
  AgentNetwork() = default;
  AgentNetwork(ParamSet& theta, const AgentNetConfig& cfg,
               std::mt19937_64& rng);
  // obs [N, obs_dim] -> values [N]
  Var values(std::span<const Var> params, Var obs) const;
  // obs [N, obs_dim] -> scores [N, A] (policy logits or q-values)
  Var action_scores(std::span<const Var> params, Var obs) const;
  const AgentNetConfig& config() const { return cfg_; }

 private:
  Var torso_out(std::span<const Var> params, Var obs) const;
  AgentNetConfig cfg_;
  Mlp torso_;
  Linear value_head_;
  Linear action_head_;
};

}  // namespace frodolab
