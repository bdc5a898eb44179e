#include "frodolab/nn.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "frodolab/rng.hpp"

namespace frodolab {

size_t ParamSet::add(std::string name, Tensor value) {
  for (const Item& it : items_) {
    if (it.name == name) throw Error("duplicate parameter name: " + name);
  }
  items_.push_back({std::move(name), std::move(value)});
  return items_.size() - 1;
}

const Tensor& ParamSet::value(const std::string& name) const {
  for (const Item& it : items_) {
    if (it.name == name) return it.value;
  }
  throw Error("no parameter named: " + name);
}

int64_t ParamSet::total_elements() const {
  int64_t n = 0;
  for (const Item& it : items_) n += it.value.numel();
  return n;
}

bool ParamSet::same_structure(const ParamSet& other) const {
  if (items_.size() != other.items_.size()) return false;
  for (size_t i = 0; i < items_.size(); ++i) {
    if (items_[i].name != other.items_[i].name ||
        items_[i].value.shape() != other.items_[i].value.shape()) {
      return false;
    }
  }
  return true;
}

std::vector<Var> ParamSet::to_tape(Tape& tape, bool requires_grad) const {
  std::vector<Var> vars;
  vars.reserve(items_.size());
  for (const Item& it : items_) vars.push_back(tape.leaf(it.value, requires_grad));
  return vars;
}

void ParamSet::set_values(std::span<const Var> vars) {
  if (vars.size() != items_.size()) {
    throw Error("set_values: expected " + std::to_string(items_.size()) +
                " entries, got " + std::to_string(vars.size()));
  }
  for (size_t i = 0; i < items_.size(); ++i) {
    if (vars[i].value().shape() != items_[i].value.shape()) {
      throw Error("set_values: shape mismatch at " + items_[i].name);
    }
    items_[i].value = vars[i].value();
  }
}

void ParamSet::set_values(const std::vector<Tensor>& values) {
  if (values.size() != items_.size()) {
    throw Error("set_values: entry count mismatch");
  }
  for (size_t i = 0; i < items_.size(); ++i) {
    if (values[i].shape() != items_[i].value.shape()) {
      throw Error("set_values: shape mismatch at " + items_[i].name);
    }
    items_[i].value = values[i];
  }
}

void ParamSet::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint: " + path);
  out << "frodolab-params 1\n" << items_.size() << "\n";
  char buf[32];
  for (const Item& it : items_) {
    out << it.name << " " << it.value.rank();
    for (int64_t d : it.value.shape()) out << " " << d;
    out << "\n";
    for (size_t k = 0; k < it.value.data().size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", it.value.data()[k]);
      out << (k ? " " : "") << buf;
    }
    out << "\n";
  }
  if (!out) throw Error("failed writing checkpoint: " + path);
}

ParamSet ParamSet::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read checkpoint: " + path);
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "frodolab-params" || version != 1) {
    throw Error("bad checkpoint header in " + path);
  }
  size_t count = 0;
  in >> count;
  ParamSet ps;
  for (size_t i = 0; i < count; ++i) {
    std::string name;
    int rank = 0;
    in >> name >> rank;
    Shape shape(static_cast<size_t>(rank));
    for (int d = 0; d < rank; ++d) in >> shape[static_cast<size_t>(d)];
    int64_t n = shape_numel(shape);
    std::vector<double> data(static_cast<size_t>(n));
    for (int64_t k = 0; k < n; ++k) in >> data[static_cast<size_t>(k)];
    if (!in) throw Error("truncated checkpoint: " + path);
    ps.add(name, Tensor(std::move(shape), std::move(data)));
  }
  return ps;
}

Tensor init_weight(Shape shape, int64_t fan_in, std::mt19937_64& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  // Truncation at |z|<=2 shrinks the unit normal's stddev to ~0.8796;
  // dividing it back out makes the realized variance 1/fan_in.
  constexpr double kTruncStd = 0.87962566103423978;
  double scale = 1.0 / (kTruncStd * std::sqrt(static_cast<double>(fan_in)));
  for (double& v : t.data()) v = truncated_normal(rng) * scale;
  return t;
}

Linear::Linear(ParamSet& ps, const std::string& prefix, int64_t in,
               int64_t out, std::mt19937_64& rng)
    : in_(in), out_(out) {
  w_ = ps.add(prefix + "/w", init_weight({in, out}, in, rng));
  b_ = ps.add(prefix + "/b", Tensor::zeros({out}));
}

Var Linear::operator()(std::span<const Var> params, Var x) const {
  Var w = params[w_], b = params[b_];
  Var y = matmul(x, w);
  return add(y, repeat_axis(b, 0, y.value().rows()));
}

Mlp::Mlp(ParamSet& ps, const std::string& prefix, int64_t in,
         const std::vector<int64_t>& hidden, int64_t out, std::mt19937_64& rng,
         bool activate_output)
    : activate_output_(activate_output) {
  int64_t prev = in;
  for (size_t i = 0; i < hidden.size(); ++i) {
    layers_.emplace_back(ps, prefix + "/l" + std::to_string(i), prev, hidden[i], rng);
    prev = hidden[i];
  }
  layers_.emplace_back(ps, prefix + "/l" + std::to_string(hidden.size()), prev, out, rng);
}

Var Mlp::operator()(std::span<const Var> params, Var x) const {
  for (size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i](params, x);
    if (i + 1 < layers_.size() || activate_output_) x = tanh(x);
  }
  return x;
}

int64_t Mlp::out_dim() const { return layers_.back().out_dim(); }

LstmCell::LstmCell(ParamSet& ps, const std::string& prefix, int64_t in,
                   int64_t hidden, std::mt19937_64& rng)
    : in_(in), hidden_(hidden) {
  wx_ = ps.add(prefix + "/wx", init_weight({in, 4 * hidden}, in, rng));
  wh_ = ps.add(prefix + "/wh", init_weight({hidden, 4 * hidden}, hidden, rng));
  b_ = ps.add(prefix + "/b", Tensor::zeros({4 * hidden}));
}

LstmCell::State LstmCell::initial_state(Tape& tape) const {
  Var z = tape.constant(Tensor::zeros({1, hidden_}));
  return {z, z};
}

LstmCell::State LstmCell::step(std::span<const Var> params, Var x,
                               const State& s) const {
  if (x.value().rank() != 2 || x.value().cols() != in_) {
    throw Error("lstm step: input shape " + shape_str(x.shape()) +
                " does not match input size " + std::to_string(in_));
  }
  Var z = add(add(matmul(x, params[wx_]), matmul(s.h, params[wh_])),
              repeat_axis(params[b_], 0, 1));
  int64_t h = hidden_;
  Var i = sigmoid(slice(z, 1, 0, h));
  Var f = sigmoid(slice(z, 1, h, 2 * h));
  Var g = tanh(slice(z, 1, 2 * h, 3 * h));
  Var o = sigmoid(slice(z, 1, 3 * h, 4 * h));
  Var c = add(mul(f, s.c), mul(i, g));
  return {mul(o, tanh(c)), c};
}

MetaNetwork::MetaNetwork(ParamSet& eta, int64_t hidden, MetaInputSpec spec,
                         std::mt19937_64& rng)
    : spec_(spec) {
  cell_ = LstmCell(eta, "meta/lstm", spec.count(), hidden, rng);
  readout_ = Linear(eta, "meta/readout", hidden, 1, rng);
}

Var MetaNetwork::operator()(std::span<const Var> eta_params,
                            const MetaInputs& in) const {
  if (!in.rewards.valid() || !in.discounts.valid() || !in.next_values.valid()) {
    throw Error("meta forward: missing feature column");
  }
  int64_t t_len = in.rewards.value().numel();
  auto column = [&](Var v, const char* what) {
    if (v.value().rank() != 1 || v.value().numel() != t_len) {
      throw Error(std::string("meta forward: ") + what + " has shape " +
                  shape_str(v.shape()) + ", want [" + std::to_string(t_len) + "]");
    }
    return reshape(v, {t_len, 1});
  };
  std::vector<Var> cols = {column(in.rewards, "rewards"),
                           column(in.discounts, "discounts"),
                           column(in.next_values, "next values")};
  if (spec_.policy_probs) {
    if (!in.pi_probs.valid() || !in.mu_probs.valid()) {
      throw Error("meta forward: input spec asks for policy probabilities");
    }
    cols.push_back(column(in.pi_probs, "target policy probs"));
    cols.push_back(column(in.mu_probs, "behavior policy probs"));
  }
  Var feats = reverse(concat(cols, 1));  // [T, F], reverse time order

  Tape& tape = *in.rewards.tape();
  LstmCell::State state = cell_.initial_state(tape);
  std::vector<Var> outputs(static_cast<size_t>(t_len));
  for (int64_t step = 0; step < t_len; ++step) {
    Var x = slice(feats, 0, step, step + 1);
    state = cell_.step(eta_params, x, state);
    // step walks reverse time, so this readout belongs at t = T-1-step
    outputs[static_cast<size_t>(t_len - 1 - step)] = readout_(eta_params, state.h);
  }
  return reshape(concat(outputs, 0), {t_len});
}

AgentNetwork::AgentNetwork(ParamSet& theta, const AgentNetConfig& cfg,
                           std::mt19937_64& rng)
    : cfg_(cfg) {
  int64_t feat = cfg.obs_dim;
  if (!cfg.hidden.empty()) {
    std::vector<int64_t> inner(cfg.hidden.begin(), cfg.hidden.end() - 1);
    torso_ = Mlp(theta, "agent/torso", cfg.obs_dim, inner, cfg.hidden.back(),
                 rng, /*activate_output=*/true);
    feat = cfg.hidden.back();
  }
  value_head_ = Linear(theta, "agent/value", feat, 1, rng);
  if (cfg.n_actions > 0) {
    action_head_ = Linear(theta, "agent/action", feat, cfg.n_actions, rng);
  }
}

Var AgentNetwork::torso_out(std::span<const Var> params, Var obs) const {
  return cfg_.hidden.empty() ? obs : torso_(params, obs);
}

Var AgentNetwork::values(std::span<const Var> params, Var obs) const {
  Var v = value_head_(params, torso_out(params, obs));
  return reshape(v, {v.value().rows()});
}

Var AgentNetwork::action_scores(std::span<const Var> params, Var obs) const {
  if (cfg_.n_actions <= 0) throw Error("agent has no action head");
  return action_head_(params, torso_out(params, obs));
}

}  // namespace frodolab
