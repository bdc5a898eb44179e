#include "frodolab/optim.hpp"

#include <cmath>

namespace frodolab {

namespace {

void check_sizes(size_t params, size_t grads, const char* what) {
  if (params != grads) {
    throw Error(std::string(what) + ": " + std::to_string(params) +
                " params vs " + std::to_string(grads) + " grads");
  }
}

}  // namespace

std::vector<Var> sgd_update(std::span<const Var> params,
                            std::span<const Var> grads, double lr) {
  check_sizes(params.size(), grads.size(), "sgd_update");
  std::vector<Var> out;
  out.reserve(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    out.push_back(sub(params[i], mul(grads[i], scalar_like(grads[i], lr))));
  }
  return out;
}

RmsPropTapeResult rmsprop_update(const OptimConfig& cfg, DiffPolicy policy,
                                 std::span<const Var> params,
                                 std::span<const Var> grads,
                                 const RmsPropTapeState& state) {
  check_sizes(params.size(), grads.size(), "rmsprop_update");
  check_sizes(params.size(), state.acc.size(), "rmsprop_update acc");
  bool use_momentum = cfg.momentum != 0.0;
  if (use_momentum) {
    check_sizes(params.size(), state.vel.size(), "rmsprop_update vel");
  }
  RmsPropTapeResult res;
  res.params.reserve(params.size());
  res.state.acc.reserve(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    Var g = grads[i];
    Var acc = add(mul(state.acc[i], scalar_like(g, cfg.decay)),
                  mul(square(g), scalar_like(g, 1.0 - cfg.decay)));
    if (policy == DiffPolicy::kStopGradAccumulators) acc = stop_gradient(acc);
    Var step = div(mul(g, scalar_like(g, cfg.lr)),
                   add(sqrt(acc), scalar_like(g, cfg.eps)));
    if (use_momentum) {
      Var vel = add(mul(state.vel[i], scalar_like(g, cfg.momentum)), step);
      res.state.vel.push_back(vel);
      step = vel;
    }
    res.params.push_back(sub(params[i], step));
    res.state.acc.push_back(acc);
  }
  return res;
}

std::vector<Var> clip_global_norm(std::span<const Var> grads,
                                  double max_norm) {
  if (max_norm <= 0) throw Error("clip_global_norm: max_norm must be > 0");
  if (grads.empty()) return {};
  Var sq;
  for (const Var& g : grads) {
    Var s = sum(square(g));
    sq = sq.valid() ? add(sq, s) : s;
  }
  Var norm = sqrt(sq);
  // max_norm / max(norm, max_norm): 1 below the threshold, shrink above.
  Var scale = div(scalar_like(norm, max_norm),
                  maximum(norm, scalar_like(norm, max_norm)));
  std::vector<Var> out;
  out.reserve(grads.size());
  for (const Var& g : grads) out.push_back(mul(g, scale));
  return out;
}

double global_norm(const std::vector<Tensor>& grads) {
  double sq = 0.0;
  for (const Tensor& g : grads) {
    for (double v : g.data()) sq += v * v;
  }
  return std::sqrt(sq);
}

double clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  if (max_norm <= 0) throw Error("clip_global_norm: max_norm must be > 0");
  double norm = global_norm(grads);
  if (norm > max_norm) {
    double scale = max_norm / norm;
    for (Tensor& g : grads) {
      for (double& v : g.data()) v *= scale;
    }
  }
  return norm;
}

void sgd_apply(ParamSet& params, const std::vector<Tensor>& grads, double lr) {
  check_sizes(params.size(), grads.size(), "sgd_apply");
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.value(i);
    const Tensor& g = grads[i];
    if (!p.same_shape(g)) throw Error("sgd_apply: shape mismatch at " + params.name(i));
    for (int64_t k = 0; k < p.numel(); ++k) {
      p.data()[static_cast<size_t>(k)] -= lr * g.data()[static_cast<size_t>(k)];
    }
  }
}

RmsProp::RmsProp(OptimConfig cfg, const ParamSet& shape_of) : cfg_(cfg) {
  for (size_t i = 0; i < shape_of.size(); ++i) {
    acc_.push_back(Tensor::zeros(shape_of.value(i).shape()));
    if (cfg_.momentum != 0.0) {
      vel_.push_back(Tensor::zeros(shape_of.value(i).shape()));
    }
  }
}

void RmsProp::apply(ParamSet& params, const std::vector<Tensor>& grads) {
  check_sizes(params.size(), grads.size(), "rmsprop apply");
  check_sizes(params.size(), acc_.size(), "rmsprop apply acc");
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.value(i);
    const Tensor& g = grads[i];
    if (!p.same_shape(g)) {
      throw Error("rmsprop apply: shape mismatch at " + params.name(i));
    }
    for (int64_t k = 0; k < p.numel(); ++k) {
      size_t j = static_cast<size_t>(k);
      double gv = g.data()[j];
      double a = cfg_.decay * acc_[i].data()[j] + (1.0 - cfg_.decay) * gv * gv;
      acc_[i].data()[j] = a;
      double step = cfg_.lr * gv / (std::sqrt(a) + cfg_.eps);
      if (cfg_.momentum != 0.0) {
        double vel = cfg_.momentum * vel_[i].data()[j] + step;
        vel_[i].data()[j] = vel;
        step = vel;
      }
      p.data()[j] -= step;
    }
  }
}

}  // namespace frodolab
