#include "frodolab/td_lambda.hpp"

#include <cmath>

#include "frodolab/tensor.hpp"

namespace frodolab {

TdLambdaTable::TdLambdaTable(int64_t n_states, double lambda, double lr)
    : lambda_(lambda), lr_(lr) {
  if (n_states < 1) throw Error("td_lambda: need at least one state");
  if (lambda < 0.0 || lambda > 1.0) throw Error("td_lambda: lambda in [0,1]");
  v_.assign(static_cast<size_t>(n_states), 0.0);
  e_.assign(static_cast<size_t>(n_states), 0.0);
}

void TdLambdaTable::update(int64_t s, double reward, bool done,
                           int64_t s_next) {
  auto idx = [&](int64_t i) {
    if (i < 0 || i >= static_cast<int64_t>(v_.size()))
      throw Error("td_lambda: state out of range");
    return static_cast<size_t>(i);
  };
  double bootstrap = done ? 0.0 : v_[idx(s_next)];
  double delta = reward + bootstrap - v_[idx(s)];
  for (double& e : e_) e *= lambda_;
  e_[idx(s)] += 1.0;
  for (size_t i = 0; i < v_.size(); ++i) v_[i] += lr_ * delta * e_[i];
  if (done) {
    for (double& e : e_) e = 0.0;
  }
}

TdLambdaResult td_lambda_learner(WalkEnv& env, double lambda, double lr,
                                 int64_t steps, uint64_t seed,
                                 int64_t log_every) {
  if (log_every < 1) throw Error("td_lambda: log_every must be positive");
  std::mt19937_64 rng(seed);
  TdLambdaTable table(env.obs_dim(), lambda, lr);
  TdLambdaResult out;
  std::vector<double> avg_sum(static_cast<size_t>(env.obs_dim()), 0.0);
  int64_t avg_count = 0;
  int64_t avg_from = steps - steps / 10;

  for (int64_t step = 0; step < steps; ++step) {
    if (env.needs_reset()) env.reset(rng);
    int64_t s = env.state().position - 1;
    StepOutcome o = env.step(0, rng);
    int64_t s_next = o.done ? 0 : env.state().position - 1;
    table.update(s, o.reward, o.done, s_next);
    if (step >= avg_from) {
      for (size_t i = 0; i < avg_sum.size(); ++i)
        avg_sum[i] += table.values()[i];
      ++avg_count;
    }
    if (o.done) {
      out.episode_returns.push_back(env.episode_return());
      out.episode_end_steps.push_back(step + 1);
    }
    if ((step + 1) % log_every == 0) {
      Tensor truth = walk_true_values(env.current_left_reward());
      double mse = 0.0;
      for (size_t i = 0; i < 5; ++i) {
        double d = table.values()[i] - truth.data()[i];
        mse += d * d;
      }
      out.log_steps.push_back(step + 1);
      out.mse.push_back(mse / 5.0);
    }
  }
  out.values = table.values();
  out.avg_values = table.values();
  if (avg_count > 0) {
    for (size_t i = 0; i < avg_sum.size(); ++i)
      out.avg_values[i] = avg_sum[i] / static_cast<double>(avg_count);
  }
  return out;
}

}  // namespace frodolab
