#pragma once

#include <cstdint>
#include <vector>

#include "frodolab/envs.hpp"

namespace frodolab {

// Tabular TD(λ) with accumulating eligibility traces on an undiscounted
// episodic chain. States are 0-based indices; traces clear at episode ends.
class TdLambdaTable {
 public:
  TdLambdaTable(int64_t n_states, double lambda, double lr);

  void update(int64_t s, double reward, bool done, int64_t s_next);
  const std::vector<double>& values() const { return v_; }
  const std::vector<double>& traces() const { return e_; }

 private:
  double lambda_ = 0.0;
  double lr_ = 0.0;
  std::vector<double> v_;
  std::vector<double> e_;
};

struct TdLambdaResult {
  std::vector<double> values;       // final table
  // Iterate average over the final tenth of the run. With a constant step
  // size the table keeps bouncing around the fixed point; the averaged
  // iterate is the convergent quantity to report.
  std::vector<double> avg_values;
  std::vector<int64_t> log_steps;   // env steps at each log point
  std::vector<double> mse;          // vs the phase-correct true values
  std::vector<double> episode_returns;
  std::vector<int64_t> episode_end_steps;
};

// Runs accumulating-trace TD(λ) on the walk for `steps` environment steps,
// logging the value MSE against the true values of the current phase.
TdLambdaResult td_lambda_learner(WalkEnv& env, double lambda, double lr,
                                 int64_t steps, uint64_t seed,
                                 int64_t log_every = 1000);

}  // namespace frodolab
