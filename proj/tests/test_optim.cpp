#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "fd_check.hpp"
#include "frodolab/nn.hpp"
#include "frodolab/optim.hpp"
#include "frodolab/ops.hpp"
#include "frodolab/rng.hpp"
#include "frodolab/tape.hpp"

using namespace frodolab;

namespace {

std::vector<Var> as_vars(Tape& tape, const std::vector<Tensor>& ts,
                         bool requires_grad = true) {
  std::vector<Var> out;
  for (const Tensor& t : ts) out.push_back(tape.leaf(t, requires_grad));
  return out;
}

}  // namespace

TEST_CASE("sgd: arithmetic, zero grads, d theta'/d g = -lr") {
  Tape tape;
  Var theta = tape.leaf(Tensor::scalar(1.0));
  Var g = tape.leaf(Tensor::scalar(2.0));
  std::vector<Var> updated = sgd_update(std::vector<Var>{theta},
                                        std::vector<Var>{g}, 0.1);
  CHECK(updated[0].item() == doctest::Approx(0.8).epsilon(1e-15));

  Var zero = tape.leaf(Tensor::scalar(0.0));
  CHECK(sgd_update(std::vector<Var>{theta}, std::vector<Var>{zero}, 0.1)[0]
            .item() == 1.0);

  auto grads = tape.backward(updated[0], std::vector<Var>{g});
  CHECK(grads[0].item() == doctest::Approx(-0.1).epsilon(1e-15));

  CHECK_THROWS_AS(sgd_update(std::vector<Var>{theta}, std::vector<Var>{}, 0.1),
                  Error);
}

TEST_CASE("rmsprop on-tape: worked arithmetic and purity") {
  OptimConfig cfg;
  cfg.lr = 0.5;
  cfg.decay = 0.0;
  cfg.eps = 1.0;

  Tape tape;
  Var theta = tape.leaf(Tensor::scalar(2.0));
  Var g = tape.leaf(Tensor::scalar(3.0));
  RmsPropTapeState state;
  state.acc.push_back(tape.constant(Tensor::scalar(7.0)));  // decay 0 erases it

  auto run = [&]() {
    return rmsprop_update(cfg, DiffPolicy::kFull, std::vector<Var>{theta},
                          std::vector<Var>{g}, state);
  };
  RmsPropTapeResult res = run();
  // acc' = 0*7 + 1*9 = 9; step = lr*3/(sqrt(9)+1) = lr*3/4
  CHECK(res.state.acc[0].item() == doctest::Approx(9.0).epsilon(1e-15));
  CHECK(res.params[0].item() ==
        doctest::Approx(2.0 - 0.5 * 3.0 / 4.0).epsilon(1e-15));

  RmsPropTapeResult again = run();
  CHECK(again.params[0].value().data() == res.params[0].value().data());
  CHECK(again.state.acc[0].value().data() == res.state.acc[0].value().data());

  // Zero gradient: theta unchanged, accumulator decays.
  cfg.decay = 0.9;
  Var gz = tape.leaf(Tensor::scalar(0.0));
  RmsPropTapeResult zres = rmsprop_update(
      cfg, DiffPolicy::kFull, std::vector<Var>{theta}, std::vector<Var>{gz}, state);
  CHECK(zres.params[0].item() == 2.0);
  CHECK(zres.state.acc[0].item() == doctest::Approx(0.9 * 7.0).epsilon(1e-15));
}

TEST_CASE("rmsprop on-tape matches the off-tape optimizer step for step") {
  OptimConfig cfg;
  cfg.lr = 1e-2;
  cfg.decay = 0.99;
  cfg.eps = 0.1;

  std::mt19937_64 rng(5);
  ParamSet ps;
  ps.add("w", Tensor({2, 2}, {0.3, -1.2, 0.8, 0.05}));
  ps.add("b", Tensor::from_vector({0.4, -0.7}));
  std::vector<Tensor> grads = {Tensor({2, 2}, {1.0, -2.0, 0.25, 3.0}),
                               Tensor::from_vector({-0.5, 0.9})};
  (void)rng;

  // Two consecutive steps through the stateful class...
  ParamSet off = ps;
  RmsProp opt(cfg, off);
  opt.apply(off, grads);
  opt.apply(off, grads);

  // ...and the same two steps unrolled on a tape.
  Tape tape;
  std::vector<Var> params = ps.to_tape(tape);
  std::vector<Var> gvars = as_vars(tape, grads, /*requires_grad=*/false);
  RmsPropTapeState state;
  for (const Var& p : params) {
    state.acc.push_back(tape.constant(Tensor::zeros(p.shape())));
  }
  RmsPropTapeResult r1 = rmsprop_update(cfg, DiffPolicy::kStopGradAccumulators,
                                        params, gvars, state);
  RmsPropTapeResult r2 = rmsprop_update(cfg, DiffPolicy::kStopGradAccumulators,
                                        r1.params, gvars, r1.state);
  for (size_t i = 0; i < ps.size(); ++i) {
    const Tensor& want = off.value(i);
    const Tensor& got = r2.params[i].value();
    REQUIRE(got.same_shape(want));
    for (int64_t k = 0; k < want.numel(); ++k) {
      CHECK(got.data()[static_cast<size_t>(k)] ==
            doctest::Approx(want.data()[static_cast<size_t>(k)]).epsilon(1e-14));
    }
  }
}

TEST_CASE("diff policies: identical forward values, different meta-gradients") {
  // Inner problem: theta' after one rmsprop step on loss 0.5*(theta*eta)^2,
  // outer loss (theta')^2; differentiate w.r.t. eta.
  OptimConfig cfg;
  cfg.lr = 0.1;
  cfg.decay = 0.9;
  cfg.eps = 0.2;

  auto run = [&](DiffPolicy policy) {
    Tape tape;
    Var eta = tape.leaf(Tensor::scalar(0.7));
    Var theta = tape.leaf(Tensor::scalar(1.3));
    Var inner = mul(scalar_like(theta, 0.5), square(mul(theta, eta)));
    auto g = tape.backward(inner, std::vector<Var>{theta}, /*create_graph=*/true);
    RmsPropTapeState state;
    state.acc.push_back(tape.constant(Tensor::scalar(0.4)));
    RmsPropTapeResult res =
        rmsprop_update(cfg, policy, std::vector<Var>{theta}, g, state);
    Var outer = square(res.params[0]);
    auto meta = tape.backward(outer, std::vector<Var>{eta});
    return std::pair<double, double>(res.params[0].item(), meta[0].item());
  };

  auto [theta_full, meta_full] = run(DiffPolicy::kFull);
  auto [theta_stop, meta_stop] = run(DiffPolicy::kStopGradAccumulators);
  CHECK(theta_full == theta_stop);
  CHECK(std::isfinite(meta_full));
  CHECK(std::isfinite(meta_stop));
  CHECK(meta_full != meta_stop);
  CHECK(std::abs(meta_stop) > 1e-10);

  // The stop-grad meta-gradient agrees with finite differences of the same
  // two-level computation (the full policy is FD-checked at the frodo level).
  auto outer_of_eta = [&](double eta_val, DiffPolicy policy) {
    Tape tape;
    Var eta = tape.leaf(Tensor::scalar(eta_val));
    Var theta = tape.leaf(Tensor::scalar(1.3));
    Var inner = mul(scalar_like(theta, 0.5), square(mul(theta, eta)));
    auto g = tape.backward(inner, std::vector<Var>{theta}, /*create_graph=*/true);
    RmsPropTapeState state;
    state.acc.push_back(tape.constant(Tensor::scalar(0.4)));
    RmsPropTapeResult res =
        rmsprop_update(cfg, policy, std::vector<Var>{theta}, g, state);
    return square(res.params[0]).item();
  };
  double h = 1e-6;
  double fd_full = (outer_of_eta(0.7 + h, DiffPolicy::kFull) -
                    outer_of_eta(0.7 - h, DiffPolicy::kFull)) /
                   (2 * h);
  CHECK(fdcheck::rel_error(meta_full, fd_full) < 1e-6);
}

TEST_CASE("clip_global_norm: identity below threshold, 3-4-5 rescale") {
  Tape tape;
  Var g1 = tape.leaf(Tensor::from_vector({3.0, 4.0}));  // norm 5

  auto same = clip_global_norm(std::vector<Var>{g1}, 10.0);
  CHECK(same[0].value().data() == std::vector<double>{3.0, 4.0});

  auto clipped = clip_global_norm(std::vector<Var>{g1}, 1.0);
  CHECK(clipped[0].value().data()[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(clipped[0].value().data()[1] == doctest::Approx(0.8).epsilon(1e-15));

  // Norm split across several tensors; post-norm never exceeds the cap.
  std::mt19937_64 rng(6);
  std::vector<Var> gs;
  for (int i = 0; i < 3; ++i) {
    Tensor t = Tensor::zeros({4});
    for (double& v : t.data()) v = 4.0 * unit_uniform(rng) - 2.0;
    gs.push_back(tape.leaf(t));
  }
  for (double cap : {0.5, 2.0, 100.0}) {
    auto out = clip_global_norm(gs, cap);
    double sq = 0.0;
    for (const Var& g : out) {
      for (double v : g.value().data()) sq += v * v;
    }
    CHECK(std::sqrt(sq) <= cap * (1 + 1e-12));
  }

  CHECK_THROWS_AS(clip_global_norm(gs, 0.0), Error);

  // Off-tape variant: same 3-4-5 case, returns the pre-clip norm.
  std::vector<Tensor> tg = {Tensor::from_vector({3.0, 4.0})};
  double pre = clip_global_norm(tg, 1.0);
  CHECK(pre == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(tg[0].data()[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(global_norm(tg) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("clip is differentiable on both sides of the threshold") {
  // Below the cap the op is the identity; above it the scaling itself
  // depends on the gradients, and both regimes must back-propagate.
  for (double cap : {10.0, 1.0}) {
    auto loss = [cap](Tape& tape, const std::vector<Var>& leaves) {
      (void)tape;
      auto out = clip_global_norm(leaves, cap);
      Var s;
      for (const Var& o : out) {
        Var term = sum(square(o));
        s = s.valid() ? add(s, term) : term;
      }
      return s;
    };
    CHECK(fdcheck::max_grad_error(loss, {Tensor::from_vector({3.0, 4.0}),
                                         Tensor::from_vector({-1.0, 0.5})}) <
          1e-6);
  }
}

TEST_CASE("meta-gradient flows through a chain of on-tape updates") {
  // M sgd steps on a quadratic whose curvature is set by eta; the outer loss
  // evaluates the final iterate. FD-checks d outer / d eta end to end.
  auto run = [](double eta_val, int m_steps, bool want_grad) {
    Tape tape;
    Var eta = tape.leaf(Tensor::scalar(eta_val));
    Var theta = tape.leaf(Tensor::scalar(2.0));
    std::vector<Var> cur = {theta};
    for (int m = 0; m < m_steps; ++m) {
      Var inner = mul(scalar_like(eta, 0.5), square(mul(cur[0], eta)));
      auto g = tape.backward(inner, cur, /*create_graph=*/true);
      cur = sgd_update(cur, g, 0.25);
    }
    Var outer = square(sub(cur[0], scalar_like(cur[0], 0.3)));
    if (!want_grad) return outer.item();
    auto meta = tape.backward(outer, std::vector<Var>{eta});
    return meta[0].item();
  };

  for (int m : {1, 2, 5}) {
    double ad = run(0.8, m, true);
    double h = 1e-6;
    double fd = (run(0.8 + h, m, false) - run(0.8 - h, m, false)) / (2 * h);
    CHECK(std::isfinite(ad));
    CHECK(std::abs(ad) > 1e-10);
    CHECK(fdcheck::rel_error(ad, fd) < 1e-6);
  }
}
