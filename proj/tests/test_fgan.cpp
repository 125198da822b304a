#include "doctest.h"

#include <cmath>

#include "fdivmin/errors.hpp"
#include "fdivmin/experiments.hpp"
#include "fdivmin/fgan.hpp"
#include "fdivmin/rng.hpp"

using namespace fdivmin;

TEST_CASE("activation nodes match the scalar activation on a grid") {
  for (const auto& spec : all_divergences()) {
    Tape t;
    std::vector<double> grid;
    for (double v = -15.0; v <= 15.0; v += 0.73) grid.push_back(v);
    NodeId v = t.constant(Tensor::vector(std::vector<double>(grid)));
    NodeId act_node = fgan_activation(t, spec, v);
    NodeId conj_node = fgan_conjugate_of_activation(t, spec, v);
    Tensor act = t.value(act_node);  // copies: later nodes may reallocate
    Tensor conj = t.value(conj_node);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      double g = output_activation_eval(spec, grid[i]);
      CHECK(act[i] == doctest::Approx(g).epsilon(1e-10));
      CHECK(conj[i] == doctest::Approx(conjugate_eval(spec, g))
                           .epsilon(1e-10));
      CHECK(std::isfinite(conj[i]));
    }
  }
}

TEST_CASE("activation and conjugate nodes are differentiable") {
  ParameterSet ps;
  ps.add("v", Tensor::vector({-2.0, -0.3, 0.4, 1.7}), Role::phi);
  for (const auto& spec : all_divergences()) {
    auto build = [&](Tape& t, const ParameterSet& p) {
      NodeId v = t.param(p, "v");
      return t.add(t.sum(fgan_activation(t, spec, v)),
                   t.sum(fgan_conjugate_of_activation(t, spec, v)));
    };
    CHECK(gradient_check(build, ps) <= 1e-6);
  }
}

TEST_CASE("discriminator validates its divergence name eagerly") {
  CHECK_THROWS_AS(Discriminator("d", 1, {8}, "hellinger"),
                  ContractViolation);
}

TEST_CASE("variational lower bound stays below the exact divergence") {
  GaussianMixture target = GaussianMixture::two_gaussian_benchmark();
  GaussianModel1D model;
  Rng rng(23);
  for (const char* div : {"forward_kl", "reverse_kl", "js", "gan"}) {
    const FDivergenceSpec& spec = divergence_by_name(div);
    Discriminator disc("disc", 1, {16, 16}, div);
    ParameterSet ps;
    model.init_params(ps, 1.5, 0.8);
    disc.init_params(ps, rng);
    BoundEstimate est =
        lower_bound_estimate(spec, target, model, disc, ps, 20000, rng);
    double exact = exact_divergence_to_gaussian(div, target, 1.5, 0.8);
    CHECK(est.value - 3.0 * est.std_error <= exact);
    CHECK(std::isfinite(est.value));
  }
}

TEST_CASE("bound node is differentiable in model and critic parameters") {
  GaussianMixture target = GaussianMixture::two_gaussian_benchmark();
  GaussianModel1D model;
  Discriminator disc("disc", 1, {6}, "js");
  ParameterSet ps;
  Rng init(31);
  model.init_params(ps, 1.5, 0.8);
  disc.init_params(ps, init);
  const FDivergenceSpec& spec = divergence_by_name("js");
  auto build = [&](Tape& t, const ParameterSet& p) {
    Rng local(9);  // identical draws across finite-difference evaluations
    return fgan_bound_node(t, spec, target, model, disc, p, 64, local);
  };
  CHECK(gradient_check(build, ps) <= 1e-5);
}

TEST_CASE("short adversarial run improves the bound without diverging") {
  GaussianMixture target = GaussianMixture::two_gaussian_benchmark();
  GaussianModel1D model;
  Discriminator disc("disc", 1, {16, 16}, "js");
  ParameterSet ps;
  Rng rng(4);
  model.init_params(ps, 1.0, 1.0);
  disc.init_params(ps, rng);
  FganSchedule sched;
  sched.steps = 400;
  sched.batch = 64;
  FganResult res = fgan_train(divergence_by_name("js"), target, model, disc,
                              ps, sched, rng);
  CHECK(!res.diverged);
  REQUIRE(!res.trace.empty());
  CHECK(res.trace.back().step >= 399);
  // The model must move toward the target, not just stay finite. (The bound
  // itself is not monotone: it shrinks again as the model closes the gap.)
  double before = exact_divergence_to_gaussian("js", target, 1.0, 1.0);
  double after = exact_divergence_to_gaussian("js", target, model.mu(ps),
                                              model.sigma(ps));
  CHECK(after < before);
}
