#include "doctest.h"

#include <cmath>

#include "fdivmin/errors.hpp"
#include "fdivmin/experiments.hpp"
#include "fdivmin/rng.hpp"

using namespace fdivmin;

TEST_CASE("config parsing: comments, whitespace, typed getters") {
  ExperimentConfig cfg = ExperimentConfig::from_string(
      "# a comment\n"
      "divergence = js\n"
      "\n"
      "loop.theta_steps = 250\n"
      "opt.lr_theta = 5e-3\n"
      "encoder.hidden = 32,16\n"
      "seed = 12\n");
  CHECK(cfg.get_string("divergence", "x") == "js");
  CHECK(cfg.get_size("loop.theta_steps", 0) == 250);
  CHECK(cfg.get_double("opt.lr_theta", 0.0) == doctest::Approx(5e-3));
  CHECK(cfg.get_u64("seed", 0) == 12);
  std::vector<std::size_t> h = cfg.get_sizes("encoder.hidden", {});
  REQUIRE(h.size() == 2);
  CHECK(h[0] == 32);
  CHECK(h[1] == 16);
  // Fallbacks for absent keys.
  CHECK(cfg.get_double("spread.sigma", 0.25) == doctest::Approx(0.25));
  CHECK(!cfg.has("spread.sigma"));
}

TEST_CASE("unknown keys are hard errors, not silent defaults") {
  CHECK_THROWS_AS(ExperimentConfig::from_string("divergnce = js\n"),
                  ContractViolation);
  ExperimentConfig cfg;
  CHECK_THROWS_AS(cfg.set("opt.stepz", "10"), ContractViolation);
  CHECK_THROWS_AS(ExperimentConfig::from_string("not a key value line\n"),
                  ContractViolation);
}

TEST_CASE("serialize emits sorted key = value lines") {
  ExperimentConfig cfg = ExperimentConfig::from_string(
      "seed = 3\ndivergence = gan\n");
  CHECK(cfg.serialize() == "divergence = gan\nseed = 3\n");
}

TEST_CASE("mode coverage counts balls that reach the sample threshold") {
  // All samples in the first of three modes: one covered, fraction 1.
  Tensor centers = Tensor::matrix(3, 2, {0.0, 0.0, 5.0, 0.0, 0.0, 5.0});
  Tensor near_first = Tensor::zeros({40, 2});
  for (std::size_t i = 0; i < 40; ++i) {
    near_first(i, 0) = 0.01 * static_cast<double>(i % 5);
    near_first(i, 1) = 0.0;
  }
  ModeCoverageReport one = mode_coverage(near_first, centers, 0.02, 0.15);
  CHECK(one.covered == 1);
  CHECK(one.fractions[0] == doctest::Approx(1.0));
  CHECK(one.fractions[1] == doctest::Approx(0.0));

  // The centers themselves cover every mode.
  ModeCoverageReport all = mode_coverage(centers, centers, 0.02, 0.15);
  CHECK(all.covered == 3);

  // Samples outside every ball count toward nothing.
  Tensor far = Tensor::matrix(1, 2, {100.0, 100.0});
  ModeCoverageReport none = mode_coverage(far, centers, 0.02, 0.15);
  CHECK(none.covered == 0);

  CHECK_THROWS_AS(mode_coverage(Tensor::matrix(1, 3, {0.0, 0.0, 0.0}),
                                centers, 0.02, 0.15),
                  ContractViolation);
}

TEST_CASE("target factory") {
  ExperimentConfig cfg;
  GaussianMixture def = target_from_config(cfg);
  CHECK(def.num_components() == 2);
  cfg.set("target.kind", "single");
  cfg.set("target.mu", "0.3");
  cfg.set("target.sigma", "2.0");
  GaussianMixture single = target_from_config(cfg);
  CHECK(single.num_components() == 1);
  CHECK(single.mean1() == doctest::Approx(0.3));
  cfg.set("target.kind", "cauchy");
  CHECK_THROWS_AS(target_from_config(cfg), ContractViolation);
}

TEST_CASE("exact divergence to a Gaussian: zero at the exact match") {
  GaussianMixture single = GaussianMixture::single(0.4, 1.3);
  for (const char* div : {"forward_kl", "reverse_kl", "js", "gan"}) {
    CHECK(exact_divergence_to_gaussian(div, single, 0.4, 1.3) ==
          doctest::Approx(0.0).epsilon(1e-8));
    // Positive away from the match.
    CHECK(exact_divergence_to_gaussian(div, single, 1.0, 1.3) > 1e-3);
  }
  // KL(N(0.4, 1.3^2) || N(0.4, 2.6^2)) = log 2 + 1/8 - 1/2.
  CHECK(exact_divergence_to_gaussian("forward_kl", single, 0.4, 2.6) ==
        doctest::Approx(std::log(2.0) - 0.375).epsilon(1e-8));
}

TEST_CASE("diagnostic suites stay within their gates on a fresh seed") {
  Rng rng(1234);
  CHECK(finite_difference_suite(20, rng) <= 1e-5);
  CHECK(quadrature_consistency_suite(5, rng) <= 1e-6);
  CHECK(jensen_suite(4, 10000, rng) == 0);
}
