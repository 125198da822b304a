#include "doctest.h"

#include <cmath>

#include "fdivmin/bounds.hpp"
#include "fdivmin/errors.hpp"
#include "fdivmin/experiments.hpp"
#include "fdivmin/mixture.hpp"
#include "fdivmin/rng.hpp"

using namespace fdivmin;

namespace {

// One small bound setup reused across cases: spreaded two-Gaussian data and
// a trainable bivariate Gaussian model with a matched marginal scale.
struct BoundFixture {
  EmpiricalDataset data;
  SpreadedEmpirical spread;
  JointGaussianModel1D joint;
  Encoder enc{"enc", 1, {16, 16}, 1};
  ParameterSet ps;
  ModelJoint model;

  explicit BoundFixture(std::uint64_t seed, double mu = 1.7)
      : data(sample_data(seed)), spread{data, SpreadNoise(0.5)} {
    Rng rng(seed + 1);
    joint.init_params(ps, mu, 0.6, 0.6);
    enc.init_params(ps, rng);
    for (const std::string& name : ps.names(Role::phi)) {
      Tensor& v = ps.at(name);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] *= 0.1;
    }
    model = joint_gaussian_joint(joint);
  }

  static EmpiricalDataset sample_data(std::uint64_t seed) {
    GaussianMixture mix = GaussianMixture::two_gaussian_benchmark();
    Rng rng(seed);
    Tensor pts = Tensor::zeros({200, 1});
    for (std::size_t i = 0; i < 200; ++i) pts(i, 0) = mix.sample(rng)[0];
    return EmpiricalDataset(pts);
  }

  // Exact marginal D_f(spread || N(mu, marginal_sigma^2)) by quadrature.
  double exact_marginal(const FDivergenceSpec& spec, Direction dir) const {
    double m = joint.mu(ps);
    double s = joint.marginal_sigma(ps);
    auto lp = [&](double x) { return spread.log_prob(Tensor::vector({x})); };
    auto lq = [&](double x) {
      double z = (x - m) / s;
      return -0.5 * 1.8378770664093453 - std::log(s) - 0.5 * z * z;
    };
    return exact_fdiv_quadrature(spec, dir, lp, lq, -10.0, 12.0);
  }
};

}  // namespace

TEST_CASE("joint log ratio orientation flips with the direction") {
  JointLogRatioTerms terms{-1.0, -2.0, -0.5, -3.5};
  double m2d = (-1.0 + -2.0) - (-0.5 + -3.5);
  CHECK(terms.log_ratio(Direction::model_to_data) == doctest::Approx(m2d));
  CHECK(terms.log_ratio(Direction::data_to_model) == doctest::Approx(-m2d));
}

TEST_CASE("appendix oracle cases agree across independent routes") {
  for (const char* name :
       {"tightness", "independence_decomposition", "factorized"}) {
    AppendixOracleReport rep = appendix_a_oracle(name);
    CHECK(rep.discrepancy <= 1e-10);
    CHECK(rep.joint_value ==
          doctest::Approx(rep.marginal_value).epsilon(1e-9));
  }
  CHECK_THROWS_AS(appendix_a_oracle("no_such_case"), ContractViolation);
}

TEST_CASE("value-level and tape-level joint ratios agree") {
  BoundFixture fx(100);
  Tensor y = Tensor::vector({1.2});
  Tensor z = Tensor::vector({-0.3});
  JointLogRatioTerms terms =
      joint_log_ratio_terms(fx.model, fx.enc, fx.spread, fx.ps, y, z);

  Tape t;
  JointLogRatioNodes nodes = joint_log_ratio(
      t, fx.model, fx.enc, fx.spread, fx.ps, t.constant(Tensor({1, 1}, {1.2})),
      t.constant(Tensor({1, 1}, {-0.3})), Direction::model_to_data);
  CHECK(t.value(nodes.log_p_y_given_z)[0] ==
        doctest::Approx(terms.log_p_y_given_z).epsilon(1e-12));
  CHECK(t.value(nodes.log_p_z)[0] ==
        doctest::Approx(terms.log_p_z).epsilon(1e-12));
  CHECK(t.value(nodes.log_p_hat_y)[0] ==
        doctest::Approx(terms.log_p_hat_y).epsilon(1e-12));
  CHECK(t.value(nodes.log_q_z_given_y)[0] ==
        doctest::Approx(terms.log_q_z_given_y).epsilon(1e-12));
  CHECK(t.value(nodes.log_ratio)[0] ==
        doctest::Approx(terms.log_ratio(Direction::model_to_data))
            .epsilon(1e-12));
}

TEST_CASE("sampled joint bound sits above the exact marginal divergence") {
  BoundFixture fx(7);
  for (const char* div : {"forward_kl", "reverse_kl", "js"}) {
    const FDivergenceSpec& spec = divergence_by_name(div);
    for (Direction dir :
         {Direction::data_to_model, Direction::model_to_data}) {
      Rng rng(42);
      BoundEstimate est = upper_bound_estimate(spec, dir, fx.model, fx.enc,
                                               fx.spread, fx.ps, 20000, rng);
      double exact = fx.exact_marginal(spec, dir);
      CHECK(est.value + 3.0 * est.std_error >= exact);
      CHECK(est.std_error > 0.0);
      CHECK(est.n_samples == 20000);
    }
  }
}

TEST_CASE("upper bound estimate is deterministic given the seed") {
  BoundFixture fx(8);
  const FDivergenceSpec& spec = divergence_by_name("forward_kl");
  Rng a(5), b(5);
  BoundEstimate ea = upper_bound_estimate(
      spec, Direction::data_to_model, fx.model, fx.enc, fx.spread, fx.ps,
      500, a);
  BoundEstimate eb = upper_bound_estimate(
      spec, Direction::data_to_model, fx.model, fx.enc, fx.spread, fx.ps,
      500, b);
  CHECK(ea.value == eb.value);
  CHECK(ea.std_error == eb.std_error);
}

TEST_CASE("runaway log ratios trip the numeric guard") {
  // A model centered 60 sigmas away from the data makes log p_hat(y) at
  // model samples astronomically negative.
  BoundFixture fx(9, /*mu=*/60.0);
  Rng rng(1);
  CHECK_THROWS_AS(
      upper_bound_estimate(divergence_by_name("reverse_kl"),
                           Direction::model_to_data, fx.model, fx.enc,
                           fx.spread, fx.ps, 100, rng),
      NumericFailure);
}

TEST_CASE("ELBO never exceeds the exact log marginal") {
  BoundFixture fx(10);
  Rng rng(2);
  double m = fx.joint.mu(fx.ps);
  double s = fx.joint.marginal_sigma(fx.ps);
  for (double yv : {0.8, 1.7, 2.6}) {
    double e = elbo(fx.model, fx.enc, fx.ps, Tensor::vector({yv}), 20000,
                    rng);
    double z = (yv - m) / s;
    double log_marginal =
        -0.5 * 1.8378770664093453 - std::log(s) - 0.5 * z * z;
    CHECK(e <= log_marginal + 0.02);
  }
}

TEST_CASE("forward-KL surrogate equals the negative mean ELBO") {
  Rng rng(3);
  CHECK(elbo_identity_gap(rng) <= 1e-12);
}

TEST_CASE("training losses are finite and carry both parameter roles") {
  BoundFixture fx(11);
  for (const char* div : {"forward_kl", "js"}) {
    Rng rng(6);
    Tape t;
    NodeId loss =
        div == std::string("forward_kl")
            ? forward_kl_surrogate_loss(t, fx.model, fx.enc, fx.spread,
                                        fx.ps, 16, rng)
            : fdiv_upper_bound_loss(t, divergence_by_name(div),
                                    Direction::data_to_model, fx.model,
                                    fx.enc, fx.spread, fx.ps, 16, rng);
    CHECK(std::isfinite(t.value(loss).value()));
    GradientMap g = t.backward(loss);
    bool theta_nonzero = false, phi_nonzero = false;
    for (const auto& e : fx.ps.entries()) {
      auto it = g.find(e.name);
      if (it == g.end()) continue;
      for (std::size_t i = 0; i < it->second.size(); ++i)
        if (it->second[i] != 0.0)
          (e.role == Role::theta ? theta_nonzero : phi_nonzero) = true;
    }
    CHECK(theta_nonzero);
    CHECK(phi_nonzero);
  }
}

TEST_CASE("reverse-KL surrogate loss is finite with gradients to theta") {
  BoundFixture fx(12);
  IndexSamplerConfig cfg;
  Rng rng(6);
  Tape t;
  NodeId loss = reverse_kl_surrogate_loss(t, fx.model, fx.enc, fx.spread,
                                          cfg, fx.ps, 16, rng);
  CHECK(std::isfinite(t.value(loss).value()));
  GradientMap g = t.backward(loss);
  const Tensor& dmu = g.at(fx.joint.mu_name);
  CHECK(dmu.size() == 1);
  CHECK(std::isfinite(dmu[0]));
}
