#include "doctest.h"

#include <cmath>
#include <cstdio>

#include "fdivmin/model_io.hpp"
#include "fdivmin/models.hpp"
#include "fdivmin/optim.hpp"
#include "fdivmin/rng.hpp"

using namespace fdivmin;

TEST_CASE("Mlp forward shape and finite-difference gradients") {
  Rng rng(31);
  Mlp net("net", 3, {5, 4}, 2);
  ParameterSet ps;
  net.init_params(ps, Role::theta, rng);
  Tensor x = rng.normal_tensor({7, 3});
  Tape t;
  NodeId out = net.forward(t, ps, t.constant(x));
  CHECK(t.value(out).rows() == 7);
  CHECK(t.value(out).cols() == 2);
  auto build = [&](Tape& tt, const ParameterSet& p) {
    return tt.mean(tt.square(net.forward(tt, p, tt.constant(x))));
  };
  CHECK(gradient_check(build, ps) <= 1e-5);
}

TEST_CASE("GaussianModel1D log density and sigma accessor") {
  ParameterSet ps;
  GaussianModel1D m;
  m.init_params(ps, 1.0, 2.0);
  CHECK(m.mu(ps) == doctest::Approx(1.0));
  CHECK(m.sigma(ps) == doctest::Approx(2.0));
  // log N(0; 1, 4) = -log(2) - log sqrt(2 pi) - 1/8.
  CHECK(m.log_prob(ps, 0.0) ==
        doctest::Approx(-std::log(2.0) - 0.9189385332046727 - 0.125)
            .epsilon(1e-14));
}

TEST_CASE("JointGaussianModel1D marginal matches the closed form") {
  ParameterSet ps;
  JointGaussianModel1D m;
  m.init_params(ps, 0.5, 0.6, 0.8);
  CHECK(m.marginal_sigma(ps) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(m.w(ps) == doctest::Approx(0.6));
  CHECK(m.sigma_c(ps) == doctest::Approx(0.8));
}

TEST_CASE("Encoder heads: value-level density agrees with the tape") {
  Rng rng(12);
  Encoder enc("enc", 2, {8}, 3);
  ParameterSet ps;
  enc.init_params(ps, rng);
  Tensor y = rng.normal_tensor({2});
  DiagonalGaussian q = enc.params_at(ps, y);
  REQUIRE(q.dim() == 3);
  Tensor z = rng.normal_tensor({3});
  CHECK(enc.log_prob(ps, y, z) ==
        doctest::Approx(q.log_prob(z)).epsilon(1e-12));
  CHECK(enc.clamp_activations() == 0);
}

TEST_CASE("SGD step is parameter minus lr times gradient") {
  ParameterSet ps;
  ps.add("p", Tensor::vector({1.0, -2.0}), Role::theta);
  Optimizer opt(OptimizerKind::sgd, 0.5);
  GradientMap g;
  g["p"] = Tensor::vector({0.2, -0.4});
  opt.step(ps, g);
  CHECK(ps.at("p")[0] == doctest::Approx(0.9));
  CHECK(ps.at("p")[1] == doctest::Approx(-1.8));
}

TEST_CASE("Adam first step has the bias-corrected closed form") {
  // With m_hat = g and v_hat = g^2, the first update is
  // lr * g / (|g| + eps) regardless of the gradient's magnitude.
  ParameterSet ps;
  ps.add("p", Tensor::vector({1.0}), Role::theta);
  Optimizer opt(OptimizerKind::adam, 0.1);
  GradientMap g;
  g["p"] = Tensor::vector({0.5});
  opt.step(ps, g);
  CHECK(ps.at("p")[0] ==
        doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("optimizer role restriction leaves the other role untouched") {
  ParameterSet ps;
  ps.add("theta_p", Tensor::vector({1.0}), Role::theta);
  ps.add("phi_p", Tensor::vector({1.0}), Role::phi);
  Optimizer opt(OptimizerKind::sgd, 0.1, Role::theta);
  GradientMap g;
  g["theta_p"] = Tensor::vector({1.0});
  g["phi_p"] = Tensor::vector({1.0});
  opt.step(ps, g);
  CHECK(ps.at("theta_p")[0] == doctest::Approx(0.9));
  CHECK(ps.at("phi_p")[0] == doctest::Approx(1.0));
}

TEST_CASE("Adam converges on a deterministic quadratic") {
  ParameterSet ps;
  ps.add("x", Tensor::vector({5.0, -3.0}), Role::theta);
  Optimizer opt(OptimizerKind::adam, 0.05);
  for (int i = 0; i < 2000; ++i) {
    Tape t;
    NodeId x = t.param(ps, "x");
    NodeId loss = t.sum(t.square(t.add_scalar(x, -1.0)));  // min at (1, 1)
    opt.step(ps, t.backward(loss));
  }
  CHECK(ps.at("x")[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(ps.at("x")[1] == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("params JSON round trip is value-exact") {
  Rng rng(44);
  ParameterSet ps;
  ps.add("a.W0", rng.normal_tensor({3, 2}), Role::theta);
  ps.add("a.b0", rng.normal_tensor({2}), Role::phi);
  ps.add("scalar", Tensor::scalar(0.1 + 0.2), Role::theta);  // 0.30000000000000004
  ParameterSet back = params_from_json(params_to_json(ps));
  REQUIRE(back.size() == 3);
  for (const auto& e : ps.entries()) {
    const Tensor& b = back.at(e.name);
    REQUIRE(b.shape() == e.value.shape());
    CHECK(back.role_of(e.name) == e.role);
    for (std::size_t i = 0; i < b.size(); ++i)
      CHECK(b[i] == e.value[i]);  // bit-exact, not approximate
  }
}

TEST_CASE("params JSON file round trip") {
  Rng rng(45);
  ParameterSet ps;
  ps.add("w", rng.normal_tensor({4}), Role::theta);
  save_params_json(ps, "/tmp/fdivmin_test_params.json");
  ParameterSet back = load_params_json("/tmp/fdivmin_test_params.json");
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(back.at("w")[i] == ps.at("w")[i]);
  std::remove("/tmp/fdivmin_test_params.json");
}

TEST_CASE("ImplicitGenerator sample_y composes mean and spread noise") {
  Rng rng(50);
  ImplicitGenerator gen("gen", 2, {6}, 3);
  ParameterSet ps;
  gen.init_params(ps, rng);
  ImplicitGenerator::Draw d = gen.sample_y(ps, 0.25, rng);
  Tensor mean = gen.mean_value(ps, d.z);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(d.y[i] == doctest::Approx(mean[i] + 0.25 * d.epsilon[i])
                        .epsilon(1e-12));
}
