#include "doctest.h"

#include <cmath>

#include "fdivmin/dataset.hpp"
#include "fdivmin/logmix.hpp"
#include "fdivmin/models.hpp"
#include "fdivmin/rng.hpp"
#include "fdivmin/spread.hpp"

using namespace fdivmin;

TEST_CASE("PCA of collinear points recovers the diagonal direction") {
  // Points along (1,1): the single principal direction is (1,1)/sqrt(2).
  Tensor pts = Tensor::matrix(4, 2, {-2.0, -2.0, -1.0, -1.0,
                                      1.0, 1.0, 2.0, 2.0});
  PcaProjection pca = fit_pca(EmpiricalDataset(pts), 1);
  REQUIRE(pca.basis.rows() == 2);
  REQUIRE(pca.basis.cols() == 1);
  CHECK(std::abs(pca.basis(0, 0)) ==
        doctest::Approx(0.7071067811865476).epsilon(1e-12));
  CHECK(pca.basis(0, 0) == doctest::Approx(pca.basis(1, 0)).epsilon(1e-12));
  // The projection of a point on the line is its signed distance from the
  // center along the diagonal.
  Tensor proj = pca.project(Tensor::vector({2.0, 2.0}));
  CHECK(std::abs(proj[0]) == doctest::Approx(2.0 * std::sqrt(2.0)));
}

TEST_CASE("PCA basis is orthonormal on random data") {
  Rng rng(6);
  PcaProjection pca = fit_pca(EmpiricalDataset(rng.normal_tensor({50, 4})),
                              2);
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 2; ++b) {
      double dot = 0.0;
      for (std::size_t i = 0; i < 4; ++i)
        dot += pca.basis(i, a) * pca.basis(i, b);
      CHECK(dot == doctest::Approx(a == b ? 1.0 : 0.0).epsilon(1e-10));
    }
}

TEST_CASE("index posterior: frozen two-point value") {
  // Points {0, 2}, sigma = 1, y = 0.5: the softmax logits differ by 1, so
  // p(0|y) = 1 / (1 + e^{-1}).
  EmpiricalDataset data(Tensor::matrix(2, 1, {0.0, 2.0}));
  IndexSamplerConfig cfg;  // unbiased mode
  std::vector<double> post = index_posterior(
      data, SpreadNoise(1.0), Tensor::vector({0.5}), Tensor::vector({0.5}),
      cfg);
  REQUIRE(post.size() == 2);
  CHECK(post[0] == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(post[0] + post[1] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("index posterior is a simplex point, monotone in distance") {
  Rng rng(9);
  EmpiricalDataset data(rng.normal_tensor({30, 2}));
  IndexSamplerConfig cfg;
  Tensor y = Tensor::vector({0.2, -0.4});
  std::vector<double> post =
      index_posterior(data, SpreadNoise(0.5), y, y, cfg);
  double total = 0.0;
  for (double p : post) {
    CHECK(p >= 0.0);
    total += p;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  // Closer points get at least the probability of farther points.
  for (std::size_t a = 0; a < post.size(); ++a)
    for (std::size_t b = 0; b < post.size(); ++b) {
      double da = std::hypot(y[0] - data.points(a, 0),
                             y[1] - data.points(a, 1));
      double db = std::hypot(y[0] - data.points(b, 0),
                             y[1] - data.points(b, 1));
      if (da < db) CHECK(post[a] >= post[b] - 1e-12);
    }
}

TEST_CASE("trick-mode posterior uses the projected mean and temperature") {
  EmpiricalDataset data(Tensor::matrix(2, 1, {0.0, 2.0}));
  IndexSamplerConfig cfg;
  cfg.use_unbiased = false;
  cfg.temperature = 10.0;
  cfg.pca = fit_pca(data, 1);
  // mu = 0.5: projected squared distances to the two points differ by
  // (|0.5-0|^2 - |0.5-2|^2) = -2, so logits differ by 2/10.
  std::vector<double> post = index_posterior(
      data, SpreadNoise(1.0), Tensor::vector({123.0}),  // y must be ignored
      Tensor::vector({0.5}), cfg);
  CHECK(post[0] == doctest::Approx(1.0 / (1.0 + std::exp(-0.2)))
                       .epsilon(1e-12));
}

TEST_CASE("naive minibatch log prob equals the full density when the "
          "minibatch is the whole dataset") {
  Rng rng(3);
  EmpiricalDataset data(rng.normal_tensor({12, 2}));
  SpreadNoise noise(0.4);
  SpreadedEmpirical sp{data, noise};
  Tensor y = Tensor::vector({0.1, 0.3});
  std::vector<std::size_t> all(12);
  for (std::size_t i = 0; i < 12; ++i) all[i] = i;
  CHECK(naive_minibatch_log_prob(data, noise, y, all) ==
        doctest::Approx(sp.log_prob(y)).epsilon(1e-12));
}

TEST_CASE("logmix surrogate rows: value equals the mean selected log "
          "density and gradients flow through y") {
  Rng rng(14);
  EmpiricalDataset data(rng.normal_tensor({20, 2}));
  SpreadNoise noise(0.5);
  IndexSamplerConfig cfg;
  cfg.samples_per_y = 8;

  ParameterSet ps;
  ps.add("y", rng.normal_tensor({3, 2}), Role::theta);
  // Indices depend on the posterior at the CURRENT y value, so freeze them
  // by replaying the same rng seed for value and finite-difference passes.
  auto build = [&](Tape& t, const ParameterSet& p) {
    Rng local(77);
    NodeId y = t.param(p, "y");
    return t.sum(logmix_surrogate_rows(t, data, noise, y, t.value(y), cfg,
                                       local));
  };
  CHECK(gradient_check(build, ps) <= 1e-6);
}

TEST_CASE("full-sum oracle gradient matches finite differences") {
  Rng rng(21);
  EmpiricalDataset data(rng.normal_tensor({16, 2}));
  SpreadNoise noise(0.5);
  ImplicitGenerator gen("gen", 2, {6}, 2);
  ParameterSet ps;
  gen.init_params(ps, rng);
  Tensor z = rng.normal_tensor({2});
  Tensor eps = rng.normal_tensor({2});
  auto build_mean = [&](Tape& t, NodeId zn) { return gen.mean(t, ps, zn); };
  GradientMap oracle = full_sum_gradient(data, noise, build_mean, z, eps);

  auto eval = [&](const ParameterSet& p) {
    Tape t;
    NodeId zn = t.constant(Tensor({1, 2}, z.raw()));
    NodeId mean = gen.mean(t, p, zn);
    std::vector<double> se = eps.raw();
    for (double& v : se) v *= noise.sigma;
    NodeId y = t.add(mean, t.constant(Tensor({1, 2}, se)));
    return t.value(t.sum(spread_log_prob_rows(t, y, data, noise.sigma)))
        .value();
  };
  for (const auto& entry : ps.entries()) {
    Tensor& v = ps.at(entry.name);
    const Tensor& g = oracle.at(entry.name);
    for (std::size_t i = 0; i < v.size(); ++i) {
      double keep = v[i];
      double h = 1e-5;
      v[i] = keep + h;
      double fp = eval(ps);
      v[i] = keep - h;
      double fm = eval(ps);
      v[i] = keep;
      CHECK(g[i] == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-4));
    }
  }
}
