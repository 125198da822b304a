#include "doctest.h"

#include <cmath>

#include "fdivmin/divergences.hpp"
#include "fdivmin/errors.hpp"
#include "fdivmin/gaussian.hpp"
#include "fdivmin/mixture.hpp"

using namespace fdivmin;

namespace {

double log_normal(double x, double m, double s) {
  double z = (x - m) / s;
  return -0.5 * 1.8378770664093453 - std::log(s) - 0.5 * z * z;
}

}  // namespace

TEST_CASE("every registered f satisfies f(1) = 0 and is locally convex") {
  for (const auto& spec : all_divergences()) {
    CHECK(f_eval(spec, 1.0) == doctest::Approx(0.0).epsilon(1e-14));
    for (double u : {0.2, 0.7, 1.0, 1.9, 4.0}) {
      double h = 1e-4;
      double second = (f_eval(spec, u + h) - 2.0 * f_eval(spec, u) +
                       f_eval(spec, u - h)) /
                      (h * h);
      CHECK(second > 0.0);
      // f' consistent with f.
      double fd = (f_eval(spec, u + h) - f_eval(spec, u - h)) / (2.0 * h);
      CHECK(f_prime_eval(spec, u) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("frozen f values") {
  const auto& fwd = divergence_by_name("forward_kl");
  const auto& rev = divergence_by_name("reverse_kl");
  const auto& js = divergence_by_name("js");
  const auto& gan = divergence_by_name("gan");
  CHECK(f_eval(fwd, 2.0) == doctest::Approx(2.0 * std::log(2.0)));
  CHECK(f_eval(rev, 2.0) == doctest::Approx(-std::log(2.0)));
  // js f(3) = (3 log 3 - 4 log 2) / 2.
  CHECK(f_eval(js, 3.0) == doctest::Approx(0.2616240719).epsilon(1e-9));
  // gan stores the table f shifted by +2 log 2.
  CHECK(gan.f_shift == doctest::Approx(2.0 * std::log(2.0)));
  CHECK(f_eval(gan, 3.0) ==
        doctest::Approx(3.0 * std::log(3.0) - 4.0 * std::log(4.0) +
                        2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("Fenchel conjugate: Young inequality with equality at f'(u)") {
  for (const auto& spec : all_divergences()) {
    for (double u : {0.3, 0.8, 1.0, 1.6, 3.0}) {
      double t_star = f_prime_eval(spec, u);
      REQUIRE(spec.in_conjugate_domain(t_star));
      // Equality: f*(f'(u)) = u f'(u) - f(u).
      CHECK(conjugate_eval(spec, t_star) ==
            doctest::Approx(u * t_star - f_eval(spec, u)).epsilon(1e-10));
      // Inequality at other in-domain points.
      for (double delta : {-0.5, -0.1, 0.1}) {
        double t = t_star + delta;
        if (!spec.in_conjugate_domain(t)) continue;
        CHECK(u * t - conjugate_eval(spec, t) <=
              f_eval(spec, u) + 1e-12);
      }
    }
  }
}

TEST_CASE("conjugate domains reject out-of-domain arguments") {
  CHECK_THROWS_AS(conjugate_eval(divergence_by_name("reverse_kl"), 0.5),
                  DomainViolation);
  CHECK_THROWS_AS(conjugate_eval(divergence_by_name("gan"), 0.0),
                  DomainViolation);
  // js domain is t < (log 2) / 2 under the 1/2-weighted convention.
  const auto& js = divergence_by_name("js");
  CHECK(js.in_conjugate_domain(0.34));
  CHECK(!js.in_conjugate_domain(0.35));
}

TEST_CASE("output activations always land inside the conjugate domain") {
  for (const auto& spec : all_divergences()) {
    for (double v = -20.0; v <= 20.0; v += 0.37) {
      double g = output_activation_eval(spec, v);
      CHECK(spec.in_conjugate_domain(g));
      CHECK(std::isfinite(conjugate_eval(spec, g)));
    }
  }
}

TEST_CASE("integrand_from_log_ratio equals f(r)/r and its derivative") {
  for (const auto& spec : all_divergences()) {
    for (double L : {-3.0, -1.0, -0.2, 0.0, 0.4, 1.5, 3.0}) {
      double r = std::exp(L);
      CHECK(spec.integrand_from_log_ratio(L) ==
            doctest::Approx(f_eval(spec, r) / r).epsilon(1e-10));
      double h = 1e-5;
      double fd = (spec.integrand_from_log_ratio(L + h) -
                   spec.integrand_from_log_ratio(L - h)) /
                  (2.0 * h);
      CHECK(spec.integrand_derivative(L) ==
            doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("q_times_f equals exp(lq) f(exp(lp - lq)) where both are finite") {
  for (const auto& spec : all_divergences()) {
    for (double lp : {-2.0, -0.5, 0.0, 1.0}) {
      for (double lq : {-1.5, 0.0, 0.8}) {
        double direct = std::exp(lq) * f_eval(spec, std::exp(lp - lq));
        CHECK(spec.q_times_f(lp, lq) ==
              doctest::Approx(direct).epsilon(1e-10));
      }
    }
    // Far tails must stay finite instead of producing 0 * inf.
    CHECK(std::isfinite(spec.q_times_f(-800.0, -1.0)));
    CHECK(std::isfinite(spec.q_times_f(-1.0, -800.0)));
  }
}

TEST_CASE("fdiv_integrand node: values and gradients") {
  ParameterSet ps;
  ps.add("L", Tensor::vector({-1.0, 0.3, 2.0}), Role::theta);
  for (const auto& spec : all_divergences()) {
    auto build = [&](Tape& t, const ParameterSet& p) {
      return t.sum(fdiv_integrand(t, spec, t.param(p, "L")));
    };
    CHECK(gradient_check(build, ps) <= 1e-7);
  }
}

TEST_CASE("quadrature reproduces the closed-form Gaussian KL") {
  // KL(N(0,1) || N(1, 2^2)) = log 2 + 2/8 - 1/2.
  const auto& fwd = divergence_by_name("forward_kl");
  double kl = exact_fdiv_quadrature(
      fwd, Direction::data_to_model,
      [](double x) { return log_normal(x, 0.0, 1.0); },
      [](double x) { return log_normal(x, 1.0, 2.0); }, -25.0, 26.0);
  CHECK(kl == doctest::Approx(0.4431471805599453).epsilon(1e-9));
}

TEST_CASE("direction flips which density is the integrator") {
  const auto& fwd = divergence_by_name("forward_kl");
  const auto& rev = divergence_by_name("reverse_kl");
  auto lp = [](double x) { return log_normal(x, 0.0, 1.0); };
  auto lq = [](double x) { return log_normal(x, 1.0, 2.0); };
  // forward_kl data_to_model = KL(data||model) = reverse_kl model_to_data.
  double a = exact_fdiv_quadrature(fwd, Direction::data_to_model, lp, lq,
                                   -25.0, 26.0);
  double b = exact_fdiv_quadrature(rev, Direction::model_to_data, lp, lq,
                                   -25.0, 26.0);
  CHECK(a == doctest::Approx(b).epsilon(1e-9));
  // forward_kl model_to_data = KL(model||data) = log(1/2) + 5/2 - 1/2.
  double c = exact_fdiv_quadrature(fwd, Direction::model_to_data, lp, lq,
                                   -25.0, 26.0);
  CHECK(c == doctest::Approx(-std::log(2.0) + 2.0).epsilon(1e-9));
}

TEST_CASE("quadrature resolves narrow peaks far from the interval center") {
  // Regression: a single Simpson panel steps over one of the two narrow,
  // widely separated peaks and silently converges to the wrong value.
  const auto& fwd = divergence_by_name("forward_kl");
  double m0 = 4.0, s0 = 0.5, m1 = -4.0, s1 = 0.6;
  double kl = exact_fdiv_quadrature(
      fwd, Direction::data_to_model,
      [&](double x) { return log_normal(x, m0, s0); },
      [&](double x) { return log_normal(x, m1, s1); },
      std::min(m0 - 12 * s0, m1 - 12 * s1),
      std::max(m0 + 12 * s0, m1 + 12 * s1));
  double closed = std::log(s1 / s0) +
                  (s0 * s0 + (m0 - m1) * (m0 - m1)) / (2.0 * s1 * s1) - 0.5;
  CHECK(kl == doctest::Approx(closed).epsilon(1e-9));
}

TEST_CASE("js quadrature of identical densities is zero, bounded by log 2") {
  const auto& js = divergence_by_name("js");
  auto lp = [](double x) { return log_normal(x, 0.0, 1.0); };
  CHECK(exact_fdiv_quadrature(js, Direction::data_to_model, lp, lp, -13.0,
                              13.0) == doctest::Approx(0.0).epsilon(1e-9));
  // Far-apart densities approach the 1/2-weighted JS maximum, log 2.
  auto lq = [](double x) { return log_normal(x, 40.0, 1.0); };
  double far = exact_fdiv_quadrature(js, Direction::data_to_model, lp, lq,
                                     -13.0, 53.0);
  CHECK(far == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("divergence registry lookups") {
  CHECK(all_divergences().size() == 4);
  CHECK_THROWS_AS(divergence_by_name("hellinger"), ContractViolation);
  CHECK(direction_from_name("data_to_model") == Direction::data_to_model);
  CHECK_THROWS_AS(direction_from_name("sideways"), ContractViolation);
  CHECK_THROWS_AS(f_eval(divergence_by_name("js"), -1.0), DomainViolation);
}
