// Python bindings for the main library operations: divergence registry,
// exact quadrature, datasets / spreads, mode coverage and the config-driven
// experiment entry points.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <string>

#include "fdivmin/bounds.hpp"
#include "fdivmin/dataset.hpp"
#include "fdivmin/divergences.hpp"
#include "fdivmin/errors.hpp"
#include "fdivmin/experiments.hpp"
#include "fdivmin/mixture.hpp"
#include "fdivmin/rng.hpp"
#include "fdivmin/spread.hpp"

namespace py = pybind11;
using namespace fdivmin;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style |
                                                        py::array::forcecast>&
                             arr) {
  std::vector<std::size_t> shape(arr.ndim());
  for (py::ssize_t i = 0; i < arr.ndim(); ++i)
    shape[i] = static_cast<std::size_t>(arr.shape(i));
  std::vector<double> data(arr.data(), arr.data() + arr.size());
  return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.raw().begin(), t.raw().end(), out.mutable_data());
  return out;
}

ExperimentConfig config_from_dict(const std::map<std::string, std::string>&
                                      entries) {
  ExperimentConfig cfg;
  for (const auto& [k, v] : entries) cfg.set(k, v);
  return cfg;
}

py::dict fit_result_dict(const FitResult& r) {
  py::dict d;
  d["mu"] = r.mu;
  d["sigma"] = r.sigma;
  d["divergence_value"] = r.divergence_value;
  return d;
}

}  // namespace

PYBIND11_MODULE(_fdivmin, m) {
  m.doc() = "f-divergence minimization via joint bounds over spread models";

  py::register_exception<ContractViolation>(m, "ContractViolation");
  py::register_exception<DomainViolation>(m, "DomainViolation");
  py::register_exception<NumericFailure>(m, "NumericFailure");

  m.def("divergences", []() {
    std::vector<std::string> names;
    for (const auto& spec : all_divergences()) names.push_back(spec.name);
    return names;
  });

  m.def(
      "f",
      [](const std::string& name, double u) {
        return f_eval(divergence_by_name(name), u);
      },
      py::arg("divergence"), py::arg("u"), "Table f evaluated at a ratio u");
  m.def(
      "conjugate",
      [](const std::string& name, double t) {
        return conjugate_eval(divergence_by_name(name), t);
      },
      py::arg("divergence"), py::arg("t"), "Fenchel conjugate f*(t)");
  m.def(
      "activation",
      [](const std::string& name, double v) {
        return output_activation_eval(divergence_by_name(name), v);
      },
      py::arg("divergence"), py::arg("v"),
      "Critic output activation g_f(v), always inside the f* domain");

  m.def(
      "exact_divergence",
      [](const std::string& divergence, double mu, double sigma,
         const std::map<std::string, std::string>& target) {
        return exact_divergence_to_gaussian(
            divergence, target_from_config(config_from_dict(target)), mu,
            sigma);
      },
      py::arg("divergence"), py::arg("mu"), py::arg("sigma"),
      py::arg("target") = std::map<std::string, std::string>{},
      "Exact D_f(target || N(mu, sigma^2)) by adaptive quadrature");

  m.def(
      "sample_target",
      [](std::size_t n, std::uint64_t seed,
         const std::map<std::string, std::string>& target) {
        Rng rng(seed);
        EmpiricalDataset data = EmpiricalDataset::sample_from(
            target_from_config(config_from_dict(target)), n, rng);
        return array_from_tensor(data.points);
      },
      py::arg("n"), py::arg("seed") = 0,
      py::arg("target") = std::map<std::string, std::string>{},
      "Sample an N x D dataset from the configured benchmark target");

  m.def(
      "spread_log_prob",
      [](const py::array_t<double>& points, double sigma,
         const py::array_t<double>& y) {
        SpreadedEmpirical sp{EmpiricalDataset(tensor_from_array(points)),
                             SpreadNoise(sigma)};
        return sp.log_prob(tensor_from_array(y));
      },
      py::arg("points"), py::arg("sigma"), py::arg("y"),
      "Exact full-sum spreaded empirical log density at y");

  m.def(
      "mode_coverage",
      [](const py::array_t<double>& samples,
         const py::array_t<double>& centers, double tau, double rho) {
        ModeCoverageReport rep = mode_coverage(
            tensor_from_array(samples), tensor_from_array(centers), tau, rho);
        py::dict d;
        d["fractions"] = rep.fractions;
        d["covered"] = rep.covered;
        return d;
      },
      py::arg("samples"), py::arg("centers"), py::arg("tau") = 0.02,
      py::arg("rho") = 0.15);

  m.def(
      "fit_exact",
      [](const std::map<std::string, std::string>& config,
         const std::string& out_dir) {
        return fit_result_dict(run_exact_fit(config_from_dict(config),
                                             out_dir));
      },
      py::arg("config"), py::arg("out_dir"));
  m.def(
      "fit_ub",
      [](const std::map<std::string, std::string>& config,
         const std::string& out_dir) {
        return fit_result_dict(run_ub_fit(config_from_dict(config), out_dir));
      },
      py::arg("config"), py::arg("out_dir"));
  m.def(
      "fit_lb",
      [](const std::map<std::string, std::string>& config,
         const std::string& out_dir) {
        return fit_result_dict(run_lb_fit(config_from_dict(config), out_dir));
      },
      py::arg("config"), py::arg("out_dir"));
  m.def(
      "toy_ring",
      [](const std::map<std::string, std::string>& config,
         const std::string& out_dir) {
        RingResult r = run_toy_ring(config_from_dict(config), out_dir);
        py::dict d;
        d["covered"] = r.coverage.covered;
        d["fractions"] = r.coverage.fractions;
        d["aborted"] = r.aborted;
        return d;
      },
      py::arg("config"), py::arg("out_dir"));
  m.def(
      "grad_check",
      [](const std::map<std::string, std::string>& config,
         const std::string& out_dir) {
        return run_grad_check(config_from_dict(config), out_dir);
      },
      py::arg("config"), py::arg("out_dir"));

  m.def(
      "upper_bound_mc",
      [](const py::array_t<double>& points, double sigma,
         const std::string& divergence, const std::string& direction,
         double mu, double w, double sigma_c, std::size_t n_samples,
         std::uint64_t seed) {
        JointGaussianModel1D joint;
        ParameterSet ps;
        joint.init_params(ps, mu, w, sigma_c);
        Encoder enc("enc", 1, {32, 32}, 1);
        Rng init(seed + 1);
        enc.init_params(ps, init);
        for (const std::string& name : ps.names(Role::phi)) {
          Tensor& v = ps.at(name);
          for (std::size_t i = 0; i < v.size(); ++i) v[i] *= 0.1;
        }
        SpreadedEmpirical sp{EmpiricalDataset(tensor_from_array(points)),
                             SpreadNoise(sigma)};
        Rng rng(seed);
        BoundEstimate est = upper_bound_estimate(
            divergence_by_name(divergence), direction_from_name(direction),
            joint_gaussian_joint(joint), enc, sp, ps, n_samples, rng);
        py::dict d;
        d["value"] = est.value;
        d["std_error"] = est.std_error;
        d["n_samples"] = est.n_samples;
        return d;
      },
      py::arg("points"), py::arg("sigma"), py::arg("divergence"),
      py::arg("direction"), py::arg("mu"), py::arg("w"), py::arg("sigma_c"),
      py::arg("n_samples") = 10000, py::arg("seed") = 0,
      "Sampled joint upper bound for a bivariate Gaussian model against the "
      "spreaded dataset, with a fresh small encoder");
}
