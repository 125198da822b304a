#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fdivmin/mixture.hpp"
#include "fdivmin/rng.hpp"
#include "fdivmin/tensor.hpp"

namespace fdivmin {

// Flat `key = value` experiment configuration. Every key must be in the
// documented registry; unknown keys fail at parse time so typos cannot
// silently fall back to defaults.
class ExperimentConfig {
 public:
  ExperimentConfig() = default;

  static ExperimentConfig from_file(const std::string& path);
  static ExperimentConfig from_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key,
                        std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Comma-separated positive integers (layer widths).
  std::vector<std::size_t> get_sizes(
      const std::string& key, const std::vector<std::size_t>& fallback) const;

  // Effective settings, one `key = value` per line, sorted.
  std::string serialize() const;

  static const std::vector<std::string>& known_keys();

 private:
  std::map<std::string, std::string> values_;
};

struct ModeCoverageReport {
  std::vector<double> fractions;  // per-mode sample fraction
  std::size_t covered = 0;
  double tau = 0.02;
  double rho = 0.15;
};

// Fraction of sample rows within distance rho of each center row; a mode is
// covered when its fraction reaches tau. Samples outside every ball count
// toward no mode.
ModeCoverageReport mode_coverage(const Tensor& samples, const Tensor& centers,
                                 double tau, double rho);

struct FitResult {
  double mu = 0.0;
  double sigma = 0.0;
  double divergence_value = 0.0;  // exact quadrature of the fit vs target
};

struct RingResult {
  ModeCoverageReport coverage;
  bool aborted = false;
};

// Each run writes config.txt, trace.csv, params.json and summary.json into
// out_dir (created if needed) and returns the headline numbers.
FitResult run_exact_fit(const ExperimentConfig& cfg,
                        const std::string& out_dir);
FitResult run_ub_fit(const ExperimentConfig& cfg, const std::string& out_dir);
FitResult run_lb_fit(const ExperimentConfig& cfg, const std::string& out_dir);
RingResult run_toy_ring(const ExperimentConfig& cfg,
                        const std::string& out_dir);
bool run_grad_check(const ExperimentConfig& cfg, const std::string& out_dir);
void run_compare(const ExperimentConfig& cfg, const std::string& out_dir);
void run_gen_data(const ExperimentConfig& cfg, const std::string& out_dir);

// Diagnostic suites shared by the grad-check command and the acceptance
// gate. Each returns the statistic its caller compares against a tolerance.

// Worst finite-difference relative error over `trials` random small
// networks with a composite loss (kink-free probes).
double finite_difference_suite(int trials, Rng& rng);

// Worst |quadrature - closed form| over `trials` random 1-D Gaussian pairs.
double quadrature_consistency_suite(int trials, Rng& rng);

// Number of (config, divergence, direction) cells where the sampled joint
// bound + 3 std errors falls below the exact marginal divergence.
int jensen_suite(int trials, std::size_t bound_samples, Rng& rng);

// |forward_kl_surrogate_loss + mean(elbo)| on shared samples.
double elbo_identity_gap(Rng& rng);

// Worst per-coordinate error of the index-sampled gradient mean against
// the full-sum oracle, normalized by the oracle's largest coordinate.
double logmix_error_suite(int draws, Rng& rng);

// Mean log-likelihood deficit of the M-point minibatch density estimate
// against the full spreaded density, in units of its own std error.
double naive_minibatch_deficit_sigmas(std::size_t minibatch_size, int draws,
                                      Rng& rng);

// The 1-D benchmark target named by target.kind (two_gaussian | single).
GaussianMixture target_from_config(const ExperimentConfig& cfg);

// Exact D_f(target || N(mu, sigma^2)) by quadrature, Table-1 orientation.
double exact_divergence_to_gaussian(const std::string& divergence,
                                    const GaussianMixture& target, double mu,
                                    double sigma);

}  // namespace fdivmin
