#include "fdivmin/experiments.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "fdivmin/bounds.hpp"
#include "fdivmin/dataset.hpp"
#include "fdivmin/errors.hpp"
#include "fdivmin/fgan.hpp"
#include "fdivmin/model_io.hpp"
#include "fdivmin/training.hpp"

namespace fdivmin {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw ContractViolation("cannot create output directory " + dir + ": " +
                            ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw ContractViolation("cannot open " + path);
  f << text;
}

void write_summary(const std::string& out_dir, const json& doc) {
  write_text(out_dir + "/summary.json", doc.dump(2) + "\n");
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// Quadrature interval wide enough for every involved Gaussian.
std::pair<double, double> quad_interval(const GaussianMixture& target,
                                        double mu, double sigma) {
  double lo = mu - 12.0 * sigma, hi = mu + 12.0 * sigma;
  for (std::size_t k = 0; k < target.num_components(); ++k) {
    lo = std::min(lo, target.means(k, 0) - 12.0 * target.stds(k, 0));
    hi = std::max(hi, target.means(k, 0) + 12.0 * target.stds(k, 0));
  }
  return {lo, hi};
}

// B x L tile where each input row is repeated `k` times consecutively
// (values only).
Tensor tile_rows(const Tensor& m, std::size_t k) {
  Tensor out = Tensor::zeros({m.rows() * k, m.cols()});
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t c = 0; c < m.cols(); ++c)
        out(i * k + r, c) = m(i, c);
  return out;
}

// Tape op: row i of the input feeds rows i*k .. i*k+k-1 of the output.
NodeId repeat_rows(Tape& t, NodeId x, std::size_t k) {
  ForwardFn fwd = [k](const std::vector<const Tensor*>& p) {
    return tile_rows(*p[0], k);
  };
  BackwardFn bwd = [k](const Tensor& g, const std::vector<const Tensor*>& p,
                       const Tensor&, std::vector<Tensor*>& pg) {
    if (!pg[0]) return;
    std::size_t rows = p[0]->rows(), cols = p[0]->cols();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t r = 0; r < k; ++r)
        for (std::size_t c = 0; c < cols; ++c)
          (*pg[0])(i, c) += g(i * k + r, c);
  };
  return t.custom("repeat_rows", {x}, std::move(fwd), std::move(bwd));
}

// Fixed orthonormal 3x3 embedding of the ring plane, independent of the
// experiment seed so datasets are comparable across runs.
Tensor ring_embedding() {
  Rng rng(20240817u);
  Eigen::Matrix3d a;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::Matrix3d> qr(a);
  Eigen::Matrix3d q = qr.householderQ();
  Eigen::Matrix3d r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < 3; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  Tensor out = Tensor::zeros({3, 3});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out(i, j) = q(i, j);
  return out;
}

// (x, y) -> R (x, y, 0)^T for each row.
Tensor embed_3d(const Tensor& pts2, const Tensor& rot) {
  Tensor out = Tensor::zeros({pts2.rows(), 3});
  for (std::size_t n = 0; n < pts2.rows(); ++n)
    for (std::size_t i = 0; i < 3; ++i)
      out(n, i) = rot(i, 0) * pts2(n, 0) + rot(i, 1) * pts2(n, 1);
  return out;
}

struct UbSetup {
  GaussianMixture target;
  EmpiricalDataset dataset;
  SpreadedEmpirical sdata;
  JointGaussianModel1D model;
  Encoder enc;
  ParameterSet ps;
};

// Training pair (spec, direction) whose sampled bound matches the named
// divergence in Table-1 orientation: forward KL samples the data joint;
// reverse KL is the same quantity seen from the model side, which lands on
// the u log u entry; js/gan are side-symmetric up to an affine term.
std::pair<const FDivergenceSpec*, Direction> training_pair(
    const std::string& divergence) {
  if (divergence == "forward_kl")
    return {&divergence_by_name("forward_kl"), Direction::data_to_model};
  if (divergence == "reverse_kl")
    return {&divergence_by_name("forward_kl"), Direction::model_to_data};
  if (divergence == "js")
    return {&divergence_by_name("js"), Direction::model_to_data};
  if (divergence == "gan")
    return {&divergence_by_name("gan"), Direction::model_to_data};
  throw ContractViolation("no training objective for divergence " +
                          divergence);
}

}  // namespace

// ---------------------------------------------------------------- config

const std::vector<std::string>& ExperimentConfig::known_keys() {
  static const std::vector<std::string> keys = {
      "seed",
      "divergence",
      "target.kind",
      "target.mu",
      "target.sigma",
      "dataset.size",
      "spread.sigma",
      "model.mu0",
      "model.sigma0",
      "model.w0",
      "encoder.hidden",
      "generator.hidden",
      "latent_dim",
      "opt.kind",
      "opt.lr_theta",
      "opt.lr_phi",
      "opt.lr_theta_post",
      "loop.theta_steps",
      "loop.phi_steps",
      "loop.batch",
      "loop.warm_start_steps",
      "anneal.start",
      "anneal.end",
      "logmix.temperature",
      "logmix.samples",
      "logmix.pca_dim",
      "logmix.unbiased",
      "fgan.steps",
      "fgan.disc_hidden",
      "fgan.disc_steps",
      "fgan.batch",
      "fgan.quad_every",
      "exact.steps",
      "exact.lr",
      "exact.h",
      "bound.samples",
      "bound.every",
      "ring.modes",
      "ring.radius",
      "ring.std",
      "ring.z_draws",
      "ring.y_per_z",
      "ring.samples_out",
      "ring.tau",
      "ring.rho",
      "gen.format",
      "gen.path",
  };
  return keys;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const auto& keys = known_keys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end())
    throw ContractViolation("unknown config key: " + key);
  values_[key] = value;
}

bool ExperimentConfig::has(const std::string& key) const {
  return values_.count(key) > 0;
}

ExperimentConfig ExperimentConfig::from_string(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ContractViolation("config line " + std::to_string(line_no) +
                              ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ContractViolation("config line " + std::to_string(line_no) +
                              ": empty key or value");
    cfg.set(key, value);
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ContractViolation("cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return from_string(text);
}

std::string ExperimentConfig::get_string(const std::string& key,
                                         const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double ExperimentConfig::get_double(const std::string& key,
                                    double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t pos = 0;
    double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ContractViolation("config key " + key + ": not a number: " +
                            it->second);
  }
}

std::size_t ExperimentConfig::get_size(const std::string& key,
                                       std::size_t fallback) const {
  double v = get_double(key, static_cast<double>(fallback));
  if (v < 0 || v != std::floor(v))
    throw ContractViolation("config key " + key +
                            ": expected a non-negative integer");
  return static_cast<std::size_t>(v);
}

std::uint64_t ExperimentConfig::get_u64(const std::string& key,
                                        std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw ContractViolation("config key " + key + ": not an integer: " +
                            it->second);
  }
}

bool ExperimentConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ContractViolation("config key " + key + ": expected true/false");
}

std::vector<std::size_t> ExperimentConfig::get_sizes(
    const std::string& key, const std::vector<std::size_t>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::size_t> out;
  std::istringstream in(it->second);
  std::string part;
  while (std::getline(in, part, ',')) {
    part = trim(part);
    try {
      out.push_back(std::stoul(part));
    } catch (const std::exception&) {
      throw ContractViolation("config key " + key + ": bad integer list");
    }
  }
  if (out.empty())
    throw ContractViolation("config key " + key + ": empty list");
  return out;
}

std::string ExperimentConfig::serialize() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
  return out.str();
}

// ---------------------------------------------------------------- shared

GaussianMixture target_from_config(const ExperimentConfig& cfg) {
  std::string kind = cfg.get_string("target.kind", "two_gaussian");
  if (kind == "two_gaussian") return GaussianMixture::two_gaussian_benchmark();
  if (kind == "single")
    return GaussianMixture::single(cfg.get_double("target.mu", 0.0),
                                   cfg.get_double("target.sigma", 1.0));
  throw ContractViolation("unknown target.kind: " + kind);
}

double exact_divergence_to_gaussian(const std::string& divergence,
                                    const GaussianMixture& target, double mu,
                                    double sigma) {
  const FDivergenceSpec& spec = divergence_by_name(divergence);
  auto [lo, hi] = quad_interval(target, mu, sigma);
  double inv_log_s = std::log(sigma);
  auto model_lp = [mu, sigma, inv_log_s](double x) {
    double z = (x - mu) / sigma;
    return -0.5 * kLogTwoPi - inv_log_s - 0.5 * z * z;
  };
  return exact_fdiv_quadrature(
      spec, Direction::data_to_model,
      [&](double x) { return target.log_prob1(x); }, model_lp, lo, hi);
}

ModeCoverageReport mode_coverage(const Tensor& samples, const Tensor& centers,
                                 double tau, double rho) {
  if (samples.cols() != centers.cols())
    throw ContractViolation("mode_coverage: dimension mismatch");
  ModeCoverageReport report;
  report.tau = tau;
  report.rho = rho;
  report.fractions.assign(centers.rows(), 0.0);
  for (std::size_t n = 0; n < samples.rows(); ++n) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < centers.rows(); ++k) {
      double sq = 0.0;
      for (std::size_t c = 0; c < samples.cols(); ++c) {
        double d = samples(n, c) - centers(k, c);
        sq += d * d;
      }
      if (sq < best) {
        best = sq;
        best_k = k;
      }
    }
    if (best <= rho * rho) report.fractions[best_k] += 1.0;
  }
  for (double& f : report.fractions) f /= static_cast<double>(samples.rows());
  for (double f : report.fractions)
    if (f >= tau) ++report.covered;
  return report;
}

// ---------------------------------------------------------------- exact

FitResult run_exact_fit(const ExperimentConfig& cfg,
                        const std::string& out_dir) {
  auto t0 = std::chrono::steady_clock::now();
  ensure_dir(out_dir);
  write_text(out_dir + "/config.txt", cfg.serialize());
  std::string divergence = cfg.get_string("divergence", "forward_kl");
  GaussianMixture target = target_from_config(cfg);
  std::size_t steps = cfg.get_size("exact.steps", 1500);
  double lr = cfg.get_double("exact.lr", 0.05);
  double h = cfg.get_double("exact.h", 1e-5);

  ParameterSet ps;
  ps.add("exact.mu", Tensor::scalar(cfg.get_double("model.mu0",
                                                   target.mean1())),
         Role::theta);
  ps.add("exact.log_sigma",
         Tensor::scalar(std::log(cfg.get_double(
             "model.sigma0", std::sqrt(target.variance1())))),
         Role::theta);

  auto objective = [&](double mu, double log_sigma) {
    return exact_divergence_to_gaussian(divergence, target, mu,
                                        std::exp(log_sigma));
  };

  Optimizer opt(OptimizerKind::adam, lr, Role::theta);
  std::vector<TraceRow> trace;
  trace.reserve(steps);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  double loss = 0.0;
  for (std::size_t step = 0; step < steps; ++step) {
    double mu = ps.at("exact.mu").value();
    double ls = ps.at("exact.log_sigma").value();
    loss = objective(mu, ls);
    GradientMap grads;
    grads["exact.mu"] =
        Tensor::scalar((objective(mu + h, ls) - objective(mu - h, ls)) /
                       (2.0 * h));
    grads["exact.log_sigma"] =
        Tensor::scalar((objective(mu, ls + h) - objective(mu, ls - h)) /
                       (2.0 * h));
    opt.step(ps, grads);
    trace.push_back({step, "theta", 0.0, loss, nan, nan});
  }
  double mu = ps.at("exact.mu").value();
  double sigma = std::exp(ps.at("exact.log_sigma").value());
  double final_div = objective(mu, ps.at("exact.log_sigma").value());

  write_trace_csv(trace, out_dir + "/trace.csv");
  save_params_json(ps, out_dir + "/params.json");
  json summary;
  summary["experiment"] = "fit-exact";
  summary["divergence"] = divergence;
  summary["seed"] = cfg.get_u64("seed", 0);
  summary["mu"] = mu;
  summary["sigma"] = sigma;
  summary["divergence_value"] = final_div;
  summary["moment_mu"] = target.mean1();
  summary["moment_sigma"] = std::sqrt(target.variance1());
  summary["runtime_seconds"] = elapsed_s(t0);
  write_summary(out_dir, summary);
  return {mu, sigma, final_div};
}

// ---------------------------------------------------------------- ub fit

FitResult run_ub_fit(const ExperimentConfig& cfg, const std::string& out_dir) {
  auto t0 = std::chrono::steady_clock::now();
  ensure_dir(out_dir);
  write_text(out_dir + "/config.txt", cfg.serialize());
  std::string divergence = cfg.get_string("divergence", "forward_kl");
  Rng rng(cfg.get_u64("seed", 0));
  GaussianMixture target = target_from_config(cfg);
  EmpiricalDataset dataset = EmpiricalDataset::sample_from(
      target, cfg.get_size("dataset.size", 2000), rng);
  double sigma_s = cfg.get_double("spread.sigma", 0.1);
  SpreadedEmpirical sdata{dataset, SpreadNoise(sigma_s)};

  JointGaussianModel1D model;
  ParameterSet ps;
  model.init_params(ps, cfg.get_double("model.mu0", 1.5),
                    cfg.get_double("model.w0", 0.5),
                    cfg.get_double("model.sigma0", 0.7));
  Encoder enc("enc", 1, cfg.get_sizes("encoder.hidden", {50, 50}), 1);
  enc.init_params(ps, rng);
  ModelJoint mj = joint_gaussian_joint(model);

  auto [spec, dir] = training_pair(divergence);
  const FDivergenceSpec* spec_ptr = spec;
  Direction direction = dir;
  Objective objective = [&, spec_ptr, direction](
                            Tape& t, const ParameterSet& p, double,
                            Rng& r) -> NodeId {
    if (divergence == "forward_kl")
      return forward_kl_surrogate_loss(t, mj, enc, sdata, p,
                                       cfg.get_size("loop.batch", 100), r);
    return fdiv_upper_bound_loss(t, *spec_ptr, direction, mj, enc, sdata, p,
                                 cfg.get_size("loop.batch", 100), r);
  };
  BoundEval bound_eval = [&, spec_ptr, direction](const ParameterSet& p,
                                                  double, Rng& r) {
    try {
      return upper_bound_estimate(*spec_ptr, direction, mj, enc, sdata, p,
                                  cfg.get_size("bound.samples", 100), r);
    } catch (const NumericFailure&) {
      // Far-apart joints early in training overflow the guarded estimator;
      // the trace reports NaN for those rows instead of aborting the run.
      double nan = std::numeric_limits<double>::quiet_NaN();
      return BoundEstimate{nan, nan, 0, direction, spec_ptr->name};
    }
  };

  Optimizer theta_opt(optimizer_from_name(cfg.get_string("opt.kind", "adam")),
                      cfg.get_double("opt.lr_theta", 1e-3), Role::theta);
  Optimizer phi_opt(optimizer_from_name(cfg.get_string("opt.kind", "adam")),
                    cfg.get_double("opt.lr_phi", 1e-3), Role::phi);
  LoopSchedule schedule;
  schedule.theta_steps = cfg.get_size("loop.theta_steps", 20000);
  schedule.phi_steps_per_theta = cfg.get_size("loop.phi_steps", 1);
  schedule.batch = cfg.get_size("loop.batch", 100);
  schedule.fixed_sigma = sigma_s;

  TrainResult result =
      interleaved_train(objective, theta_opt, phi_opt, ps, schedule,
                        bound_eval, cfg.get_size("bound.every", 500), rng);
  if (result.aborted)
    throw NumericFailure("fit-ub aborted: " + result.abort_reason);

  double mu = model.mu(ps);
  double sigma = model.marginal_sigma(ps);
  double final_div = exact_divergence_to_gaussian(divergence, target, mu,
                                                  sigma);
  write_trace_csv(result.trace, out_dir + "/trace.csv");
  save_params_json(ps, out_dir + "/params.json");
  json summary;
  summary["experiment"] = "fit-ub";
  summary["divergence"] = divergence;
  summary["seed"] = cfg.get_u64("seed", 0);
  summary["mu"] = mu;
  summary["sigma"] = sigma;
  summary["sigma_c"] = model.sigma_c(ps);
  summary["w"] = model.w(ps);
  summary["divergence_value"] = final_div;
  summary["spread_sigma"] = sigma_s;
  summary["encoder_clamp_activations"] = enc.clamp_activations();
  summary["runtime_seconds"] = elapsed_s(t0);
  write_summary(out_dir, summary);
  return {mu, sigma, final_div};
}

// ---------------------------------------------------------------- lb fit

FitResult run_lb_fit(const ExperimentConfig& cfg, const std::string& out_dir) {
  auto t0 = std::chrono::steady_clock::now();
  ensure_dir(out_dir);
  write_text(out_dir + "/config.txt", cfg.serialize());
  std::string divergence = cfg.get_string("divergence", "forward_kl");
  const FDivergenceSpec& spec = divergence_by_name(divergence);
  Rng rng(cfg.get_u64("seed", 0));
  GaussianMixture target = target_from_config(cfg);

  GaussianModel1D model;
  ParameterSet ps;
  model.init_params(ps, cfg.get_double("model.mu0", 0.0),
                    cfg.get_double("model.sigma0", 1.0));
  Discriminator disc("disc", 1, cfg.get_sizes("fgan.disc_hidden", {64, 64}),
                     divergence);
  disc.init_params(ps, rng);

  FganSchedule schedule;
  schedule.steps = cfg.get_size("fgan.steps", 20000);
  schedule.lr_model = cfg.get_double("opt.lr_theta", 1e-3);
  // The -exp(V) activation for reverse KL lets the critic run away at the
  // usual rate; a slower critic keeps the bound finite across seeds.
  double default_lr_disc = divergence == "reverse_kl" ? 1e-4 : 1e-3;
  schedule.lr_disc = cfg.get_double("opt.lr_phi", default_lr_disc);
  schedule.disc_steps_per_model_step = cfg.get_size("fgan.disc_steps", 1);
  schedule.batch = cfg.get_size("fgan.batch", 100);
  schedule.quad_every = cfg.get_size("fgan.quad_every", 1000);

  FganResult result =
      fgan_train(spec, target, model, disc, ps, schedule, rng);

  std::ofstream trace(out_dir + "/trace.csv");
  if (!trace) throw ContractViolation("cannot open trace.csv");
  trace << "step,bound,mu,sigma,exact_divergence\n";
  trace.precision(12);
  for (const auto& row : result.trace) {
    trace << row.step << ',' << row.bound << ',' << row.mu << ',' << row.sigma
          << ',';
    if (!std::isnan(row.exact_divergence)) trace << row.exact_divergence;
    trace << '\n';
  }
  trace.close();

  double mu = model.mu(ps);
  double sigma = model.sigma(ps);
  double final_div = exact_divergence_to_gaussian(divergence, target, mu,
                                                  sigma);
  save_params_json(ps, out_dir + "/params.json");
  json summary;
  summary["experiment"] = "fit-lb";
  summary["divergence"] = divergence;
  summary["seed"] = cfg.get_u64("seed", 0);
  summary["mu"] = mu;
  summary["sigma"] = sigma;
  summary["divergence_value"] = final_div;
  summary["diverged"] = result.diverged;
  summary["runtime_seconds"] = elapsed_s(t0);
  write_summary(out_dir, summary);
  if (result.diverged)
    throw NumericFailure("fit-lb: training diverged (|bound| > 1e3)");
  return {mu, sigma, final_div};
}

// ---------------------------------------------------------------- ring

RingResult run_toy_ring(const ExperimentConfig& cfg,
                        const std::string& out_dir) {
  auto t0 = std::chrono::steady_clock::now();
  ensure_dir(out_dir);
  write_text(out_dir + "/config.txt", cfg.serialize());
  std::string divergence = cfg.get_string("divergence", "reverse_kl");
  if (divergence != "forward_kl" && divergence != "reverse_kl" &&
      divergence != "js")
    throw ContractViolation("toy-ring supports forward_kl, reverse_kl, js");
  Rng rng(cfg.get_u64("seed", 0));

  std::size_t modes = cfg.get_size("ring.modes", 7);
  GaussianMixture ring = GaussianMixture::ring(
      modes, cfg.get_double("ring.radius", 1.0), cfg.get_double("ring.std",
                                                                0.05));
  Tensor rot = ring_embedding();
  EmpiricalDataset flat = EmpiricalDataset::sample_from(
      ring, cfg.get_size("dataset.size", 1400), rng);
  EmpiricalDataset dataset(embed_3d(flat.points, rot));
  dataset.save_csv(out_dir + "/dataset.csv");
  Tensor centers = embed_3d(ring.means, rot);

  std::size_t latent = cfg.get_size("latent_dim", 2);
  ImplicitGenerator gen(
      "gen", latent,
      cfg.get_sizes("generator.hidden", {400, 400, 400, 400, 400}), 3);
  Encoder enc("enc", 3, cfg.get_sizes("encoder.hidden", {256, 256}), latent);
  ParameterSet ps;
  gen.init_params(ps, rng);
  enc.init_params(ps, rng);

  std::size_t z_draws = cfg.get_size("ring.z_draws", 100);
  std::size_t y_per_z = cfg.get_size("ring.y_per_z", 10);
  IndexSamplerConfig logmix_cfg;
  logmix_cfg.temperature = cfg.get_double("logmix.temperature", 10.0);
  logmix_cfg.samples_per_y = cfg.get_size("logmix.samples", 30);
  logmix_cfg.use_unbiased = cfg.get_bool("logmix.unbiased", true);
  if (!logmix_cfg.use_unbiased)
    logmix_cfg.pca.emplace(
        fit_pca(dataset, cfg.get_size("logmix.pca_dim", 2)));

  // Model-side objective with the 100 x 10 fan-out: z feeds the generator
  // once, each mean row is reused for y_per_z noise draws.
  auto model_side_loss = [&](Tape& t, const ParameterSet& p, double sigma,
                             Rng& r) -> NodeId {
    Tensor z_small = r.normal_tensor({z_draws, latent});
    NodeId mean = gen.mean(t, p, t.constant(z_small));
    NodeId mean_t = repeat_rows(t, mean, y_per_z);
    std::size_t b = z_draws * y_per_z;
    Tensor eps = r.normal_tensor({b, 3});
    for (std::size_t i = 0; i < eps.size(); ++i) eps[i] *= sigma;
    NodeId y = t.add(mean_t, t.constant(std::move(eps)));
    NodeId z = t.constant(tile_rows(z_small, y_per_z));
    NodeId log_cond = gaussian_log_prob_rows_iso(t, mean_t, sigma, y);
    NodeId log_prior = standard_normal_log_prob_rows(t, z);
    auto [qm, qlv] = enc.forward(t, p, y);
    NodeId log_q = gaussian_log_prob_rows(t, qm, qlv, z);
    if (divergence == "reverse_kl") {
      SpreadNoise noise(sigma);
      NodeId surrogate = logmix_surrogate_rows(
          t, dataset, noise, y, t.value(mean_t), logmix_cfg, r);
      return t.mean(t.subtract(t.add(log_cond, log_prior),
                               t.add(log_q, surrogate)));
    }
    NodeId log_phat = spread_log_prob_rows(t, y, dataset, sigma);
    NodeId log_r = t.subtract(t.add(log_cond, log_prior),
                              t.add(log_phat, log_q));
    return t.mean(fdiv_integrand(t, divergence_by_name(divergence), log_r));
  };

  // Data-side objective: a plain minibatch of spreaded draws. The
  // 100 x 10 fan-out above only pays off for model-side sampling where
  // the generator pass is shared across the y draws; here every row
  // needs its own generator evaluation, so the batch stays small.
  auto data_side_loss = [&](Tape& t, const ParameterSet& p, double sigma,
                            Rng& r) -> NodeId {
    SpreadedEmpirical sd{dataset, SpreadNoise(sigma)};
    return forward_kl_surrogate_loss(t, generator_joint(gen, sigma), enc, sd,
                                     p, cfg.get_size("loop.batch", 100), r);
  };
  Objective objective = [&](Tape& t, const ParameterSet& p, double sigma,
                            Rng& r) -> NodeId {
    if (divergence == "forward_kl") return data_side_loss(t, p, sigma, r);
    return model_side_loss(t, p, sigma, r);
  };

  OptimizerKind opt_kind =
      optimizer_from_name(cfg.get_string("opt.kind", "adam"));
  double lr_theta = cfg.get_double("opt.lr_theta", 1e-3);
  Optimizer phi_opt(opt_kind, cfg.get_double("opt.lr_phi", 1e-3), Role::phi);
  LoopSchedule schedule;
  // The data-side (forward) objective runs 100-row minibatches instead of
  // the 1000-row model-side fan-out, so it gets twice the steps for a
  // comparable sample budget; 3000 steps leave it short of convergence.
  schedule.theta_steps = cfg.get_size(
      "loop.theta_steps", divergence == "forward_kl" ? 6000 : 3000);
  schedule.phi_steps_per_theta = cfg.get_size("loop.phi_steps", 1);

  // Optional warm start (default off): spend the first
  // `loop.warm_start_steps` steps of the same geometric anneal on the
  // data-side (forward-KL) objective before switching to the requested
  // divergence. Without it JS either saturates at log(2)/2 (the joints
  // separate mid-anneal and the gradient vanishes) or drops modes.
  std::size_t warm_steps = divergence == "forward_kl"
                               ? 0
                               : cfg.get_size("loop.warm_start_steps", 0);
  double sigma_start = cfg.get_double("anneal.start", 1.0);
  double sigma_end = cfg.get_double("anneal.end", 0.1);
  double sigma_mid = sigma_start;
  TrainResult result;
  if (warm_steps > 0) {
    std::size_t total = warm_steps + schedule.theta_steps;
    sigma_mid = sigma_start * std::pow(sigma_end / sigma_start,
                                       double(warm_steps) / double(total));
    LoopSchedule warm = schedule;
    warm.theta_steps = warm_steps;
    // The data-side phase needs no extra encoder refreshes: its phi and
    // theta steps evaluate the same ELBO, so one phi step per theta step
    // already keeps the encoder current. `loop.phi_steps` only buys
    // anything for the saturating model-side divergences that follow.
    warm.phi_steps_per_theta = 1;
    warm.anneal.emplace(sigma_start, sigma_mid, warm_steps);
    Optimizer warm_theta_opt(opt_kind, lr_theta, Role::theta);
    result = interleaved_train(Objective(data_side_loss), warm_theta_opt,
                               phi_opt, ps, warm, BoundEval{}, 0, rng);
  }
  schedule.anneal.emplace(sigma_mid, sigma_end, schedule.theta_steps);
  if (!result.aborted) {
    // Post-warm-start generator steps default 10x smaller: near the handover
    // optimum the bounded-f gradients carry almost no signal between modes,
    // and Adam's noise-floor step size otherwise diffuses mass out of the
    // thinner modes faster than the objective can pull it back.
    Optimizer theta_opt(
        opt_kind,
        cfg.get_double("opt.lr_theta_post",
                       warm_steps > 0 ? lr_theta * 0.1 : lr_theta),
        Role::theta);
    TrainResult main_phase = interleaved_train(objective, theta_opt, phi_opt,
                                               ps, schedule, BoundEval{}, 0,
                                               rng);
    for (auto& row : main_phase.trace) row.step += warm_steps;
    result.trace.insert(result.trace.end(), main_phase.trace.begin(),
                        main_phase.trace.end());
    result.aborted = main_phase.aborted;
    result.abort_reason = main_phase.abort_reason;
  }
  write_trace_csv(result.trace, out_dir + "/trace.csv");
  save_params_json(ps, out_dir + "/params.json");

  // Generator means (noise inverted) for the sample file and coverage.
  std::size_t n_out = cfg.get_size("ring.samples_out", 10000);
  Tensor samples = Tensor::zeros({n_out, 3});
  const std::size_t chunk = 1000;
  for (std::size_t done = 0; done < n_out;) {
    std::size_t b = std::min(chunk, n_out - done);
    Tape t;
    NodeId mean = gen.mean(t, ps, t.constant(rng.normal_tensor({b, latent})));
    const Tensor& m = t.value(mean);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t c = 0; c < 3; ++c) samples(done + i, c) = m(i, c);
    done += b;
  }
  EmpiricalDataset(samples).save_csv(out_dir + "/samples.csv");

  // Encoder means at the data points.
  {
    Tape t;
    auto [qm, qlv] = enc.forward(t, ps, t.constant(dataset.points));
    EmpiricalDataset(t.value(qm)).save_csv(out_dir + "/latents.csv");
  }

  ModeCoverageReport coverage =
      mode_coverage(samples, centers, cfg.get_double("ring.tau", 0.02),
                    cfg.get_double("ring.rho", 0.15));
  json summary;
  summary["experiment"] = "toy-ring";
  summary["divergence"] = divergence;
  summary["seed"] = cfg.get_u64("seed", 0);
  summary["modes"] = modes;
  summary["covered_modes"] = coverage.covered;
  summary["mode_fractions"] = coverage.fractions;
  summary["tau"] = coverage.tau;
  summary["rho"] = coverage.rho;
  summary["aborted"] = result.aborted;
  summary["abort_reason"] = result.abort_reason;
  summary["runtime_seconds"] = elapsed_s(t0);
  write_summary(out_dir, summary);
  return {coverage, result.aborted};
}

// ---------------------------------------------------------------- checks

namespace {

struct CheckSink {
  json items = json::array();
  bool all_ok = true;

  void report(const std::string& name, bool ok, double value,
              double threshold) {
    json item;
    item["name"] = name;
    item["ok"] = ok;
    item["value"] = value;
    item["threshold"] = threshold;
    items.push_back(item);
    all_ok = all_ok && ok;
    std::printf("%-44s %s  (%.3e vs %.1e)\n", name.c_str(),
                ok ? "PASS" : "FAIL", value, threshold);
  }
};

}  // namespace

double finite_difference_suite(int trials, Rng& rng) {
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    std::size_t in = 1 + rng.uniform_index(4);
    std::size_t hid = 2 + rng.uniform_index(6);
    std::size_t out = 1 + rng.uniform_index(3);
    Mlp net("net", in, {hid, hid}, out);
    // Central differences are only valid away from the leaky-relu kinks;
    // redraw parameters and probe input until every pre-activation clears
    // a margin wide enough to survive the +-eps perturbations. The input
    // alone is not enough: a near-zero weight row pins its pre-activation
    // at the bias no matter what the input is.
    ParameterSet ps;
    Tensor x;
    for (int attempt = 0; attempt < 100; ++attempt) {
      ps = ParameterSet();
      net.init_params(ps, Role::theta, rng);
      x = rng.normal_tensor({3, in});
      Tape probe;
      net.forward(probe, ps, probe.constant(x));
      double margin = 1e300;
      for (NodeId id = 0; id < static_cast<NodeId>(probe.num_nodes());
           ++id) {
        const Tape::Node& n = probe.node(id);
        if (n.kind != OpKind::leaky_relu) continue;
        const Tensor& pre = probe.value(n.parents[0]);
        for (std::size_t i = 0; i < pre.size(); ++i)
          margin = std::min(margin, std::abs(pre[i]));
      }
      if (margin > 5e-3) break;
    }
    auto build = [&](Tape& t, const ParameterSet& p) {
      NodeId h = net.forward(t, p, t.constant(x));
      return t.mean(t.add(t.square(h), t.exp(t.scale(h, 0.3))));
    };
    worst = std::max(worst, gradient_check(build, ps));
  }
  return worst;
}

double quadrature_consistency_suite(int trials, Rng& rng) {
  double worst = 0.0;
  const FDivergenceSpec& fwd = divergence_by_name("forward_kl");
  for (int trial = 0; trial < trials; ++trial) {
    double m0 = 2.0 * rng.normal(), s0 = 0.5 + rng.uniform();
    double m1 = 2.0 * rng.normal(), s1 = 0.5 + rng.uniform();
    GaussianMixture p = GaussianMixture::single(m0, s0);
    double quad = exact_fdiv_quadrature(
        fwd, Direction::data_to_model,
        [&](double x) { return p.log_prob1(x); },
        [&](double x) {
          double z = (x - m1) / s1;
          return -0.5 * kLogTwoPi - std::log(s1) - 0.5 * z * z;
        },
        std::min(m0 - 12 * s0, m1 - 12 * s1),
        std::max(m0 + 12 * s0, m1 + 12 * s1));
    double closed = gaussian_kl_closed_form(
        {Tensor::vector({m0}), Tensor::vector({2 * std::log(s0)})},
        {Tensor::vector({m1}), Tensor::vector({2 * std::log(s1)})});
    worst = std::max(worst, std::abs(quad - closed));
  }
  return worst;
}

int jensen_suite(int trials, std::size_t bound_samples, Rng& rng) {
  GaussianMixture target = GaussianMixture::two_gaussian_benchmark();
  EmpiricalDataset data = EmpiricalDataset::sample_from(target, 300, rng);
  // A wide spread keeps the data-side density heavy enough in the tails
  // that joint log-ratios of far-out model samples stay inside the
  // overflow guard; the inequality being tested is spread-invariant.
  SpreadedEmpirical sdata{data, SpreadNoise(0.5)};
  int violations = 0;
  for (int trial = 0; trial < trials; ++trial) {
    JointGaussianModel1D model;
    ParameterSet ps;
    // Ranges keep the two marginals at a similar location and scale (the
    // spreaded data sits near mean 1.7, std 0.8). The numerator-side
    // sampler carries f(r)/r importance weights, so whichever side is the
    // numerator must cover the other: a model too narrow starves the
    // model_to_data estimate, one too wide starves data_to_model, and
    // either looks like a (spurious) inequality violation at a finite
    // sample budget.
    model.init_params(ps, 1.7 + 0.1 * rng.normal(),
                      0.45 + 0.2 * rng.uniform(),
                      0.5 + 0.2 * rng.uniform());
    Encoder enc("enc", 1, {16, 16}, 1);
    enc.init_params(ps, rng);
    // Keep the random recognition density moderate: a wild log-variance
    // head drives the joint log-ratio past the overflow guard, which is
    // a numeric failure, not an inequality violation.
    for (const std::string& name : ps.names(Role::phi)) {
      Tensor& v = ps.at(name);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] *= 0.1;
    }
    ModelJoint mj = joint_gaussian_joint(model);
    for (const auto& spec : all_divergences()) {
      for (Direction dir :
           {Direction::data_to_model, Direction::model_to_data}) {
        BoundEstimate est = upper_bound_estimate(spec, dir, mj, enc, sdata,
                                                 ps, bound_samples, rng);
        double mu = model.mu(ps), sg = model.marginal_sigma(ps);
        auto [lo, hi] = quad_interval(target, mu, sg);
        auto lp_data = [&](double x) { return sdata.log_prob(
            Tensor::vector({x})); };
        auto lp_model = [&](double x) {
          double z = (x - mu) / sg;
          return -0.5 * kLogTwoPi - std::log(sg) - 0.5 * z * z;
        };
        double marginal = exact_fdiv_quadrature(spec, dir, lp_data,
                                                lp_model, lo, hi);
        if (est.value + 3.0 * est.std_error < marginal) {
          ++violations;
          std::printf(
              "  jensen violation: %s %s trial=%d est=%.6f se=%.6f "
              "marginal=%.6f\n",
              spec.name.c_str(), direction_name(dir), trial, est.value,
              est.std_error, marginal);
        }
      }
    }
  }
  return violations;
}

double elbo_identity_gap(Rng& rng) {
  GaussianMixture target = GaussianMixture::two_gaussian_benchmark();
  EmpiricalDataset data = EmpiricalDataset::sample_from(target, 100, rng);
  SpreadedEmpirical sdata{data, SpreadNoise(0.2)};
  JointGaussianModel1D model;
  ParameterSet ps;
  model.init_params(ps, 1.0, 0.5, 0.5);
  Encoder enc("enc", 1, {16, 16}, 1);
  enc.init_params(ps, rng);
  ModelJoint mj = joint_gaussian_joint(model);
  Rng r1(42), r2(42);
  Tape t;
  double loss =
      t.value(forward_kl_surrogate_loss(t, mj, enc, sdata, ps, 64, r1))
          .value();
  Tape t2;
  NodeId y = t2.constant([&] {
    Tensor ys = Tensor::zeros({64, 1});
    for (std::size_t i = 0; i < 64; ++i) ys(i, 0) = sdata.sample(r2)[0];
    return ys;
  }());
  NodeId rows = elbo_rows(t2, mj, enc, ps, y, r2.normal_tensor({64, 1}));
  double neg_elbo = -t2.value(t2.mean(rows)).value();
  return std::abs(loss - neg_elbo);
}

double logmix_error_suite(int draws, Rng& rng) {
  Tensor pts = rng.normal_tensor({64, 2});
  EmpiricalDataset data(pts);
  SpreadNoise noise(0.5);
  ImplicitGenerator gen("gen", 2, {8}, 2);
  ParameterSet ps;
  gen.init_params(ps, rng);
  Tensor z = rng.normal_tensor({2});
  Tensor eps = rng.normal_tensor({2});
  auto build_mean = [&](Tape& t, NodeId zn) { return gen.mean(t, ps, zn); };
  GradientMap oracle = full_sum_gradient(data, noise, build_mean, z, eps);
  IndexSamplerConfig icfg;
  GradientMap acc;
  for (int d = 0; d < draws; ++d) {
    Tape t;
    NodeId zn = t.constant(Tensor({1, 2}, z.raw()));
    NodeId mean = gen.mean(t, ps, zn);
    std::vector<double> se = eps.raw();
    for (double& v : se) v *= noise.sigma;
    NodeId y = t.add(mean, t.constant(Tensor({1, 2}, se)));
    NodeId s = logmix_surrogate_rows(t, data, noise, y, t.value(mean),
                                     icfg, rng);
    GradientMap g = t.backward(t.sum(s));
    for (auto& [k, v] : g) {
      auto it = acc.find(k);
      if (it == acc.end())
        acc.emplace(k, v);
      else
        for (std::size_t i = 0; i < v.size(); ++i) it->second[i] += v[i];
    }
  }
  // Per-coordinate error normalized by the oracle gradient's largest
  // coordinate; normalizing by |o_i| itself would let near-zero
  // coordinates report pure Monte Carlo noise.
  double onorm = 0.0;
  for (auto& [k, v] : oracle)
    for (std::size_t i = 0; i < v.size(); ++i)
      onorm = std::max(onorm, std::abs(v[i]));
  double worst = 0.0;
  for (auto& [k, v] : acc) {
    const Tensor& o = oracle.at(k);
    for (std::size_t i = 0; i < v.size(); ++i) {
      double est = v[i] / draws;
      worst = std::max(worst, std::abs(est - o[i]) / onorm);
    }
  }
  return worst;
}

double naive_minibatch_deficit_sigmas(std::size_t minibatch_size, int draws,
                                      Rng& rng) {
  GaussianMixture target = GaussianMixture::two_gaussian_benchmark();
  EmpiricalDataset data = EmpiricalDataset::sample_from(target, 256, rng);
  SpreadNoise noise(0.2);
  SpreadedEmpirical sdata{data, noise};
  // Jensen again, in the other costume: E log (1/M) sum_minibatch N(...)
  // sits strictly below log p_hat(y) because the average inside the log is
  // only an unbiased estimate of the full mixture.
  double sum = 0.0, sumsq = 0.0;
  for (int d = 0; d < draws; ++d) {
    Tensor y = Tensor::vector({sdata.sample(rng)[0]});
    std::vector<std::size_t> batch(minibatch_size);
    for (std::size_t& idx : batch) idx = rng.uniform_index(data.num_points());
    double full = sdata.log_prob(y);
    double naive = naive_minibatch_log_prob(data, noise, y, batch);
    double deficit = full - naive;
    sum += deficit;
    sumsq += deficit * deficit;
  }
  double n = static_cast<double>(draws);
  double mean = sum / n;
  double var = (sumsq - n * mean * mean) / (n - 1.0);
  double se = std::sqrt(var / n);
  return mean / se;
}

bool run_grad_check(const ExperimentConfig& cfg, const std::string& out_dir) {
  auto t0 = std::chrono::steady_clock::now();
  ensure_dir(out_dir);
  write_text(out_dir + "/config.txt", cfg.serialize());
  Rng rng(cfg.get_u64("seed", 7));
  CheckSink sink;

  {
    double worst = finite_difference_suite(200, rng);
    sink.report("finite_difference_random_nets", worst <= 1e-5, worst, 1e-5);
  }
  {
    double worst = quadrature_consistency_suite(20, rng);
    sink.report("quadrature_vs_closed_form_kl", worst <= 1e-6, worst, 1e-6);
  }
  for (const char* name :
       {"tightness", "independence_decomposition", "factorized"}) {
    AppendixOracleReport r = appendix_a_oracle(name);
    sink.report(std::string("identity_") + name, r.discrepancy <= 1e-10,
                r.discrepancy, 1e-10);
  }
  {
    int violations = jensen_suite(50, 10000, rng);
    sink.report("jensen_violations", violations == 0,
                static_cast<double>(violations), 0.0);
  }
  {
    double diff = elbo_identity_gap(rng);
    sink.report("elbo_identity", diff <= 1e-12, diff, 1e-12);
  }
  {
    Rng r(11);
    double worst = logmix_error_suite(20000, r);
    sink.report("logmix_vs_full_sum_20k_draws", worst <= 0.05, worst, 0.05);
  }
  {
    double sigmas = naive_minibatch_deficit_sigmas(8, 4000, rng);
    sink.report("naive_minibatch_bias_sigmas", sigmas > 3.0, sigmas, 3.0);
  }

  json summary;
  summary["experiment"] = "grad-check";
  summary["seed"] = cfg.get_u64("seed", 7);
  summary["checks"] = sink.items;
  summary["all_ok"] = sink.all_ok;
  summary["runtime_seconds"] = elapsed_s(t0);
  write_summary(out_dir, summary);
  return sink.all_ok;
}

// ---------------------------------------------------------------- compare

void run_compare(const ExperimentConfig& cfg, const std::string& out_dir) {
  ensure_dir(out_dir);
  write_text(out_dir + "/config.txt", cfg.serialize());
  const std::vector<std::string> divs = {"forward_kl", "reverse_kl", "js"};
  std::map<std::string, FitResult> exact, ub, lb;
  for (const std::string& d : divs) {
    ExperimentConfig sub = cfg;
    sub.set("divergence", d);
    exact[d] = run_exact_fit(sub, out_dir + "/exact_" + d);
    ub[d] = run_ub_fit(sub, out_dir + "/ub_" + d);
    lb[d] = run_lb_fit(sub, out_dir + "/lb_" + d);
  }
  std::ofstream f(out_dir + "/compare.csv");
  if (!f) throw ContractViolation("cannot open compare.csv");
  f.precision(6);
  f << "row";
  for (const std::string& d : divs) f << ',' << d;
  f << '\n';
  auto emit = [&](const std::string& row,
                  const std::function<double(const FitResult&)>& pick,
                  std::map<std::string, FitResult>& src) {
    f << row;
    for (const std::string& d : divs) f << ',' << pick(src[d]);
    f << '\n';
  };
  emit("F_star", [](const FitResult& r) { return r.divergence_value; },
       exact);
  emit("F_LB", [](const FitResult& r) { return r.divergence_value; }, lb);
  emit("F_UB", [](const FitResult& r) { return r.divergence_value; }, ub);
  emit("mu_star", [](const FitResult& r) { return r.mu; }, exact);
  emit("mu_LB", [](const FitResult& r) { return r.mu; }, lb);
  emit("mu_UB", [](const FitResult& r) { return r.mu; }, ub);
  emit("sigma_star", [](const FitResult& r) { return r.sigma; }, exact);
  emit("sigma_LB", [](const FitResult& r) { return r.sigma; }, lb);
  emit("sigma_UB", [](const FitResult& r) { return r.sigma; }, ub);
}

// ---------------------------------------------------------------- data

void run_gen_data(const ExperimentConfig& cfg, const std::string& out_dir) {
  ensure_dir(out_dir);
  write_text(out_dir + "/config.txt", cfg.serialize());
  Rng rng(cfg.get_u64("seed", 0));
  GaussianMixture target = target_from_config(cfg);
  EmpiricalDataset data = EmpiricalDataset::sample_from(
      target, cfg.get_size("dataset.size", 1000), rng);
  std::string format = cfg.get_string("gen.format", "csv");
  std::string path =
      out_dir + "/" + cfg.get_string("gen.path", format == "csv"
                                                     ? "dataset.csv"
                                                     : "dataset.bin");
  if (format == "csv")
    data.save_csv(path);
  else if (format == "binary")
    data.save_binary(path);
  else
    throw ContractViolation("gen.format must be csv or binary");
  json summary;
  summary["experiment"] = "gen-data";
  summary["seed"] = cfg.get_u64("seed", 0);
  summary["n"] = data.num_points();
  summary["d"] = data.dim();
  summary["path"] = path;
  write_summary(out_dir, summary);
}

}  // namespace fdivmin
