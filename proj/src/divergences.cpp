#include "fdivmin/divergences.hpp"

#include <cmath>
#include <sstream>

#include "fdivmin/errors.hpp"

namespace fdivmin {

namespace {

constexpr double kLog2 = 0.6931471805599453;

double softplus(double x) {
  return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0);
}
double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

void require_positive(double u) {
  if (!(u > 0.0))
    throw DomainViolation("f-divergence: ratio u must be > 0, got " +
                          std::to_string(u));
}

// ---- forward KL: f(u) = u log u
double fkl_f(double u) { return u * std::log(u); }
double fkl_fp(double u) { return std::log(u) + 1.0; }
double fkl_conj(double t) { return std::exp(t - 1.0); }
bool fkl_dom(double) { return true; }
double fkl_act(double v) { return v; }
double fkl_int(double L) { return L; }
double fkl_intd(double) { return 1.0; }

// ---- reverse KL: f(u) = -log u
double rkl_f(double u) { return -std::log(u); }
double rkl_fp(double u) { return -1.0 / u; }
double rkl_conj(double t) { return -1.0 - std::log(-t); }
bool rkl_dom(double t) { return t < 0.0; }
double rkl_act(double v) { return -std::exp(v); }
double rkl_int(double L) { return -L * std::exp(-L); }
double rkl_intd(double L) { return (L - 1.0) * std::exp(-L); }

// ---- Jensen-Shannon, 1/2-weighted so the divergence is the conventional
// JS(p, q) = [KL(p||m) + KL(q||m)] / 2 with m = (p+q)/2 (reported values
// use this normalization):
// f(u) = [u log u - (u+1) log((1+u)/2)] / 2
double js_f(double u) {
  return 0.5 *
         (-(u + 1.0) * std::log(0.5 * (1.0 + u)) + u * std::log(u));
}
double js_fp(double u) { return 0.5 * std::log(2.0 * u / (1.0 + u)); }
double js_conj(double t) { return -0.5 * std::log(2.0 - std::exp(2.0 * t)); }
bool js_dom(double t) { return t < 0.5 * kLog2; }
double js_act(double v) { return 0.5 * (kLog2 - softplus(-v)); }
double js_int(double L) {
  return 0.5 * (L - (1.0 + std::exp(-L)) * (softplus(L) - kLog2));
}
double js_intd(double L) {
  return 0.5 * (1.0 + std::exp(-L) * (softplus(L) - kLog2) -
                (1.0 + std::exp(-L)) * sigmoid(L));
}

// ---- GAN: table f(u) = -(u+1) log(1+u) + u log u has f(1) = -log 4;
// stored shifted by +2 log 2 so f(1) = 0.
double gan_f(double u) {
  return -(u + 1.0) * std::log(1.0 + u) + u * std::log(u) + 2.0 * kLog2;
}
double gan_fp(double u) { return std::log(u / (1.0 + u)); }
double gan_conj(double t) {
  return -std::log(-std::expm1(t)) - 2.0 * kLog2;
}
bool gan_dom(double t) { return t < 0.0; }
double gan_act(double v) { return -softplus(-v); }
double gan_int(double L) {
  return L - (1.0 + std::exp(-L)) * softplus(L) + 2.0 * kLog2 * std::exp(-L);
}
double gan_intd(double L) {
  return 1.0 + std::exp(-L) * softplus(L) -
         (1.0 + std::exp(-L)) * sigmoid(L) - 2.0 * kLog2 * std::exp(-L);
}

// q f(p/q) directly from (log p, log q); each term pairs exp of a log
// density with a softplus-bounded factor, so tails underflow to 0 instead
// of producing 0 * inf.
double fkl_qf(double lp, double lq) { return std::exp(lp) * (lp - lq); }
double rkl_qf(double lp, double lq) { return -std::exp(lq) * (lp - lq); }
double js_qf(double lp, double lq) {
  double L = lp - lq;
  double sp = softplus(L);
  return 0.5 * (std::exp(lp) * (L + kLog2 - sp) + std::exp(lq) * (kLog2 - sp));
}
double gan_qf(double lp, double lq) {
  double L = lp - lq;
  double sp = softplus(L);
  return std::exp(lp) * (L - sp) + std::exp(lq) * (2.0 * kLog2 - sp);
}

const std::vector<FDivergenceSpec> kRegistry = {
    {"forward_kl", fkl_f, fkl_fp, fkl_conj, fkl_dom, fkl_act, 0.0, fkl_int,
     fkl_intd, fkl_qf},
    {"reverse_kl", rkl_f, rkl_fp, rkl_conj, rkl_dom, rkl_act, 0.0, rkl_int,
     rkl_intd, rkl_qf},
    {"js", js_f, js_fp, js_conj, js_dom, js_act, 0.0, js_int, js_intd, js_qf},
    {"gan", gan_f, gan_fp, gan_conj, gan_dom, gan_act, 2.0 * kLog2, gan_int,
     gan_intd, gan_qf},
};

}  // namespace

Direction direction_from_name(const std::string& name) {
  if (name == "data_to_model") return Direction::data_to_model;
  if (name == "model_to_data") return Direction::model_to_data;
  throw ContractViolation("unknown direction: " + name);
}

const char* direction_name(Direction d) {
  return d == Direction::data_to_model ? "data_to_model" : "model_to_data";
}

double f_eval(const FDivergenceSpec& spec, double u) {
  require_positive(u);
  return spec.f(u);
}

double f_prime_eval(const FDivergenceSpec& spec, double u) {
  require_positive(u);
  return spec.f_prime(u);
}

double conjugate_eval(const FDivergenceSpec& spec, double t) {
  if (!spec.in_conjugate_domain(t))
    throw DomainViolation(spec.name + ": t=" + std::to_string(t) +
                          " outside conjugate domain");
  return spec.conjugate(t);
}

double output_activation_eval(const FDivergenceSpec& spec, double v) {
  return spec.activation(v);
}

const FDivergenceSpec& divergence_by_name(const std::string& name) {
  for (const auto& s : kRegistry)
    if (s.name == name) return s;
  throw ContractViolation("unknown divergence: " + name);
}

const std::vector<FDivergenceSpec>& all_divergences() { return kRegistry; }

NodeId fdiv_integrand(Tape& t, const FDivergenceSpec& spec,
                      NodeId log_ratio) {
  auto fn = spec.integrand_from_log_ratio;
  auto dfn = spec.integrand_derivative;
  ForwardFn fwd = [fn](const std::vector<const Tensor*>& p) {
    Tensor out = *p[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(out[i]);
    return out;
  };
  BackwardFn bwd = [dfn](const Tensor& g, const std::vector<const Tensor*>& p,
                         const Tensor&, std::vector<Tensor*>& pg) {
    if (!pg[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i)
      (*pg[0])[i] += g[i] * dfn((*p[0])[i]);
  };
  return t.custom("fdiv_integrand_" + spec.name, {log_ratio}, std::move(fwd),
                  std::move(bwd));
}

namespace {

struct SimpsonState {
  const std::function<double(double)>* integrand;
  double worst_unconverged = 0.0;
  long evals = 0;
};

double simpson(double h, double fa, double fm, double fb) {
  return (fa + 4.0 * fm + fb) * h / 6.0;
}

double adapt(SimpsonState& st, double a, double m, double b, double fa,
             double fm, double fb, double whole, double tol, int depth,
             int max_depth) {
  double lm = 0.5 * (a + m);
  double rm = 0.5 * (m + b);
  double flm = (*st.integrand)(lm);
  double frm = (*st.integrand)(rm);
  st.evals += 2;
  double left = simpson(m - a, fa, flm, fm);
  double right = simpson(b - m, fm, frm, fb);
  double err = left + right - whole;
  if (std::abs(err) <= 15.0 * tol)
    return left + right + err / 15.0;
  if (depth >= max_depth) {
    st.worst_unconverged = std::max(st.worst_unconverged, std::abs(err));
    return left + right + err / 15.0;
  }
  return adapt(st, a, lm, m, fa, flm, fm, left, 0.5 * tol, depth + 1,
               max_depth) +
         adapt(st, m, rm, b, fm, frm, fb, right, 0.5 * tol, depth + 1,
               max_depth);
}

}  // namespace

double exact_fdiv_quadrature(const FDivergenceSpec& spec, Direction direction,
                             const std::function<double(double)>& log_p_data,
                             const std::function<double(double)>& log_p_model,
                             double lo, double hi, double abs_tol,
                             int max_depth) {
  if (!(hi > lo)) throw ContractViolation("quadrature: bad interval");
  auto integrand = [&](double x) {
    double lp, lq;
    if (direction == Direction::data_to_model) {
      lp = log_p_data(x);
      lq = log_p_model(x);
    } else {
      lp = log_p_model(x);
      lq = log_p_data(x);
    }
    double val = spec.q_times_f(lp, lq);
    if (!std::isfinite(val))
      throw NumericFailure("quadrature: non-finite integrand at x=" +
                           std::to_string(x));
    return val;
  };

  std::function<double(double)> integrand_fn = integrand;
  SimpsonState st{&integrand_fn};
  // Composite start: a single three-point panel can step right over a
  // narrow density peak and "converge" to zero, so the interval is first
  // cut into fixed panels and each one is refined adaptively.
  constexpr int kPanels = 64;
  double out = 0.0;
  double panel_tol = abs_tol / kPanels;
  double width = (hi - lo) / kPanels;
  for (int k = 0; k < kPanels; ++k) {
    double a = lo + k * width;
    double b = k + 1 == kPanels ? hi : a + width;
    double m = 0.5 * (a + b);
    double fa = integrand(a), fm = integrand(m), fb = integrand(b);
    double whole = simpson(b - a, fa, fm, fb);
    out += adapt(st, a, m, b, fa, fm, fb, whole, panel_tol, 0, max_depth);
  }
  if (st.worst_unconverged > abs_tol) {
    std::ostringstream msg;
    msg << "quadrature: not converged at max depth " << max_depth
        << "; worst local error " << st.worst_unconverged << " vs tolerance "
        << abs_tol;
    throw NumericFailure(msg.str());
  }
  return out;
}

}  // namespace fdivmin
