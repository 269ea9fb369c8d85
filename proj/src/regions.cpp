#include "invman/regions.hpp"

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "invman/parallel.hpp"

namespace invman {

namespace {

constexpr double kDeltaMax = 4.0;
constexpr double kKMax = 20.0;
constexpr double kBetaMax = 10.0;
constexpr int kBetaGrid = 400;
constexpr int kDeltaGrid = 200;
constexpr int kKGrid = 200;

QSlack slacks(double beta, double delta, double k, int r) {
  QSlack s;
  s.s_box = delta * (8.0 * beta - delta) - 2.0;
  s.s_rate = 8.0 * beta - 2.0 * delta - beta * beta - k - beta / k;
  s.has_order = r >= 2;
  if (s.has_order) s.s_order = 8.0 * beta - 2.0 * delta - r * beta * beta - (r + 1) * beta / k;
  s.member = s.min_slack() > 0.0;
  return s;
}

// Maximizes a concave function on [lo, hi]; returns (argmax, value).
template <class F>
std::pair<double, double> golden_max(F&& fn, double lo, double hi, double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = fn(c);
  double fd = fn(d);
  while (b - a > tol) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = fn(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = fn(d);
    }
  }
  const double x = 0.5 * (a + b);
  const double fx = fn(x);
  if (fc >= fx && fc >= fd) return {c, fc};
  if (fd >= fx) return {d, fd};
  return {x, fx};
}

double min_slack_at(double beta, double delta, double k, int r) {
  return slacks(beta, delta, k, r).min_slack();
}

}  // namespace

double QSlack::min_slack() const {
  double m = std::min(s_box, s_rate);
  if (has_order) m = std::min(m, s_order);
  return m;
}

Expected<QSlack> q_membership(double beta, double delta, double k, int r) {
  if (!(beta > 0.0) || !(delta > 0.0) || !(k > 0.0))
    return make_error(ErrorCode::invalid_argument, "beta, delta and k must be positive");
  if (r < 1) return make_error(ErrorCode::invalid_argument, "order r must be >= 1");
  return slacks(beta, delta, k, r);
}

AuxiliaryChoice best_auxiliary(double beta, int r) {
  // Coarse grid over (δ, k), then golden-section polish; the min slack is
  // jointly concave in (δ, k), so the nested search is exact up to tolerance.
  AuxiliaryChoice best;
  best.margin = -std::numeric_limits<double>::infinity();
  for (int i = 1; i <= kDeltaGrid; ++i) {
    const double delta = kDeltaMax * i / kDeltaGrid;
    for (int j = 1; j <= kKGrid; ++j) {
      const double k = kKMax * j / kKGrid;
      const double m = min_slack_at(beta, delta, k, r);
      if (m > best.margin) best = {delta, k, m};
    }
  }
  double best_delta = best.delta;
  auto inner = [&](double k) {
    auto [d, v] = golden_max([&](double delta) { return min_slack_at(beta, delta, k, r); }, 0.0,
                             kDeltaMax, 1e-11);
    best_delta = d;
    return v;
  };
  auto [k_opt, v_opt] = golden_max(inner, 0.0, kKMax, 1e-10);
  inner(k_opt);
  const double d_opt = best_delta;
  if (v_opt > best.margin && k_opt > 0.0 && d_opt > 0.0) best = {d_opt, k_opt, v_opt};
  return best;
}

double feasibility_margin(double beta, int r) { return best_auxiliary(beta, r).margin; }

Expected<RegionInterval> beta_projection(int r, double resolution) {
  if (r < 1) return make_error(ErrorCode::invalid_argument, "order r must be >= 1");
  if (!(resolution > 0.0)) return make_error(ErrorCode::invalid_argument, "resolution must be > 0");
  RegionInterval out;
  out.r = r;
  out.resolution = resolution;
  std::vector<double> margins(kBetaGrid + 1, -1.0);
  parallel_for(kBetaGrid, [&](std::size_t i) {
    const double beta = kBetaMax * static_cast<double>(i + 1) / kBetaGrid;
    margins[i + 1] = feasibility_margin(beta, r);
  });
  int first = -1;
  int last = -1;
  for (int i = 1; i <= kBetaGrid; ++i) {
    if (margins[i] > 0.0) {
      if (first < 0) first = i;
      last = i;
    }
  }
  if (first < 0) return out;
  for (int i = first; i <= last; ++i)
    if (!(margins[i] > 0.0)) out.connected = false;
  out.empty = false;
  auto beta_at = [](int i) { return kBetaMax * i / kBetaGrid; };
  // Bisection between the last infeasible and first feasible grid point on each side.
  auto refine = [&](double bad, double good) {
    while (std::abs(good - bad) > 0.5 * resolution) {
      const double mid = 0.5 * (bad + good);
      if (feasibility_margin(mid, r) > 0.0)
        good = mid;
      else
        bad = mid;
    }
    return 0.5 * (bad + good);
  };
  out.lo = refine(beta_at(first - 1), beta_at(first));
  out.hi = last < kBetaGrid ? refine(beta_at(last + 1), beta_at(last)) : beta_at(last);
  return out;
}

std::string to_record(const RegionInterval& iv) {
  if (iv.empty)
    return fmt::format("r={} empty=1 lo=nan hi=nan resolution={}", iv.r,
                       format_real(iv.resolution));
  return fmt::format("r={} empty=0 lo={:.6f} hi={:.6f} resolution={} connected={}", iv.r, iv.lo,
                     iv.hi, format_real(iv.resolution), iv.connected ? 1 : 0);
}

namespace {

// Extremum of a periodic sampled function, refined by a parabola through the
// neighbouring samples and accepted only if re-evaluation confirms it.
double refined_extremum(const std::function<double(double)>& fn, const std::vector<double>& vals,
                        double step, bool maximize) {
  const int n = static_cast<int>(vals.size());
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (maximize ? vals[i] > vals[best] : vals[i] < vals[best]) best = i;
  const double fm = vals[(best + n - 1) % n];
  const double f0 = vals[best];
  const double fp = vals[(best + 1) % n];
  const double denom = fm - 2.0 * f0 + fp;
  double result = f0;
  if (denom != 0.0) {
    const double offset = 0.5 * (fm - fp) / denom;
    if (std::abs(offset) <= 1.0) {
      const double v = fn(step * (best + offset));
      if (maximize ? v > result : v < result) result = v;
    }
  }
  return result;
}

}  // namespace

Expected<RapidOscReport> rapid_osc_condition(const RapidOscSpec& spec, int r) {
  if (!spec.delta || !spec.lambda || !spec.d_delta || !spec.d_lambda)
    return make_error(ErrorCode::invalid_argument, "Delta, Lambda and derivatives required");
  if (r < 1) return make_error(ErrorCode::invalid_argument, "order r must be >= 1");
  if (spec.samples < 3) return make_error(ErrorCode::invalid_argument, "need >= 3 samples");
  const int n = spec.samples;
  const double step = 2.0 * std::numbers::pi / n;
  std::vector<double> dv(n), ratio(n);
  for (int i = 0; i < n; ++i) {
    const double s = step * i;
    dv[i] = spec.delta(s);
    if (!(dv[i] > 0.0))
      return make_error(ErrorCode::precondition,
                        fmt::format("Delta({}) = {} is not positive", format_real(s),
                                    format_real(dv[i])));
    ratio[i] = -spec.lambda(s) / dv[i];
  }
  auto ratio_fn = [&](double s) { return -spec.lambda(s) / spec.delta(s); };
  RapidOscReport rep;
  rep.e1 = refined_extremum(ratio_fn, ratio, step, false);
  rep.e2 = refined_extremum(ratio_fn, ratio, step, true);
  rep.e = std::max(std::abs(rep.e1), std::abs(rep.e2));
  const double e = rep.e;
  auto l_fn = [&](double s) { return std::abs(spec.d_delta(s)) * e + std::abs(spec.d_lambda(s)); };
  std::vector<double> lv(n);
  for (int i = 0; i < n; ++i) lv[i] = l_fn(step * i);
  rep.l = refined_extremum(l_fn, lv, step, true);
  rep.min_delta = refined_extremum(spec.delta, dv, step, false);
  const double bound = (r + 1) / std::sqrt(static_cast<double>(r)) * std::sqrt(rep.l);
  rep.check.inequality_id = fmt::format("rapid_osc_r{}", r);
  rep.check.samples = static_cast<std::size_t>(n);
  rep.check.margin = rep.min_delta - bound;
  rep.check.passed = rep.check.margin > 0.0;
  rep.check.observed = rep.l;
  return rep;
}

KappaTerms kappa_terms(const PersistenceConstants& c) {
  KappaTerms t;
  t.sigma = c.sigma;
  t.mu = c.mu;
  t.nu = c.nu;
  t.gamma_exp = c.gamma_exp;
  const double r = c.r;
  t.K[0] = 4.5 * (r + 1.0) * c.c2;
  t.K[1] = (1.5 * r + 1.0) * c.c1;
  t.K[2] = (6.0 * r + 5.5) * c.c4;
  t.K[3] = r * c.c4;
  t.K[4] = (1.5 * r + 1.0) * c.c4;
  t.K[5] = (4.0 * r + 1.0) * c.c4;
  t.K[6] = (4.0 * r + 1.0) * c.c4;
  return t;
}

Expected<void*> check_exponents(double mu, double nu, double gamma_exp) {
  if (!(mu > 0.0)) return make_error(ErrorCode::precondition, "exponent mu must be positive");
  if (!(gamma_exp > 0.0))
    return make_error(ErrorCode::precondition, "exponent gamma must be positive");
  if (!(nu >= 0.0 && nu <= 1.0))
    return make_error(ErrorCode::precondition, "exponent nu must lie in [0, 1]");
  if (!(mu + nu > 1.0))
    return make_error(ErrorCode::precondition,
                      fmt::format("mu + nu = {} does not exceed 1", format_real(mu + nu)));
  return nullptr;
}

double k_objective(double eps, double k, const KappaTerms& t) {
  return k * std::pow(eps, t.mu) * t.K[4] +
         (std::pow(eps, t.nu - 1.0) * t.K[5] + std::pow(eps, t.gamma_exp) * t.K[6]) / k;
}

double kappa(double eps, double k, double delta, const KappaTerms& t) {
  const double corr = t.K[0] * delta + t.K[1] * delta * delta + std::pow(eps, t.mu) * t.K[2] +
                      std::pow(eps, t.gamma_exp) * t.K[3] + k_objective(eps, k, t);
  return eps * t.sigma - eps * corr;
}

double kappa(double eps, double k, double delta, const PersistenceConstants& consts) {
  return kappa(eps, k, delta, kappa_terms(consts));
}

Expected<double> k_epsilon(double eps, const KappaTerms& t) {
  if (!(eps > 0.0)) return make_error(ErrorCode::invalid_argument, "eps must be positive");
  if (!(t.K[4] > 0.0))
    return make_error(ErrorCode::precondition, "K5 = 0: the k-objective has no minimizer");
  const double num = std::pow(eps, t.nu - 1.0) * t.K[5] + std::pow(eps, t.gamma_exp) * t.K[6];
  if (!(num > 0.0))
    return make_error(ErrorCode::precondition, "K6 = K7 = 0: the k-objective has no minimizer");
  return std::sqrt(num / (std::pow(eps, t.mu) * t.K[4]));
}

Expected<double> k_epsilon(double eps, const PersistenceConstants& consts) {
  return k_epsilon(eps, kappa_terms(consts));
}

Expected<PersistenceResult> persistence_thresholds(const PersistenceConstants& consts,
                                                   double delta_cap, double eps_ceiling,
                                                   double eps_floor) {
  if (auto ok = check_exponents(consts.mu, consts.nu, consts.gamma_exp); !ok) return ok.error();
  if (!(consts.sigma > 0.0) || !(consts.c1 > 0.0) || !(consts.c2 > 0.0) || !(consts.c3 > 0.0) ||
      !(consts.c4 > 0.0) || consts.r < 1)
    return make_error(ErrorCode::invalid_argument, "constants must be positive and r >= 1");
  if (!(delta_cap > 0.0) || !(eps_ceiling > eps_floor) || !(eps_floor > 0.0))
    return make_error(ErrorCode::invalid_argument, "need delta_cap > 0, ceiling > floor > 0");
  const KappaTerms terms = kappa_terms(consts);
  auto evaluate = [&](double eps, PersistenceResult* out) {
    const double delta = 2.0 * consts.c3 / consts.sigma * std::pow(eps, consts.mu);
    if (delta > delta_cap) return false;
    auto k = k_epsilon(eps, terms);
    if (!k) return false;
    const double kap = kappa(eps, *k, delta, terms);
    const double sign = consts.sigma * delta - consts.c1 * delta * delta -
                        std::pow(eps, consts.mu) * consts.c3;
    if (out) *out = {eps, delta, *k, kap, false};
    return kap > 0.0 && sign > 0.0;
  };
  PersistenceResult res;
  if (evaluate(eps_ceiling, &res)) {
    res.hit_ceiling = true;
    return res;
  }
  // Downward log scan for the first feasible ε, then bisection on the bracket.
  double bad = eps_ceiling;
  double good = 0.0;
  for (int j = 1;; ++j) {
    const double eps = eps_ceiling * std::pow(10.0, -j / 20.0);
    if (eps < eps_floor)
      return make_error(ErrorCode::infeasible,
                        fmt::format("no feasible eps above {}", format_real(eps_floor)));
    if (evaluate(eps, nullptr)) {
      good = eps;
      break;
    }
    bad = eps;
  }
  for (int it = 0; it < 200 && (bad - good) > 1e-14 * bad; ++it) {
    const double mid = 0.5 * (bad + good);
    if (evaluate(mid, nullptr))
      good = mid;
    else
      bad = mid;
  }
  evaluate(good, &res);
  return res;
}

const char* to_string(FixedPointKind kind) {
  switch (kind) {
    case FixedPointKind::saddle: return "saddle";
    case FixedPointKind::stable_node: return "stable_node";
    case FixedPointKind::stable_spiral: return "stable_spiral";
    case FixedPointKind::unstable_node: return "unstable_node";
    case FixedPointKind::unstable_spiral: return "unstable_spiral";
    case FixedPointKind::center: return "center";
    case FixedPointKind::degenerate: return "degenerate";
  }
  return "degenerate";
}

Expected<std::vector<FixedPoint>> counterexample_fixed_points(double eps, double alpha) {
  if (!(eps > 0.0) || !(alpha >= 0.0) || alpha > eps)
    return make_error(ErrorCode::invalid_argument, "need eps > 0 and 0 <= alpha <= eps");
  std::vector<FixedPoint> out;
  if (alpha == 0.0) {
    // Both components vanish on w = 0: a circle of equilibria.
    FixedPoint fp;
    fp.lambda1 = 0.0;
    fp.lambda2 = -eps;
    fp.kind = FixedPointKind::degenerate;
    out.push_back(fp);
    return out;
  }
  const double a2 = alpha * alpha;
  for (double theta : {0.0, std::numbers::pi}) {
    Eigen::Matrix2d jac;
    jac << -eps, a2 * std::cos(theta), 1.0, 0.0;
    Eigen::EigenSolver<Eigen::Matrix2d> es(jac, false);
    FixedPoint fp;
    fp.theta = theta;
    fp.lambda1 = es.eigenvalues()[0];
    fp.lambda2 = es.eigenvalues()[1];
    if (fp.lambda1.real() < fp.lambda2.real() ||
        (fp.lambda1.real() == fp.lambda2.real() && fp.lambda1.imag() < fp.lambda2.imag()))
      std::swap(fp.lambda1, fp.lambda2);
    const double r1 = fp.lambda1.real();
    const double r2 = fp.lambda2.real();
    // Discriminant of λ² + ελ − α² cos θ decides real versus complex roots.
    const bool complex = eps * eps + 4.0 * a2 * std::cos(theta) < 0.0;
    if (complex) {
      fp.kind = r1 < 0.0   ? FixedPointKind::stable_spiral
                : r1 > 0.0 ? FixedPointKind::unstable_spiral
                           : FixedPointKind::center;
    } else if (r1 == 0.0 || r2 == 0.0) {
      fp.kind = FixedPointKind::degenerate;
    } else if ((r1 > 0.0) != (r2 > 0.0)) {
      fp.kind = FixedPointKind::saddle;
    } else {
      fp.kind = r1 < 0.0 ? FixedPointKind::stable_node : FixedPointKind::unstable_node;
    }
    out.push_back(fp);
  }
  return out;
}

}  // namespace invman
