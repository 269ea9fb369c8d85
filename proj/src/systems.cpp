#include "invman/systems.hpp"

#include <fmt/format.h>

#include "invman/hypotheses.hpp"

#include <array>
#include <cmath>
#include <mutex>
#include <numbers>

namespace invman {

namespace {

constexpr double pi = std::numbers::pi;

Vec vec1(double v) { return Vec::Constant(1, v); }

Expected<SystemBundle> build_decoupled(const ParamMap& p) {
  const double width = p.at("width");
  if (!(width > 0.5)) return make_error(ErrorCode::invalid_argument, "width must exceed 1/2");
  SystemBundle b;
  b.field = SplitVectorField(
      1, 1, [](const Point& x) { return vec1(2.0 * x.a[0] - std::sin(x.z[0])); },
      [](const Point&) { return vec1(0.0); },
      [](const Point& x) {
        Mat j = Mat::Zero(2, 2);
        j(0, 0) = 2.0;
        j(0, 1) = -std::cos(x.z[0]);
        return j;
      });
  b.domain = BoxDomain({Interval::bounded(-width, width)}, {Interval::periodic(2.0 * pi)});
  b.facts.known_h = [](const Vec& z) { return vec1(0.5 * std::sin(z[0])); };
  b.facts.known_dh = [](const Vec& z) { return Mat::Constant(1, 1, 0.5 * std::cos(z[0])); };
  b.facts.periods = {2.0 * pi};
  b.facts.hyp2_certified = true;
  b.facts.rate_bounds = [](const Point&) { return Rates{2.0, 0.0, 1.0, 0.0}; };
  return b;
}

Expected<SystemBundle> build_torus(const ParamMap& p) {
  const double beta = p.at("beta");
  const double omega = p.at("omega");
  const double delta = p.at("delta");
  const double k = p.at("k");
  const double gamma = p.at("gamma");
  if (!(beta > 0.0) || !(delta > 0.0) || !(k > 0.0) || !(gamma > 0.0))
    return make_error(ErrorCode::invalid_argument, "beta, delta, k and gamma must be positive");
  SystemBundle b;
  const double kg = k * gamma;
  b.field = SplitVectorField(
      1, 2,
      [=](const Point& x) {
        const double r = x.a[0];
        return vec1(r * (8.0 * beta - r) + std::sin(k * x.z[0]) + std::sin(kg * x.z[1]));
      },
      [=](const Point& x) {
        Vec g(2);
        g[0] = beta / k * x.a[0] + beta * beta / k * std::sin(k * x.z[0]) * std::sin(kg * x.z[1]);
        g[1] = omega / kg;
        return g;
      },
      [=](const Point& x) {
        const double r = x.a[0];
        const double s1 = std::sin(k * x.z[0]), c1 = std::cos(k * x.z[0]);
        const double s2 = std::sin(kg * x.z[1]), c2 = std::cos(kg * x.z[1]);
        Mat j = Mat::Zero(3, 3);
        j(0, 0) = 8.0 * beta - 2.0 * r;
        j(0, 1) = k * c1;
        j(0, 2) = kg * c2;
        j(1, 0) = beta / k;
        j(1, 1) = beta * beta * c1 * s2;
        j(1, 2) = beta * beta * gamma * s1 * c2;
        return j;
      });
  b.domain = BoxDomain({Interval::bounded(-delta, delta)},
                       {Interval::periodic(2.0 * pi / k), Interval::periodic(2.0 * pi / kg)});
  b.facts.periods = {2.0 * pi / k, 2.0 * pi / kg};
  const double root = std::sqrt(1.0 + gamma * gamma);
  b.facts.rate_bounds = [=](const Point&) {
    return Rates{8.0 * beta - 2.0 * delta, beta * beta * root, k * root, beta / k};
  };
  auto q = q_membership(beta, delta, k, 1);
  b.facts.hyp2_certified = q && q->member;
  return b;
}

Expected<SystemBundle> build_weak(const ParamMap& p) {
  const double eps = p.at("eps");
  const double alpha = p.at("alpha");
  if (!(eps > 0.0) || !(alpha >= 0.0) || alpha > eps)
    return make_error(ErrorCode::invalid_argument, "need eps > 0 and 0 <= alpha <= eps");
  const double a2 = alpha * alpha;
  // Time-reversed so that w is the expanding coordinate.
  SystemBundle b;
  b.field = SplitVectorField(
      1, 1, [=](const Point& x) { return vec1(eps * x.a[0] - a2 * std::sin(x.z[0])); },
      [](const Point& x) { return vec1(-x.a[0]); },
      [=](const Point& x) {
        Mat j = Mat::Zero(2, 2);
        j(0, 0) = eps;
        j(0, 1) = -a2 * std::cos(x.z[0]);
        j(1, 0) = -1.0;
        return j;
      });
  b.domain = BoxDomain({Interval::bounded(-1.0, 1.0)}, {Interval::periodic(2.0 * pi)});
  b.facts.periods = {2.0 * pi};
  b.facts.fixed_point_count = alpha > 0.0 ? 2 : -1;
  b.facts.hyp2_certified = false;
  b.facts.notes.push_back("time-reversed form; equilibria at (0,0) and (0,pi) for alpha > 0");
  return b;
}

Expected<SystemBundle> build_rapid(const ParamMap& p) {
  const double mu = p.at("mu");
  const double k = p.at("k");
  const double delta = p.at("delta");
  if (!(mu > 0.0 && mu <= 1.0) || !(k > 0.0) || !(delta > 0.0 && delta <= 1.0))
    return make_error(ErrorCode::invalid_argument, "need 0 < mu <= 1, k > 0, 0 < delta <= 1");
  const auto spec = rapid_osc_spec();
  auto cond = rapid_osc_condition(spec, 1);
  if (!cond) return cond.error();
  // Δ(σ)ρ + Λ(σ) + θ3 μ R, θ1' = (ρ + θ3 μ S)/k, θ2' = 1/μ², θ3' = 0 with R = sin θ2, S = cos θ2.
  SystemBundle b;
  b.field = SplitVectorField(
      1, 3,
      [=](const Point& x) {
        const double s = k * x.z[0];
        return vec1((4.0 + std::cos(s)) * x.a[0] + std::sin(s) + x.z[2] * mu * std::sin(x.z[1]));
      },
      [=](const Point& x) {
        Vec g(3);
        g[0] = (x.a[0] + x.z[2] * mu * std::cos(x.z[1])) / k;
        g[1] = 1.0 / (mu * mu);
        g[2] = 0.0;
        return g;
      },
      [=](const Point& x) {
        const double s = k * x.z[0];
        Mat j = Mat::Zero(4, 4);
        j(0, 0) = 4.0 + std::cos(s);
        j(0, 1) = k * (-std::sin(s) * x.a[0] + std::cos(s));
        j(0, 2) = x.z[2] * mu * std::cos(x.z[1]);
        j(0, 3) = mu * std::sin(x.z[1]);
        j(1, 0) = 1.0 / k;
        j(1, 2) = -x.z[2] * mu * std::sin(x.z[1]) / k;
        j(1, 3) = mu * std::cos(x.z[1]) / k;
        return j;
      });
  b.domain = BoxDomain({Interval::bounded(cond->e1 - delta, cond->e2 + delta)},
                       {Interval::periodic(2.0 * pi / k), Interval::periodic(2.0 * pi),
                        Interval::bounded(-2.0, 2.0)});
  b.facts.periods = {2.0 * pi / k, 2.0 * pi, 0.0};
  b.facts.notes.push_back(fmt::format("E1={} E2={} L={}", format_real(cond->e1),
                                      format_real(cond->e2), format_real(cond->l)));
  return b;
}

Expected<SystemBundle> build_persistence(const ParamMap& p) {
  const double eps = p.at("eps");
  const double k = p.at("k");
  const double delta = p.at("delta");
  const double sigma = p.at("sigma");
  const double kap = p.at("kappa");
  const double lam = p.at("lambda");
  const bool reverse = p.at("reverse") != 0.0;
  if (!(eps > 0.0) || !(k > 0.0) || !(delta > 0.0) || !(sigma > 0.0) || !(kap >= 0.0) ||
      !(lam >= 0.0))
    return make_error(ErrorCode::invalid_argument, "parameters out of range");
  const double e2 = eps * eps;
  // Full right-hand side in (p, q, ζ, θ̄) with θ = kθ̄.
  auto rhs = [=](double pp, double q, double zeta, double tb) {
    const double th = k * tb;
    std::array<double, 4> d{};
    d[0] = eps * (sigma * pp + kap * q * q * std::cos(zeta)) + e2 * lam * std::cos(th);
    d[1] = eps * (-sigma * q + kap * pp * pp * std::sin(zeta)) + e2 * lam * std::sin(th);
    d[2] = eps * (1.0 + kap * pp * q) + e2 * lam * std::sin(th + zeta);
    d[3] = (1.0 + eps * lam * std::cos(zeta) + e2 * lam * std::sin(th) * std::cos(zeta)) / k;
    return d;
  };
  // Jacobian of the full right-hand side in (p, q, ζ, θ̄).
  auto jac = [=](double pp, double q, double zeta, double tb) {
    const double th = k * tb;
    Eigen::Matrix4d j = Eigen::Matrix4d::Zero();
    j(0, 0) = eps * sigma;
    j(0, 1) = 2.0 * eps * kap * q * std::cos(zeta);
    j(0, 2) = -eps * kap * q * q * std::sin(zeta);
    j(0, 3) = -e2 * lam * k * std::sin(th);
    j(1, 0) = 2.0 * eps * kap * pp * std::sin(zeta);
    j(1, 1) = -eps * sigma;
    j(1, 2) = eps * kap * pp * pp * std::cos(zeta);
    j(1, 3) = e2 * lam * k * std::cos(th);
    j(2, 0) = eps * kap * q;
    j(2, 1) = eps * kap * pp;
    j(2, 2) = e2 * lam * std::cos(th + zeta);
    j(2, 3) = e2 * lam * k * std::cos(th + zeta);
    j(3, 2) = (-eps * lam * std::sin(zeta) - e2 * lam * std::sin(th) * std::sin(zeta)) / k;
    j(3, 3) = e2 * lam * std::cos(th) * std::cos(zeta);
    return j;
  };
  SystemBundle b;
  if (!reverse) {
    // a = p, z = (q̄, ζ, θ̄) with q = 2q̄.
    b.field = SplitVectorField(
        1, 3, [=](const Point& x) { return vec1(rhs(x.a[0], 2.0 * x.z[0], x.z[1], x.z[2])[0]); },
        [=](const Point& x) {
          const auto d = rhs(x.a[0], 2.0 * x.z[0], x.z[1], x.z[2]);
          Vec g(3);
          g << 0.5 * d[1], d[2], d[3];
          return g;
        },
        [=](const Point& x) {
          const Eigen::Matrix4d j = jac(x.a[0], 2.0 * x.z[0], x.z[1], x.z[2]);
          // Rows scaled by (1, 1/2, 1, 1), q-column by 2.
          Mat out = j;
          out.row(1) *= 0.5;
          out.col(1) *= 2.0;
          return out;
        });
  } else {
    // Time-reversed, a = q, z = (p̄, ζ, θ̄) with p = 2p̄.
    b.field = SplitVectorField(
        1, 3, [=](const Point& x) { return vec1(-rhs(2.0 * x.z[0], x.a[0], x.z[1], x.z[2])[1]); },
        [=](const Point& x) {
          const auto d = rhs(2.0 * x.z[0], x.a[0], x.z[1], x.z[2]);
          Vec g(3);
          g << -0.5 * d[0], -d[2], -d[3];
          return g;
        },
        [=](const Point& x) {
          const Eigen::Matrix4d j = jac(2.0 * x.z[0], x.a[0], x.z[1], x.z[2]);
          // Reorder to (q, p, ζ, θ̄), scale the p̄ row by 1/2 and column by 2, negate.
          Eigen::Matrix4d perm = Eigen::Matrix4d::Zero();
          perm(0, 1) = 1.0;
          perm(1, 0) = 1.0;
          perm(2, 2) = 1.0;
          perm(3, 3) = 1.0;
          Mat out = perm * j * perm;
          out.row(1) *= 0.5;
          out.col(1) *= 2.0;
          return Mat(-out);
        });
  }
  b.domain = BoxDomain({Interval::bounded(-delta, delta)},
                       {Interval::bounded(-0.5 * delta, 0.5 * delta), Interval::periodic(2.0 * pi),
                        Interval::periodic(2.0 * pi / k)});
  b.facts.periods = {0.0, 2.0 * pi, 2.0 * pi / k};
  b.facts.notes.push_back(reverse ? "reversed: a = q, z = (p/2, zeta, theta/k)"
                                  : "forward: a = p, z = (q/2, zeta, theta/k)");
  return b;
}

std::vector<SystemSpec>& mutable_registry() {
  static std::vector<SystemSpec> specs = {
      {"decoupled_toy", "a' = 2a - sin z, z' = 0 on (-width, width) x circle", {{"width", 1.0}},
       build_decoupled},
      {"torus_family", "R' = R(8b - R) + sin k t1 + sin k g t2, rescaled angles",
       {{"beta", 1.0}, {"omega", 0.5}, {"delta", 0.3}, {"k", 1.0}, {"gamma", 0.1}}, build_torus},
      {"weak_counterexample", "w' = -eps w + alpha^2 sin t, t' = w (time-reversed)",
       {{"eps", 0.1}, {"alpha", 0.1}}, build_weak},
      {"rapid_osc", "Delta = 4 + cos s, Lambda = sin s, R = sin t2, S = cos t2",
       {{"mu", 0.1}, {"k", 0.75}, {"delta", 0.5}}, build_rapid},
      {"persistence_toy", "scalar normal form p' ~ eps sigma p, q' ~ -eps sigma q on a 2-torus",
       {{"eps", 0.3},
        {"k", 1.0},
        {"delta", 0.2},
        {"sigma", 1.0},
        {"kappa", 0.1},
        {"lambda", 0.05},
        {"reverse", 0.0}},
       build_persistence},
  };
  return specs;
}

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

const std::vector<SystemSpec>& registry() { return mutable_registry(); }

void register_system(SystemSpec spec) {
  std::lock_guard<std::mutex> lock(registry_mutex());
  mutable_registry().push_back(std::move(spec));
}

Expected<SystemBundle> build_system(const std::string& name, const ParamMap& params) {
  for (const auto& spec : registry()) {
    if (spec.name != name) continue;
    ParamMap merged = spec.defaults;
    for (const auto& [key, value] : params) {
      if (!merged.count(key))
        return make_error(ErrorCode::invalid_argument,
                          fmt::format("system {} has no parameter '{}'", name, key));
      merged[key] = value;
    }
    auto b = spec.build(merged);
    if (!b) return b;
    b->name = name;
    b->params = merged;
    if (b->field.n() != b->domain.n() || b->field.m() != b->domain.m())
      return make_error(ErrorCode::dimension_mismatch, "built field does not match its domain");
    if (!b->rates.rates) b->rates = RateProfile::from_field(b->field);
    return b;
  }
  return make_error(ErrorCode::unknown_system, fmt::format("unknown system '{}'", name));
}

RapidOscSpec rapid_osc_spec(int samples) {
  RapidOscSpec s;
  s.delta = [](double x) { return 4.0 + std::cos(x); };
  s.d_delta = [](double x) { return -std::sin(x); };
  s.lambda = [](double x) { return std::sin(x); };
  s.d_lambda = [](double x) { return std::cos(x); };
  s.samples = samples;
  return s;
}

PersistenceConstants persistence_toy_constants(double sigma, double kappa_c, double lambda,
                                               int r) {
  PersistenceConstants c;
  c.sigma = sigma;
  c.c1 = kappa_c;
  c.c2 = 2.0 * kappa_c;
  c.c3 = lambda;
  c.c4 = lambda;
  c.mu = 1.0;
  c.nu = 1.0;
  c.gamma_exp = 1.0;
  c.r = r;
  return c;
}

Expected<PersistenceIntersection> persistence_intersection(const ParamMap& params,
                                                           const std::vector<int>& counts,
                                                           double tol) {
  if (counts.size() != 3)
    return make_error(ErrorCode::invalid_argument, "persistence_intersection needs 3 counts");
  ParamMap fwd = params;
  ParamMap rev = params;
  fwd["reverse"] = 0.0;
  rev["reverse"] = 1.0;
  PersistenceIntersection out;
  GraphManifold* targets[2] = {&out.forward, &out.reverse};
  const ParamMap* sides[2] = {&fwd, &rev};
  double delta = 0.0;
  for (int s = 0; s < 2; ++s) {
    auto b = build_system("persistence_toy", *sides[s]);
    if (!b) return b.error();
    auto hyp = check_hyp2(b->rates, b->domain, 9, 0.0);
    if (!hyp) return hyp.error();
    if (!hyp->passed)
      return make_error(ErrorCode::precondition,
                        fmt::format("rate inequality fails, margin {}", format_real(hyp->margin)));
    delta = b->params.at("delta");
    const ZGrid grid = interior_grid(b->domain, counts);
    auto g = compute_graph_shoot(b->field, b->domain, grid, 20.0 / hyp->margin, tol);
    if (!g) return g.error();
    if (g->unresolved_count() > 0)
      return make_error(ErrorCode::divergence, "unresolved graph nodes");
    *targets[s] = std::move(*g);
  }
  // Interior grid keeps q/2 within ±0.45δ, so the fast argument stays within ±0.9δ.
  const double radius = 0.9 * delta;
  const CrossGraph cp = cross_graph(out.forward, 1, 0.5, radius);
  const CrossGraph cq = cross_graph(out.reverse, 1, 0.5, radius);
  std::vector<Vec> slow;
  const auto& ax1 = out.forward.grid.axis(1);
  const auto& ax2 = out.forward.grid.axis(2);
  for (int i = 0; i < ax1.count; ++i)
    for (int j = 0; j < ax2.count; ++j) {
      Vec v(2);
      v << ax1.node(i), ax2.node(j);
      slow.push_back(v);
    }
  IntersectOptions opts;
  opts.tol = 1e-12;
  auto joint = intersect_graphs(cp, cq, slow, opts);
  if (!joint) return joint.error();
  out.joint = std::move(*joint);
  return out;
}

}  // namespace invman
