#include "invman/flow.hpp"

#include <fmt/format.h>
#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <stdexcept>

#include "invman/ode.hpp"

namespace invman {

namespace {

ode::Options options_for(double tol) {
  ode::Options o;
  o.rtol = tol;
  o.atol = tol;
  return o;
}

// Event code 2·i + side over the stacked coordinates (a then z).
ode::Monitor box_monitor(const BoxDomain& domain) {
  return [domain](const Vec& y) -> int {
    const int n = domain.n();
    for (int i = 0; i < n + domain.m(); ++i) {
      const Interval& iv = i < n ? domain.a_bounds[i] : domain.z_bounds[i - n];
      if (iv.kind != IntervalKind::bounded) continue;
      if (y[i] <= iv.lo) return 2 * i;
      if (y[i] >= iv.hi) return 2 * i + 1;
    }
    return -1;
  };
}

ExitFace decode_face(int code, int n) {
  const int coord = code / 2;
  ExitFace face;
  face.on_a = coord < n;
  face.index = face.on_a ? coord : coord - n;
  face.upper = (code % 2) == 1;
  return face;
}

Expected<Trajectory> run_flow(const SplitVectorField& field, const Point& x0, double t_end,
                              ode::Options opts, const BoxDomain* domain) {
  if (x0.n() != field.n() || x0.m() != field.m())
    return make_error(ErrorCode::dimension_mismatch, "initial point does not match field");
  if (domain && !domain->contains(x0))
    return make_error(ErrorCode::outside_domain, "initial point outside domain");
  const int n = field.n();
  ode::Rhs rhs = [&field](const Vec& y, Vec& dy) { field.eval(y, dy); };
  ode::Monitor mon;
  if (domain) mon = box_monitor(*domain);
  auto sol = ode::solve(rhs, x0.stacked(), t_end, opts, mon);
  if (!sol) return sol.error();
  Trajectory tr;
  tr.times = std::move(sol->t);
  tr.states.reserve(sol->y.size());
  for (const auto& y : sol->y) tr.states.push_back(Point::from_stacked(y, n));
  if (opts.record == ode::Record::endpoint) {
    tr.times.push_back(sol->final_time);
    tr.states.push_back(Point::from_stacked(sol->final_state, n));
  }
  if (sol->event) tr.exit_event = ExitEvent{sol->final_time, decode_face(sol->event_code, n)};
  return tr;
}

struct CoverageFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Vec graph_value(const GraphManifold& graph, const Vec& z) {
  auto h = graph.eval(z);
  if (!h) throw CoverageFailure(h.error().message);
  return *h;
}

}  // namespace

Expected<Trajectory> integrate(const SplitVectorField& field, const Point& x0, double t_end,
                               double tol, const BoxDomain* domain) {
  return run_flow(field, x0, t_end, options_for(tol), domain);
}

Expected<Trajectory> integrate_at(const SplitVectorField& field, const Point& x0,
                                  const std::vector<double>& times, double tol,
                                  const BoxDomain* domain) {
  if (times.empty()) return make_error(ErrorCode::invalid_argument, "no output times");
  auto opts = options_for(tol);
  opts.record = ode::Record::samples;
  opts.sample_times = times;
  double t_end = 0.0;
  for (double t : times)
    if (std::abs(t) > std::abs(t_end)) t_end = t;
  return run_flow(field, x0, t_end, opts, domain);
}

Expected<Trajectory> integrate_endpoint(const SplitVectorField& field, const Point& x0,
                                        double t_end, double tol, const BoxDomain* domain) {
  auto opts = options_for(tol);
  opts.record = ode::Record::endpoint;
  return run_flow(field, x0, t_end, opts, domain);
}

Expected<VariationalPath> variational(const SplitVectorField& field, const Point& x0, double t_end,
                                      double tol) {
  const int n = field.n();
  const int d = n + field.m();
  ode::Rhs rhs = [&field, n, d](const Vec& y, Vec& dy) {
    dy.resize(y.size());
    Vec fx(d);
    field.eval(y.head(d), fx);
    dy.head(d) = fx;
    const Point p = Point::from_stacked(y.head(d), n);
    const Mat jac = field.jacobian(p);
    Eigen::Map<const Mat> q(y.data() + d, d, d);
    Eigen::Map<Mat> dq(dy.data() + d, d, d);
    dq = jac * q;
  };
  Vec y0(d + d * d);
  y0.head(d) = x0.stacked();
  Eigen::Map<Mat>(y0.data() + d, d, d).setIdentity();
  auto sol = ode::solve(rhs, y0, t_end, options_for(tol));
  if (!sol) return sol.error();
  VariationalPath path;
  path.times = sol->t;
  for (const auto& y : sol->y) {
    path.states.push_back(Point::from_stacked(y.head(d), n));
    path.matrices.push_back(Eigen::Map<const Mat>(y.data() + d, d, d));
  }
  return path;
}

Vec vec(const Mat& m) { return Eigen::Map<const Vec>(m.data(), m.size()); }

Mat unvec(const Vec& v, int rows, int cols) {
  if (v.size() != static_cast<Eigen::Index>(rows) * cols)
    throw std::invalid_argument("unvec: length does not match shape");
  return Eigen::Map<const Mat>(v.data(), rows, cols);
}

Mat kron(const Mat& a, const Mat& b) { return Eigen::kroneckerProduct(a, b).eval(); }

Expected<Vec> graph_flow(const SplitVectorField& field, const GraphManifold& graph, const Vec& z0,
                         double t_end, double tol) {
  ode::Rhs rhs = [&](const Vec& z, Vec& dz) {
    dz = field.g(Point(graph_value(graph, z), z));
  };
  try {
    auto opts = options_for(tol);
    opts.record = ode::Record::endpoint;
    auto sol = ode::solve(rhs, z0, t_end, opts);
    if (!sol) return sol.error();
    return sol->final_state;
  } catch (const CoverageFailure& e) {
    return make_error(ErrorCode::outside_domain, e.what());
  }
}

Expected<MatrixPath> riccati_integrate(const SplitVectorField& field, const GraphManifold& graph,
                                       const Vec& z0, const Mat& V0, double t_end, double tol) {
  const int n = field.n();
  const int m = field.m();
  if (V0.rows() != n || V0.cols() != m || z0.size() != m)
    return make_error(ErrorCode::dimension_mismatch, "riccati: shapes do not match field");
  constexpr double blow_up = 1e8;
  ode::Rhs rhs = [&](const Vec& y, Vec& dy) {
    const Vec z = y.head(m);
    const Point p(graph_value(graph, z), z);
    const Mat jac = field.jacobian(p);
    const Mat daf = jac.topLeftCorner(n, n);
    const Mat dzf = jac.topRightCorner(n, m);
    const Mat dag = jac.bottomLeftCorner(m, n);
    const Mat dzg = jac.bottomRightCorner(m, m);
    Eigen::Map<const Mat> V(y.data() + m, n, m);
    dy.resize(y.size());
    dy.head(m) = field.g(p);
    Eigen::Map<Mat>(dy.data() + m, n, m) = daf * V - V * dzg - V * dag * V + dzf;
  };
  ode::Monitor mon = [m](const Vec& y) -> int {
    return y.tail(y.size() - m).cwiseAbs().maxCoeff() > blow_up ? 0 : -1;
  };
  Vec y0(m + n * m);
  y0.head(m) = z0;
  y0.tail(n * m) = vec(V0);
  try {
    auto sol = ode::solve(rhs, y0, t_end, options_for(tol), mon);
    if (!sol) {
      if (sol.error().code == ErrorCode::non_finite || sol.error().code == ErrorCode::step_underflow)
        return make_error(ErrorCode::blow_up, "riccati solution escaped: " + sol.error().message);
      return sol.error();
    }
    if (sol->event)
      return make_error(ErrorCode::blow_up,
                        fmt::format("riccati solution exceeded {} at t={}", blow_up, sol->final_time));
    MatrixPath path;
    path.times = sol->t;
    for (const auto& y : sol->y) {
      path.z.push_back(y.head(m));
      path.V.push_back(unvec(y.tail(n * m), n, m));
    }
    return path;
  } catch (const CoverageFailure& e) {
    return make_error(ErrorCode::outside_domain, e.what());
  }
}

namespace {

Vec lifted_f(const SplitVectorField& field, const GraphManifold& graph, double sigma,
             const Vec& v, const Vec& zeta) {
  const int n = field.n();
  const int m = field.m();
  const Vec z = sigma * zeta;
  auto h = graph.eval(z);
  if (!h) return Vec::Constant(n * m, std::numeric_limits<double>::quiet_NaN());
  const Mat jac = field.jacobian(Point(*h, z));
  const Mat daf = jac.topLeftCorner(n, n);
  const Mat dzf = jac.topRightCorner(n, m);
  const Mat dag = jac.bottomLeftCorner(m, n);
  const Mat dzg = jac.bottomRightCorner(m, m);
  const Mat In = Mat::Identity(n, n);
  const Mat Im = Mat::Identity(m, m);
  const Mat V = unvec(v, n, m);
  return (kron(Im, daf) - kron(dzg.transpose(), In)) * v - kron(Im, V * dag) * v + vec(dzf);
}

Vec lifted_g(const SplitVectorField& field, const GraphManifold& graph, double sigma,
             const Vec& zeta) {
  const Vec z = sigma * zeta;
  auto h = graph.eval(z);
  if (!h) return Vec::Constant(zeta.size(), std::numeric_limits<double>::quiet_NaN());
  return field.g(Point(*h, z)) / sigma;
}

}  // namespace

Expected<LiftedSystem> lift_level1(const SplitVectorField& field, const GraphManifold& graph,
                                   double sigma1, double eta) {
  if (!(sigma1 > 0.0) || !(eta > 0.0))
    return make_error(ErrorCode::invalid_argument, "sigma1 and eta must be positive");
  if (graph.n != field.n() || graph.m() != field.m())
    return make_error(ErrorCode::dimension_mismatch, "graph does not match field");
  if (graph.has_dh()) {
    for (std::size_t k = 0; k < graph.size(); ++k) {
      if (spectral_norm(graph.dh[k]) >= eta)
        return make_error(ErrorCode::precondition,
                          fmt::format("sampled |Dh| >= eta at node {}", k));
    }
  }
  const int n = field.n();
  const int m = field.m();
  LiftedSystem lift;
  lift.base = std::make_shared<const SplitVectorField>(field);
  lift.graph = std::make_shared<const GraphManifold>(graph);
  lift.sigma1 = sigma1;
  lift.eta = eta;
  auto base = lift.base;
  auto gr = lift.graph;
  const int nm = n * m;
  lift.field1 = SplitVectorField(
      nm, m, [base, gr, sigma1](const Point& x) { return lifted_f(*base, *gr, sigma1, x.a, x.z); },
      [base, gr, sigma1](const Point& x) { return lifted_g(*base, *gr, sigma1, x.z); });

  const double vb = eta / std::sqrt(static_cast<double>(nm));
  std::vector<Interval> a_bounds(nm, Interval::bounded(-vb, vb));
  std::vector<Interval> z_bounds;
  for (int d = 0; d < m; ++d) {
    const auto& ax = graph.grid.axis(d);
    if (ax.periodic)
      z_bounds.push_back(Interval::periodic((ax.hi - ax.lo) / sigma1, ax.lo / sigma1));
    else
      z_bounds.push_back(Interval::bounded(ax.lo / sigma1, ax.hi / sigma1));
  }
  lift.domain1 = BoxDomain(std::move(a_bounds), std::move(z_bounds));

  auto rates_at = [base, gr, sigma1](const Vec& zeta) -> Rates {
    const Vec z = sigma1 * zeta;
    auto h = gr->eval(z);
    if (!h) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      return Rates{nan, nan, nan, nan};
    }
    return rates_from_jacobian(base->jacobian(Point(*h, z)), base->n());
  };
  lift.alpha1 = [rates_at, eta](const Vec& zeta) {
    const Rates r = rates_at(zeta);
    return r.alpha - r.ell - 2.0 * eta * r.dag_norm;
  };
  lift.ell1 = [rates_at, eta](const Vec& zeta) {
    const Rates r = rates_at(zeta);
    return eta * r.dag_norm + r.ell;
  };
  return lift;
}

Expected<double> lift_lipschitz_constant(const SplitVectorField& field, const GraphManifold& graph,
                                         double eta, int v_samples) {
  auto lift = lift_level1(field, graph, 1.0, eta);
  if (!lift) return lift.error();
  const int nm = field.n() * field.m();
  const int m = field.m();
  const double vb = eta / std::sqrt(static_cast<double>(nm));
  const int per = std::max(1, v_samples);
  std::size_t v_count = 1;
  for (int i = 0; i < nm; ++i) v_count *= per;
  double sup = 0.0;
  for (std::size_t k = 0; k < graph.size(); ++k) {
    const Vec z = graph.grid.node(k);
    for (std::size_t vi = 0; vi < v_count; ++vi) {
      Vec v(nm);
      std::size_t rest = vi;
      for (int i = 0; i < nm; ++i) {
        const int j = static_cast<int>(rest % per);
        rest /= per;
        v[i] = per == 1 ? 0.0 : -vb + 2.0 * vb * j / (per - 1);
      }
      const Mat jac = lift->field1.jacobian(Point(v, z));
      const double norm = spectral_norm(jac.topRightCorner(nm, m));
      if (!std::isfinite(norm)) continue;
      sup = std::max(sup, norm);
    }
  }
  return sup;
}

Expected<double> default_sigma1(const SplitVectorField& field, const GraphManifold& graph,
                                double eta, double cr) {
  if (!(cr > 0.0)) return make_error(ErrorCode::invalid_argument, "c_r must be positive");
  auto L1 = lift_lipschitz_constant(field, graph, eta);
  if (!L1) return L1.error();
  if (*L1 <= 0.0) return 1.0;
  return std::min(1.0, 0.5 * cr / *L1);
}

Expected<JordanRescale> jordan_rescale(const Mat& block, double c) {
  if (!(c > 0.0)) return make_error(ErrorCode::invalid_argument, "margin c must be positive");
  const Eigen::Index N = block.rows();
  if (N == 0 || block.cols() != N)
    return make_error(ErrorCode::not_jordan, "block must be square and nonempty");
  const int b = (N >= 2 && block(1, 0) != 0.0) ? 2 : 1;
  if (N % b != 0) return make_error(ErrorCode::not_jordan, "size not a multiple of the cell size");
  const Mat D = block.topLeftCorner(b, b);
  const double scale = std::max(1.0, block.cwiseAbs().maxCoeff());
  const double tol = 1e-12 * scale;
  if (b == 2 && (std::abs(D(0, 0) - D(1, 1)) > tol || std::abs(D(0, 1) + D(1, 0)) > tol))
    return make_error(ErrorCode::not_jordan, "2x2 cell is not a rotation-scaling block");
  const Eigen::Index cells = N / b;
  const Mat I = Mat::Identity(b, b);
  const Mat Z = Mat::Zero(b, b);
  std::vector<int> chain(cells, 0);
  for (Eigen::Index i = 0; i < cells; ++i) {
    for (Eigen::Index j = 0; j < cells; ++j) {
      const Mat cell = block.block(i * b, j * b, b, b);
      if (i == j) {
        if ((cell - D).cwiseAbs().maxCoeff() > tol)
          return make_error(ErrorCode::not_jordan, "diagonal cells differ");
      } else if (j == i + 1) {
        const bool is_identity = (cell - I).cwiseAbs().maxCoeff() <= tol;
        const bool is_zero = cell.cwiseAbs().maxCoeff() <= tol;
        if (!is_identity && !is_zero)
          return make_error(ErrorCode::not_jordan, "superdiagonal cell must be identity or zero");
        chain[j] = is_identity ? chain[i] + 1 : 0;
      } else if (cell.cwiseAbs().maxCoeff() > tol) {
        return make_error(ErrorCode::not_jordan, "nonzero entry outside the Jordan pattern");
      }
    }
  }
  JordanRescale out;
  out.scaling.resize(N);
  for (Eigen::Index i = 0; i < cells; ++i)
    for (int k = 0; k < b; ++k) out.scaling[i * b + k] = std::pow(c, -chain[i]);
  out.rescaled = out.scaling.asDiagonal() * block * out.scaling.cwiseInverse().asDiagonal();
  return out;
}

}  // namespace invman
