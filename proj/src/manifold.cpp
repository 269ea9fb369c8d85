#include "invman/manifold.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <random>

#include "invman/hypotheses.hpp"
#include "invman/parallel.hpp"

namespace invman {

ZGrid interior_grid(const BoxDomain& domain, const std::vector<int>& counts, double inset) {
  ZGrid base = ZGrid::over_domain(domain, counts);
  std::vector<GridAxis> axes = base.axes();
  for (auto& ax : axes) {
    if (ax.periodic) continue;
    const double w = ax.hi - ax.lo;
    ax.lo += inset * w;
    ax.hi -= inset * w;
  }
  return ZGrid(std::move(axes));
}

const char* to_string(FaceKind kind) {
  switch (kind) {
    case FaceKind::exit: return "exit";
    case FaceKind::entry: return "entry";
    case FaceKind::mixed: return "mixed";
  }
  return "mixed";
}

bool BoundaryReport::all_exit() const {
  if (faces.empty()) return false;
  for (const auto& f : faces)
    if (f.kind != FaceKind::exit) return false;
  return true;
}

bool BoundaryReport::all_entry() const {
  if (faces.empty()) return false;
  for (const auto& f : faces)
    if (f.kind != FaceKind::entry) return false;
  return true;
}

Expected<BoundaryReport> classify_boundary(const SplitVectorField& field, const BoxDomain& domain,
                                           int samples_per_face) {
  if (field.n() != domain.n() || field.m() != domain.m())
    return make_error(ErrorCode::dimension_mismatch, "domain does not match field");
  if (!domain.a_extent_finite())
    return make_error(ErrorCode::unbounded_domain, "a-extent must be finite");
  if (samples_per_face < 1)
    return make_error(ErrorCode::invalid_argument, "need at least one sample per face");
  const int n = domain.n();
  BoundaryReport report;
  for (int i = 0; i < n; ++i) {
    for (int side = 0; side < 2; ++side) {
      const bool upper = side == 1;
      std::vector<std::vector<double>> axes;
      for (int j = 0; j < n; ++j) {
        const auto& iv = domain.a_bounds[j];
        if (j == i)
          axes.push_back({upper ? iv.hi : iv.lo});
        else
          axes.push_back(interval_samples(iv, samples_per_face));
      }
      for (const auto& iv : domain.z_bounds) axes.push_back(interval_samples(iv, samples_per_face));
      const auto pts = tensor_points(axes, n);
      std::vector<double> speed(pts.size());
      parallel_for(pts.size(), [&](std::size_t k) {
        const double fi = field.f(pts[k])[i];
        speed[k] = upper ? fi : -fi;
      });
      FaceReport face;
      face.index = i;
      face.upper = upper;
      face.samples = pts.size();
      bool all_pos = true;
      bool all_neg = true;
      double lo = std::numeric_limits<double>::infinity();
      double hi = -std::numeric_limits<double>::infinity();
      std::size_t lo_at = 0;
      std::size_t hi_at = 0;
      for (std::size_t k = 0; k < pts.size(); ++k) {
        const double s = speed[k];
        if (!(s > 0.0)) all_pos = false;
        if (!(s < 0.0)) all_neg = false;
        if (s < lo || std::isnan(s)) { lo = s; lo_at = k; }
        if (s > hi) { hi = s; hi_at = k; }
      }
      if (all_pos) {
        face.kind = FaceKind::exit;
      } else if (all_neg) {
        face.kind = FaceKind::entry;
      } else {
        face.kind = FaceKind::mixed;
      }
      const bool entry = face.kind == FaceKind::entry;
      face.worst_speed = entry ? hi : lo;
      face.worst_point = pts[entry ? hi_at : lo_at];
      report.faces.push_back(face);
    }
  }
  return report;
}

namespace {

Expected<BoundaryReport> require_exit_faces(const SplitVectorField& field, const BoxDomain& domain,
                                            int density) {
  auto faces = classify_boundary(field, domain, density);
  if (!faces) return faces.error();
  for (const auto& f : faces->faces)
    if (f.kind != FaceKind::exit)
      return make_error(ErrorCode::precondition,
                        fmt::format("a-face {} {} is {} (worst outward speed {})", f.index,
                                    f.upper ? "upper" : "lower", to_string(f.kind),
                                    format_real(f.worst_speed)));
  return faces;
}

Expected<void*> check_grid(const SplitVectorField& field, const BoxDomain& domain,
                           const ZGrid& grid) {
  if (field.n() != domain.n() || field.m() != domain.m())
    return make_error(ErrorCode::dimension_mismatch, "domain does not match field");
  if (grid.dims() != field.m())
    return make_error(ErrorCode::dimension_mismatch, "z-grid does not match field");
  if (grid.size() == 0) return make_error(ErrorCode::empty_domain, "empty z-grid");
  return nullptr;
}

// −1 lower exit, +1 upper exit, 0 survived, 2 unresolved.
enum : int { exit_lower = -1, survived = 0, exit_upper = 1, unresolved = 2 };

int classify_shot(const SplitVectorField& field, const BoxDomain& domain, double a, const Vec& z,
                  double horizon, double tol) {
  Point x0(Vec::Constant(1, a), z);
  if (!domain.contains(x0)) return unresolved;
  auto tr = integrate_endpoint(field, x0, horizon, tol, &domain);
  if (!tr) return unresolved;
  if (!tr->exit_event) return survived;
  const auto& face = tr->exit_event->face;
  if (!face.on_a) return unresolved;
  return face.upper ? exit_upper : exit_lower;
}

}  // namespace

Expected<GraphManifold> compute_graph_shoot(const SplitVectorField& field, const BoxDomain& domain,
                                            const ZGrid& z_grid, double t_horizon, double tol,
                                            const ShootOptions& options) {
  if (auto ok = check_grid(field, domain, z_grid); !ok) return ok.error();
  if (field.n() != 1)
    return make_error(ErrorCode::unsupported,
                      "shooting needs n = 1; use compute_graph_transform for n > 1");
  if (!(t_horizon > 0.0) || !(tol > 0.0))
    return make_error(ErrorCode::invalid_argument, "horizon and tolerance must be positive");
  if (auto faces = require_exit_faces(field, domain, options.boundary_density); !faces)
    return faces.error();

  const double lo0 = domain.a_bounds[0].lo;
  const double hi0 = domain.a_bounds[0].hi;
  const int coarse = std::max(2, options.coarse_samples);
  GraphManifold graph(z_grid, 1);
  graph.resolved.assign(z_grid.size(), 1);
  std::vector<double> widths(z_grid.size(), 0.0);
  std::vector<std::optional<Error>> errors(z_grid.size());

  parallel_for(z_grid.size(), [&](std::size_t node) {
    const Vec z = z_grid.node(node);
    auto shot = [&](double a) {
      return classify_shot(field, domain, a, z, t_horizon, options.integrator_tol);
    };
    double lo = lo0;
    double hi = hi0;
    std::optional<double> found;
    int prev = exit_lower;
    bool failed = false;
    for (int j = 0; j < coarse; ++j) {
      const double a = lo0 + (hi0 - lo0) * (j + 1) / (coarse + 1);
      const int c = shot(a);
      if (c == unresolved) {
        failed = true;
        break;
      }
      if (c < prev) {
        errors[node] = Error{ErrorCode::non_monotone,
                             fmt::format("exit side not monotone in a at z-node {}", node)};
        return;
      }
      prev = c;
      if (c == exit_lower) lo = a;
      if (c == exit_upper && a < hi) hi = std::min(hi, a);
      if (c == survived && !found) found = a;
    }
    if (failed) {
      graph.resolved[node] = 0;
      graph.h[node] = Vec::Constant(1, 0.5 * (lo + hi));
      widths[node] = hi - lo;
      return;
    }
    if (found) {
      // Survivors sit within e^{-c t_horizon} of the graph.
      graph.h[node] = Vec::Constant(1, *found);
      widths[node] = 0.0;
      return;
    }
    while (hi - lo >= tol) {
      const double mid = 0.5 * (lo + hi);
      const int c = shot(mid);
      if (c == exit_lower) {
        lo = mid;
      } else if (c == exit_upper) {
        hi = mid;
      } else if (c == survived) {
        found = mid;
        break;
      } else {
        graph.resolved[node] = 0;
        break;
      }
    }
    graph.h[node] = Vec::Constant(1, found ? *found : 0.5 * (lo + hi));
    widths[node] = found ? 0.0 : hi - lo;
  });

  for (const auto& e : errors)
    if (e) return *e;
  graph.residual = *std::max_element(widths.begin(), widths.end());
  return graph;
}

Expected<GraphManifold> compute_graph_transform(const SplitVectorField& field,
                                                const BoxDomain& domain, const ZGrid& z_grid,
                                                double tau, int max_iter, double tol,
                                                const TransformOptions& options) {
  if (auto ok = check_grid(field, domain, z_grid); !ok) return ok.error();
  if (!(tau > 0.0) || !(tol > 0.0) || max_iter < 1)
    return make_error(ErrorCode::invalid_argument, "need tau > 0, tol > 0, max_iter >= 1");
  if (auto faces = require_exit_faces(field, domain, options.boundary_density); !faces)
    return faces.error();
  auto hyp2 = check_hyp2(field, domain, options.check_density, 0.0);
  if (!hyp2) return hyp2.error();
  if (!hyp2->passed)
    return make_error(ErrorCode::precondition,
                      "rate inequality fails on the domain: " + to_record(*hyp2));

  const int n = field.n();
  Vec centre(n);
  for (int i = 0; i < n; ++i) centre[i] = 0.5 * (domain.a_bounds[i].lo + domain.a_bounds[i].hi);
  GraphManifold graph(z_grid, n);
  for (auto& h : graph.h) h = centre;

  std::vector<Vec> next(z_grid.size());
  std::vector<std::optional<Error>> errors(z_grid.size());
  double prev_change = std::numeric_limits<double>::infinity();
  double worst_ratio = 0.0;
  for (int iter = 1; iter <= max_iter; ++iter) {
    parallel_for(z_grid.size(), [&](std::size_t node) {
      const Vec target = z_grid.node(node);
      Vec zp = target;
      for (int it = 0; it < options.foot_max_iter; ++it) {
        auto h = graph.eval(zp);
        if (!h) {
          errors[node] = Error{ErrorCode::outside_domain, "graph transform: " + h.error().message};
          return;
        }
        auto tr = integrate_endpoint(field, Point(*h, zp), -tau, options.integrator_tol);
        if (!tr) {
          errors[node] = tr.error();
          return;
        }
        const Point& y = tr->final_state();
        const Vec defect = target - y.z;
        if (!y.finite()) {
          errors[node] = Error{ErrorCode::non_finite, "graph transform: non-finite image"};
          return;
        }
        if (defect.lpNorm<Eigen::Infinity>() < options.foot_tol || it + 1 == options.foot_max_iter) {
          next[node] = y.a;
          return;
        }
        zp += defect;
      }
    });
    for (auto& e : errors)
      if (e) return *e;
    double change = 0.0;
    for (std::size_t k = 0; k < next.size(); ++k)
      change = std::max(change, (next[k] - graph.h[k]).lpNorm<Eigen::Infinity>());
    graph.h = next;
    graph.iterations = iter;
    if (std::isfinite(prev_change) && prev_change > 0.0 && prev_change > 100.0 * tol)
      worst_ratio = std::max(worst_ratio, change / prev_change);
    graph.contraction = worst_ratio;
    graph.residual = change;
    if (!std::isfinite(change) || (iter > 3 && change > 1e3 * (prev_change + tol)))
      return make_error(ErrorCode::divergence,
                        fmt::format("graph transform diverged at iteration {} (change {})", iter,
                                    format_real(change)));
    if (change < tol) return graph;
    prev_change = change;
  }
  return make_error(ErrorCode::divergence,
                    fmt::format("graph transform did not reach tol {} in {} iterations (last change "
                                "{}, contraction {})",
                                format_real(tol), max_iter, format_real(graph.residual),
                                format_real(worst_ratio)));
}

Expected<ResidualReport> invariance_residual(const SplitVectorField& field,
                                             const GraphManifold& graph, double t_probe,
                                             std::size_t sample_count, const BoxDomain* domain,
                                             double tol) {
  if (graph.n != field.n() || graph.m() != field.m())
    return make_error(ErrorCode::dimension_mismatch, "graph does not match field");
  if (graph.size() == 0) return make_error(ErrorCode::empty_domain, "empty graph");
  if (sample_count == 0) return make_error(ErrorCode::invalid_argument, "need samples");
  const std::size_t count = std::min(sample_count, graph.size());
  std::vector<double> dist(count, 0.0);
  std::vector<char> exited(count, 0);
  std::vector<char> uncovered(count, 0);
  std::vector<std::optional<Error>> errors(count);
  parallel_for(count, [&](std::size_t s) {
    const std::size_t node = count == 1 ? 0 : s * (graph.size() - 1) / (count - 1);
    const Point x0 = graph.point(node);
    auto tr = integrate_endpoint(field, x0, t_probe, tol, domain);
    if (!tr) {
      errors[s] = tr.error();
      return;
    }
    const Point& y = tr->final_state();
    if (tr->exit_event) exited[s] = 1;
    auto h = graph.eval(y.z);
    if (!h) {
      uncovered[s] = 1;
      return;
    }
    dist[s] = (y.a - *h).norm();
  });
  for (auto& e : errors)
    if (e) return *e;
  ResidualReport rep;
  rep.samples = count;
  for (std::size_t s = 0; s < count; ++s) {
    rep.residual = std::max(rep.residual, dist[s]);
    rep.exits += exited[s];
    rep.uncovered += uncovered[s];
  }
  return rep;
}

CheckReport lipschitz_audit(const GraphManifold& graph, std::size_t pair_samples, unsigned seed) {
  CheckReport rep;
  rep.inequality_id = "lipschitz";
  if (graph.size() < 2) {
    rep.passed = false;
    rep.note = "need at least two nodes";
    return rep;
  }
  const auto& grid = graph.grid;
  double worst = 0.0;
  std::size_t worst_node = 0;
  std::size_t pairs = 0;
  auto consider = [&](std::size_t i, std::size_t j) {
    const double dz = (grid.node(i) - grid.node(j)).norm();
    if (!(dz > 0.0)) return;
    const double ratio = (graph.h[i] - graph.h[j]).norm() / dz;
    ++pairs;
    if (ratio > worst || std::isnan(ratio)) {
      worst = std::isnan(ratio) ? std::numeric_limits<double>::infinity() : ratio;
      worst_node = i;
    }
  };
  for (std::size_t k = 0; k < grid.size(); ++k) {
    auto idx = grid.multi_index(k);
    for (int d = 0; d < grid.dims(); ++d) {
      if (idx[d] + 1 >= grid.axis(d).count) continue;
      auto nb = idx;
      ++nb[d];
      consider(k, grid.flat_index(nb));
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, grid.size() - 1);
  for (std::size_t s = 0; s < pair_samples; ++s) consider(pick(rng), pick(rng));
  rep.samples = pairs;
  rep.observed = worst;
  rep.margin = 1.0 - worst;
  rep.passed = rep.margin > 0.0;
  rep.worst_point = graph.point(worst_node);
  return rep;
}

Expected<ConeTrace> cone_invariance_probe(const SplitVectorField& field, const Point& x1,
                                          const Point& x2, double t_end, int steps,
                                          const BoxDomain* domain, double tol) {
  if (x1.n() != field.n() || x1.m() != field.m() || x2.n() != field.n() || x2.m() != field.m())
    return make_error(ErrorCode::dimension_mismatch, "points do not match field");
  if (steps < 1 || !(t_end > 0.0))
    return make_error(ErrorCode::invalid_argument, "need steps >= 1 and t_end > 0");
  if (!in_cone(x1, x2)) return make_error(ErrorCode::precondition, "x2 is not in the cone of x1");
  std::vector<double> times;
  for (int k = 0; k <= steps; ++k) times.push_back(t_end * k / steps);
  auto t1 = integrate_at(field, x1, times, tol, domain);
  if (!t1) return t1.error();
  auto t2 = integrate_at(field, x2, times, tol, domain);
  if (!t2) return t2.error();
  ConeTrace trace;
  const std::size_t len = std::min(t1->states.size(), t2->states.size());
  trace.truncated = len < times.size();
  const double slack = 1e-9 * (x2.stacked() - x1.stacked()).squaredNorm();
  for (std::size_t k = 0; k < len; ++k) {
    const double g = cone_gauge(t1->states[k], t2->states[k]);
    if (g < -slack) trace.holds = false;
    if (k > 0 && trace.gauges.back() > 0.0 && g < trace.gauges.back() - slack)
      trace.nondecreasing = false;
    trace.times.push_back(t1->times[k]);
    trace.gauges.push_back(g);
  }
  return trace;
}

Expected<CheckReport> separation_probe(const SplitVectorField& field, const Point& x1,
                                       const Point& x2, double t_end, double c1, int steps,
                                       const BoxDomain* domain, double tol) {
  if (x1.n() != field.n() || x1.m() != field.m() || x2.n() != field.n() || x2.m() != field.m())
    return make_error(ErrorCode::dimension_mismatch, "points do not match field");
  if (steps < 1 || !(t_end > 0.0))
    return make_error(ErrorCode::invalid_argument, "need steps >= 1 and t_end > 0");
  if (!in_cone(x1, x2)) return make_error(ErrorCode::precondition, "x2 is not in the cone of x1");
  const double da0 = (x2.a - x1.a).norm();
  if (!(da0 > 0.0)) return make_error(ErrorCode::precondition, "points coincide");
  std::vector<double> times;
  for (int k = 0; k <= steps; ++k) times.push_back(t_end * k / steps);
  auto t1 = integrate_at(field, x1, times, tol, domain);
  if (!t1) return t1.error();
  auto t2 = integrate_at(field, x2, times, tol, domain);
  if (!t2) return t2.error();
  CheckReport rep;
  rep.inequality_id = "separation";
  rep.margin = std::numeric_limits<double>::infinity();
  const std::size_t len = std::min(t1->states.size(), t2->states.size());
  for (std::size_t k = 1; k < len; ++k) {
    const double t = t1->times[k];
    const double d = (t2->states[k].a - t1->states[k].a).norm() - da0 * std::exp(c1 * t);
    if (d < rep.margin) {
      rep.margin = d;
      rep.worst_point = t1->states[k];
    }
  }
  rep.samples = len > 0 ? len - 1 : 0;
  if (len < times.size()) rep.note = "truncated by domain exit";
  rep.passed = rep.margin >= 0.0;
  return rep;
}

Expected<GraphManifold> derivative_field(const SplitVectorField& field, const GraphManifold& graph,
                                         double t_back, double tol) {
  if (graph.n != field.n() || graph.m() != field.m())
    return make_error(ErrorCode::dimension_mismatch, "graph does not match field");
  if (!(t_back > 0.0) || !(tol > 0.0))
    return make_error(ErrorCode::invalid_argument, "need t_back > 0 and tol > 0");
  if (graph.unresolved_count() > 0)
    return make_error(ErrorCode::precondition,
                      fmt::format("{} unresolved graph nodes", graph.unresolved_count()));
  const int n = field.n();
  const int m = field.m();
  GraphManifold out = graph;
  out.dh.assign(graph.size(), Mat::Zero(n, m));
  std::vector<std::optional<Error>> errors(graph.size());
  parallel_for(graph.size(), [&](std::size_t node) {
    const Vec z = graph.grid.node(node);
    auto start = graph_flow(field, graph, z, t_back, tol);
    if (!start) {
      errors[node] = start.error();
      return;
    }
    auto path = riccati_integrate(field, graph, *start, Mat::Zero(n, m), -t_back, tol);
    if (!path) {
      errors[node] = path.error();
      return;
    }
    const Mat& V = path->V.back();
    const double norm = spectral_norm(V);
    if (!(norm < 1.0)) {
      errors[node] = Error{ErrorCode::precondition,
                           fmt::format("|Dh| = {} >= 1 at node {}", format_real(norm), node)};
      return;
    }
    out.dh[node] = V;
  });
  for (auto& e : errors)
    if (e) return *e;
  return out;
}

CheckReport periodicity_audit(const GraphManifold& graph, const std::vector<double>& periods,
                              double tolerance) {
  CheckReport rep;
  rep.inequality_id = "periodicity";
  const auto& grid = graph.grid;
  if (static_cast<int>(periods.size()) != grid.dims()) {
    rep.note = "one period per z-coordinate required";
    return rep;
  }
  double worst = 0.0;
  std::size_t worst_node = 0;
  std::size_t pairs = 0;
  for (int d = 0; d < grid.dims(); ++d) {
    if (!(periods[d] > 0.0)) continue;
    const double sp = grid.axis(d).spacing();
    const double ratio = sp > 0.0 ? periods[d] / sp : 0.0;
    const long offset = std::lround(ratio);
    if (!(sp > 0.0) || std::abs(ratio - offset) > 1e-6 * std::max(1.0, ratio) || offset < 1) {
      rep.note = fmt::format("period of z{} is not a whole number of grid steps", d);
      rep.margin = -std::numeric_limits<double>::infinity();
      return rep;
    }
    for (std::size_t k = 0; k < grid.size(); ++k) {
      auto idx = grid.multi_index(k);
      if (idx[d] + offset >= grid.axis(d).count) continue;
      auto j = idx;
      j[d] += static_cast<int>(offset);
      const double dev = (graph.h[k] - graph.h[grid.flat_index(j)]).lpNorm<Eigen::Infinity>();
      ++pairs;
      if (dev > worst || std::isnan(dev)) {
        worst = std::isnan(dev) ? std::numeric_limits<double>::infinity() : dev;
        worst_node = k;
      }
    }
  }
  rep.samples = pairs;
  if (pairs == 0) {
    rep.note = "no node pairs one period apart";
    rep.margin = -std::numeric_limits<double>::infinity();
    return rep;
  }
  rep.observed = worst;
  rep.margin = tolerance - worst;
  rep.passed = rep.margin > 0.0;
  rep.worst_point = graph.point(worst_node);
  return rep;
}

CrossGraph cross_graph(const GraphManifold& graph, int fast_dim, double fast_scale,
                       double fast_radius) {
  auto shared = std::make_shared<const GraphManifold>(graph);
  CrossGraph cg;
  cg.fast_dim = fast_dim;
  cg.out_dim = graph.n;
  cg.fast_radius = fast_radius;
  cg.eval = [shared, fast_dim, fast_scale](const Vec& fast, const Vec& slow) -> Expected<Vec> {
    if (fast.size() != fast_dim || fast.size() + slow.size() != shared->m())
      return make_error(ErrorCode::dimension_mismatch, "cross graph arguments do not match");
    Vec z(shared->m());
    z << fast_scale * fast, slow;
    return shared->eval(z);
  };
  return cg;
}

namespace {

Expected<CheckReport> audit_cross(const CrossGraph& g, const std::vector<Vec>& slow_nodes,
                                  int per_axis, const char* id) {
  CheckReport rep;
  rep.inequality_id = id;
  std::vector<std::vector<double>> axes(g.fast_dim);
  for (auto& ax : axes) {
    if (per_axis <= 1 || !(g.fast_radius > 0.0)) {
      ax.push_back(0.0);
    } else {
      for (int i = 0; i < per_axis; ++i)
        ax.push_back(-g.fast_radius + 2.0 * g.fast_radius * i / (per_axis - 1));
    }
  }
  // Fast samples as points with empty z-part.
  const auto fast_pts = tensor_points(axes, g.fast_dim);
  double worst = 0.0;
  std::size_t pairs = 0;
  for (const auto& s : slow_nodes) {
    std::vector<Vec> vals;
    for (const auto& p : fast_pts) {
      auto v = g.eval(p.a, s);
      if (!v) return v.error();
      vals.push_back(*v);
    }
    for (std::size_t i = 0; i < fast_pts.size(); ++i)
      for (std::size_t j = i + 1; j < fast_pts.size(); ++j) {
        const double d = (fast_pts[i].a - fast_pts[j].a).norm();
        if (!(d > 0.0)) continue;
        const double ratio = (vals[i] - vals[j]).norm() / d;
        ++pairs;
        if (ratio > worst) {
          worst = ratio;
          rep.worst_point = Point(fast_pts[i].a, s);
        }
      }
  }
  rep.samples = pairs;
  rep.observed = worst;
  rep.margin = 0.5 - worst;
  rep.passed = rep.margin >= 0.0;
  return rep;
}

}  // namespace

Expected<JointGraph> intersect_graphs(const CrossGraph& graph_p, const CrossGraph& graph_q,
                                      const std::vector<Vec>& slow_nodes,
                                      const IntersectOptions& options) {
  if (!graph_p.eval || !graph_q.eval)
    return make_error(ErrorCode::invalid_argument, "cross graphs need evaluators");
  if (graph_p.fast_dim != graph_q.out_dim || graph_q.fast_dim != graph_p.out_dim)
    return make_error(ErrorCode::dimension_mismatch, "fast and output dimensions do not pair up");
  if (!(options.tol > 0.0) || options.max_iter < 1)
    return make_error(ErrorCode::invalid_argument, "need tol > 0 and max_iter >= 1");
  const int dp = graph_p.out_dim;
  const int dq = graph_q.out_dim;
  if ((options.p_init.size() != 0 && options.p_init.size() != dp) ||
      (options.q_init.size() != 0 && options.q_init.size() != dq))
    return make_error(ErrorCode::dimension_mismatch, "initial guess has the wrong length");

  JointGraph out;
  auto ap = audit_cross(graph_p, slow_nodes, options.lipschitz_samples, "lipschitz_p");
  if (!ap) return ap.error();
  auto aq = audit_cross(graph_q, slow_nodes, options.lipschitz_samples, "lipschitz_q");
  if (!aq) return aq.error();
  out.audit_p = *ap;
  out.audit_q = *aq;
  if (!ap->passed || !aq->passed)
    return make_error(ErrorCode::precondition,
                      "Lipschitz audit above 1/2: " + to_record(ap->passed ? *aq : *ap));

  const std::size_t count = slow_nodes.size();
  out.slow_nodes = slow_nodes;
  out.p.assign(count, options.p_init.size() ? options.p_init : Vec::Zero(dp));
  out.q.assign(count, options.q_init.size() ? options.q_init : Vec::Zero(dq));
  std::vector<std::vector<double>> history(count);
  std::vector<int> iters(count, 0);
  std::vector<double> ratios(count, 0.0);
  std::vector<std::optional<Error>> errors(count);
  parallel_for(count, [&](std::size_t s) {
    Vec p = out.p[s];
    Vec q = out.q[s];
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= options.max_iter; ++it) {
      auto pn = graph_p.eval(q, slow_nodes[s]);
      if (!pn) {
        errors[s] = pn.error();
        return;
      }
      auto qn = graph_q.eval(p, slow_nodes[s]);
      if (!qn) {
        errors[s] = qn.error();
        return;
      }
      const double defect = std::max((*pn - p).lpNorm<Eigen::Infinity>(),
                                     (*qn - q).lpNorm<Eigen::Infinity>());
      p = *pn;
      q = *qn;
      history[s].push_back(defect);
      iters[s] = it;
      if (std::isfinite(prev) && prev > std::max(options.tol, 1e-12))
        ratios[s] = std::max(ratios[s], defect / prev);
      if (defect < options.tol) {
        out.p[s] = p;
        out.q[s] = q;
        return;
      }
      prev = defect;
    }
    errors[s] = Error{ErrorCode::divergence,
                      fmt::format("no convergence in {} iterations at slow node {}",
                                  options.max_iter, s)};
  });
  for (auto& e : errors)
    if (e) return *e;
  for (std::size_t s = 0; s < count; ++s) {
    out.iterations = std::max(out.iterations, iters[s]);
    out.max_ratio = std::max(out.max_ratio, ratios[s]);
  }
  out.defects.assign(out.iterations, 0.0);
  for (std::size_t s = 0; s < count; ++s)
    for (std::size_t k = 0; k < history[s].size(); ++k)
      out.defects[k] = std::max(out.defects[k], history[s][k]);
  return out;
}

}  // namespace invman
