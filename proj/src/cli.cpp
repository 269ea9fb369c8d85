#include "invman/cli.hpp"

#include <fmt/format.h>

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>

#include "invman/flow.hpp"
#include "invman/hypotheses.hpp"
#include "invman/manifold.hpp"
#include "invman/parallel.hpp"
#include "invman/regions.hpp"

namespace invman {
namespace {

struct Table {
  std::vector<std::string> columns;  ///< "name[unit]"
  std::vector<std::vector<std::string>> rows;
  void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }
};

std::string column_name(const std::string& col) {
  const auto pos = col.find('[');
  return pos == std::string::npos ? col : col.substr(0, pos);
}

void emit(std::ostream& out, const Table& table, OutputFormat format) {
  if (format == OutputFormat::table) {
    out << "# ";
    for (std::size_t i = 0; i < table.columns.size(); ++i)
      out << (i ? "," : "") << table.columns[i];
    out << "\n";
    for (const auto& row : table.rows) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
      out << "\n";
    }
    return;
  }
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      out << (i ? " " : "") << column_name(table.columns[i]) << "=" << row[i];
    out << "\n";
  }
}

using Fields = std::vector<std::pair<std::string, std::string>>;

void summary(std::ostream& out, const RunConfig& cfg, const std::string& status,
             const Fields& fields) {
  out << "# summary command=" << cfg.command;
  if (cfg.command == "check" || cfg.command == "manifold" || cfg.command == "audit")
    out << " system=" << cfg.system;
  out << " status=" << status;
  for (const auto& [k, v] : fields) out << " " << k << "=" << v;
  out << "\n";
}

int fail_with(const Error& e, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  err << "error: " << to_string(e.code) << ": " << e.message << "\n";
  summary(out, cfg, "error", {{"code", to_string(e.code)}});
  return exit_code_for(e.code);
}

std::string yes_no(bool b) { return b ? "1" : "0"; }

std::string real(double v) { return format_real(v); }

Expected<ParamMap> take_params(const ParamMap& given, ParamMap defaults) {
  for (const auto& [k, v] : given) {
    auto it = defaults.find(k);
    if (it == defaults.end())
      return make_error(ErrorCode::config, fmt::format("unknown parameter '{}'", k));
    it->second = v;
  }
  return defaults;
}

/// Random point with bounded coordinates drawn from the inner 80% of each interval.
Point random_point(const BoxDomain& domain, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 0.9);
  auto draw = [&](const Interval& iv) { return iv.lo + u(rng) * (iv.hi - iv.lo); };
  Vec a(domain.n()), z(domain.m());
  for (int i = 0; i < domain.n(); ++i) a[i] = draw(domain.a_bounds[i]);
  for (int i = 0; i < domain.m(); ++i) z[i] = draw(domain.z_bounds[i]);
  return {a, z};
}

Vec random_unit(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vec v(dim);
  do {
    for (int i = 0; i < dim; ++i) v[i] = nd(rng);
  } while (v.norm() < 1e-8);
  return v / v.norm();
}

double min_a_width(const BoxDomain& domain) {
  double w = 1.0;
  bool any = false;
  for (const auto& iv : domain.a_bounds)
    if (iv.kind != IntervalKind::unbounded) {
      w = any ? std::min(w, iv.width()) : iv.width();
      any = true;
    }
  return w;
}

std::vector<int> grid_counts(const RunConfig& cfg, int m) {
  int c = cfg.grid;
  if (c <= 0) c = m == 1 ? 65 : (m == 2 ? 33 : 9);
  return std::vector<int>(m, c);
}

// ---------------------------------------------------------------- check

int cmd_check(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  auto bundle = build_system(cfg.system, cfg.params);
  if (!bundle) return fail_with(bundle.error(), cfg, out, err);
  const int density = cfg.grid > 0 ? cfg.grid : 9;
  RateProfile rates = bundle->rates;
  rates.c1 = cfg.c1;
  rates.cr = cfg.cr;
  rates.eta = cfg.eta;

  Table table{{"check", "margin[1/time]", "samples", "passed"}, {}};
  bool all_ok = true;
  double worst = std::numeric_limits<double>::infinity();
  auto add = [&](const std::string& id, double margin, std::size_t samples, bool passed) {
    table.add({id, real(margin), std::to_string(samples), yes_no(passed)});
    all_ok = all_ok && passed;
  };

  auto h1 = hyp1_bound(bundle->domain);
  if (!h1) return fail_with(h1.error(), cfg, out, err);
  table.add({"hyp1_cone_diameter", real(*h1), "0", "1"});

  auto faces = classify_boundary(bundle->field, bundle->domain, density);
  if (!faces) return fail_with(faces.error(), cfg, out, err);
  for (const auto& f : faces->faces)
    add(fmt::format("exit_face_a{}_{}", f.index, f.upper ? "upper" : "lower"), f.worst_speed,
        f.samples, f.kind == FaceKind::exit);

  auto h2 = check_hyp2(rates, bundle->domain, density, cfg.c1);
  if (!h2) return fail_with(h2.error(), cfg, out, err);
  add("hyp2", h2->margin, h2->samples, h2->passed);
  worst = std::min(worst, h2->margin);

  for (int r : cfg.orders) {
    if (r < 2) continue;
    auto hs = check_hyp2star(rates, bundle->domain, density, r, cfg.cr, cfg.c1);
    if (!hs) return fail_with(hs.error(), cfg, out, err);
    add(fmt::format("hyp2star_r{}", r), hs->margin, hs->samples, hs->passed);
    worst = std::min(worst, hs->margin);
  }

  auto samples = sample_rates(rates, bundle->domain, density);
  if (!samples) return fail_with(samples.error(), cfg, out, err);
  const OrderScan scan = scan_certified_order(*samples, 0.0);
  table.add({"certified_order", std::to_string(scan.r_max), std::to_string(samples->points.size()),
             yes_no(scan.r_max >= 1)});

  if (cfg.with_hyp5) {
    if (bundle->field.n() != 1 || !h2->passed || !faces->all_exit()) {
      add("hyp5", 0.0, 0, false);
    } else {
      const ZGrid grid = interior_grid(bundle->domain, std::vector<int>(bundle->field.m(), 17));
      auto g = compute_graph_shoot(bundle->field, bundle->domain, grid, 20.0 / h2->margin, 1e-9);
      if (!g) return fail_with(g.error(), cfg, out, err);
      int r = 1;
      for (int v : cfg.orders) r = std::max(r, v);
      Hyp5Options opts;
      opts.derivatives_attested = true;
      auto h5 = check_hyp5(bundle->field, *g, cfg.eta, r, cfg.cr, density, opts);
      if (!h5) return fail_with(h5.error(), cfg, out, err);
      add("hyp5", h5->margin, h5->samples, h5->passed);
      worst = std::min(worst, h5->margin);
    }
  }

  emit(out, table, cfg.format);
  summary(out, cfg, all_ok ? "ok" : "fail",
          {{"margin", real(worst)}, {"certified_order", std::to_string(scan.r_max)}});
  return all_ok ? 0 : 3;
}

// ---------------------------------------------------------------- region

int cmd_region(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  std::vector<int> orders = cfg.orders;
  if (orders.empty())
    for (int r = 1; r <= 8; ++r) orders.push_back(r);
  Table table{{"r", "lo[beta]", "hi[beta]", "empty", "connected", "resolution[beta]"}, {}};
  int nonempty = 0;
  for (int r : orders) {
    auto iv = beta_projection(r, cfg.resolution);
    if (!iv) return fail_with(iv.error(), cfg, out, err);
    if (cfg.format == OutputFormat::records) {
      out << to_record(*iv) << "\n";
    } else {
      table.add({std::to_string(r), iv->empty ? "nan" : real(iv->lo),
                 iv->empty ? "nan" : real(iv->hi), yes_no(iv->empty), yes_no(iv->connected),
                 real(iv->resolution)});
    }
    nonempty += iv->empty ? 0 : 1;
  }
  if (cfg.format == OutputFormat::table) emit(out, table, cfg.format);
  summary(out, cfg, "ok",
          {{"rows", std::to_string(orders.size())}, {"nonempty", std::to_string(nonempty)}});
  return 0;
}

// ---------------------------------------------------------------- manifold

int cmd_manifold(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  auto bundle = build_system(cfg.system, cfg.params);
  if (!bundle) return fail_with(bundle.error(), cfg, out, err);
  const auto& field = bundle->field;
  const auto& domain = bundle->domain;
  auto h2 = check_hyp2(bundle->rates, domain, 9, 0.0);
  if (!h2) return fail_with(h2.error(), cfg, out, err);
  if (!h2->passed) {
    err << "error: rate inequality fails, margin " << real(h2->margin) << "\n";
    summary(out, cfg, "fail", {{"margin", real(h2->margin)}});
    return 3;
  }
  const double m = h2->margin;
  std::string method = cfg.method;
  if (method.empty()) method = field.n() == 1 ? "shoot" : "transform";
  const ZGrid grid = interior_grid(domain, grid_counts(cfg, field.m()));

  Expected<GraphManifold> graph = make_error(ErrorCode::config, "unknown method " + method);
  if (method == "shoot") {
    graph = compute_graph_shoot(field, domain, grid, 20.0 / m, cfg.tol > 0 ? cfg.tol : 1e-10);
  } else if (method == "transform") {
    graph = compute_graph_transform(field, domain, grid, 0.5 / m, 400,
                                    cfg.tol > 0 ? cfg.tol : 1e-10);
  }
  if (!graph) return fail_with(graph.error(), cfg, out, err);
  auto with_dh = derivative_field(field, *graph, 10.0 / m, 1e-11);
  if (!with_dh) return fail_with(with_dh.error(), cfg, out, err);
  const GraphManifold& g = *with_dh;

  Table table{{"audit", "value", "threshold", "passed"}, {}};
  bool all_ok = true;
  auto add = [&](const std::string& id, double value, double threshold, bool passed) {
    table.add({id, real(value), real(threshold), yes_no(passed)});
    all_ok = all_ok && passed;
  };
  add("graph_residual", g.residual, cfg.tol > 0 ? 10 * cfg.tol : 1e-8, g.unresolved_count() == 0);

  auto res = invariance_residual(field, g, 1.0, std::min<std::size_t>(g.size(), 256), &domain);
  if (!res) return fail_with(res.error(), cfg, out, err);
  add("invariance_residual_t1", res->residual, 1e-3,
      res->residual < 1e-3 && res->uncovered == 0);

  const CheckReport lip = lipschitz_audit(g, 400, cfg.seed);
  add("lipschitz_margin", lip.margin, 0.0, lip.passed);

  bool any_period = false;
  for (double p : bundle->facts.periods) any_period = any_period || p > 0.0;
  if (any_period) {
    const CheckReport per = periodicity_audit(g, bundle->facts.periods, 1e-4);
    add("periodicity_deviation", per.observed, 1e-4, per.passed);
  }
  double h_err = 0.0, dh_err = 0.0;
  if (bundle->facts.known_h) {
    for (std::size_t k = 0; k < g.size(); ++k) {
      const Vec z = g.grid.node(k);
      h_err = std::max(h_err, (g.h[k] - bundle->facts.known_h(z)).cwiseAbs().maxCoeff());
      if (bundle->facts.known_dh)
        dh_err = std::max(dh_err, (g.dh[k] - bundle->facts.known_dh(z)).cwiseAbs().maxCoeff());
    }
    add("known_h_error", h_err, 1e-5, h_err < 1e-5);
    if (bundle->facts.known_dh) add("known_dh_error", dh_err, 1e-5, dh_err < 1e-5);
  }

  if (!cfg.out.empty()) {
    std::ofstream file(cfg.out);
    if (!file) return fail_with(make_error(ErrorCode::config, "cannot open " + cfg.out), cfg, out, err);
    write_graph(file, g);
  }
  emit(out, table, cfg.format);
  summary(out, cfg, all_ok ? "ok" : "fail",
          {{"method", method},
           {"nodes", std::to_string(g.size())},
           {"residual", real(res->residual)},
           {"lipschitz_margin", real(lip.margin)},
           {"margin", real(m)}});
  return all_ok ? 0 : 4;
}

// ---------------------------------------------------------------- audit

struct PairOutcome {
  bool cone_ok = true;
  bool sep_ok = true;
  double cone_min = 0.0;
  double sep_margin = 0.0;
  std::string error;
};

int cmd_audit(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  auto bundle = build_system(cfg.system, cfg.params);
  if (!bundle) return fail_with(bundle.error(), cfg, out, err);
  const auto& field = bundle->field;
  const auto& domain = bundle->domain;
  const double tol = cfg.tol > 0 ? cfg.tol : 1e-10;
  std::mt19937_64 rng(cfg.seed);

  Table table{{"property", "cases", "failures", "worst", "passed"}, {}};
  bool all_ok = true;
  auto add = [&](const std::string& id, std::size_t cases, std::size_t failures, double worst,
                 bool passed) {
    table.add({id, std::to_string(cases), std::to_string(failures), real(worst), yes_no(passed)});
    all_ok = all_ok && passed;
  };

  auto h2 = check_hyp2(bundle->rates, domain, 9, 0.0);
  if (!h2) return fail_with(h2.error(), cfg, out, err);
  const bool certified = h2->passed;

  if (certified) {
    const double c1 = 0.5 * h2->margin;
    const double s = 0.05 * min_a_width(domain);
    std::vector<std::pair<Point, Point>> pairs;
    std::uniform_real_distribution<double> u(0.0, 0.95);
    while (pairs.size() < static_cast<std::size_t>(cfg.pairs)) {
      const Point x1 = random_point(domain, rng);
      const Vec da = random_unit(field.n(), rng) * s;
      const Vec dz = random_unit(field.m(), rng) * (u(rng) * da.norm());
      const Point x2(x1.a + da, x1.z + dz);
      if (domain.contains(x2)) pairs.emplace_back(x1, x2);
    }
    std::vector<PairOutcome> outcome(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t i) {
      auto cone = cone_invariance_probe(field, pairs[i].first, pairs[i].second, 1.0, 20, &domain,
                                        1e-11);
      auto sep = separation_probe(field, pairs[i].first, pairs[i].second, 1.0, c1, 20, &domain,
                                  1e-11);
      if (!cone || !sep) {
        outcome[i].error = !cone ? cone.error().message : sep.error().message;
        outcome[i].cone_ok = outcome[i].sep_ok = false;
        return;
      }
      outcome[i].cone_ok = cone->passed();
      outcome[i].cone_min = *std::min_element(cone->gauges.begin(), cone->gauges.end());
      outcome[i].sep_ok = sep->passed;
      outcome[i].sep_margin = sep->margin;
    });
    std::size_t cone_fail = 0, sep_fail = 0;
    double cone_worst = std::numeric_limits<double>::infinity();
    double sep_worst = std::numeric_limits<double>::infinity();
    for (const auto& o : outcome) {
      if (!o.error.empty()) err << "warning: probe failed: " << o.error << "\n";
      cone_fail += o.cone_ok ? 0 : 1;
      sep_fail += o.sep_ok ? 0 : 1;
      cone_worst = std::min(cone_worst, o.cone_min);
      sep_worst = std::min(sep_worst, o.sep_margin);
    }
    add("cone_invariance", pairs.size(), cone_fail, cone_worst, cone_fail == 0);
    add("separation", pairs.size(), sep_fail, sep_worst, sep_fail == 0);
  } else {
    table.add({"cone_invariance", "0", "0", "nan", "skipped"});
    table.add({"separation", "0", "0", "nan", "skipped"});
  }

  // Cocycle identity on random splits, horizon shortened for fast systems.
  {
    auto samples = sample_rates(bundle->rates, domain, 5);
    if (!samples) return fail_with(samples.error(), cfg, out, err);
    double amax = 0.0;
    for (const auto& r : samples->rates) amax = std::max(amax, std::abs(r.alpha));
    const double horizon = std::min(1.0, 1.0 / (1.0 + amax));
    std::uniform_real_distribution<double> ut(0.0, horizon);
    const int splits = 20;
    std::vector<Point> xs;
    std::vector<std::pair<double, double>> ts;
    for (int i = 0; i < splits; ++i) {
      xs.push_back(random_point(domain, rng));
      const double a = ut(rng);
      ts.emplace_back(a, ut(rng));
    }
    std::vector<double> resid(splits, 0.0);
    std::vector<std::string> errors(splits);
    parallel_for(splits, [&](std::size_t i) {
      const auto [tau, t] = ts[i];
      auto whole = variational(field, xs[i], tau + t, tol);
      auto first = variational(field, xs[i], t, tol);
      if (!whole || !first) {
        errors[i] = "integration failed";
        return;
      }
      auto second = variational(field, first->states.back(), tau, tol);
      if (!second) {
        errors[i] = "integration failed";
        return;
      }
      const Mat& q = whole->matrices.back();
      const Mat diff = q - second->matrices.back() * first->matrices.back();
      resid[i] = diff.norm() / std::max(1.0, q.norm());
    });
    std::size_t fails = 0;
    double worst = 0.0;
    for (int i = 0; i < splits; ++i) {
      if (!errors[i].empty()) ++fails;
      worst = std::max(worst, resid[i]);
      if (resid[i] >= 1e2 * tol) ++fails;
    }
    add("cocycle", splits, fails, worst, fails == 0);
  }

  // vec(APB) = (Bᵀ ⊗ A) vec(P).
  {
    std::uniform_int_distribution<int> dim(1, 5);
    std::size_t fails = 0;
    double worst = 0.0;
    const int triples = 1000;
    for (int i = 0; i < triples; ++i) {
      const int p = dim(rng), q = dim(rng), r = dim(rng), s = dim(rng);
      std::uniform_real_distribution<double> ud(-1.0, 1.0);
      auto rnd = [&](int rows, int cols) {
        Mat m(rows, cols);
        for (int a = 0; a < rows; ++a)
          for (int b = 0; b < cols; ++b) m(a, b) = ud(rng);
        return m;
      };
      const Mat A = rnd(p, q), P = rnd(q, r), B = rnd(r, s);
      const Vec lhs = vec(A * P * B);
      const Vec rhs = kron(B.transpose(), A) * vec(P);
      const Mat scale = A.cwiseAbs() * P.cwiseAbs() * B.cwiseAbs();
      const double rel = (lhs - rhs).cwiseAbs().maxCoeff() /
                         (std::numeric_limits<double>::epsilon() * std::max(1.0, scale.maxCoeff()));
      worst = std::max(worst, rel);
      if (rel > 4.0 * (q + r)) ++fails;
    }
    add("vec_kron_ulps", triples, fails, worst, fails == 0);
  }

  // Riccati derivative against a five-point difference of the graph.
  if (certified && field.n() == 1 && field.m() <= 2) {
    auto faces = classify_boundary(field, domain, 9);
    if (faces && faces->all_exit()) {
      const ZGrid grid = interior_grid(domain, grid_counts(cfg, field.m()));
      auto g = compute_graph_shoot(field, domain, grid, 20.0 / h2->margin, 1e-11);
      if (!g) return fail_with(g.error(), cfg, out, err);
      auto gd = derivative_field(field, *g, 10.0 / h2->margin, 1e-11);
      if (!gd) return fail_with(gd.error(), cfg, out, err);
      double dmax = 0.0, diff = 0.0;
      std::size_t cases = 0;
      for (std::size_t k = 0; k < gd->size(); ++k) {
        const auto idx = gd->grid.multi_index(k);
        for (int d = 0; d < gd->m(); ++d) {
          const auto& ax = gd->grid.axis(d);
          const int cyc = ax.count - 1;
          auto at = [&](int off) -> std::optional<double> {
            auto j = idx;
            int v = idx[d] + off;
            if (ax.periodic) {
              v = ((v % cyc) + cyc) % cyc;
            } else if (v < 0 || v >= ax.count) {
              return std::nullopt;
            }
            j[d] = v;
            return gd->h[gd->grid.flat_index(j)][0];
          };
          auto m2 = at(-2), m1 = at(-1), p1 = at(1), p2 = at(2);
          if (!m2 || !m1 || !p1 || !p2) continue;
          const double fd = (-*p2 + 8.0 * *p1 - 8.0 * *m1 + *m2) / (12.0 * ax.spacing());
          diff = std::max(diff, std::abs(fd - gd->dh[k](0, d)));
          dmax = std::max(dmax, std::abs(gd->dh[k](0, d)));
          ++cases;
        }
      }
      const double rel = diff / std::max(dmax, 1e-12);
      add("riccati_vs_fd", cases, rel <= 1e-3 ? 0 : 1, rel, rel <= 1e-3);
    } else {
      table.add({"riccati_vs_fd", "0", "0", "nan", "skipped"});
    }
  } else {
    table.add({"riccati_vs_fd", "0", "0", "nan", "skipped"});
  }

  emit(out, table, cfg.format);
  summary(out, cfg, all_ok ? "ok" : "fail",
          {{"certified", yes_no(certified)}, {"margin", real(h2->margin)}});
  return all_ok ? 0 : 3;
}

// ---------------------------------------------------------------- counterexample

int cmd_counterexample(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  auto p = take_params(cfg.params, {{"eps", 0.1}, {"alpha", 0.1}});
  if (!p) return fail_with(p.error(), cfg, out, err);
  auto fps = counterexample_fixed_points(p->at("eps"), p->at("alpha"));
  if (!fps) return fail_with(fps.error(), cfg, out, err);
  Table table{{"w", "theta[rad]", "re1", "im1", "re2", "im2", "kind"}, {}};
  for (const auto& f : *fps)
    table.add({real(f.w), real(f.theta), real(f.lambda1.real()), real(f.lambda1.imag()),
               real(f.lambda2.real()), real(f.lambda2.imag()), to_string(f.kind)});
  emit(out, table, cfg.format);
  summary(out, cfg, "ok", {{"fixed_points", std::to_string(fps->size())}});
  return 0;
}

// ---------------------------------------------------------------- persist

int cmd_persist(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  auto p = take_params(cfg.params, {{"sigma", 1.0},
                                    {"kappa", 0.1},
                                    {"lambda", 0.05},
                                    {"r", 1.0},
                                    {"mu", 1.0},
                                    {"nu", 1.0},
                                    {"gamma", 1.0}});
  if (!p) return fail_with(p.error(), cfg, out, err);
  PersistenceConstants c = persistence_toy_constants(p->at("sigma"), p->at("kappa"),
                                                     p->at("lambda"),
                                                     static_cast<int>(p->at("r")));
  c.mu = p->at("mu");
  c.nu = p->at("nu");
  c.gamma_exp = p->at("gamma");
  auto res = persistence_thresholds(c, cfg.delta_cap);
  if (!res) return fail_with(res.error(), cfg, out, err);
  const KappaTerms terms = kappa_terms(c);

  Table table{{"eps", "k_eps", "delta", "kappa[1/time]"}, {}};
  const int points = 20;
  for (int i = 0; i < points; ++i) {
    const double eps = res->eps_star * std::pow(10.0, -3.0 * (points - 1 - i) / (points - 1));
    auto k = k_epsilon(eps, terms);
    if (!k) return fail_with(k.error(), cfg, out, err);
    const double delta = 2.0 * (c.c3 / c.sigma) * std::pow(eps, c.mu);
    table.add({real(eps), real(*k), real(delta), real(kappa(eps, *k, delta, terms))});
  }
  Fields fields{{"eps_star", real(res->eps_star)},
                {"delta_star", real(res->delta_star)},
                {"k_star", real(res->k_star)},
                {"kappa_star", real(res->kappa_star)}};
  if (cfg.method == "intersect") {
    const int c0 = cfg.grid > 0 ? cfg.grid : 9;
    auto inter = persistence_intersection({}, {5, c0, c0});
    if (!inter) return fail_with(inter.error(), cfg, out, err);
    fields.emplace_back("intersect_ratio", real(inter->joint.max_ratio));
    fields.emplace_back("intersect_iterations", std::to_string(inter->joint.iterations));
  }
  emit(out, table, cfg.format);
  summary(out, cfg, "ok", fields);
  return 0;
}

// ---------------------------------------------------------------- plotdata

int cmd_plotdata(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  auto p = take_params(cfg.params, {{"omega", 0.5}, {"beta_lo", 0.25}, {"beta_hi", 8.0}});
  if (!p) return fail_with(p.error(), cfg, out, err);
  const int count = cfg.grid > 1 ? cfg.grid : 40;
  const double lo = p->at("beta_lo"), hi = p->at("beta_hi");
  if (!(hi > lo) || !(lo > 0.0))
    return fail_with(make_error(ErrorCode::config, "need 0 < beta_lo < beta_hi"), cfg, out, err);
  std::vector<int> order(count, 0);
  parallel_for(count, [&](std::size_t i) {
    const double beta = lo + (hi - lo) * static_cast<double>(i) / (count - 1);
    int r = 0;
    while (r < 10 && feasibility_margin(beta, r + 1) > 0.0) ++r;
    order[i] = r;
  });
  Table table{{"beta", "omega", "exists", "order"}, {}};
  for (int i = 0; i < count; ++i) {
    const double beta = lo + (hi - lo) * static_cast<double>(i) / (count - 1);
    table.add({real(beta), real(p->at("omega")), yes_no(order[i] > 0), std::to_string(order[i])});
  }
  emit(out, table, cfg.format);
  summary(out, cfg, "ok", {{"rows", std::to_string(count)}});
  return 0;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

Expected<double> parse_real(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    return make_error(ErrorCode::config, fmt::format("bad number for {}: '{}'", key, text));
  }
}

Expected<std::vector<int>> parse_orders(const std::string& text) {
  std::vector<int> orders;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto dash = item.find("..");
    auto to_int = [&](const std::string& s) -> Expected<int> {
      auto v = parse_real("r", s);
      if (!v) return v.error();
      if (*v != std::floor(*v) || *v < 1)
        return make_error(ErrorCode::config, "orders must be positive integers");
      return static_cast<int>(*v);
    };
    if (dash != std::string::npos) {
      auto a = to_int(item.substr(0, dash));
      auto b = to_int(item.substr(dash + 2));
      if (!a) return a.error();
      if (!b) return b.error();
      for (int r = *a; r <= *b; ++r) orders.push_back(r);
    } else {
      auto a = to_int(item);
      if (!a) return a.error();
      orders.push_back(*a);
    }
  }
  return orders;
}

Expected<void*> parse_param(const std::string& text, ParamMap& params) {
  const auto eq = text.find('=');
  if (eq == std::string::npos)
    return make_error(ErrorCode::config, "parameter must be name=value: " + text);
  const std::string key = trim(text.substr(0, eq));
  auto v = parse_real(key, trim(text.substr(eq + 1)));
  if (!v) return v.error();
  params[key] = *v;
  return nullptr;
}

Expected<void*> validate(const RunConfig& cfg) {
  static const std::vector<std::string> commands = {"check",          "region",  "manifold",
                                                    "audit",          "counterexample",
                                                    "persist",        "plotdata"};
  if (std::find(commands.begin(), commands.end(), cfg.command) == commands.end())
    return make_error(ErrorCode::config, "unknown command '" + cfg.command + "'");
  if (cfg.tol < 0.0) return make_error(ErrorCode::config, "tol must be positive");
  if (cfg.grid < 0) return make_error(ErrorCode::config, "grid must be positive");
  if (cfg.pairs <= 0) return make_error(ErrorCode::config, "pairs must be positive");
  if (!(cfg.resolution > 0.0)) return make_error(ErrorCode::config, "resolution must be positive");
  if (!(cfg.delta_cap > 0.0)) return make_error(ErrorCode::config, "delta-cap must be positive");
  if (!(cfg.eta > 0.0) || cfg.eta > 1.0)
    return make_error(ErrorCode::config, "eta must lie in (0, 1]");
  const bool uses_system = cfg.command == "check" || cfg.command == "manifold" ||
                           cfg.command == "audit";
  if (uses_system) {
    bool found = false;
    for (const auto& s : registry()) found = found || s.name == cfg.system;
    if (!found) return make_error(ErrorCode::unknown_system, "unknown system '" + cfg.system + "'");
  }
  if (!cfg.method.empty() && cfg.method != "shoot" && cfg.method != "transform" &&
      cfg.method != "intersect")
    return make_error(ErrorCode::config, "unknown method '" + cfg.method + "'");
  return nullptr;
}

}  // namespace

Expected<RunConfig> apply_config_text(const std::string& text, RunConfig cfg) {
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      return make_error(ErrorCode::config, fmt::format("line {}: expected key = value", lineno));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto num = [&]() { return parse_real(key, value); };
    if (key == "command") {
      cfg.command = value;
    } else if (key == "system") {
      cfg.system = value;
    } else if (key.rfind("param.", 0) == 0) {
      auto v = num();
      if (!v) return v.error();
      cfg.params[key.substr(6)] = *v;
    } else if (key == "out") {
      cfg.out = value;
    } else if (key == "format") {
      if (value == "table") cfg.format = OutputFormat::table;
      else if (value == "records") cfg.format = OutputFormat::records;
      else return make_error(ErrorCode::config, "format must be table or records");
    } else if (key == "r" || key == "orders") {
      auto o = parse_orders(value);
      if (!o) return o.error();
      cfg.orders = *o;
    } else if (key == "method") {
      cfg.method = value;
    } else if (key == "with_hyp5") {
      cfg.with_hyp5 = value == "1" || value == "true" || value == "yes";
    } else {
      auto v = num();
      if (!v) return v.error();
      if (key == "grid") cfg.grid = static_cast<int>(*v);
      else if (key == "tol") cfg.tol = *v;
      else if (key == "seed") cfg.seed = static_cast<unsigned>(*v);
      else if (key == "c1") cfg.c1 = *v;
      else if (key == "cr") cfg.cr = *v;
      else if (key == "eta") cfg.eta = *v;
      else if (key == "pairs") cfg.pairs = static_cast<int>(*v);
      else if (key == "resolution") cfg.resolution = *v;
      else if (key == "delta_cap") cfg.delta_cap = *v;
      else return make_error(ErrorCode::config, fmt::format("line {}: unknown key '{}'", lineno, key));
    }
  }
  return cfg;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::config:
    case ErrorCode::unknown_system:
    case ErrorCode::invalid_argument:
    case ErrorCode::dimension_mismatch:
      return 2;
    case ErrorCode::precondition:
    case ErrorCode::infeasible:
    case ErrorCode::non_monotone:
    case ErrorCode::unbounded_domain:
    case ErrorCode::empty_domain:
    case ErrorCode::not_jordan:
    case ErrorCode::unsupported:
      return 3;
    default:
      return 4;
  }
}

int run_command(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (auto v = validate(cfg); !v) return fail_with(v.error(), cfg, out, err);
  if (cfg.command == "check") return cmd_check(cfg, out, err);
  if (cfg.command == "region") return cmd_region(cfg, out, err);
  if (cfg.command == "manifold") return cmd_manifold(cfg, out, err);
  if (cfg.command == "audit") return cmd_audit(cfg, out, err);
  if (cfg.command == "counterexample") return cmd_counterexample(cfg, out, err);
  if (cfg.command == "persist") return cmd_persist(cfg, out, err);
  return cmd_plotdata(cfg, out, err);
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Invariant manifold certification and computation"};
  app.require_subcommand(0, 1);
  std::string config_path, system, outpath, format, orders, method;
  std::vector<std::string> params;
  int grid = 0, pairs = 0;
  unsigned workers = 0, seed = 0;
  double tol = 0, c1 = 0, cr = 0, eta = 0, resolution = 0, delta_cap = 0;
  bool hyp5 = false;
  auto* o_config = app.add_option("--config", config_path, "key = value configuration file");
  auto* o_system = app.add_option("--system", system, "registered system name");
  auto* o_param = app.add_option("--param", params, "system parameter name=value (repeatable)");
  auto* o_grid = app.add_option("--grid", grid, "nodes per z-coordinate or sweep size");
  auto* o_tol = app.add_option("--tol", tol, "tolerance");
  auto* o_out = app.add_option("--out", outpath, "output file for the graph");
  auto* o_format = app.add_option("--format", format, "table or records");
  auto* o_r = app.add_option("--r", orders, "orders, e.g. 1..8 or 2,3");
  auto* o_seed = app.add_option("--seed", seed, "random seed");
  auto* o_method = app.add_option("--method", method, "shoot, transform or intersect");
  auto* o_c1 = app.add_option("--c1", c1, "separation constant c1");
  auto* o_cr = app.add_option("--cr", cr, "order constant cr");
  auto* o_eta = app.add_option("--eta", eta, "graph neighbourhood scale");
  auto* o_pairs = app.add_option("--pairs", pairs, "random pairs for the cone audit");
  auto* o_res = app.add_option("--resolution", resolution, "endpoint resolution for region");
  auto* o_cap = app.add_option("--delta-cap", delta_cap, "cap on delta for persist");
  auto* o_hyp5 = app.add_flag("--with-hyp5", hyp5, "include the graph-neighbourhood check");
  auto* o_workers = app.add_option("--workers", workers, "worker threads");
  for (const char* name : {"check", "region", "manifold", "audit", "counterexample", "persist",
                           "plotdata"})
    app.add_subcommand(name)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  RunConfig cfg;
  if (o_config->count()) {
    std::ifstream file(config_path);
    if (!file) {
      err << "error: cannot read " << config_path << "\n";
      return 2;
    }
    std::stringstream buf;
    buf << file.rdbuf();
    auto applied = apply_config_text(buf.str(), cfg);
    if (!applied) {
      err << "error: " << applied.error().message << "\n";
      return 2;
    }
    cfg = *applied;
  }
  if (!app.get_subcommands().empty()) cfg.command = app.get_subcommands().front()->get_name();
  if (cfg.command.empty()) {
    err << "error: no command given on the command line or in the config file\n";
    return 2;
  }
  if (o_system->count()) cfg.system = system;
  if (o_param->count())
    for (const auto& p : params)
      if (auto r = parse_param(p, cfg.params); !r) {
        err << "error: " << r.error().message << "\n";
        return 2;
      }
  if (o_grid->count()) cfg.grid = grid;
  if (o_tol->count()) cfg.tol = tol;
  if (o_out->count()) cfg.out = outpath;
  if (o_format->count()) {
    if (format == "table") cfg.format = OutputFormat::table;
    else if (format == "records") cfg.format = OutputFormat::records;
    else {
      err << "error: format must be table or records\n";
      return 2;
    }
  }
  if (o_r->count()) {
    auto o = parse_orders(orders);
    if (!o) {
      err << "error: " << o.error().message << "\n";
      return 2;
    }
    cfg.orders = *o;
  }
  if (o_seed->count()) cfg.seed = seed;
  if (o_method->count()) cfg.method = method;
  if (o_c1->count()) cfg.c1 = c1;
  if (o_cr->count()) cfg.cr = cr;
  if (o_eta->count()) cfg.eta = eta;
  if (o_pairs->count()) cfg.pairs = pairs;
  if (o_res->count()) cfg.resolution = resolution;
  if (o_cap->count()) cfg.delta_cap = delta_cap;
  if (o_hyp5->count()) cfg.with_hyp5 = hyp5;
  if (o_workers->count()) set_worker_count(workers);
  return run_command(cfg, out, err);
}

}  // namespace invman
