#include <doctest.h>

#include <cmath>
#include <numbers>

#include "invman/manifold.hpp"
#include "invman/systems.hpp"

using namespace invman;

namespace {

constexpr double two_pi = 2 * std::numbers::pi;

Vec v1(double x) { return Vec::Constant(1, x); }

Point pt(double a, double z) { return {v1(a), v1(z)}; }

SplitVectorField scalar_field(std::function<double(double, double)> f,
                              std::function<double(double, double)> g) {
  return SplitVectorField(
      1, 1, [f](const Point& x) { return v1(f(x.a[0], x.z[0])); },
      [g](const Point& x) { return v1(g(x.a[0], x.z[0])); });
}

BoxDomain circle_strip(double w = 1.0) {
  return BoxDomain({Interval::bounded(-w, w)}, {Interval::periodic(two_pi)});
}

GraphManifold sampled(const ZGrid& grid, std::function<double(double)> h) {
  GraphManifold g(grid, 1);
  for (std::size_t k = 0; k < g.size(); ++k) g.h[k] = v1(h(grid.node(k)[0]));
  return g;
}

double sup_error(const GraphManifold& g, std::function<double(double)> h) {
  double worst = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k)
    worst = std::max(worst, std::abs(g.h[k][0] - h(g.grid.node(k)[0])));
  return worst;
}

const auto half_sin = [](double z) { return 0.5 * std::sin(z); };

}  // namespace

TEST_CASE("boundary classification") {
  const auto t = *build_system("torus_family");
  auto bt = classify_boundary(t.field, t.domain, 5);
  REQUIRE(bt);
  CHECK(bt->all_exit());

  auto in = classify_boundary(scalar_field([](double a, double) { return -a; },
                                           [](double, double) { return 0.0; }),
                              circle_strip(), 9);
  REQUIRE(in);
  CHECK(in->all_entry());

  auto mixed = classify_boundary(scalar_field([](double, double z) { return std::sin(z); },
                                              [](double, double) { return 0.0; }),
                                 circle_strip(), 9);
  REQUIRE(mixed);
  REQUIRE(mixed->faces.size() == 2);
  CHECK(mixed->faces[0].kind == FaceKind::mixed);
  CHECK(mixed->faces[1].kind == FaceKind::mixed);
}

TEST_CASE("shooting recovers the decoupled toy graph") {
  const auto b = *build_system("decoupled_toy");
  auto g = compute_graph_shoot(b.field, b.domain, ZGrid::over_domain(b.domain, 33), 10.0, 1e-10);
  REQUIRE(g);
  CHECK(g->unresolved_count() == 0);
  CHECK(sup_error(*g, half_sin) < 1e-6);
}

TEST_CASE("shooting a pure expansion gives the zero graph") {
  const auto f = scalar_field([](double a, double) { return a; }, [](double, double) { return 0.0; });
  auto g = compute_graph_shoot(f, circle_strip(), ZGrid::over_domain(circle_strip(), 9), 20.0, 1e-10);
  REQUIRE(g);
  CHECK(sup_error(*g, [](double) { return 0.0; }) < 1e-8);
}

TEST_CASE("shooting refuses a domain without exit faces") {
  const auto f = scalar_field([](double a, double) { return -a; }, [](double, double) { return 0.0; });
  auto g = compute_graph_shoot(f, circle_strip(), ZGrid::over_domain(circle_strip(), 9), 5.0, 1e-8);
  CHECK_FALSE(g);
}

TEST_CASE("graph transform agrees with shooting") {
  const auto b = *build_system("decoupled_toy");
  const ZGrid grid = ZGrid::over_domain(b.domain, 33);
  auto s = compute_graph_shoot(b.field, b.domain, grid, 10.0, 1e-10);
  auto t = compute_graph_transform(b.field, b.domain, grid, 0.5, 400, 1e-11);
  REQUIRE(s);
  REQUIRE(t);
  double worst = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k)
    worst = std::max(worst, std::abs(s->h[k][0] - t->h[k][0]));
  CHECK(worst < 1e-5);
}

TEST_CASE("graph transform of a linear flow with drift gives the zero graph") {
  const auto f = scalar_field([](double a, double) { return 2 * a; }, [](double, double) { return 1.0; });
  auto g = compute_graph_transform(f, circle_strip(), ZGrid::over_domain(circle_strip(), 17), 0.5,
                                   200, 1e-11);
  REQUIRE(g);
  CHECK(sup_error(*g, [](double) { return 0.0; }) < 1e-9);
}

TEST_CASE("invariance residual") {
  const auto b = *build_system("decoupled_toy");
  const ZGrid grid = ZGrid::over_domain(b.domain, 65);
  auto exact = invariance_residual(b.field, sampled(grid, half_sin), 1.0, 64);
  REQUIRE(exact);
  CHECK(exact->residual < 1e-8);

  auto off1 = invariance_residual(b.field, sampled(grid, [](double z) { return half_sin(z) + 1e-3; }),
                                  0.5, 64);
  auto off2 = invariance_residual(b.field, sampled(grid, [](double z) { return half_sin(z) + 1e-3; }),
                                  1.0, 64);
  REQUIRE(off1);
  REQUIRE(off2);
  CHECK(off1->residual > 1e-4);
  CHECK(off2->residual > off1->residual);
  // The offset grows like 1e-3·e^{2t} along a = h + offset.
  CHECK(off2->residual == doctest::Approx(1e-3 * (std::exp(2.0) - 1)).epsilon(1e-4));

  const auto zero = scalar_field([](double, double) { return 0.0; }, [](double, double) { return 0.0; });
  auto r0 = invariance_residual(zero, sampled(grid, half_sin), 1.0, 32);
  REQUIRE(r0);
  CHECK(r0->residual < 1e-14);
}

TEST_CASE("Lipschitz audit") {
  const BoxDomain dom({Interval::bounded(-1, 1)}, {Interval::bounded(-2, 2)});
  const ZGrid grid = ZGrid::over_domain(dom, 41);
  const auto half = lipschitz_audit(sampled(grid, half_sin), 200);
  CHECK(half.passed);
  CHECK(half.margin >= 0.5 - 1e-9);
  const auto flat = lipschitz_audit(sampled(grid, [](double) { return 0.3; }), 200);
  CHECK(flat.margin == doctest::Approx(1.0));
  const auto steep = lipschitz_audit(sampled(grid, [](double z) { return 1.5 * z; }), 200);
  CHECK_FALSE(steep.passed);
  CHECK(steep.margin == doctest::Approx(-0.5));
}

TEST_CASE("cone probe") {
  const auto b = *build_system("decoupled_toy");
  auto same = cone_invariance_probe(b.field, pt(0.1, 1.0), pt(0.1, 1.0), 1.0, 10, &b.domain);
  REQUIRE(same);
  CHECK(same->passed());
  for (double g : same->gauges) CHECK(g == 0.0);

  auto pair = cone_invariance_probe(b.field, pt(0.1, 0.0), pt(0.0, 0.0), 1.0, 10, &b.domain);
  REQUIRE(pair);
  CHECK(pair->passed());
  REQUIRE(pair->gauges.size() >= 2);
  CHECK(pair->gauges.back() == doctest::Approx(0.01 * std::exp(4.0)).epsilon(1e-6));
}

TEST_CASE("separation probe") {
  const auto b = *build_system("decoupled_toy");
  auto rep = separation_probe(b.field, pt(0.1, 0.5), pt(-0.1, 0.5), 0.5, 0.9, 20, &b.domain);
  REQUIRE(rep);
  CHECK(rep->passed);

  const auto lin = scalar_field([](double a, double) { return 2 * a; }, [](double, double) { return 0.0; });
  auto exact = separation_probe(lin, pt(0.05, 0), pt(0, 0), 1.0, 1.0, 10);
  REQUIRE(exact);
  CHECK(exact->passed);
  // First checkpoint t = 0.1 is the minimum of 0.05(e^{2t} − e^{t}).
  CHECK(exact->margin == doctest::Approx(0.05 * (std::exp(0.2) - std::exp(0.1))).epsilon(1e-6));
  auto too_fast = separation_probe(lin, pt(0.05, 0), pt(0, 0), 1.0, 2.5, 10);
  REQUIRE(too_fast);
  CHECK_FALSE(too_fast->passed);
}

TEST_CASE("derivative field") {
  const auto b = *build_system("decoupled_toy");
  const ZGrid grid = ZGrid::over_domain(b.domain, 33);
  auto g = derivative_field(b.field, sampled(grid, half_sin), 10.0, 1e-11);
  REQUIRE(g);
  REQUIRE(g->has_dh());
  double worst = 0.0;
  for (std::size_t k = 0; k < g->size(); ++k)
    worst = std::max(worst, std::abs(g->dh[k](0, 0) - 0.5 * std::cos(grid.node(k)[0])));
  CHECK(worst < 1e-5);

  const auto lin = scalar_field([](double a, double) { return 2 * a; }, [](double, double) { return 0.0; });
  auto z = derivative_field(lin, sampled(grid, [](double) { return 0.0; }), 5.0, 1e-11);
  REQUIRE(z);
  for (const auto& d : z->dh) CHECK(d.norm() == 0.0);
}

TEST_CASE("periodicity audit") {
  const ZGrid grid({GridAxis{0, 2 * two_pi, 33, false}});
  const auto periodic = periodicity_audit(sampled(grid, half_sin), {two_pi});
  CHECK(periodic.passed);
  CHECK(periodic.samples == 17);
  const auto linear = periodicity_audit(sampled(grid, [](double z) { return z; }), {two_pi});
  CHECK_FALSE(linear.passed);
  const auto skip = periodicity_audit(sampled(grid, half_sin), {1.0});
  CHECK_FALSE(skip.passed);
}

TEST_CASE("intersection of cross graphs") {
  const auto constant = [](double c) {
    CrossGraph g;
    g.fast_radius = 1.0;
    g.eval = [c](const Vec& fast, const Vec&) -> Expected<Vec> { return Vec(c * fast); };
    return g;
  };
  const std::vector<Vec> slow = {v1(0.0), v1(1.0), v1(2.0)};

  auto zero = intersect_graphs(constant(0.0), constant(0.0), slow);
  REQUIRE(zero);
  for (std::size_t s = 0; s < slow.size(); ++s) {
    CHECK(zero->p[s].norm() == 0.0);
    CHECK(zero->q[s].norm() == 0.0);
  }

  IntersectOptions opts;
  opts.p_init = v1(0.8);
  opts.q_init = v1(-0.6);
  auto quarter = intersect_graphs(constant(0.25), constant(0.25), slow, opts);
  REQUIRE(quarter);
  CHECK(quarter->max_ratio <= 0.25 + 1e-12);
  for (std::size_t s = 0; s < slow.size(); ++s) {
    CHECK(std::abs(quarter->p[s][0]) < 1e-11);
    CHECK(std::abs(quarter->q[s][0]) < 1e-11);
  }

  auto steep = intersect_graphs(constant(0.9), constant(0.25), slow);
  REQUIRE_FALSE(steep);
  CHECK(steep.error().code == ErrorCode::precondition);
}

TEST_CASE("interior grid insets bounded axes only") {
  const BoxDomain dom({Interval::bounded(-1, 1)},
                      {Interval::bounded(-1, 1), Interval::periodic(two_pi)});
  const ZGrid g = interior_grid(dom, {5, 8});
  CHECK(g.axis(0).lo == doctest::Approx(-0.9));
  CHECK(g.axis(0).hi == doctest::Approx(0.9));
  CHECK(g.axis(1).periodic);
  CHECK(g.axis(1).hi - g.axis(1).lo == doctest::Approx(two_pi));
}
