#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "invman/hypotheses.hpp"
#include "invman/manifold.hpp"
#include "invman/systems.hpp"

using namespace invman;

namespace {

Vec v1(double x) { return Vec::Constant(1, x); }

SplitVectorField scalar_field(std::function<double(double, double)> f,
                              std::function<double(double, double)> g) {
  return SplitVectorField(
      1, 1, [f](const Point& x) { return v1(f(x.a[0], x.z[0])); },
      [g](const Point& x) { return v1(g(x.a[0], x.z[0])); });
}

SystemBundle toy() { return *build_system("decoupled_toy"); }

SystemBundle torus(double beta, double delta, double k, double gamma) {
  return *build_system("torus_family",
                       {{"beta", beta}, {"delta", delta}, {"k", k}, {"gamma", gamma}});
}

}  // namespace

TEST_CASE("pointwise rates of the decoupled toy") {
  const SystemBundle b = toy();
  for (double z : {0.0, 0.7, 2.5, 4.0}) {
    const Rates r = pointwise_rates(b.field, Point(v1(0.2), v1(z)));
    CHECK(r.alpha == doctest::Approx(2.0));
    CHECK(r.ell == doctest::Approx(0.0));
    CHECK(r.dzf_norm == doctest::Approx(std::abs(std::cos(z))));
    CHECK(r.dag_norm == doctest::Approx(0.0));
  }
}

TEST_CASE("g = 0 gives zero ell and zero D_a g") {
  const auto f = scalar_field([](double a, double z) { return a * z; },
                              [](double, double) { return 0.0; });
  const Rates r = pointwise_rates(f, Point(v1(0.3), v1(1.2)));
  CHECK(std::abs(r.ell) < 1e-8);
  CHECK(std::abs(r.dag_norm) < 1e-8);
}

TEST_CASE("alpha is the tightest lower bound of the quadratic form") {
  Mat A(2, 2);
  A << 3.0, 0.4, -1.0, 2.0;
  const SplitVectorField f(
      2, 1, [A](const Point& x) { return Vec(A * x.a); },
      [](const Point&) { return v1(0.0); });
  const Rates r = pointwise_rates(f, Point(Vec::Zero(2), v1(0)));
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  for (int i = 0; i < 100; ++i) {
    Vec u(2);
    u << nd(rng), nd(rng);
    u.normalize();
    CHECK(u.dot(A * u) >= r.alpha - 1e-9);
  }
  const Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (A + A.transpose()));
  const Vec u = es.eigenvectors().col(0);
  CHECK(std::abs(u.dot(A * u) - r.alpha) < 1e-6);
}

TEST_CASE("decoupled toy passes the rate inequality with c1 = 0.9") {
  const SystemBundle b = toy();
  auto rep = check_hyp2(b.field, b.domain, 33, 0.9);
  REQUIRE(rep);
  CHECK(rep->passed);
  CHECK(rep->margin >= 0.1 - 1e-9);
}

TEST_CASE("a' = a - z has no slack") {
  const auto f = scalar_field([](double a, double z) { return a - z; },
                              [](double, double) { return 0.0; });
  const BoxDomain dom({Interval::bounded(-1, 1)}, {Interval::periodic(1.0)});
  auto rep = check_hyp2(f, dom, 9, 0.01);
  REQUIRE(rep);
  CHECK_FALSE(rep->passed);
}

TEST_CASE("torus family with the auxiliary choice of the examples passes") {
  const SystemBundle b = torus(1.0, 0.3, 1.0, 0.1);
  auto rep = check_hyp2(b.rates, b.domain, 9, 0.0);
  REQUIRE(rep);
  CHECK(rep->passed);
  // Closed-form slack 8β − 2δ − β²√(1+γ²) − k√(1+γ²) − β/k.
  const double g = std::sqrt(1.01);
  CHECK(rep->margin >= 8 - 0.6 - g - g - 1 - 1e-9);
}

TEST_CASE("torus rates never exceed the closed-form bounds") {
  const SystemBundle b = torus(1.0, 0.3, 1.0, 0.1);
  auto pts = domain_samples(b.domain, 9);
  REQUIRE(pts);
  for (const auto& x : *pts) {
    const Rates r = pointwise_rates(b.field, x);
    const Rates c = b.facts.rate_bounds(x);
    CHECK(r.alpha >= c.alpha - 1e-9);
    CHECK(std::max(r.ell, 0.0) <= c.ell + 1e-9);
    CHECK(r.dzf_norm <= c.dzf_norm + 1e-9);
    CHECK(r.dag_norm <= c.dag_norm + 1e-9);
  }
}

TEST_CASE("order line for the decoupled toy passes at every r") {
  const SystemBundle b = toy();
  for (int r = 2; r <= 12; ++r) {
    auto rep = check_hyp2star(b.field, b.domain, 17, r, 0.5);
    REQUIRE(rep);
    CHECK(rep->passed);
  }
}

TEST_CASE("torus order line at the best auxiliary choice matches the table rows") {
  for (int r = 2; r <= 7; ++r) {
    const double beta = 0.7;
    const AuxiliaryChoice aux = best_auxiliary(beta, r);
    REQUIRE(aux.margin > 0);
    const SystemBundle b = torus(beta, aux.delta, aux.k, 1e-4);
    auto rep = check_hyp2star(b.rates, b.domain, 9, r, 0.0, 0.0);
    REQUIRE(rep);
    CHECK(rep->passed);
  }
}

TEST_CASE("no auxiliary choice certifies order 8 at beta = 1") {
  const AuxiliaryChoice aux = best_auxiliary(1.0, 8);
  CHECK(aux.margin <= 0.0);
  const SystemBundle b = torus(1.0, aux.delta, aux.k, 1e-4);
  auto rep = check_hyp2star(b.rates, b.domain, 9, 8, 0.0, 0.0);
  REQUIRE(rep);
  CHECK_FALSE(rep->passed);
}

TEST_CASE("order one is rejected by the order-line check") {
  const SystemBundle b = toy();
  auto rep = check_hyp2star(b.field, b.domain, 9, 1, 0.0);
  REQUIRE_FALSE(rep);
  CHECK(rep.error().code == ErrorCode::invalid_argument);
}

TEST_CASE("order margins are non-increasing in r") {
  const SystemBundle b = torus(0.7, 0.3, 1.0, 0.1);
  double prev = std::numeric_limits<double>::infinity();
  for (int r = 2; r <= 9; ++r) {
    auto rep = check_hyp2star(b.field, b.domain, 9, r, 0.0);
    REQUIRE(rep);
    CHECK(rep->margin <= prev + 1e-12);
    prev = rep->margin;
  }
}

TEST_CASE("refining the sample grid never increases the margin") {
  const SystemBundle b = torus(1.0, 0.3, 1.0, 0.1);
  auto coarse = check_hyp2(b.field, b.domain, 5, 0.0);
  auto fine = check_hyp2(b.field, b.domain, 9, 0.0);
  REQUIRE(coarse);
  REQUIRE(fine);
  CHECK(fine->margin <= coarse->margin + 1e-12);
}

TEST_CASE("graph-neighbourhood check on the decoupled toy") {
  const SystemBundle b = toy();
  GraphManifold g(ZGrid::over_domain(b.domain, 33), 1);
  g.dh.resize(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double z = g.grid.node(k)[0];
    g.h[k] = v1(0.5 * std::sin(z));
    g.dh[k] = Mat::Constant(1, 1, 0.5 * std::cos(z));
  }
  Hyp5Options opts;
  opts.derivatives_attested = true;
  for (int r : {1, 4, 9}) {
    auto rep = check_hyp5(b.field, g, 0.6, r, 0.0, 9, opts);
    REQUIRE(rep);
    CHECK(rep->passed);
  }
  auto bad = check_hyp5(b.field, g, 0.4, 1, 0.0, 9, opts);
  REQUIRE(bad);
  CHECK_FALSE(bad->passed);
  CHECK(bad->note.find("precondition") != std::string::npos);
}

TEST_CASE("certified order scan") {
  const SystemBundle b = toy();
  auto r_toy = max_certified_order(b.field, b.domain, 17, 0.0);
  REQUIRE(r_toy);
  CHECK(*r_toy >= 10);

  const AuxiliaryChoice aux = best_auxiliary(0.7, 7);
  const SystemBundle t = torus(0.7, aux.delta, aux.k, 1e-4);
  auto samples = sample_rates(t.rates, t.domain, 9);
  REQUIRE(samples);
  CHECK(scan_certified_order(*samples, 0.0).r_max == 7);

  const auto f = scalar_field([](double a, double z) { return a - 2 * z; },
                              [](double, double) { return 0.0; });
  const BoxDomain dom({Interval::bounded(-1, 1)}, {Interval::periodic(1.0)});
  auto r_bad = max_certified_order(f, dom, 9, 0.0);
  REQUIRE(r_bad);
  CHECK(*r_bad == 0);
}

TEST_CASE("unbounded z-directions are sampled on their window with a warning") {
  const auto f = scalar_field([](double a, double) { return 2 * a; },
                              [](double, double) { return 0.0; });
  const BoxDomain dom({Interval::bounded(-1, 1)}, {Interval::unbounded(-2, 2)});
  std::vector<std::string> warnings;
  auto pts = domain_samples(dom, 5, &warnings);
  REQUIRE(pts);
  CHECK_FALSE(warnings.empty());
  auto rep = check_hyp2(f, dom, 5, 0.0);
  REQUIRE(rep);
  CHECK_FALSE(rep->warnings.empty());
}

TEST_CASE("interval samples include bounded endpoints and skip the periodic duplicate") {
  const auto b = interval_samples(Interval::bounded(0, 1), 5);
  REQUIRE(b.size() == 5);
  CHECK(b.front() == 0.0);
  CHECK(b.back() == 1.0);
  const auto p = interval_samples(Interval::periodic(1.0), 4);
  REQUIRE(p.size() == 4);
  CHECK(p.back() < 1.0);
}
