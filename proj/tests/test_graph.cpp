#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "invman/graph.hpp"

using namespace invman;

namespace {

constexpr double two_pi = 2 * std::numbers::pi;

Vec v1(double x) { return Vec::Constant(1, x); }

}  // namespace

TEST_CASE("grid over a domain spans one period on periodic axes") {
  BoxDomain dom({Interval::bounded(-1, 1)}, {Interval::periodic(two_pi), Interval::bounded(0, 2)});
  const ZGrid g = ZGrid::over_domain(dom, 5);
  REQUIRE(g.dims() == 2);
  CHECK(g.size() == 25);
  CHECK(g.axis(0).periodic);
  CHECK(g.axis(0).hi - g.axis(0).lo == doctest::Approx(two_pi));
  CHECK_FALSE(g.axis(1).periodic);
  CHECK(g.axis(1).node(4) == doctest::Approx(2.0));
}

TEST_CASE("flat and multi indices round trip") {
  const ZGrid g({GridAxis{0, 1, 3, false}, GridAxis{0, 1, 4, false}, GridAxis{0, 1, 5, false}});
  for (std::size_t k = 0; k < g.size(); ++k) CHECK(g.flat_index(g.multi_index(k)) == k);
}

TEST_CASE("interpolation of a smooth periodic function") {
  BoxDomain dom({Interval::bounded(-1, 1)}, {Interval::periodic(two_pi)});
  GraphManifold gr(ZGrid::over_domain(dom, 65), 1);
  for (std::size_t k = 0; k < gr.size(); ++k) gr.h[k] = v1(0.5 * std::sin(gr.grid.node(k)[0]));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-10, 10);
  double worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    const double z = u(rng);
    auto h = gr.eval(v1(z));
    REQUIRE(h);
    worst = std::max(worst, std::abs((*h)[0] - 0.5 * std::sin(z)));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("interpolation reproduces node values") {
  const ZGrid g({GridAxis{0, 2, 5, false}, GridAxis{-1, 1, 4, false}});
  GraphManifold gr(g, 2);
  for (std::size_t k = 0; k < gr.size(); ++k) {
    const Vec z = g.node(k);
    Vec h(2);
    h << z[0] * z[1], std::exp(z[0]) - z[1];
    gr.h[k] = h;
  }
  for (std::size_t k = 0; k < gr.size(); ++k) {
    auto h = gr.eval(g.node(k));
    REQUIRE(h);
    CHECK(((*h) - gr.h[k]).norm() < 1e-12);
  }
}

TEST_CASE("interpolation is exact for bilinear data") {
  const ZGrid g({GridAxis{0, 2, 6, false}, GridAxis{-1, 1, 6, false}});
  GraphManifold gr(g, 1);
  for (std::size_t k = 0; k < gr.size(); ++k) {
    const Vec z = g.node(k);
    gr.h[k] = v1(1 + 2 * z[0] - z[1] + 0.5 * z[0] * z[1]);
  }
  Vec z(2);
  z << 1.37, 0.21;
  auto h = gr.eval(z);
  REQUIRE(h);
  CHECK((*h)[0] == doctest::Approx(1 + 2 * 1.37 - 0.21 + 0.5 * 1.37 * 0.21));
}

TEST_CASE("leaving a bounded lattice is an error") {
  const ZGrid g({GridAxis{0, 1, 5, false}});
  GraphManifold gr(g, 1);
  for (auto& h : gr.h) h = v1(0.0);
  CHECK_FALSE(gr.covers(v1(1.5)));
  CHECK_FALSE(gr.eval(v1(1.5)));
  CHECK(gr.covers(v1(0.5)));
}

TEST_CASE("graph file round trip") {
  BoxDomain dom({Interval::bounded(-1, 1)}, {Interval::periodic(two_pi)});
  GraphManifold gr(ZGrid::over_domain(dom, 9), 1);
  gr.dh.resize(gr.size());
  for (std::size_t k = 0; k < gr.size(); ++k) {
    const double z = gr.grid.node(k)[0];
    gr.h[k] = v1(0.5 * std::sin(z));
    gr.dh[k] = Mat::Constant(1, 1, 0.5 * std::cos(z));
  }
  gr.residual = 1.25e-9;
  std::stringstream ss;
  write_graph(ss, gr);
  auto back = read_graph(ss);
  REQUIRE(back);
  CHECK(back->size() == gr.size());
  CHECK(back->grid.axis(0).periodic);
  CHECK(back->has_dh());
  for (std::size_t k = 0; k < gr.size(); ++k) {
    CHECK(back->h[k][0] == gr.h[k][0]);
    CHECK(back->dh[k](0, 0) == gr.dh[k](0, 0));
  }
}

TEST_CASE("malformed graph file is rejected") {
  std::stringstream ss("not a graph\n1,2,3\n");
  CHECK_FALSE(read_graph(ss));
}

TEST_CASE("unresolved nodes are counted") {
  GraphManifold gr(ZGrid({GridAxis{0, 1, 4, false}}), 1);
  gr.resolved = {1, 0, 1, 0};
  CHECK(gr.unresolved_count() == 2);
}
