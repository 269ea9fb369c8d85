#include "invman/hypotheses.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "invman/parallel.hpp"

namespace invman {

Rates pointwise_rates(const SplitVectorField& field, const Point& x) {
  return rates_from_jacobian(field.jacobian(x), field.n());
}

std::vector<double> interval_samples(const Interval& iv, int density) {
  std::vector<double> s;
  if (iv.kind == IntervalKind::periodic) {
    for (int i = 0; i < density; ++i) s.push_back(iv.lo + iv.period() * i / density);
  } else if (density == 1) {
    s.push_back(0.5 * (iv.lo + iv.hi));
  } else {
    for (int i = 0; i < density; ++i) s.push_back(iv.lo + (iv.hi - iv.lo) * i / (density - 1));
  }
  return s;
}

std::vector<Point> tensor_points(const std::vector<std::vector<double>>& axes, int n) {
  std::size_t total = 1;
  for (const auto& a : axes) total *= a.size();
  std::vector<Point> pts;
  pts.reserve(total);
  const int dim = static_cast<int>(axes.size());
  std::vector<std::size_t> pos(dim, 0);
  for (std::size_t k = 0; k < total; ++k) {
    Vec x(dim);
    for (int d = 0; d < dim; ++d) x[d] = axes[d][pos[d]];
    pts.push_back(Point::from_stacked(x, n));
    for (int d = dim - 1; d >= 0; --d) {
      if (++pos[d] < axes[d].size()) break;
      pos[d] = 0;
    }
  }
  return pts;
}

namespace {

CheckReport min_report(const std::vector<Point>& points, const std::vector<double>& slack,
                       std::string id) {
  CheckReport rep;
  rep.inequality_id = std::move(id);
  rep.samples = points.size();
  rep.margin = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double s = std::isnan(slack[i]) ? -std::numeric_limits<double>::infinity() : slack[i];
    if (s < rep.margin) {
      rep.margin = s;
      rep.worst_point = points[i];
    }
  }
  rep.passed = rep.margin > 0.0;
  return rep;
}

}  // namespace

Expected<std::vector<Point>> domain_samples(const BoxDomain& domain, int density,
                                            std::vector<std::string>* warnings) {
  if (density < 1) return make_error(ErrorCode::invalid_argument, "grid density must be >= 1");
  if (domain.n() == 0 || domain.m() == 0)
    return make_error(ErrorCode::empty_domain, "domain needs a- and z-coordinates");
  std::vector<std::vector<double>> axes;
  for (const auto& iv : domain.a_bounds) {
    if (iv.kind == IntervalKind::unbounded && warnings)
      warnings->push_back("unbounded a-coordinate sampled on its declared window");
    if (iv.kind == IntervalKind::periodic)
      return make_error(ErrorCode::invalid_argument, "a-coordinates cannot be periodic");
    axes.push_back(interval_samples(iv, density));
  }
  for (std::size_t i = 0; i < domain.z_bounds.size(); ++i) {
    const auto& iv = domain.z_bounds[i];
    if (iv.kind == IntervalKind::unbounded && warnings)
      warnings->push_back(fmt::format("unbounded z{} sampled on window [{}, {}]", i,
                                      format_real(iv.lo), format_real(iv.hi)));
    axes.push_back(interval_samples(iv, density));
  }
  return tensor_points(axes, domain.n());
}

Expected<RateSamples> sample_rates(const RateProfile& profile, const BoxDomain& domain,
                                   int density) {
  RateSamples out;
  auto pts = domain_samples(domain, density, &out.warnings);
  if (!pts) return pts.error();
  out.points = std::move(*pts);
  out.rates.resize(out.points.size());
  parallel_for(out.points.size(), [&](std::size_t i) { out.rates[i] = profile.rates(out.points[i]); });
  return out;
}

double hyp2_slack(const Rates& r, double c1) {
  return r.alpha - std::max(r.ell, 0.0) - r.dzf_norm - r.dag_norm - c1;
}

double order_slack(const Rates& rates, int r, double cr, double dag_scale) {
  return rates.alpha - r * std::max(rates.ell, 0.0) - (r + 1) * dag_scale * rates.dag_norm - cr;
}

Expected<CheckReport> check_hyp2(const RateProfile& profile, const BoxDomain& domain,
                                 int grid_density, double c1) {
  if (!(c1 >= 0.0)) return make_error(ErrorCode::invalid_argument, "c1 must be nonnegative");
  auto s = sample_rates(profile, domain, grid_density);
  if (!s) return s.error();
  std::vector<double> slack(s->points.size());
  for (std::size_t i = 0; i < slack.size(); ++i) slack[i] = hyp2_slack(s->rates[i], c1);
  auto rep = min_report(s->points, slack, "hyp2");
  rep.warnings = s->warnings;
  return rep;
}

Expected<CheckReport> check_hyp2(const SplitVectorField& field, const BoxDomain& domain,
                                 int grid_density, double c1) {
  return check_hyp2(RateProfile::from_field(field), domain, grid_density, c1);
}

Expected<CheckReport> check_hyp2star(const RateProfile& profile, const BoxDomain& domain,
                                     int grid_density, int r, double cr, double c1) {
  if (r < 2) return make_error(ErrorCode::invalid_argument, "order r must be >= 2");
  if (!(cr >= 0.0) || !(c1 >= 0.0))
    return make_error(ErrorCode::invalid_argument, "constants must be nonnegative");
  auto s = sample_rates(profile, domain, grid_density);
  if (!s) return s.error();
  std::vector<double> slack(s->points.size());
  for (std::size_t i = 0; i < slack.size(); ++i)
    slack[i] = std::min(hyp2_slack(s->rates[i], c1), order_slack(s->rates[i], r, cr));
  auto rep = min_report(s->points, slack, fmt::format("hyp2star_r{}", r));
  rep.warnings = s->warnings;
  return rep;
}

Expected<CheckReport> check_hyp2star(const SplitVectorField& field, const BoxDomain& domain,
                                     int grid_density, int r, double cr, double c1) {
  return check_hyp2star(RateProfile::from_field(field), domain, grid_density, r, cr, c1);
}

Expected<CheckReport> check_hyp2star(const SplitVectorField& field, const BoxDomain& domain,
                                     int grid_density, int r, double cr) {
  return check_hyp2star(field, domain, grid_density, r, cr, cr);
}

Expected<CheckReport> check_hyp5(const SplitVectorField& field, const GraphManifold& graph,
                                 double eta, int r, double cr, int grid_density,
                                 const Hyp5Options& options) {
  if (r < 1 || !(eta > 0.0) || !(cr >= 0.0))
    return make_error(ErrorCode::invalid_argument, "need r >= 1, eta > 0, cr >= 0");
  if (graph.n != field.n() || graph.m() != field.m())
    return make_error(ErrorCode::dimension_mismatch, "graph does not match field");
  CheckReport rep;
  rep.inequality_id = fmt::format("hyp5_r{}", r);
  if (graph.has_dh()) {
    for (std::size_t k = 0; k < graph.size(); ++k) {
      const double dn = spectral_norm(graph.dh[k]);
      if (!(dn < eta)) {
        rep.passed = false;
        rep.margin = eta - dn;
        rep.worst_point = graph.point(k);
        rep.samples = k + 1;
        rep.note = fmt::format("precondition failed: sampled |Dh| = {} >= eta", format_real(dn));
        return rep;
      }
    }
  } else {
    rep.warnings.push_back("graph has no derivative samples; |Dh| < eta not verified");
  }
  if (!options.derivatives_attested)
    rep.warnings.push_back("bounded derivatives up to order r not attested");

  // Graph points on a z-lattice of the requested density, widened by the tube.
  std::vector<GridAxis> axes;
  for (const auto& ax : graph.grid.axes()) {
    GridAxis a = ax;
    a.count = ax.periodic ? grid_density + 1 : grid_density;
    if (a.count < (ax.periodic ? 3 : 1)) a.count = ax.periodic ? 3 : 1;
    axes.push_back(a);
  }
  ZGrid zg(axes);
  const int n = field.n();
  const int per = options.tube_radius > 0.0 ? std::max(1, options.tube_density) : 1;
  std::size_t offsets = 1;
  for (int i = 0; i < n; ++i) offsets *= per;
  std::vector<Point> pts;
  for (std::size_t k = 0; k < zg.size(); ++k) {
    const auto idx = zg.multi_index(k);
    bool duplicate = false;
    for (int d = 0; d < zg.dims(); ++d)
      if (zg.axis(d).periodic && idx[d] == zg.axis(d).count - 1) duplicate = true;
    if (duplicate) continue;
    const Vec z = zg.node(k);
    auto h = graph.eval(z);
    if (!h) return h.error();
    for (std::size_t o = 0; o < offsets; ++o) {
      Vec a = *h;
      std::size_t rest = o;
      for (int i = 0; i < n; ++i) {
        const int j = static_cast<int>(rest % per);
        rest /= per;
        if (per > 1) a[i] += -options.tube_radius + 2.0 * options.tube_radius * j / (per - 1);
      }
      pts.emplace_back(a, z);
    }
  }
  std::vector<double> slack(pts.size());
  parallel_for(pts.size(), [&](std::size_t i) {
    slack[i] = order_slack(pointwise_rates(field, pts[i]), r, cr, eta);
  });
  auto body = min_report(pts, slack, rep.inequality_id);
  body.warnings = rep.warnings;
  return body;
}

OrderScan scan_certified_order(const RateSamples& samples, double min_margin, int r_cap) {
  OrderScan scan;
  double m1 = std::numeric_limits<double>::infinity();
  for (const auto& r : samples.rates) m1 = std::min(m1, hyp2_slack(r, 0.0));
  for (int r = 1; r <= r_cap; ++r) {
    double m = m1;
    if (r >= 2)
      for (const auto& rt : samples.rates) m = std::min(m, order_slack(rt, r, 0.0));
    scan.margins.push_back(m);
  }
  for (int r = 1; r <= r_cap; ++r) {
    const double m = scan.margins[r - 1];
    if (m > 0.0 && m >= min_margin)
      scan.r_max = r;
    else
      break;
  }
  return scan;
}

Expected<int> max_certified_order(const SplitVectorField& field, const BoxDomain& domain,
                                  int grid_density, double min_margin, int r_cap) {
  auto s = sample_rates(RateProfile::from_field(field), domain, grid_density);
  if (!s) return s.error();
  return scan_certified_order(*s, min_margin, r_cap).r_max;
}

}  // namespace invman
