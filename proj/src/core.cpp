#include "invman/core.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace invman {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::unbounded_domain: return "unbounded_domain";
    case ErrorCode::empty_domain: return "empty_domain";
    case ErrorCode::step_underflow: return "step_underflow";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::max_steps: return "max_steps";
    case ErrorCode::blow_up: return "blow_up";
    case ErrorCode::outside_domain: return "outside_domain";
    case ErrorCode::not_jordan: return "not_jordan";
    case ErrorCode::unsupported: return "unsupported";
    case ErrorCode::non_monotone: return "non_monotone";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::precondition: return "precondition";
    case ErrorCode::infeasible: return "infeasible";
    case ErrorCode::unknown_system: return "unknown_system";
    case ErrorCode::config: return "config";
  }
  return "unknown";
}

Vec Point::stacked() const {
  Vec x(a.size() + z.size());
  x << a, z;
  return x;
}

Point Point::from_stacked(const Vec& x, int n) {
  return Point(x.head(n), x.tail(x.size() - n));
}

static void require_same_shape(const Point& x1, const Point& x2) {
  if (x1.n() != x2.n() || x1.m() != x2.m()) {
    throw std::invalid_argument("point dimensions differ");
  }
}

double cone_gauge(const Point& x1, const Point& x2) {
  require_same_shape(x1, x2);
  return (x2.a - x1.a).squaredNorm() - (x2.z - x1.z).squaredNorm();
}

bool in_cone(const Point& vertex, const Point& x) {
  return cone_gauge(x, vertex) >= 0.0;
}

SplitVectorField::SplitVectorField(int n, int m, PartFn f, PartFn g, JacobianFn jacobian)
    : n_(n), m_(m), f_(std::move(f)), g_(std::move(g)), jacobian_(std::move(jacobian)) {
  if (n < 1 || m < 1) throw std::invalid_argument("split field needs n >= 1 and m >= 1");
}

void SplitVectorField::eval(const Vec& x, Vec& out) const {
  const Point p(x.head(n_), x.tail(m_));
  out.resize(n_ + m_);
  out.head(n_) = f_(p);
  out.tail(m_) = g_(p);
}

Mat SplitVectorField::fd_jacobian(const Point& x, double scale) const {
  const int d = n_ + m_;
  Mat jac(d, d);
  Vec base = x.stacked();
  Vec plus(d), minus(d);
  for (int j = 0; j < d; ++j) {
    const double h = scale * (1.0 + std::abs(base[j]));
    Vec xp = base;
    Vec xm = base;
    xp[j] += h;
    xm[j] -= h;
    eval(xp, plus);
    eval(xm, minus);
    jac.col(j) = (plus - minus) / (2.0 * h);
  }
  return jac;
}

Mat SplitVectorField::jacobian(const Point& x) const {
  if (jacobian_) return jacobian_(x);
  return fd_jacobian(x, fd_scale_);
}

Mat SplitVectorField::jac_aa(const Point& x) const { return jacobian(x).topLeftCorner(n_, n_); }
Mat SplitVectorField::jac_az(const Point& x) const { return jacobian(x).topRightCorner(n_, m_); }
Mat SplitVectorField::jac_za(const Point& x) const { return jacobian(x).bottomLeftCorner(m_, n_); }
Mat SplitVectorField::jac_zz(const Point& x) const { return jacobian(x).bottomRightCorner(m_, m_); }

SplitVectorField SplitVectorField::reversed() const {
  auto f = f_;
  auto g = g_;
  JacobianFn jac;
  if (jacobian_) {
    auto j = jacobian_;
    jac = [j](const Point& x) -> Mat { return -j(x); };
  }
  SplitVectorField out(
      n_, m_, [f](const Point& x) -> Vec { return -f(x); },
      [g](const Point& x) -> Vec { return -g(x); }, jac);
  out.fd_scale_ = fd_scale_;
  return out;
}

SplitVectorField SplitVectorField::without_jacobian() const {
  SplitVectorField out(n_, m_, f_, g_);
  out.fd_scale_ = fd_scale_;
  return out;
}

Interval Interval::bounded(double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("bounded interval needs lo < hi");
  return Interval{IntervalKind::bounded, lo, hi};
}

Interval Interval::periodic(double period, double origin) {
  if (!(period > 0.0)) throw std::invalid_argument("period must be positive");
  return Interval{IntervalKind::periodic, origin, origin + period};
}

Interval Interval::unbounded(double window_lo, double window_hi) {
  if (!(window_lo < window_hi)) throw std::invalid_argument("sampling window needs lo < hi");
  return Interval{IntervalKind::unbounded, window_lo, window_hi};
}

bool Interval::contains(double v) const {
  if (kind == IntervalKind::bounded) return v > lo && v < hi;
  return std::isfinite(v);
}

double Interval::wrap(double v) const {
  if (kind != IntervalKind::periodic) return v;
  const double p = period();
  double w = std::fmod(v - lo, p);
  if (w < 0.0) w += p;
  if (w >= p) w = 0.0;
  return lo + w;
}

BoxDomain::BoxDomain(std::vector<Interval> a, std::vector<Interval> z)
    : a_bounds(std::move(a)), z_bounds(std::move(z)) {}

bool BoxDomain::contains(const Point& x) const {
  if (x.n() != n() || x.m() != m()) throw std::invalid_argument("point does not match domain");
  for (int i = 0; i < n(); ++i)
    if (!a_bounds[i].contains(x.a[i])) return false;
  for (int i = 0; i < m(); ++i)
    if (!z_bounds[i].contains(x.z[i])) return false;
  return true;
}

bool BoxDomain::a_extent_finite() const {
  for (const auto& iv : a_bounds)
    if (iv.kind != IntervalKind::bounded) return false;
  return true;
}

Expected<double> hyp1_bound(const BoxDomain& domain) {
  if (domain.n() == 0) return make_error(ErrorCode::empty_domain, "domain has no a-coordinates");
  if (!domain.a_extent_finite())
    return make_error(ErrorCode::unbounded_domain,
                      "a-extent unbounded: no ball contains the cone section");
  double sq = 0.0;
  for (const auto& iv : domain.a_bounds) sq += iv.width() * iv.width();
  return std::sqrt(sq);
}

double sym_min_eig(const Mat& m) {
  if (m.rows() == 1) return m(0, 0);
  Mat s = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double sym_max_eig(const Mat& m) {
  if (m.rows() == 1) return m(0, 0);
  Mat s = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

double spectral_norm(const Mat& m) {
  if (m.rows() == 1 || m.cols() == 1) return m.norm();
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

Rates rates_from_jacobian(const Mat& jac, int n) {
  const int m = static_cast<int>(jac.rows()) - n;
  Rates r;
  r.alpha = sym_min_eig(jac.topLeftCorner(n, n));
  r.ell = sym_max_eig(jac.bottomRightCorner(m, m));
  r.dzf_norm = spectral_norm(jac.topRightCorner(n, m));
  r.dag_norm = spectral_norm(jac.bottomLeftCorner(m, n));
  return r;
}

RateProfile RateProfile::from_field(const SplitVectorField& field) {
  RateProfile p;
  p.rates = [field](const Point& x) { return rates_from_jacobian(field.jacobian(x), field.n()); };
  return p;
}

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{}", v);
}

static std::string join_vec(const Vec& v) {
  std::string s;
  for (int i = 0; i < v.size(); ++i) {
    if (i) s += ';';
    s += format_real(v[i]);
  }
  return s;
}

std::string to_record(const CheckReport& report) {
  std::string s = fmt::format("inequality={} passed={} margin={} samples={}", report.inequality_id,
                              report.passed ? 1 : 0, format_real(report.margin), report.samples);
  if (report.worst_point.n() > 0 || report.worst_point.m() > 0)
    s += fmt::format(" worst_a={} worst_z={}", join_vec(report.worst_point.a),
                     join_vec(report.worst_point.z));
  if (report.observed != 0.0) s += fmt::format(" observed={}", format_real(report.observed));
  if (!report.note.empty()) s += fmt::format(" note=\"{}\"", report.note);
  for (const auto& w : report.warnings) s += fmt::format(" warning=\"{}\"", w);
  return s;
}

}  // namespace invman
