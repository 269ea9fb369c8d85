#pragma once
/** @file core.hpp
 *  @brief Points, split vector fields, box domains, cone geometry and reports.
 *
 *  State is split as x = (a, z) with a in R^n (expanding directions) and
 *  z in R^m (slow directions). Shape mismatches in the cheap geometric
 *  helpers are contract violations and throw std::invalid_argument.
 */

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

#include "invman/expected.hpp"

namespace invman {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Point {
  Vec a;
  Vec z;

  Point() = default;
  Point(Vec a_part, Vec z_part) : a(std::move(a_part)), z(std::move(z_part)) {}

  int n() const { return static_cast<int>(a.size()); }
  int m() const { return static_cast<int>(z.size()); }
  bool finite() const { return a.allFinite() && z.allFinite(); }

  /// Concatenation (a, z).
  Vec stacked() const;
  static Point from_stacked(const Vec& x, int n);
};

/// ‖a2 − a1‖² − ‖z2 − z1‖².
double cone_gauge(const Point& x1, const Point& x2);

/// True iff x lies in the closed cone with the given vertex.
bool in_cone(const Point& vertex, const Point& x);

using PartFn = std::function<Vec(const Point&)>;
using JacobianFn = std::function<Mat(const Point&)>;

/**
 * @brief The pair (f, g) of a split system a' = f(a, z), z' = g(a, z).
 *
 * The optional analytic Jacobian returns the full (n+m)×(n+m) matrix
 * [[D_a f, D_z f], [D_a g, D_z g]]. Without it, central differences with
 * step fd_scale·(1 + |x_i|) are used.
 */
class SplitVectorField {
 public:
  SplitVectorField() = default;
  SplitVectorField(int n, int m, PartFn f, PartFn g, JacobianFn jacobian = {});

  int n() const { return n_; }
  int m() const { return m_; }

  Vec f(const Point& x) const { return f_(x); }
  Vec g(const Point& x) const { return g_(x); }
  /// Stacked right-hand side (f, g) at stacked state x.
  void eval(const Vec& x, Vec& out) const;

  bool has_analytic_jacobian() const { return static_cast<bool>(jacobian_); }
  Mat jacobian(const Point& x) const;
  Mat fd_jacobian(const Point& x, double scale) const;

  Mat jac_aa(const Point& x) const;  ///< D_a f, n×n
  Mat jac_az(const Point& x) const;  ///< D_z f, n×m
  Mat jac_za(const Point& x) const;  ///< D_a g, m×n
  Mat jac_zz(const Point& x) const;  ///< D_z g, m×m

  double fd_scale() const { return fd_scale_; }
  void set_fd_scale(double scale) { fd_scale_ = scale; }

  /// Field of the time-reversed system.
  SplitVectorField reversed() const;
  /// Copy without the analytic Jacobian.
  SplitVectorField without_jacobian() const;

 private:
  int n_ = 0;
  int m_ = 0;
  PartFn f_;
  PartFn g_;
  JacobianFn jacobian_;
  double fd_scale_ = 1e-6;
};

enum class IntervalKind { bounded, unbounded, periodic };

/**
 * @brief One coordinate range of a box.
 *
 * Periodic intervals store [origin, origin + period). Unbounded intervals
 * keep a sampling window in lo/hi that is used only by grid checks.
 */
struct Interval {
  IntervalKind kind = IntervalKind::bounded;
  double lo = 0.0;
  double hi = 0.0;

  static Interval bounded(double lo, double hi);
  static Interval periodic(double period, double origin = 0.0);
  static Interval unbounded(double window_lo = -1.0, double window_hi = 1.0);

  double period() const { return hi - lo; }
  double width() const { return hi - lo; }
  bool contains(double v) const;
  /// Canonical representative in [lo, hi) for periodic intervals, v otherwise.
  double wrap(double v) const;
};

struct BoxDomain {
  std::vector<Interval> a_bounds;
  std::vector<Interval> z_bounds;

  BoxDomain() = default;
  BoxDomain(std::vector<Interval> a, std::vector<Interval> z);

  int n() const { return static_cast<int>(a_bounds.size()); }
  int m() const { return static_cast<int>(z_bounds.size()); }
  /// Open-box membership; periodic and unbounded coordinates always pass.
  bool contains(const Point& x) const;
  bool a_extent_finite() const;
};

/// Smallest d with cone ∩ U inside the d-ball: diameter of the a-box.
Expected<double> hyp1_bound(const BoxDomain& domain);

struct Rates {
  double alpha = 0.0;
  double ell = 0.0;
  double dzf_norm = 0.0;
  double dag_norm = 0.0;
};

double sym_min_eig(const Mat& m);
double sym_max_eig(const Mat& m);
double spectral_norm(const Mat& m);

/// Rates read off a full Jacobian with n expanding coordinates.
Rates rates_from_jacobian(const Mat& jac, int n);

/**
 * @brief Pointwise rates plus the constants c1, c_r, eta and order r.
 *
 * rates defaults to the tightest values derived from the field's Jacobian;
 * a closed form may be supplied instead.
 */
struct RateProfile {
  std::function<Rates(const Point&)> rates;
  double c1 = 0.0;
  double cr = 0.0;
  double eta = 1.0;
  int r = 1;

  static RateProfile from_field(const SplitVectorField& field);

  double alpha(const Point& x) const { return rates(x).alpha; }
  double ell(const Point& x) const { return rates(x).ell; }
  double dzf_norm(const Point& x) const { return rates(x).dzf_norm; }
  double dag_norm(const Point& x) const { return rates(x).dag_norm; }
};

struct CheckReport {
  bool passed = false;
  double margin = 0.0;
  Point worst_point;
  std::size_t samples = 0;
  std::string inequality_id;
  double observed = 0.0;  ///< audited statistic (deviation, ratio) where one applies
  std::vector<std::string> warnings;
  std::string note;
};

/// Single-line `key=value` record.
std::string to_record(const CheckReport& report);

/// Shortest round-trip decimal representation.
std::string format_real(double v);

}  // namespace invman
