#include "invman/ode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace invman::ode {

namespace {

constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

// Continuous extension of one accepted step.
struct Dense {
  Vec r1, r2, r3, r4, r5;
  Vec at(double theta) const {
    const double th1 = 1.0 - theta;
    return r1 + theta * (r2 + th1 * (r3 + theta * (r4 + th1 * r5)));
  }
};

double error_norm(const Vec& err, const Vec& y0, const Vec& y1, const Options& o) {
  double sum = 0.0;
  for (int i = 0; i < err.size(); ++i) {
    const double sk = o.atol + o.rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    const double q = err[i] / sk;
    sum += q * q;
  }
  return std::sqrt(sum / static_cast<double>(std::max<Eigen::Index>(1, err.size())));
}

double initial_step(const Rhs& rhs, const Vec& y0, const Vec& f0, double dir, double hmax,
                    const Options& o) {
  const auto scaled = [&](const Vec& v) {
    double s = 0.0;
    for (int i = 0; i < v.size(); ++i) {
      const double sk = o.atol + o.rtol * std::abs(y0[i]);
      s += (v[i] / sk) * (v[i] / sk);
    }
    return std::sqrt(s / static_cast<double>(std::max<Eigen::Index>(1, v.size())));
  };
  const double dnf = scaled(f0);
  const double dny = scaled(y0);
  double h = (dnf <= 1e-5 || dny <= 1e-5) ? 1e-6 : 0.01 * dny / dnf;
  h = std::min(h, hmax);
  Vec y1 = y0 + dir * h * f0;
  Vec f1(y0.size());
  rhs(y1, f1);
  const double der2 = scaled(f1 - f0) / h;
  const double der12 = std::max(std::abs(der2), dnf);
  const double h1 = der12 <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 0.2);
  return std::min({100.0 * h, h1, hmax});
}

}  // namespace

Expected<Solution> solve(const Rhs& rhs, const Vec& y0, double t_end, const Options& o,
                         const Monitor& monitor) {
  if (!y0.allFinite()) return make_error(ErrorCode::non_finite, "initial state not finite");
  Solution sol;
  const Eigen::Index d = y0.size();
  const bool record_steps = o.record == Record::steps;
  const bool record_samples = o.record == Record::samples;
  std::size_t next_sample = 0;
  const double dir = t_end >= 0.0 ? 1.0 : -1.0;

  double t = 0.0;
  Vec y = y0;
  if (record_steps) {
    sol.t.push_back(t);
    sol.y.push_back(y);
  }
  if (record_samples) {
    while (next_sample < o.sample_times.size() && dir * o.sample_times[next_sample] <= 0.0) {
      sol.t.push_back(o.sample_times[next_sample]);
      sol.y.push_back(y);
      ++next_sample;
    }
  }
  if (t_end == 0.0) {
    sol.final_time = 0.0;
    sol.final_state = y;
    return sol;
  }

  Vec k1(d), k2(d), k3(d), k4(d), k5(d), k6(d), k7(d), ytmp(d), ynew(d), errv(d);
  rhs(y, k1);
  if (!k1.allFinite()) return make_error(ErrorCode::non_finite, "right-hand side not finite at start");

  const double span = std::abs(t_end);
  const double hmax = span;
  double h = o.h_init > 0.0 ? std::min(o.h_init, hmax) : initial_step(rhs, y, k1, dir, hmax, o);
  double facold = 1e-4;
  bool last_rejected = false;
  constexpr double beta = 0.04, expo1 = 0.2 - beta * 0.75, safe = 0.9, facc1 = 5.0, facc2 = 0.1;

  std::size_t steps = 0;
  while (true) {
    if (steps++ > o.max_steps) return make_error(ErrorCode::max_steps, "step budget exhausted");
    const double remaining = span - std::abs(t);
    bool last = false;
    if (h >= remaining) {
      h = remaining;
      last = true;
    }
    if (h <= 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t))) {
      return make_error(ErrorCode::step_underflow, "step size underflow at t=" + std::to_string(t));
    }
    const double hs = dir * h;
    ytmp = y + hs * a21 * k1;
    rhs(ytmp, k2);
    ytmp = y + hs * (a31 * k1 + a32 * k2);
    rhs(ytmp, k3);
    ytmp = y + hs * (a41 * k1 + a42 * k2 + a43 * k3);
    rhs(ytmp, k4);
    ytmp = y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    rhs(ytmp, k5);
    ytmp = y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    rhs(ytmp, k6);
    ynew = y + hs * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    rhs(ynew, k7);
    errv = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const double err = error_norm(errv, y, ynew, o);

    if (!std::isfinite(err) || !ynew.allFinite() || !k7.allFinite()) {
      h *= 0.1;
      last_rejected = true;
      ++sol.rejected;
      continue;
    }
    const double fac11 = std::pow(err, expo1);
    if (err > 1.0) {
      h /= std::min(facc1, fac11 / safe);
      last_rejected = true;
      ++sol.rejected;
      continue;
    }

    ++sol.accepted;
    double fac = fac11 / std::pow(facold, beta);
    fac = std::max(facc2, std::min(facc1, fac / safe));
    double hnew = h / fac;
    facold = std::max(err, 1e-4);
    if (last_rejected) hnew = std::min(hnew, h);
    last_rejected = false;

    Dense dense;
    const bool need_dense = monitor || record_samples;
    if (need_dense) {
      dense.r1 = y;
      dense.r2 = ynew - y;
      dense.r3 = hs * k1 - dense.r2;
      dense.r4 = dense.r2 - hs * k7 - dense.r3;
      dense.r5 = hs * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
    }
    const double t_new = last ? t_end : t + hs;

    double t_stop = t_new;
    Vec y_stop = ynew;
    if (monitor && monitor(ynew) >= 0) {
      double lo = 0.0, hi = 1.0;
      while ((hi - lo) * h > o.event_time_tol) {
        const double mid = 0.5 * (lo + hi);
        if (monitor(dense.at(mid)) >= 0)
          hi = mid;
        else
          lo = mid;
      }
      y_stop = dense.at(hi);
      t_stop = t + hs * hi;
      sol.event = true;
      sol.event_code = monitor(y_stop);
      if (sol.event_code < 0) sol.event_code = monitor(ynew);
    }

    if (record_samples) {
      while (next_sample < o.sample_times.size() &&
             dir * o.sample_times[next_sample] <= dir * t_stop) {
        const double ts = o.sample_times[next_sample];
        const double theta = (ts - t) / hs;
        sol.t.push_back(ts);
        sol.y.push_back(theta >= 1.0 ? ynew : dense.at(theta));
        ++next_sample;
      }
    }

    if (sol.event) {
      if (record_steps) {
        sol.t.push_back(t_stop);
        sol.y.push_back(y_stop);
      }
      sol.final_time = t_stop;
      sol.final_state = y_stop;
      return sol;
    }

    t = t_new;
    y = ynew;
    k1 = k7;
    if (record_steps) {
      sol.t.push_back(t);
      sol.y.push_back(y);
    }
    if (last) break;
    h = std::min(hnew, hmax);
  }
  sol.final_time = t;
  sol.final_state = y;
  return sol;
}

}  // namespace invman::ode
