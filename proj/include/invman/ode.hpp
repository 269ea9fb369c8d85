#pragma once
/** @file ode.hpp
 *  @brief Dormand–Prince 5(4) integrator with PI step control and dense output.
 */

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <vector>

#include "invman/expected.hpp"

namespace invman::ode {

using Vec = Eigen::VectorXd;
using Rhs = std::function<void(const Vec& y, Vec& dy)>;
/// Returns -1 while y is admissible, otherwise a nonnegative event code.
using Monitor = std::function<int(const Vec& y)>;

enum class Record { steps, samples, endpoint };

struct Options {
  double rtol = 1e-9;
  double atol = 1e-9;
  double h_init = 0.0;
  std::size_t max_steps = 5'000'000;
  double event_time_tol = 1e-10;
  Record record = Record::steps;
  /// Output times for Record::samples, ordered in the integration direction.
  std::vector<double> sample_times;
};

struct Solution {
  std::vector<double> t;
  std::vector<Vec> y;
  double final_time = 0.0;
  Vec final_state;
  bool event = false;
  int event_code = -1;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

/// Integrate from time 0 to t_end (either sign). Stops at the first monitor event.
Expected<Solution> solve(const Rhs& rhs, const Vec& y0, double t_end, const Options& options,
                         const Monitor& monitor = {});

}  // namespace invman::ode
