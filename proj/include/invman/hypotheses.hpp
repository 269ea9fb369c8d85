#pragma once
/** @file hypotheses.hpp
 *  @brief Grid-sampled verification of the rate inequalities and C^r order scan.
 *
 *  Margins use ℓ⁺ = max(ℓ, 0) since the admissible ℓ is nonnegative.
 *  Bounded coordinates are sampled with both endpoints, periodic ones over
 *  one period without the duplicate endpoint, unbounded ones on their
 *  declared window (with a warning).
 */

#include <vector>

#include "invman/core.hpp"
#include "invman/graph.hpp"

namespace invman {

/// Tightest constants of the rate inequalities at x.
Rates pointwise_rates(const SplitVectorField& field, const Point& x);

struct RateSamples {
  std::vector<Point> points;
  std::vector<Rates> rates;
  std::vector<std::string> warnings;
};

/// Uniform samples: endpoints included for bounded, one period without the duplicate for periodic.
std::vector<double> interval_samples(const Interval& iv, int density);
/// Tensor product of per-coordinate samples (first n coordinates form a).
std::vector<Point> tensor_points(const std::vector<std::vector<double>>& axes, int n);

/// Sample points of the closed box, density nodes per coordinate.
Expected<std::vector<Point>> domain_samples(const BoxDomain& domain, int density,
                                            std::vector<std::string>* warnings = nullptr);

Expected<RateSamples> sample_rates(const RateProfile& profile, const BoxDomain& domain,
                                   int density);

/// α − ℓ⁺ − ‖D_z f‖ − ‖D_a g‖ − c1
double hyp2_slack(const Rates& r, double c1);
/// α − rℓ⁺ − (r+1)·scale·‖D_a g‖ − cr (scale = η for the graph-neighbourhood form)
double order_slack(const Rates& rates, int r, double cr, double dag_scale = 1.0);

Expected<CheckReport> check_hyp2(const SplitVectorField& field, const BoxDomain& domain,
                                 int grid_density, double c1);
Expected<CheckReport> check_hyp2(const RateProfile& profile, const BoxDomain& domain,
                                 int grid_density, double c1);

/// Both lines of the C^r hypothesis: min of the c1 line and the order-r line.
Expected<CheckReport> check_hyp2star(const SplitVectorField& field, const BoxDomain& domain,
                                     int grid_density, int r, double cr, double c1);
Expected<CheckReport> check_hyp2star(const SplitVectorField& field, const BoxDomain& domain,
                                     int grid_density, int r, double cr);
Expected<CheckReport> check_hyp2star(const RateProfile& profile, const BoxDomain& domain,
                                     int grid_density, int r, double cr, double c1);

struct Hyp5Options {
  double tube_radius = 0.0;      ///< a-offsets sampled in [−radius, radius] around h(z)
  int tube_density = 3;          ///< offsets per a-coordinate when radius > 0
  bool derivatives_attested = false;  ///< user attests bounded derivatives up to order r
};

/// α − rℓ⁺ − (r+1)η‖D_a g‖ − cr over a tube around the graph.
Expected<CheckReport> check_hyp5(const SplitVectorField& field, const GraphManifold& graph,
                                 double eta, int r, double cr, int grid_density,
                                 const Hyp5Options& options = {});

struct OrderScan {
  int r_max = 0;
  std::vector<double> margins;  ///< index r−1: combined margin for order r
};

OrderScan scan_certified_order(const RateSamples& samples, double min_margin, int r_cap = 10);

/// Largest r ≤ r_cap whose combined margin is positive and ≥ min_margin; 0 if r = 1 fails.
Expected<int> max_certified_order(const SplitVectorField& field, const BoxDomain& domain,
                                  int grid_density, double min_margin, int r_cap = 10);

}  // namespace invman
