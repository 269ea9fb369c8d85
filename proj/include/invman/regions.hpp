#pragma once
/** @file regions.hpp
 *  @brief Parameter-region computations for the torus family, the
 *  rapid-oscillation condition, weak-hyperbolicity thresholds and the
 *  two-fixed-point counterexample.
 */

#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "invman/core.hpp"

namespace invman {

struct TorusFamilyParams {
  double beta = 1.0;
  double omega = 0.5;
  double delta = 0.3;
  double k = 1.0;
  double gamma = 0.1;
};

/// Slacks of δ(8β−δ)−2, 8β−2δ−β²−k−β/k and 8β−2δ−rβ²−(r+1)β/k (the last for r ≥ 2).
struct QSlack {
  bool member = false;
  double s_box = 0.0;
  double s_rate = 0.0;
  double s_order = 0.0;
  bool has_order = false;
  double min_slack() const;
};

Expected<QSlack> q_membership(double beta, double delta, double k, int r);

struct AuxiliaryChoice {
  double delta = 0.0;
  double k = 0.0;
  double margin = 0.0;  ///< min slack at (delta, k)
};

/// Maximizer of the min slack over δ ∈ (0, 4], k ∈ (0, 20] at fixed β.
AuxiliaryChoice best_auxiliary(double beta, int r);
/// Positive iff some (δ, k) in the search box satisfies all inequalities.
double feasibility_margin(double beta, int r);

struct RegionInterval {
  int r = 1;
  bool empty = true;
  double lo = 0.0;
  double hi = 0.0;
  double resolution = 0.0;
  bool connected = true;  ///< feasible β grid points form one run
};

Expected<RegionInterval> beta_projection(int r, double resolution = 1e-4);

/// One `key=value` line.
std::string to_record(const RegionInterval& interval);

struct RapidOscSpec {
  std::function<double(double)> delta;
  std::function<double(double)> d_delta;
  std::function<double(double)> lambda;
  std::function<double(double)> d_lambda;
  int samples = 4096;
};

struct RapidOscReport {
  double e1 = 0.0;
  double e2 = 0.0;
  double e = 0.0;
  double l = 0.0;
  double min_delta = 0.0;
  CheckReport check;  ///< margin = min Δ − ((r+1)/√r)√L
};

Expected<RapidOscReport> rapid_osc_condition(const RapidOscSpec& spec, int r);

struct PersistenceConstants {
  double sigma = 1.0;
  double c1 = 0.1;
  double c2 = 0.2;
  double c3 = 0.05;
  double c4 = 0.05;
  double mu = 1.0;
  double nu = 1.0;
  double gamma_exp = 1.0;
  int r = 1;
};

struct KappaTerms {
  double sigma = 0.0;
  double mu = 0.0;
  double nu = 0.0;
  double gamma_exp = 0.0;
  double K[7] = {0, 0, 0, 0, 0, 0, 0};  ///< K1..K7
};

KappaTerms kappa_terms(const PersistenceConstants& consts);

/// Exponent constraints μ > 0, γ > 0, 0 ≤ ν ≤ 1, μ + ν > 1.
Expected<void*> check_exponents(double mu, double nu, double gamma_exp);

double kappa(double eps, double k, double delta, const KappaTerms& terms);
double kappa(double eps, double k, double delta, const PersistenceConstants& consts);

/// k ε^μ K5 + (1/k)(ε^{ν−1} K6 + ε^γ K7).
double k_objective(double eps, double k, const KappaTerms& terms);
Expected<double> k_epsilon(double eps, const KappaTerms& terms);
Expected<double> k_epsilon(double eps, const PersistenceConstants& consts);

struct PersistenceResult {
  double eps_star = 0.0;
  double delta_star = 0.0;
  double k_star = 0.0;
  double kappa_star = 0.0;
  bool hit_ceiling = false;
};

/// Largest ε ≤ eps_ceiling with δ = 2(C3/σ)ε^μ ≤ delta_cap, 𝒦(ε, k_ε, δ) > 0 and σδ − C1δ² − ε^μC3 > 0.
Expected<PersistenceResult> persistence_thresholds(const PersistenceConstants& consts,
                                                   double delta_cap, double eps_ceiling = 1.0,
                                                   double eps_floor = 1e-12);

enum class FixedPointKind { saddle, stable_node, stable_spiral, unstable_node, unstable_spiral,
                            center, degenerate };
const char* to_string(FixedPointKind kind);

struct FixedPoint {
  double w = 0.0;
  double theta = 0.0;
  std::complex<double> lambda1;
  std::complex<double> lambda2;
  FixedPointKind kind = FixedPointKind::degenerate;
};

/// Fixed points of w' = −εw + α² sin θ, θ' = w on the circle θ ∈ [0, 2π).
Expected<std::vector<FixedPoint>> counterexample_fixed_points(double eps, double alpha);

}  // namespace invman
