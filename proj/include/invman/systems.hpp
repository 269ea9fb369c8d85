#pragma once
/** @file systems.hpp
 *  @brief Registry of built-in split systems with domains, rate profiles and known facts.
 *
 *  Registered names: decoupled_toy, torus_family, weak_counterexample,
 *  rapid_osc, persistence_toy. New systems can be added at startup with
 *  register_system.
 */

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "invman/core.hpp"
#include "invman/manifold.hpp"
#include "invman/regions.hpp"

namespace invman {

using ParamMap = std::map<std::string, double>;

struct SystemFacts {
  std::function<Vec(const Vec& z)> known_h;
  std::function<Mat(const Vec& z)> known_dh;
  /// Period per z-coordinate, 0 where the coordinate is not periodic.
  std::vector<double> periods;
  /// Closed-form rate bounds (α lower bound, others upper bounds) where known.
  std::function<Rates(const Point&)> rate_bounds;
  std::optional<bool> hyp2_certified;
  int fixed_point_count = -1;
  std::vector<std::string> notes;
};

struct SystemBundle {
  std::string name;
  ParamMap params;
  SplitVectorField field;
  BoxDomain domain;
  RateProfile rates;
  SystemFacts facts;
};

struct SystemSpec {
  std::string name;
  std::string description;
  ParamMap defaults;
  std::function<Expected<SystemBundle>(const ParamMap&)> build;
};

const std::vector<SystemSpec>& registry();
void register_system(SystemSpec spec);

/// Defaults overridden by params; unknown parameter names are rejected.
Expected<SystemBundle> build_system(const std::string& name, const ParamMap& params = {});

/// Δ = 4 + cos σ, Λ = sin σ with derivatives.
RapidOscSpec rapid_osc_spec(int samples = 4096);

/// Constants of persistence_toy for the given perturbation sizes.
PersistenceConstants persistence_toy_constants(double sigma = 1.0, double kappa_c = 0.1,
                                               double lambda = 0.05, int r = 1);

struct PersistenceIntersection {
  GraphManifold forward;  ///< p = h_P(q/2, ζ, θ̄)
  GraphManifold reverse;  ///< q = h_Q(p/2, ζ, θ̄)
  JointGraph joint;
};

/// Centre-unstable and centre-stable graphs of persistence_toy and their intersection over (ζ, θ̄).
Expected<PersistenceIntersection> persistence_intersection(const ParamMap& params,
                                                           const std::vector<int>& counts,
                                                           double tol = 1e-9);

}  // namespace invman
