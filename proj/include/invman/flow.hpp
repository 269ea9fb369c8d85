#pragma once
/** @file flow.hpp
 *  @brief Flow of a split field, variational cocycle, Riccati derivative
 *  dynamics, vec/Kronecker utilities, level-1 lift and Jordan rescaling.
 */

#include <memory>
#include <optional>
#include <vector>

#include "invman/core.hpp"
#include "invman/graph.hpp"

namespace invman {

/// Boundary face of a box: coordinate block, index and side.
struct ExitFace {
  bool on_a = true;
  int index = 0;
  bool upper = true;
};

struct ExitEvent {
  double time = 0.0;
  ExitFace face;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Point> states;
  std::optional<ExitEvent> exit_event;

  const Point& final_state() const { return states.back(); }
  double final_time() const { return times.back(); }
};

/// Flow Φ(t_end, x0). Negative t_end runs backward. Stops on leaving domain.
Expected<Trajectory> integrate(const SplitVectorField& field, const Point& x0, double t_end,
                               double tol, const BoxDomain* domain = nullptr);

/// Flow evaluated at the given times (ordered in the integration direction).
/// Times beyond a domain exit are omitted; the exit is reported.
Expected<Trajectory> integrate_at(const SplitVectorField& field, const Point& x0,
                                  const std::vector<double>& times, double tol,
                                  const BoxDomain* domain = nullptr);

/// Only the end point (or exit point) is kept.
Expected<Trajectory> integrate_endpoint(const SplitVectorField& field, const Point& x0,
                                        double t_end, double tol,
                                        const BoxDomain* domain = nullptr);

struct VariationalPath {
  std::vector<double> times;
  std::vector<Mat> matrices;
  std::vector<Point> states;
};

/// Fundamental matrix Q(t, x0) with Q(0) = I, co-integrated with the flow.
Expected<VariationalPath> variational(const SplitVectorField& field, const Point& x0, double t_end,
                                      double tol);

/// Column stacking.
Vec vec(const Mat& m);
Mat unvec(const Vec& v, int rows, int cols);
Mat kron(const Mat& a, const Mat& b);

struct MatrixPath {
  std::vector<double> times;
  std::vector<Vec> z;
  std::vector<Mat> V;
};

/**
 * @brief Integrates V' = D_a f V − V D_z g − V D_a g V + D_z f along the
 * graph flow z' = g(h(z), z), with coefficients at (h(z), z).
 */
Expected<MatrixPath> riccati_integrate(const SplitVectorField& field, const GraphManifold& graph,
                                       const Vec& z0, const Mat& V0, double t_end, double tol);

/// z(t_end) under z' = g(h(z), z).
Expected<Vec> graph_flow(const SplitVectorField& field, const GraphManifold& graph, const Vec& z0,
                         double t_end, double tol);

struct LiftedSystem {
  std::shared_ptr<const SplitVectorField> base;
  std::shared_ptr<const GraphManifold> graph;
  double sigma1 = 1.0;
  double eta = 1.0;
  SplitVectorField field1;  ///< on (v, ζ) with v = vec of an n×m matrix
  BoxDomain domain1;        ///< box |v_i| < eta/√(nm) times the rescaled z-box
  std::function<double(const Vec& zeta)> alpha1;
  std::function<double(const Vec& zeta)> ell1;
};

Expected<LiftedSystem> lift_level1(const SplitVectorField& field, const GraphManifold& graph,
                                   double sigma1, double eta);

/// Sampled sup of ‖D_z f₁‖ at unit scaling, the constant L₁ with ‖D_ζ f₁‖ ≤ σ₁L₁.
Expected<double> lift_lipschitz_constant(const SplitVectorField& field, const GraphManifold& graph,
                                         double eta, int v_samples = 3);

/// Largest σ₁ ≤ 1 with σ₁·L₁ ≤ c_r/2.
Expected<double> default_sigma1(const SplitVectorField& field, const GraphManifold& graph,
                                double eta, double cr);

struct JordanRescale {
  Vec scaling;  ///< diagonal of Λ
  Mat rescaled; ///< Λ · block · Λ⁻¹
};

Expected<JordanRescale> jordan_rescale(const Mat& block, double c);

}  // namespace invman
