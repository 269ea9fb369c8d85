#pragma once
/** @file manifold.hpp
 *  @brief Computation of the invariant graph and numerical audits of its properties.
 */

#include <functional>
#include <vector>

#include "invman/core.hpp"
#include "invman/flow.hpp"
#include "invman/graph.hpp"

namespace invman {

/// z-lattice over the domain with bounded axes inset by inset·width on each side.
ZGrid interior_grid(const BoxDomain& domain, const std::vector<int>& counts,
                    double inset = 0.05);

enum class FaceKind { exit, entry, mixed };
const char* to_string(FaceKind kind);

struct FaceReport {
  int index = 0;
  bool upper = false;
  FaceKind kind = FaceKind::mixed;
  double worst_speed = 0.0;  ///< min outward speed (exit/mixed), max for entry
  Point worst_point;
  std::size_t samples = 0;
};

struct BoundaryReport {
  std::vector<FaceReport> faces;  ///< lower then upper face for each a-coordinate
  bool all_exit() const;
  bool all_entry() const;
};

/// Sign of the outward normal speed on each a-face; density samples per other coordinate.
Expected<BoundaryReport> classify_boundary(const SplitVectorField& field, const BoxDomain& domain,
                                           int samples_per_face);

struct ShootOptions {
  double integrator_tol = 1e-10;
  int coarse_samples = 8;      ///< monotonicity scan before bisection
  int boundary_density = 9;    ///< face samples for the exit precondition
};

/// Bisection on a (n = 1) by exit side; survivors of t_horizon are on the graph.
Expected<GraphManifold> compute_graph_shoot(const SplitVectorField& field, const BoxDomain& domain,
                                            const ZGrid& z_grid, double t_horizon, double tol,
                                            const ShootOptions& options = {});

struct TransformOptions {
  double integrator_tol = 1e-11;
  double foot_tol = 1e-12;     ///< z-matching tolerance of the backward image
  int foot_max_iter = 60;
  int boundary_density = 9;
  int check_density = 9;
};

/// Iterates h ← backward-τ image of the graph, re-interpolated on z_grid.
Expected<GraphManifold> compute_graph_transform(const SplitVectorField& field,
                                                const BoxDomain& domain, const ZGrid& z_grid,
                                                double tau, int max_iter, double tol,
                                                const TransformOptions& options = {});

struct ResidualReport {
  double residual = 0.0;
  std::size_t samples = 0;
  std::size_t exits = 0;       ///< trajectories leaving the domain before t_probe
  std::size_t uncovered = 0;   ///< landed z outside the lattice
};

/// a-distance between Φ(t_probe, (h(z), z)) and the interpolated graph at the landed z.
Expected<ResidualReport> invariance_residual(const SplitVectorField& field,
                                             const GraphManifold& graph, double t_probe,
                                             std::size_t sample_count,
                                             const BoxDomain* domain = nullptr,
                                             double tol = 1e-11);

/// margin = 1 − max ratio over adjacent node pairs plus random pairs.
CheckReport lipschitz_audit(const GraphManifold& graph, std::size_t pair_samples,
                            unsigned seed = 12345);

struct ConeTrace {
  std::vector<double> times;
  std::vector<double> gauges;
  bool holds = true;          ///< gauge ≥ 0 at every checkpoint
  bool nondecreasing = true;  ///< while positive
  bool truncated = false;     ///< a trajectory left the domain before t_end
  bool passed() const { return holds && nondecreasing; }
};

Expected<ConeTrace> cone_invariance_probe(const SplitVectorField& field, const Point& x1,
                                          const Point& x2, double t_end, int steps,
                                          const BoxDomain* domain = nullptr, double tol = 1e-11);

/// margin = min over checkpoints t_k > 0 of ‖Δa(t_k)‖ − ‖Δa(0)‖e^{c1 t_k}.
Expected<CheckReport> separation_probe(const SplitVectorField& field, const Point& x1,
                                       const Point& x2, double t_end, double c1, int steps = 20,
                                       const BoxDomain* domain = nullptr, double tol = 1e-11);

/// Dh at every node by backward Riccati integration from V = 0 over t_back.
Expected<GraphManifold> derivative_field(const SplitVectorField& field, const GraphManifold& graph,
                                         double t_back, double tol);

/// Max |h(z) − h(z + p_i e_i)| over node pairs; periods[i] = 0 skips coordinate i.
CheckReport periodicity_audit(const GraphManifold& graph, const std::vector<double>& periods,
                              double tolerance = 1e-4);

/// A graph (fast, slow) ↦ value, with the audited box of fast arguments.
struct CrossGraph {
  std::function<Expected<Vec>(const Vec& fast, const Vec& slow)> eval;
  int fast_dim = 1;
  int out_dim = 1;
  double fast_radius = 0.0;
};

/// Reads z = (fast_scale·fast, slow) from a graph whose first fast_dim coordinates are fast.
CrossGraph cross_graph(const GraphManifold& graph, int fast_dim, double fast_scale,
                       double fast_radius);

struct IntersectOptions {
  double tol = 1e-12;
  int max_iter = 200;
  int lipschitz_samples = 5;   ///< fast samples per coordinate for the audit
  Vec p_init;                  ///< empty means zero
  Vec q_init;
};

struct JointGraph {
  std::vector<Vec> slow_nodes;
  std::vector<Vec> p;
  std::vector<Vec> q;
  int iterations = 0;                 ///< max over nodes
  double max_ratio = 0.0;             ///< worst per-step defect ratio
  std::vector<double> defects;        ///< max-over-nodes defect per step
  CheckReport audit_p;
  CheckReport audit_q;
};

/// Jacobi iteration (p, q) ← (P(q, s), Q(p, s)) at each slow node s.
Expected<JointGraph> intersect_graphs(const CrossGraph& graph_p, const CrossGraph& graph_q,
                                      const std::vector<Vec>& slow_nodes,
                                      const IntersectOptions& options = {});

}  // namespace invman
