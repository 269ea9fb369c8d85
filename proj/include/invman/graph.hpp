#pragma once
/** @file graph.hpp
 *  @brief Rectangular z-lattice and graphs a = h(z) sampled on it.
 *
 *  Periodic axes include both endpoints of one period, so the last node is
 *  the image of the first under the period shift. Interpolation wraps with
 *  cycle length count − 1 on those axes.
 */

#include <istream>
#include <ostream>
#include <vector>

#include "invman/core.hpp"

namespace invman {

struct GridAxis {
  double lo = 0.0;
  double hi = 1.0;
  int count = 2;
  bool periodic = false;

  double spacing() const { return count > 1 ? (hi - lo) / (count - 1) : 0.0; }
  double node(int i) const { return count > 1 ? lo + (hi - lo) * i / (count - 1) : lo; }
};

class ZGrid {
 public:
  ZGrid() = default;
  explicit ZGrid(std::vector<GridAxis> axes);

  /// One axis per z-coordinate; periodic coordinates span one period.
  static ZGrid over_domain(const BoxDomain& domain, const std::vector<int>& counts);
  static ZGrid over_domain(const BoxDomain& domain, int count);

  int dims() const { return static_cast<int>(axes_.size()); }
  std::size_t size() const { return size_; }
  const GridAxis& axis(int d) const { return axes_[d]; }
  const std::vector<GridAxis>& axes() const { return axes_; }

  std::vector<int> multi_index(std::size_t flat) const;
  std::size_t flat_index(const std::vector<int>& idx) const;
  Vec node(std::size_t flat) const;

 private:
  std::vector<GridAxis> axes_;
  std::size_t size_ = 0;
};

struct GraphManifold {
  ZGrid grid;
  int n = 1;
  std::vector<Vec> h;
  std::vector<Mat> dh;  ///< empty unless derivative samples exist
  double residual = 0.0;
  int iterations = 0;
  double contraction = 0.0;
  std::vector<char> resolved;  ///< per node; empty means all resolved

  GraphManifold() = default;
  GraphManifold(ZGrid g, int n_dim);

  int m() const { return grid.dims(); }
  std::size_t size() const { return grid.size(); }
  bool has_dh() const { return !dh.empty(); }
  std::size_t unresolved_count() const;

  /// Piecewise-cubic tensor interpolation; error when z leaves the lattice.
  Expected<Vec> eval(const Vec& z) const;
  Expected<Mat> eval_dh(const Vec& z) const;
  /// Whether eval(z) would succeed.
  bool covers(const Vec& z) const;
  Point point(std::size_t node) const;
};

/// Header line, lattice metadata comments, one record per node.
void write_graph(std::ostream& out, const GraphManifold& graph, char delimiter = ',');
Expected<GraphManifold> read_graph(std::istream& in);

}  // namespace invman
