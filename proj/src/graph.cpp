#include "invman/graph.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

namespace invman {

ZGrid::ZGrid(std::vector<GridAxis> axes) : axes_(std::move(axes)) {
  size_ = 1;
  for (const auto& ax : axes_) {
    if (ax.count < 1) throw std::invalid_argument("grid axis needs at least one node");
    if (ax.count > 1 && !(ax.lo < ax.hi)) throw std::invalid_argument("grid axis needs lo < hi");
    if (ax.periodic && ax.count < 3) throw std::invalid_argument("periodic axis needs >= 3 nodes");
    size_ *= static_cast<std::size_t>(ax.count);
  }
}

ZGrid ZGrid::over_domain(const BoxDomain& domain, const std::vector<int>& counts) {
  if (static_cast<int>(counts.size()) != domain.m())
    throw std::invalid_argument("one node count per z-coordinate required");
  std::vector<GridAxis> axes;
  for (int i = 0; i < domain.m(); ++i) {
    const auto& iv = domain.z_bounds[i];
    axes.push_back(GridAxis{iv.lo, iv.hi, counts[i], iv.kind == IntervalKind::periodic});
  }
  return ZGrid(std::move(axes));
}

ZGrid ZGrid::over_domain(const BoxDomain& domain, int count) {
  return over_domain(domain, std::vector<int>(domain.m(), count));
}

std::vector<int> ZGrid::multi_index(std::size_t flat) const {
  std::vector<int> idx(axes_.size());
  for (int d = dims() - 1; d >= 0; --d) {
    idx[d] = static_cast<int>(flat % axes_[d].count);
    flat /= axes_[d].count;
  }
  return idx;
}

std::size_t ZGrid::flat_index(const std::vector<int>& idx) const {
  std::size_t flat = 0;
  for (int d = 0; d < dims(); ++d) flat = flat * axes_[d].count + idx[d];
  return flat;
}

Vec ZGrid::node(std::size_t flat) const {
  const auto idx = multi_index(flat);
  Vec z(dims());
  for (int d = 0; d < dims(); ++d) z[d] = axes_[d].node(idx[d]);
  return z;
}

GraphManifold::GraphManifold(ZGrid g, int n_dim)
    : grid(std::move(g)), n(n_dim), h(grid.size(), Vec::Zero(n_dim)) {}

std::size_t GraphManifold::unresolved_count() const {
  std::size_t c = 0;
  for (char r : resolved)
    if (!r) ++c;
  return c;
}

Point GraphManifold::point(std::size_t node) const { return Point(h[node], grid.node(node)); }

namespace {

struct AxisStencil {
  int len = 0;
  std::array<int, 4> idx{};
  std::array<double, 4> w{};
};

constexpr double kCoverSlack = 1e-9;

bool axis_stencil(const GridAxis& ax, double v, AxisStencil& st) {
  if (ax.count == 1) {
    if (std::abs(v - ax.lo) > kCoverSlack * (1.0 + std::abs(ax.lo))) return false;
    st.len = 1;
    st.idx[0] = 0;
    st.w[0] = 1.0;
    return true;
  }
  const double hsp = ax.spacing();
  double s = (v - ax.lo) / hsp;
  if (ax.periodic) {
    const int cyc = ax.count - 1;
    s = std::fmod(s, static_cast<double>(cyc));
    if (s < 0) s += cyc;
    int base = static_cast<int>(std::floor(s));
    if (base >= cyc) base = cyc - 1;
    const double t = s - base;
    st.len = 4;
    for (int k = 0; k < 4; ++k) st.idx[k] = ((base - 1 + k) % cyc + cyc) % cyc;
    st.w = {-t * (t - 1) * (t - 2) / 6.0, (t + 1) * (t - 1) * (t - 2) / 2.0,
            -(t + 1) * t * (t - 2) / 2.0, (t + 1) * t * (t - 1) / 6.0};
    return true;
  }
  const double slack = kCoverSlack * (ax.count - 1);
  if (s < -slack || s > (ax.count - 1) + slack) return false;
  s = std::clamp(s, 0.0, static_cast<double>(ax.count - 1));
  if (ax.count < 4) {
    int base = std::min(static_cast<int>(std::floor(s)), ax.count - 2);
    const double t = s - base;
    st.len = 2;
    st.idx = {base, base + 1, 0, 0};
    st.w = {1.0 - t, t, 0.0, 0.0};
    return true;
  }
  int base = std::clamp(static_cast<int>(std::floor(s)), 1, ax.count - 3);
  const double t = s - base;
  st.len = 4;
  for (int k = 0; k < 4; ++k) st.idx[k] = base - 1 + k;
  st.w = {-t * (t - 1) * (t - 2) / 6.0, (t + 1) * (t - 1) * (t - 2) / 2.0,
          -(t + 1) * t * (t - 2) / 2.0, (t + 1) * t * (t - 1) / 6.0};
  return true;
}

template <class T, class Get>
Expected<T> interpolate(const ZGrid& grid, const Vec& z, T zero, Get get) {
  const int m = grid.dims();
  if (z.size() != m) return make_error(ErrorCode::dimension_mismatch, "z has wrong length");
  std::vector<AxisStencil> st(m);
  for (int d = 0; d < m; ++d) {
    if (!axis_stencil(grid.axis(d), z[d], st[d]))
      return make_error(ErrorCode::outside_domain,
                        fmt::format("z[{}]={} outside graph coverage", d, z[d]));
  }
  T acc = zero;
  std::vector<int> pos(m, 0);
  std::vector<int> idx(m);
  for (;;) {
    double w = 1.0;
    for (int d = 0; d < m; ++d) {
      w *= st[d].w[pos[d]];
      idx[d] = st[d].idx[pos[d]];
    }
    if (w != 0.0) acc += w * get(grid.flat_index(idx));
    int d = m - 1;
    while (d >= 0 && ++pos[d] == st[d].len) pos[d--] = 0;
    if (d < 0) break;
  }
  return acc;
}

}  // namespace

bool GraphManifold::covers(const Vec& z) const {
  if (z.size() != m()) return false;
  AxisStencil st;
  for (int d = 0; d < m(); ++d)
    if (!axis_stencil(grid.axis(d), z[d], st)) return false;
  return true;
}

Expected<Vec> GraphManifold::eval(const Vec& z) const {
  return interpolate<Vec>(grid, z, Vec::Zero(n), [this](std::size_t i) -> const Vec& { return h[i]; });
}

Expected<Mat> GraphManifold::eval_dh(const Vec& z) const {
  if (!has_dh()) return make_error(ErrorCode::precondition, "graph has no derivative samples");
  return interpolate<Mat>(grid, z, Mat::Zero(n, m()),
                          [this](std::size_t i) -> const Mat& { return dh[i]; });
}

void write_graph(std::ostream& out, const GraphManifold& graph, char delimiter) {
  const int m = graph.m();
  const int n = graph.n;
  out << "# graph n=" << n << " m=" << m << " residual=" << format_real(graph.residual) << "\n";
  for (int d = 0; d < m; ++d) {
    const auto& ax = graph.grid.axis(d);
    out << "# axis " << d << " lo=" << format_real(ax.lo) << " hi=" << format_real(ax.hi)
        << " count=" << ax.count << " periodic=" << (ax.periodic ? 1 : 0) << "\n";
  }
  out << "# ";
  bool first = true;
  auto col = [&](const std::string& name) {
    if (!first) out << delimiter;
    out << name;
    first = false;
  };
  for (int d = 0; d < m; ++d) col(fmt::format("z{}", d));
  for (int i = 0; i < n; ++i) col(fmt::format("h{}", i));
  if (graph.has_dh())
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) col(fmt::format("dh{}_{}", i, j));
  col("resolved");
  out << "\n";
  for (std::size_t k = 0; k < graph.size(); ++k) {
    const Vec z = graph.grid.node(k);
    first = true;
    for (int d = 0; d < m; ++d) col(format_real(z[d]));
    for (int i = 0; i < n; ++i) col(format_real(graph.h[k][i]));
    if (graph.has_dh())
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) col(format_real(graph.dh[k](i, j)));
    col(graph.resolved.empty() || graph.resolved[k] ? "1" : "0");
    out << "\n";
  }
}

Expected<GraphManifold> read_graph(std::istream& in) {
  std::string line;
  int n = -1, m = -1;
  double residual = 0.0;
  std::vector<GridAxis> axes;
  std::vector<std::vector<double>> rows;
  bool has_dh = false;
  char delim = ',';
  auto value_of = [](const std::string& s, const std::string& key) -> std::string {
    const auto p = s.find(key + "=");
    if (p == std::string::npos) return {};
    const auto start = p + key.size() + 1;
    return s.substr(start, s.find(' ', start) - start);
  };
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (line.rfind("# graph", 0) == 0) {
        n = std::stoi(value_of(line, "n"));
        m = std::stoi(value_of(line, "m"));
        residual = std::stod(value_of(line, "residual"));
      } else if (line.rfind("# axis", 0) == 0) {
        GridAxis ax;
        ax.lo = std::stod(value_of(line, "lo"));
        ax.hi = std::stod(value_of(line, "hi"));
        ax.count = std::stoi(value_of(line, "count"));
        ax.periodic = value_of(line, "periodic") == "1";
        axes.push_back(ax);
      } else if (line.rfind("# ", 0) == 0) {
        has_dh = line.find("dh0_0") != std::string::npos;
        if (line.find('\t') != std::string::npos) delim = '\t';
      } else {
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, delim)) row.push_back(std::stod(cell));
        rows.push_back(std::move(row));
      }
    }
  } catch (const std::exception& e) {
    return make_error(ErrorCode::config, std::string("malformed graph table: ") + e.what());
  }
  if (n < 1 || m < 1 || static_cast<int>(axes.size()) != m)
    return make_error(ErrorCode::config, "graph table metadata missing");
  GraphManifold g(ZGrid(axes), n);
  g.residual = residual;
  if (rows.size() != g.size()) return make_error(ErrorCode::config, "graph table row count mismatch");
  const std::size_t width = m + n + (has_dh ? n * m : 0) + 1;
  if (has_dh) g.dh.assign(g.size(), Mat::Zero(n, m));
  g.resolved.assign(g.size(), 1);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& row = rows[k];
    if (row.size() != width) return make_error(ErrorCode::config, "graph table row width mismatch");
    for (int i = 0; i < n; ++i) g.h[k][i] = row[m + i];
    if (has_dh)
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) g.dh[k](i, j) = row[m + n + i * m + j];
    g.resolved[k] = row.back() != 0.0;
  }
  return g;
}

}  // namespace invman
