#pragma once

// Discretized fields, boundary conditions and obstacle masks shared by the
// solver, the physics loss, the network and the service.
//
// Layout convention: every 2D array is row-major and indexed (j, i) with
// row j along y and column i along x. y grows with j, so the "top" edge is
// the last row. All fields are node-centred and co-located.

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace nsgen {

template <typename Scalar>
using Grid2D = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mask2D = Grid2D<std::uint8_t>;

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct BoundaryError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Square node lattice. h is the node spacing, so h == length / (n - 1).
struct GridSpec {
  int nx = 0;
  int ny = 0;
  double h = 0.0;
  double domain_length = 1.0;

  static GridSpec square(int n, double length = 1.0);

  /// log2(nx); the U-Net depth for this grid.
  int depth() const;
  void validate() const;
  bool operator==(const GridSpec&) const = default;
};

bool is_power_of_two(int n);

enum class Var : int { u = 0, v = 1, p = 2 };
inline constexpr std::array<Var, 3> kAllVars{Var::u, Var::v, Var::p};

template <typename Scalar>
struct FlowField {
  GridSpec grid;
  Grid2D<Scalar> u;
  Grid2D<Scalar> v;
  Grid2D<Scalar> p;

  static FlowField zeros(const GridSpec& g) {
    FlowField f;
    f.grid = g;
    f.u = Grid2D<Scalar>::Zero(g.ny, g.nx);
    f.v = Grid2D<Scalar>::Zero(g.ny, g.nx);
    f.p = Grid2D<Scalar>::Zero(g.ny, g.nx);
    return f;
  }

  Grid2D<Scalar>& operator[](Var c) { return c == Var::u ? u : (c == Var::v ? v : p); }
  const Grid2D<Scalar>& operator[](Var c) const {
    return c == Var::u ? u : (c == Var::v ? v : p);
  }

  template <typename T>
  FlowField<T> cast() const {
    FlowField<T> out;
    out.grid = grid;
    out.u = u.template cast<T>();
    out.v = v.template cast<T>();
    out.p = p.template cast<T>();
    return out;
  }

  bool shape_matches() const {
    return u.rows() == grid.ny && u.cols() == grid.nx && v.rows() == grid.ny &&
           v.cols() == grid.nx && p.rows() == grid.ny && p.cols() == grid.nx;
  }

  bool all_finite() const { return u.allFinite() && v.allFinite() && p.allFinite(); }
};

// ---------------------------------------------------------------------------
// Boundary conditions

/// Edges in application order. Bottom and top are applied last, so they own
/// the four corner nodes.
enum class Edge : int { left = 0, right = 1, bottom = 2, top = 3 };
inline constexpr std::array<Edge, 4> kAllEdges{Edge::left, Edge::right, Edge::bottom,
                                               Edge::top};

const char* to_string(Edge e);
const char* to_string(Var v);

struct EdgeCondition {
  enum class Kind { dirichlet, neumann_zero };

  Kind kind = Kind::dirichlet;
  // Uniform value, applied on the [segment_start, segment_end] fraction of
  // the edge and zero elsewhere. Ignored when a per-node profile is given.
  double value = 0.0;
  double segment_start = 0.0;
  double segment_end = 1.0;
  std::vector<double> profile;

  static EdgeCondition dirichlet(double value) { return {Kind::dirichlet, value, 0.0, 1.0, {}}; }
  static EdgeCondition dirichlet_segment(double value, double start, double end) {
    return {Kind::dirichlet, value, start, end, {}};
  }
  static EdgeCondition dirichlet_profile(std::vector<double> values) {
    EdgeCondition c;
    c.profile = std::move(values);
    return c;
  }
  static EdgeCondition neumann() { return {Kind::neumann_zero, 0.0, 0.0, 1.0, {}}; }

  bool is_dirichlet() const { return kind == Kind::dirichlet; }
  /// Prescribed value at node k of an edge with n nodes (k grows with x or y).
  double value_at(int k, int n) const;
  bool operator==(const EdgeCondition&) const = default;
};

struct LidParams {
  double velocity = 0.0;
  double start_fraction = 0.0;
  double extent_fraction = 1.0;
  bool operator==(const LidParams&) const = default;
};

struct InletParams {
  double u0 = 0.0;
  double v0 = 0.0;
  bool operator==(const InletParams&) const = default;
};

enum class Problem { cavity, internal, custom };
const char* to_string(Problem p);
Problem problem_from_string(const std::string& s);

struct BoundarySpec {
  Problem problem = Problem::custom;
  std::array<std::array<EdgeCondition, 3>, 4> edges{};
  std::optional<LidParams> lid;
  std::optional<InletParams> inlet;
  // Kinematic viscosity. Velocities are dimensionless with unit reference
  // speed and unit length, so the momentum viscous coefficient 1/Re used by
  // the loss is 1/nu, and the flow Reynolds number is U0 * L / nu.
  double nu = 0.05;
  // Fix the pressure gauge with p = 0 at node (0, 0). Used when every
  // pressure edge is zero-gradient.
  bool pressure_pin = false;

  EdgeCondition& at(Edge e, Var v) { return edges[static_cast<int>(e)][static_cast<int>(v)]; }
  const EdgeCondition& at(Edge e, Var v) const {
    return edges[static_cast<int>(e)][static_cast<int>(v)];
  }

  double loss_reynolds() const { return 1.0 / nu; }
  /// Flow Reynolds number from the driving velocity magnitude.
  double reynolds(double length = 1.0) const;
  bool has_neumann() const;

  /// Throws BoundaryError when a parameter is outside its admissible range.
  void validate() const;
  bool operator==(const BoundarySpec&) const = default;
};

/// Lid-driven cavity: no-slip walls, a lid moving in +x along a segment of
/// the top edge, zero-gradient pressure on every wall plus a gauge pin.
BoundarySpec cavity_bc(double u0, double start_fraction = 0.0, double extent_fraction = 1.0,
                       double nu = 0.05);

/// Inclined internal flow: velocity inlet (u0, v0) on the left edge, no-slip
/// walls on bottom and top, pressure outlet (p = 0, zero-gradient velocity)
/// on the right edge.
BoundarySpec internal_bc(double u0, double v0, double nu = 0.05);

// ---------------------------------------------------------------------------
// Obstacles

/// Closed box [x, x + width] x [y, y + height] in node units. An n-node
/// square has width n - 1.
struct Rect {
  double x = 0, y = 0, width = 0, height = 0;
  bool operator==(const Rect&) const = default;
};

/// Closed disc in node units.
struct Circle {
  double cx = 0, cy = 0, radius = 0;
  bool operator==(const Circle&) const = default;
};

using Shape = std::variant<Rect, Circle>;

struct GeometryMask {
  Mask2D mask;  // 1 solid, 0 fluid
  std::vector<Shape> shapes;

  static GeometryMask empty(const GridSpec& g) {
    return {Mask2D::Zero(g.ny, g.nx), {}};
  }
  long solid_count() const { return mask.template cast<long>().sum(); }
};

/// Node (i, j) is solid iff its centre lies inside a shape. Shapes touching
/// the outer node ring are rejected with ShapeError.
GeometryMask rasterize_obstacles(const std::vector<Shape>& shapes, const GridSpec& grid);
void validate_shape(const Shape& s, const GridSpec& grid);

// ---------------------------------------------------------------------------
// Boundary layout: per-node resolution of a BoundarySpec on a grid.

struct BoundaryLayout {
  GridSpec grid;
  std::array<Mask2D, 3> dirichlet;        // 1 where the channel is prescribed
  std::array<Grid2D<double>, 3> values;   // prescribed values (0 elsewhere)
  std::array<Mask2D, 3> neumann;          // 1 where the channel copies its inward neighbour
  Grid2D<std::int8_t> inward_dj;          // inward neighbour offsets for ring nodes
  Grid2D<std::int8_t> inward_di;
  Mask2D solid;
  int n_dirichlet_nodes = 0;  // N_b: nodes with at least one prescribed channel
  int n_neumann_nodes = 0;    // N_N: nodes with at least one zero-gradient channel
};

BoundaryLayout make_layout(const BoundarySpec& bc, const GridSpec& grid,
                           const GeometryMask* mask = nullptr);

/// Apply a layout to one channel in place: Neumann ring nodes copy their
/// inward neighbour (edges in application order), then prescribed values
/// are written.
template <typename Scalar>
void apply_boundary(const BoundaryLayout& layout, Var var, Grid2D<Scalar>& a) {
  const int c = static_cast<int>(var);
  const int ny = static_cast<int>(a.rows());
  const int nx = static_cast<int>(a.cols());
  const auto& neu = layout.neumann[c];
  // Columns first (left/right edges), then rows, so corners read final values.
  for (int j = 1; j < ny - 1; ++j) {
    for (int i : {0, nx - 1}) {
      if (neu(j, i)) a(j, i) = a(j + layout.inward_dj(j, i), i + layout.inward_di(j, i));
    }
  }
  for (int j : {0, ny - 1}) {
    for (int i = 0; i < nx; ++i) {
      if (neu(j, i)) a(j, i) = a(j + layout.inward_dj(j, i), i + layout.inward_di(j, i));
    }
  }
  const auto& dir = layout.dirichlet[c];
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      if (dir(j, i)) a(j, i) = static_cast<Scalar>(layout.values[c](j, i));
}

// ---------------------------------------------------------------------------
// Model input

struct InputTensor {
  GridSpec grid;
  std::vector<Grid2D<double>> channels;  // u, v, p[, mask]
  BoundarySpec bc;
  std::vector<Shape> shapes;

  int channel_count() const { return static_cast<int>(channels.size()); }
};

/// Stack (u, v, p) with boundary values embedded. `interior` is either a zero
/// field (plain input) or a warm-up field. With a mask, solid nodes carry
/// u = v = p = 0 and the mask is appended as a fourth channel when
/// `mask_channel` is set.
InputTensor embed_boundary_conditions(const BoundarySpec& bc, const GridSpec& grid,
                                      const FlowField<double>& interior,
                                      const GeometryMask* mask = nullptr,
                                      bool mask_channel = false);

/// Bilinear resampling onto a finer square grid spanning the same domain.
FlowField<double> interpolate_field(const FlowField<double>& src, const GridSpec& target);
Grid2D<double> interpolate_channel(const Grid2D<double>& src, int target_n);

struct ChannelRmse {
  double u = 0, v = 0, p = 0;
};

/// Per-channel RMSE over fluid nodes (mask == 0 when a mask is given).
ChannelRmse rmse(const FlowField<double>& pred, const FlowField<double>& truth,
                 const GeometryMask* exclude = nullptr);

}  // namespace nsgen
