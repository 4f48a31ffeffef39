#include "nsgen/grid.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace nsgen {

namespace {
constexpr double kNodeTol = 1e-9;

std::string fmt_double(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}
}  // namespace

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

GridSpec GridSpec::square(int n, double length) {
  GridSpec g{n, n, length / (n - 1), length};
  g.validate();
  return g;
}

int GridSpec::depth() const {
  int d = 0;
  while ((1 << d) < nx) ++d;
  return d;
}

void GridSpec::validate() const {
  if (nx != ny) throw ShapeError("grid must be square, got " + std::to_string(nx) + "x" +
                                 std::to_string(ny));
  if (!is_power_of_two(nx) || nx < 8)
    throw ShapeError("grid size must be a power of two >= 8, got " + std::to_string(nx));
  if (!(domain_length > 0.0)) throw ShapeError("domain length must be positive");
  if (std::abs(h - domain_length / (nx - 1)) > 1e-12 * domain_length)
    throw ShapeError("node spacing must equal length / (n - 1)");
}

const char* to_string(Edge e) {
  switch (e) {
    case Edge::left: return "left";
    case Edge::right: return "right";
    case Edge::bottom: return "bottom";
    case Edge::top: return "top";
  }
  return "?";
}

const char* to_string(Var v) {
  switch (v) {
    case Var::u: return "u";
    case Var::v: return "v";
    case Var::p: return "p";
  }
  return "?";
}

const char* to_string(Problem p) {
  switch (p) {
    case Problem::cavity: return "cavity";
    case Problem::internal: return "internal";
    case Problem::custom: return "custom";
  }
  return "?";
}

Problem problem_from_string(const std::string& s) {
  if (s == "cavity") return Problem::cavity;
  if (s == "internal") return Problem::internal;
  if (s == "custom") return Problem::custom;
  throw std::invalid_argument("unknown problem '" + s + "'");
}

double EdgeCondition::value_at(int k, int n) const {
  if (!profile.empty()) {
    if (static_cast<int>(profile.size()) != n)
      throw ShapeError("edge profile has " + std::to_string(profile.size()) +
                       " values, edge has " + std::to_string(n) + " nodes");
    return profile[k];
  }
  const double lo = segment_start * (n - 1) - kNodeTol;
  const double hi = segment_end * (n - 1) + kNodeTol;
  return (k >= lo && k <= hi) ? value : 0.0;
}

double BoundarySpec::reynolds(double length) const {
  double speed = 0.0;
  if (lid) speed = std::abs(lid->velocity);
  if (inlet) speed = std::hypot(inlet->u0, inlet->v0);
  return speed * length / nu;
}

bool BoundarySpec::has_neumann() const {
  for (const auto& edge : edges)
    for (const auto& c : edge)
      if (!c.is_dirichlet()) return true;
  return false;
}

void BoundarySpec::validate() const {
  if (!(nu > 0.0) || !std::isfinite(nu))
    throw BoundaryError("viscosity must be positive (Re > 0), got nu = " + fmt_double(nu));
  if (lid) {
    if (lid->velocity < 0.0 || lid->velocity > 0.5)
      throw BoundaryError("lid velocity U0 = " + fmt_double(lid->velocity) +
                          " outside [0, 0.5]");
    if (lid->start_fraction < 0.0 || lid->start_fraction > 1.0)
      throw BoundaryError("lid start fraction outside [0, 1]");
    if (lid->extent_fraction <= 0.0 || lid->start_fraction + lid->extent_fraction > 1.0 + 1e-12)
      throw BoundaryError("lid extent must be positive and end within the top edge");
  }
  if (inlet) {
    if (inlet->u0 < 0.0 || inlet->u0 > 0.5)
      throw BoundaryError("inlet U0 = " + fmt_double(inlet->u0) + " outside [0, 0.5]");
    if (inlet->v0 < 0.0 || inlet->v0 > 0.5)
      throw BoundaryError("inlet V0 = " + fmt_double(inlet->v0) + " outside [0, 0.5]");
  }
}

BoundarySpec cavity_bc(double u0, double start_fraction, double extent_fraction, double nu) {
  BoundarySpec bc;
  bc.problem = Problem::cavity;
  bc.nu = nu;
  bc.lid = LidParams{u0, start_fraction, extent_fraction};
  for (Edge e : kAllEdges) {
    bc.at(e, Var::u) = EdgeCondition::dirichlet(0.0);
    bc.at(e, Var::v) = EdgeCondition::dirichlet(0.0);
    bc.at(e, Var::p) = EdgeCondition::neumann();
  }
  bc.at(Edge::top, Var::u) =
      EdgeCondition::dirichlet_segment(u0, start_fraction, start_fraction + extent_fraction);
  bc.pressure_pin = true;
  bc.validate();
  return bc;
}

BoundarySpec internal_bc(double u0, double v0, double nu) {
  BoundarySpec bc;
  bc.problem = Problem::internal;
  bc.nu = nu;
  bc.inlet = InletParams{u0, v0};
  bc.at(Edge::left, Var::u) = EdgeCondition::dirichlet(u0);
  bc.at(Edge::left, Var::v) = EdgeCondition::dirichlet(v0);
  bc.at(Edge::left, Var::p) = EdgeCondition::neumann();
  for (Edge e : {Edge::bottom, Edge::top}) {
    bc.at(e, Var::u) = EdgeCondition::dirichlet(0.0);
    bc.at(e, Var::v) = EdgeCondition::dirichlet(0.0);
    bc.at(e, Var::p) = EdgeCondition::neumann();
  }
  bc.at(Edge::right, Var::u) = EdgeCondition::neumann();
  bc.at(Edge::right, Var::v) = EdgeCondition::neumann();
  bc.at(Edge::right, Var::p) = EdgeCondition::dirichlet(0.0);
  bc.validate();
  return bc;
}

// ---------------------------------------------------------------------------

void validate_shape(const Shape& s, const GridSpec& grid) {
  const double lo = 1.0;
  const double hi_x = grid.nx - 2.0;
  const double hi_y = grid.ny - 2.0;
  if (const auto* r = std::get_if<Rect>(&s)) {
    if (r->width < 1.0 || r->height < 1.0)
      throw ShapeError("rectangle extent must be at least one node");
    if (r->x < lo || r->y < lo || r->x + r->width > hi_x || r->y + r->height > hi_y)
      throw ShapeError("rectangle touches the boundary ring");
  } else {
    const auto& c = std::get<Circle>(s);
    if (c.radius < 1.0) throw ShapeError("circle radius must be at least one node");
    if (c.cx - c.radius < lo || c.cy - c.radius < lo || c.cx + c.radius > hi_x ||
        c.cy + c.radius > hi_y)
      throw ShapeError("circle touches the boundary ring");
  }
}

GeometryMask rasterize_obstacles(const std::vector<Shape>& shapes, const GridSpec& grid) {
  GeometryMask out = GeometryMask::empty(grid);
  out.shapes = shapes;
  for (const auto& s : shapes) {
    validate_shape(s, grid);
    for (int j = 0; j < grid.ny; ++j) {
      for (int i = 0; i < grid.nx; ++i) {
        bool inside = false;
        if (const auto* r = std::get_if<Rect>(&s)) {
          inside = i >= r->x - kNodeTol && i <= r->x + r->width + kNodeTol &&
                   j >= r->y - kNodeTol && j <= r->y + r->height + kNodeTol;
        } else {
          const auto& c = std::get<Circle>(s);
          const double dx = i - c.cx;
          const double dy = j - c.cy;
          inside = dx * dx + dy * dy <= c.radius * c.radius + kNodeTol;
        }
        if (inside) out.mask(j, i) = 1;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

BoundaryLayout make_layout(const BoundarySpec& bc, const GridSpec& grid,
                           const GeometryMask* mask) {
  const int nx = grid.nx;
  const int ny = grid.ny;
  BoundaryLayout L;
  L.grid = grid;
  for (int c = 0; c < 3; ++c) {
    L.dirichlet[c] = Mask2D::Zero(ny, nx);
    L.neumann[c] = Mask2D::Zero(ny, nx);
    L.values[c] = Grid2D<double>::Zero(ny, nx);
  }
  L.inward_dj = Grid2D<std::int8_t>::Zero(ny, nx);
  L.inward_di = Grid2D<std::int8_t>::Zero(ny, nx);
  L.solid = Mask2D::Zero(ny, nx);

  auto assign = [&](Edge e, int j, int i, int k, int n, int dj, int di) {
    L.inward_dj(j, i) = static_cast<std::int8_t>(dj);
    L.inward_di(j, i) = static_cast<std::int8_t>(di);
    for (Var var : kAllVars) {
      const int c = static_cast<int>(var);
      const auto& cond = bc.at(e, var);
      if (cond.is_dirichlet()) {
        L.dirichlet[c](j, i) = 1;
        L.neumann[c](j, i) = 0;
        L.values[c](j, i) = cond.value_at(k, n);
      } else {
        L.dirichlet[c](j, i) = 0;
        L.neumann[c](j, i) = 1;
        L.values[c](j, i) = 0.0;
      }
    }
  };
  for (int j = 0; j < ny; ++j) assign(Edge::left, j, 0, j, ny, 0, 1);
  for (int j = 0; j < ny; ++j) assign(Edge::right, j, nx - 1, j, ny, 0, -1);
  for (int i = 0; i < nx; ++i) assign(Edge::bottom, 0, i, i, nx, 1, 0);
  for (int i = 0; i < nx; ++i) assign(Edge::top, ny - 1, i, i, nx, -1, 0);

  if (bc.pressure_pin) {
    L.dirichlet[2](0, 0) = 1;
    L.values[2](0, 0) = 0.0;
  }
  if (mask) {
    if (mask->mask.rows() != ny || mask->mask.cols() != nx)
      throw ShapeError("mask shape does not match grid");
    L.solid = mask->mask;
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        if (!L.solid(j, i)) continue;
        for (int c = 0; c < 2; ++c) {
          L.dirichlet[c](j, i) = 1;
          L.values[c](j, i) = 0.0;
        }
      }
    }
  }
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      if (L.dirichlet[0](j, i) || L.dirichlet[1](j, i) || L.dirichlet[2](j, i))
        ++L.n_dirichlet_nodes;
      if (L.neumann[0](j, i) || L.neumann[1](j, i) || L.neumann[2](j, i)) ++L.n_neumann_nodes;
    }
  }
  return L;
}

InputTensor embed_boundary_conditions(const BoundarySpec& bc, const GridSpec& grid,
                                      const FlowField<double>& interior,
                                      const GeometryMask* mask, bool mask_channel) {
  if (!interior.shape_matches() || interior.u.rows() != grid.ny || interior.u.cols() != grid.nx)
    throw ShapeError("interior field shape " + std::to_string(interior.u.rows()) + "x" +
                     std::to_string(interior.u.cols()) + " does not match grid " +
                     std::to_string(grid.ny) + "x" + std::to_string(grid.nx));
  const BoundaryLayout layout = make_layout(bc, grid, mask);
  InputTensor t;
  t.grid = grid;
  t.bc = bc;
  if (mask) t.shapes = mask->shapes;
  for (Var var : kAllVars) {
    Grid2D<double> a = interior[var];
    if (mask) a = (mask->mask == 1).select(0.0, a);
    apply_boundary(layout, var, a);
    t.channels.push_back(std::move(a));
  }
  if (mask_channel) {
    t.channels.push_back(mask ? mask->mask.cast<double>().eval()
                              : Grid2D<double>::Zero(grid.ny, grid.nx).eval());
  }
  return t;
}

Grid2D<double> interpolate_channel(const Grid2D<double>& src, int target_n) {
  const int ns = static_cast<int>(src.rows());
  if (src.cols() != ns) throw ShapeError("interpolation requires a square source grid");
  if (target_n < ns) throw ShapeError("interpolation target must not be coarser than source");
  Grid2D<double> out(target_n, target_n);
  // Integer arithmetic keeps coincident nodes exact.
  auto locate = [&](int k, int& i0, double& t) {
    const long num = static_cast<long>(k) * (ns - 1);
    i0 = static_cast<int>(num / (target_n - 1));
    const long rem = num % (target_n - 1);
    t = static_cast<double>(rem) / (target_n - 1);
    if (i0 >= ns - 1) {
      i0 = ns - 2;
      t = 1.0;
    }
  };
  for (int jj = 0; jj < target_n; ++jj) {
    int j0;
    double ty;
    locate(jj, j0, ty);
    for (int ii = 0; ii < target_n; ++ii) {
      int i0;
      double tx;
      locate(ii, i0, tx);
      const double a = src(j0, i0) * (1.0 - tx) + src(j0, i0 + 1) * tx;
      const double b = src(j0 + 1, i0) * (1.0 - tx) + src(j0 + 1, i0 + 1) * tx;
      out(jj, ii) = a * (1.0 - ty) + b * ty;
    }
  }
  return out;
}

FlowField<double> interpolate_field(const FlowField<double>& src, const GridSpec& target) {
  if (src.grid.nx != src.grid.ny || target.nx != target.ny)
    throw ShapeError("interpolation requires square grids");
  FlowField<double> out;
  out.grid = target;
  out.u = interpolate_channel(src.u, target.nx);
  out.v = interpolate_channel(src.v, target.nx);
  out.p = interpolate_channel(src.p, target.nx);
  return out;
}

ChannelRmse rmse(const FlowField<double>& pred, const FlowField<double>& truth,
                 const GeometryMask* exclude) {
  if (pred.u.rows() != truth.u.rows() || pred.u.cols() != truth.u.cols() ||
      !pred.shape_matches() || !truth.shape_matches())
    throw ShapeError("rmse: field shapes differ");
  if (exclude && (exclude->mask.rows() != pred.u.rows() || exclude->mask.cols() != pred.u.cols()))
    throw ShapeError("rmse: mask shape differs");
  Grid2D<double> w = Grid2D<double>::Ones(pred.u.rows(), pred.u.cols());
  if (exclude) w = (exclude->mask == 0).cast<double>();
  const double n = w.sum();
  if (n == 0.0) return {};
  auto one = [&](const Grid2D<double>& a, const Grid2D<double>& b) {
    return std::sqrt(((a - b).square() * w).sum() / n);
  };
  return {one(pred.u, truth.u), one(pred.v, truth.v), one(pred.p, truth.p)};
}

}  // namespace nsgen
