#include "nsgen/solver.hpp"

#include "nsgen/physics_loss.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace nsgen {

SolverParams SolverParams::defaults(const GridSpec& grid, double nu) {
  SolverParams p;
  p.nu = nu;
  p.dt = 0.2 * std::min(grid.h * grid.h / nu, grid.h);
  return p;
}

void SolverParams::validate(const GridSpec& grid, double max_speed) const {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (!(nu > 0.0)) throw std::invalid_argument("nu must be positive");
  if (poisson_iters < 1) throw std::invalid_argument("poisson_iters must be >= 1");
  if (!(steady_tol > 0.0)) throw std::invalid_argument("steady_tol must be positive");
  if (max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
  if (dt > 0.25 * grid.h * grid.h / nu * (1 + 1e-12))
    throw std::invalid_argument("dt exceeds the diffusive bound 0.25 h^2 / nu");
  if (max_speed > 0.0 && dt > grid.h / max_speed * (1 + 1e-12))
    throw std::invalid_argument("dt exceeds the advective bound h / max|u|");
}

namespace {

// Neighbour value with zero-gradient treatment of solid faces.
inline double nb(const Grid2D<double>& a, const Mask2D& solid, int j, int i, int jn, int in) {
  return solid(jn, in) ? a(j, i) : a(jn, in);
}

BoundaryLayout without_pin(const BoundaryLayout& layout, bool& pinned) {
  BoundaryLayout out = layout;
  pinned = false;
  // The pin is the only prescribed pressure value on a zero-gradient corner.
  if (out.dirichlet[2](0, 0) && out.neumann[2](0, 0)) {
    out.dirichlet[2](0, 0) = 0;
    pinned = true;
  }
  return out;
}

double max_speed_of(const BoundaryLayout& layout) {
  return std::max(layout.values[0].abs().maxCoeff(), layout.values[1].abs().maxCoeff());
}

}  // namespace

FlowField<double> step(const FlowField<double>& state, const BoundaryLayout& layout,
                       const SolverParams& params, long step_index) {
  const int ny = state.grid.ny;
  const int nx = state.grid.nx;
  const double h = state.grid.h;
  const double dt = params.dt;
  const Mask2D& solid = layout.solid;
  const auto& u = state.u;
  const auto& v = state.v;

  bool pinned = false;
  const BoundaryLayout playout = without_pin(layout, pinned);

  // Pressure source from the velocity field at the start of the step.
  Grid2D<double> b = Grid2D<double>::Zero(ny, nx);
  const double inv_2h = 1.0 / (2.0 * h);
  for (int j = 1; j < ny - 1; ++j) {
    for (int i = 1; i < nx - 1; ++i) {
      if (solid(j, i)) continue;
      const double ux = (u(j, i + 1) - u(j, i - 1)) * inv_2h;
      const double uy = (u(j + 1, i) - u(j - 1, i)) * inv_2h;
      const double vx = (v(j, i + 1) - v(j, i - 1)) * inv_2h;
      const double vy = (v(j + 1, i) - v(j - 1, i)) * inv_2h;
      double src = -(ux * ux + 2.0 * uy * vx + vy * vy);
      if (params.transient_source) src += (ux + vy) / dt;
      b(j, i) = params.rho * src;
    }
  }

  Grid2D<double> p = state.p;
  Grid2D<double> pn = p;
  const double h2 = h * h;
  for (int it = 0; it < params.poisson_iters; ++it) {
    for (int j = 1; j < ny - 1; ++j) {
      for (int i = 1; i < nx - 1; ++i) {
        if (solid(j, i)) continue;
        const double sum = nb(p, solid, j, i, j, i + 1) + nb(p, solid, j, i, j, i - 1) +
                           nb(p, solid, j, i, j + 1, i) + nb(p, solid, j, i, j - 1, i);
        pn(j, i) = 0.25 * (sum - h2 * b(j, i));
      }
    }
    apply_boundary(playout, Var::p, pn);
    if (pinned) pn -= pn(0, 0);
    pn = (solid == 1).select(0.0, pn);
    std::swap(p, pn);
  }

  FlowField<double> out;
  out.grid = state.grid;
  out.p = p;
  out.u = u;
  out.v = v;
  const double visc = params.nu / h2;
  const double inv_h = 1.0 / h;
  const double inv_rho = 1.0 / params.rho;
  for (int j = 1; j < ny - 1; ++j) {
    for (int i = 1; i < nx - 1; ++i) {
      if (solid(j, i)) continue;
      const double uc = u(j, i);
      const double vc = v(j, i);
      const double ux = 0.5 * (u(j, i + 1) - u(j, i - 1));
      const double uy = 0.5 * (u(j + 1, i) - u(j - 1, i));
      const double vx = 0.5 * (v(j, i + 1) - v(j, i - 1));
      const double vy = 0.5 * (v(j + 1, i) - v(j - 1, i));
      const double px = 0.5 * (nb(p, solid, j, i, j, i + 1) - nb(p, solid, j, i, j, i - 1));
      const double py = 0.5 * (nb(p, solid, j, i, j + 1, i) - nb(p, solid, j, i, j - 1, i));
      const double lap_u = u(j, i + 1) + u(j, i - 1) + u(j + 1, i) + u(j - 1, i) - 4.0 * uc;
      const double lap_v = v(j, i + 1) + v(j, i - 1) + v(j + 1, i) + v(j - 1, i) - 4.0 * vc;
      out.u(j, i) = uc + dt * (visc * lap_u - inv_h * (uc * ux + vc * uy) - inv_rho * inv_h * px);
      out.v(j, i) = vc + dt * (visc * lap_v - inv_h * (uc * vx + vc * vy) - inv_rho * inv_h * py);
    }
  }
  apply_boundary(layout, Var::u, out.u);
  apply_boundary(layout, Var::v, out.v);

  if (!out.all_finite()) {
    std::ostringstream os;
    os << "non-finite value (dt = " << dt << ")";
    throw DivergenceError(step_index, os.str());
  }
  return out;
}

FlowField<double> step(const FlowField<double>& state, const BoundarySpec& bc,
                       const GeometryMask* mask, const SolverParams& params) {
  return step(state, make_layout(bc, state.grid, mask), params);
}

FlowField<double> initial_state(const BoundarySpec& bc, const GridSpec& grid,
                                const GeometryMask* mask) {
  const BoundaryLayout layout = make_layout(bc, grid, mask);
  auto f = FlowField<double>::zeros(grid);
  apply_boundary(layout, Var::u, f.u);
  apply_boundary(layout, Var::v, f.v);
  return f;
}

SolveResult solve_steady(const BoundarySpec& bc, const GeometryMask* mask, const GridSpec& grid,
                         const SolverParams& params, const ProgressFn& progress,
                         long progress_every) {
  const BoundaryLayout layout = make_layout(bc, grid, mask);
  params.validate(grid, max_speed_of(layout));
  SolveResult res;
  res.field = initial_state(bc, grid, mask);
  for (long s = 1; s <= params.max_steps; ++s) {
    FlowField<double> next = step(res.field, layout, params, s);
    const double change = std::max((next.u - res.field.u).abs().maxCoeff(),
                                   (next.v - res.field.v).abs().maxCoeff());
    res.field = std::move(next);
    res.steps = s;
    res.last_change = change;
    if (change < params.steady_tol) {
      res.converged = true;
      break;
    }
    if (progress && progress_every > 0 && s % progress_every == 0) {
      if (!progress({s, change})) break;
    }
  }
  if (progress && res.converged) progress({res.steps, res.last_change});
  return res;
}

FlowField<double> prerun(const BoundarySpec& bc, const GridSpec& grid, int steps,
                         const GeometryMask* mask) {
  const BoundaryLayout layout = make_layout(bc, grid, mask);
  const SolverParams params = SolverParams::defaults(grid, bc.nu);
  params.validate(grid, max_speed_of(layout));
  FlowField<double> f = initial_state(bc, grid, mask);
  for (int s = 1; s <= steps; ++s) f = step(f, layout, params, s);
  return f;
}

FlowField<double> coarse_solution(const BoundarySpec& bc, int coarse_n) {
  if (bc.problem != Problem::internal)
    throw std::invalid_argument("coarse_solution expects an internal-flow boundary spec");
  const GridSpec grid = GridSpec::square(coarse_n);
  SolverParams params = SolverParams::defaults(grid, bc.nu);
  params.steady_tol = 1e-7;
  return solve_steady(bc, nullptr, grid, params).field;
}

double max_divergence(const FlowField<double>& f, const GeometryMask* mask) {
  const Mask2D solid = mask ? mask->mask : Mask2D::Zero(f.grid.ny, f.grid.nx);
  const Mask2D in = interior_fluid_mask(solid);
  const Grid2D<double> div = (half_diff_x(f.u) + half_diff_y(f.v)) / f.grid.h;
  return (div.abs() * in.cast<double>()).maxCoeff();
}

}  // namespace nsgen
