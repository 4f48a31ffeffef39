#pragma once

// Explicit pseudo-time finite-difference solver for the steady 2D
// incompressible Navier-Stokes equations: Jacobi sweeps on the
// pressure-Poisson equation followed by an explicit Euler momentum update
// built from the same central-difference stencils as the physics loss.

#include "nsgen/grid.hpp"

#include <functional>
#include <stdexcept>
#include <string>

namespace nsgen {

struct DivergenceError : std::runtime_error {
  long step;
  DivergenceError(long s, const std::string& what)
      : std::runtime_error("solver diverged at step " + std::to_string(s) + ": " + what),
        step(s) {}
};

struct SolverParams {
  double dt = 0.0;
  double nu = 0.05;
  double rho = 1.0;
  int poisson_iters = 50;
  long max_steps = 100000;
  double steady_tol = 1e-6;
  // Include the (1/dt) div(u) term in the pressure source. Drives the
  // discrete divergence towards zero during pseudo-time marching.
  bool transient_source = true;

  /// dt = 0.2 min(h^2 / nu, h), 50 Poisson sweeps, tol 1e-6.
  static SolverParams defaults(const GridSpec& grid, double nu);
  /// Throws std::invalid_argument when dt violates the stability bounds.
  void validate(const GridSpec& grid, double max_speed) const;
};

/// One pseudo-time step. `state` must already satisfy the boundary values.
FlowField<double> step(const FlowField<double>& state, const BoundaryLayout& layout,
                       const SolverParams& params, long step_index = 0);
FlowField<double> step(const FlowField<double>& state, const BoundarySpec& bc,
                       const GeometryMask* mask, const SolverParams& params);

/// Zero field with boundary values applied; the solver's initial state.
FlowField<double> initial_state(const BoundarySpec& bc, const GridSpec& grid,
                                const GeometryMask* mask = nullptr);

struct SolveProgress {
  long step = 0;
  double change = 0.0;  // max(|du|, |dv|) of the latest step
};

struct SolveResult {
  FlowField<double> field;
  long steps = 0;
  bool converged = false;
  double last_change = 0.0;
};

/// Called every `progress_every` steps; returning false stops the solve
/// early with converged == false.
using ProgressFn = std::function<bool(const SolveProgress&)>;

SolveResult solve_steady(const BoundarySpec& bc, const GeometryMask* mask, const GridSpec& grid,
                         const SolverParams& params, const ProgressFn& progress = {},
                         long progress_every = 100);

/// `steps` solver iterations from rest: the pre-run warm-up input.
FlowField<double> prerun(const BoundarySpec& bc, const GridSpec& grid, int steps = 20,
                         const GeometryMask* mask = nullptr);

/// Steady solution of an obstacle-free internal-flow problem on a coarse grid.
FlowField<double> coarse_solution(const BoundarySpec& bc, int coarse_n = 8);

/// L-infinity norm of the central-difference divergence over interior fluid
/// nodes.
double max_divergence(const FlowField<double>& f, const GeometryMask* mask = nullptr);

}  // namespace nsgen
