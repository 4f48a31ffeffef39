#include "oracles.hpp"

#include "nsgen/physics_loss.hpp"
#include "nsgen/solver.hpp"

#include <doctest.h>

#include <chrono>

using namespace nsgen;

namespace {

// Boundary application for one channel: zero-gradient nodes copy their
// inward neighbour (side columns, then the rows that own the corners), then
// prescribed values are written.
void apply_ring(oracle::Grid& a, const BoundarySpec& bc, int c, bool skip_pin) {
  const int ny = a.ny, nx = a.nx;
  auto copy_if_neumann = [&](int j, int i) {
    const oracle::Owner o = oracle::owner(j, i, ny, nx);
    if (oracle::ring_rule(bc, o).neumann[c]) a(j, i) = a(o.jn, o.in);
  };
  for (int j = 1; j < ny - 1; ++j) {
    copy_if_neumann(j, 0);
    copy_if_neumann(j, nx - 1);
  }
  for (int i = 0; i < nx; ++i) {
    copy_if_neumann(0, i);
    copy_if_neumann(ny - 1, i);
  }
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      if (!oracle::on_ring(j, i, ny, nx)) continue;
      const oracle::Rule r = oracle::ring_rule(bc, oracle::owner(j, i, ny, nx));
      if (r.dirichlet[c]) a(j, i) = r.value[c];
    }
  if (c == 2 && bc.pressure_pin && !skip_pin) a(0, 0) = 0.0;
}

// One pseudo-time step of the projection scheme: Jacobi sweeps on the
// pressure Poisson equation, then explicit Euler momentum.
oracle::Field naive_step(const oracle::Field& s, const BoundarySpec& bc, double dt, double nu,
                         int sweeps) {
  const int ny = s.u.ny, nx = s.u.nx;
  const double h = s.h;
  oracle::Grid b(ny, nx);
  for (int j = 1; j < ny - 1; ++j)
    for (int i = 1; i < nx - 1; ++i) {
      const double ux = (s.u(j, i + 1) - s.u(j, i - 1)) / (2 * h);
      const double uy = (s.u(j + 1, i) - s.u(j - 1, i)) / (2 * h);
      const double vx = (s.v(j, i + 1) - s.v(j, i - 1)) / (2 * h);
      const double vy = (s.v(j + 1, i) - s.v(j - 1, i)) / (2 * h);
      b(j, i) = (ux + vy) / dt - (ux * ux + 2 * uy * vx + vy * vy);
    }
  oracle::Grid p = s.p;
  for (int it = 0; it < sweeps; ++it) {
    oracle::Grid q = p;
    for (int j = 1; j < ny - 1; ++j)
      for (int i = 1; i < nx - 1; ++i)
        q(j, i) = 0.25 * (p(j, i + 1) + p(j, i - 1) + p(j + 1, i) + p(j - 1, i) - h * h * b(j, i));
    apply_ring(q, bc, 2, true);
    if (bc.pressure_pin) {
      const double p0 = q(0, 0);
      for (auto& x : q.a) x -= p0;
    }
    p = q;
  }
  oracle::Field out = s;
  out.p = p;
  for (int j = 1; j < ny - 1; ++j)
    for (int i = 1; i < nx - 1; ++i) {
      const double u = s.u(j, i), v = s.v(j, i);
      const double ux = (s.u(j, i + 1) - s.u(j, i - 1)) / 2, uy = (s.u(j + 1, i) - s.u(j - 1, i)) / 2;
      const double vx = (s.v(j, i + 1) - s.v(j, i - 1)) / 2, vy = (s.v(j + 1, i) - s.v(j - 1, i)) / 2;
      const double px = (p(j, i + 1) - p(j, i - 1)) / 2, py = (p(j + 1, i) - p(j - 1, i)) / 2;
      const double lu = s.u(j, i + 1) + s.u(j, i - 1) + s.u(j + 1, i) + s.u(j - 1, i) - 4 * u;
      const double lv = s.v(j, i + 1) + s.v(j, i - 1) + s.v(j + 1, i) + s.v(j - 1, i) - 4 * v;
      out.u(j, i) = u + dt * (nu * lu / (h * h) - (u * ux + v * uy) / h - px / h);
      out.v(j, i) = v + dt * (nu * lv / (h * h) - (u * vx + v * vy) / h - py / h);
    }
  apply_ring(out.u, bc, 0, false);
  apply_ring(out.v, bc, 1, false);
  return out;
}

double field_diff(const oracle::Field& a, const FlowField<double>& b) {
  return std::max({oracle::max_abs_diff(a.u, b.u), oracle::max_abs_diff(a.v, b.v),
                   oracle::max_abs_diff(a.p, b.p)});
}

}  // namespace

TEST_CASE("solver step matches the naive scheme") {
  for (const BoundarySpec& bc : {cavity_bc(0.5), cavity_bc(0.3, 0.25, 0.5), internal_bc(0.2, 0.4)}) {
    const GridSpec grid = GridSpec::square(16);
    const SolverParams params = SolverParams::defaults(grid, bc.nu);
    FlowField<double> s = initial_state(bc, grid);
    oracle::Field o = oracle::from(s);
    for (int k = 0; k < 15; ++k) {
      s = step(s, bc, nullptr, params);
      o = naive_step(o, bc, params.dt, params.nu, params.poisson_iters);
    }
    CHECK(field_diff(o, s) <= 1e-12);
  }
}

TEST_CASE("time step respects both stability bounds") {
  for (int n : {8, 32, 64}) {
    const GridSpec grid = GridSpec::square(n);
    const SolverParams p = SolverParams::defaults(grid, 0.05);
    CHECK_NOTHROW(p.validate(grid, 0.5));
    CHECK(p.dt <= 0.25 * grid.h * grid.h / 0.05);
    CHECK(p.dt <= grid.h / 0.5);
  }
  SolverParams bad = SolverParams::defaults(GridSpec::square(32), 0.05);
  bad.dt *= 10.0;
  CHECK_THROWS_AS(bad.validate(GridSpec::square(32), 0.5), std::invalid_argument);
}

TEST_CASE("blow-up raises a divergence error naming the step") {
  const GridSpec grid = GridSpec::square(16);
  const BoundarySpec bc = cavity_bc(0.5);
  SolverParams p = SolverParams::defaults(grid, bc.nu);
  p.dt *= 400.0;
  FlowField<double> s = initial_state(bc, grid);
  const BoundaryLayout L = make_layout(bc, grid);
  bool thrown = false;
  try {
    for (long k = 0; k < 500; ++k) s = step(s, L, p, k);
  } catch (const DivergenceError& e) {
    thrown = true;
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
  CHECK(thrown);
}

TEST_CASE("pre-run warm-up is deterministic and finite") {
  const GridSpec grid = GridSpec::square(32);
  const auto a = prerun(cavity_bc(0.4), grid, 20);
  const auto b = prerun(cavity_bc(0.4), grid, 20);
  CHECK(a.all_finite());
  CHECK((a.u - b.u).abs().maxCoeff() == 0.0);
  CHECK((a.p - b.p).abs().maxCoeff() == 0.0);
  CHECK(a.u(31, 10) == 0.4);
}

TEST_CASE("steady solve converges and respects boundary values") {
  const GridSpec grid = GridSpec::square(16);
  const BoundarySpec bc = internal_bc(0.3, 0.1);
  const SolveResult r = solve_steady(bc, nullptr, grid, SolverParams::defaults(grid, bc.nu));
  CHECK(r.converged);
  CHECK(r.field.u(8, 0) == 0.3);
  CHECK(r.field.v(8, 0) == 0.1);
  CHECK(r.field.p(8, 15) == 0.0);
  CHECK(r.field.u(0, 8) == 0.0);
}

TEST_CASE("progress callback can stop the solve") {
  const GridSpec grid = GridSpec::square(32);
  const BoundarySpec bc = cavity_bc(0.5);
  long last = -1;
  bool monotone = true;
  const SolveResult r = solve_steady(
      bc, nullptr, grid, SolverParams::defaults(grid, bc.nu),
      [&](const SolveProgress& p) {
        monotone &= p.step > last;
        last = p.step;
        return p.step < 200;
      },
      50);
  CHECK(monotone);
  CHECK_FALSE(r.converged);
  CHECK(r.steps <= 250);
}

TEST_CASE("coarse solution interpolates onto the target grid") {
  const auto coarse = coarse_solution(internal_bc(0.5, 0.5), 8);
  CHECK(coarse.grid.nx == 8);
  CHECK(coarse.all_finite());
  const auto fine = interpolate_field(coarse, GridSpec::square(64));
  for (int m = 0; m < 8; ++m)
    for (int k = 0; k < 8; ++k) CHECK(fine.u(9 * m, 9 * k) == doctest::Approx(coarse.u(m, k)).epsilon(1e-12));
}
