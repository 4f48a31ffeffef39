#pragma once

// Naive double-loop references for the stencil and loss code, written
// against the plain formulas with std::vector storage only.

#include "nsgen/grid.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace oracle {

struct Grid {
  int ny = 0, nx = 0;
  std::vector<double> a;
  Grid() = default;
  Grid(int ny_, int nx_) : ny(ny_), nx(nx_), a(static_cast<std::size_t>(ny_) * nx_, 0.0) {}
  double& operator()(int j, int i) { return a[static_cast<std::size_t>(j) * nx + i]; }
  double operator()(int j, int i) const { return a[static_cast<std::size_t>(j) * nx + i]; }
};

inline Grid from(const nsgen::Grid2D<double>& g) {
  Grid o(static_cast<int>(g.rows()), static_cast<int>(g.cols()));
  for (int j = 0; j < o.ny; ++j)
    for (int i = 0; i < o.nx; ++i) o(j, i) = g(j, i);
  return o;
}

inline double max_abs_diff(const Grid& ref, const nsgen::Grid2D<double>& g) {
  if (g.rows() != ref.ny || g.cols() != ref.nx) return INFINITY;
  double m = 0.0;
  for (int j = 0; j < ref.ny; ++j)
    for (int i = 0; i < ref.nx; ++i) m = std::max(m, std::abs(ref(j, i) - g(j, i)));
  return m;
}

inline Grid laplacian(const Grid& a) {
  Grid o(a.ny - 2, a.nx - 2);
  for (int j = 1; j < a.ny - 1; ++j)
    for (int i = 1; i < a.nx - 1; ++i)
      o(j - 1, i - 1) = a(j - 1, i) + a(j + 1, i) + a(j, i - 1) + a(j, i + 1) - 4.0 * a(j, i);
  return o;
}

inline Grid half_x(const Grid& a) {
  Grid o(a.ny - 2, a.nx - 2);
  for (int j = 1; j < a.ny - 1; ++j)
    for (int i = 1; i < a.nx - 1; ++i) o(j - 1, i - 1) = (a(j, i + 1) - a(j, i - 1)) / 2.0;
  return o;
}

inline Grid half_y(const Grid& a) {
  Grid o(a.ny - 2, a.nx - 2);
  for (int j = 1; j < a.ny - 1; ++j)
    for (int i = 1; i < a.nx - 1; ++i) o(j - 1, i - 1) = (a(j + 1, i) - a(j - 1, i)) / 2.0;
  return o;
}

struct Field {
  Grid u, v, p;
  double h = 1.0;
};

inline Field from(const nsgen::FlowField<double>& f) { return {from(f.u), from(f.v), from(f.p), f.grid.h}; }

inline void momentum(const Field& f, double Re, Grid& rx, Grid& ry) {
  const int ny = f.u.ny, nx = f.u.nx;
  rx = Grid(ny - 2, nx - 2);
  ry = Grid(ny - 2, nx - 2);
  const double h = f.h;
  for (int j = 1; j < ny - 1; ++j) {
    for (int i = 1; i < nx - 1; ++i) {
      const double u = f.u(j, i), v = f.v(j, i);
      const double lu = f.u(j - 1, i) + f.u(j + 1, i) + f.u(j, i - 1) + f.u(j, i + 1) - 4 * u;
      const double lv = f.v(j - 1, i) + f.v(j + 1, i) + f.v(j, i - 1) + f.v(j, i + 1) - 4 * v;
      const double ux = (f.u(j, i + 1) - f.u(j, i - 1)) / 2, uy = (f.u(j + 1, i) - f.u(j - 1, i)) / 2;
      const double vx = (f.v(j, i + 1) - f.v(j, i - 1)) / 2, vy = (f.v(j + 1, i) - f.v(j - 1, i)) / 2;
      const double px = (f.p(j, i + 1) - f.p(j, i - 1)) / 2, py = (f.p(j + 1, i) - f.p(j - 1, i)) / 2;
      rx(j - 1, i - 1) = lu / (Re * h * h) - (u * ux + v * uy) / h - px / h;
      ry(j - 1, i - 1) = lv / (Re * h * h) - (u * vx + v * vy) / h - py / h;
    }
  }
}

inline Grid continuity(const Field& f) {
  const int ny = f.u.ny, nx = f.u.nx;
  Grid rc(ny - 2, nx - 2);
  for (int j = 1; j < ny - 1; ++j) {
    for (int i = 1; i < nx - 1; ++i) {
      const double lp = f.p(j - 1, i) + f.p(j + 1, i) + f.p(j, i - 1) + f.p(j, i + 1) - 4 * f.p(j, i);
      const double ux = (f.u(j, i + 1) - f.u(j, i - 1)) / 2, uy = (f.u(j + 1, i) - f.u(j - 1, i)) / 2;
      const double vx = (f.v(j, i + 1) - f.v(j, i - 1)) / 2, vy = (f.v(j + 1, i) - f.v(j - 1, i)) / 2;
      rc(j - 1, i - 1) = 0.25 * lp + ux * ux + 2 * uy * vx + vy * vy;
    }
  }
  return rc;
}

// Boundary rules of the two problem families, restated from scratch:
// bottom and top rows own the corners, left and right own the rest of
// their columns; a lid node k of n lies on the segment when
// start (n-1) <= k <= end (n-1).
struct Owner {
  nsgen::Edge edge;
  int k, n, jn, in;
};

inline Owner owner(int j, int i, int ny, int nx) {
  if (j == 0) return {nsgen::Edge::bottom, i, nx, 1, i};
  if (j == ny - 1) return {nsgen::Edge::top, i, nx, ny - 2, i};
  if (i == 0) return {nsgen::Edge::left, j, ny, j, 1};
  return {nsgen::Edge::right, j, ny, j, nx - 2};
}

struct Rule {
  bool dirichlet[3] = {false, false, false};
  double value[3] = {0, 0, 0};
  bool neumann[3] = {false, false, false};
};

inline Rule ring_rule(const nsgen::BoundarySpec& bc, const Owner& o) {
  Rule r;
  using nsgen::Edge;
  if (bc.problem == nsgen::Problem::cavity) {
    r.dirichlet[0] = r.dirichlet[1] = true;
    r.neumann[2] = true;
    if (o.edge == Edge::top) {
      const double s = bc.lid->start_fraction, e = bc.lid->start_fraction + bc.lid->extent_fraction;
      if (o.k >= s * (o.n - 1) - 1e-9 && o.k <= e * (o.n - 1) + 1e-9) r.value[0] = bc.lid->velocity;
    }
  } else {
    if (o.edge == Edge::left) {
      r.dirichlet[0] = r.dirichlet[1] = true;
      r.value[0] = bc.inlet->u0;
      r.value[1] = bc.inlet->v0;
      r.neumann[2] = true;
    } else if (o.edge == Edge::right) {
      r.neumann[0] = r.neumann[1] = true;
      r.dirichlet[2] = true;
    } else {
      r.dirichlet[0] = r.dirichlet[1] = true;
      r.neumann[2] = true;
    }
  }
  return r;
}

inline bool on_ring(int j, int i, int ny, int nx) { return j == 0 || i == 0 || j == ny - 1 || i == nx - 1; }

inline double neumann_loss(const Field& f, const nsgen::BoundarySpec& bc) {
  const int ny = f.u.ny, nx = f.u.nx;
  const Grid* ch[3] = {&f.u, &f.v, &f.p};
  double sum = 0.0;
  int nodes = 0;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      if (!on_ring(j, i, ny, nx)) continue;
      const Owner o = owner(j, i, ny, nx);
      const Rule r = ring_rule(bc, o);
      bool any = false;
      for (int c = 0; c < 3; ++c) {
        if (!r.neumann[c]) continue;
        any = true;
        const double d = (*ch[c])(j, i) - (*ch[c])(o.jn, o.in);
        sum += d * d;
      }
      nodes += any;
    }
  }
  return nodes ? sum / nodes : 0.0;
}

inline double dirichlet_loss(const Field& f, const nsgen::BoundarySpec& bc, const Grid* solid) {
  const int ny = f.u.ny, nx = f.u.nx;
  const Grid* ch[3] = {&f.u, &f.v, &f.p};
  double sum = 0.0;
  int nodes = 0;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      Rule r;
      if (on_ring(j, i, ny, nx)) r = ring_rule(bc, owner(j, i, ny, nx));
      if (bc.pressure_pin && j == 0 && i == 0) {
        r.dirichlet[2] = true;
        r.value[2] = 0.0;
      }
      if (solid && (*solid)(j, i) != 0.0) {
        r.dirichlet[0] = r.dirichlet[1] = true;
        r.value[0] = r.value[1] = 0.0;
      }
      bool any = false;
      for (int c = 0; c < 3; ++c) {
        if (!r.dirichlet[c]) continue;
        any = true;
        const double d = (*ch[c])(j, i) - r.value[c];
        sum += d * d;
      }
      nodes += any;
    }
  }
  return nodes ? sum / nodes : 0.0;
}

inline double composite_total(const Field& f, const nsgen::BoundarySpec& bc, const Grid* solid,
                              double Re, double l1, double l2, double l3, double lN, double lb) {
  Grid rx, ry;
  momentum(f, Re, rx, ry);
  const Grid rc = continuity(f);
  const int ny = f.u.ny, nx = f.u.nx;
  double sum = 0.0;
  int count = 0;
  for (int j = 1; j < ny - 1; ++j) {
    for (int i = 1; i < nx - 1; ++i) {
      bool blocked = false;
      if (solid)
        for (int dj = -1; dj <= 1; ++dj)
          for (int di = -1; di <= 1; ++di) blocked |= (*solid)(j + dj, i + di) != 0.0;
      if (blocked) continue;
      const double R = l1 * std::abs(rx(j - 1, i - 1)) + l2 * std::abs(ry(j - 1, i - 1)) +
                       l3 * std::abs(rc(j - 1, i - 1));
      sum += R * R;
      ++count;
    }
  }
  const double phys = count ? sum / count : 0.0;
  return phys + lN * neumann_loss(f, bc) + lb * dirichlet_loss(f, bc, solid);
}

inline nsgen::FlowField<double> random_field(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  auto f = nsgen::FlowField<double>::zeros(nsgen::GridSpec::square(n));
  for (auto* g : {&f.u, &f.v, &f.p})
    for (Eigen::Index k = 0; k < g->size(); ++k) g->data()[k] = d(rng);
  return f;
}

}  // namespace oracle
