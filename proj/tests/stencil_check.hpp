#pragma once

// Library stencils and losses against the naive references on random fields.

#include "oracles.hpp"

#include "nsgen/physics_loss.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace stencil_check {

inline nsgen::GeometryMask square_mask(int n) {
  const double s = std::round((n - 1) / 8.0);
  return nsgen::rasterize_obstacles({nsgen::Rect{3 * s, 3 * s, 2 * s, s}}, nsgen::GridSpec::square(n));
}

/// Worst absolute difference over `trials` random fields of size n (the
/// composite total is compared relative to max(1, |reference|)).
inline double sweep(int n, int trials, std::mt19937_64& rng) {
  using namespace nsgen;
  const GeometryMask mask = square_mask(n);
  const oracle::Grid solid = oracle::from(mask.mask.cast<double>());
  double worst = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    const FlowField<double> f = oracle::random_field(n, rng);
    const oracle::Field of = oracle::from(f);
    worst = std::max(worst, oracle::max_abs_diff(oracle::laplacian(of.u), laplacian_conv(f.u)));
    worst = std::max(worst, oracle::max_abs_diff(oracle::half_x(of.v), half_diff_x(f.v)));
    worst = std::max(worst, oracle::max_abs_diff(oracle::half_y(of.p), half_diff_y(f.p)));
    oracle::Grid rx, ry;
    oracle::momentum(of, 20.0, rx, ry);
    const auto mom = momentum_residuals(f, 20.0);
    worst = std::max(worst, oracle::max_abs_diff(rx, mom.x));
    worst = std::max(worst, oracle::max_abs_diff(ry, mom.y));
    worst = std::max(worst, oracle::max_abs_diff(oracle::continuity(of), continuity_residual(f)));

    const bool masked = trial % 3 == 0;
    const BoundarySpec bc = trial % 2 ? cavity_bc(0.3, 0.2, 0.5) : internal_bc(0.1, 0.4);
    const BoundaryLayout L = make_layout(bc, f.grid, masked ? &mask : nullptr);
    worst = std::max(worst, std::abs(neumann_loss(f, L).loss - oracle::neumann_loss(of, bc)));
    worst = std::max(worst, std::abs(dirichlet_boundary_loss(f, L) -
                                     oracle::dirichlet_loss(of, bc, masked ? &solid : nullptr)));
    const LossWeights w{1.0, 0.7, 3.0, 2.0, 5.0};
    const auto rep = composite_loss(f, bc, masked ? &mask : nullptr, 20.0, w);
    const double ref = oracle::composite_total(of, bc, masked ? &solid : nullptr, 20.0, 1.0, 0.7,
                                               3.0, 2.0, 5.0);
    worst = std::max(worst, std::abs(rep.total - ref) / std::max(1.0, std::abs(ref)));
  }
  return worst;
}

}  // namespace stencil_check
