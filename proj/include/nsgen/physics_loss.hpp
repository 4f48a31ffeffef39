#pragma once

// Stencil residuals of the steady incompressible Navier-Stokes equations and
// the composite weak-supervision objective
//
//   total = (1/N_I) sum_n R_n^2 + lambda_N L_neumann + lambda_b L_boundary,
//   R_n   = lambda_1 |Rx| + lambda_2 |Ry| + lambda_3 |Rc|   (per interior node)
//
// All stencils are "valid" (no padding): interior-sized outputs of shape
// (ny - 2) x (nx - 2), with output (j, i) sitting on node (j + 1, i + 1).
// Every routine is templated on the scalar so the same code runs in f32 for
// training and f64 for gradient checks.

#include "nsgen/grid.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace nsgen {

struct NonFiniteLoss : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LossWeights {
  double lambda_1 = 1.0;
  double lambda_2 = 1.0;
  double lambda_3 = 1.0;
  double lambda_N = 1.0;
  double lambda_b = 1.0;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

/// How the three sub-residuals are combined per node.
enum class ResidualMode {
  weighted_abs_sum,  // (l1|Rx| + l2|Ry| + l3|Rc|)^2
  sum_of_squares,    // (l1 Rx)^2 + (l2 Ry)^2 + (l3 Rc)^2, for ablations
};

/// 5-point Laplacian kernel [[0,1,0],[1,-4,1],[0,1,0]] applied as a valid
/// cross-correlation. Division by h^2 is left to the caller.
template <typename Derived>
Grid2D<typename Derived::Scalar> laplacian_conv(const Eigen::ArrayBase<Derived>& a) {
  const Eigen::Index m = a.rows() - 2;
  const Eigen::Index n = a.cols() - 2;
  if (m < 1 || n < 1) throw ShapeError("laplacian_conv needs at least 3x3 input");
  return a.block(0, 1, m, n) + a.block(2, 1, m, n) + a.block(1, 0, m, n) + a.block(1, 2, m, n) -
         4 * a.block(1, 1, m, n);
}

/// Half central difference along x: (a[j, i+1] - a[j, i-1]) / 2.
template <typename Derived>
Grid2D<typename Derived::Scalar> half_diff_x(const Eigen::ArrayBase<Derived>& a) {
  const Eigen::Index m = a.rows() - 2;
  const Eigen::Index n = a.cols() - 2;
  using S = typename Derived::Scalar;
  return S(0.5) * (a.block(1, 2, m, n) - a.block(1, 0, m, n));
}

/// Half central difference along y: (a[j+1, i] - a[j-1, i]) / 2.
template <typename Derived>
Grid2D<typename Derived::Scalar> half_diff_y(const Eigen::ArrayBase<Derived>& a) {
  const Eigen::Index m = a.rows() - 2;
  const Eigen::Index n = a.cols() - 2;
  using S = typename Derived::Scalar;
  return S(0.5) * (a.block(2, 1, m, n) - a.block(0, 1, m, n));
}

template <typename Derived>
Grid2D<typename Derived::Scalar> interior(const Eigen::ArrayBase<Derived>& a) {
  return a.block(1, 1, a.rows() - 2, a.cols() - 2);
}

template <typename Scalar>
struct HalfDiffs {
  Grid2D<Scalar> u_x, u_y, v_x, v_y, p_x, p_y;
};

template <typename Scalar>
HalfDiffs<Scalar> central_diffs(const FlowField<Scalar>& f) {
  if (f.u.rows() < 3 || f.u.cols() < 3) throw ShapeError("central_diffs needs at least 3x3");
  return {half_diff_x(f.u), half_diff_y(f.u), half_diff_x(f.v),
          half_diff_y(f.v), half_diff_x(f.p), half_diff_y(f.p)};
}

template <typename Scalar>
struct MomentumResiduals {
  Grid2D<Scalar> x;
  Grid2D<Scalar> y;
};

/// Steady momentum residuals, zero at a steady solution:
///   Rx = lap(u)/(Re h^2) - (u u_x + v u_y)/h - p_x/h
///   Ry = lap(v)/(Re h^2) - (u v_x + v v_y)/h - p_y/h
/// with half differences, so u_x / h approximates du/dx.
template <typename Scalar>
MomentumResiduals<Scalar> momentum_residuals(const FlowField<Scalar>& f, double Re, double h) {
  if (!(Re > 0.0)) throw std::invalid_argument("Re must be positive");
  const auto d = central_diffs(f);
  const Scalar visc = static_cast<Scalar>(1.0 / (Re * h * h));
  const Scalar inv_h = static_cast<Scalar>(1.0 / h);
  const Grid2D<Scalar> uc = interior(f.u);
  const Grid2D<Scalar> vc = interior(f.v);
  MomentumResiduals<Scalar> r;
  r.x = visc * laplacian_conv(f.u) - inv_h * (uc * d.u_x + vc * d.u_y) - inv_h * d.p_x;
  r.y = visc * laplacian_conv(f.v) - inv_h * (uc * d.v_x + vc * d.v_y) - inv_h * d.p_y;
  return r;
}

template <typename Scalar>
MomentumResiduals<Scalar> momentum_residuals(const FlowField<Scalar>& f, double Re) {
  return momentum_residuals(f, Re, f.grid.h);
}

/// Pressure-Poisson residual scaled by h^2, with half differences:
///   Rc = lap(p)/4 + u_x^2 + 2 u_y v_x + v_y^2
template <typename Scalar>
Grid2D<Scalar> continuity_residual(const FlowField<Scalar>& f) {
  const auto d = central_diffs(f);
  return Scalar(0.25) * laplacian_conv(f.p) + d.u_x * d.u_x + Scalar(2) * d.u_y * d.v_x +
         d.v_y * d.v_y;
}

/// Interior nodes taking part in the residual: fluid nodes whose 3x3 stencil
/// holds no solid node. Interior-sized.
Mask2D interior_fluid_mask(const Mask2D& solid);

template <typename Scalar>
struct NeumannResult {
  Scalar loss = 0;
  int n_nodes = 0;
  bool empty = false;  // no zero-gradient nodes; loss reported as 0
};

/// Mean over the zero-gradient ring nodes of the squared difference between
/// each node and its inward neighbour, summed over flagged channels.
template <typename Scalar>
NeumannResult<Scalar> neumann_loss(const FlowField<Scalar>& f, const BoundaryLayout& L,
                                   FlowField<Scalar>* grad = nullptr, Scalar scale = 1) {
  NeumannResult<Scalar> r;
  r.n_nodes = L.n_neumann_nodes;
  if (r.n_nodes == 0) {
    r.empty = true;
    return r;
  }
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(r.n_nodes);
  const int ny = f.grid.ny;
  const int nx = f.grid.nx;
  for (Var var : kAllVars) {
    const int c = static_cast<int>(var);
    const auto& a = f[var];
    auto visit = [&](int j, int i) {
      if (!L.neumann[c](j, i)) return;
      const int jn = j + L.inward_dj(j, i);
      const int in = i + L.inward_di(j, i);
      const Scalar diff = a(j, i) - a(jn, in);
      r.loss += diff * diff * inv_n;
      if (grad) {
        const Scalar g = scale * Scalar(2) * diff * inv_n;
        (*grad)[var](j, i) += g;
        (*grad)[var](jn, in) -= g;
      }
    };
    for (int i = 0; i < nx; ++i) {
      visit(0, i);
      visit(ny - 1, i);
    }
    for (int j = 1; j < ny - 1; ++j) {
      visit(j, 0);
      visit(j, nx - 1);
    }
  }
  return r;
}

/// Mean over prescribed nodes (outer ring and solid nodes) of the squared
/// error against the prescribed values, summed over prescribed channels.
template <typename Scalar>
Scalar dirichlet_boundary_loss(const FlowField<Scalar>& f, const BoundaryLayout& L,
                               FlowField<Scalar>* grad = nullptr, Scalar scale = 1) {
  if (L.n_dirichlet_nodes == 0) return Scalar(0);
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(L.n_dirichlet_nodes);
  Scalar loss = 0;
  for (Var var : kAllVars) {
    const int c = static_cast<int>(var);
    const auto& a = f[var];
    for (int j = 0; j < f.grid.ny; ++j) {
      for (int i = 0; i < f.grid.nx; ++i) {
        if (!L.dirichlet[c](j, i)) continue;
        const Scalar diff = a(j, i) - static_cast<Scalar>(L.values[c](j, i));
        loss += diff * diff * inv_n;
        if (grad) (*grad)[var](j, i) += scale * Scalar(2) * diff * inv_n;
      }
    }
  }
  return loss;
}

struct ResidualReport {
  double loss_x = 0;         // mean Rx^2 over N_I
  double loss_y = 0;         // mean Ry^2
  double loss_c = 0;         // mean Rc^2
  double mean_abs_x = 0;     // mean |Rx|, used for magnitude balancing
  double mean_abs_y = 0;
  double mean_abs_c = 0;
  double loss_residual = 0;  // (1/N_I) sum R^2
  double loss_neumann = 0;
  double loss_boundary = 0;
  double total = 0;
  int n_interior = 0;
  int n_boundary = 0;
  int n_neumann = 0;
  bool neumann_empty = false;
};

/// Everything the objective needs besides the generated field.
struct LossContext {
  BoundaryLayout layout;
  Mask2D interior_mask;  // interior-sized
  double reynolds = 20.0;
  double h = 1.0;
  LossWeights weights;
  ResidualMode mode = ResidualMode::weighted_abs_sum;

  static LossContext make(const BoundarySpec& bc, const GridSpec& grid,
                          const GeometryMask* mask, const LossWeights& w,
                          ResidualMode mode = ResidualMode::weighted_abs_sum);
  /// Same as make() with Re taken explicitly instead of from bc.
  static LossContext make(const BoundarySpec& bc, const GridSpec& grid,
                          const GeometryMask* mask, double Re, const LossWeights& w,
                          ResidualMode mode = ResidualMode::weighted_abs_sum);
};

namespace detail {

template <typename Scalar>
void scatter_laplacian(Grid2D<Scalar>& g, const Grid2D<Scalar>& up) {
  const Eigen::Index m = up.rows();
  const Eigen::Index n = up.cols();
  g.block(0, 1, m, n) += up;
  g.block(2, 1, m, n) += up;
  g.block(1, 0, m, n) += up;
  g.block(1, 2, m, n) += up;
  g.block(1, 1, m, n) -= 4 * up;
}

// Adjoint of half_diff_x / half_diff_y for an interior-sized upstream array.
template <typename Scalar>
void scatter_half_x(Grid2D<Scalar>& g, const Grid2D<Scalar>& up) {
  const Eigen::Index m = up.rows();
  const Eigen::Index n = up.cols();
  g.block(1, 2, m, n) += Scalar(0.5) * up;
  g.block(1, 0, m, n) -= Scalar(0.5) * up;
}

template <typename Scalar>
void scatter_half_y(Grid2D<Scalar>& g, const Grid2D<Scalar>& up) {
  const Eigen::Index m = up.rows();
  const Eigen::Index n = up.cols();
  g.block(2, 1, m, n) += Scalar(0.5) * up;
  g.block(0, 1, m, n) -= Scalar(0.5) * up;
}

inline void check_finite(double x, const char* term) {
  if (!std::isfinite(x)) throw NonFiniteLoss(std::string("non-finite loss term: ") + term);
}

}  // namespace detail

/// Evaluate the objective. The residual and Neumann terms read
/// `physics_field`; the Dirichlet term reads `boundary_field`, which lets
/// callers measure the boundary loss on the raw network output while the
/// residual sees the field with known boundary values written back. Passing
/// gradient sinks accumulates d(total)/d(field) into them.
template <typename Scalar>
ResidualReport evaluate_loss(const LossContext& ctx, const FlowField<Scalar>& physics_field,
                             const FlowField<Scalar>& boundary_field,
                             FlowField<Scalar>* grad_physics = nullptr,
                             FlowField<Scalar>* grad_boundary = nullptr) {
  using G = Grid2D<Scalar>;
  const auto& f = physics_field;
  const auto& w = ctx.weights;
  ResidualReport rep;

  const auto mom = momentum_residuals(f, ctx.reynolds, ctx.h);
  const G rc = continuity_residual(f);
  const G in = ctx.interior_mask.template cast<Scalar>();
  const int n_int = static_cast<int>(ctx.interior_mask.template cast<int>().sum());
  rep.n_interior = n_int;
  rep.n_boundary = ctx.layout.n_dirichlet_nodes;
  rep.n_neumann = ctx.layout.n_neumann_nodes;

  const Scalar l1 = static_cast<Scalar>(w.lambda_1);
  const Scalar l2 = static_cast<Scalar>(w.lambda_2);
  const Scalar l3 = static_cast<Scalar>(w.lambda_3);

  G resid_sq;
  G R;
  if (ctx.mode == ResidualMode::weighted_abs_sum) {
    R = l1 * mom.x.abs() + l2 * mom.y.abs() + l3 * rc.abs();
    resid_sq = R.square();
  } else {
    resid_sq = (l1 * mom.x).square() + (l2 * mom.y).square() + (l3 * rc).square();
  }
  if (n_int > 0) {
    const double inv = 1.0 / n_int;
    rep.loss_x = static_cast<double>((mom.x.square() * in).sum()) * inv;
    rep.loss_y = static_cast<double>((mom.y.square() * in).sum()) * inv;
    rep.loss_c = static_cast<double>((rc.square() * in).sum()) * inv;
    rep.mean_abs_x = static_cast<double>((mom.x.abs() * in).sum()) * inv;
    rep.mean_abs_y = static_cast<double>((mom.y.abs() * in).sum()) * inv;
    rep.mean_abs_c = static_cast<double>((rc.abs() * in).sum()) * inv;
    rep.loss_residual = static_cast<double>((resid_sq * in).sum()) * inv;
  }
  detail::check_finite(rep.loss_x, "x-momentum");
  detail::check_finite(rep.loss_y, "y-momentum");
  detail::check_finite(rep.loss_c, "continuity");

  const auto neu = neumann_loss(f, ctx.layout, grad_physics, static_cast<Scalar>(w.lambda_N));
  rep.loss_neumann = static_cast<double>(neu.loss);
  rep.neumann_empty = neu.empty;
  detail::check_finite(rep.loss_neumann, "neumann");

  rep.loss_boundary = static_cast<double>(dirichlet_boundary_loss(
      boundary_field, ctx.layout, grad_boundary, static_cast<Scalar>(w.lambda_b)));
  detail::check_finite(rep.loss_boundary, "boundary");

  rep.total = rep.loss_residual + w.lambda_N * rep.loss_neumann + w.lambda_b * rep.loss_boundary;
  detail::check_finite(rep.total, "total");

  if (grad_physics && n_int > 0) {
    const Scalar inv = Scalar(1) / static_cast<Scalar>(n_int);
    G gx, gy, gc;
    if (ctx.mode == ResidualMode::weighted_abs_sum) {
      const G dR = Scalar(2) * R * in * inv;
      gx = l1 * mom.x.sign() * dR;
      gy = l2 * mom.y.sign() * dR;
      gc = l3 * rc.sign() * dR;
    } else {
      gx = Scalar(2) * l1 * l1 * mom.x * in * inv;
      gy = Scalar(2) * l2 * l2 * mom.y * in * inv;
      gc = Scalar(2) * l3 * l3 * rc * in * inv;
    }
    const Scalar visc = static_cast<Scalar>(1.0 / (ctx.reynolds * ctx.h * ctx.h));
    const Scalar inv_h = static_cast<Scalar>(1.0 / ctx.h);
    const auto d = central_diffs(f);
    const G uc = interior(f.u);
    const G vc = interior(f.v);
    G& gu = grad_physics->u;
    G& gv = grad_physics->v;
    G& gp = grad_physics->p;
    const Eigen::Index m = gx.rows();
    const Eigen::Index n = gx.cols();

    // x-momentum
    detail::scatter_laplacian<Scalar>(gu, visc * gx);
    gu.block(1, 1, m, n) -= inv_h * d.u_x * gx;
    gv.block(1, 1, m, n) -= inv_h * d.u_y * gx;
    detail::scatter_half_x<Scalar>(gu, -inv_h * uc * gx);
    detail::scatter_half_y<Scalar>(gu, -inv_h * vc * gx);
    detail::scatter_half_x<Scalar>(gp, -inv_h * gx);
    // y-momentum
    detail::scatter_laplacian<Scalar>(gv, visc * gy);
    gu.block(1, 1, m, n) -= inv_h * d.v_x * gy;
    gv.block(1, 1, m, n) -= inv_h * d.v_y * gy;
    detail::scatter_half_x<Scalar>(gv, -inv_h * uc * gy);
    detail::scatter_half_y<Scalar>(gv, -inv_h * vc * gy);
    detail::scatter_half_y<Scalar>(gp, -inv_h * gy);
    // continuity
    detail::scatter_laplacian<Scalar>(gp, Scalar(0.25) * gc);
    detail::scatter_half_x<Scalar>(gu, Scalar(2) * d.u_x * gc);
    detail::scatter_half_y<Scalar>(gu, Scalar(2) * d.v_x * gc);
    detail::scatter_half_x<Scalar>(gv, Scalar(2) * d.u_y * gc);
    detail::scatter_half_y<Scalar>(gv, Scalar(2) * d.v_y * gc);
  }
  return rep;
}

/// Composite objective of a field against its own boundary conditions.
template <typename Scalar>
ResidualReport composite_loss(const FlowField<Scalar>& field, const BoundarySpec& bc,
                              const GeometryMask* mask, double Re, const LossWeights& w,
                              ResidualMode mode = ResidualMode::weighted_abs_sum) {
  if (!field.all_finite()) throw NonFiniteLoss("non-finite values in generated field");
  const auto ctx = LossContext::make(bc, field.grid, mask, Re, w, mode);
  return evaluate_loss(ctx, field, field);
}

/// Magnitude balancing: multipliers that bring every sub-term of a reference
/// report to the magnitude of the x-momentum term. Zero terms keep weight 1.
LossWeights balance_weights(const ResidualReport& reference);

}  // namespace nsgen
