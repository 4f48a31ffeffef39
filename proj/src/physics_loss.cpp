#include "nsgen/physics_loss.hpp"

namespace nsgen {

void LossWeights::validate() const {
  for (double l : {lambda_1, lambda_2, lambda_3, lambda_N, lambda_b}) {
    if (!std::isfinite(l) || l < 0.0)
      throw std::invalid_argument("loss multipliers must be finite and non-negative");
  }
  if (lambda_1 + lambda_2 + lambda_3 <= 0.0)
    throw std::invalid_argument("at least one residual multiplier must be positive");
  if (lambda_b <= 0.0) throw std::invalid_argument("boundary multiplier must be positive");
}

Mask2D interior_fluid_mask(const Mask2D& solid) {
  const Eigen::Index m = solid.rows() - 2;
  const Eigen::Index n = solid.cols() - 2;
  Mask2D out = Mask2D::Ones(m, n);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < n; ++i)
      if (solid.block(j, i, 3, 3).template cast<int>().sum() > 0) out(j, i) = 0;
  return out;
}

LossContext LossContext::make(const BoundarySpec& bc, const GridSpec& grid,
                              const GeometryMask* mask, const LossWeights& w, ResidualMode mode) {
  return make(bc, grid, mask, bc.loss_reynolds(), w, mode);
}

LossContext LossContext::make(const BoundarySpec& bc, const GridSpec& grid,
                              const GeometryMask* mask, double Re, const LossWeights& w,
                              ResidualMode mode) {
  w.validate();
  if (!(Re > 0.0)) throw std::invalid_argument("Re must be positive");
  LossContext ctx;
  ctx.layout = make_layout(bc, grid, mask);
  ctx.interior_mask = interior_fluid_mask(ctx.layout.solid);
  ctx.reynolds = Re;
  ctx.h = grid.h;
  ctx.weights = w;
  ctx.mode = mode;
  return ctx;
}

LossWeights balance_weights(const ResidualReport& ref) {
  auto ratio = [](double num, double den) {
    return (num > 0.0 && den > 0.0 && std::isfinite(num / den)) ? num / den : 1.0;
  };
  LossWeights w;
  w.lambda_1 = 1.0;
  w.lambda_2 = ratio(ref.mean_abs_x, ref.mean_abs_y);
  w.lambda_3 = ratio(ref.mean_abs_x, ref.mean_abs_c);
  w.lambda_N = ref.neumann_empty ? 1.0 : ratio(ref.loss_x, ref.loss_neumann);
  w.lambda_b = ratio(ref.loss_x, ref.loss_boundary);
  return w;
}

}  // namespace nsgen
