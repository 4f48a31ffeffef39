#pragma once

// Central finite differences of the batch objective against backprop.

#include "nsgen/data.hpp"
#include "nsgen/training.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace gradcheck {

struct Result {
  long checked = 0;
  double worst_rel = 0.0;
  std::string worst_name;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct Problem {
  std::vector<nsgen::InputTensor> inputs;
  std::vector<nsgen::LossContext> contexts;
  std::vector<const nsgen::InputTensor*> in;
  std::vector<const nsgen::LossContext*> cx;
};

inline Problem cavity_batch(int a, int count, nsgen::ResidualMode mode) {
  Problem p;
  const nsgen::BoundarySpec specs[] = {nsgen::cavity_bc(0.5), nsgen::cavity_bc(0.2, 0.25, 0.5),
                                       nsgen::cavity_bc(0.35), nsgen::cavity_bc(0.1, 0.0, 0.6)};
  for (int k = 0; k < count; ++k) p.inputs.push_back(nsgen::make_input(nsgen::kPrerun, specs[k], {}, a, 3));
  for (const auto& i : p.inputs) p.contexts.push_back(nsgen::make_context(i, nsgen::LossWeights{}, mode));
  for (std::size_t k = 0; k < p.inputs.size(); ++k) {
    p.in.push_back(&p.inputs[k]);
    p.cx.push_back(&p.contexts[k]);
  }
  return p;
}

// Relative error |a - n| / max(|a|, |n|, floor); `abs_tol` marks entries
// whose absolute error is below round-off of the objective as matching.
inline Result run(const nsgen::UNet<double>& model, const Problem& prob, nsgen::Mode mode, double eps,
                  double floor = 1e-12, double abs_tol = 0.0) {
  nsgen::UNet<double> base = model;
  base.zero_grad();
  nsgen::batch_objective(base, prob.in, prob.cx, mode, true);
  const auto analytic = base.params();
  Result r;
  for (std::size_t t = 0; t < analytic.size(); ++t) {
    if (!analytic[t].trainable()) continue;
    for (Eigen::Index k = 0; k < analytic[t].size(); ++k) {
      auto eval = [&](double delta) {
        nsgen::UNet<double> m = model;
        auto ps = m.params();
        ps[t].data[k] += delta;
        return nsgen::batch_objective(m, prob.in, prob.cx, mode, false).total;
      };
      const double num = (eval(eps) - eval(-eps)) / (2 * eps);
      const double an = analytic[t].grad[k];
      const double err = std::abs(num - an);
      const double rel = err <= abs_tol ? 0.0 : err / std::max({std::abs(num), std::abs(an), floor});
      ++r.checked;
      if (rel > r.worst_rel) {
        r.worst_rel = rel;
        r.worst_name = analytic[t].name + "[" + std::to_string(k) + "]";
        r.worst_analytic = an;
        r.worst_numeric = num;
      }
    }
  }
  return r;
}

}  // namespace gradcheck
