#pragma once

// Finite-difference oracle used by the gradient tests: central differences of
// a rebuilt-forward-only evaluation, independent of the reverse pass.

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "zol/graph.hpp"

namespace zol::testutil {

using ExprBuilder = std::function<int(diff::Graph&, int param_node)>;

inline double eval_expr(const ExprBuilder& build, std::span<const double> x) {
  diff::Graph g;
  std::vector<double> gbuf(x.size(), 0.0);
  const int p = g.param(x, gbuf);
  return g.value(build(g, p));
}

inline std::vector<double> analytic_grad(const ExprBuilder& build,
                                         std::span<const double> x) {
  diff::Graph g;
  std::vector<double> gbuf(x.size(), 0.0);
  const int p = g.param(x, gbuf);
  const int out = build(g, p);
  g.backward(out);
  return gbuf;
}

inline std::vector<double> fd_grad(const ExprBuilder& build, std::span<const double> x,
                                   double h = 1e-5) {
  std::vector<double> grad(x.size());
  std::vector<double> xp(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = xp[i];
    xp[i] = orig + h;
    const double fp = eval_expr(build, xp);
    xp[i] = orig - h;
    const double fm = eval_expr(build, xp);
    xp[i] = orig;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

inline double max_rel_error(std::span<const double> got, std::span<const double> want) {
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double scale = std::max({std::abs(got[i]), std::abs(want[i]), 1.0});
    worst = std::max(worst, std::abs(got[i] - want[i]) / scale);
  }
  return worst;
}

}  // namespace zol::testutil
