#include "zol/optim.hpp"

#include <cmath>

#include "zol/errors.hpp"

namespace zol::diff {

void adam_step(std::span<double> params, std::span<const double> grad,
               AdamState& state, double lr) {
  if (params.size() != grad.size() || params.size() != state.first_moment.size()) {
    throw ShapeError("adam_step: dimension mismatch");
  }
  for (double g : grad) {
    if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient");
  }
  state.step_count += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = b1 * m + (1.0 - b1) * grad[i];
    v = b2 * v + (1.0 - b2) * grad[i] * grad[i];
    const double mhat = m / bc1;
    const double vhat = v / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

void clip_grad_norm_inplace(std::span<double> grad, double c) {
  double s = 0.0;
  for (double g : grad) s += g * g;
  const double norm = std::sqrt(s);
  if (norm <= c || norm == 0.0) return;
  const double k = c / norm;
  for (double& g : grad) g *= k;
}

std::vector<double> clip_grad_norm(std::span<const double> grad, double c) {
  std::vector<double> out(grad.begin(), grad.end());
  clip_grad_norm_inplace(out, c);
  return out;
}

}  // namespace zol::diff
