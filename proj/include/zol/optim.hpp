#pragma once

#include <span>
#include <vector>

namespace zol::diff {

// Bias-corrected Adam over one flat parameter vector. step_count increments
// by exactly 1 per update.
struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  long step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(std::size_t dim)
      : first_moment(dim, 0.0), second_moment(dim, 0.0) {}
};

// In-place update of params; throws NumericError on non-finite gradients.
void adam_step(std::span<double> params, std::span<const double> grad,
               AdamState& state, double lr);

// grad * min(1, c / ||grad||_2); the zero vector passes through.
std::vector<double> clip_grad_norm(std::span<const double> grad, double c);
void clip_grad_norm_inplace(std::span<double> grad, double c);

}  // namespace zol::diff
