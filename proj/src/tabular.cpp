#include "zol/tabular.hpp"

#include <Eigen/Dense>

#include <cmath>

#include "zol/errors.hpp"

namespace zol::tab {

namespace {

constexpr double kRowSumTol = 1e-12;
constexpr double kSupportZero = 1e-15;

Eigen::MatrixXd policy_kernel(const TabularMDP& mdp, const TabularPolicy& policy) {
  const int n = mdp.n_pairs();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      const int row = mdp.pair(s, a);
      for (int s2 = 0; s2 < mdp.n_states; ++s2) {
        const double p = mdp.p(s, a, s2);
        if (p == 0.0) continue;
        for (int a2 = 0; a2 < mdp.n_actions; ++a2) {
          k(row, mdp.pair(s2, a2)) = p * policy.pi(s2, a2);
        }
      }
    }
  }
  return k;
}

// rho0 extended to state-action pairs with the supplied policy.
Eigen::VectorXd initial_pair_distribution(const TabularMDP& mdp,
                                          const TabularPolicy& policy) {
  Eigen::VectorXd v(mdp.n_pairs());
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      v(mdp.pair(s, a)) = mdp.rho0[s] * policy.pi(s, a);
    }
  }
  return v;
}

Eigen::MatrixXd successor_matrix(const TabularMDP& mdp, const TabularPolicy& policy) {
  const int n = mdp.n_pairs();
  const Eigen::MatrixXd system =
      Eigen::MatrixXd::Identity(n, n) - mdp.gamma * policy_kernel(mdp, policy);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
  Eigen::MatrixXd m = lu.solve(Eigen::MatrixXd::Identity(n, n));
  if (!m.allFinite()) {
    throw NumericError("successor measure solve produced non-finite values");
  }
  return m;
}

Eigen::VectorXd occupancy_vec(const TabularMDP& mdp, const TabularPolicy& policy) {
  const Eigen::MatrixXd m = successor_matrix(mdp, policy);
  const Eigen::VectorXd init = initial_pair_distribution(mdp, policy);
  return (1.0 - mdp.gamma) * (m.transpose() * init);
}

}  // namespace

void TabularMDP::validate() const {
  if (n_states <= 0 || n_actions <= 0) throw ShapeError("TabularMDP: empty state/action set");
  if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("TabularMDP: gamma must be in [0,1)");
  if (transitions.size() != static_cast<std::size_t>(n_states) * n_actions * n_states) {
    throw ShapeError("TabularMDP: transition tensor size");
  }
  if (rho0.size() != static_cast<std::size_t>(n_states)) {
    throw ShapeError("TabularMDP: rho0 size");
  }
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      double sum = 0.0;
      for (int s2 = 0; s2 < n_states; ++s2) {
        const double v = p(s, a, s2);
        if (v < 0.0) throw NumericError("TabularMDP: negative transition probability");
        sum += v;
      }
      if (std::abs(sum - 1.0) > kRowSumTol) {
        throw NumericError("TabularMDP: transition row does not sum to 1");
      }
    }
  }
  double sum = 0.0;
  for (double v : rho0) {
    if (v < 0.0) throw NumericError("TabularMDP: negative rho0 entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kRowSumTol) throw NumericError("TabularMDP: rho0 does not sum to 1");
}

void TabularPolicy::validate() const {
  if (probs.size() != static_cast<std::size_t>(n_states) * n_actions) {
    throw ShapeError("TabularPolicy: probs size");
  }
  for (int s = 0; s < n_states; ++s) {
    double sum = 0.0;
    for (int a = 0; a < n_actions; ++a) {
      const double v = pi(s, a);
      if (v < 0.0) throw NumericError("TabularPolicy: negative probability");
      sum += v;
    }
    if (std::abs(sum - 1.0) > kRowSumTol) {
      throw NumericError("TabularPolicy: row does not sum to 1");
    }
  }
}

void TabularReward::validate() const {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("TabularReward: non-finite entry");
  }
}

std::vector<double> successor_measure_exact(const TabularMDP& mdp,
                                            const TabularPolicy& policy) {
  mdp.validate();
  policy.validate();
  const Eigen::MatrixXd m = successor_matrix(mdp, policy);
  std::vector<double> out(static_cast<std::size_t>(m.rows()) * m.cols());
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i) * m.cols() + j] = m(i, j);
  }
  return out;
}

std::vector<double> occupancy_exact(const TabularMDP& mdp, const TabularPolicy& policy) {
  mdp.validate();
  policy.validate();
  const Eigen::VectorXd d = occupancy_vec(mdp, policy);
  return {d.data(), d.data() + d.size()};
}

std::vector<double> density_ratio_exact(const TabularMDP& mdp, const TabularPolicy& pi,
                                        const TabularPolicy& beta) {
  const std::vector<double> d_pi = occupancy_exact(mdp, pi);
  const std::vector<double> d_beta = occupancy_exact(mdp, beta);
  std::vector<double> w(d_pi.size(), 0.0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (std::abs(d_beta[i]) > kSupportZero) w[i] = d_pi[i] / d_beta[i];
  }
  return w;
}

double verify_ratio_identity(const TabularMDP& mdp, const TabularPolicy& pi,
                             const TabularPolicy& beta) {
  const std::vector<double> d_beta = occupancy_exact(mdp, beta);
  for (double v : d_beta) {
    if (v <= kSupportZero) {
      throw PreconditionError("verify_ratio_identity requires full-support d^beta");
    }
  }
  const std::vector<double> w = density_ratio_exact(mdp, pi, beta);
  const Eigen::MatrixXd m = successor_matrix(mdp, pi);
  const Eigen::VectorXd init = initial_pair_distribution(mdp, pi);
  const int n = mdp.n_pairs();
  double max_err = 0.0;
  for (int col = 0; col < n; ++col) {
    // columnwise successor density m^pi(., s,a) = M(., s,a) / d^beta(s,a)
    double expect = 0.0;
    for (int row = 0; row < n; ++row) {
      expect += init(row) * m(row, col) / d_beta[col];
    }
    const double rhs = (1.0 - mdp.gamma) * expect;
    max_err = std::max(max_err, std::abs(w[col] - rhs));
  }
  return max_err;
}

IdentityCheck check_centered_reweighting(const TabularMDP& mdp, const TabularPolicy& pi,
                                         const TabularPolicy& beta,
                                         const TabularReward& reward) {
  reward.validate();
  const std::vector<double> d_pi = occupancy_exact(mdp, pi);
  const std::vector<double> d_beta = occupancy_exact(mdp, beta);
  const std::vector<double> w = density_ratio_exact(mdp, pi, beta);
  double rbar = 0.0;
  for (std::size_t i = 0; i < d_beta.size(); ++i) rbar += d_beta[i] * reward.values[i];
  IdentityCheck out;
  for (std::size_t i = 0; i < d_beta.size(); ++i) {
    out.lhs += d_beta[i] * w[i] * (reward.values[i] - rbar);
    out.rhs += d_pi[i] * reward.values[i];
  }
  out.rhs -= rbar;
  out.gap = std::abs(out.lhs - out.rhs);
  return out;
}

IdentityCheck check_chi2_identity(const TabularMDP& mdp, const TabularPolicy& pi,
                                  const TabularPolicy& beta) {
  const std::vector<double> d_pi = occupancy_exact(mdp, pi);
  const std::vector<double> d_beta = occupancy_exact(mdp, beta);
  const std::vector<double> w = density_ratio_exact(mdp, pi, beta);
  IdentityCheck out;
  for (std::size_t i = 0; i < d_beta.size(); ++i) {
    out.lhs += d_beta[i] * (w[i] - 1.0) * (w[i] - 1.0);
    if (std::abs(d_beta[i]) > kSupportZero) {
      const double diff = d_pi[i] - d_beta[i];
      out.rhs += diff * diff / d_beta[i];
    }
  }
  out.gap = std::abs(out.lhs - out.rhs);
  return out;
}

std::vector<double> q_from_successor(const TabularMDP& mdp, const TabularPolicy& policy,
                                     const TabularReward& reward) {
  reward.validate();
  const Eigen::MatrixXd m = successor_matrix(mdp, policy);
  const int n = mdp.n_pairs();
  std::vector<double> q(n, 0.0);
  for (int row = 0; row < n; ++row) {
    double acc = 0.0;
    for (int col = 0; col < n; ++col) acc += m(row, col) * reward.values[col];
    q[row] = acc;
  }
  return q;
}

std::vector<double> q_policy_evaluation(const TabularMDP& mdp, const TabularPolicy& policy,
                                        const TabularReward& reward, int sweeps) {
  const int n = mdp.n_pairs();
  std::vector<double> q(n, 0.0), next(n, 0.0);
  for (int it = 0; it < sweeps; ++it) {
    for (int s = 0; s < mdp.n_states; ++s) {
      for (int a = 0; a < mdp.n_actions; ++a) {
        double boot = 0.0;
        for (int s2 = 0; s2 < mdp.n_states; ++s2) {
          const double p = mdp.p(s, a, s2);
          if (p == 0.0) continue;
          double v = 0.0;
          for (int a2 = 0; a2 < mdp.n_actions; ++a2) {
            v += policy.pi(s2, a2) * q[mdp.pair(s2, a2)];
          }
          boot += p * v;
        }
        next[mdp.pair(s, a)] = reward.r(s, a, mdp.n_actions) + mdp.gamma * boot;
      }
    }
    q.swap(next);
  }
  return q;
}

TabularPolicy behavior_supported_policy(const TabularMDP& mdp, const TabularPolicy& beta,
                                        const std::vector<double>& w_logits) {
  beta.validate();
  if (w_logits.size() != static_cast<std::size_t>(mdp.n_pairs())) {
    throw ShapeError("behavior_supported_policy: logits size");
  }
  for (double v : w_logits) {
    if (!std::isfinite(v)) throw NumericError("behavior_supported_policy: non-finite logit");
  }
  TabularPolicy pi;
  pi.n_states = mdp.n_states;
  pi.n_actions = mdp.n_actions;
  pi.probs.assign(w_logits.size(), 0.0);
  for (int s = 0; s < mdp.n_states; ++s) {
    double norm = 0.0;
    for (int a = 0; a < mdp.n_actions; ++a) {
      const double num = std::max(w_logits[mdp.pair(s, a)], 0.0) * beta.pi(s, a);
      pi.probs[mdp.pair(s, a)] = num;
      norm += num;
    }
    if (norm > 0.0) {
      for (int a = 0; a < mdp.n_actions; ++a) pi.probs[mdp.pair(s, a)] /= norm;
    } else {
      for (int a = 0; a < mdp.n_actions; ++a) pi.probs[mdp.pair(s, a)] = beta.pi(s, a);
    }
  }
  return pi;
}

TabularMDP random_mdp(int n_states, int n_actions, double gamma, Rng& rng) {
  TabularMDP mdp;
  mdp.n_states = n_states;
  mdp.n_actions = n_actions;
  mdp.gamma = gamma;
  mdp.transitions.resize(static_cast<std::size_t>(n_states) * n_actions * n_states);
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      double sum = 0.0;
      const std::size_t base = (static_cast<std::size_t>(s) * n_actions + a) * n_states;
      for (int s2 = 0; s2 < n_states; ++s2) {
        const double v = 0.05 + rng.uniform();
        mdp.transitions[base + s2] = v;
        sum += v;
      }
      for (int s2 = 0; s2 < n_states; ++s2) mdp.transitions[base + s2] /= sum;
    }
  }
  mdp.rho0.resize(n_states);
  double sum = 0.0;
  for (int s = 0; s < n_states; ++s) {
    mdp.rho0[s] = 0.05 + rng.uniform();
    sum += mdp.rho0[s];
  }
  for (double& v : mdp.rho0) v /= sum;
  return mdp;
}

TabularPolicy random_policy(int n_states, int n_actions, Rng& rng, double min_prob) {
  TabularPolicy pi;
  pi.n_states = n_states;
  pi.n_actions = n_actions;
  pi.probs.resize(static_cast<std::size_t>(n_states) * n_actions);
  for (int s = 0; s < n_states; ++s) {
    double sum = 0.0;
    for (int a = 0; a < n_actions; ++a) {
      const double v = min_prob + rng.uniform();
      pi.probs[static_cast<std::size_t>(s) * n_actions + a] = v;
      sum += v;
    }
    for (int a = 0; a < n_actions; ++a) {
      pi.probs[static_cast<std::size_t>(s) * n_actions + a] /= sum;
    }
  }
  return pi;
}

TabularReward random_reward(int n_states, int n_actions, Rng& rng) {
  TabularReward r;
  r.values.resize(static_cast<std::size_t>(n_states) * n_actions);
  for (double& v : r.values) v = rng.uniform(-1.0, 1.0);
  return r;
}

}  // namespace zol::tab
