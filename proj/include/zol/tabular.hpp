#pragma once

#include <vector>

#include "zol/rng.hpp"

namespace zol::tab {

// Finite MDP with an explicit transition tensor. Ground truth for the exact
// successor-measure and density-ratio identities; state-action pairs are
// flattened as s * n_actions + a throughout.
struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> transitions;  // P[s][a][s'], flattened
  double gamma = 0.0;
  std::vector<double> rho0;  // initial distribution over states

  double p(int s, int a, int s_next) const {
    return transitions[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s_next];
  }
  int n_pairs() const { return n_states * n_actions; }
  int pair(int s, int a) const { return s * n_actions + a; }
  void validate() const;  // rows sum to 1, rho0 sums to 1, gamma in [0,1)
};

struct TabularPolicy {
  int n_states = 0;
  int n_actions = 0;
  std::vector<double> probs;  // pi[s][a]

  double pi(int s, int a) const {
    return probs[static_cast<std::size_t>(s) * n_actions + a];
  }
  void validate() const;
};

struct TabularReward {
  std::vector<double> values;  // r[s][a]

  double r(int s, int a, int n_actions) const {
    return values[static_cast<std::size_t>(s) * n_actions + a];
  }
  void validate() const;
};

struct IdentityCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double gap = 0.0;
};

// M = (I - gamma * P^pi)^-1 over state-action pairs, dense LU solve.
// Satisfies M = I + gamma * P^pi * M.
std::vector<double> successor_measure_exact(const TabularMDP& mdp,
                                            const TabularPolicy& policy);

// d(s,a) = (1-gamma) * sum_{(s0,a0)} rho0(s0) pi(a0|s0) M[(s0,a0),(s,a)].
// A probability distribution over pairs.
std::vector<double> occupancy_exact(const TabularMDP& mdp, const TabularPolicy& policy);

// w = d^pi / d^beta elementwise; 0 where d^beta vanishes.
std::vector<double> density_ratio_exact(const TabularMDP& mdp, const TabularPolicy& pi,
                                        const TabularPolicy& beta);

// max over (s,a) of |w_exact - (1-gamma) E_rho0[m^pi(s0,a0,s,a)]| with
// m^pi = M^pi / d^beta columnwise. Requires full-support d^beta.
double verify_ratio_identity(const TabularMDP& mdp, const TabularPolicy& pi,
                             const TabularPolicy& beta);

// lhs = E_{d^beta}[w (r - rbar_beta)], rhs = E_{d^pi}[r] - rbar_beta.
IdentityCheck check_centered_reweighting(const TabularMDP& mdp, const TabularPolicy& pi,
                                         const TabularPolicy& beta,
                                         const TabularReward& reward);

// lhs = E_{d^beta}[(w-1)^2], rhs = sum (d^pi - d^beta)^2 / d^beta.
IdentityCheck check_chi2_identity(const TabularMDP& mdp, const TabularPolicy& pi,
                                  const TabularPolicy& beta);

// Q(s0,a0) = sum_{(s,a)} M[(s0,a0),(s,a)] r(s,a).
std::vector<double> q_from_successor(const TabularMDP& mdp, const TabularPolicy& policy,
                                     const TabularReward& reward);

// Independent route: iterative policy evaluation, `sweeps` synchronous
// backups from Q = 0.
std::vector<double> q_policy_evaluation(const TabularMDP& mdp, const TabularPolicy& policy,
                                        const TabularReward& reward, int sweeps);

// pi(a|s) proportional to max(w_logits(s,a), 0) * beta(a|s); rows whose
// numerator vanishes everywhere fall back to beta(.|s).
TabularPolicy behavior_supported_policy(const TabularMDP& mdp, const TabularPolicy& beta,
                                        const std::vector<double>& w_logits);

// Random instances for the verification suites.
TabularMDP random_mdp(int n_states, int n_actions, double gamma, Rng& rng);
TabularPolicy random_policy(int n_states, int n_actions, Rng& rng, double min_prob = 0.0);
TabularReward random_reward(int n_states, int n_actions, Rng& rng);

}  // namespace zol::tab
