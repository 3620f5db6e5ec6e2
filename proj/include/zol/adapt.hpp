#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "zol/dataset.hpp"
#include "zol/fb.hpp"
#include "zol/graph.hpp"

namespace zol::adapt {

struct ZolParams {
  double lr = 5e-4;            // eta
  long steps = 200;            // T
  double lambda_chi = 0.001;   // chi^2 penalty coefficient
  double lambda_trust = 0.02;  // latent trust-region coefficient
  double weight_clip = 100.0;  // w_max
  int reset_samples = 256;     // N cached start states
  int batch_size = 1024;
  double norm_eps = 1e-6;      // self-normalization epsilon
  double grad_clip = 10.0;
  std::uint64_t seed = 0;
  bool center_rewards_globally = false;  // batch-mean centering otherwise
  int infer_samples = 4096;              // labeled states for zero-shot inference

  void validate() const;
};

// Raw task embedding c_T = mean_i B(s_i[, a_i]) * r_i. `actions` must be
// provided exactly when the model's backward map takes state-action pairs.
std::vector<double> task_embedding(const fb::FBModel& model,
                                   std::span<const std::vector<double>> states,
                                   std::span<const int> actions,
                                   std::span<const double> rewards);

struct InferResult {
  std::vector<double> z;          // projected latent
  std::vector<double> embedding;  // raw c_T
  bool used_fallback = false;     // c_T was zero; z is a seeded sphere sample
};

InferResult infer_task_latent(const fb::FBModel& model,
                              std::span<const std::vector<double>> states,
                              std::span<const int> actions,
                              std::span<const double> rewards,
                              std::uint64_t fallback_seed = 0);

struct ForwardExpectation {
  std::vector<double> mu;
  std::vector<std::vector<double>> reset_states;
};

// mu_hat = mean_j F(s0_j, act_greedy(s0_j, z), z) over the cached states.
ForwardExpectation estimate_forward_expectation(const fb::FBModel& model,
                                                std::span<const std::vector<double>> reset_states,
                                                std::span<const double> z);

struct RatioWeights {
  std::vector<double> weights;  // shaped, self-normalized, clipped
  std::vector<double> logits;   // (1-gamma) B(s)^T mu
};

RatioWeights ratio_weights(const fb::FBModel& model, std::span<const double> mu,
                           std::span<const std::vector<double>> batch_states,
                           const ZolParams& params);

struct ZolDiagnostics {
  double j_ret = 0.0;
  double chi2 = 0.0;
  double trust = 0.0;
  double total = 0.0;
  double w_min = 0.0;
  double w_mean = 0.0;
  double w_max = 0.0;
};

// Builds L = -J + lambda_chi * chi2 + lambda_trust * trust on the tape,
// differentiable w.r.t. the z parameter node. Greedy reset actions are
// recomputed from the current z but held fixed during differentiation;
// passing `reset_actions` pins them instead (the objective is only piecewise
// smooth across argmax flips). `fixed_reward_mean` overrides the per-batch
// centering mean when non-null.
int zol_objective(diff::Graph& g, const fb::FBModel& model, int z_node,
                  std::span<const double> z_value,
                  std::span<const std::vector<double>> batch_states,
                  std::span<const double> batch_rewards,
                  std::span<const std::vector<double>> reset_states,
                  std::span<const double> z_init, const ZolParams& params,
                  ZolDiagnostics* diag = nullptr,
                  const double* fixed_reward_mean = nullptr,
                  std::span<const int> reset_actions = {});

struct AdaptResult {
  std::vector<double> z_init;   // projected zero-shot latent
  std::vector<double> z_final;  // projected adapted latent
  std::vector<ZolDiagnostics> trace;
  long steps_run = 0;
  bool infer_fallback = false;
};

using RewardLabeler = std::function<double(std::span<const double>)>;
using ResetSampler = std::function<std::vector<double>(Rng&)>;

// Full test-time adaptation: infer z0, cache N reset states from rho0, then
// T clipped Adam steps on the regularized objective. Deterministic in seed.
AdaptResult zol_adapt(const fb::FBModel& model, const env::OfflineDataset& dataset,
                      const RewardLabeler& labeler, const ZolParams& params,
                      const ResetSampler& reset_sampler);

void write_adapt_trace_csv(const AdaptResult& result, const std::string& path);
void write_vector_csv(std::span<const double> v, const std::string& path);

}  // namespace zol::adapt
