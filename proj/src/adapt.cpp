#include "zol/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "zol/errors.hpp"
#include "zol/optim.hpp"

namespace zol::adapt {

namespace {

double softplus_stable(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

std::vector<double> sphere_latent(int d, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> z(d);
  double s = 0.0;
  while (s == 0.0) {
    for (double& v : z) v = rng.normal();
    s = 0.0;
    for (double v : z) s += v * v;
  }
  return fb::project_z(z);
}

}  // namespace

void ZolParams::validate() const {
  if (lr <= 0.0) throw ConfigError("zol lr must be positive");
  if (steps < 0) throw ConfigError("zol steps must be >= 0");
  if (lambda_chi < 0.0) throw ConfigError("zol lambda_chi must be >= 0");
  if (lambda_trust < 0.0) throw ConfigError("zol lambda_trust must be >= 0");
  if (weight_clip <= 0.0) throw ConfigError("zol weight_clip must be positive");
  if (reset_samples < 1) throw ConfigError("zol reset_samples must be >= 1");
  if (batch_size <= 0) throw ConfigError("zol batch_size must be positive");
  if (norm_eps <= 0.0) throw ConfigError("zol norm_eps must be positive");
  if (grad_clip <= 0.0) throw ConfigError("zol grad_clip must be positive");
  if (infer_samples < 1) throw ConfigError("zol infer_samples must be >= 1");
}

std::vector<double> task_embedding(const fb::FBModel& model,
                                   std::span<const std::vector<double>> states,
                                   std::span<const int> actions,
                                   std::span<const double> rewards) {
  if (states.empty()) throw PreconditionError("task_embedding: no labeled samples");
  if (states.size() != rewards.size()) throw ShapeError("task_embedding: size mismatch");
  if (model.b_state_action && actions.size() != states.size()) {
    throw ShapeError("task_embedding: state-action backward map needs actions");
  }
  std::vector<double> c(model.d, 0.0);
  for (std::size_t i = 0; i < states.size(); ++i) {
    const int a = model.b_state_action ? actions[i] : 0;
    const std::vector<double> b = model.b_eval(states[i], a);
    for (int k = 0; k < model.d; ++k) c[k] += b[k] * rewards[i];
  }
  const double inv = 1.0 / static_cast<double>(states.size());
  for (double& v : c) v *= inv;
  return c;
}

InferResult infer_task_latent(const fb::FBModel& model,
                              std::span<const std::vector<double>> states,
                              std::span<const int> actions,
                              std::span<const double> rewards,
                              std::uint64_t fallback_seed) {
  InferResult out;
  out.embedding = task_embedding(model, states, actions, rewards);
  double norm2 = 0.0;
  for (double v : out.embedding) norm2 += v * v;
  if (norm2 == 0.0) {
    out.used_fallback = true;
    out.z = sphere_latent(model.d, fallback_seed);
  } else {
    out.z = fb::project_z(out.embedding);
  }
  return out;
}

ForwardExpectation estimate_forward_expectation(const fb::FBModel& model,
                                                std::span<const std::vector<double>> reset_states,
                                                std::span<const double> z) {
  if (reset_states.empty()) throw PreconditionError("estimate_forward_expectation: N >= 1");
  ForwardExpectation out;
  out.reset_states.assign(reset_states.begin(), reset_states.end());
  out.mu.assign(model.d, 0.0);
  for (const std::vector<double>& s : reset_states) {
    const int a = fb::act_greedy(model, s, z);
    const std::vector<double> f = model.f_eval(s, a, z);
    for (int k = 0; k < model.d; ++k) out.mu[k] += f[k];
  }
  const double inv = 1.0 / static_cast<double>(reset_states.size());
  for (double& v : out.mu) v *= inv;
  return out;
}

RatioWeights ratio_weights(const fb::FBModel& model, std::span<const double> mu,
                           std::span<const std::vector<double>> batch_states,
                           const ZolParams& params) {
  if (batch_states.empty()) throw PreconditionError("ratio_weights: empty batch");
  RatioWeights out;
  out.logits.reserve(batch_states.size());
  const double scale = 1.0 - model.gamma;
  for (const std::vector<double>& s : batch_states) {
    const std::vector<double> b = model.b_eval(s);
    double l = 0.0;
    for (int k = 0; k < model.d; ++k) l += b[k] * mu[k];
    out.logits.push_back(scale * l);
  }
  out.weights.reserve(out.logits.size());
  double mean_raw = 0.0;
  for (double l : out.logits) {
    const double w = softplus_stable(l);
    out.weights.push_back(w);
    mean_raw += w;
  }
  mean_raw /= static_cast<double>(out.weights.size());
  const double denom = mean_raw + params.norm_eps;
  for (double& w : out.weights) w = std::min(w / denom, params.weight_clip);
  return out;
}

int zol_objective(diff::Graph& g, const fb::FBModel& model, int z_node,
                  std::span<const double> z_value,
                  std::span<const std::vector<double>> batch_states,
                  std::span<const double> batch_rewards,
                  std::span<const std::vector<double>> reset_states,
                  std::span<const double> z_init, const ZolParams& params,
                  ZolDiagnostics* diag, const double* fixed_reward_mean,
                  std::span<const int> reset_actions) {
  const std::size_t n = batch_states.size();
  if (n == 0 || n != batch_rewards.size()) throw ShapeError("zol_objective: batch size");
  if (reset_states.empty()) throw PreconditionError("zol_objective: no reset states");
  if (!reset_actions.empty() && reset_actions.size() != reset_states.size()) {
    throw ShapeError("zol_objective: reset action count mismatch");
  }

  // mu(z) on the tape; the greedy action per reset state is a constant
  const int n_reset = static_cast<int>(reset_states.size());
  const int p = model.state_dim + model.action_count;
  std::vector<int> greedy;
  if (reset_actions.empty()) {
    const std::vector<std::vector<double>> z_rep(reset_states.size(),
                                                 std::vector<double>(z_value.begin(),
                                                                     z_value.end()));
    greedy = fb::greedy_actions(model, reset_states, z_rep);
  }
  std::vector<double> prefix(static_cast<std::size_t>(n_reset) * p, 0.0);
  for (int j = 0; j < n_reset; ++j) {
    const std::vector<double>& s0 = reset_states[j];
    const int a0 = reset_actions.empty() ? greedy[j] : reset_actions[j];
    std::copy(s0.begin(), s0.end(), prefix.begin() + static_cast<std::size_t>(j) * p);
    prefix[static_cast<std::size_t>(j) * p + model.state_dim + a0] = 1.0;
  }
  const double* prefix_ptr = g.own_buffer(std::move(prefix));
  const int input = g.concat_rows_cv(prefix_ptr, n_reset, p, z_node);
  const int mu = g.col_mean(model.f.forward_tape_input_batch(g, input, n_reset), n_reset);

  // logits = (1-gamma) * B_batch * mu with constant backward embeddings;
  // the matrix is handed to the graph because backward() reads it again
  std::vector<double> b_matrix(n * static_cast<std::size_t>(model.d));
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double> b = model.b_eval(batch_states[i]);
    std::copy(b.begin(), b.end(), b_matrix.begin() + i * model.d);
  }
  const double* b_mat = g.own_buffer(std::move(b_matrix));
  const int logits = g.scale(
      g.const_matvec(b_mat, static_cast<int>(n), model.d, mu), 1.0 - model.gamma);
  const int w_raw = g.softplus(logits);
  const int denom = g.add_scalar(g.mean(w_raw), params.norm_eps);
  const int w = g.min_const(g.div_by_scalar(w_raw, denom), params.weight_clip);

  // centered rewards are constants
  double r_mean = 0.0;
  if (fixed_reward_mean != nullptr) {
    r_mean = *fixed_reward_mean;
  } else {
    for (double r : batch_rewards) r_mean += r;
    r_mean /= static_cast<double>(n);
  }
  std::vector<double> centered(batch_rewards.begin(), batch_rewards.end());
  for (double& r : centered) r -= r_mean;

  const int j_ret = g.scale(g.dot(w, g.constant(centered)), 1.0 / static_cast<double>(n));
  const int chi2 = g.mean(g.square(g.add_scalar(w, -1.0)));

  const int z_proj = g.l2_normalize(z_node, std::sqrt(static_cast<double>(model.d)));
  const int z_diff = g.sub(z_proj, g.constant(fb::project_z(z_init)));
  const int trust = g.dot(z_diff, z_diff);

  const int loss = g.add(g.add(g.scale(j_ret, -1.0), g.scale(chi2, params.lambda_chi)),
                         g.scale(trust, params.lambda_trust));

  if (diag != nullptr) {
    diag->j_ret = g.value(j_ret);
    diag->chi2 = g.value(chi2);
    diag->trust = g.value(trust);
    diag->total = -g.value(loss);
    auto weights = g.values(w);
    diag->w_min = *std::min_element(weights.begin(), weights.end());
    diag->w_max = *std::max_element(weights.begin(), weights.end());
    double mean = 0.0;
    for (double v : weights) mean += v;
    diag->w_mean = mean / static_cast<double>(weights.size());
  }
  return loss;
}

AdaptResult zol_adapt(const fb::FBModel& model, const env::OfflineDataset& dataset,
                      const RewardLabeler& labeler, const ZolParams& params,
                      const ResetSampler& reset_sampler) {
  params.validate();
  if (dataset.records.empty()) throw PreconditionError("zol_adapt: empty dataset");

  Rng master(params.seed);
  Rng rng_infer = master.fork(1);
  Rng rng_reset = master.fork(2);
  Rng rng_batch = master.fork(3);

  // zero-shot inference from labeled dataset samples
  std::vector<std::vector<double>> infer_states;
  std::vector<int> infer_actions;
  std::vector<double> infer_rewards;
  infer_states.reserve(params.infer_samples);
  for (int i = 0; i < params.infer_samples; ++i) {
    const env::TransitionRecord& rec = dataset.records[rng_infer.below(dataset.count())];
    infer_states.push_back(rec.s);
    if (model.b_state_action) infer_actions.push_back(model.encode_action(rec.a));
    infer_rewards.push_back(labeler(rec.s));
  }
  const InferResult inferred = infer_task_latent(model, infer_states, infer_actions,
                                                 infer_rewards, params.seed);

  AdaptResult result;
  result.z_init = inferred.z;
  result.infer_fallback = inferred.used_fallback;

  std::vector<std::vector<double>> reset_states;
  reset_states.reserve(params.reset_samples);
  for (int i = 0; i < params.reset_samples; ++i) {
    reset_states.push_back(reset_sampler(rng_reset));
  }

  std::vector<double> z = inferred.z;
  std::vector<double> z_grad(z.size(), 0.0);
  diff::AdamState adam(z.size());
  diff::Graph g;
  std::vector<std::vector<double>> batch_states(params.batch_size);
  std::vector<double> batch_rewards(params.batch_size);

  double global_mean = 0.0;
  if (params.center_rewards_globally) {
    for (const env::TransitionRecord& rec : dataset.records) global_mean += labeler(rec.s);
    global_mean /= static_cast<double>(dataset.count());
  }

  result.trace.reserve(params.steps);
  for (long t = 0; t < params.steps; ++t) {
    for (int i = 0; i < params.batch_size; ++i) {
      const env::TransitionRecord& rec = dataset.records[rng_batch.below(dataset.count())];
      batch_states[i] = rec.s;
      batch_rewards[i] = labeler(rec.s);
    }
    ZolDiagnostics diag;
    try {
      g.reset();
      const int z_node = g.param(z, z_grad);
      const int loss = zol_objective(g, model, z_node, z, batch_states, batch_rewards,
                                     reset_states, result.z_init, params, &diag,
                                     params.center_rewards_globally ? &global_mean : nullptr);
      g.backward(loss);
    } catch (const NumericError& e) {
      throw TrainingError(std::string("zol adaptation diverged: ") + e.what(), t);
    }
    diff::clip_grad_norm_inplace(z_grad, params.grad_clip);
    diff::adam_step(z, z_grad, adam, params.lr);
    for (double v : z) {
      if (!std::isfinite(v)) {
        throw TrainingError("zol adaptation produced a non-finite latent (J=" +
                                std::to_string(diag.j_ret) + ", chi2=" +
                                std::to_string(diag.chi2) + ")",
                            t);
      }
    }
    result.trace.push_back(diag);
  }
  result.steps_run = static_cast<long>(result.trace.size());
  // z_init is already on the sphere; skip the no-op reprojection so a T = 0
  // run returns it bit-exactly
  result.z_final = params.steps == 0 ? result.z_init : fb::project_z(z);
  return result;
}

void write_adapt_trace_csv(const AdaptResult& result, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "step,J_ret,chi2,trust,total,w_min,w_mean,w_max\n";
  os.precision(17);
  for (std::size_t t = 0; t < result.trace.size(); ++t) {
    const ZolDiagnostics& d = result.trace[t];
    os << t << ',' << d.j_ret << ',' << d.chi2 << ',' << d.trust << ',' << d.total << ','
       << d.w_min << ',' << d.w_mean << ',' << d.w_max << '\n';
  }
}

void write_vector_csv(std::span<const double> v, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) {
    os << v[i] << (i + 1 < v.size() ? ',' : '\n');
  }
}

}  // namespace zol::adapt
