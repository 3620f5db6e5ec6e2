#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "zol/adapt.hpp"
#include "zol/donut.hpp"
#include "zol/errors.hpp"
#include "zol/fb.hpp"
#include "zol/tabular.hpp"

using namespace zol;
using namespace zol::adapt;

namespace {

fb::FBConfig tiny_config() {
  fb::FBConfig cfg;
  cfg.d = 4;
  cfg.gamma = 0.9;
  cfg.state_dim = 2;
  cfg.action_count = 9;
  cfg.f_hidden = {16};
  cfg.b_hidden = {16};
  return cfg;
}

fb::FBModel tiny_model(std::uint64_t seed = 3) {
  Rng rng(seed);
  return fb::make_fb_model(tiny_config(), rng);
}

ResetSampler donut_sampler(double sigma = 0.6) {
  env::DonutWorld world;
  world.support_sigma = sigma;
  return [world](Rng& rng) {
    const auto s = world.sample_start(rng);
    return std::vector<double>{s[0], s[1]};
  };
}

std::vector<std::vector<double>> donut_states(int n, std::uint64_t seed) {
  env::DonutWorld world;
  Rng rng(seed);
  std::vector<std::vector<double>> states;
  for (int i = 0; i < n; ++i) {
    const auto s = world.sample_start(rng);
    states.push_back({s[0], s[1]});
  }
  return states;
}

}  // namespace

TEST_CASE("task embedding and zero-shot inference") {
  const auto model = tiny_model();
  const auto states = donut_states(32, 1);

  SUBCASE("all-zero rewards fall back to a seeded sphere latent") {
    const std::vector<double> zeros(32, 0.0);
    const auto res = infer_task_latent(model, states, {}, zeros, 99);
    CHECK(res.used_fallback);
    double norm2 = 0.0;
    for (double v : res.z) norm2 += v * v;
    CHECK(std::sqrt(norm2) == doctest::Approx(2.0).epsilon(1e-9));
    const auto res2 = infer_task_latent(model, states, {}, zeros, 99);
    CHECK(res.z == res2.z);
  }

  SUBCASE("positive reward scaling leaves the latent unchanged") {
    std::vector<double> rewards(32);
    Rng rng(7);
    for (double& r : rewards) r = rng.uniform(0.0, 1.0);
    std::vector<double> scaled(rewards);
    for (double& r : scaled) r *= 5.0;
    const auto a = infer_task_latent(model, states, {}, rewards);
    const auto b = infer_task_latent(model, states, {}, scaled);
    CHECK_FALSE(a.used_fallback);
    for (int k = 0; k < model.d; ++k) CHECK(a.z[k] == doctest::Approx(b.z[k]).epsilon(1e-9));
    // embedding itself scales linearly
    for (int k = 0; k < model.d; ++k) {
      CHECK(b.embedding[k] == doctest::Approx(5.0 * a.embedding[k]).epsilon(1e-9));
    }
  }

  SUBCASE("embedding is the mean of B(s) r") {
    const std::vector<double> one_reward{2.0};
    const std::vector<std::vector<double>> one_state{states[0]};
    const auto c = task_embedding(model, one_state, {}, one_reward);
    const auto b = model.b_eval(states[0]);
    for (int k = 0; k < model.d; ++k) CHECK(c[k] == doctest::Approx(2.0 * b[k]).epsilon(1e-12));
    const auto z = fb::project_z(c);
    double norm2 = 0.0;
    for (double v : z) norm2 += v * v;
    CHECK(std::sqrt(norm2) == doctest::Approx(2.0).epsilon(1e-12));
  }
}

TEST_CASE("forward expectation estimation") {
  const auto model = tiny_model();
  const auto z = fb::project_z(std::vector<double>{1, -2, 0.5, 1});
  const auto states = donut_states(8, 3);

  SUBCASE("N = 1 is the single forward embedding") {
    const std::vector<std::vector<double>> one{states[0]};
    const auto fe = estimate_forward_expectation(model, one, z);
    const int a0 = fb::act_greedy(model, states[0], z);
    const auto f = model.f_eval(states[0], a0, z);
    for (int k = 0; k < model.d; ++k) CHECK(fe.mu[k] == doctest::Approx(f[k]).epsilon(1e-12));
  }

  SUBCASE("duplicated reset states do not change the mean") {
    const auto fe1 = estimate_forward_expectation(model, states, z);
    std::vector<std::vector<double>> doubled(states.begin(), states.end());
    doubled.insert(doubled.end(), states.begin(), states.end());
    const auto fe2 = estimate_forward_expectation(model, doubled, z);
    for (int k = 0; k < model.d; ++k) {
      CHECK(fe1.mu[k] == doctest::Approx(fe2.mu[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("ratio weight shaping") {
  const auto model = tiny_model();
  ZolParams params;
  const auto states = donut_states(64, 5);
  const auto z = fb::project_z(std::vector<double>{0.3, 1.0, -0.6, 0.2});
  const auto fe = estimate_forward_expectation(model, states, z);

  SUBCASE("identical states give weights of exactly one shape") {
    const std::vector<std::vector<double>> same(16, states[0]);
    const auto rw = ratio_weights(model, fe.mu, same, params);
    for (double w : rw.weights) {
      CHECK(w == doctest::Approx(rw.weights[0]).epsilon(1e-12));
      CHECK(w == doctest::Approx(1.0).epsilon(1e-4));
    }
  }

  SUBCASE("positivity, self-normalization band, and clipping") {
    const auto rw = ratio_weights(model, fe.mu, states, params);
    double mean = 0.0;
    for (double w : rw.weights) {
      CHECK(w > 0.0);
      mean += w;
    }
    mean /= static_cast<double>(rw.weights.size());
    CHECK(mean <= 1.0 + 1e-12);
    CHECK(mean >= 1.0 - 10.0 * params.norm_eps);

    // craft one dominant logit (about +50) against a sea of strongly negative
    // ones: the big weight is clipped and every weight stays positive
    const std::vector<double> s_a{1.4, 0.0};
    const std::vector<double> s_b{-1.4, 0.0};
    std::vector<std::vector<double>> outlier_batch{s_a};
    for (int i = 0; i < 15; ++i) outlier_batch.push_back(s_b);
    const auto b_a = model.b_eval(s_a);
    const auto b_b = model.b_eval(s_b);
    std::vector<double> mu_sep(model.d);
    for (int k = 0; k < model.d; ++k) mu_sep[k] = b_a[k] - b_b[k];
    double raw = 0.0;
    for (int k = 0; k < model.d; ++k) raw += b_a[k] * mu_sep[k];
    REQUIRE(raw > 1e-3);  // the two embeddings must be separated
    for (double& v : mu_sep) v *= 50.0 / ((1.0 - model.gamma) * raw);

    ZolParams clip = params;
    clip.weight_clip = 10.0;
    const auto rw2 = ratio_weights(model, mu_sep, outlier_batch, clip);
    CHECK(rw2.logits[0] == doctest::Approx(50.0));
    CHECK(rw2.logits[1] < 0.0);
    double w_max = 0.0;
    for (double w : rw2.weights) {
      CHECK(w > 0.0);
      w_max = std::max(w_max, w);
    }
    CHECK(w_max == doctest::Approx(10.0));
  }
}

TEST_CASE("zol objective pieces") {
  const auto model = tiny_model();
  ZolParams params;
  params.batch_size = 32;
  const auto states = donut_states(32, 9);
  const auto resets = donut_states(16, 11);
  const auto z0 = fb::project_z(std::vector<double>{1, 1, -1, 0.5});

  std::vector<double> rewards(32);
  Rng rng(13);
  for (double& r : rewards) r = rng.uniform(-1.0, 1.0);

  auto run = [&](std::span<const double> z_val, std::span<const double> rew,
                 ZolDiagnostics* diag, std::vector<double>* grad_out = nullptr,
                 std::span<const int> actions = {}) {
    diff::Graph g;
    std::vector<double> zg(model.d, 0.0);
    const int z_node = g.param(z_val, zg);
    const int loss = zol_objective(g, model, z_node, z_val, states, rew, resets, z0,
                                   params, diag, nullptr, actions);
    if (grad_out != nullptr) {
      g.backward(loss);
      *grad_out = zg;
    }
    return g.value(loss);
  };

  SUBCASE("constant rewards zero out the return term") {
    const std::vector<double> constant(32, 2.5);
    ZolDiagnostics diag;
    run(z0, constant, &diag);
    CHECK(std::abs(diag.j_ret) < 1e-12);
  }

  SUBCASE("z at the trust anchor has zero trust penalty") {
    ZolDiagnostics diag;
    run(z0, rewards, &diag);
    CHECK(diag.trust == doctest::Approx(0.0).epsilon(1e-14));
  }

  SUBCASE("constant reward shifts move J by less than 1e-12") {
    ZolDiagnostics a, b;
    std::vector<double> shifted(rewards);
    for (double& r : shifted) r += 1234.5;
    run(z0, rewards, &a);
    run(z0, shifted, &b);
    CHECK(std::abs(a.j_ret - b.j_ret) < 1e-12);
  }

  SUBCASE("diagnostic weights match the plain ratio_weights path") {
    ZolDiagnostics diag;
    run(z0, rewards, &diag);
    const auto fe = estimate_forward_expectation(model, resets, z0);
    const auto rw = ratio_weights(model, fe.mu, states, params);
    double w_min = 1e300, w_max = 0.0, w_mean = 0.0;
    for (double w : rw.weights) {
      w_min = std::min(w_min, w);
      w_max = std::max(w_max, w);
      w_mean += w;
    }
    w_mean /= static_cast<double>(rw.weights.size());
    CHECK(diag.w_min == doctest::Approx(w_min).epsilon(1e-12));
    CHECK(diag.w_max == doctest::Approx(w_max).epsilon(1e-12));
    CHECK(diag.w_mean == doctest::Approx(w_mean).epsilon(1e-12));
  }

  SUBCASE("gradient w.r.t. z matches finite differences at fixed greedy actions") {
    const auto z = fb::project_z(std::vector<double>{0.8, -0.4, 1.2, 0.3});
    // the objective is semi-gradient through the argmax, so the oracle
    // evaluates the same fixed-action function
    std::vector<int> actions;
    for (const auto& s0 : resets) actions.push_back(fb::act_greedy(model, s0, z));

    std::vector<double> grad;
    ZolDiagnostics diag;
    run(z, rewards, &diag, &grad, actions);
    const double h = 1e-6;
    for (int k = 0; k < model.d; ++k) {
      std::vector<double> zp(z), zm(z);
      zp[k] += h;
      zm[k] -= h;
      const double fd = (run(zp, rewards, nullptr, nullptr, actions) -
                         run(zm, rewards, nullptr, nullptr, actions)) /
                        (2 * h);
      const double scale = std::max({std::abs(fd), std::abs(grad[k]), 1e-4});
      CHECK(std::abs(fd - grad[k]) / scale < 1e-4);
    }
  }
}

TEST_CASE("oracle density ratios reproduce the centered return through the J formula") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const auto mdp = tab::random_mdp(6, 3, rng.uniform(0.1, 0.9), rng);
    const auto pi = tab::random_policy(6, 3, rng, 0.05);
    const auto beta = tab::random_policy(6, 3, rng, 0.05);
    const auto reward = tab::random_reward(6, 3, rng);
    const auto w = tab::density_ratio_exact(mdp, pi, beta);
    const auto d_pi = tab::occupancy_exact(mdp, pi);
    const auto d_beta = tab::occupancy_exact(mdp, beta);

    double rbar = 0.0;
    for (std::size_t i = 0; i < d_beta.size(); ++i) rbar += d_beta[i] * reward.values[i];
    // J with exact weights, expectation taken under d^beta
    double j = 0.0, target = -rbar;
    for (std::size_t i = 0; i < d_beta.size(); ++i) {
      j += d_beta[i] * w[i] * (reward.values[i] - rbar);
      target += d_pi[i] * reward.values[i];
    }
    CHECK(std::abs(j - target) < 1e-10);
  }
}

TEST_CASE("zol_adapt control flow") {
  const auto ds = env::collect_donut(2048, 0.6, 21);
  fb::FBTrainConfig tc;
  tc.batch_size = 64;
  tc.train_steps = 150;
  tc.seed = 2;
  const auto trained = fb::train_fb(ds, tiny_config(), tc);
  const auto& model = trained.model;

  const auto task = env::parse_task("cross");
  const RewardLabeler labeler = [&task](std::span<const double> s) {
    return env::task_reward(task, s);
  };

  ZolParams params;
  params.steps = 5;
  params.batch_size = 128;
  params.reset_samples = 32;
  params.infer_samples = 256;
  params.seed = 4;

  SUBCASE("T = 0 returns the projected zero-shot latent with an empty trace") {
    ZolParams p = params;
    p.steps = 0;
    const auto res = zol_adapt(model, ds, labeler, p, donut_sampler());
    CHECK(res.steps_run == 0);
    CHECK(res.trace.empty());
    CHECK(res.z_final == res.z_init);
  }

  SUBCASE("deterministic given the seed") {
    const auto a = zol_adapt(model, ds, labeler, params, donut_sampler());
    const auto b = zol_adapt(model, ds, labeler, params, donut_sampler());
    CHECK(a.z_init == b.z_init);
    CHECK(a.z_final == b.z_final);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
      CHECK(a.trace[i].total == b.trace[i].total);
    }
    ZolParams p2 = params;
    p2.seed = 5;
    const auto c = zol_adapt(model, ds, labeler, p2, donut_sampler());
    CHECK(a.z_final != c.z_final);
  }

  SUBCASE("recorded weights stay positive and the trace length matches steps") {
    const auto res = zol_adapt(model, ds, labeler, params, donut_sampler());
    CHECK(res.steps_run == params.steps);
    CHECK(static_cast<long>(res.trace.size()) == params.steps);
    for (const auto& d : res.trace) {
      CHECK(d.w_min > 0.0);
      CHECK(d.w_max <= params.weight_clip + 1e-12);
    }
  }

  SUBCASE("a huge trust penalty pins the latent to the anchor") {
    ZolParams free_params = params;
    free_params.steps = 40;
    free_params.lambda_trust = 0.0;
    ZolParams pinned = free_params;
    pinned.lambda_trust = 1000.0;

    const auto res_free = zol_adapt(model, ds, labeler, free_params, donut_sampler());
    const auto res_pinned = zol_adapt(model, ds, labeler, pinned, donut_sampler());

    auto drift = [](const AdaptResult& r) {
      double acc = 0.0;
      for (std::size_t k = 0; k < r.z_final.size(); ++k) {
        const double d = r.z_final[k] - r.z_init[k];
        acc += d * d;
      }
      return std::sqrt(acc);
    };
    CHECK(res_free.z_init == res_pinned.z_init);
    CHECK(drift(res_pinned) < drift(res_free));
  }
}

TEST_CASE("adapt trace and vector exports") {
  AdaptResult res;
  res.z_init = {1.0, 0.0};
  res.z_final = {0.5, 0.5};
  res.steps_run = 2;
  res.trace = {{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7}, {1, 2, 3, 4, 5, 6, 7}};
  const auto dir = std::filesystem::temp_directory_path();
  const auto trace_path = (dir / "zol_trace.csv").string();
  const auto vec_path = (dir / "zol_vec.csv").string();
  write_adapt_trace_csv(res, trace_path);
  write_vector_csv(res.z_final, vec_path);

  std::ifstream ts(trace_path);
  std::string line;
  std::getline(ts, line);
  CHECK(line == "step,J_ret,chi2,trust,total,w_min,w_mean,w_max");
  int rows = 0;
  while (std::getline(ts, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 2);

  std::ifstream vs(vec_path);
  std::getline(vs, line);
  CHECK(line == "0.5,0.5");
}
