#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "zol/errors.hpp"
#include "zol/evalkit.hpp"
#include "zol/gridworld.hpp"

using namespace zol;
using namespace zol::eval;

namespace {

fb::FBModel tiny_model(std::uint64_t seed = 3) {
  fb::FBConfig cfg;
  cfg.d = 4;
  cfg.gamma = 0.9;
  cfg.state_dim = 2;
  cfg.action_count = 9;
  cfg.f_hidden = {16};
  cfg.b_hidden = {16};
  Rng rng(seed);
  return fb::make_fb_model(cfg, rng);
}

adapt::ResetSampler donut_sampler() {
  env::DonutWorld world;
  return [world](Rng& rng) {
    const auto s = world.sample_start(rng);
    return std::vector<double>{s[0], s[1]};
  };
}

}  // namespace

TEST_CASE("heatmap geometry") {
  const auto model = tiny_model();
  const std::vector<double> z(4, 0.0);
  const auto grid = render_heatmap(model, z, 64);
  CHECK(grid.values.size() == 4096);

  int expect_masked = 0;
  for (int row = 0; row < 64; ++row) {
    for (int col = 0; col < 64; ++col) {
      const double x = grid.center_x(col);
      const double y = grid.center_y(row);
      const double r = std::hypot(x, y);
      if (r >= 0.25 && r <= 1.5) ++expect_masked;
    }
  }
  CHECK(grid.masked_count() == expect_masked);

  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    if (grid.mask[i]) {
      CHECK(grid.values[i] == 0.0);  // z = 0 makes B(s)^T z vanish
    } else {
      CHECK(std::isnan(grid.values[i]));
    }
  }

  CHECK_THROWS_AS(render_heatmap(model, z, 4), ConfigError);
}

TEST_CASE("coinciding cell centers agree across resolutions") {
  const auto model = tiny_model();
  const auto z = fb::project_z(std::vector<double>{1, -2, 0.5, 0.3});
  const auto coarse = render_heatmap(model, z, 16);
  const auto fine = render_heatmap(model, z, 48);
  // center (i + 0.5)/16 equals (3i + 1 + 0.5)/48
  for (int i = 0; i < 16; ++i) {
    CHECK(coarse.center_x(i) == doctest::Approx(fine.center_x(3 * i + 1)).epsilon(1e-12));
  }
  for (int ci = 0; ci < 16; ++ci) {
    for (int cj = 0; cj < 16; ++cj) {
      const std::size_t c_idx = static_cast<std::size_t>(ci) * 16 + cj;
      const std::size_t f_idx = static_cast<std::size_t>(3 * ci + 1) * 48 + (3 * cj + 1);
      if (coarse.mask[c_idx] && fine.mask[f_idx]) {
        CHECK(coarse.values[c_idx] == doctest::Approx(fine.values[f_idx]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("reconstruction correlation") {
  const auto task = env::parse_task("cross");
  const auto model = tiny_model();
  auto grid = render_heatmap(model, fb::project_z(std::vector<double>{1, 1, 1, 1}), 32);

  SUBCASE("perfect reconstruction scores 1 and its negation -1") {
    std::vector<double> s(2);
    for (int row = 0; row < 32; ++row) {
      for (int col = 0; col < 32; ++col) {
        const std::size_t i = static_cast<std::size_t>(row) * 32 + col;
        if (!grid.mask[i]) continue;
        s[0] = grid.center_x(col);
        s[1] = grid.center_y(row);
        grid.values[i] = env::task_reward(task, s);
      }
    }
    CHECK(reconstruction_correlation(grid, task) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 0; i < grid.values.size(); ++i) {
      if (grid.mask[i]) grid.values[i] = -grid.values[i];
    }
    CHECK(reconstruction_correlation(grid, task) == doctest::Approx(-1.0).epsilon(1e-12));
  }

  SUBCASE("positive affine transforms leave the score unchanged") {
    const double base = reconstruction_correlation(grid, task);
    for (std::size_t i = 0; i < grid.values.size(); ++i) {
      if (grid.mask[i]) grid.values[i] = 3.5 * grid.values[i] - 11.0;
    }
    CHECK(reconstruction_correlation(grid, task) == doctest::Approx(base).epsilon(1e-12));
  }

  SUBCASE("zero variance raises DegenerateError") {
    for (std::size_t i = 0; i < grid.values.size(); ++i) {
      if (grid.mask[i]) grid.values[i] = 7.0;
    }
    CHECK_THROWS_AS(reconstruction_correlation(grid, task), DegenerateError);
  }
}

TEST_CASE("fixed-seed random latent on the cross task pins a regression value") {
  // an untrained zero-bias tanh net is an odd function of s, so its scores
  // against the even cross reward cancel exactly on the symmetric grid; a
  // short training run breaks that symmetry and gives a meaningful baseline
  const auto ds = env::collect_donut(512, 0.6, 6);
  fb::FBConfig mc;
  mc.d = 4;
  mc.gamma = 0.9;
  mc.state_dim = 2;
  mc.action_count = 9;
  mc.f_hidden = {16};
  mc.b_hidden = {16};
  fb::FBTrainConfig tc;
  tc.batch_size = 64;
  tc.train_steps = 50;
  tc.seed = 6;
  const auto trained = fb::train_fb(ds, mc, tc);

  Rng rng(12345);
  std::vector<double> z(4);
  for (double& v : z) v = rng.normal();
  const auto grid = render_heatmap(trained.model, fb::project_z(z), 64);
  const double corr = reconstruction_correlation(grid, env::parse_task("cross"));
  // frozen from the first run of this deterministic configuration
  CHECK(corr == doctest::Approx(0.0068576972014553483).epsilon(1e-9));
}

TEST_CASE("tabular return") {
  const auto mdp = env::build_gridworld(2, 1, 0.5, {0, 0}, 0);
  tab::TabularPolicy right{2, 4, {0, 0, 0, 1, 0, 0, 0, 1}};

  SUBCASE("unit reward returns 1 by normalization") {
    tab::TabularReward ones{std::vector<double>(8, 1.0)};
    CHECK(tabular_return(mdp, right, ones) == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("chain reward at s1 returns 1/2 with rho0 = uniform start") {
    // reward 1 on every action of state 1
    tab::TabularReward r{{0, 0, 0, 0, 1, 1, 1, 1}};
    tab::TabularMDP chain = mdp;
    chain.rho0 = {1.0, 0.0};
    CHECK(tabular_return(chain, right, r) == doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("linear in the reward") {
    Rng rng(5);
    const auto mdp2 = tab::random_mdp(5, 3, 0.8, rng);
    const auto pi = tab::random_policy(5, 3, rng);
    const auto r1 = tab::random_reward(5, 3, rng);
    const auto r2 = tab::random_reward(5, 3, rng);
    tab::TabularReward mix{std::vector<double>(15)};
    for (int i = 0; i < 15; ++i) mix.values[i] = 2.0 * r1.values[i] - 0.7 * r2.values[i];
    const double lhs = tabular_return(mdp2, pi, mix);
    const double rhs =
        2.0 * tabular_return(mdp2, pi, r1) - 0.7 * tabular_return(mdp2, pi, r2);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }

  SUBCASE("agrees with (1-gamma) rho0-weighted Q") {
    Rng rng(7);
    const auto mdp2 = tab::random_mdp(6, 2, 0.85, rng);
    const auto pi = tab::random_policy(6, 2, rng);
    const auto r = tab::random_reward(6, 2, rng);
    const auto q = tab::q_from_successor(mdp2, pi, r);
    double via_q = 0.0;
    for (int s = 0; s < 6; ++s) {
      for (int a = 0; a < 2; ++a) {
        via_q += mdp2.rho0[s] * pi.pi(s, a) * q[mdp2.pair(s, a)];
      }
    }
    via_q *= 1.0 - mdp2.gamma;
    CHECK(tabular_return(mdp2, pi, r) == doctest::Approx(via_q).epsilon(1e-10));
  }
}

TEST_CASE("fb-vs-zol comparison plumbing") {
  const auto ds = env::collect_donut(1024, 0.6, 2);
  fb::FBConfig mc;
  mc.d = 4;
  mc.gamma = 0.9;
  mc.state_dim = 2;
  mc.action_count = 9;
  mc.f_hidden = {16};
  mc.b_hidden = {16};
  fb::FBTrainConfig tc;
  tc.batch_size = 64;
  tc.train_steps = 100;
  tc.seed = 1;
  const auto trained = fb::train_fb(ds, mc, tc);

  adapt::ZolParams params;
  params.steps = 0;  // no-op adaptation: corr_zol must equal corr_fb
  params.batch_size = 64;
  params.reset_samples = 16;
  params.infer_samples = 128;

  const std::vector<std::uint64_t> seeds{0, 1, 2};
  const auto report = compare_fb_vs_zol(trained.model, ds, env::parse_task("cross"), params,
                                        seeds, donut_sampler());
  CHECK(report.rows.size() == 3);
  for (const auto& row : report.rows) {
    CHECK(row.corr_zol == doctest::Approx(row.corr_fb).epsilon(1e-12));
    CHECK(row.delta == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(row.z_fb == row.z_zol);
  }
  CHECK(report.task == "cross");

  const auto dir = std::filesystem::temp_directory_path();
  const auto report_path = (dir / "zol_report.csv").string();
  write_report_csv(report, report_path);
  std::ifstream is(report_path);
  std::string line;
  std::getline(is, line);
  CHECK(line == "task,seed,corr_fb,corr_zol,delta");
  int rows = 0;
  while (std::getline(is, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 4);  // 3 seeds + mean row
}

TEST_CASE("heatmap files") {
  const auto model = tiny_model();
  const auto z = fb::project_z(std::vector<double>{0.5, -1, 0.25, 2});
  const auto grid = render_heatmap(model, z, 16);
  const auto dir = std::filesystem::temp_directory_path();

  const auto csv_path = (dir / "zol_heat.csv").string();
  write_heatmap_csv(grid, csv_path);
  std::ifstream is(csv_path);
  std::string line;
  int rows = 0;
  bool has_nan = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    ++rows;
    if (line.find("nan") != std::string::npos) has_nan = true;
  }
  CHECK(rows == 16);
  CHECK(has_nan);  // corners are outside the annulus

  const auto pgm_path = (dir / "zol_heat.pgm").string();
  write_heatmap_pgm(grid, pgm_path);
  std::ifstream ps(pgm_path, std::ios::binary);
  std::string magic;
  ps >> magic;
  CHECK(magic == "P5");
  int w = 0, h = 0, maxval = 0;
  ps >> w >> h >> maxval;
  CHECK(w == 16);
  CHECK(h == 16);
  CHECK(maxval == 255);
  ps.get();  // single whitespace after header
  std::vector<char> bytes(16 * 16);
  ps.read(bytes.data(), bytes.size());
  CHECK(ps.gcount() == 256);
}
