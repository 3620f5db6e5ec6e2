#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "zol/dataset.hpp"
#include "zol/donut.hpp"
#include "zol/errors.hpp"
#include "zol/gridworld.hpp"
#include "zol/tabular.hpp"

using namespace zol;
using namespace zol::env;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("zol_envs_" + name);
}

double state_norm(const TransitionRecord& rec) { return std::hypot(rec.s[0], rec.s[1]); }

OfflineDataset random_dataset(Rng& rng) {
  OfflineDataset ds;
  ds.env_tag = rng.below(2) ? "donut" : "other";
  ds.seed = rng.bits();
  ds.state_dim = 2;
  ds.action_dim = 2;
  ds.has_reward = rng.below(2) == 1;
  const int n = static_cast<int>(rng.below(20));
  for (int i = 0; i < n; ++i) {
    TransitionRecord rec;
    rec.s = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    rec.a = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    rec.s_next = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    rec.s_plus = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    rec.r = ds.has_reward ? rng.uniform(-1, 1) : 0.0;
    ds.records.push_back(rec);
  }
  return ds;
}

}  // namespace

TEST_CASE("donut collection stays on the annulus and is reproducible") {
  const auto ds = collect_donut(5000, 0.6, 42);
  REQUIRE(ds.count() == 5000);
  for (const auto& rec : ds.records) {
    const double r = state_norm(rec);
    CHECK(r >= 0.25 - 1e-12);
    CHECK(r <= 1.5 + 1e-12);
    const double rn = std::hypot(rec.s_next[0], rec.s_next[1]);
    CHECK(rn >= 0.25 - 1e-12);
    CHECK(rn <= 1.5 + 1e-12);
    CHECK(std::abs(rec.a[0]) <= 0.1);
    CHECK(std::abs(rec.a[1]) <= 0.1);
  }
  const auto again = collect_donut(5000, 0.6, 42);
  CHECK(ds == again);
  const auto other_seed = collect_donut(5000, 0.6, 43);
  CHECK(ds.records != other_seed.records);
}

TEST_CASE("smaller sigma concentrates mass toward the inner radius") {
  const auto tight = collect_donut(100000, 0.5, 7);
  const auto wide = collect_donut(100000, 2.0, 7);
  double mean_tight = 0.0, mean_wide = 0.0;
  for (const auto& rec : tight.records) mean_tight += state_norm(rec);
  for (const auto& rec : wide.records) mean_wide += state_norm(rec);
  mean_tight /= 100000.0;
  mean_wide /= 100000.0;
  CHECK(mean_tight < mean_wide);

  // inner-bias property at sigma <= 1
  int inner = 0, outer = 0;
  for (const auto& rec : tight.records) {
    const double r = state_norm(rec);
    if (r <= 0.8) ++inner;
    if (r >= 1.2) ++outer;
  }
  CHECK(inner > outer);
}

TEST_CASE("pathologically small sigma fails rejection sampling") {
  CHECK_THROWS_AS(collect_donut(10, 1e-9, 0), ConfigError);
}

TEST_CASE("task rewards") {
  const auto cross = parse_task("cross");
  const auto square = parse_task("square");
  const auto circles = parse_task("twocircles");

  const std::vector<double> p1{0.8, 0.05};
  CHECK(task_reward(cross, p1) == 1.0);
  const std::vector<double> p2{0.3, 0.3};
  CHECK(task_reward(square, p2) == 0.0);
  const std::vector<double> p3{0.9, 0.29};
  CHECK(task_reward(circles, p3) == 1.0);

  CHECK_THROWS_AS(parse_task("spiral"), ConfigError);

  // deterministic and binary on the annulus
  Rng rng(19);
  DonutWorld world;
  for (int i = 0; i < 200; ++i) {
    const auto s = world.sample_start(rng);
    const std::vector<double> state{s[0], s[1]};
    for (const auto& task : {cross, square, circles}) {
      const double r = task_reward(task, state);
      CHECK((r == 0.0 || r == 1.0));
      CHECK(task_reward(task, state) == r);
    }
  }
}

TEST_CASE("gridworld construction") {
  SUBCASE("1x2 open grid reproduces the chain under always-right") {
    const auto mdp = build_gridworld(2, 1, 0.5, {0, 0}, 0);
    // always-right policy: state marginals follow s0 -> s1 -> s1
    tab::TabularPolicy right{2, 4, {0, 0, 0, 1, 0, 0, 0, 1}};
    const auto m = tab::successor_measure_exact(mdp, right);
    const int n = mdp.n_pairs();
    auto state_mass = [&](int s0, int s) {
      double acc = 0.0;
      for (int a = 0; a < 4; ++a) acc += m[static_cast<std::size_t>(mdp.pair(s0, 3)) * n + mdp.pair(s, a)];
      return acc;
    };
    CHECK(state_mass(0, 0) == doctest::Approx(1.0));
    CHECK(state_mass(0, 1) == doctest::Approx(1.0));
    CHECK(state_mass(1, 1) == doctest::Approx(2.0));
  }

  SUBCASE("boundary moves self-transition and rows sum to 1") {
    const auto mdp = build_gridworld(3, 3, 0.9, std::vector<std::uint8_t>(9, 0), 1);
    // top-left corner, action up keeps the state
    CHECK(mdp.p(0, kGridUp, 0) == 1.0);
    CHECK(mdp.p(0, kGridLeft, 0) == 1.0);
    CHECK(mdp.p(0, kGridRight, 1) == 1.0);
    mdp.validate();
  }

  SUBCASE("walls block movement") {
    // 2x1 with a wall on the right cell: right from cell 0 self-transitions
    const auto mdp = build_gridworld(2, 1, 0.9, {0, 1}, 2);
    CHECK(mdp.p(0, kGridRight, 0) == 1.0);
    CHECK(mdp.rho0[0] == 1.0);
    CHECK(mdp.rho0[1] == 0.0);
  }

  SUBCASE("degenerate masks are rejected") {
    CHECK_THROWS_AS(build_gridworld(2, 1, 0.9, {1, 1}, 0), ConfigError);
    CHECK_THROWS_AS(build_gridworld(9, 9, 0.9, std::vector<std::uint8_t>(81, 0), 0),
                    ConfigError);
  }
}

TEST_CASE("gridworld collection covers open cells and is one-hot") {
  const auto grid = build_grid(3, 3, 0.5, std::vector<std::uint8_t>(9, 0), 0);
  const auto ds = collect_gridworld(grid, 2000, 5);
  CHECK(ds.state_dim == 9);
  CHECK(ds.env_tag == "grid:3x3");
  std::vector<int> visits(9, 0);
  for (const auto& rec : ds.records) {
    double sum = 0.0;
    int idx = -1;
    for (int i = 0; i < 9; ++i) {
      sum += rec.s[i];
      if (rec.s[i] == 1.0) idx = i;
    }
    CHECK(sum == 1.0);
    REQUIRE(idx >= 0);
    ++visits[idx];
    CHECK(rec.a[0] >= 0.0);
    CHECK(rec.a[0] <= 3.0);
  }
  for (int v : visits) CHECK(v > 0);
}

TEST_CASE("dataset round-trip is bit-exact") {
  Rng rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    const auto ds = random_dataset(rng);
    const auto path = temp_file("roundtrip.zold");
    write_dataset(ds, path.string());
    const auto back = read_dataset(path.string());
    CHECK(back == ds);

    // writing twice produces identical bytes
    const auto path2 = temp_file("roundtrip2.zold");
    write_dataset(ds, path2.string());
    std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
    const std::string bytes_a((std::istreambuf_iterator<char>(a)), {});
    const std::string bytes_b((std::istreambuf_iterator<char>(b)), {});
    CHECK(bytes_a == bytes_b);
  }
}

TEST_CASE("empty dataset round-trips with the fixed header size") {
  OfflineDataset ds;
  ds.env_tag = "donut";
  ds.seed = 9;
  ds.state_dim = 2;
  ds.action_dim = 2;
  const auto path = temp_file("empty.zold");
  write_dataset(ds, path.string());
  // magic(4) + version(4) + taglen(4) + tag(5) + seed(8) + count(8)
  // + state-dim(4) + action-dim(4) + has-reward(1)
  CHECK(fs::file_size(path) == 42);
  const auto back = read_dataset(path.string());
  CHECK(back == ds);
}

TEST_CASE("format errors carry byte offsets") {
  const auto ds = collect_donut(3, 0.6, 1);
  const auto path = temp_file("corrupt.zold");
  write_dataset(ds, path.string());

  SUBCASE("bad magic reports offset 0") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.put('X');
    f.close();
    try {
      read_dataset(path.string());
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.byte_offset == 0);
    }
  }

  SUBCASE("truncation is caught") {
    const auto full = fs::file_size(path);
    fs::resize_file(path, full - 7);
    CHECK_THROWS_AS(read_dataset(path.string()), FormatError);
  }

  SUBCASE("version mismatch is rejected") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const std::uint32_t bad = 99;
    f.write(reinterpret_cast<const char*>(&bad), 4);
    f.close();
    CHECK_THROWS_AS(read_dataset(path.string()), FormatError);
  }
}

TEST_CASE("csv export mirrors the record layout") {
  const auto ds = collect_donut(4, 0.6, 2);
  const auto path = temp_file("ds.csv");
  write_dataset_csv(ds, path.string());
  std::ifstream is(path);
  std::string header;
  std::getline(is, header);
  CHECK(header == "s0,s1,a0,a1,s_next0,s_next1,s_plus0,s_plus1");
  int rows = 0;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 4);
}
