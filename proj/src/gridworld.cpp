#include "zol/gridworld.hpp"

#include <string>

#include "zol/errors.hpp"

namespace zol::env {

std::vector<double> GridSpec::one_hot(int state) const {
  std::vector<double> v(static_cast<std::size_t>(width) * height, 0.0);
  v[state] = 1.0;
  return v;
}

GridSpec build_grid(int width, int height, double gamma,
                    const std::vector<std::uint8_t>& wall_mask, std::uint64_t seed) {
  (void)seed;  // construction is deterministic; kept for interface symmetry
  if (width <= 0 || height <= 0 || width * height > 64) {
    throw ConfigError("gridworld: width*height must be in [1, 64]");
  }
  if (wall_mask.size() != static_cast<std::size_t>(width) * height) {
    throw ConfigError("gridworld: wall mask size mismatch");
  }
  int open_cells = 0;
  for (std::uint8_t w : wall_mask) {
    if (w == 0) ++open_cells;
  }
  if (open_cells == 0) throw ConfigError("gridworld: no open cells");

  GridSpec grid;
  grid.width = width;
  grid.height = height;
  grid.walls = wall_mask;

  const int n = width * height;
  tab::TabularMDP& mdp = grid.mdp;
  mdp.n_states = n;
  mdp.n_actions = 4;
  mdp.gamma = gamma;
  mdp.transitions.assign(static_cast<std::size_t>(n) * 4 * n, 0.0);
  mdp.rho0.assign(n, 0.0);

  constexpr int dx[4] = {0, 0, -1, 1};
  constexpr int dy[4] = {-1, 1, 0, 0};
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int s = grid.cell(x, y);
      for (int a = 0; a < 4; ++a) {
        int nx = x + dx[a];
        int ny = y + dy[a];
        if (nx < 0 || nx >= width || ny < 0 || ny >= height || !grid.open(nx, ny) ||
            !grid.open(x, y)) {
          nx = x;
          ny = y;
        }
        mdp.transitions[(static_cast<std::size_t>(s) * 4 + a) * n + grid.cell(nx, ny)] = 1.0;
      }
      if (grid.open(x, y)) mdp.rho0[s] = 1.0 / open_cells;
    }
  }
  mdp.validate();
  return grid;
}

tab::TabularMDP build_gridworld(int width, int height, double gamma,
                                const std::vector<std::uint8_t>& wall_mask,
                                std::uint64_t seed) {
  return build_grid(width, height, gamma, wall_mask, seed).mdp;
}

OfflineDataset collect_gridworld(const GridSpec& grid, std::uint64_t n_records,
                                 std::uint64_t seed) {
  Rng rng(seed);
  const int n = grid.width * grid.height;

  std::vector<int> open_states;
  for (int s = 0; s < n; ++s) {
    if (grid.walls[s] == 0) open_states.push_back(s);
  }

  OfflineDataset ds;
  ds.env_tag = "grid:" + std::to_string(grid.width) + "x" + std::to_string(grid.height);
  ds.seed = seed;
  ds.state_dim = static_cast<std::uint32_t>(n);
  ds.action_dim = 1;
  ds.has_reward = false;
  ds.records.reserve(n_records);

  constexpr int kWalkLen = 10;
  while (ds.records.size() < n_records) {
    int s = open_states[rng.below(open_states.size())];
    for (int t = 0; t < kWalkLen && ds.records.size() < n_records; ++t) {
      const int a = static_cast<int>(rng.below(4));
      // deterministic transition: the single successor with probability 1
      int s2 = s;
      for (int cand = 0; cand < n; ++cand) {
        if (grid.mdp.p(s, a, cand) == 1.0) {
          s2 = cand;
          break;
        }
      }
      TransitionRecord rec;
      rec.s = grid.one_hot(s);
      rec.a = {static_cast<double>(a)};
      rec.s_next = grid.one_hot(s2);
      ds.records.push_back(std::move(rec));
      s = s2;
    }
  }

  std::vector<std::uint64_t> perm(ds.records.size());
  for (std::uint64_t i = 0; i < perm.size(); ++i) perm[i] = i;
  for (std::uint64_t i = perm.size(); i > 1; --i) {
    std::swap(perm[i - 1], perm[rng.below(i)]);
  }
  for (std::uint64_t i = 0; i < perm.size(); ++i) {
    ds.records[i].s_plus = ds.records[perm[i]].s;
  }
  return ds;
}

}  // namespace zol::env
