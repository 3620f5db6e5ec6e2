#pragma once

#include <cstdint>
#include <vector>

#include "zol/dataset.hpp"
#include "zol/tabular.hpp"

namespace zol::env {

// 4-action gridworld (up/down/left/right); moving into a wall or the boundary
// keeps the state. Cell (x, y) has index y * width + x.
struct GridSpec {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> walls;  // 1 = wall
  tab::TabularMDP mdp;

  int cell(int x, int y) const { return y * width + x; }
  bool open(int x, int y) const { return walls[cell(x, y)] == 0; }
  std::vector<double> one_hot(int state) const;
};

inline constexpr int kGridUp = 0;
inline constexpr int kGridDown = 1;
inline constexpr int kGridLeft = 2;
inline constexpr int kGridRight = 3;

GridSpec build_grid(int width, int height, double gamma,
                    const std::vector<std::uint8_t>& wall_mask, std::uint64_t seed);

// Spec-facing shorthand returning just the MDP.
tab::TabularMDP build_gridworld(int width, int height, double gamma,
                                const std::vector<std::uint8_t>& wall_mask,
                                std::uint64_t seed);

// Uniform random-walk dataset over the grid; states stored one-hot, actions
// as a single index value. s_plus by uniform shuffle like the donut.
OfflineDataset collect_gridworld(const GridSpec& grid, std::uint64_t n_records,
                                 std::uint64_t seed);

}  // namespace zol::env
