#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "zol/dataset.hpp"
#include "zol/rng.hpp"

namespace zol::env {

// Annular 2D world. Starts are drawn from a radially decaying truncated
// Gaussian over the annulus; dynamics add a component-clipped action and
// radially clamp back onto the annulus.
struct DonutWorld {
  double rad_min = 0.25;
  double rad_max = 1.5;
  double action_clip = 0.1;
  double support_sigma = 0.6;

  bool in_annulus(double x, double y) const;
  // rejection sampling from exp(-|s|^2 / 2 sigma^2) restricted to the annulus
  std::array<double, 2> sample_start(Rng& rng) const;
  std::array<double, 2> step(std::array<double, 2> s, std::array<double, 2> a) const;
};

// Default random-walk segment length during collection.
inline constexpr int kDonutWalkLen = 10;

// Reward-free random-walk dataset; s_plus filled by a uniform shuffle over
// the collected states. Deterministic in (n_records, sigma, seed).
OfflineDataset collect_donut(std::uint64_t n_records, double sigma, std::uint64_t seed);

enum class TaskKind : std::uint8_t { kSquare, kTwoCircles, kCross, kGoal, kTabular };

struct TaskReward {
  TaskKind kind = TaskKind::kCross;
  std::vector<double> parameters;
};

TaskReward parse_task(const std::string& name);
std::string task_name(const TaskReward& task);

double task_reward(const TaskReward& task, std::span<const double> s);

}  // namespace zol::env
