#include "zol/donut.hpp"

#include <algorithm>
#include <cmath>

#include "zol/errors.hpp"

namespace zol::env {

bool DonutWorld::in_annulus(double x, double y) const {
  const double r = std::sqrt(x * x + y * y);
  return r >= rad_min && r <= rad_max;
}

std::array<double, 2> DonutWorld::sample_start(Rng& rng) const {
  const double inv2s2 = 1.0 / (2.0 * support_sigma * support_sigma);
  for (long tries = 0; tries < 1'000'000; ++tries) {
    const double x = rng.uniform(-rad_max, rad_max);
    const double y = rng.uniform(-rad_max, rad_max);
    if (!in_annulus(x, y)) continue;
    const double accept = std::exp(-(x * x + y * y) * inv2s2);
    if (rng.uniform() < accept) return {x, y};
  }
  throw ConfigError("donut start sampling exceeded 1e6 proposals; sigma too small");
}

std::array<double, 2> DonutWorld::step(std::array<double, 2> s,
                                       std::array<double, 2> a) const {
  const double ax = std::clamp(a[0], -action_clip, action_clip);
  const double ay = std::clamp(a[1], -action_clip, action_clip);
  double x = s[0] + ax;
  double y = s[1] + ay;
  const double r = std::sqrt(x * x + y * y);
  if (r < rad_min) {
    const double k = r > 0.0 ? rad_min / r : 0.0;
    if (r == 0.0) {
      x = rad_min;
      y = 0.0;
    } else {
      x *= k;
      y *= k;
    }
  } else if (r > rad_max) {
    const double k = rad_max / r;
    x *= k;
    y *= k;
  }
  return {x, y};
}

OfflineDataset collect_donut(std::uint64_t n_records, double sigma, std::uint64_t seed) {
  if (sigma <= 0.0) throw ConfigError("collect_donut: sigma must be positive");
  DonutWorld world;
  world.support_sigma = sigma;
  Rng rng(seed);

  OfflineDataset ds;
  ds.env_tag = "donut";
  ds.seed = seed;
  ds.state_dim = 2;
  ds.action_dim = 2;
  ds.has_reward = false;
  ds.records.reserve(n_records);

  while (ds.records.size() < n_records) {
    std::array<double, 2> s = world.sample_start(rng);
    for (int t = 0; t < kDonutWalkLen && ds.records.size() < n_records; ++t) {
      const std::array<double, 2> a = {rng.uniform(-world.action_clip, world.action_clip),
                                       rng.uniform(-world.action_clip, world.action_clip)};
      const std::array<double, 2> s2 = world.step(s, a);
      TransitionRecord rec;
      rec.s = {s[0], s[1]};
      rec.a = {a[0], a[1]};
      rec.s_next = {s2[0], s2[1]};
      ds.records.push_back(std::move(rec));
      s = s2;
    }
  }

  // s+ ~ d^beta independently of (s,a): a uniform shuffle of collected states.
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

TaskReward parse_task(const std::string& name) {
  if (name == "square") return {TaskKind::kSquare, {}};
  if (name == "twocircles") return {TaskKind::kTwoCircles, {}};
  if (name == "cross") return {TaskKind::kCross, {}};
  if (name == "goal") return {TaskKind::kGoal, {0.9, 0.0, 0.3}};
  throw ConfigError("unknown task '" + name +
                    "'; valid tasks: square, twocircles, cross, goal");
}

std::string task_name(const TaskReward& task) {
  switch (task.kind) {
    case TaskKind::kSquare: return "square";
    case TaskKind::kTwoCircles: return "twocircles";
    case TaskKind::kCross: return "cross";
    case TaskKind::kGoal: return "goal";
    case TaskKind::kTabular: return "tabular";
  }
  return "?";
}

double task_reward(const TaskReward& task, std::span<const double> s) {
  switch (task.kind) {
    case TaskKind::kSquare: {
      const double linf = std::max(std::abs(s[0]), std::abs(s[1]));
      return (linf >= 0.6 && linf <= 0.9) ? 1.0 : 0.0;
    }
    case TaskKind::kTwoCircles: {
      const double dr = std::hypot(s[0] - 0.9, s[1]);
      const double dl = std::hypot(s[0] + 0.9, s[1]);
      return std::min(dr, dl) <= 0.3 ? 1.0 : 0.0;
    }
    case TaskKind::kCross:
      return std::min(std::abs(s[0]), std::abs(s[1])) <= 0.15 ? 1.0 : 0.0;
    case TaskKind::kGoal: {
      if (task.parameters.size() != 3) throw ConfigError("goal task needs (x, y, radius)");
      return std::hypot(s[0] - task.parameters[0], s[1] - task.parameters[1]) <=
                     task.parameters[2]
                 ? 1.0
                 : 0.0;
    }
    case TaskKind::kTabular: {
      // one-hot state; parameters hold one reward per state index
      std::size_t idx = 0;
      for (std::size_t i = 1; i < s.size(); ++i) {
        if (s[i] > s[idx]) idx = i;
      }
      if (idx >= task.parameters.size()) throw ConfigError("tabular task: state index out of range");
      return task.parameters[idx];
    }
  }
  throw ConfigError("unknown task tag");
}

}  // namespace zol::env
