#include "zol/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "zol/errors.hpp"

namespace zol::eval {

int HeatmapGrid::masked_count() const {
  int n = 0;
  for (std::uint8_t m : mask) n += m;
  return n;
}

HeatmapGrid render_heatmap(const fb::FBModel& model, std::span<const double> z,
                           int resolution) {
  if (resolution < 8) throw ConfigError("heatmap resolution must be >= 8");
  HeatmapGrid grid;
  grid.resolution = resolution;
  grid.values.assign(static_cast<std::size_t>(resolution) * resolution,
                     std::numeric_limits<double>::quiet_NaN());
  grid.mask.assign(grid.values.size(), 0);
  std::vector<double> s(2);
  for (int row = 0; row < resolution; ++row) {
    for (int col = 0; col < resolution; ++col) {
      s[0] = grid.center_x(col);
      s[1] = grid.center_y(row);
      const double r = std::hypot(s[0], s[1]);
      if (r < grid.rad_min || r > grid.bound) continue;
      const std::size_t idx = static_cast<std::size_t>(row) * resolution + col;
      grid.mask[idx] = 1;
      const std::vector<double> b = model.b_eval(s);
      double v = 0.0;
      for (int k = 0; k < model.d; ++k) v += b[k] * z[k];
      grid.values[idx] = v;
    }
  }
  return grid;
}

double reconstruction_correlation(const HeatmapGrid& grid, const env::TaskReward& task) {
  std::vector<double> xs, ys;
  std::vector<double> s(2);
  for (int row = 0; row < grid.resolution; ++row) {
    for (int col = 0; col < grid.resolution; ++col) {
      const std::size_t idx = static_cast<std::size_t>(row) * grid.resolution + col;
      if (!grid.mask[idx]) continue;
      s[0] = grid.center_x(col);
      s[1] = grid.center_y(row);
      xs.push_back(grid.values[idx]);
      ys.push_back(env::task_reward(task, s));
    }
  }
  if (xs.size() < 2) throw PreconditionError("correlation needs >= 2 masked cells");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw DegenerateError("correlation undefined: zero variance");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double tabular_return(const tab::TabularMDP& mdp, const tab::TabularPolicy& policy,
                      const tab::TabularReward& reward) {
  const std::vector<double> d = tab::occupancy_exact(mdp, policy);
  double ret = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) ret += d[i] * reward.values[i];
  return ret;
}

ComparisonReport compare_fb_vs_zol(const fb::FBModel& model, const env::OfflineDataset& dataset,
                                   const env::TaskReward& task, const adapt::ZolParams& params,
                                   std::span<const std::uint64_t> seeds,
                                   const adapt::ResetSampler& reset_sampler) {
  constexpr int kResolution = 64;
  ComparisonReport report;
  report.task = env::task_name(task);
  const adapt::RewardLabeler labeler = [&task](std::span<const double> s) {
    return env::task_reward(task, s);
  };
  for (std::uint64_t seed : seeds) {
    adapt::ZolParams p = params;
    p.seed = seed;
    SeedComparison row;
    row.seed = seed;
    row.adapt = adapt::zol_adapt(model, dataset, labeler, p, reset_sampler);
    row.z_fb = row.adapt.z_init;
    row.z_zol = row.adapt.z_final;
    row.grid_fb = render_heatmap(model, row.z_fb, kResolution);
    row.grid_zol = render_heatmap(model, row.z_zol, kResolution);
    row.corr_fb = reconstruction_correlation(row.grid_fb, task);
    row.corr_zol = reconstruction_correlation(row.grid_zol, task);
    row.delta = row.corr_zol - row.corr_fb;
    report.mean_corr_fb += row.corr_fb;
    report.mean_corr_zol += row.corr_zol;
    report.mean_delta += row.delta;
    report.rows.push_back(std::move(row));
  }
  if (!report.rows.empty()) {
    const double n = static_cast<double>(report.rows.size());
    report.mean_corr_fb /= n;
    report.mean_corr_zol /= n;
    report.mean_delta /= n;
  }
  return report;
}

void write_heatmap_csv(const HeatmapGrid& grid, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.precision(17);
  for (int row = 0; row < grid.resolution; ++row) {
    for (int col = 0; col < grid.resolution; ++col) {
      const std::size_t idx = static_cast<std::size_t>(row) * grid.resolution + col;
      if (col > 0) os << ',';
      if (grid.mask[idx]) {
        os << grid.values[idx];
      } else {
        os << "nan";
      }
    }
    os << '\n';
  }
}

void write_heatmap_pgm(const HeatmapGrid& grid, const std::string& path) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    if (!grid.mask[i]) continue;
    lo = std::min(lo, grid.values[i]);
    hi = std::max(hi, grid.values[i]);
  }
  const double range = hi > lo ? hi - lo : 1.0;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "P5\n" << grid.resolution << ' ' << grid.resolution << "\n255\n";
  for (std::size_t i = 0; i < grid.values.size(); ++i) {
    std::uint8_t byte = 0;
    if (grid.mask[i]) {
      const double t = (grid.values[i] - lo) / range;
      byte = static_cast<std::uint8_t>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
    }
    os.write(reinterpret_cast<const char*>(&byte), 1);
  }
}

void write_report_csv(const ComparisonReport& report, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "task,seed,corr_fb,corr_zol,delta\n";
  os.precision(17);
  for (const SeedComparison& row : report.rows) {
    os << report.task << ',' << row.seed << ',' << row.corr_fb << ',' << row.corr_zol << ','
       << row.delta << '\n';
  }
  os << report.task << ",mean," << report.mean_corr_fb << ',' << report.mean_corr_zol << ','
     << report.mean_delta << '\n';
}

}  // namespace zol::eval
