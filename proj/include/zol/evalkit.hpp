#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "zol/adapt.hpp"
#include "zol/donut.hpp"
#include "zol/fb.hpp"
#include "zol/tabular.hpp"

namespace zol::eval {

// Square grid over [-bound, bound]^2; cells outside the annulus are masked
// and carry NaN. Row 0 is the top of the image (y = +bound).
struct HeatmapGrid {
  int resolution = 0;
  double bound = 1.5;
  double rad_min = 0.25;
  std::vector<double> values;       // resolution^2, NaN where masked out
  std::vector<std::uint8_t> mask;   // 1 = inside the annulus

  double center_x(int col) const { return -bound + (col + 0.5) * 2.0 * bound / resolution; }
  double center_y(int row) const { return bound - (row + 0.5) * 2.0 * bound / resolution; }
  int masked_count() const;
};

// B(s)^T z on annulus cell centers.
HeatmapGrid render_heatmap(const fb::FBModel& model, std::span<const double> z,
                           int resolution);

// Pearson correlation between grid values and the task reward over masked
// cells; DegenerateError when either side has zero variance.
double reconstruction_correlation(const HeatmapGrid& grid, const env::TaskReward& task);

// E_{d^pi}[r] via the exact occupancy.
double tabular_return(const tab::TabularMDP& mdp, const tab::TabularPolicy& policy,
                      const tab::TabularReward& reward);

struct SeedComparison {
  std::uint64_t seed = 0;
  double corr_fb = 0.0;
  double corr_zol = 0.0;
  double delta = 0.0;
  std::vector<double> z_fb;
  std::vector<double> z_zol;
  HeatmapGrid grid_fb;
  HeatmapGrid grid_zol;
  adapt::AdaptResult adapt;
};

struct ComparisonReport {
  std::string task;
  std::vector<SeedComparison> rows;
  double mean_corr_fb = 0.0;
  double mean_corr_zol = 0.0;
  double mean_delta = 0.0;
};

// Per seed: zero-shot latent vs ZOL-adapted latent, both scored by
// reconstruction correlation at resolution 64.
ComparisonReport compare_fb_vs_zol(const fb::FBModel& model, const env::OfflineDataset& dataset,
                                   const env::TaskReward& task, const adapt::ZolParams& params,
                                   std::span<const std::uint64_t> seeds,
                                   const adapt::ResetSampler& reset_sampler);

// CSV matrix with nan sentinels for masked cells.
void write_heatmap_csv(const HeatmapGrid& grid, const std::string& path);
// Binary P5 portable graymap, 8-bit, linear min-max scaling over masked cells.
void write_heatmap_pgm(const HeatmapGrid& grid, const std::string& path);
void write_report_csv(const ComparisonReport& report, const std::string& path);

}  // namespace zol::eval
