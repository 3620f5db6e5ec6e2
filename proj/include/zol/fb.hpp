#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "zol/dataset.hpp"
#include "zol/graph.hpp"
#include "zol/mlp.hpp"
#include "zol/rng.hpp"

namespace zol::fb {

// How raw dataset actions map onto the model's finite action set.
enum class ActionMode : std::uint8_t {
  kCompass9 = 0,  // snap a 2-vector to 8 compass steps of length 0.1 plus stay
  kIndex = 1,     // action stored as an index
};

struct FBConfig {
  int d = 32;
  double gamma = 0.98;
  int state_dim = 2;
  int action_count = 9;
  ActionMode action_mode = ActionMode::kCompass9;
  bool b_state_action = false;  // B(s,a) variant for tabular oracle tests
  std::vector<int> f_hidden = {128, 128};
  std::vector<int> b_hidden = {128};
  diff::Activation hidden_act = diff::Activation::kTanh;
  diff::OutputMap b_output = diff::OutputMap::kL2NormalizeSqrtDim;
};

// Forward-backward representation: F(s, a-one-hot, z) -> R^d and B(s[,a]) ->
// R^d with frozen target copies updated only by Polyak averaging.
struct FBModel {
  diff::Mlp f, b, f_target, b_target;
  int d = 0;
  double gamma = 0.0;
  int state_dim = 0;
  int action_count = 0;
  ActionMode action_mode = ActionMode::kCompass9;
  bool b_state_action = false;

  std::array<double, 2> compass_action(int idx) const;
  int encode_action(std::span<const double> a) const;

  void f_input(std::span<const double> s, int action, std::span<const double> z,
               std::vector<double>& out) const;
  void b_input(std::span<const double> s, int action, std::vector<double>& out) const;

  std::vector<double> f_eval(std::span<const double> s, int action,
                             std::span<const double> z) const;
  std::vector<double> b_eval(std::span<const double> s, int action = 0) const;

  void save(std::ostream& os) const;
  static FBModel load(std::istream& is);
  void save_file(const std::string& path) const;
  static FBModel load_file(const std::string& path);
};

FBModel make_fb_model(const FBConfig& cfg, Rng& init_rng);

// z * sqrt(d) / ||z||; NumericError on the zero vector.
std::vector<double> project_z(std::span<const double> z);

// Uniform on the sphere of radius sqrt(d) with probability latent_mix,
// otherwise project_z(B(s)) for a random dataset state.
std::vector<double> sample_latent(const FBModel& model, const env::OfflineDataset& dataset,
                                  double latent_mix, Rng& rng);

// argmax with ties broken toward the lowest index.
int argmax_lowest(std::span<const double> scores);

// argmax_a F(s,a,z)^T z over the finite action set.
int act_greedy(const FBModel& model, std::span<const double> s, std::span<const double> z);

// Batched greedy actions: one F evaluation per action over the whole batch.
std::vector<int> greedy_actions(const FBModel& model,
                                std::span<const std::vector<double>> states,
                                std::span<const std::vector<double>> z_batch);

struct FbBatch {
  std::vector<std::vector<double>> s, s_next, s_plus;
  std::vector<int> a;
  std::vector<int> a_plus;  // used only by the B(s,a) variant
  std::size_t size() const { return s.size(); }
};

FbBatch batch_from_records(const FBModel& model, const env::OfflineDataset& dataset,
                           std::span<const std::uint64_t> indices,
                           std::span<const std::uint64_t> plus_indices = {});

struct FbLossParts {
  double td = 0.0;
  double ortho = 0.0;
  double total = 0.0;
};

// Builds the TD loss plus the orthonormality penalty on the tape; returns the
// scalar loss node. Target networks contribute constants only.
int fb_td_loss(diff::Graph& g, FBModel& model, const FbBatch& batch,
               std::span<const std::vector<double>> z_batch, double ortho_coef,
               FbLossParts* parts = nullptr);

struct FBTrainConfig {
  int batch_size = 256;
  long train_steps = 16000;
  double lr = 1e-3;
  double lr_final = 0.0;  // linear decay target; <= 0 means constant lr
  double polyak_tau = 0.01;
  double ortho_coef = 1.0;
  double latent_mix = 0.5;  // probability of a sphere-sampled z
  std::uint64_t seed = 0;
  void validate() const;
};

struct FbTrainResult {
  FBModel model;
  std::vector<double> loss_trace;
};

FbTrainResult train_fb(const env::OfflineDataset& dataset, const FBConfig& model_cfg,
                       const FBTrainConfig& train_cfg);

// B(s)^T z per state (state-only backward map).
std::vector<double> reconstruct_reward(const FBModel& model,
                                       std::span<const std::vector<double>> states,
                                       std::span<const double> z);

}  // namespace zol::fb
