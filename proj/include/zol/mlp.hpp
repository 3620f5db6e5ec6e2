#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "zol/graph.hpp"
#include "zol/rng.hpp"

namespace zol::diff {

enum class Activation : std::uint8_t { kTanh = 0, kRelu = 1 };
enum class OutputMap : std::uint8_t { kIdentity = 0, kL2NormalizeSqrtDim = 1 };

// Fully connected net with one flat parameter vector (per-layer row-major
// weight matrix followed by bias). All arithmetic in double.
class Mlp {
 public:
  Mlp() = default;
  // widths = {input, hidden..., output}
  Mlp(std::vector<int> widths, Activation hidden_act, OutputMap output_map);

  void init_uniform(Rng& rng);  // per-layer uniform +-sqrt(6/(fan_in+fan_out))

  int input_dim() const { return widths_.front(); }
  int output_dim() const { return widths_.back(); }
  const std::vector<int>& widths() const { return widths_; }
  Activation hidden_activation() const { return act_; }
  OutputMap output_map() const { return out_map_; }

  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }
  std::span<double> grads() { return grads_; }
  std::size_t param_count() const { return params_.size(); }

  // Reusable scratch for the no-tape forward pass; one per calling thread.
  struct Workspace {
    std::vector<double> a, b;
  };

  void forward(std::span<const double> in, std::span<double> out, Workspace& ws) const;
  std::vector<double> forward(std::span<const double> in) const;
  // Batched: X is row-major [n x input_dim], Y row-major [n x output_dim].
  void forward_batch(const double* x, int n, double* y, Workspace& ws) const;

  // Tape w.r.t. this net's weights; the input is a constant. Adjoints land in
  // grads() after Graph::backward.
  int forward_tape_params(Graph& g, std::span<const double> in);
  int forward_tape_params_batch(Graph& g, std::span<const double> x, int n);
  // Tape w.r.t. an input node; weights enter as constants.
  int forward_tape_input(Graph& g, int input_node) const;
  int forward_tape_input_batch(Graph& g, int input_node, int n) const;

  void save(std::ostream& os) const;
  static Mlp load(std::istream& is);

  friend bool operator==(const Mlp& a, const Mlp& b) {
    return a.widths_ == b.widths_ && a.act_ == b.act_ && a.out_map_ == b.out_map_ &&
           a.params_ == b.params_;
  }

 private:
  struct Layer {
    int w_off, b_off, in, out;
  };

  std::vector<int> widths_;
  std::vector<Layer> layers_;
  Activation act_ = Activation::kTanh;
  OutputMap out_map_ = OutputMap::kIdentity;
  std::vector<double> params_;
  std::vector<double> grads_;
};

}  // namespace zol::diff
