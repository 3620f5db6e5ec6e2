#include "zol/mlp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "zol/errors.hpp"

namespace zol::diff {

namespace {
using CMapMat =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using CMapVec = Eigen::Map<const Eigen::VectorXd>;
}  // namespace

Mlp::Mlp(std::vector<int> widths, Activation hidden_act, OutputMap output_map)
    : widths_(std::move(widths)), act_(hidden_act), out_map_(output_map) {
  if (widths_.size() < 2) throw ShapeError("Mlp needs at least input and output widths");
  for (int w : widths_) {
    if (w <= 0) throw ShapeError("Mlp widths must be positive");
  }
  int off = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    Layer layer;
    layer.in = widths_[l];
    layer.out = widths_[l + 1];
    layer.w_off = off;
    off += layer.in * layer.out;
    layer.b_off = off;
    off += layer.out;
    layers_.push_back(layer);
  }
  params_.assign(off, 0.0);
  grads_.assign(off, 0.0);
}

void Mlp::init_uniform(Rng& rng) {
  for (const Layer& l : layers_) {
    const double bound = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
    for (int i = 0; i < l.in * l.out; ++i) {
      params_[l.w_off + i] = rng.uniform(-bound, bound);
    }
    for (int i = 0; i < l.out; ++i) params_[l.b_off + i] = 0.0;
  }
}

void Mlp::forward(std::span<const double> in, std::span<double> out, Workspace& ws) const {
  if (static_cast<int>(in.size()) != input_dim()) throw ShapeError("Mlp forward: input size");
  if (static_cast<int>(out.size()) != output_dim()) throw ShapeError("Mlp forward: output size");
  ws.a.assign(in.begin(), in.end());
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    ws.b.resize(l.out);
    MapVec(ws.b.data(), l.out).noalias() =
        CMapMat(params_.data() + l.w_off, l.out, l.in) * CMapVec(ws.a.data(), l.in) +
        CMapVec(params_.data() + l.b_off, l.out);
    const bool last = li + 1 == layers_.size();
    if (!last) {
      if (act_ == Activation::kTanh) {
        for (double& v : ws.b) v = std::tanh(v);
      } else {
        for (double& v : ws.b) v = v > 0.0 ? v : 0.0;
      }
    }
    ws.a.swap(ws.b);
  }
  if (out_map_ == OutputMap::kL2NormalizeSqrtDim) {
    double s = 0.0;
    for (double v : ws.a) s += v * v;
    const double norm = std::sqrt(s);
    if (norm == 0.0) throw NumericError("Mlp output normalization of zero vector");
    const double k = std::sqrt(static_cast<double>(output_dim())) / norm;
    for (double& v : ws.a) v *= k;
  }
  std::copy(ws.a.begin(), ws.a.end(), out.begin());
}

std::vector<double> Mlp::forward(std::span<const double> in) const {
  Workspace ws;
  std::vector<double> out(output_dim());
  forward(in, out, ws);
  return out;
}

void Mlp::forward_batch(const double* x, int n, double* y, Workspace& ws) const {
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  ws.a.assign(x, x + static_cast<std::size_t>(n) * input_dim());
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    ws.b.resize(static_cast<std::size_t>(n) * l.out);
    Eigen::Map<RowMat> out_m(ws.b.data(), n, l.out);
    out_m.noalias() = Eigen::Map<const RowMat>(ws.a.data(), n, l.in) *
                      Eigen::Map<const RowMat>(params_.data() + l.w_off, l.out, l.in).transpose();
    out_m.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(params_.data() + l.b_off, l.out);
    const bool last = li + 1 == layers_.size();
    if (!last) {
      if (act_ == Activation::kTanh) {
        for (double& v : ws.b) v = std::tanh(v);
      } else {
        for (double& v : ws.b) v = v > 0.0 ? v : 0.0;
      }
    }
    ws.a.swap(ws.b);
  }
  const int d = output_dim();
  if (out_map_ == OutputMap::kL2NormalizeSqrtDim) {
    const double radius = std::sqrt(static_cast<double>(d));
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += ws.a[i * d + k] * ws.a[i * d + k];
      if (s == 0.0) throw NumericError("Mlp output normalization of zero vector");
      const double k2 = radius / std::sqrt(s);
      for (int k = 0; k < d; ++k) ws.a[i * d + k] *= k2;
    }
  }
  std::copy(ws.a.begin(), ws.a.end(), y);
}

int Mlp::forward_tape_params(Graph& g, std::span<const double> in) {
  int x = g.constant(in);
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    const int w_ref = g.param_ref({params_.data() + l.w_off,
                                   static_cast<std::size_t>(l.in * l.out)},
                                  {grads_.data() + l.w_off,
                                   static_cast<std::size_t>(l.in * l.out)});
    const int b_ref = g.param_ref({params_.data() + l.b_off, static_cast<std::size_t>(l.out)},
                                  {grads_.data() + l.b_off, static_cast<std::size_t>(l.out)});
    x = g.add_bias(b_ref, g.matvec(w_ref, l.out, l.in, x));
    if (li + 1 < layers_.size()) {
      x = act_ == Activation::kTanh ? g.tanh_(x) : g.relu(x);
    }
  }
  if (out_map_ == OutputMap::kL2NormalizeSqrtDim) {
    x = g.l2_normalize(x, std::sqrt(static_cast<double>(output_dim())));
  }
  return x;
}

int Mlp::forward_tape_params_batch(Graph& g, std::span<const double> x, int n) {
  int node = g.constant(x);
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    const int w_ref = g.param_ref({params_.data() + l.w_off,
                                   static_cast<std::size_t>(l.in * l.out)},
                                  {grads_.data() + l.w_off,
                                   static_cast<std::size_t>(l.in * l.out)});
    const int b_ref = g.param_ref({params_.data() + l.b_off, static_cast<std::size_t>(l.out)},
                                  {grads_.data() + l.b_off, static_cast<std::size_t>(l.out)});
    node = g.add_row_bias(b_ref, g.matmul_nt(w_ref, l.out, l.in, node, n), n);
    if (li + 1 < layers_.size()) {
      node = act_ == Activation::kTanh ? g.tanh_(node) : g.relu(node);
    }
  }
  if (out_map_ == OutputMap::kL2NormalizeSqrtDim) {
    node = g.row_l2_normalize(node, n, std::sqrt(static_cast<double>(output_dim())));
  }
  return node;
}

int Mlp::forward_tape_input(Graph& g, int input_node) const {
  int x = input_node;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    x = g.const_matvec(params_.data() + l.w_off, l.out, l.in, x);
    x = g.add_const_vec({params_.data() + l.b_off, static_cast<std::size_t>(l.out)}, x);
    if (li + 1 < layers_.size()) {
      x = act_ == Activation::kTanh ? g.tanh_(x) : g.relu(x);
    }
  }
  if (out_map_ == OutputMap::kL2NormalizeSqrtDim) {
    x = g.l2_normalize(x, std::sqrt(static_cast<double>(output_dim())));
  }
  return x;
}

int Mlp::forward_tape_input_batch(Graph& g, int input_node, int n) const {
  int node = input_node;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    node = g.const_matmul_nt(params_.data() + l.w_off, l.out, l.in, node, n);
    node = g.add_row_const({params_.data() + l.b_off, static_cast<std::size_t>(l.out)}, node, n);
    if (li + 1 < layers_.size()) {
      node = act_ == Activation::kTanh ? g.tanh_(node) : g.relu(node);
    }
  }
  if (out_map_ == OutputMap::kL2NormalizeSqrtDim) {
    node = g.row_l2_normalize(node, n, std::sqrt(static_cast<double>(output_dim())));
  }
  return node;
}

void Mlp::save(std::ostream& os) const {
  const std::uint32_t n = static_cast<std::uint32_t>(widths_.size());
  os.write(reinterpret_cast<const char*>(&n), sizeof n);
  for (int w : widths_) {
    const std::uint32_t u = static_cast<std::uint32_t>(w);
    os.write(reinterpret_cast<const char*>(&u), sizeof u);
  }
  const std::uint8_t act = static_cast<std::uint8_t>(act_);
  const std::uint8_t om = static_cast<std::uint8_t>(out_map_);
  os.write(reinterpret_cast<const char*>(&act), 1);
  os.write(reinterpret_cast<const char*>(&om), 1);
  os.write(reinterpret_cast<const char*>(params_.data()),
           static_cast<std::streamsize>(params_.size() * sizeof(double)));
}

Mlp Mlp::load(std::istream& is) {
  std::uint32_t n = 0;
  is.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!is || n < 2 || n > 64) throw FormatError("bad Mlp layer count", static_cast<std::size_t>(is.tellg()));
  std::vector<int> widths(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::uint32_t w = 0;
    is.read(reinterpret_cast<char*>(&w), sizeof w);
    if (!is || w == 0 || w > (1u << 20)) {
      throw FormatError("bad Mlp width", static_cast<std::size_t>(is.tellg()));
    }
    widths[i] = static_cast<int>(w);
  }
  std::uint8_t act = 0, om = 0;
  is.read(reinterpret_cast<char*>(&act), 1);
  is.read(reinterpret_cast<char*>(&om), 1);
  if (!is || act > 1 || om > 1) {
    throw FormatError("bad Mlp activation tag", static_cast<std::size_t>(is.tellg()));
  }
  Mlp net(widths, static_cast<Activation>(act), static_cast<OutputMap>(om));
  is.read(reinterpret_cast<char*>(net.params_.data()),
          static_cast<std::streamsize>(net.params_.size() * sizeof(double)));
  if (!is) throw FormatError("truncated Mlp parameters", static_cast<std::size_t>(is.tellg()));
  return net;
}

}  // namespace zol::diff
