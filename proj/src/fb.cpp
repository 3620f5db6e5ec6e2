#include "zol/fb.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "zol/errors.hpp"
#include "zol/optim.hpp"

namespace zol::fb {

namespace {

constexpr char kMagic[4] = {'Z', 'O', 'L', 'M'};
constexpr std::uint32_t kVersion = 1;

thread_local diff::Mlp::Workspace tl_ws;

}  // namespace

std::array<double, 2> FBModel::compass_action(int idx) const {
  if (idx == action_count - 1) return {0.0, 0.0};
  const double angle = 2.0 * M_PI * idx / 8.0;
  return {0.1 * std::cos(angle), 0.1 * std::sin(angle)};
}

int FBModel::encode_action(std::span<const double> a) const {
  if (action_mode == ActionMode::kIndex) {
    const int idx = static_cast<int>(a[0]);
    if (idx < 0 || idx >= action_count) throw ShapeError("action index out of range");
    return idx;
  }
  int best = 0;
  double best_d2 = 1e300;
  for (int i = 0; i < action_count; ++i) {
    const std::array<double, 2> c = compass_action(i);
    const double dx = a[0] - c[0];
    const double dy = a[1] - c[1];
    const double d2 = dx * dx + dy * dy;
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return best;
}

void FBModel::f_input(std::span<const double> s, int action, std::span<const double> z,
                      std::vector<double>& out) const {
  out.assign(static_cast<std::size_t>(state_dim) + action_count + d, 0.0);
  std::copy(s.begin(), s.end(), out.begin());
  out[static_cast<std::size_t>(state_dim) + action] = 1.0;
  std::copy(z.begin(), z.end(), out.begin() + state_dim + action_count);
}

void FBModel::b_input(std::span<const double> s, int action, std::vector<double>& out) const {
  if (b_state_action) {
    out.assign(static_cast<std::size_t>(state_dim) + action_count, 0.0);
    std::copy(s.begin(), s.end(), out.begin());
    out[static_cast<std::size_t>(state_dim) + action] = 1.0;
  } else {
    out.assign(s.begin(), s.end());
  }
}

std::vector<double> FBModel::f_eval(std::span<const double> s, int action,
                                    std::span<const double> z) const {
  std::vector<double> in;
  f_input(s, action, z, in);
  std::vector<double> out(d);
  f.forward(in, out, tl_ws);
  return out;
}

std::vector<double> FBModel::b_eval(std::span<const double> s, int action) const {
  std::vector<double> in;
  b_input(s, action, in);
  std::vector<double> out(d);
  b.forward(in, out, tl_ws);
  return out;
}

FBModel make_fb_model(const FBConfig& cfg, Rng& init_rng) {
  if (cfg.d < 2) throw ConfigError("FB latent dimension must be >= 2");
  if (cfg.state_dim <= 0 || cfg.action_count <= 0) {
    throw ConfigError("FB model needs positive state/action dimensions");
  }
  if (cfg.gamma < 0.0 || cfg.gamma >= 1.0) throw ConfigError("FB gamma must be in [0,1)");

  FBModel m;
  m.d = cfg.d;
  m.gamma = cfg.gamma;
  m.state_dim = cfg.state_dim;
  m.action_count = cfg.action_count;
  m.action_mode = cfg.action_mode;
  m.b_state_action = cfg.b_state_action;

  std::vector<int> f_widths = {cfg.state_dim + cfg.action_count + cfg.d};
  f_widths.insert(f_widths.end(), cfg.f_hidden.begin(), cfg.f_hidden.end());
  f_widths.push_back(cfg.d);
  std::vector<int> b_widths = {cfg.b_state_action ? cfg.state_dim + cfg.action_count
                                                  : cfg.state_dim};
  b_widths.insert(b_widths.end(), cfg.b_hidden.begin(), cfg.b_hidden.end());
  b_widths.push_back(cfg.d);

  m.f = diff::Mlp(f_widths, cfg.hidden_act, diff::OutputMap::kIdentity);
  m.b = diff::Mlp(b_widths, cfg.hidden_act, cfg.b_output);
  m.f.init_uniform(init_rng);
  m.b.init_uniform(init_rng);
  m.f_target = m.f;
  m.b_target = m.b;
  return m;
}

std::vector<double> project_z(std::span<const double> z) {
  double s = 0.0;
  for (double v : z) s += v * v;
  if (s == 0.0) throw NumericError("project_z of the zero vector");
  const double k = std::sqrt(static_cast<double>(z.size())) / std::sqrt(s);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = k * z[i];
  return out;
}

std::vector<double> sample_latent(const FBModel& model, const env::OfflineDataset& dataset,
                                  double latent_mix, Rng& rng) {
  if (dataset.records.empty()) throw PreconditionError("sample_latent: empty dataset");
  if (rng.uniform() < latent_mix) {
    std::vector<double> z(model.d);
    double s = 0.0;
    while (s == 0.0) {
      for (double& v : z) v = rng.normal();
      s = 0.0;
      for (double v : z) s += v * v;
    }
    return project_z(z);
  }
  const std::uint64_t i = rng.below(dataset.records.size());
  const env::TransitionRecord& rec = dataset.records[i];
  const int action = model.b_state_action ? model.encode_action(rec.a) : 0;
  return project_z(model.b_eval(rec.s, action));
}

int argmax_lowest(std::span<const double> scores) {
  int best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = static_cast<int>(i);
  }
  return best;
}

int act_greedy(const FBModel& model, std::span<const double> s, std::span<const double> z) {
  std::vector<double> scores(model.action_count);
  std::vector<double> in;
  for (int a = 0; a < model.action_count; ++a) {
    model.f_input(s, a, z, in);
    std::vector<double> f(model.d);
    model.f.forward(in, f, tl_ws);
    double q = 0.0;
    for (int i = 0; i < model.d; ++i) q += f[i] * z[i];
    scores[a] = q;
  }
  return argmax_lowest(scores);
}

std::vector<int> greedy_actions(const FBModel& model,
                                std::span<const std::vector<double>> states,
                                std::span<const std::vector<double>> z_batch) {
  const int n = static_cast<int>(states.size());
  const int f_in = model.f.input_dim();
  const int d = model.d;
  std::vector<double> x(static_cast<std::size_t>(n) * f_in, 0.0);
  std::vector<double> f(static_cast<std::size_t>(n) * d);
  std::vector<double> best_score(n, -1e300);
  std::vector<int> best(n, 0);
  for (int i = 0; i < n; ++i) {
    std::copy(states[i].begin(), states[i].end(), x.begin() + static_cast<std::size_t>(i) * f_in);
    std::copy(z_batch[i].begin(), z_batch[i].end(),
              x.begin() + static_cast<std::size_t>(i) * f_in + model.state_dim +
                  model.action_count);
  }
  for (int a = 0; a < model.action_count; ++a) {
    for (int i = 0; i < n; ++i) {
      x[static_cast<std::size_t>(i) * f_in + model.state_dim + a] = 1.0;
    }
    model.f.forward_batch(x.data(), n, f.data(), tl_ws);
    for (int i = 0; i < n; ++i) {
      double q = 0.0;
      const double* fi = f.data() + static_cast<std::size_t>(i) * d;
      const double* zi = z_batch[i].data();
      for (int k = 0; k < d; ++k) q += fi[k] * zi[k];
      if (q > best_score[i]) {
        best_score[i] = q;
        best[i] = a;
      }
      x[static_cast<std::size_t>(i) * f_in + model.state_dim + a] = 0.0;
    }
  }
  return best;
}

FbBatch batch_from_records(const FBModel& model, const env::OfflineDataset& dataset,
                           std::span<const std::uint64_t> indices,
                           std::span<const std::uint64_t> plus_indices) {
  FbBatch batch;
  const std::size_t n = indices.size();
  batch.s.reserve(n);
  batch.s_next.reserve(n);
  batch.s_plus.reserve(n);
  batch.a.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const env::TransitionRecord& rec = dataset.records[indices[i]];
    batch.s.push_back(rec.s);
    batch.s_next.push_back(rec.s_next);
    batch.a.push_back(model.encode_action(rec.a));
    if (model.b_state_action) {
      if (plus_indices.size() != n) {
        throw ShapeError("state-action batches need explicit s+ record indices");
      }
      const env::TransitionRecord& plus = dataset.records[plus_indices[i]];
      batch.s_plus.push_back(plus.s);
      batch.a_plus.push_back(model.encode_action(plus.a));
    } else {
      batch.s_plus.push_back(rec.s_plus);
    }
  }
  return batch;
}

int fb_td_loss(diff::Graph& g, FBModel& model, const FbBatch& batch,
               std::span<const std::vector<double>> z_batch, double ortho_coef,
               FbLossParts* parts) {
  const std::size_t n = batch.size();
  if (n == 0) throw ShapeError("fb_td_loss: empty batch");
  if (z_batch.size() != n) throw ShapeError("fb_td_loss: z batch size mismatch");
  if (batch.s_next.size() != n || batch.s_plus.size() != n || batch.a.size() != n) {
    throw ShapeError("fb_td_loss: ragged batch");
  }
  const int ni = static_cast<int>(n);
  const int f_in = model.f.input_dim();
  const int b_in = model.b.input_dim();
  const int d = model.d;

  auto fill_f_row = [&model, f_in](std::vector<double>& x, std::size_t i,
                                   std::span<const double> s, int a,
                                   std::span<const double> z) {
    double* row = x.data() + i * f_in;
    std::fill(row, row + f_in, 0.0);
    std::copy(s.begin(), s.end(), row);
    row[model.state_dim + a] = 1.0;
    std::copy(z.begin(), z.end(), row + model.state_dim + model.action_count);
  };
  auto fill_b_row = [&model, b_in](std::vector<double>& x, std::size_t i,
                                   std::span<const double> s, int a) {
    double* row = x.data() + i * b_in;
    std::fill(row, row + b_in, 0.0);
    std::copy(s.begin(), s.end(), row);
    if (model.b_state_action) row[model.state_dim + a] = 1.0;
  };

  std::vector<double> f_x(n * static_cast<std::size_t>(f_in));
  std::vector<double> b_plus_x(n * static_cast<std::size_t>(b_in));
  std::vector<double> b_cross_x(n * static_cast<std::size_t>(b_in));
  for (std::size_t i = 0; i < n; ++i) {
    const int a_plus = model.b_state_action ? batch.a_plus[i] : 0;
    fill_f_row(f_x, i, batch.s[i], batch.a[i], z_batch[i]);
    fill_b_row(b_plus_x, i, batch.s_plus[i], a_plus);
    // cross term with the occupancy's delta part; B(s') for the state-only
    // map (next-state convention), B(s,a) at the current pair otherwise.
    if (model.b_state_action) {
      fill_b_row(b_cross_x, i, batch.s[i], batch.a[i]);
    } else {
      fill_b_row(b_cross_x, i, batch.s_next[i], 0);
    }
  }

  const int f_node = model.f.forward_tape_params_batch(g, f_x, ni);
  const int b_plus = model.b.forward_tape_params_batch(g, b_plus_x, ni);
  const int b_cross = model.b.forward_tape_params_batch(g, b_cross_x, ni);

  // bootstrapped term: greedy a' under the online F, values from the targets
  const std::vector<int> a_next = greedy_actions(model, batch.s_next, z_batch);
  std::vector<double> f_next_x(n * static_cast<std::size_t>(f_in));
  for (std::size_t i = 0; i < n; ++i) {
    fill_f_row(f_next_x, i, batch.s_next[i], a_next[i], z_batch[i]);
  }
  std::vector<double> f_bar(n * static_cast<std::size_t>(d));
  std::vector<double> b_bar(n * static_cast<std::size_t>(d));
  model.f_target.forward_batch(f_next_x.data(), ni, f_bar.data(), tl_ws);
  model.b_target.forward_batch(b_plus_x.data(), ni, b_bar.data(), tl_ws);
  std::vector<double> neg_boot(n);
  for (std::size_t i = 0; i < n; ++i) {
    double t = 0.0;
    for (int k = 0; k < d; ++k) t += f_bar[i * d + k] * b_bar[i * d + k];
    neg_boot[i] = -model.gamma * t;
  }

  const int delta = g.add_const_vec(neg_boot, g.row_dot(f_node, b_plus, ni));
  const int term = g.sub(g.square(delta), g.scale(g.row_dot(f_node, b_cross, ni), 2.0));
  const int td = g.mean(term);
  const int ortho = g.ortho_penalty_rows(b_plus, ni, d);
  const int total = g.add(td, g.scale(ortho, ortho_coef));
  if (parts != nullptr) {
    parts->td = g.value(td);
    parts->ortho = g.value(ortho);
    parts->total = g.value(total);
  }
  return total;
}

void FBTrainConfig::validate() const {
  if (batch_size <= 0) throw ConfigError("fb batch_size must be positive");
  if (train_steps < 0) throw ConfigError("fb train_steps must be >= 0");
  if (lr <= 0.0) throw ConfigError("fb lr must be positive");
  if (lr_final < 0.0) throw ConfigError("fb lr_final must be >= 0");
  if (polyak_tau < 0.0 || polyak_tau > 1.0) throw ConfigError("fb polyak_tau must be in [0,1]");
  if (ortho_coef < 0.0) throw ConfigError("fb ortho_coef must be >= 0");
  if (latent_mix < 0.0 || latent_mix > 1.0) throw ConfigError("fb latent_mix must be in [0,1]");
}

FbTrainResult train_fb(const env::OfflineDataset& dataset, const FBConfig& model_cfg,
                       const FBTrainConfig& train_cfg) {
  train_cfg.validate();
  if (train_cfg.train_steps > 0 &&
      dataset.count() < static_cast<std::uint64_t>(train_cfg.batch_size)) {
    throw PreconditionError("train_fb: dataset smaller than one batch");
  }

  Rng master(train_cfg.seed);
  Rng rng_init = master.fork(1);
  Rng rng_batch = master.fork(2);
  Rng rng_z = master.fork(3);

  FbTrainResult result;
  result.model = make_fb_model(model_cfg, rng_init);
  FBModel& model = result.model;

  diff::AdamState f_state(model.f.param_count());
  diff::AdamState b_state(model.b.param_count());
  diff::Graph g;
  std::vector<std::uint64_t> indices(train_cfg.batch_size);
  std::vector<std::uint64_t> plus_indices;
  std::vector<std::vector<double>> z_batch(train_cfg.batch_size);

  result.loss_trace.reserve(train_cfg.train_steps);
  for (long step = 0; step < train_cfg.train_steps; ++step) {
    for (auto& idx : indices) idx = rng_batch.below(dataset.count());
    if (model.b_state_action) {
      plus_indices.resize(indices.size());
      for (auto& idx : plus_indices) idx = rng_batch.below(dataset.count());
    }
    const FbBatch batch = batch_from_records(model, dataset, indices, plus_indices);
    for (auto& z : z_batch) z = sample_latent(model, dataset, train_cfg.latent_mix, rng_z);

    double loss;
    try {
      g.reset();
      const int loss_node = fb_td_loss(g, model, batch, z_batch, train_cfg.ortho_coef);
      loss = g.value(loss_node);
      g.backward(loss_node);
    } catch (const NumericError& e) {
      throw TrainingError(std::string("fb training diverged: ") + e.what(), step);
    }
    if (!std::isfinite(loss)) throw TrainingError("fb training loss is non-finite", step);
    result.loss_trace.push_back(loss);

    double lr = train_cfg.lr;
    if (train_cfg.lr_final > 0.0 && train_cfg.train_steps > 1) {
      const double t = static_cast<double>(step) / static_cast<double>(train_cfg.train_steps - 1);
      lr = train_cfg.lr + t * (train_cfg.lr_final - train_cfg.lr);
    }
    adam_step(model.f.params(), model.f.grads(), f_state, lr);
    adam_step(model.b.params(), model.b.grads(), b_state, lr);

    const double tau = train_cfg.polyak_tau;
    auto polyak = [tau](std::span<double> target, std::span<const double> online) {
      for (std::size_t i = 0; i < target.size(); ++i) {
        target[i] = (1.0 - tau) * target[i] + tau * online[i];
      }
    };
    polyak(model.f_target.params(), model.f.params());
    polyak(model.b_target.params(), model.b.params());
  }
  return result;
}

std::vector<double> reconstruct_reward(const FBModel& model,
                                       std::span<const std::vector<double>> states,
                                       std::span<const double> z) {
  if (static_cast<int>(z.size()) != model.d) throw ShapeError("reconstruct_reward: z size");
  std::vector<double> out;
  out.reserve(states.size());
  for (const std::vector<double>& s : states) {
    const std::vector<double> b = model.b_eval(s);
    double v = 0.0;
    for (int i = 0; i < model.d; ++i) v += b[i] * z[i];
    out.push_back(v);
  }
  return out;
}

void FBModel::save(std::ostream& os) const {
  os.write(kMagic, 4);
  os.write(reinterpret_cast<const char*>(&kVersion), 4);
  const std::uint32_t du = static_cast<std::uint32_t>(d);
  const std::uint32_t sd = static_cast<std::uint32_t>(state_dim);
  const std::uint32_t ac = static_cast<std::uint32_t>(action_count);
  os.write(reinterpret_cast<const char*>(&du), 4);
  os.write(reinterpret_cast<const char*>(&sd), 4);
  os.write(reinterpret_cast<const char*>(&ac), 4);
  const std::uint8_t mode = static_cast<std::uint8_t>(action_mode);
  const std::uint8_t bsa = b_state_action ? 1 : 0;
  os.write(reinterpret_cast<const char*>(&mode), 1);
  os.write(reinterpret_cast<const char*>(&bsa), 1);
  os.write(reinterpret_cast<const char*>(&gamma), 8);
  f.save(os);
  b.save(os);
  f_target.save(os);
  b_target.save(os);
}

FBModel FBModel::load(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("bad checkpoint magic, expected ZOLM", 0);
  }
  std::uint32_t version = 0;
  is.read(reinterpret_cast<char*>(&version), 4);
  if (!is || version != kVersion) throw FormatError("unsupported checkpoint version", 4);
  FBModel m;
  std::uint32_t du = 0, sd = 0, ac = 0;
  is.read(reinterpret_cast<char*>(&du), 4);
  is.read(reinterpret_cast<char*>(&sd), 4);
  is.read(reinterpret_cast<char*>(&ac), 4);
  std::uint8_t mode = 0, bsa = 0;
  is.read(reinterpret_cast<char*>(&mode), 1);
  is.read(reinterpret_cast<char*>(&bsa), 1);
  is.read(reinterpret_cast<char*>(&m.gamma), 8);
  if (!is || mode > 1) throw FormatError("bad checkpoint header", static_cast<std::size_t>(is.tellg()));
  m.d = static_cast<int>(du);
  m.state_dim = static_cast<int>(sd);
  m.action_count = static_cast<int>(ac);
  m.action_mode = static_cast<ActionMode>(mode);
  m.b_state_action = bsa != 0;
  m.f = diff::Mlp::load(is);
  m.b = diff::Mlp::load(is);
  m.f_target = diff::Mlp::load(is);
  m.b_target = diff::Mlp::load(is);
  return m;
}

void FBModel::save_file(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  save(os);
  if (!os) throw IoError("write failed: " + path);
}

FBModel FBModel::load_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  return load(is);
}

}  // namespace zol::fb
