#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "zol/adapt.hpp"
#include "zol/config.hpp"
#include "zol/dataset.hpp"
#include "zol/donut.hpp"
#include "zol/errors.hpp"
#include "zol/evalkit.hpp"
#include "zol/fb.hpp"
#include "zol/gridworld.hpp"
#include "zol/tabular.hpp"

namespace fs = std::filesystem;
using zol::cli::RunConfig;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitVerify = 5;

fs::path make_run_dir(const RunConfig& cfg, const std::string& out_override,
                      const std::string& command) {
  const std::string base = out_override.empty() ? cfg.get_string("out") : out_override;
  fs::path dir = fs::path(base) / (command + "-" + std::to_string(cfg.get_uint("seed")));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw zol::IoError("cannot create output directory " + dir.string());
  return dir;
}

double smoothed_window(const std::vector<double>& trace, bool tail) {
  if (trace.empty()) return 0.0;
  const std::size_t win = std::min<std::size_t>(100, trace.size());
  double acc = 0.0;
  if (tail) {
    for (std::size_t i = trace.size() - win; i < trace.size(); ++i) acc += trace[i];
  } else {
    for (std::size_t i = 0; i < win; ++i) acc += trace[i];
  }
  return acc / static_cast<double>(win);
}

zol::fb::FBConfig model_config_for(const RunConfig& cfg, const zol::env::OfflineDataset& ds) {
  zol::fb::FBConfig mc;
  mc.d = static_cast<int>(cfg.get_int("d"));
  mc.gamma = cfg.get_double("gamma");
  mc.f_hidden = cfg.get_int_list("f_hidden");
  mc.b_hidden = cfg.get_int_list("b_hidden");
  const std::string act = cfg.get_string("hidden_act");
  if (act == "tanh") {
    mc.hidden_act = zol::diff::Activation::kTanh;
  } else if (act == "relu") {
    mc.hidden_act = zol::diff::Activation::kRelu;
  } else {
    throw zol::ConfigError("hidden_act must be tanh or relu, got '" + act + "'");
  }
  const std::string out = cfg.get_string("b_output");
  if (out == "l2norm") {
    mc.b_output = zol::diff::OutputMap::kL2NormalizeSqrtDim;
  } else if (out == "identity") {
    mc.b_output = zol::diff::OutputMap::kIdentity;
  } else {
    throw zol::ConfigError("b_output must be l2norm or identity, got '" + out + "'");
  }
  mc.b_state_action = cfg.get_bool("b_state_action");
  mc.state_dim = static_cast<int>(ds.state_dim);
  if (ds.env_tag == "donut") {
    mc.action_count = 9;
    mc.action_mode = zol::fb::ActionMode::kCompass9;
  } else if (ds.env_tag.rfind("grid:", 0) == 0) {
    mc.action_count = 4;
    mc.action_mode = zol::fb::ActionMode::kIndex;
  } else {
    throw zol::ConfigError("dataset has unknown env tag '" + ds.env_tag + "'");
  }
  return mc;
}

zol::adapt::ZolParams zol_params_for(const RunConfig& cfg) {
  zol::adapt::ZolParams p;
  p.lr = cfg.get_double("eta");
  p.steps = cfg.get_int("steps");
  p.lambda_chi = cfg.get_double("lambda_chi");
  p.lambda_trust = cfg.get_double("lambda_trust");
  p.weight_clip = cfg.get_double("weight_clip");
  p.reset_samples = static_cast<int>(cfg.get_int("reset_samples"));
  p.batch_size = static_cast<int>(cfg.get_int("batch_size"));
  p.norm_eps = cfg.get_double("norm_eps");
  p.grad_clip = cfg.get_double("grad_clip");
  p.seed = cfg.get_uint("seed");
  p.center_rewards_globally = cfg.get_bool("center_global");
  p.infer_samples = static_cast<int>(cfg.get_int("infer_samples"));
  p.validate();
  return p;
}

zol::adapt::ResetSampler reset_sampler_for(const RunConfig& cfg,
                                           const zol::env::OfflineDataset& ds) {
  if (ds.env_tag == "donut") {
    zol::env::DonutWorld world;
    world.support_sigma = cfg.get_double("sigma");
    return [world](zol::Rng& rng) {
      const auto s = world.sample_start(rng);
      return std::vector<double>{s[0], s[1]};
    };
  }
  // grid datasets: uniform over the distinct start states present in the data
  std::set<std::size_t> seen;
  for (const auto& rec : ds.records) {
    std::size_t idx = 0;
    for (std::size_t i = 1; i < rec.s.size(); ++i) {
      if (rec.s[i] > rec.s[idx]) idx = i;
    }
    seen.insert(idx);
  }
  std::vector<std::size_t> states(seen.begin(), seen.end());
  const std::size_t dim = ds.state_dim;
  return [states, dim](zol::Rng& rng) {
    std::vector<double> s(dim, 0.0);
    s[states[rng.below(states.size())]] = 1.0;
    return s;
  };
}

int cmd_collect(const RunConfig& cfg, const std::string& out_override) {
  const fs::path dir = make_run_dir(cfg, out_override, "collect");
  const auto ds = zol::env::collect_donut(cfg.get_uint("n_records"), cfg.get_double("sigma"),
                                          cfg.get_uint("seed"));
  zol::env::write_dataset(ds, (dir / "dataset.zold").string());
  if (cfg.get_bool("csv")) zol::env::write_dataset_csv(ds, (dir / "dataset.csv").string());

  if (ds.records.empty()) {
    std::cout << "warning: collected an empty dataset (n_records = 0)\n";
  }
  double mean_norm = 0.0;
  int grid_hits = 0;
  constexpr int kRes = 32;
  std::vector<std::uint8_t> hit(kRes * kRes, 0);
  for (const auto& rec : ds.records) {
    mean_norm += std::hypot(rec.s[0], rec.s[1]);
    const int cx = std::clamp(static_cast<int>((rec.s[0] + 1.5) / 3.0 * kRes), 0, kRes - 1);
    const int cy = std::clamp(static_cast<int>((rec.s[1] + 1.5) / 3.0 * kRes), 0, kRes - 1);
    hit[cy * kRes + cx] = 1;
  }
  int annulus_cells = 0;
  for (int y = 0; y < kRes; ++y) {
    for (int x = 0; x < kRes; ++x) {
      const double px = -1.5 + (x + 0.5) * 3.0 / kRes;
      const double py = -1.5 + (y + 0.5) * 3.0 / kRes;
      const double r = std::hypot(px, py);
      if (r >= 0.25 && r <= 1.5) {
        ++annulus_cells;
        grid_hits += hit[y * kRes + x];
      }
    }
  }
  if (!ds.records.empty()) mean_norm /= static_cast<double>(ds.records.size());
  std::printf("collected %llu records -> %s\n",
              static_cast<unsigned long long>(ds.count()), (dir / "dataset.zold").c_str());
  std::printf("mean |s| = %.4f, annulus coverage = %.3f\n", mean_norm,
              annulus_cells > 0 ? static_cast<double>(grid_hits) / annulus_cells : 0.0);
  return kExitOk;
}

int cmd_pretrain(const RunConfig& cfg, const std::string& out_override) {
  const std::string ds_path = cfg.get_string("dataset");
  if (ds_path.empty()) throw zol::ConfigError("pretrain needs a 'dataset' path in the config");
  const auto ds = zol::env::read_dataset(ds_path);

  zol::fb::FBTrainConfig tc;
  tc.batch_size = static_cast<int>(cfg.get_int("fb_batch"));
  tc.train_steps = cfg.get_int("fb_steps");
  tc.lr = cfg.get_double("fb_lr");
  tc.lr_final = cfg.get_double("fb_lr_final");
  tc.polyak_tau = cfg.get_double("polyak_tau");
  tc.ortho_coef = cfg.get_double("ortho_coef");
  tc.latent_mix = cfg.get_double("latent_mix");
  tc.seed = cfg.get_uint("seed");

  const fs::path dir = make_run_dir(cfg, out_override, "pretrain");
  const auto result = zol::fb::train_fb(ds, model_config_for(cfg, ds), tc);
  result.model.save_file((dir / "checkpoint.zolm").string());

  std::ofstream trace((dir / "loss.csv").string());
  if (!trace) throw zol::IoError("cannot open for writing: " + (dir / "loss.csv").string());
  trace << "step,loss\n";
  trace.precision(17);
  for (std::size_t i = 0; i < result.loss_trace.size(); ++i) {
    trace << i << ',' << result.loss_trace[i] << '\n';
  }

  std::printf("trained %ld steps -> %s\n", tc.train_steps, (dir / "checkpoint.zolm").c_str());
  std::printf("smoothed loss: initial %.6f, final %.6f\n",
              smoothed_window(result.loss_trace, false), smoothed_window(result.loss_trace, true));
  return kExitOk;
}

int cmd_adapt(const RunConfig& cfg, const std::string& out_override) {
  const std::string ds_path = cfg.get_string("dataset");
  const std::string ckpt_path = cfg.get_string("checkpoint");
  if (ds_path.empty()) throw zol::ConfigError("adapt needs a 'dataset' path in the config");
  if (ckpt_path.empty()) throw zol::ConfigError("adapt needs a 'checkpoint' path in the config");
  const auto task = zol::env::parse_task(cfg.get_string("task"));
  const auto params = zol_params_for(cfg);
  const auto seeds = cfg.get_uint_list("seeds");
  const auto ds = zol::env::read_dataset(ds_path);
  const auto model = zol::fb::FBModel::load_file(ckpt_path);

  const fs::path dir = make_run_dir(cfg, out_override, "adapt");
  const auto report = zol::eval::compare_fb_vs_zol(model, ds, task, params, seeds,
                                                   reset_sampler_for(cfg, ds));

  for (const auto& row : report.rows) {
    const std::string tag = std::to_string(row.seed);
    zol::adapt::write_vector_csv(row.z_fb, (dir / ("z_fb_" + tag + ".csv")).string());
    zol::adapt::write_vector_csv(row.z_zol, (dir / ("z_zol_" + tag + ".csv")).string());
    zol::adapt::write_adapt_trace_csv(row.adapt, (dir / ("trace_" + tag + ".csv")).string());
    zol::eval::write_heatmap_csv(row.grid_fb, (dir / ("heatmap_fb_" + tag + ".csv")).string());
    zol::eval::write_heatmap_pgm(row.grid_fb, (dir / ("heatmap_fb_" + tag + ".pgm")).string());
    zol::eval::write_heatmap_csv(row.grid_zol, (dir / ("heatmap_zol_" + tag + ".csv")).string());
    zol::eval::write_heatmap_pgm(row.grid_zol, (dir / ("heatmap_zol_" + tag + ".pgm")).string());
    std::printf("seed %llu: corr_fb %.4f, corr_zol %.4f, delta %+.4f\n",
                static_cast<unsigned long long>(row.seed), row.corr_fb, row.corr_zol, row.delta);
  }
  zol::eval::write_report_csv(report, (dir / "report.csv").string());
  std::printf("task %s: mean corr_fb %.4f, mean corr_zol %.4f, mean delta %+.4f\n",
              report.task.c_str(), report.mean_corr_fb, report.mean_corr_zol, report.mean_delta);
  std::printf("report -> %s\n", (dir / "report.csv").c_str());
  return kExitOk;
}

int cmd_verify(const RunConfig& cfg) {
  const int instances = static_cast<int>(cfg.get_int("verify_instances"));
  zol::Rng rng(cfg.get_uint("seed"));
  constexpr double kTol = 1e-8;

  struct Check {
    const char* name;
    double max_err = 0.0;
    std::uint64_t worst_instance = 0;
  };
  Check checks[] = {{"ratio-identity"}, {"centered-return"}, {"chi2-identity"},
                    {"on-policy-flat"}, {"q-two-route"}};

  for (int inst = 0; inst < instances; ++inst) {
    const int n_states = 2 + static_cast<int>(rng.below(19));   // 2..20
    const int n_actions = 2 + static_cast<int>(rng.below(3));   // 2..4
    const double gamma = inst == 0 ? 0.0 : rng.uniform(0.3, 0.95);
    const auto mdp = zol::tab::random_mdp(n_states, n_actions, gamma, rng);
    const auto pi = zol::tab::random_policy(n_states, n_actions, rng, 0.05);
    const auto beta = zol::tab::random_policy(n_states, n_actions, rng, 0.05);
    const auto reward = zol::tab::random_reward(n_states, n_actions, rng);

    auto track = [&checks, inst](int which, double err) {
      if (err > checks[which].max_err) {
        checks[which].max_err = err;
        checks[which].worst_instance = static_cast<std::uint64_t>(inst);
      }
    };
    track(0, zol::tab::verify_ratio_identity(mdp, pi, beta));
    track(1, zol::tab::check_centered_reweighting(mdp, pi, beta, reward).gap);
    track(2, zol::tab::check_chi2_identity(mdp, pi, beta).gap);

    const auto w_flat = zol::tab::density_ratio_exact(mdp, beta, beta);
    double flat_err = 0.0;
    for (double w : w_flat) flat_err = std::max(flat_err, std::abs(w - 1.0));
    const auto flat = zol::tab::check_centered_reweighting(mdp, beta, beta, reward);
    track(3, std::max(flat_err, std::abs(flat.lhs)));

    const auto q = zol::tab::q_from_successor(mdp, pi, reward);
    const auto q_ref = zol::tab::q_policy_evaluation(mdp, pi, reward, 1000);
    double q_err = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) q_err = std::max(q_err, std::abs(q[i] - q_ref[i]));
    track(4, q_err);
  }

  bool ok = true;
  for (const Check& c : checks) {
    std::printf("check %-16s max error %.3e over %d instances%s\n", c.name, c.max_err,
                instances, c.max_err < kTol ? "" : "  [FAIL]");
    if (c.max_err >= kTol) {
      std::printf("  exceeded tolerance %.1e at instance %llu\n", kTol,
                  static_cast<unsigned long long>(c.worst_instance));
      ok = false;
    }
  }
  std::printf("verification %s\n", ok ? "passed" : "FAILED");
  return ok ? kExitOk : kExitVerify;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forward-backward pretraining and zero-shot latent adaptation"};
  app.require_subcommand(1);

  struct SubArgs {
    std::string config;
    std::string out;
  };
  SubArgs collect_args, pretrain_args, adapt_args, verify_args;

  auto* collect = app.add_subcommand("collect", "collect a donut random-walk dataset");
  collect->add_option("--config", collect_args.config, "config file")->required();
  collect->add_option("--out", collect_args.out, "output directory override");
  auto* pretrain = app.add_subcommand("pretrain", "train forward-backward embeddings");
  pretrain->add_option("--config", pretrain_args.config, "config file")->required();
  pretrain->add_option("--out", pretrain_args.out, "output directory override");
  auto* adapt = app.add_subcommand("adapt", "zero-shot inference plus latent adaptation");
  adapt->add_option("--config", adapt_args.config, "config file")->required();
  adapt->add_option("--out", adapt_args.out, "output directory override");
  auto* verify = app.add_subcommand("verify", "run the exact-identity oracle suite");
  verify->add_option("--config", verify_args.config, "config file (optional)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (collect->parsed()) {
      return cmd_collect(RunConfig::parse_file(collect_args.config), collect_args.out);
    }
    if (pretrain->parsed()) {
      return cmd_pretrain(RunConfig::parse_file(pretrain_args.config), pretrain_args.out);
    }
    if (adapt->parsed()) {
      return cmd_adapt(RunConfig::parse_file(adapt_args.config), adapt_args.out);
    }
    if (verify->parsed()) {
      const RunConfig cfg = verify_args.config.empty()
                                ? RunConfig::parse_string("", "<default>")
                                : RunConfig::parse_file(verify_args.config);
      return cmd_verify(cfg);
    }
  } catch (const zol::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const zol::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const zol::FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kExitIo;
  } catch (const zol::TrainingError& e) {
    std::cerr << "training error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitConfig;
}
