// Command-line interface: dataset synthesis, training, evaluation,
// prediction, and the hidden-unit / missing-output sweep harnesses.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <chrono>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nlgp/checkpoint.hpp"
#include "nlgp/config.hpp"
#include "nlgp/data.hpp"
#include "nlgp/model.hpp"
#include "nlgp/train.hpp"

namespace {

using nlohmann::json;
using namespace nlgp;

struct EvalResult {
  double test_ll = 0.0;
  double mrmse = 0.0;
};

// log-likelihood and MRMSE corrections between standardized and raw space
EvalResult evaluate(const model::Model& m, const data::Dataset& test,
                    const data::Standardization& stats, const train::EvalConfig& ecfg,
                    const std::string& space, const model::LatentPosterior* latents = nullptr) {
  EvalResult r;
  r.test_ll = train::test_ll(m, test.x, test.y, test.mask, ecfg, latents);
  Eigen::MatrixXd pred_mean;
  if (latents) {
    auto [mean, var] = m.predict(latents->mean);
    pred_mean = mean;
  } else {
    auto [mean, var] = m.predict(test.x);
    pred_mean = mean;
  }
  if (space == "raw" && stats.applied) {
    // change of variables y_raw = y_std * s + mu: subtract log s per observed dim
    double adjust = 0.0;
    for (Eigen::Index i = 0; i < test.n(); ++i)
      for (Eigen::Index k = 0; k < test.d_y(); ++k)
        if (test.mask(i, k) != 0.0) adjust += std::log(stats.y_std(k));
    r.test_ll -= adjust / static_cast<double>(test.n());
    Eigen::MatrixXd pm = pred_mean, y = test.y;
    for (Eigen::Index k = 0; k < test.d_y(); ++k) {
      pm.col(k) = pm.col(k).array() * stats.y_std(k) + stats.y_mean(k);
      y.col(k) = y.col(k).array() * stats.y_std(k) + stats.y_mean(k);
    }
    r.mrmse = train::mrmse(pm, y.cwiseProduct(test.mask).unaryExpr([](double v) {
      return std::isfinite(v) ? v : 0.0;
    }),
                           test.mask);
  } else {
    r.mrmse = train::mrmse(pred_mean, test.y_clean(), test.mask);
  }
  return r;
}

void append_metrics(const std::string& path, const json& record) {
  if (path.empty()) {
    std::cout << record.dump() << "\n";
    return;
  }
  std::ofstream out(path, std::ios::app);
  if (!out) throw ConfigError("cannot open metrics file " + path);
  out << record.dump() << "\n";
}

struct TrainArgs {
  std::string config_path, data_path, out_path, metrics_path;
  std::string variant;
  std::string ell_mode;
  std::string eval_space = "standardized";
  long long d_x = -1;
  int quad_order = 0;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  bool unsupervised = false;
  long long missing = 0;
  bool seed_set = false;
  int fit_steps = 200;
  double fit_lr = 0.05;
};

// shared train-evaluate-report path for train / sweep-hidden / mask-sweep
json run_training(const TrainArgs& args, config::FullConfig cfg, data::Dataset train_ds,
                  data::Dataset test_ds) {
  model::ModelSpec& spec = cfg.spec;
  if (args.seed_set) cfg.train_cfg.seed = args.seed;
  if (!args.ell_mode.empty())
    spec.ell_mode = args.ell_mode == "analytic" ? model::EllMode::analytic : model::EllMode::sgvb;
  if (args.quad_order > 0) spec.quad_order = args.quad_order;

  auto t0 = std::chrono::steady_clock::now();
  auto [m, hist] = train::train(spec, train_ds, cfg.train_cfg);
  auto t1 = std::chrono::steady_clock::now();

  EvalResult ev;
  if (spec.latent_inputs) {
    auto latents = train::fit_test_latents(m, train_ds, test_ds.y, test_ds.mask, args.fit_steps,
                                           args.fit_lr, derive_seed(cfg.train_cfg.seed, 0xf17));
    ev = evaluate(m, test_ds, train_ds.stats, cfg.eval_cfg, args.eval_space, &latents);
  } else {
    ev = evaluate(m, test_ds, train_ds.stats, cfg.eval_cfg, args.eval_space);
  }

  if (!args.out_path.empty()) checkpoint::save(args.out_path, m, train_ds.stats);

  json rec;
  rec["variant"] = model::variant_name(spec.variant);
  rec["seed"] = cfg.train_cfg.seed;
  rec["split"] = args.split_seed;
  rec["train_ell"] = hist.epochs.empty() ? 0.0 : hist.epochs.back().ell;
  rec["test_ll"] = ev.test_ll;
  rec["mrmse"] = ev.mrmse;
  rec["wall_time_s"] = std::chrono::duration<double>(t1 - t0).count();
  rec["eval_space"] = args.eval_space;
  return rec;
}

// The architecture defaults for the chosen variant form the base; explicit
// config keys overlay them, and data dimensions always win.
config::FullConfig resolve_config(const TrainArgs& args, Eigen::Index d_x, Eigen::Index d_y) {
  nlohmann::json j;
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) throw ConfigError("cannot open config file " + args.config_path);
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
  }
  std::string variant = args.variant;
  if (variant.empty() && j.contains("model") && j["model"].contains("variant"))
    variant = j["model"]["variant"].get<std::string>();
  if (variant.empty()) throw ConfigError("no model specified: pass --variant or a config file");

  config::FullConfig cfg;
  cfg.spec = model::ModelSpec::defaults_for(model::variant_from(variant), d_x, d_y);
  if (j.contains("model")) cfg.spec = config::spec_from_json(j["model"], cfg.spec);
  cfg.spec.variant = model::variant_from(variant);
  if (j.contains("train")) cfg.train_cfg = config::train_from_json(j["train"]);
  if (j.contains("eval")) cfg.eval_cfg = config::eval_from_json(j["eval"]);
  if (!cfg.spec.latent_inputs) cfg.spec.d_x = d_x;
  cfg.spec.d_y = d_y;
  return cfg;
}

data::Dataset load_data(const TrainArgs& args) {
  Eigen::Index d_x = args.d_x;
  if (d_x < 0) throw ConfigError("--d-x is required to read a CSV");
  return data::load_csv(args.data_path, d_x);
}

int run(int argc, char** argv) {
  CLI::App app{"sparse variational multi-output GP regression with neural likelihoods"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate the synthetic cos(4||x||) dataset");
  data::SynthConfig scfg;
  std::string synth_out = "synthetic.csv";
  long long synth_n = 1000;
  synth->add_option("--n", synth_n, "number of datapoints");
  synth->add_option("--noise", scfg.noise, "observation noise level");
  synth->add_option("--seed", scfg.seed, "generator seed");
  synth->add_option("--out", synth_out, "output CSV path");

  // shared train-ish options
  TrainArgs targs;
  auto add_common = [&](CLI::App* cmd, bool with_model) {
    cmd->add_option("--data", targs.data_path, "input CSV")->required();
    cmd->add_option("--d-x", targs.d_x, "number of input columns in the CSV");
    cmd->add_option("--out", targs.out_path, "output path");
    cmd->add_option("--metrics", targs.metrics_path, "metrics JSONL path (default: stdout)");
    cmd->add_option("--test-fraction", targs.test_fraction, "held-out fraction");
    cmd->add_option("--split-seed", targs.split_seed, "train/test split seed");
    cmd->add_option("--eval-space", targs.eval_space, "standardized or raw metrics")
        ->check(CLI::IsMember({"standardized", "raw"}));
    if (with_model) {
      cmd->add_option("--config", targs.config_path, "JSON config (model/train/eval)");
      cmd->add_option("--variant", targs.variant, "model variant")
          ->check(CLI::IsMember({"mogp", "gprn", "dgp", "sbgprn", "nmogp", "nsbgprn", "ndgp"}));
      cmd->add_flag("--unsupervised", targs.unsupervised,
                    "concatenate inputs into the outputs and train a latent-input model");
      cmd->add_option("--ell-mode", targs.ell_mode, "analytic or sgvb")
          ->check(CLI::IsMember({"analytic", "sgvb"}));
      cmd->add_option("--quad-order", targs.quad_order, "Gauss-Hermite order");
      cmd->add_option("--seed", targs.seed, "master training seed")
          ->each([&](const std::string&) { targs.seed_set = true; });
      cmd->add_option("--fit-steps", targs.fit_steps, "latent fitting steps (unsupervised eval)");
      cmd->add_option("--fit-lr", targs.fit_lr, "latent fitting learning rate");
    }
  };

  auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoint + metrics");
  add_common(train_cmd, true);

  auto* sweep = app.add_subcommand("sweep-hidden", "train across a range of hidden-unit counts");
  add_common(sweep, true);
  std::vector<long long> sweep_dh;
  sweep->add_option("--d-h", sweep_dh, "hidden unit counts to sweep")->required();

  auto* msweep = app.add_subcommand("mask-sweep", "train across missing-output counts");
  add_common(msweep, true);
  std::vector<long long> sweep_missing;
  msweep->add_option("--missing", sweep_missing, "missing output dims per point")->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a CSV");
  std::string eval_ckpt;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  add_common(eval_cmd, false);
  eval_cmd->add_option("--fit-steps", targs.fit_steps, "latent fitting steps");
  eval_cmd->add_option("--fit-lr", targs.fit_lr, "latent fitting learning rate");
  std::uint64_t eval_seed = 0;
  eval_cmd->add_option("--seed", eval_seed, "evaluation seed");

  auto* pred_cmd = app.add_subcommand("predict", "predictive means/variances for a CSV of inputs");
  std::string pred_ckpt;
  pred_cmd->add_option("--checkpoint", pred_ckpt, "checkpoint path")->required();
  pred_cmd->add_option("--data", targs.data_path, "input CSV (first D_X columns are used)")
      ->required();
  pred_cmd->add_option("--d-x", targs.d_x, "number of input columns");
  pred_cmd->add_option("--out", targs.out_path, "output CSV")->required();
  std::string pred_space = "raw";
  pred_cmd->add_option("--space", pred_space, "raw or standardized outputs")
      ->check(CLI::IsMember({"standardized", "raw"}));

  CLI11_PARSE(app, argc, argv);

  if (synth->parsed()) {
    scfg.n = synth_n;
    data::save_csv(synth_out, data::gen_synthetic(scfg));
    std::cout << "wrote " << scfg.n << " datapoints to " << synth_out << "\n";
    return 0;
  }

  if (train_cmd->parsed() || sweep->parsed() || msweep->parsed()) {
    data::Dataset full = load_data(targs);
    if (targs.unsupervised) full = data::concat_unsupervised(full);
    auto cfg0 = resolve_config(targs, full.d_x(), full.d_y());
    if (targs.unsupervised && !cfg0.spec.latent_inputs) {
      cfg0.spec.latent_inputs = true;
      if (cfg0.spec.d_x == 0 || cfg0.spec.d_x == full.d_y()) cfg0.spec.d_x = 4;
      cfg0.spec.ard = false;
    }
    auto [train_ds, test_ds] = data::split(full, targs.test_fraction, targs.split_seed);

    if (train_cmd->parsed()) {
      json rec = run_training(targs, cfg0, train_ds, test_ds);
      append_metrics(targs.metrics_path, rec);
      double tll = rec["test_ll"].get<double>();
      std::cout << "variant=" << rec["variant"].get<std::string>() << " test_ll=" << tll
                << " mrmse=" << rec["mrmse"].get<double>() << "\n";
    } else if (sweep->parsed()) {
      for (long long dh : sweep_dh) {
        auto cfg = cfg0;
        cfg.spec.d_h = dh;
        TrainArgs run_args = targs;
        run_args.out_path.clear();  // sweeps emit metrics, not checkpoints
        json rec = run_training(run_args, cfg, train_ds, test_ds);
        rec["D_H"] = dh;
        append_metrics(targs.metrics_path, rec);
      }
    } else {
      for (long long missing : sweep_missing) {
        auto masked_train = data::mask_outputs(train_ds, missing,
                                               derive_seed(targs.split_seed, missing));
        TrainArgs run_args = targs;
        run_args.out_path.clear();
        json rec = run_training(run_args, cfg0, masked_train, test_ds);
        rec["missing"] = missing;
        append_metrics(targs.metrics_path, rec);
      }
    }
    return 0;
  }

  if (eval_cmd->parsed()) {
    auto loaded = checkpoint::load(eval_ckpt);
    Eigen::Index d_x = targs.d_x >= 0 ? targs.d_x
                                      : (loaded.m.spec.latent_inputs ? 0 : loaded.m.spec.d_x);
    data::Dataset ds = data::load_csv(targs.data_path, d_x);
    if (loaded.stats.applied) data::detail::apply_standardization(ds, loaded.stats);
    train::EvalConfig ecfg;
    ecfg.seed = eval_seed;
    EvalResult ev;
    if (loaded.m.spec.latent_inputs) {
      // the checkpointed latents describe the training set; held-out data
      // needs freshly fitted latents, using the stored training outputs is
      // not possible here so the data file itself serves as reference
      data::Dataset ref = ds;
      auto latents = train::fit_test_latents(loaded.m, ref, ds.y, ds.mask, targs.fit_steps,
                                             targs.fit_lr, derive_seed(eval_seed, 0xf17));
      ev = evaluate(loaded.m, ds, loaded.stats, ecfg, targs.eval_space, &latents);
    } else {
      ev = evaluate(loaded.m, ds, loaded.stats, ecfg, targs.eval_space);
    }
    json rec;
    rec["variant"] = model::variant_name(loaded.m.spec.variant);
    rec["seed"] = eval_seed;
    rec["split"] = 0;
    rec["train_ell"] = 0.0;
    rec["test_ll"] = ev.test_ll;
    rec["mrmse"] = ev.mrmse;
    rec["wall_time_s"] = 0.0;
    rec["eval_space"] = targs.eval_space;
    append_metrics(targs.metrics_path.empty() ? targs.out_path : targs.metrics_path, rec);
    std::cout << "test_ll=" << ev.test_ll << " mrmse=" << ev.mrmse << "\n";
    return 0;
  }

  if (pred_cmd->parsed()) {
    auto loaded = checkpoint::load(pred_ckpt);
    if (loaded.m.spec.latent_inputs)
      throw ConfigError("predict: latent-input checkpoints have no input-conditioned predictions");
    Eigen::Index d_x = targs.d_x >= 0 ? targs.d_x : loaded.m.spec.d_x;
    data::Dataset ds = data::load_csv(targs.data_path, d_x);
    if (ds.d_x() != loaded.m.spec.d_x)
      throw ConfigError("predict: input dimension does not match the checkpoint");
    Eigen::MatrixXd x = ds.x;
    if (loaded.stats.applied)
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        x.col(j) = (x.col(j).array() - loaded.stats.x_mean(j)) / loaded.stats.x_std(j);
    auto [mean, var] = loaded.m.predict(x);
    if (pred_space == "raw" && loaded.stats.applied) {
      for (Eigen::Index k = 0; k < mean.cols(); ++k) {
        mean.col(k) = mean.col(k).array() * loaded.stats.y_std(k) + loaded.stats.y_mean(k);
        var.col(k) = var.col(k).array() * loaded.stats.y_std(k) * loaded.stats.y_std(k);
      }
    }
    std::ofstream out(targs.out_path);
    if (!out) throw ConfigError("cannot open " + targs.out_path);
    out.precision(17);
    for (Eigen::Index k = 0; k < mean.cols(); ++k) out << "mean" << k << ",";
    for (Eigen::Index k = 0; k < var.cols(); ++k)
      out << "var" << k << (k + 1 < var.cols() ? "," : "\n");
    for (Eigen::Index i = 0; i < mean.rows(); ++i) {
      for (Eigen::Index k = 0; k < mean.cols(); ++k) out << mean(i, k) << ",";
      for (Eigen::Index k = 0; k < var.cols(); ++k)
        out << var(i, k) << (k + 1 < var.cols() ? "," : "\n");
    }
    std::cout << "wrote predictions for " << mean.rows() << " points to " << targs.out_path
              << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const nlgp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const nlgp::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
