#pragma once

// JSON config mapping for the model / train / eval blocks, shared by the CLI
// and the checkpoint header.

#include <fstream>
#include <string>

#include <json.hpp>

#include "nlgp/errors.hpp"
#include "nlgp/model.hpp"
#include "nlgp/train.hpp"

namespace nlgp::config {

using nlohmann::json;

inline std::string act_name(quad::ActKind k) {
  switch (k) {
    case quad::ActKind::relu: return "relu";
    case quad::ActKind::leaky: return "leaky";
    case quad::ActKind::erf: return "erf";
    case quad::ActKind::sherf: return "sherf";
  }
  return "?";
}

inline quad::ActKind act_from(const std::string& s) {
  for (auto k : {quad::ActKind::relu, quad::ActKind::leaky, quad::ActKind::erf,
                 quad::ActKind::sherf})
    if (act_name(k) == s) return k;
  throw ConfigError("unknown activation '" + s + "'");
}

inline json spec_to_json(const model::ModelSpec& s) {
  json j;
  j["variant"] = model::variant_name(s.variant);
  j["D_X"] = s.d_x;
  j["D_Y"] = s.d_y;
  j["L"] = s.l;
  j["L_prime"] = s.l_prime;
  j["D_H"] = s.d_h;
  j["activation"] = act_name(s.activation);
  j["leaky_eps"] = s.leaky_eps;
  j["N_ind"] = s.n_ind;
  j["N_ind_layer2"] = s.n_ind_layer2;
  j["ard"] = s.ard;
  j["deep_kernel"] = s.deep_kernel;
  j["latent_inputs"] = s.latent_inputs;
  j["ell_mode"] = s.ell_mode == model::EllMode::analytic ? "analytic" : "sgvb";
  j["n_samples"] = s.n_samples;
  j["quad_order"] = s.quad_order;
  j["train_inducing"] = s.train_inducing;
  j["fix_mixing_identity"] = s.fix_mixing_identity;
  j["jitter"] = s.jitter;
  j["l2_lambda"] = s.l2_lambda;
  j["beta_init"] = s.beta_init;
  return j;
}

inline model::ModelSpec spec_from_json(const json& j, model::ModelSpec base = {}) {
  model::ModelSpec s = base;
  try {
    if (j.contains("variant")) s.variant = model::variant_from(j.at("variant").get<std::string>());
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    long long d_x = s.d_x, d_y = s.d_y, l = s.l, lp = s.l_prime, d_h = s.d_h, n_ind = s.n_ind,
              n_ind2 = s.n_ind_layer2;
    get("D_X", d_x);
    get("D_Y", d_y);
    get("L", l);
    get("L_prime", lp);
    get("D_H", d_h);
    get("N_ind", n_ind);
    get("N_ind_layer2", n_ind2);
    s.d_x = d_x;
    s.d_y = d_y;
    s.l = l;
    s.l_prime = lp;
    s.d_h = d_h;
    s.n_ind = n_ind;
    s.n_ind_layer2 = n_ind2;
    if (j.contains("activation")) s.activation = act_from(j.at("activation").get<std::string>());
    get("leaky_eps", s.leaky_eps);
    get("ard", s.ard);
    get("deep_kernel", s.deep_kernel);
    get("latent_inputs", s.latent_inputs);
    if (j.contains("ell_mode")) {
      const auto mode = j.at("ell_mode").get<std::string>();
      if (mode == "analytic")
        s.ell_mode = model::EllMode::analytic;
      else if (mode == "sgvb")
        s.ell_mode = model::EllMode::sgvb;
      else
        throw ConfigError("unknown ell_mode '" + mode + "'");
    }
    get("n_samples", s.n_samples);
    get("quad_order", s.quad_order);
    get("train_inducing", s.train_inducing);
    get("fix_mixing_identity", s.fix_mixing_identity);
    get("jitter", s.jitter);
    get("l2_lambda", s.l2_lambda);
    get("beta_init", s.beta_init);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad model config: ") + e.what());
  }
  return s;
}

inline train::TrainConfig train_from_json(const json& j) {
  train::TrainConfig c;
  try {
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("minibatch")) c.minibatch = j.at("minibatch").get<long long>();
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (j.contains("lr_milestones")) c.lr_milestones = j.at("lr_milestones").get<std::vector<int>>();
    if (j.contains("lr_factor")) c.lr_factor = j.at("lr_factor").get<double>();
    if (j.contains("restarts")) c.restarts = j.at("restarts").get<int>();
    if (j.contains("screen_epochs")) c.screen_epochs = j.at("screen_epochs").get<int>();
    if (j.contains("kl_warmup_epochs")) c.kl_warmup_epochs = j.at("kl_warmup_epochs").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad train config: ") + e.what());
  }
  return c;
}

inline train::EvalConfig eval_from_json(const json& j) {
  train::EvalConfig c;
  try {
    if (j.contains("N_outer")) c.n_outer = j.at("N_outer").get<int>();
    if (j.contains("N_inner")) c.n_inner = j.at("N_inner").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad eval config: ") + e.what());
  }
  return c;
}

struct FullConfig {
  model::ModelSpec spec;
  train::TrainConfig train_cfg;
  train::EvalConfig eval_cfg;
};

inline FullConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  FullConfig c;
  if (j.contains("model")) c.spec = spec_from_json(j.at("model"));
  if (j.contains("train")) c.train_cfg = train_from_json(j.at("train"));
  if (j.contains("eval")) c.eval_cfg = eval_from_json(j.at("eval"));
  return c;
}

}  // namespace nlgp::config
