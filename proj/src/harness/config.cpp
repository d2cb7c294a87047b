#include "hmws/harness/config.hpp"

#include <fstream>
#include <set>

#include "hmws/blocks/model.hpp"
#include "hmws/error.hpp"
#include "hmws/gp/model.hpp"
#include "hmws/testbed.hpp"

namespace hmws::harness {

using nlohmann::json;

namespace {

const std::set<std::string> kRunKeys = {
    "domain", "method",     "M",        "N",          "K",        "lambda", "S",      "continuous_grad",
    "iterations", "minibatch", "seed", "eval_interval", "eval_count", "S_test", "checkpoint_interval", "workers",
    "lr",     "record_wall_clock", "data", "output", "model"};

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    if (!allowed.count(k)) throw ConfigError("unknown " + where + " field '" + k + "'");
  }
}

}  // namespace

void RunConfig::validate() const {
  if (domain != "timeseries" && domain != "blocks2d" && domain != "testbed") {
    throw ConfigError("domain must be timeseries, blocks2d or testbed, got '" + domain + "'");
  }
  if (method != "hmws" && method != "rws" && method != "vimco" && method != "reinforce") {
    throw ConfigError("method must be hmws, rws, vimco or reinforce, got '" + method + "'");
  }
  if (is_hmws()) hmws().validate();
  else baseline().validate();
  if (iterations < 0) throw ConfigError("iterations must be non-negative");
  if (minibatch < 1) throw ConfigError("minibatch must be at least 1");
  if (eval_interval < 1) throw ConfigError("eval_interval must be at least 1");
  if (eval_count < 1) throw ConfigError("eval_count must be at least 1");
  if (S_test < 1) throw ConfigError("S_test must be at least 1");
  if (checkpoint_interval < 0) throw ConfigError("checkpoint_interval must be non-negative");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (!(lr > 0)) throw ConfigError("lr must be positive");
  if (!model.is_object()) throw ConfigError("model overrides must be an object");
}

HmwsConfig RunConfig::hmws() const {
  HmwsConfig h;
  h.memory_size = M;
  h.proposals = N;
  h.importance_samples = K;
  h.replay_factor = lambda;
  return h;
}

BaselineConfig RunConfig::baseline() const {
  BaselineConfig b;
  b.particles = particles();
  b.method = parse_baseline_method(method);
  b.continuous = parse_continuous_mode(continuous_grad);
  return b;
}

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  check_keys(j, kRunKeys, "config");
  RunConfig c;
  read(j, "domain", c.domain);
  read(j, "method", c.method);
  read(j, "M", c.M);
  read(j, "N", c.N);
  read(j, "K", c.K);
  read(j, "lambda", c.lambda);
  read(j, "S", c.S);
  read(j, "continuous_grad", c.continuous_grad);
  read(j, "iterations", c.iterations);
  read(j, "minibatch", c.minibatch);
  read(j, "seed", c.seed);
  read(j, "eval_interval", c.eval_interval);
  read(j, "eval_count", c.eval_count);
  read(j, "S_test", c.S_test);
  read(j, "checkpoint_interval", c.checkpoint_interval);
  read(j, "workers", c.workers);
  read(j, "lr", c.lr);
  read(j, "record_wall_clock", c.record_wall_clock);
  read(j, "data", c.data);
  read(j, "output", c.output);
  if (j.contains("model")) c.model = j.at("model");
  c.validate();
  return c;
}

json config_to_json(const RunConfig& c) {
  return json{{"domain", c.domain},
              {"method", c.method},
              {"M", c.M},
              {"N", c.N},
              {"K", c.K},
              {"lambda", c.lambda},
              {"S", c.particles()},
              {"continuous_grad", c.continuous_grad},
              {"iterations", c.iterations},
              {"minibatch", c.minibatch},
              {"seed", c.seed},
              {"eval_interval", c.eval_interval},
              {"eval_count", c.eval_count},
              {"S_test", c.S_test},
              {"checkpoint_interval", c.checkpoint_interval},
              {"workers", c.workers},
              {"lr", c.lr},
              {"record_wall_clock", c.record_wall_clock},
              {"data", c.data},
              {"output", c.output},
              {"model", c.model}};
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

std::unique_ptr<HybridModel> make_model(const std::string& domain, const json& o, std::uint64_t seed) {
  if (!o.is_object()) throw ConfigError("model overrides must be an object");
  try {
    if (domain == "timeseries") {
      check_keys(o, {"length", "max_tokens", "hidden", "token_embed", "signal_embed", "init_noise", "allowed"}, "model");
      gp::GpConfig g;
      g.length = o.value("length", g.length);
      g.max_tokens = o.value("max_tokens", g.max_tokens);
      g.hidden = o.value("hidden", g.hidden);
      g.token_embed = o.value("token_embed", g.token_embed);
      g.signal_embed = o.value("signal_embed", g.signal_embed);
      g.init_noise = o.value("init_noise", g.init_noise);
      if (o.contains("allowed")) {
        g.allowed.assign(gp::kNumTokens, false);
        for (const auto& name : o.at("allowed")) {
          try {
            g.allowed[gp::parse_token(name.get<std::string>())] = true;
          } catch (const DataError& e) {
            throw ConfigError(e.what());
          }
        }
      }
      g.seed = seed;
      return std::make_unique<gp::GpModel>(g);
    }
    if (domain == "blocks2d") {
      check_keys(o, {"grid", "max_blocks", "primitives", "height", "width", "sigma_pix", "tau", "color_mode", "embed"},
                 "model");
      blocks::BlocksConfig b;
      b.grid = o.value("grid", b.grid);
      b.max_blocks = o.value("max_blocks", b.max_blocks);
      b.primitives = o.value("primitives", b.primitives);
      b.height = o.value("height", b.height);
      b.width = o.value("width", b.width);
      b.sigma_pix = o.value("sigma_pix", b.sigma_pix);
      b.tau = o.value("tau", b.tau);
      b.embed = o.value("embed", b.embed);
      const std::string mode = o.value("color_mode", std::string("colored"));
      if (mode == "colored") b.color_mode = blocks::ColorMode::kColored;
      else if (mode == "unicolor") b.color_mode = blocks::ColorMode::kUnicolor;
      else throw ConfigError("color_mode must be colored or unicolor, got '" + mode + "'");
      b.seed = seed;
      return std::make_unique<blocks::BlocksModel>(b);
    }
    if (domain == "testbed") {
      check_keys(o, {"prior", "means", "prior_std", "noise_std"}, "model");
      ConjugateTestbed tb;
      tb.prior = o.value("prior", std::vector<double>{0.25, 0.25, 0.25, 0.25});
      tb.means = o.value("means", std::vector<double>{-3.0, -1.0, 1.0, 3.0});
      tb.prior_std = o.value("prior_std", 1.0);
      tb.noise_std = o.value("noise_std", 0.5);
      return std::make_unique<TestbedModel>(tb);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model overrides: ") + e.what());
  }
  throw ConfigError("unknown domain '" + domain + "'");
}

}  // namespace hmws::harness
