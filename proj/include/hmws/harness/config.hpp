#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "hmws/baselines.hpp"
#include "hmws/engine.hpp"
#include "hmws/model.hpp"

namespace hmws::harness {

/// Everything a training run depends on. JSON field names match the members.
struct RunConfig {
  std::string domain = "timeseries";  // timeseries | blocks2d | testbed
  std::string method = "hmws";        // hmws | rws | vimco | reinforce
  int M = 2;
  int N = 8;
  int K = 3;
  double lambda = 0.5;
  int S = 0;  // baselines; 0 means K (N + M)
  std::string continuous_grad = "reparameterized";
  int iterations = 1000;
  int minibatch = 20;
  std::uint64_t seed = 0;
  int eval_interval = 100;
  int eval_count = 50;
  int S_test = 100;
  int checkpoint_interval = 0;  // 0: only the final checkpoint
  int workers = 1;
  double lr = 1e-3;
  // Write measured seconds into the metrics CSV. Off by default so that the
  // CSV depends only on (config, seed); timing.csv always has the clock.
  bool record_wall_clock = false;
  std::string data;    // dataset directory
  std::string output;  // run directory
  nlohmann::json model = nlohmann::json::object();  // domain-specific overrides

  void validate() const;
  int particles() const { return S > 0 ? S : K * (N + M); }
  bool is_hmws() const { return method == "hmws"; }
  HmwsConfig hmws() const;
  BaselineConfig baseline() const;
};

RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& c);
RunConfig load_config(const std::string& path);

std::unique_ptr<HybridModel> make_model(const std::string& domain, const nlohmann::json& overrides, std::uint64_t seed);

}  // namespace hmws::harness
