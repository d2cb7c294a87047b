#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hmws/adam.hpp"
#include "hmws/engine.hpp"
#include "hmws/harness/config.hpp"
#include "hmws/harness/data.hpp"

namespace hmws::harness {

struct Summary {
  std::vector<double> values;
  double median = 0, q25 = 0, q75 = 0, iqr = 0;
};
// Quantiles interpolate linearly between order statistics.
double quantile(std::vector<double> values, double q);
Summary summarize(std::vector<double> values);
nlohmann::json summary_to_json(const Summary& s);

// Runs fn(i) for i in [0, n) on `workers` threads. Results must be written to
// per-index slots; the first exception is rethrown after all threads finish.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

/// IWAE log p with `samples` particles on the first `count` datapoints. Each
/// datapoint uses its own fixed stream, so repeated calls agree bitwise.
Summary evaluate(const HybridModel& model, const Dataset& data, int count, int samples, std::uint64_t seed,
                 int workers = 1);

struct Particle {
  Discrete z_d;
  Continuous z_c;
  double log_w = 0;
};

// K particles per memory entry from q(z_c | z_d, x); log_p_hat and omega
// as in the wake phase.
struct MemoryScore {
  std::vector<double> log_p_hat;
  std::vector<double> omega;
  std::vector<std::vector<Particle>> particles;  // [m][k]
};
MemoryScore score_memory(const HybridModel& model, const Observation& x, const Memory& memory, int samples, Rng& rng);

// Particles from the full recognition model.
std::vector<Particle> recognition_particles(const HybridModel& model, const Observation& x, int samples, Rng& rng);

const Particle& best_particle(const std::vector<Particle>& particles);
// Resamples one particle in proportion to its importance weight.
const Particle& resample_particle(const std::vector<Particle>& particles, Rng& rng);

/// Everything a run carries between iterations besides the parameters.
struct RunState {
  int iteration = 0;
  std::int64_t lik_evals = 0;
  std::int64_t skips = 0;
  std::vector<std::optional<Memory>> memories;  // hmws only, filled lazily
};

class Trainer {
 public:
  // Loads the dataset named by config.data and builds the model.
  explicit Trainer(RunConfig config);
  Trainer(RunConfig config, Dataset data);

  const RunConfig& config() const { return config_; }
  const Dataset& data() const { return data_; }
  HybridModel& model() { return *model_; }
  const HybridModel& model() const { return *model_; }
  const RunState& state() const { return state_; }

  // Restores parameters, optimizer and state from a checkpoint directory.
  void resume(const std::filesystem::path& checkpoint);
  // Trains up to config.iterations, writing metrics, timing and checkpoints
  // under config.output.
  void run();
  // One optimizer iteration, no I/O.
  void step();

  Summary evaluate_now() const;
  std::filesystem::path checkpoint_path(int iteration) const;
  void save(const std::filesystem::path& dir) const;

 private:
  void init();
  void write_metrics_row(std::ostream& metrics, std::ostream& timing, const Summary& s, double wall) const;
  Memory& memory_for(std::size_t i);

  RunConfig config_;
  Dataset data_;
  std::unique_ptr<HybridModel> model_;
  AdamState adam_;
  RunState state_;
  bool resumed_ = false;
};

// Model for a dataset under a run config: dataset overrides first, then the
// config's.
std::unique_ptr<HybridModel> model_for(const RunConfig& config, const Dataset& data);

/// Loads a checkpoint written by Trainer and evaluates it on `data`.
nlohmann::json eval_checkpoint(const std::filesystem::path& checkpoint, const Dataset& data, int samples,
                               std::optional<int> count = std::nullopt);

// Learning curve, per-datapoint extrapolations (time series) or
// reconstructions (blocks), and memory contents, under run_dir/plots.
void export_plots(const std::filesystem::path& run_dir);

// Pixel MSE of the best particle's noise-free rendering, per eval datapoint.
std::vector<double> blocks_reconstruction_mse(const Trainer& trainer, int count, int samples);

// The extended grid: the unit grid's spacing continued to 1.5 times its length.
std::vector<double> extrapolation_grid(std::size_t length);

}  // namespace hmws::harness
