#include "hmws/harness/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "hmws/baselines.hpp"
#include "hmws/blocks/model.hpp"
#include "hmws/checkpoint.hpp"
#include "hmws/error.hpp"
#include "hmws/gp/kernel.hpp"
#include "hmws/gp/model.hpp"
#include "hmws/importance.hpp"
#include "hmws/ops.hpp"

namespace hmws::harness {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kExportStream = kEvalStream + 1;
constexpr std::uint64_t kReconstructStream = kEvalStream + 2;
constexpr const char* kMetricsHeader = "iteration,wall_s,logp_median,logp_q25,logp_q75,lik_evals,skips";

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Keeps the header and rows whose leading iteration is at most `last`.
void truncate_csv(const fs::path& path, int last) {
  std::ifstream in(path);
  if (!in) return;
  std::vector<std::string> keep;
  std::string line;
  if (std::getline(in, line)) keep.push_back(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (std::stoll(line.substr(0, line.find(','))) <= last) keep.push_back(line);
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

std::vector<std::size_t> draw_batch(std::size_t n, std::size_t size, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  size = std::min(size, n);
  for (std::size_t i = 0; i < size; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(size);
  std::sort(idx.begin(), idx.end());
  return idx;
}

Particle score_particle(const HybridModel& model, Tape& tape, const Observation& x, Discrete z_d, double log_q_d,
                        Rng& rng) {
  const DiagonalGaussian q = model.q_continuous_cached(tape, z_d, x).detached();
  Continuous z(q.mean().size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = q.mean()[i] + std::exp(q.log_std()[i]) * standard_normal(rng);
  Var zv = tape.constant(Tensor::vector(z));
  const double lq = model.q_continuous_cached(tape, z_d, x).log_prob(zv).item();
  const double lp = model.log_joint(tape, z_d, zv, x).item();
  Particle p{std::move(z_d), std::move(z), lp - log_q_d - lq};
  if (std::isnan(p.log_w)) p.log_w = -std::numeric_limits<double>::infinity();
  return p;
}

std::vector<Particle> flatten(const MemoryScore& s) {
  std::vector<Particle> out;
  for (const auto& row : s.particles) out.insert(out.end(), row.begin(), row.end());
  return out;
}

}  // namespace

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw DataError("quantile of an empty set");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double f = pos - static_cast<double>(lo);
  if (f == 0.0 || lo + 1 >= v.size()) return v[lo];
  return v[lo] + f * (v[lo + 1] - v[lo]);
}

Summary summarize(std::vector<double> values) {
  Summary s;
  s.median = quantile(values, 0.5);
  s.q25 = quantile(values, 0.25);
  s.q75 = quantile(values, 0.75);
  s.iqr = s.q75 - s.q25;
  s.values = std::move(values);
  return s;
}

json summary_to_json(const Summary& s) {
  // JSON has no infinities; a zero-weight datapoint is reported as null.
  auto finite_or_null = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json values = json::array();
  for (double v : s.values) values.push_back(finite_or_null(v));
  return json{{"median", finite_or_null(s.median)}, {"q25", finite_or_null(s.q25)}, {"q75", finite_or_null(s.q75)},
              {"iqr", finite_or_null(s.iqr)},       {"count", s.values.size()},     {"values", values}};
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::jthread> pool;
  const std::size_t w = std::min<std::size_t>(workers, n);
  for (std::size_t t = 0; t < w; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += w) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  pool.clear();
  if (error) std::rethrow_exception(error);
}

Summary evaluate(const HybridModel& model, const Dataset& data, int count, int samples, std::uint64_t seed,
                 int workers) {
  const std::size_t n = std::min<std::size_t>(count, data.size());
  if (n == 0) throw DataError("evaluation needs at least one datapoint");
  std::vector<double> values(n);
  parallel_for(n, workers, [&](std::size_t i) {
    Rng rng = derive_stream(seed, i, kEvalStream);
    values[i] = iwae_log_marginal(model, data.items[i], samples, rng);
  });
  return summarize(std::move(values));
}

MemoryScore score_memory(const HybridModel& model, const Observation& x, const Memory& memory, int samples, Rng& rng) {
  MemoryScore s;
  for (const Discrete& z_d : memory.entries) {
    Tape tape(&model.params());
    std::vector<Particle> row;
    std::vector<double> lw;
    for (int k = 0; k < samples; ++k) {
      row.push_back(score_particle(model, tape, x, z_d, 0.0, rng));
      lw.push_back(row.back().log_w);
    }
    s.log_p_hat.push_back(is_normalizer(lw));
    s.particles.push_back(std::move(row));
  }
  if (std::isfinite(ad::log_sum_exp(s.log_p_hat))) {
    s.omega = normalized_weights(s.log_p_hat);
  } else {
    s.omega.assign(s.log_p_hat.size(), 1.0 / static_cast<double>(s.log_p_hat.size()));
  }
  return s;
}

std::vector<Particle> recognition_particles(const HybridModel& model, const Observation& x, int samples, Rng& rng) {
  std::vector<Particle> out;
  constexpr int kChunk = 25;
  for (int start = 0; start < samples; start += kChunk) {
    Tape tape(&model.params());
    for (int s = start; s < std::min(samples, start + kChunk); ++s) {
      auto [z_d, lq_d] = model.sample_q_discrete(tape, x, rng);
      out.push_back(score_particle(model, tape, x, std::move(z_d), lq_d.item(), rng));
    }
  }
  return out;
}

const Particle& best_particle(const std::vector<Particle>& particles) {
  if (particles.empty()) throw DataError("no particles");
  return *std::max_element(particles.begin(), particles.end(),
                           [](const Particle& a, const Particle& b) { return a.log_w < b.log_w; });
}

const Particle& resample_particle(const std::vector<Particle>& particles, Rng& rng) {
  std::vector<double> lw;
  for (const auto& p : particles) lw.push_back(p.log_w);
  if (!std::isfinite(ad::log_sum_exp(lw))) return particles.front();
  const auto w = normalized_weights(lw);
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  return particles[pick(rng)];
}

std::unique_ptr<HybridModel> model_for(const RunConfig& config, const Dataset& data) {
  if (data.domain != config.domain) {
    throw DataError("dataset domain '" + data.domain + "' does not match config domain '" + config.domain + "'");
  }
  json overrides = data.model.is_object() ? data.model : json::object();
  overrides.update(config.model);
  return make_model(config.domain, overrides, config.seed);
}

// --- Trainer -------------------------------------------------------------

Trainer::Trainer(RunConfig config) : config_(std::move(config)) {
  if (config_.data.empty()) throw ConfigError("config has no data directory");
  data_ = load_dataset(config_.data);
  init();
}

Trainer::Trainer(RunConfig config, Dataset data) : config_(std::move(config)), data_(std::move(data)) { init(); }

void Trainer::init() {
  config_.validate();
  if (data_.size() == 0) throw DataError("dataset is empty");
  model_ = model_for(config_, data_);
  adam_ = AdamState(model_->params(), AdamHyper{.lr = config_.lr});
  state_ = RunState{};
  if (config_.is_hmws()) state_.memories.resize(data_.size());
}

Memory& Trainer::memory_for(std::size_t i) {
  auto& slot = state_.memories.at(i);
  if (!slot) {
    Rng rng = derive_stream(config_.seed, i, kInitStream);
    slot = init_memory(*model_, data_.items[i], config_.M, rng);
  }
  return *slot;
}

void Trainer::step() {
  const int it = state_.iteration;
  Rng batch_rng = derive_stream(config_.seed, kBatchStream, static_cast<std::uint64_t>(it));
  const auto batch = draw_batch(data_.size(), static_cast<std::size_t>(config_.minibatch), batch_rng);

  struct Result {
    Gradients grads;
    bool skipped = false;
    std::int64_t evals = 0;
  };
  std::vector<Result> results(batch.size());
  const HmwsConfig hc = config_.hmws();
  const BaselineConfig bc = config_.is_hmws() ? BaselineConfig{} : config_.baseline();

  parallel_for(batch.size(), config_.workers, [&](std::size_t b) {
    const std::size_t i = batch[b];
    Rng rng = derive_stream(config_.seed, i, static_cast<std::uint64_t>(it));
    Result& r = results[b];
    if (config_.is_hmws()) {
      HmwsStep s = hmws_step(*model_, data_.items[i], memory_for(i), hc, rng);
      r.grads = std::move(s.theta);
      r.grads.add_scaled(s.phi, 1.0);
      r.skipped = s.skipped;
      r.evals = s.likelihood_evals;
      *state_.memories[i] = std::move(s.memory);
    } else {
      BaselineGrads g = baseline_grads(*model_, data_.items[i], bc, rng);
      r.grads = std::move(g.theta);
      r.grads.add_scaled(g.phi, 1.0);
      r.skipped = g.skipped;
      r.evals = g.likelihood_evals;
    }
  });

  // Fixed datapoint order keeps the sum independent of the worker count.
  Gradients total(model_->params());
  int used = 0;
  for (const Result& r : results) {
    state_.lik_evals += r.evals;
    if (r.skipped) {
      ++state_.skips;
      continue;
    }
    total.add_scaled(r.grads, 1.0);
    ++used;
  }
  if (used > 0) {
    total.scale(1.0 / used);
    if (total.all_finite()) {
      adam_step(model_->params(), total, adam_);
    } else {
      ++state_.skips;
      std::cerr << "iteration " << it << ": non-finite gradient, update skipped\n";
    }
  }
  ++state_.iteration;
}

Summary Trainer::evaluate_now() const {
  return evaluate(*model_, data_, config_.eval_count, config_.S_test, config_.seed, config_.workers);
}

fs::path Trainer::checkpoint_path(int iteration) const {
  char name[32];
  std::snprintf(name, sizeof name, "iter_%08d", iteration);
  return fs::path(config_.output) / "checkpoints" / name;
}

void Trainer::save(const fs::path& dir) const {
  json memories = json::array();
  for (const auto& m : state_.memories) memories.push_back(m ? memory_to_json(*model_, *m) : json(nullptr));
  json state{{"iteration", state_.iteration},
             {"lik_evals", state_.lik_evals},
             {"skips", state_.skips},
             {"memories", memories},
             {"config", config_to_json(config_)}};
  save_checkpoint(dir, model_->params(), adam_, state);
}

void Trainer::resume(const fs::path& checkpoint) {
  const json state = load_checkpoint(checkpoint, model_->params(), adam_);
  try {
    const RunConfig saved = config_from_json(state.at("config"));
    if (saved.domain != config_.domain || saved.method != config_.method) {
      throw ConfigError("checkpoint was written by a " + saved.domain + "/" + saved.method + " run");
    }
    state_.iteration = state.at("iteration").get<int>();
    state_.lik_evals = state.at("lik_evals").get<std::int64_t>();
    state_.skips = state.at("skips").get<std::int64_t>();
    const json& mems = state.at("memories");
    if (config_.is_hmws()) {
      if (mems.size() != data_.size()) throw DataError("checkpoint memories do not match the dataset size");
      for (std::size_t i = 0; i < mems.size(); ++i) {
        if (!mems[i].is_null()) state_.memories[i] = memory_from_json(*model_, mems[i]);
      }
    }
  } catch (const json::exception& e) {
    throw DataError("checkpoint state is malformed: " + std::string(e.what()));
  }
  resumed_ = true;
}

void Trainer::write_metrics_row(std::ostream& metrics, std::ostream& timing, const Summary& s, double wall) const {
  metrics << state_.iteration << ',' << num(config_.record_wall_clock ? wall : 0.0) << ',' << num(s.median) << ','
          << num(s.q25) << ',' << num(s.q75) << ',' << state_.lik_evals << ',' << state_.skips << '\n';
  metrics.flush();
  timing << state_.iteration << ',' << num(wall) << '\n';
  timing.flush();
}

void Trainer::run() {
  if (config_.output.empty()) throw ConfigError("config has no output directory");
  const fs::path out(config_.output);
  fs::create_directories(out);
  std::ofstream(out / "config.json") << config_to_json(config_).dump(2) << '\n';

  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  std::ofstream metrics, timing;
  if (resumed_) {
    truncate_csv(out / "metrics.csv", state_.iteration);
    truncate_csv(out / "timing.csv", state_.iteration);
    metrics.open(out / "metrics.csv", std::ios::app);
    timing.open(out / "timing.csv", std::ios::app);
  } else {
    metrics.open(out / "metrics.csv", std::ios::trunc);
    timing.open(out / "timing.csv", std::ios::trunc);
    metrics << kMetricsHeader << '\n';
    timing << "iteration,wall_s\n";
    const Summary s = evaluate_now();
    write_metrics_row(metrics, timing, s, elapsed());
  }
  if (!metrics || !timing) throw DataError("cannot write metrics under " + out.string());

  int saved_at = -1;
  while (state_.iteration < config_.iterations) {
    step();
    const int it = state_.iteration;
    if (it % config_.eval_interval == 0 || it == config_.iterations) {
      const Summary s = evaluate_now();
      write_metrics_row(metrics, timing, s, elapsed());
    }
    if (config_.checkpoint_interval > 0 && it % config_.checkpoint_interval == 0) {
      save(checkpoint_path(it));
      saved_at = it;
    }
  }
  if (saved_at != state_.iteration) save(checkpoint_path(state_.iteration));
  std::ofstream(out / "latest") << checkpoint_path(state_.iteration).filename().string() << '\n';
}

// --- eval / export -----------------------------------------------------------

namespace {

struct Loaded {
  RunConfig config;
  std::unique_ptr<Trainer> trainer;
};

Loaded load_run(const fs::path& checkpoint, std::optional<Dataset> data) {
  const json manifest = read_manifest(checkpoint);
  if (!manifest.contains("state") || !manifest["state"].contains("config")) {
    throw DataError("checkpoint " + checkpoint.string() + " has no run state");
  }
  Loaded l;
  l.config = config_from_json(manifest["state"]["config"]);
  l.trainer = data ? std::make_unique<Trainer>(l.config, std::move(*data)) : std::make_unique<Trainer>(l.config);
  l.trainer->resume(checkpoint);
  return l;
}

std::vector<Particle> posterior_particles(const Trainer& t, std::size_t i, int samples, Rng& rng) {
  const RunConfig& c = t.config();
  const HybridModel& model = t.model();
  const Observation& x = t.data().items[i];
  if (!c.is_hmws()) return recognition_particles(model, x, samples, rng);
  Memory mem;
  if (t.state().memories[i]) {
    mem = *t.state().memories[i];
  } else {
    // Never visited in training: test-time inference with one wake update.
    mem = init_memory(model, x, c.M, rng);
    mem = wake_update(model, x, mem, c.hmws(), rng).first;
  }
  const int per = std::max(1, samples / static_cast<int>(mem.entries.size()));
  return flatten(score_memory(model, x, mem, per, rng));
}

}  // namespace

json eval_checkpoint(const fs::path& checkpoint, const Dataset& data, int samples, std::optional<int> count) {
  if (samples < 1) throw ConfigError("S_test must be at least 1");
  Loaded l = load_run(checkpoint, data);
  const int n = count.value_or(static_cast<int>(data.size()));
  Summary s = evaluate(l.trainer->model(), data, n, samples, l.config.seed, l.config.workers);
  json out = summary_to_json(s);
  out["S_test"] = samples;
  out["iteration"] = l.trainer->state().iteration;
  out["checkpoint"] = checkpoint.string();
  return out;
}

std::vector<double> extrapolation_grid(std::size_t length) {
  const std::size_t n = length + length / 2;
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<double>(i) / static_cast<double>(length - 1);
  return t;
}

std::vector<double> blocks_reconstruction_mse(const Trainer& t, int count, int samples) {
  const auto& model = dynamic_cast<const blocks::BlocksModel&>(t.model());
  const std::size_t n = std::min<std::size_t>(count, t.data().size());
  std::vector<double> mse(n);
  parallel_for(n, t.config().workers, [&](std::size_t i) {
    Rng rng = derive_stream(t.config().seed, i, kReconstructStream);
    const auto particles = posterior_particles(t, i, samples, rng);
    const Particle& p = best_particle(particles);
    const Tensor img = model.render_scene(p.z_d, p.z_c);
    const auto a = img.values();
    const auto b = t.data().items[i].values();
    double acc = 0;
    for (std::size_t k = 0; k < a.size(); ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
    mse[i] = acc / static_cast<double>(a.size());
  });
  return mse;
}

void export_plots(const fs::path& run_dir) {
  std::ifstream latest(run_dir / "latest");
  std::string name;
  if (!latest || !(latest >> name)) throw DataError("no finished checkpoint under " + run_dir.string());
  Loaded l = load_run(run_dir / "checkpoints" / name, std::nullopt);
  const Trainer& t = *l.trainer;
  const RunConfig& c = l.config;
  const fs::path out = run_dir / "plots";
  fs::create_directories(out);

  {
    std::ifstream in(run_dir / "metrics.csv");
    if (!in) throw DataError("no metrics.csv under " + run_dir.string());
    std::ofstream csv(out / "learning_curve.csv");
    csv << "iteration,median,q25,q75\n";
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<std::string> f;
      std::stringstream ss(line);
      for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
      if (f.size() != 7) throw DataError("malformed metrics row: " + line);
      csv << f[0] << ',' << f[2] << ',' << f[3] << ',' << f[4] << '\n';
    }
  }

  const HybridModel& model = t.model();
  const std::size_t n = std::min<std::size_t>(c.eval_count, t.data().size());
  const int samples = c.is_hmws() ? c.K : c.particles();

  if (c.is_hmws()) {
    json mem = json::array();
    for (std::size_t i = 0; i < n; ++i) {
      if (!t.state().memories[i]) continue;
      Rng rng = derive_stream(c.seed, i, kExportStream);
      const Memory& m = *t.state().memories[i];
      const MemoryScore s = score_memory(model, t.data().items[i], m, c.K, rng);
      json entries = json::array();
      for (std::size_t k = 0; k < m.entries.size(); ++k) {
        const Particle& p = best_particle(s.particles[k]);
        json e{{"key", model.canonical_key(m.entries[k])},
               {"expression", model.describe(m.entries[k])},
               {"omega", s.omega[k]},
               {"log_p_hat", std::isfinite(s.log_p_hat[k]) ? json(s.log_p_hat[k]) : json(nullptr)},
               {"params", p.z_c}};
        if (c.domain == "timeseries") e["kernel"] = gp::describe(m.entries[k], p.z_c);
        entries.push_back(e);
      }
      mem.push_back(json{{"datapoint", i}, {"entries", entries}});
    }
    std::ofstream(out / "memory.json") << mem.dump(2) << '\n';
  }

  if (c.domain == "timeseries") {
    const auto& gm = dynamic_cast<const gp::GpModel&>(model);
    const auto& grid = gm.grid();
    const auto ext = extrapolation_grid(grid.size());
    fs::create_directories(out / "extrapolation");
    std::ofstream index(out / "extrapolation" / "index.csv");
    index << "file,datapoint,kernel\n";
    for (std::size_t i = 0; i < n; ++i) {
      Rng rng = derive_stream(c.seed, i, kExportStream + 1);
      const auto& y = t.data().items[i].values();
      const auto particles = posterior_particles(t, i, samples * (c.is_hmws() ? c.M : 1), rng);
      const Particle& p = resample_particle(particles, rng);
      const gp::Prediction pred = gp::gp_predict(p.z_d, p.z_c, gm.noise_std(), grid, y, ext, &rng);
      char fname[48];
      std::snprintf(fname, sizeof fname, "series_%03zu.csv", i);
      std::ofstream csv(out / "extrapolation" / fname);
      index << fname << ',' << i << ",\"" << gp::describe(p.z_d, p.z_c) << "\"\n";
      csv << "t,mean,lo2sd,hi2sd,sample\n";
      for (std::size_t k = 0; k < ext.size(); ++k) {
        const double sd = std::sqrt(pred.var[k]);
        csv << num(ext[k]) << ',' << num(pred.mean[k]) << ',' << num(pred.mean[k] - 2 * sd) << ','
            << num(pred.mean[k] + 2 * sd) << ',' << num(pred.sample[k]) << '\n';
      }
    }
  } else if (c.domain == "blocks2d") {
    const auto mse = blocks_reconstruction_mse(t, static_cast<int>(n), c.particles());
    std::ofstream csv(out / "reconstruction.csv");
    csv << "datapoint,mse\n";
    for (std::size_t i = 0; i < mse.size(); ++i) csv << i << ',' << num(mse[i]) << '\n';
  }
}

}  // namespace hmws::harness
