#pragma once

#include <cstdint>
#include <vector>

#include "hmws/gp/gp.hpp"
#include "hmws/model.hpp"
#include "hmws/nn.hpp"

namespace hmws::gp {

struct GpConfig {
  std::size_t length = 128;  // samples per series
  std::size_t max_tokens = 9;
  std::size_t hidden = 64;
  std::size_t token_embed = 16;
  std::size_t signal_embed = 64;
  // Tokens the grammar may emit; empty means all of them.
  std::vector<bool> allowed;
  double init_noise = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
  bool is_allowed(int token) const { return allowed.empty() || allowed[token]; }
};

/// Time series as GP draws with a latent compositional kernel. z_d is the
/// prefix token string, z_c the raw kernel parameters in token order.
///
/// Prior: a recurrent net over tokens with arity masking, and per-terminal
/// Gaussians over raw parameters read from its hidden states. Recognition has
/// the same shape with a convolutional signal embedding appended to every
/// recurrent input.
class GpModel : public HybridModel {
 public:
  explicit GpModel(GpConfig config);

  std::string_view domain() const override { return "timeseries"; }
  const GpConfig& config() const { return config_; }
  const std::vector<double>& grid() const { return grid_; }
  double noise_std() const;

  // Masked next-token log-probabilities after `prefix` under the prior
  // (x == nullptr) or the recognition model.
  std::vector<double> next_token_log_probs(std::span<const int> prefix, const Observation* x) const;

  std::string describe(const Discrete& z_d) const override;

 protected:
  Var prior_discrete(Tape& tape, Discrete& z_d, Rng* rng) const override;
  GaussianVar prior_continuous(Tape& tape, const Discrete& z_d) const override;
  Var log_likelihood(Tape& tape, const Discrete& z_d, Var z_c, const Observation& x) const override;
  Observation sample_observation(const Discrete& z_d, std::span<const double> z_c, Rng& rng) const override;
  Var recognition_discrete(Tape& tape, const Observation& x, Discrete& z_d, Rng* rng) const override;
  GaussianVar recognition_continuous(Tape& tape, const Discrete& z_d, const Observation& x) const override;

 private:
  struct SeqNet {
    std::string prefix;
    SlotId token_table;  // [kNumTokens + 1, token_embed]; last row is the start symbol
    nn::GruCell gru;
    nn::Linear token_head;
    nn::Linear param_head;  // hidden -> 3 mean offsets, 3 log-std offsets
    SlotId mean_bias;       // [kTerminalTypes * 3]
    SlotId log_std_bias;    // [kTerminalTypes * 3]
    SlotId buckets;         // [kPeriodBuckets], added to the raw period mean
  };

  SeqNet make_net(const std::string& prefix, Role role, std::size_t extra_input, Rng& rng);
  std::vector<double> mask(int open, std::size_t len) const;
  Var token_input(Tape& tape, const SeqNet& net, int token, const Var* embed) const;
  // [log p(z_d), h_1, ..., h_T]: h_i is the state after reading token i - 1.
  std::vector<Var> run(Tape& tape, const SeqNet& net, const Var* embed, Discrete& z_d, Rng* rng) const;
  const std::vector<Var>& cached_run(Tape& tape, bool recognition, const Observation* x, Discrete& z_d,
                                     Rng* rng) const;
  GaussianVar param_dist(Tape& tape, const SeqNet& net, const Discrete& z_d, const std::vector<Var>& run) const;
  Var embedding(Tape& tape, const Observation& x) const;

  GpConfig config_;
  std::vector<double> grid_;
  SeqNet prior_;
  SeqNet rec_;
  nn::ConvEmbedding embed_;
  SlotId noise_raw_;
};

}  // namespace hmws::gp
