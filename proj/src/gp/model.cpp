#include "hmws/gp/model.hpp"

#include <cmath>
#include <limits>

#include "hmws/error.hpp"
#include "hmws/ops.hpp"

namespace hmws::gp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Initial raw means per terminal type, in natural-parameter order.
const double kInitNatural[kTerminalTypes][kMaxTerminalParams] = {
    {0.5, 0, 0},    // C: lambda
    {0.1, 0, 0},    // WN: s
    {0.1, 1.0, 0},  // SE: l, s
    {0.5, 0.5, 0},  // LIN: c (unconstrained), s
    {0, 1.0, 1.0},  // PER: p (from the bucket), l, s
};

Tensor init_mean_bias() {
  Tensor t(Shape{kTerminalTypes * kMaxTerminalParams});
  for (int type = 0; type < kTerminalTypes; ++type) {
    const int token = type == 4 ? kPer1 : kConst + type;
    for (int j = 0; j < param_count(token); ++j) {
      const double v = kInitNatural[type][j];
      const bool skip = (type == 3 && j == 0) || (type == 4 && j == 0);
      t[type * kMaxTerminalParams + j] = skip ? v : ad::softplus_inverse(v);
    }
  }
  return t;
}

// Periods log-spaced over [0.05, 2.0] of the series span.
Tensor init_buckets() {
  Tensor t(Shape{static_cast<std::size_t>(kPeriodBuckets)});
  for (int i = 0; i < kPeriodBuckets; ++i) {
    const double period = 0.05 * std::pow(2.0 / 0.05, static_cast<double>(i) / (kPeriodBuckets - 1));
    t[i] = ad::softplus_inverse(period);
  }
  return t;
}

}  // namespace

void GpConfig::validate() const {
  if (length < 16) throw ConfigError("timeseries length must be at least 16");
  if (max_tokens < 1) throw ConfigError("max_tokens must be at least 1");
  if (hidden < 1 || token_embed < 1 || signal_embed < 1) throw ConfigError("network sizes must be positive");
  if (!allowed.empty()) {
    if (allowed.size() != static_cast<std::size_t>(kNumTokens)) throw ConfigError("allowed mask needs one entry per token");
    bool terminal = false;
    for (int t = 0; t < kNumTokens; ++t) terminal |= allowed[t] && arity(t) == 0;
    if (!terminal) throw ConfigError("the grammar must allow at least one terminal");
  }
}

GpModel::GpModel(GpConfig config) : config_(std::move(config)) {
  config_.validate();
  grid_ = unit_grid(config_.length);
  Rng rng = derive_stream(config_.seed, 0, kInitStream);
  prior_ = make_net("gp/prior", Role::kGenerative, 0, rng);
  noise_raw_ = params_.add("gp/noise_raw", Role::kGenerative, Tensor::vector({ad::softplus_inverse(config_.init_noise)}));
  embed_ = nn::ConvEmbedding::create(params_, "gp/q/embed", Role::kRecognition, config_.length, config_.signal_embed, rng);
  rec_ = make_net("gp/q", Role::kRecognition, config_.signal_embed, rng);
}

GpModel::SeqNet GpModel::make_net(const std::string& prefix, Role role, std::size_t extra_input, Rng& rng) {
  SeqNet n;
  n.prefix = prefix;
  const std::size_t e = config_.token_embed;
  n.token_table = params_.add(prefix + "/tokens", role, nn::uniform_init(Shape{kNumTokens + 1u, e}, 1, rng, 0.5));
  n.gru = nn::GruCell::create(params_, prefix + "/gru", role, e + extra_input, config_.hidden, rng);
  n.token_head = nn::Linear::create(params_, prefix + "/token_head", role, config_.hidden, kNumTokens, rng, 0.5);
  n.param_head = nn::Linear::create(params_, prefix + "/param_head", role, config_.hidden, 2 * kMaxTerminalParams, rng, 0.1);
  n.mean_bias = params_.add(prefix + "/param_mean", role, init_mean_bias());
  n.log_std_bias = params_.add(prefix + "/param_log_std", role,
                               Tensor(Shape{kTerminalTypes * kMaxTerminalParams}, std::log(0.5)));
  n.buckets = params_.add(prefix + "/period_buckets", role, init_buckets());
  return n;
}

double GpModel::noise_std() const { return ad::softplus(params_.value(noise_raw_)[0]); }

std::vector<double> GpModel::mask(int open, std::size_t len) const {
  std::vector<double> m(kNumTokens, 0.0);
  for (int t = 0; t < kNumTokens; ++t) {
    // An operator needs room for itself and one more operand than is open.
    const bool fits = arity(t) == 0 || len + 2 + static_cast<std::size_t>(open) <= config_.max_tokens;
    if (!fits || !config_.is_allowed(t)) m[t] = kNegInf;
  }
  return m;
}

Var GpModel::token_input(Tape& tape, const SeqNet& net, int token, const Var* embed) const {
  const std::size_t e = config_.token_embed;
  std::vector<std::size_t> idx(e);
  for (std::size_t i = 0; i < e; ++i) idx[i] = static_cast<std::size_t>(token) * e + i;
  Var row = ad::gather(tape.param(net.token_table), std::move(idx));
  return embed ? ad::concat({row, *embed}) : row;
}

std::vector<Var> GpModel::run(Tape& tape, const SeqNet& net, const Var* embed, Discrete& z_d, Rng* rng) const {
  if (!rng) {
    const Validation v = validate_expr(z_d, config_.max_tokens);
    if (!v.valid) throw DataError("invalid kernel expression at position " + std::to_string(v.error_pos));
  } else {
    z_d.clear();
  }
  std::vector<Var> out(1);
  std::vector<Var> log_probs;
  Var h = net.gru.step(tape, token_input(tape, net, kNumTokens, embed), tape.constant(Tensor(Shape{config_.hidden})));
  int open = 1;
  for (std::size_t i = 0; open > 0; ++i) {
    Var logits = ad::add(net.token_head(tape, h), tape.constant(Tensor::vector(mask(open, i))));
    Var lp = ad::log_softmax(logits);
    if (rng) {
      const Tensor& v = lp.value();
      std::vector<double> probs(v.size());
      for (std::size_t k = 0; k < v.size(); ++k) probs[k] = std::exp(v[k]);
      z_d.push_back(static_cast<int>(sample_index(probs, *rng)));
    }
    const int token = z_d[i];
    log_probs.push_back(ad::index(lp, static_cast<std::size_t>(token)));
    open += arity(token) - 1;
    h = net.gru.step(tape, token_input(tape, net, token, embed), h);
    out.push_back(h);
  }
  out[0] = ad::sum(ad::concat(log_probs));
  return out;
}

const std::vector<Var>& GpModel::cached_run(Tape& tape, bool recognition, const Observation* x, Discrete& z_d,
                                            Rng* rng) const {
  const SeqNet& net = recognition ? rec_ : prior_;
  std::optional<Var> embed;
  if (recognition) embed = embedding(tape, *x);
  const Var* e = embed ? &*embed : nullptr;
  const std::string tag = recognition ? "gp/q:" : "gp/p:";
  if (rng) {
    std::vector<Var> fresh = run(tape, net, e, z_d, rng);
    return tape.memo(tag + canonical_key(z_d), [&] { return std::move(fresh); });
  }
  return tape.memo(tag + canonical_key(z_d), [&] { return run(tape, net, e, z_d, nullptr); });
}

Var GpModel::embedding(Tape& tape, const Observation& x) const {
  if (x.size() != config_.length) {
    throw ShapeError("expected a series of length " + std::to_string(config_.length) + ", got " +
                     shape_string(x.shape()));
  }
  return tape.memo("gp/embed", [&] { return std::vector<Var>{embed_(tape, tape.constant(x))}; })[0];
}

GaussianVar GpModel::param_dist(Tape& tape, const SeqNet& net, const Discrete& z_d, const std::vector<Var>& run) const {
  Var mean_bias = tape.param(net.mean_bias);
  Var log_std_bias = tape.param(net.log_std_bias);
  Var buckets = ad::concat({tape.param(net.buckets), tape.constant(Tensor::vector({0.0}))});
  std::vector<Var> means, log_stds;
  for (std::size_t i = 0; i < z_d.size(); ++i) {
    const int token = z_d[i];
    const int np = param_count(token);
    if (np == 0) continue;
    const std::size_t type = static_cast<std::size_t>(terminal_type(token));
    Var head = net.param_head(tape, run[i + 1]);
    std::vector<std::size_t> m_idx, s_idx, b_idx;
    for (int j = 0; j < np; ++j) {
      m_idx.push_back(static_cast<std::size_t>(j));
      s_idx.push_back(static_cast<std::size_t>(kMaxTerminalParams + j));
      b_idx.push_back(type * kMaxTerminalParams + j);
    }
    Var mean = ad::add(ad::gather(head, m_idx), ad::gather(mean_bias, b_idx));
    if (is_periodic(token)) {
      const std::size_t none = kPeriodBuckets;
      mean = ad::add(mean, ad::gather(buckets, {static_cast<std::size_t>(token - kPer1), none, none}));
    }
    means.push_back(mean);
    log_stds.push_back(ad::add(ad::gather(head, s_idx), ad::gather(log_std_bias, b_idx)));
  }
  return GaussianVar{ad::concat(means), ad::concat(log_stds)};
}

std::vector<double> GpModel::next_token_log_probs(std::span<const int> prefix, const Observation* x) const {
  Tape tape(&params_);
  const SeqNet& net = x ? rec_ : prior_;
  std::optional<Var> embed;
  if (x) embed = embedding(tape, *x);
  const Var* e = embed ? &*embed : nullptr;
  Var h = net.gru.step(tape, token_input(tape, net, kNumTokens, e), tape.constant(Tensor(Shape{config_.hidden})));
  int open = 1;
  for (int token : prefix) {
    if (open == 0) throw DataError("prefix already forms a complete expression");
    open += arity(token) - 1;
    h = net.gru.step(tape, token_input(tape, net, token, e), h);
  }
  if (open == 0) throw DataError("prefix already forms a complete expression");
  Var logits = ad::add(net.token_head(tape, h), tape.constant(Tensor::vector(mask(open, prefix.size()))));
  return ad::log_softmax(logits).value().storage();
}

std::string GpModel::describe(const Discrete& z_d) const { return gp::describe(z_d); }

Var GpModel::prior_discrete(Tape& tape, Discrete& z_d, Rng* rng) const {
  return cached_run(tape, false, nullptr, z_d, rng)[0];
}

GaussianVar GpModel::prior_continuous(Tape& tape, const Discrete& z_d) const {
  Discrete z = z_d;
  return param_dist(tape, prior_, z_d, cached_run(tape, false, nullptr, z, nullptr));
}

Var GpModel::log_likelihood(Tape& tape, const Discrete& z_d, Var z_c, const Observation& x) const {
  if (x.size() != config_.length) {
    throw ShapeError("expected a series of length " + std::to_string(config_.length) + ", got " +
                     shape_string(x.shape()));
  }
  return gp_log_marginal_var(z_c, tape.param(noise_raw_), z_d, grid_, x.values());
}

Observation GpModel::sample_observation(const Discrete& z_d, std::span<const double> z_c, Rng& rng) const {
  return Tensor::vector(gp_sample(z_d, z_c, noise_std(), grid_, rng));
}

Var GpModel::recognition_discrete(Tape& tape, const Observation& x, Discrete& z_d, Rng* rng) const {
  return cached_run(tape, true, &x, z_d, rng)[0];
}

GaussianVar GpModel::recognition_continuous(Tape& tape, const Discrete& z_d, const Observation& x) const {
  Discrete z = z_d;
  return param_dist(tape, rec_, z_d, cached_run(tape, true, &x, z, nullptr));
}

}  // namespace hmws::gp
