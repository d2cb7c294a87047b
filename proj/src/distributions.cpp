#include "hmws/distributions.hpp"

#include <cmath>
#include <limits>

#include "hmws/error.hpp"

namespace hmws {

Categorical::Categorical(std::vector<double> logits) : logits_(std::move(logits)) {
  if (logits_.empty()) throw ShapeError("categorical with no outcomes");
  log_norm_ = ad::log_sum_exp(logits_);
  if (!std::isfinite(log_norm_)) throw NumericalError("categorical logits have no finite entry");
}

std::vector<double> Categorical::log_probs() const {
  std::vector<double> out(logits_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = logits_[i] - log_norm_;
  return out;
}

std::vector<double> Categorical::probs() const {
  std::vector<double> out(logits_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(logits_[i] - log_norm_);
  return out;
}

double Categorical::log_prob(std::size_t value) const {
  if (value >= logits_.size()) {
    throw Error("categorical value " + std::to_string(value) + " outside support of size " +
                std::to_string(logits_.size()));
  }
  const double lp = logits_[value] - log_norm_;
  if (std::isinf(lp)) throw Error("categorical value " + std::to_string(value) + " has zero mass");
  return lp;
}

std::size_t Categorical::sample(Rng& rng) const { return sample_index(probs(), rng); }

std::size_t sample_index(std::span<const double> probs, Rng& rng) {
  double total = 0.0;
  for (double p : probs) total += p;
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = i;
    acc += probs[i];
    if (u < acc) return i;
  }
  return last_positive;
}

DiagonalGaussian::DiagonalGaussian(std::vector<double> mean, std::vector<double> log_std)
    : mean_(std::move(mean)), log_std_(std::move(log_std)) {
  if (mean_.size() != log_std_.size()) throw ShapeError("gaussian mean/log_std length mismatch");
}

double normal_log_density(double x, double mean, double stddev) {
  const double z = (x - mean) / stddev;
  return -0.5 * z * z - std::log(stddev) - kHalfLog2Pi;
}

double DiagonalGaussian::log_prob(std::span<const double> value) const {
  if (value.size() != mean_.size()) throw ShapeError("gaussian value has wrong dimension");
  double lp = 0.0;
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (!std::isfinite(value[i])) throw Error("gaussian value is not finite");
    lp += normal_log_density(value[i], mean_[i], std::exp(log_std_[i]));
  }
  return lp;
}

std::vector<double> DiagonalGaussian::sample(Rng& rng) const {
  std::vector<double> out(mean_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mean_[i] + std::exp(log_std_[i]) * standard_normal(rng);
  return out;
}

namespace ad {

Var categorical_log_prob(Var logits, std::size_t value) {
  if (value >= logits.size()) {
    throw Error("categorical value " + std::to_string(value) + " outside support of size " +
                std::to_string(logits.size()));
  }
  return index(log_softmax(logits), value);
}

Var gaussian_log_prob(Var z, Var mean, Var log_std) {
  if (z.size() != mean.size() || z.size() != log_std.size()) {
    throw ShapeError("gaussian_log_prob: sizes " + shape_string(z.shape()) + ", " + shape_string(mean.shape()) +
                     ", " + shape_string(log_std.shape()));
  }
  Tape& tape = *z.tape();
  const Tensor& zv = z.value();
  const Tensor& mv = mean.value();
  const Tensor& sv = log_std.value();
  const std::size_t n = zv.size();
  double lp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = (zv[i] - mv[i]) * std::exp(-sv[i]);
    lp += -0.5 * u * u - sv[i] - kHalfLog2Pi;
  }
  // Fused: d/dz = -u e^{-s}, d/dmean = u e^{-s}, d/dlog_std = u^2 - 1.
  return tape.record("gaussian_log_prob", {z, mean, log_std}, Tensor::scalar(lp),
                     [z, mean, log_std, n](const Tensor& g, std::span<Tensor* const> gin) {
                       const Tensor& zv = z.value();
                       const Tensor& mv = mean.value();
                       const Tensor& sv = log_std.value();
                       for (std::size_t i = 0; i < n; ++i) {
                         const double inv = std::exp(-sv[i]);
                         const double u = (zv[i] - mv[i]) * inv;
                         if (gin[0]) (*gin[0])[i] -= g[0] * u * inv;
                         if (gin[1]) (*gin[1])[i] += g[0] * u * inv;
                         if (gin[2]) (*gin[2])[i] += g[0] * (u * u - 1.0);
                       }
                     });
}

}  // namespace ad

DiagonalGaussian GaussianVar::detached() const {
  const auto& m = mean.value().storage();
  const auto& s = log_std.value().storage();
  return DiagonalGaussian(m, s);
}

Var GaussianVar::reparameterize(std::span<const double> eps) const {
  Tape& tape = *mean.tape();
  Var e = tape.constant(Tensor::vector(std::vector<double>(eps.begin(), eps.end())));
  return ad::add(mean, ad::mul(ad::exp(log_std), e));
}

}  // namespace hmws
