#include "hmws/importance.hpp"

#include <cmath>

#include "hmws/error.hpp"
#include "hmws/ops.hpp"

namespace hmws {

double is_normalizer(std::span<const double> log_weights) {
  if (log_weights.empty()) throw ShapeError("is_normalizer needs at least one weight");
  return ad::log_sum_exp(log_weights) - std::log(static_cast<double>(log_weights.size()));
}

std::vector<double> normalized_weights(std::span<const double> log_weights) {
  const double lse = ad::log_sum_exp(log_weights);
  if (!std::isfinite(lse)) throw NumericalError("degenerate weights");
  std::vector<double> out(log_weights.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(log_weights[i] - lse);
  return out;
}

double is_expectation(std::span<const double> log_weights, std::span<const double> f_values) {
  if (log_weights.size() != f_values.size()) throw ShapeError("is_expectation: weight/value count mismatch");
  if (log_weights.empty()) throw ShapeError("is_expectation needs at least one sample");
  const auto w = normalized_weights(log_weights);
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] > 0.0) acc += w[i] * f_values[i];
  }
  return acc;
}

}  // namespace hmws
