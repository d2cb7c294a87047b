#pragma once

#include <span>
#include <vector>

namespace hmws {

// Weights are carried in log space throughout; -inf is a zero-weight sample.

// log Z-hat = log-sum-exp(log_w) - log K.
double is_normalizer(std::span<const double> log_weights);

// Self-normalized weights w_k / sum_j w_j. Throws NumericalError if every
// weight is zero.
std::vector<double> normalized_weights(std::span<const double> log_weights);

// I-hat = sum_k normalized_w_k * f_k.
double is_expectation(std::span<const double> log_weights, std::span<const double> f_values);

}  // namespace hmws
