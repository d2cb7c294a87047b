#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

// Compositional GP kernels. An expression is a prefix (pre-order) token
// string, e.g. [PLUS, SE, WN] for SE + WN.
namespace hmws::gp {

enum Token : int {
  kPlus = 0,
  kTimes,
  kConst,
  kWhiteNoise,
  kSquaredExp,
  kLinear,
  kPer1,  // kPer1 .. kPer1 + 9: periodic, bucketed from short to long period
};
inline constexpr int kPeriodBuckets = 10;
inline constexpr int kNumTokens = kPer1 + kPeriodBuckets;
inline constexpr int kMaxTerminalParams = 3;

int arity(int token);
// Raw parameters per terminal: C 1, WN 1, SE 2, LIN 2, PER 3.
int param_count(int token);
bool is_periodic(int token);
std::string token_name(int token);
int parse_token(const std::string& name);

// Terminal family shared by all period buckets: C, WN, SE, LIN, PER.
inline constexpr int kTerminalTypes = 5;
int terminal_type(int token);

struct Validation {
  bool valid = false;
  // Offending position; tokens.size() when the string ends early.
  std::size_t error_pos = 0;
};

// Running operand count: starts at 1, operators add 1, terminals subtract 1;
// valid iff it reaches 0 exactly at the last token and length <= max_len.
Validation validate_expr(std::span<const int> tokens, std::size_t max_len);

std::size_t raw_param_count(std::span<const int> tokens);
// Infix rendering with natural parameters, e.g. "(SE(0.49, 0.50) + WN(0.10))".
std::string describe(std::span<const int> tokens, std::span<const double> raw = {});

// Raw (unconstrained) to natural values: softplus for scales, lengthscales,
// periods and constants; the LIN offset is used as is. Natural order per
// terminal: C {lambda}, WN {s}, SE {l, s}, LIN {c, s}, PER {p, l, s}.
std::vector<double> natural_params(std::span<const int> tokens, std::span<const double> raw);
std::vector<double> raw_params(std::span<const int> tokens, std::span<const double> natural);

// k(x1, x2) from natural parameters.
double eval_kernel(std::span<const int> tokens, std::span<const double> natural, double x1, double x2);

struct KernelMatrix {
  Eigen::MatrixXd k;
  // dK / d raw_j, filled only when requested.
  std::vector<Eigen::MatrixXd> d_raw;
};

// K[i][j] = k(a_i, b_j) from raw parameters.
KernelMatrix kernel_matrix(std::span<const int> tokens, std::span<const double> raw, std::span<const double> a,
                           std::span<const double> b, bool with_grad);

}  // namespace hmws::gp
