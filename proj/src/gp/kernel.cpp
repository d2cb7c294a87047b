#include "hmws/gp/kernel.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <utility>

#include "hmws/error.hpp"
#include "hmws/ops.hpp"

namespace hmws::gp {

namespace {

void check_token(int token) {
  if (token < 0 || token >= kNumTokens) throw DataError("unknown kernel token " + std::to_string(token));
}

bool scale_is_unconstrained(int token, int j) { return token == kLinear && j == 0; }

// Local (natural-parameter) kernel value and partials for one terminal.
double terminal(int token, const double* p, double x1, double x2, double* grad) {
  const double d = x1 - x2;
  switch (token) {
    case kConst:
      if (grad) grad[0] = 1.0;
      return p[0];
    case kWhiteNoise: {
      const double ind = x1 == x2 ? 1.0 : 0.0;
      if (grad) grad[0] = 2.0 * p[0] * ind;
      return p[0] * p[0] * ind;
    }
    case kSquaredExp: {
      const double l = p[0], s = p[1];
      const double e = std::exp(-d * d / (2.0 * l * l));
      if (grad) {
        grad[0] = s * s * e * d * d / (l * l * l);
        grad[1] = 2.0 * s * e;
      }
      return s * s * e;
    }
    case kLinear: {
      const double c = p[0], s = p[1];
      const double prod = (x1 - c) * (x2 - c);
      if (grad) {
        grad[0] = -s * s * ((x1 - c) + (x2 - c));
        grad[1] = 2.0 * s * prod;
      }
      return s * s * prod;
    }
    default: {  // periodic
      const double per = p[0], l = p[1], s = p[2];
      const double ad = std::abs(d);
      const double u = std::numbers::pi * ad / per;
      const double sn = std::sin(u), cs = std::cos(u);
      const double e = std::exp(-2.0 * sn * sn / (l * l));
      if (grad) {
        grad[0] = s * s * e * (4.0 / (l * l)) * sn * cs * std::numbers::pi * ad / (per * per);
        grad[1] = s * s * e * 4.0 * sn * sn / (l * l * l);
        grad[2] = 2.0 * s * e;
      }
      return s * s * e;
    }
  }
}

struct Cursor {
  std::span<const int> tokens;
  std::size_t pos = 0;
  std::size_t param = 0;

  int next() {
    if (pos >= tokens.size()) throw DataError("kernel expression ends early");
    const int t = tokens[pos++];
    check_token(t);
    return t;
  }
};

double eval_scalar(Cursor& c, std::span<const double> natural, double x1, double x2) {
  const int t = c.next();
  if (t == kPlus) {
    const double a = eval_scalar(c, natural, x1, x2);
    return a + eval_scalar(c, natural, x1, x2);
  }
  if (t == kTimes) {
    const double a = eval_scalar(c, natural, x1, x2);
    return a * eval_scalar(c, natural, x1, x2);
  }
  const double v = terminal(t, natural.data() + c.param, x1, x2, nullptr);
  c.param += param_count(t);
  return v;
}

struct NodeMatrix {
  Eigen::MatrixXd k;
  std::vector<std::pair<std::size_t, Eigen::MatrixXd>> d;  // (raw index, dK)
};

NodeMatrix eval_matrix(Cursor& c, std::span<const double> raw, std::span<const double> a, std::span<const double> b,
                       bool with_grad) {
  const int t = c.next();
  if (t == kPlus || t == kTimes) {
    NodeMatrix l = eval_matrix(c, raw, a, b, with_grad);
    NodeMatrix r = eval_matrix(c, raw, a, b, with_grad);
    NodeMatrix out;
    if (t == kPlus) {
      out.k = l.k + r.k;
      out.d = std::move(l.d);
      for (auto& e : r.d) out.d.push_back(std::move(e));
    } else {
      out.k = l.k.cwiseProduct(r.k);
      for (auto& e : l.d) e.second.array() *= r.k.array();
      for (auto& e : r.d) e.second.array() *= l.k.array();
      out.d = std::move(l.d);
      for (auto& e : r.d) out.d.push_back(std::move(e));
    }
    return out;
  }
  const int np = param_count(t);
  double nat[kMaxTerminalParams], chain[kMaxTerminalParams];
  for (int j = 0; j < np; ++j) {
    const double r = raw[c.param + j];
    nat[j] = scale_is_unconstrained(t, j) ? r : ad::softplus(r);
    chain[j] = scale_is_unconstrained(t, j) ? 1.0 : ad::sigmoid(r);
  }
  NodeMatrix out;
  out.k.resize(a.size(), b.size());
  if (with_grad) {
    for (int j = 0; j < np; ++j) out.d.emplace_back(c.param + j, Eigen::MatrixXd(a.size(), b.size()));
  }
  double g[kMaxTerminalParams];
  // Same inputs on both sides: fill one triangle and mirror.
  const bool symmetric = a.data() == b.data() && a.size() == b.size();
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = symmetric ? i : 0; k < b.size(); ++k) {
      const double v = terminal(t, nat, a[i], b[k], with_grad ? g : nullptr);
      out.k(i, k) = v;
      if (symmetric) out.k(k, i) = v;
      if (with_grad) {
        for (int j = 0; j < np; ++j) {
          out.d[j].second(i, k) = g[j] * chain[j];
          if (symmetric) out.d[j].second(k, i) = g[j] * chain[j];
        }
      }
    }
  }
  c.param += np;
  return out;
}

void check_params(std::span<const int> tokens, std::size_t got) {
  if (raw_param_count(tokens) != got) {
    throw ShapeError("kernel expects " + std::to_string(raw_param_count(tokens)) + " parameters, got " +
                     std::to_string(got));
  }
}

}  // namespace

int arity(int token) {
  check_token(token);
  return token == kPlus || token == kTimes ? 2 : 0;
}

int param_count(int token) {
  check_token(token);
  switch (token) {
    case kPlus:
    case kTimes: return 0;
    case kConst:
    case kWhiteNoise: return 1;
    case kSquaredExp:
    case kLinear: return 2;
    default: return 3;
  }
}

bool is_periodic(int token) { return token >= kPer1 && token < kNumTokens; }

int terminal_type(int token) {
  check_token(token);
  if (arity(token) > 0) throw Error("operators have no terminal type");
  return is_periodic(token) ? 4 : token - kConst;
}

std::string token_name(int token) {
  check_token(token);
  switch (token) {
    case kPlus: return "PLUS";
    case kTimes: return "TIMES";
    case kConst: return "C";
    case kWhiteNoise: return "WN";
    case kSquaredExp: return "SE";
    case kLinear: return "LIN";
    default: return "PER" + std::to_string(token - kPer1 + 1);
  }
}

int parse_token(const std::string& name) {
  for (int t = 0; t < kNumTokens; ++t)
    if (token_name(t) == name) return t;
  throw DataError("unknown kernel token '" + name + "'");
}

Validation validate_expr(std::span<const int> tokens, std::size_t max_len) {
  int open = 1;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (open == 0 || i >= max_len || tokens[i] < 0 || tokens[i] >= kNumTokens) return {false, i};
    open += arity(tokens[i]) - 1;
  }
  if (open != 0) return {false, tokens.size()};
  return {true, 0};
}

std::size_t raw_param_count(std::span<const int> tokens) {
  std::size_t n = 0;
  for (int t : tokens) n += param_count(t);
  return n;
}

std::vector<double> natural_params(std::span<const int> tokens, std::span<const double> raw) {
  check_params(tokens, raw.size());
  std::vector<double> out(raw.size());
  std::size_t k = 0;
  for (int t : tokens)
    for (int j = 0; j < param_count(t); ++j, ++k) out[k] = scale_is_unconstrained(t, j) ? raw[k] : ad::softplus(raw[k]);
  return out;
}

std::vector<double> raw_params(std::span<const int> tokens, std::span<const double> natural) {
  check_params(tokens, natural.size());
  std::vector<double> out(natural.size());
  std::size_t k = 0;
  for (int t : tokens)
    for (int j = 0; j < param_count(t); ++j, ++k)
      out[k] = scale_is_unconstrained(t, j) ? natural[k] : ad::softplus_inverse(natural[k]);
  return out;
}

double eval_kernel(std::span<const int> tokens, std::span<const double> natural, double x1, double x2) {
  check_params(tokens, natural.size());
  Cursor c{tokens};
  const double v = eval_scalar(c, natural, x1, x2);
  if (c.pos != tokens.size()) throw DataError("trailing tokens in kernel expression");
  return v;
}

KernelMatrix kernel_matrix(std::span<const int> tokens, std::span<const double> raw, std::span<const double> a,
                           std::span<const double> b, bool with_grad) {
  check_params(tokens, raw.size());
  Cursor c{tokens};
  NodeMatrix node = eval_matrix(c, raw, a, b, with_grad);
  if (c.pos != tokens.size()) throw DataError("trailing tokens in kernel expression");
  KernelMatrix out;
  out.k = std::move(node.k);
  if (with_grad) {
    out.d_raw.assign(raw.size(), Eigen::MatrixXd::Zero(a.size(), b.size()));
    for (auto& [j, m] : node.d) out.d_raw[j] += m;
  }
  return out;
}

std::string describe(std::span<const int> tokens, std::span<const double> raw) {
  const std::vector<double> nat = raw.empty() ? std::vector<double>{} : natural_params(tokens, raw);
  std::size_t pos = 0, param = 0;
  std::function<std::string()> rec = [&]() -> std::string {
    if (pos >= tokens.size()) throw DataError("kernel expression ends early");
    const int t = tokens[pos++];
    if (t == kPlus || t == kTimes) {
      std::string l = rec();
      std::string r = rec();
      return "(" + l + (t == kPlus ? " + " : " * ") + r + ")";
    }
    std::string s = token_name(t);
    if (!nat.empty()) {
      s += "(";
      for (int j = 0; j < param_count(t); ++j) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%s%.2f", j ? ", " : "", nat[param + j]);
        s += buf;
      }
      s += ")";
    }
    param += param_count(t);
    return s;
  };
  return rec();
}

}  // namespace hmws::gp
