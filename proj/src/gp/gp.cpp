#include "hmws/gp/gp.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "hmws/error.hpp"
#include "hmws/ops.hpp"

namespace hmws::gp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void check_data(std::span<const double> t, std::span<const double> y) {
  if (t.empty() || t.size() != y.size()) throw ShapeError("GP inputs and observations must have equal, nonzero length");
  for (double v : y)
    if (!std::isfinite(v)) throw DataError("non-finite observation in GP likelihood");
}

Eigen::MatrixXd noisy_cov(std::span<const int> tokens, std::span<const double> raw, double sigma,
                          std::span<const double> t, KernelMatrix* keep_grad) {
  KernelMatrix km = kernel_matrix(tokens, raw, t, t, keep_grad != nullptr);
  Eigen::MatrixXd cov = km.k;
  cov.diagonal().array() += sigma * sigma;
  if (keep_grad) *keep_grad = std::move(km);
  return cov;
}

}  // namespace

std::optional<Eigen::LLT<Eigen::MatrixXd>> robust_cholesky(const Eigen::MatrixXd& cov) {
  if (!cov.allFinite()) return std::nullopt;
  for (double jitter : kJitterLadder) {
    Eigen::MatrixXd m = cov;
    m.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) continue;
    const auto diag = llt.matrixLLT().diagonal();
    if ((diag.array() > 0.0).all() && diag.allFinite()) return llt;
  }
  return std::nullopt;
}

std::vector<double> unit_grid(std::size_t n) {
  std::vector<double> t(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) t[i] = static_cast<double>(i) / static_cast<double>(n - 1);
  return t;
}

MarginalResult gp_log_marginal(std::span<const int> tokens, std::span<const double> raw, double sigma,
                               std::span<const double> t, std::span<const double> y, bool with_grad) {
  check_data(t, y);
  MarginalResult out;
  KernelMatrix km;
  const Eigen::MatrixXd cov = noisy_cov(tokens, raw, sigma, t, with_grad ? &km : nullptr);
  const auto llt = robust_cholesky(cov);
  if (!llt) {
    out.value = kNegInf;
    out.d_raw.assign(raw.size(), 0.0);
    return out;
  }
  const auto n = static_cast<double>(y.size());
  const Eigen::VectorXd yv = as_vector(y);
  const Eigen::VectorXd alpha = llt->solve(yv);
  const double log_det = 2.0 * llt->matrixLLT().diagonal().array().log().sum();
  out.value = -0.5 * yv.dot(alpha) - 0.5 * log_det - 0.5 * n * std::log(2.0 * std::numbers::pi);
  if (!std::isfinite(out.value)) out.value = kNegInf;
  if (!with_grad || !std::isfinite(out.value)) {
    out.d_raw.assign(raw.size(), 0.0);
    return out;
  }
  // dL/dA = (alpha alpha^T - A^-1) / 2
  const Eigen::MatrixXd inv = llt->solve(Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
  const Eigen::MatrixXd w = 0.5 * (alpha * alpha.transpose() - inv);
  out.d_sigma = sigma * (alpha.squaredNorm() - inv.trace());
  out.d_raw.resize(raw.size());
  for (std::size_t j = 0; j < raw.size(); ++j) out.d_raw[j] = w.cwiseProduct(km.d_raw[j]).sum();
  return out;
}

Prediction gp_predict(std::span<const int> tokens, std::span<const double> raw, double sigma,
                      std::span<const double> t, std::span<const double> y, std::span<const double> t_query,
                      Rng* rng) {
  check_data(t, y);
  const Eigen::MatrixXd cov = noisy_cov(tokens, raw, sigma, t, nullptr);
  const auto llt = robust_cholesky(cov);
  if (!llt) throw NumericalError("GP prediction: covariance is not positive definite");
  const Eigen::MatrixXd k_qo = kernel_matrix(tokens, raw, t_query, t, false).k;
  const Eigen::MatrixXd k_qq = kernel_matrix(tokens, raw, t_query, t_query, false).k;
  const Eigen::VectorXd alpha = llt->solve(as_vector(y));
  const Eigen::VectorXd mean = k_qo * alpha;
  const Eigen::MatrixXd v = llt->matrixL().solve(k_qo.transpose());
  Eigen::MatrixXd post = k_qq - v.transpose() * v;
  post.diagonal().array() += sigma * sigma;
  post = 0.5 * (post + post.transpose());

  Prediction out;
  out.mean.assign(mean.data(), mean.data() + mean.size());
  out.var.resize(t_query.size());
  for (std::size_t i = 0; i < t_query.size(); ++i) out.var[i] = std::max(post(i, i), 0.0);
  if (rng) {
    const auto pl = robust_cholesky(post);
    if (!pl) throw NumericalError("GP prediction: predictive covariance is not positive definite");
    Eigen::VectorXd eps(t_query.size());
    for (auto& e : eps) e = standard_normal(*rng);
    const Eigen::VectorXd s = mean + pl->matrixL() * eps;
    out.sample.assign(s.data(), s.data() + s.size());
  }
  return out;
}

std::vector<double> gp_sample(std::span<const int> tokens, std::span<const double> raw, double sigma,
                              std::span<const double> t, Rng& rng) {
  const auto llt = robust_cholesky(noisy_cov(tokens, raw, sigma, t, nullptr));
  if (!llt) throw NumericalError("GP sample: covariance is not positive definite");
  Eigen::VectorXd eps(t.size());
  for (auto& e : eps) e = standard_normal(rng);
  const Eigen::VectorXd y = llt->matrixL() * eps;
  return {y.data(), y.data() + y.size()};
}


Var gp_log_marginal_var(Var raw, Var raw_sigma, std::vector<int> tokens, std::span<const double> t,
                    std::span<const double> y) {
  const double sigma = ad::softplus(raw_sigma.item());
  const MarginalResult r = gp::gp_log_marginal(tokens, raw.value().values(), sigma, t, y, false);
  std::vector<double> tv(t.begin(), t.end()), yv(y.begin(), y.end());
  Var raw_keep = raw, sig_keep = raw_sigma;
  auto backward = [raw_keep, sig_keep, tokens = std::move(tokens), tv = std::move(tv), yv = std::move(yv)](
                      const Tensor& g, std::span<Tensor* const> gin) {
    const double gs = g.item();
    if (gs == 0.0) return;
    const double s_raw = sig_keep.item();
    const MarginalResult r = gp::gp_log_marginal(tokens, raw_keep.value().values(), ad::softplus(s_raw), tv, yv, true);
    if (!std::isfinite(r.value)) return;
    if (gin[0])
      for (std::size_t j = 0; j < r.d_raw.size(); ++j) (*gin[0])[j] += gs * r.d_raw[j];
    if (gin[1]) (*gin[1])[0] += gs * r.d_sigma * ad::sigmoid(s_raw);
  };
  return raw.tape()->record("gp_log_marginal", {raw, raw_sigma}, Tensor::scalar(r.value), std::move(backward), true);
}

}  // namespace hmws::gp
