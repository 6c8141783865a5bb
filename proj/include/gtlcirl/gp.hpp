#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "causal.hpp"
#include "errors.hpp"
#include "random.hpp"

namespace gtlcirl {

/// exp(-|x - y|^2 / (2 l^2))
inline double rbf_kernel(std::span<const double> x, std::span<const double> y, double l)
{
  if (x.size() != y.size())
    throw GtlError("rbf_kernel: dimension mismatch " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  if (!(l > 0.0))
    throw GtlError("rbf_kernel: length scale must be positive");
  double d2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    d2 += (x[i] - y[i]) * (x[i] - y[i]);
  return std::exp(-d2 / (2.0 * l * l));
}

struct Posterior
{
  double mean = 0.0;
  double variance = 0.0;
};

/// Zero-mean GP regression with a fixed RBF kernel. Inputs are mapped to the
/// unit cube through `lower`/`upper` when those are set.
class GpModel
{
public:
  GpModel() = default;
  GpModel(double length_scale, double noise_variance, std::vector<double> lower = {}, std::vector<double> upper = {})
      : length_scale_(length_scale), noise_(noise_variance), lower_(std::move(lower)), upper_(std::move(upper))
  {
    if (!(length_scale_ > 0.0))
      throw ConfigError("gp length scale must be positive");
    if (!(noise_ >= 0.0))
      throw ConfigError("gp noise variance must be non-negative");
    if (lower_.size() != upper_.size())
      throw ConfigError("gp bounds differ in dimension");
  }

  static GpModel for_template(const CauseTemplate& t, double length_scale = 0.2, double noise_variance = 1e-4)
  {
    return GpModel(length_scale, noise_variance, t.lower_corner(), t.upper_corner());
  }

  double length_scale() const noexcept { return length_scale_; }
  double noise_variance() const noexcept { return noise_; }
  double signal_variance() const noexcept { return 1.0; }
  std::size_t size() const noexcept { return y_.size(); }
  const std::vector<std::vector<double>>& inputs() const noexcept { return raw_; }
  const std::vector<double>& targets() const noexcept { return y_; }
  /// Diagonal jitter the last factorization needed on top of the noise.
  double jitter() const noexcept { return jitter_; }

  void add(std::span<const double> theta, double j)
  {
    if (!std::isfinite(j))
      throw GtlError("gp: objective value must be finite");
    if (!lower_.empty() && theta.size() != lower_.size())
      throw GtlError("gp: observation has dimension " + std::to_string(theta.size()) + ", expected " +
                     std::to_string(lower_.size()));
    if (!raw_.empty() && theta.size() != raw_.front().size())
      throw GtlError("gp: observation dimension changed");
    raw_.emplace_back(theta.begin(), theta.end());
    x_.push_back(normalize(theta));
    y_.push_back(j);
    refit();
  }

  /// Unit-cube image of a raw input.
  std::vector<double> normalize(std::span<const double> theta) const
  {
    std::vector<double> out(theta.begin(), theta.end());
    for (std::size_t i = 0; i < lower_.size() && i < out.size(); ++i) {
      const double span = upper_[i] - lower_[i];
      out[i] = span > 0.0 ? (out[i] - lower_[i]) / span : 0.0;
    }
    return out;
  }

  /// Kernel Gram matrix of the stored (normalized) inputs, without noise.
  Eigen::MatrixXd gram() const
  {
    const auto n = static_cast<Eigen::Index>(x_.size());
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j <= i; ++j)
        k(i, j) = k(j, i) = rbf_kernel(x_[static_cast<std::size_t>(i)], x_[static_cast<std::size_t>(j)], length_scale_);
    return k;
  }

  Posterior posterior(std::span<const double> query) const
  {
    const auto out = posterior_batch(std::vector<std::vector<double>>{{query.begin(), query.end()}});
    return out.front();
  }

  /// Posterior at many raw inputs; one triangular solve for the whole batch.
  std::vector<Posterior> posterior_batch(const std::vector<std::vector<double>>& queries) const
  {
    std::vector<Posterior> out(queries.size(), Posterior{0.0, signal_variance()});
    if (y_.empty())
      return out;
    const auto n = static_cast<Eigen::Index>(x_.size());
    const auto m = static_cast<Eigen::Index>(queries.size());
    Eigen::MatrixXd ks(n, m);
    for (Eigen::Index c = 0; c < m; ++c) {
      const auto q = normalize(queries[static_cast<std::size_t>(c)]);
      for (Eigen::Index i = 0; i < n; ++i)
        ks(i, c) = rbf_kernel(x_[static_cast<std::size_t>(i)], q, length_scale_);
    }
    const Eigen::VectorXd mean = ks.transpose() * alpha_;
    llt_.matrixL().solveInPlace(ks);
    const Eigen::VectorXd reduction = ks.colwise().squaredNorm().transpose();
    for (Eigen::Index c = 0; c < m; ++c)
      out[static_cast<std::size_t>(c)] = {mean(c), std::max(0.0, signal_variance() - reduction(c))};
    return out;
  }

private:
  void refit()
  {
    Eigen::MatrixXd k = gram();
    k.diagonal().array() += noise_;
    jitter_ = 0.0;
    llt_.compute(k);
    for (double jitter = 1e-10; llt_.info() != Eigen::Success; jitter *= 10.0) {
      if (jitter > 1e-4 * 1.0000001)
        throw GtlError("gp: Gram matrix is not positive definite even with jitter 1e-4");
      Eigen::MatrixXd kj = k;
      kj.diagonal().array() += jitter;
      jitter_ = jitter;
      llt_.compute(kj);
    }
    alpha_ = llt_.solve(Eigen::Map<const Eigen::VectorXd>(y_.data(), static_cast<Eigen::Index>(y_.size())));
  }

  double length_scale_ = 0.2;
  double noise_ = 1e-4;
  std::vector<double> lower_, upper_;
  std::vector<std::vector<double>> raw_, x_;
  std::vector<double> y_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
  double jitter_ = 0.0;
};

inline Posterior gp_posterior(const GpModel& model, std::span<const double> query) { return model.posterior(query); }

/// Appends (theta, j) and refactors.
inline GpModel& update_model(GpModel& model, std::span<const double> theta, double j)
{
  model.add(theta, j);
  return model;
}

/// beta_k = c * log(k + 1)
struct UcbSchedule
{
  double c = 2.0;

  double beta(int k) const
  {
    if (!(c > 0.0))
      throw ConfigError("ucb constant must be positive");
    return c * std::log(static_cast<double>(k) + 1.0);
  }
};

/// Grid for up to three slots (integer steps on window slots, 101/41/21
/// points per threshold slot for 1/2/3 slots), 512 uniform samples otherwise.
inline std::vector<std::vector<double>> candidate_set(const CauseTemplate& t, Rng& rng, std::size_t samples = 512)
{
  const auto& slots = t.slots();
  std::vector<std::vector<double>> out;
  if (slots.empty())
    return {std::vector<double>{}};
  if (slots.size() <= 3) {
    static constexpr int kPoints[] = {101, 41, 21};
    std::vector<std::vector<double>> axes;
    for (const auto& s : slots) {
      std::vector<double> axis;
      if (s.is_window()) {
        for (double v = std::ceil(s.lower); v <= s.upper; v += 1.0)
          axis.push_back(v);
        if (axis.empty())
          axis.push_back(s.lower);
      } else {
        const int n = kPoints[slots.size() - 1];
        for (int i = 0; i < n; ++i)
          axis.push_back(s.lower + (s.upper - s.lower) * i / (n - 1));
      }
      axes.push_back(std::move(axis));
    }
    std::vector<std::size_t> idx(axes.size(), 0);
    while (true) {
      std::vector<double> p;
      for (std::size_t d = 0; d < axes.size(); ++d)
        p.push_back(axes[d][idx[d]]);
      out.push_back(std::move(p));
      std::size_t d = axes.size();
      while (d > 0) {
        --d;
        if (++idx[d] < axes[d].size())
          break;
        idx[d] = 0;
        if (d == 0)
          return out;
      }
    }
  }
  for (std::size_t i = 0; i < samples; ++i) {
    std::vector<double> p;
    for (const auto& s : slots)
      p.push_back(rng.uniform(s.lower, s.upper));
    out.push_back(std::move(p));
  }
  return out;
}

struct Proposal
{
  std::vector<double> theta;
  double ucb = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
};

/// argmax of mu + sqrt(beta) * sigma over `candidates`; first index wins ties.
inline Proposal propose_from(const GpModel& model, const std::vector<std::vector<double>>& candidates, double beta)
{
  if (candidates.empty())
    throw GtlError("gp: empty candidate set");
  const auto post = model.posterior_batch(candidates);
  const double scale = std::sqrt(std::max(0.0, beta));
  std::size_t best = 0;
  double best_ucb = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < post.size(); ++i) {
    const double u = post[i].mean + scale * std::sqrt(post[i].variance);
    if (u > best_ucb) {
      best_ucb = u;
      best = i;
    }
  }
  return {candidates[best], best_ucb, post[best].mean, std::sqrt(post[best].variance)};
}

inline Proposal propose_theta(const GpModel& model, const CauseTemplate& tmpl, const UcbSchedule& schedule, int k,
                              Rng& rng)
{
  return propose_from(model, candidate_set(tmpl, rng), schedule.beta(k));
}

} // namespace gtlcirl
