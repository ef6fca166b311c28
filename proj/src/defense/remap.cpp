#include "demark/defense/remap.hpp"

#include <algorithm>
#include <cmath>

#include "demark/core/error.hpp"

namespace demark::defense {

void validate(const RemapConfig& config) {
  if (!(config.mu_min >= 0.0) || !(config.mu_min <= config.mu_max)) {
    throw Error(ErrorKind::OutOfRange, "remap needs 0 <= mu_min <= mu_max");
  }
  if (!(config.sigma > 0.0)) throw Error(ErrorKind::OutOfRange, "remap sigma must be > 0");
}

namespace {

struct RowStats {
  double mean;
  double sd;
  double scale;
  double shift;  // value subtracted after scaling
};

RowStats row_stats(const double* raw, std::size_t n, const RemapConfig& config) {
  if (n < 2) throw Error(ErrorKind::DegenerateInput, "remap needs at least 2 values");
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += raw[i];
  const double mu = sum / static_cast<double>(n);
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) sq += (raw[i] - mu) * (raw[i] - mu);
  const double sd = std::sqrt(sq / static_cast<double>(n));
  if (!std::isfinite(mu) || !std::isfinite(sd)) throw Error(ErrorKind::NonFinite, "remap input is not finite");
  const double s = sd < kConstantStd ? 1.0 : std::min(sd, config.sigma) / sd;
  const double m = config.mean_mode == MeanMode::PostScaling ? s * mu : mu;
  const double shift = std::max(m - config.mu_max, 0.0) + std::min(m - config.mu_min, 0.0);
  return {mu, sd, s, shift};
}

}  // namespace

std::vector<double> remap_unclamped(std::span<const double> raw, const RemapConfig& config) {
  validate(config);
  const auto st = row_stats(raw.data(), raw.size(), config);
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = st.scale * raw[i] - st.shift;
  return out;
}

IpdSequence remap(std::span<const double> raw, const RemapConfig& config) {
  auto out = remap_unclamped(raw, config);
  for (double& v : out) v = std::max(v, 0.0);
  return out;
}

nn::Matrix remap_batch(const nn::Matrix& raw, const RemapConfig& config, RemapCache* cache) {
  validate(config);
  const auto rows = static_cast<std::size_t>(raw.rows());
  const auto n = static_cast<std::size_t>(raw.cols());
  nn::Matrix pre(raw.rows(), raw.cols());
  if (cache) {
    cache->raw = raw;
    cache->scale.assign(rows, 1.0);
    cache->mean.assign(rows, 0.0);
    cache->sd.assign(rows, 0.0);
    cache->shifted.assign(rows, false);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const auto st = row_stats(raw.row(static_cast<Eigen::Index>(r)).data(), n, config);
    pre.row(static_cast<Eigen::Index>(r)) = st.scale * raw.row(static_cast<Eigen::Index>(r)).array() - st.shift;
    if (cache) {
      cache->scale[r] = st.scale;
      cache->mean[r] = st.mean;
      cache->sd[r] = st.sd;
      cache->shifted[r] = st.shift != 0.0;
    }
  }
  if (cache) cache->pre_clamp = pre;
  return pre.cwiseMax(0.0);
}

nn::Matrix remap_backward(const RemapCache& cache, const RemapConfig& config, const nn::Matrix& upstream) {
  if (upstream.rows() != cache.raw.rows() || upstream.cols() != cache.raw.cols()) {
    throw Error(ErrorKind::Dimension, "remap upstream gradient shape mismatch");
  }
  const auto n = static_cast<double>(cache.raw.cols());
  nn::Matrix grad(upstream.rows(), upstream.cols());
  for (Eigen::Index r = 0; r < upstream.rows(); ++r) {
    const auto ri = static_cast<std::size_t>(r);
    const double s = cache.scale[ri];
    const double mu = cache.mean[ri];
    const double sd = cache.sd[ri];
    // Zero clamp passes gradient only where it did not bind.
    nn::RowVector g = upstream.row(r);
    for (Eigen::Index c = 0; c < g.size(); ++c) {
      if (!(cache.pre_clamp(r, c) > 0.0)) g(c) = 0.0;
    }
    const auto x = cache.raw.row(r);
    // ds/draw_j = -s * (x_j - mu) / (n * sd^2) while the std cap is active.
    const bool capped = sd >= kConstantStd && sd > config.sigma;
    const double g_mean = g.mean();
    double coupling = 0.0;  // sum_i g_i * d(pre_i)/ds
    nn::RowVector out(g.size());
    if (!cache.shifted[ri]) {
      // pre_i = s * x_i
      out = s * g;
      coupling = g.dot(x);
    } else if (config.mean_mode == MeanMode::PostScaling) {
      // pre_i = s * (x_i - mu) + bound
      out = s * (g.array() - g_mean).matrix();
      coupling = g.dot((x.array() - mu).matrix());
    } else {
      // pre_i = s * x_i - mu + bound
      out = s * g;
      out.array() -= g_mean;
      coupling = g.dot(x);
    }
    if (capped) {
      const double k = -s * coupling / (n * sd * sd);
      out += k * (x.array() - mu).matrix();
    }
    grad.row(r) = out;
  }
  return grad;
}

}  // namespace demark::defense
