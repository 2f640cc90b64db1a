#include "refeed/vecmath.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace refeed {

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("dot: dimension mismatch (" + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + ")");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

ScoreVector min_max_normalize(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("min_max_normalize: empty input");
  const auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  const double lo = *lo_it, hi = *hi_it;
  ScoreVector out(scores.size());
  if (hi == lo) {
    std::fill(out.begin(), out.end(), 0.5);
    return out;
  }
  const double range = hi - lo;
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - lo) / range;
  return out;
}

ScoreDistribution ScoreDistribution::from_probs(std::vector<double> probs) {
  if (probs.empty()) throw std::invalid_argument("ScoreDistribution: empty");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw std::invalid_argument("ScoreDistribution: entry " + std::to_string(p) +
                                  " outside [0, 1]");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("ScoreDistribution: sum " + std::to_string(sum) +
                                " not within 1e-9 of 1");
  }
  return ScoreDistribution(std::move(probs));
}

ScoreDistribution softmax(std::span<const double> scores, double temperature) {
  if (scores.empty()) throw std::invalid_argument("softmax: empty input");
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("softmax: temperature must be positive, got " +
                                std::to_string(temperature));
  }
  const double m = *std::max_element(scores.begin(), scores.end());
  std::vector<double> out(scores.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp((scores[i] - m) / temperature);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return ScoreDistribution(std::move(out));
}

double kl_divergence(const ScoreDistribution& p, const ScoreDistribution& q) {
  if (p.size() != q.size()) {
    throw std::invalid_argument("kl_divergence: length mismatch (" + std::to_string(p.size()) +
                                " vs " + std::to_string(q.size()) + ")");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) acc += p[i] * std::log(p[i] / q[i]);
  }
  return acc;
}

namespace {

// Scores of the (float64) query against each passage row.
ScoreVector query_scores(std::span<const double> query,
                         const std::vector<std::span<const float>>& passages) {
  ScoreVector s(passages.size());
  for (std::size_t j = 0; j < passages.size(); ++j) {
    const auto row = passages[j];
    if (row.size() != query.size()) {
      throw std::invalid_argument("kl gradient: passage " + std::to_string(j) + " has dim " +
                                  std::to_string(row.size()) + ", query has dim " +
                                  std::to_string(query.size()));
    }
    double acc = 0.0;
    for (std::size_t d = 0; d < row.size(); ++d) acc += query[d] * static_cast<double>(row[d]);
    s[j] = acc;
  }
  return s;
}

}  // namespace

double kl_feedback_loss(const ScoreDistribution& target, std::span<const double> query,
                        const std::vector<std::span<const float>>& passages,
                        double temperature, bool normalize) {
  ScoreVector s = query_scores(query, passages);
  const ScoreDistribution q =
      normalize ? softmax(min_max_normalize(s), temperature) : softmax(s, temperature);
  return kl_divergence(target, q);
}

std::vector<double> kl_gradient(const ScoreDistribution& target, std::span<const double> query,
                                const std::vector<std::span<const float>>& passages,
                                double temperature, bool normalize) {
  if (target.size() != passages.size()) {
    throw std::invalid_argument("kl_gradient: target has " + std::to_string(target.size()) +
                                " entries, candidates " + std::to_string(passages.size()));
  }
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("kl_gradient: temperature must be positive");
  }
  const std::size_t k = passages.size();
  ScoreVector s = query_scores(query, passages);
  std::vector<double> grad(query.size(), 0.0);
  std::vector<double> gs(k);  // dL/ds_j

  if (normalize) {
    const std::size_t a = static_cast<std::size_t>(std::min_element(s.begin(), s.end()) - s.begin());
    const std::size_t b = static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin());
    if (s[a] == s[b]) return grad;  // constant g: flat
    const double lo = s[a];
    const double range = s[b] - s[a];
    ScoreVector g(k);
    for (std::size_t j = 0; j < k; ++j) g[j] = (s[j] - lo) / range;
    const ScoreDistribution q = softmax(g, temperature);
    double coupling = 0.0;  // sum_k (q_k - t_k) g_k
    for (std::size_t j = 0; j < k; ++j) coupling += (q[j] - target[j]) * g[j];
    for (std::size_t j = 0; j < k; ++j) gs[j] = q[j] - target[j];
    gs[a] += coupling;
    gs[b] -= coupling;
    const double scale = 1.0 / (temperature * range);
    for (double& v : gs) v *= scale;
  } else {
    const ScoreDistribution q = softmax(s, temperature);
    for (std::size_t j = 0; j < k; ++j) gs[j] = (q[j] - target[j]) / temperature;
  }

  for (std::size_t j = 0; j < k; ++j) {
    const auto row = passages[j];
    const double w = gs[j];
    for (std::size_t d = 0; d < row.size(); ++d) grad[d] += w * static_cast<double>(row[d]);
  }
  return grad;
}

}  // namespace refeed
