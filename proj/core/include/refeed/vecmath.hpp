#pragma once

#include <cstddef>
#include <span>
#include <vector>

// Vector math for dense retrieval and distribution distillation.
//
// Embeddings are float32; every reduction (dot products, softmax sums,
// KL terms, gradient accumulation) runs in float64. Dot products
// accumulate sequentially in index order so that repeated evaluation of
// the same pair is bit-identical everywhere in the engine.

namespace refeed {

using Vector = std::vector<float>;
using ScoreVector = std::vector<double>;

// Sequential float64 dot product. Throws std::invalid_argument on
// length mismatch (message names both lengths).
double dot(std::span<const float> a, std::span<const float> b);

// Maps scores affinely onto [0, 1]: (s - min) / (max - min).
// All-equal input maps to 0.5 everywhere. Throws on empty input.
ScoreVector min_max_normalize(std::span<const double> scores);

// Probability vector with validated invariants: entries in [0, 1],
// sum within 1e-9 of 1.
class ScoreDistribution {
public:
  static ScoreDistribution from_probs(std::vector<double> probs);

  const std::vector<double>& probs() const { return probs_; }
  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }

private:
  explicit ScoreDistribution(std::vector<double> probs) : probs_(std::move(probs)) {}
  std::vector<double> probs_;

  friend ScoreDistribution softmax(std::span<const double>, double);
};

// softmax(s/T) with the max subtracted before exponentiation.
// Throws on empty input or temperature <= 0.
ScoreDistribution softmax(std::span<const double> scores, double temperature);

// KL(p || q) = sum p_i ln(p_i / q_i), natural log, 0 ln 0 = 0.
// +inf when q_i == 0 under p_i > 0. Throws on length mismatch.
double kl_divergence(const ScoreDistribution& p, const ScoreDistribution& q);

// Loss L(Q) = KL(target || softmax(g(P·Q)/T)) where g is min-max
// normalization when `normalize` is set, identity otherwise.
double kl_feedback_loss(const ScoreDistribution& target,
                        std::span<const double> query,
                        const std::vector<std::span<const float>>& passages,
                        double temperature, bool normalize);

// Analytic gradient of kl_feedback_loss with respect to the query.
//
// Without normalization: dL/ds_j = (q_j - t_j) / T. With min-max the
// chain rule adds the coupling through the running min and max, whose
// argmin/argmax (first occurrence) are treated as locally constant:
//   dL/ds_j = (d_j + (delta_{j,argmin} - delta_{j,argmax}) * sum_k d_k g_k) / (T * range)
// with d = q - t. A zero score range has gradient zero (g is constant
// there). grad_Q = sum_j dL/ds_j * P_j.
std::vector<double> kl_gradient(const ScoreDistribution& target,
                                std::span<const double> query,
                                const std::vector<std::span<const float>>& passages,
                                double temperature, bool normalize);

}  // namespace refeed
