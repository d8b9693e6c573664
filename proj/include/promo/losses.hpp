#ifndef PROMO_LOSSES_HPP_
#define PROMO_LOSSES_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace promo {

enum class OptimizerKind { kSgd, kMomentum, kAdam };

inline std::string optimizer_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::kSgd: return "sgd";
    case OptimizerKind::kMomentum: return "momentum";
    case OptimizerKind::kAdam: return "adam";
  }
  return "adam";
}

inline OptimizerKind optimizer_from_name(const std::string& s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "momentum") return OptimizerKind::kMomentum;
  if (s == "adam") return OptimizerKind::kAdam;
  throw std::invalid_argument("unknown optimizer: " + s);
}

struct TrainConfig {
  double learning_rate = 0.01;
  int epochs_bias = 20;    // bias-net learning phase
  int epochs_uplift = 20;  // uplift-net learning phase (or the MLP's single phase)
  int batch_size = 256;
  double alpha_upper = 1.0;   // initial smoothness weight
  double alpha_lower = 0.01;  // floor after decay
  double alpha_decay = 1e-4;  // decay per global step
  std::uint64_t seed = 1;
  OptimizerKind optimizer = OptimizerKind::kAdam;

  void validate() const {
    if (!(alpha_upper >= alpha_lower && alpha_lower >= 0.0))
      throw std::invalid_argument("TrainConfig: need alpha_upper >= alpha_lower >= 0");
    if (alpha_decay < 0.0) throw std::invalid_argument("TrainConfig: alpha_decay must be >= 0");
    if (learning_rate <= 0.0) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (epochs_bias < 0 || epochs_uplift < 0)
      throw std::invalid_argument("TrainConfig: epochs must be >= 0");
  }
};

// Smoothness weight at a given global step: max(alpha_lower, alpha_upper - decay*step).
inline double alpha_schedule(const TrainConfig& cfg, std::int64_t global_step) {
  if (global_step < 0) throw std::invalid_argument("alpha_schedule: step must be >= 0");
  return std::max(cfg.alpha_lower,
                  cfg.alpha_upper - cfg.alpha_decay * static_cast<double>(global_step));
}

// Single-branch logistic; monotone in z (exp(-z) is antitone, 1/(1+x) antitone).
// Saturates gracefully to {0,1} at extreme logits.
inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

constexpr double kProbClampLo = 1e-7;
constexpr double kProbClampHi = 1.0 - 1e-7;

inline double clamp_prob(double p) { return std::clamp(p, kProbClampLo, kProbClampHi); }

// Weighted binary cross-entropy on the clamped probability.
inline double log_loss(double p, int y, double weight = 1.0) {
  const double q = clamp_prob(p);
  return weight * (y ? -std::log(q) : -std::log1p(-q));
}

// Normalized squared-difference penalty on adjacent uplift weights:
//   (1/m) * sum_j (w_{j+1}-w_j)^2 / (w_{j+1} w_j + eps),  m = len(w).
// eps guards exactly-dead ReLU units.
constexpr double kSmoothnessEps = 1e-2;

inline double smoothness_loss(std::span<const double> w) {
  const std::size_t m = w.size();
  if (m < 2) return 0.0;
  double acc = 0.0;
  for (std::size_t j = 0; j + 1 < m; ++j) {
    const double diff = w[j + 1] - w[j];
    acc += diff * diff / (w[j + 1] * w[j] + kSmoothnessEps);
  }
  return acc / static_cast<double>(m);
}

// d(smoothness)/dw accumulated into grad (same length as w), scaled by `scale`.
inline void smoothness_loss_grad(std::span<const double> w, double scale,
                                 std::span<double> grad) {
  const std::size_t m = w.size();
  if (m < 2) return;
  const double inv_m = scale / static_cast<double>(m);
  for (std::size_t j = 0; j + 1 < m; ++j) {
    const double a = w[j], b = w[j + 1];
    const double den = a * b + kSmoothnessEps;
    const double diff = b - a;
    // term = diff^2 / den;  d/da = (-2 diff * den - diff^2 * b) / den^2
    grad[j] += inv_m * (-2.0 * diff * den - diff * diff * b) / (den * den);
    grad[j + 1] += inv_m * (2.0 * diff * den - diff * diff * a) / (den * den);
  }
}

}  // namespace promo

#endif  // PROMO_LOSSES_HPP_
