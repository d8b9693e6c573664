#ifndef PROMO_TRAIN_HPP_
#define PROMO_TRAIN_HPP_

// Mini-batch training with manually derived gradients for both models.
// DIPN trains in two phases: the bias net learning phase (BLP) fits the
// bias side on lowest-level samples only, then the uplift net learning
// phase (ULP) fits the uplift head on all samples with the bias side
// frozen and a decaying smoothness weight.
//
// dipn_loss_and_grad / mlp_loss_and_grad return the full gradient of the
// batch loss with respect to every parameter; the phase masks decide what
// the optimizer is allowed to touch.  Sample weights multiply the log loss
// only; the smoothness term is a prior, not data likelihood.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "promo/dipn.hpp"
#include "promo/losses.hpp"
#include "promo/mlp.hpp"
#include "promo/rng.hpp"
#include "promo/synthdata.hpp"

namespace promo {

struct EpochLogEntry {
  std::string phase;  // "blp" | "ulp" | "mlp"
  int epoch = 0;
  double alpha = 0.0;
  double train_loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
};
using TrainLog = std::vector<EpochLogEntry>;

namespace detail {

// d(logloss)/d(logit) for the clamped probability; zero outside the clamp
// band so the analytic gradient matches finite differences everywhere.
inline double dloss_dlogit(double p, int y, double weight) {
  if (p <= kProbClampLo || p >= kProbClampHi) return 0.0;
  return weight * (p - static_cast<double>(y));
}

}  // namespace detail

// Batch loss (mean over samples of weighted log loss + alpha * smoothness of
// the sample's uplift weights).  grad, when non-null, receives d(loss)/d(params).
inline double dipn_loss_and_grad(const DipnModel& model,
                                 std::span<const TrainingSample> batch, double alpha,
                                 std::vector<double>* grad) {
  if (batch.empty()) throw std::invalid_argument("dipn loss: empty batch");
  if (grad) grad->assign(model.num_params(), 0.0);
  const int e_dim = model.embed_dim();
  const std::size_t rows = model.num_uplift_weights();
  const auto params = model.parameters();
  double loss_acc = 0.0;
  std::vector<double> sgrad(rows);

  for (const auto& sample : batch) {
    for (int f = 0; f < kNumFeatureFields; ++f) model.check_vocab(f, sample.features[f]);
    const std::size_t level = model.grid().index_floor(sample.incentive);
    const DipnForward fw = model.forward(sample.features);

    double logit = fw.bias_logit;
    for (std::size_t r = 0; r < level; ++r) logit += fw.w[r];
    const double p = sigmoid(logit);
    loss_acc += log_loss(p, sample.label, sample.weight);
    loss_acc += alpha * smoothness_loss(fw.w);
    if (!grad) continue;

    const double dz = detail::dloss_dlogit(p, sample.label, sample.weight);

    // dL/dw_r: the logit path for r < level, the smoothness prior, and the
    // recursion (w_r feeds node r+1).
    sgrad.assign(rows, 0.0);
    smoothness_loss_grad(fw.w, alpha, sgrad);
    std::vector<double> dh(e_dim, 0.0);
    double dp = 0.0;
    double carry = 0.0;  // dL/dw_r contribution arriving from node r+1
    for (std::size_t ri = rows; ri-- > 0;) {
      const double g_w = (ri < level ? dz : 0.0) + sgrad[ri] + carry;
      const double dpre = fw.pre[ri] > 0.0 ? g_w : 0.0;
      const double* a = params.data() + model.uplift_w_offset(ri);
      const double w_prev = ri == 0 ? 0.0 : fw.w[ri - 1];
      double* ga = grad->data() + model.uplift_w_offset(ri);
      for (int i = 0; i < e_dim; ++i) {
        ga[i] += dpre * fw.h[i];
        dh[i] += dpre * a[i];
      }
      ga[e_dim] += dpre * fw.p_bias;
      dp += dpre * a[e_dim];
      ga[e_dim + 1] += dpre * w_prev;
      (*grad)[model.uplift_c_offset(ri)] += dpre;
      carry = dpre * a[e_dim + 1];
    }

    // bias side: direct logit path plus the p_bias input to the uplift net
    const double dbias_logit = dz + dp * fw.p_bias * (1.0 - fw.p_bias);
    (*grad)[model.global_bias_offset()] += dbias_logit;
    const double ds = dbias_logit * (fw.s >= 0.0 ? 1.0 : kLeakySlope);
    (*grad)[model.bias_c_offset()] += ds;
    for (int i = 0; i < e_dim; ++i) {
      (*grad)[model.bias_u_offset() + i] += ds * fw.h[i];
      dh[i] += ds * params[model.bias_u_offset() + i];
    }
    for (int f = 0; f < kNumFeatureFields; ++f) {
      double* ge = grad->data() + model.embed_offset(f, sample.features[f]);
      for (int i = 0; i < e_dim; ++i) ge[i] += dh[i];
    }
  }

  const double inv_m = 1.0 / static_cast<double>(batch.size());
  if (grad)
    for (auto& g : *grad) g *= inv_m;
  return loss_acc * inv_m;
}

// Mean of weighted log loss + alpha * per-sample smoothness over a batch.
inline double dipn_total_loss(const DipnModel& model, std::span<const TrainingSample> batch,
                              double alpha) {
  return dipn_loss_and_grad(model, batch, alpha, nullptr);
}

inline double mlp_loss_and_grad(const MlpModel& model, std::span<const TrainingSample> batch,
                                std::vector<double>* grad) {
  if (batch.empty()) throw std::invalid_argument("mlp loss: empty batch");
  if (grad) grad->assign(model.num_params(), 0.0);
  const int e_dim = model.embed_dim();
  const auto params = model.parameters();
  double loss_acc = 0.0;

  for (const auto& sample : batch) {
    const std::size_t level = model.grid().index_floor(sample.incentive);
    const MlpForward fw = model.forward(sample.features, level);
    const double p = sigmoid(fw.logit);
    loss_acc += log_loss(p, sample.label, sample.weight);
    if (!grad) continue;

    std::vector<double> delta{detail::dloss_dlogit(p, sample.label, sample.weight)};
    for (std::size_t l = model.num_layers(); l-- > 0;) {
      const int nin = model.layer_in(l), nout = model.layer_out(l);
      const std::vector<double>& in = l == 0 ? fw.input : fw.act[l - 1];
      const double* w = params.data() + model.weight_offset(l);
      double* gw = grad->data() + model.weight_offset(l);
      double* gb = grad->data() + model.bias_offset(l);
      std::vector<double> din(nin, 0.0);
      for (int o = 0; o < nout; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        const double* wrow = w + static_cast<std::size_t>(o) * nin;
        double* gwrow = gw + static_cast<std::size_t>(o) * nin;
        for (int i = 0; i < nin; ++i) {
          gwrow[i] += d * in[i];
          din[i] += d * wrow[i];
        }
        gb[o] += d;
      }
      if (l == 0) {
        for (int f = 0; f < kNumFeatureFields; ++f) {
          double* ge = grad->data() + model.embed_offset(f, sample.features[f]);
          for (int i = 0; i < e_dim; ++i) ge[i] += din[i];
        }
      } else {
        delta.assign(din.begin(), din.end());
        for (int i = 0; i < model.layer_in(l); ++i)
          if (fw.pre[l - 1][i] <= 0.0) delta[i] = 0.0;  // hidden ReLU
      }
    }
  }

  const double inv_m = 1.0 / static_cast<double>(batch.size());
  if (grad)
    for (auto& g : *grad) g *= inv_m;
  return loss_acc * inv_m;
}

inline double mlp_total_loss(const MlpModel& model, std::span<const TrainingSample> batch) {
  return mlp_loss_and_grad(model, batch, nullptr);
}

// First-order optimizer over a flat parameter vector; phases restrict it to
// a [begin, end) region.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, std::size_t n, double learning_rate)
      : kind_(kind), lr_(learning_rate) {
    if (kind_ != OptimizerKind::kSgd) {
      m_.assign(n, 0.0);
      if (kind_ == OptimizerKind::kAdam) v_.assign(n, 0.0);
    }
  }

  void step(std::span<double> params, std::span<const double> grad, std::size_t begin,
            std::size_t end) {
    ++t_;
    switch (kind_) {
      case OptimizerKind::kSgd:
        for (std::size_t i = begin; i < end; ++i) params[i] -= lr_ * grad[i];
        break;
      case OptimizerKind::kMomentum:
        for (std::size_t i = begin; i < end; ++i) {
          m_[i] = 0.9 * m_[i] + grad[i];
          params[i] -= lr_ * m_[i];
        }
        break;
      case OptimizerKind::kAdam: {
        const double c1 = 1.0 - std::pow(0.9, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(0.999, static_cast<double>(t_));
        for (std::size_t i = begin; i < end; ++i) {
          m_[i] = 0.9 * m_[i] + 0.1 * grad[i];
          v_[i] = 0.999 * v_[i] + 0.001 * grad[i] * grad[i];
          params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + 1e-8);
        }
        break;
      }
    }
  }

 private:
  OptimizerKind kind_;
  double lr_;
  std::int64_t t_ = 0;
  std::vector<double> m_, v_;
};

namespace detail {

inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  rng.shuffle(idx);
  return idx;
}

}  // namespace detail

// Bias net learning phase.  Only lowest-grid-level samples participate and
// only bias-side parameters move; the uplift head is untouched.
inline TrainLog train_bias_phase(DipnModel& model, std::span<const TrainingSample> samples,
                                 const TrainConfig& cfg,
                                 std::span<const TrainingSample> validation = {}) {
  cfg.validate();
  std::vector<TrainingSample> lowest;
  for (const auto& s : samples)
    if (model.grid().index_floor(s.incentive) == 0) lowest.push_back(s);
  if (lowest.empty())
    throw incompat_error(
        "bias phase: no samples at the grid's lowest level (" +
        std::to_string(model.grid().min_level()) +
        "); coarsen the grid so its first cell contains data");

  Rng rng(derive_seed(cfg.seed, 0x626c70ULL));
  Optimizer opt(cfg.optimizer, model.num_params(), cfg.learning_rate);
  TrainLog log;
  std::vector<double> grad;
  std::vector<TrainingSample> batch;
  for (int epoch = 0; epoch < cfg.epochs_bias; ++epoch) {
    const auto idx = detail::shuffled_indices(lowest.size(), rng);
    double loss_sum = 0.0;
    for (std::size_t pos = 0; pos < idx.size(); pos += cfg.batch_size) {
      batch.clear();
      for (std::size_t b = pos; b < std::min(idx.size(), pos + cfg.batch_size); ++b)
        batch.push_back(lowest[idx[b]]);
      const double loss = dipn_loss_and_grad(model, batch, 0.0, &grad);
      loss_sum += loss * static_cast<double>(batch.size());
      opt.step(model.parameters(), grad, 0, model.bias_param_count());
    }
    EpochLogEntry e;
    e.phase = "blp";
    e.epoch = epoch;
    e.alpha = 0.0;
    e.train_loss = loss_sum / static_cast<double>(lowest.size());
    if (!validation.empty()) e.val_loss = dipn_total_loss(model, validation, 0.0);
    log.push_back(e);
  }
  model.train_config = cfg;
  return log;
}

// Uplift net learning phase.  All samples, bias side frozen, smoothness
// weight decaying by global step.
inline TrainLog train_uplift_phase(DipnModel& model, std::span<const TrainingSample> samples,
                                   const TrainConfig& cfg,
                                   std::span<const TrainingSample> validation = {}) {
  cfg.validate();
  if (samples.empty()) throw std::invalid_argument("uplift phase: no samples");
  Rng rng(derive_seed(cfg.seed, 0x756c70ULL));
  Optimizer opt(cfg.optimizer, model.num_params(), cfg.learning_rate);
  TrainLog log;
  std::vector<double> grad;
  std::vector<TrainingSample> batch;
  std::int64_t global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs_uplift; ++epoch) {
    const auto idx = detail::shuffled_indices(samples.size(), rng);
    double loss_sum = 0.0;
    double alpha = alpha_schedule(cfg, global_step);
    for (std::size_t pos = 0; pos < idx.size(); pos += cfg.batch_size) {
      batch.clear();
      for (std::size_t b = pos; b < std::min(idx.size(), pos + cfg.batch_size); ++b)
        batch.push_back(samples[idx[b]]);
      alpha = alpha_schedule(cfg, global_step);
      const double loss = dipn_loss_and_grad(model, batch, alpha, &grad);
      loss_sum += loss * static_cast<double>(batch.size());
      opt.step(model.parameters(), grad, model.bias_param_count(), model.num_params());
      ++global_step;
    }
    EpochLogEntry e;
    e.phase = "ulp";
    e.epoch = epoch;
    e.alpha = alpha;
    e.train_loss = loss_sum / static_cast<double>(samples.size());
    if (!validation.empty()) e.val_loss = dipn_total_loss(model, validation, 0.0);
    log.push_back(e);
  }
  model.train_config = cfg;
  return log;
}

// Single-phase baseline training on weighted log loss.
inline TrainLog train_mlp(MlpModel& model, std::span<const TrainingSample> samples,
                          const TrainConfig& cfg,
                          std::span<const TrainingSample> validation = {}) {
  cfg.validate();
  if (samples.empty()) throw std::invalid_argument("mlp training: no samples");
  Rng rng(derive_seed(cfg.seed, 0x6d6c7074ULL));
  Optimizer opt(cfg.optimizer, model.num_params(), cfg.learning_rate);
  TrainLog log;
  std::vector<double> grad;
  std::vector<TrainingSample> batch;
  for (int epoch = 0; epoch < cfg.epochs_uplift; ++epoch) {
    const auto idx = detail::shuffled_indices(samples.size(), rng);
    double loss_sum = 0.0;
    for (std::size_t pos = 0; pos < idx.size(); pos += cfg.batch_size) {
      batch.clear();
      for (std::size_t b = pos; b < std::min(idx.size(), pos + cfg.batch_size); ++b)
        batch.push_back(samples[idx[b]]);
      const double loss = mlp_loss_and_grad(model, batch, &grad);
      loss_sum += loss * static_cast<double>(batch.size());
      opt.step(model.parameters(), grad, 0, model.num_params());
    }
    EpochLogEntry e;
    e.phase = "mlp";
    e.epoch = epoch;
    e.train_loss = loss_sum / static_cast<double>(samples.size());
    if (!validation.empty()) e.val_loss = mlp_total_loss(model, validation);
    log.push_back(e);
  }
  model.train_config = cfg;
  return log;
}

}  // namespace promo

#endif  // PROMO_TRAIN_HPP_
