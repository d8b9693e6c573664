#ifndef PROMO_DIPN_HPP_
#define PROMO_DIPN_HPP_

// Deep isotonic promotion network.  Two sub-networks over shared categorical
// embeddings: a bias net estimating the response at the minimum incentive,
// and an uplift net producing one nonnegative weight per grid step.  The
// prediction logit at level j is bias_logit + sum of the first j uplift
// weights, so the response curve is nondecreasing by construction.
//
// Wiring per grid step j = 1..D-1:
//   h      = sum_f embed[f][x_f]
//   bias   = leaky_relu(u.h + c_bias);  bias_logit = bias + global_bias
//   p_bias = sigmoid(bias_logit)
//   w_j    = relu(a_j . [h ; p_bias ; w_{j-1}] + c_j),  w_0 = 0
//   f(x, d_l) = sigmoid(bias_logit + sum_{j<=l} w_j)
// Digit 0 of the isotonic embedding always fires on-grid, so its weight is
// absorbed into the bias side.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "promo/errors.hpp"
#include "promo/grid.hpp"
#include "promo/losses.hpp"
#include "promo/rng.hpp"
#include "promo/synthdata.hpp"
#include "promo/textio.hpp"

namespace promo {

constexpr double kLeakySlope = 0.01;

struct DipnForward {
  std::vector<double> h;    // summed embedding, E
  double s = 0;             // u.h + c_bias (pre-activation)
  double bias_out = 0;      // leaky_relu(s)
  double bias_logit = 0;    // bias_out + global_bias
  double p_bias = 0;        // sigmoid(bias_logit)
  std::vector<double> pre;  // D-1 uplift pre-activations
  std::vector<double> w;    // D-1 uplift weights (>= 0)
};

class DipnModel {
 public:
  DipnModel(IncentiveGrid grid, std::array<int, kNumFeatureFields> vocab_sizes,
            int embed_dim, std::uint64_t init_seed)
      : grid_(std::move(grid)), vocab_(vocab_sizes), embed_dim_(embed_dim) {
    if (embed_dim_ < 1) throw std::invalid_argument("DipnModel: embed_dim must be >= 1");
    for (const int v : vocab_)
      if (v < 1) throw std::invalid_argument("DipnModel: vocab sizes must be >= 1");
    layout();
    params_.assign(total_size_, 0.0);
    Rng rng(derive_seed(init_seed, 0x6469706eULL));
    for (int f = 0; f < kNumFeatureFields; ++f)
      for (std::size_t i = 0; i < static_cast<std::size_t>(vocab_[f]) * embed_dim_; ++i)
        params_[embed_off_[f] + i] = rng.uniform(-0.05, 0.05);
    for (int i = 0; i < embed_dim_; ++i) params_[bias_u_off_ + i] = rng.uniform(-0.05, 0.05);
    params_[bias_c_off_] = 0.0;
    params_[global_bias_off_] = 0.0;
    const std::size_t rows = num_uplift_weights();
    for (std::size_t r = 0; r < rows; ++r) {
      for (int i = 0; i < uplift_in_dim(); ++i)
        params_[uplift_w_off_ + r * uplift_in_dim() + i] = rng.uniform(-0.05, 0.05);
      params_[uplift_c_off_ + r] = 0.1;  // start alive; ReLU units cannot revive
    }
  }

  const IncentiveGrid& grid() const { return grid_; }
  int embed_dim() const { return embed_dim_; }
  const std::array<int, kNumFeatureFields>& vocab_sizes() const { return vocab_; }
  std::size_t num_uplift_weights() const { return grid_.size() - 1; }
  int uplift_in_dim() const { return embed_dim_ + 2; }  // [h ; p_bias ; w_prev]

  // --- flat parameter access (training and serialization) ---
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::size_t num_params() const { return params_.size(); }
  // Bias-net parameters (embeddings, bias head, global bias) occupy
  // [0, bias_param_count()); the uplift head occupies the rest.
  std::size_t bias_param_count() const { return uplift_w_off_; }

  std::span<const double> embed_vec(int field, int value) const {
    check_vocab(field, value);
    return {params_.data() + embed_off_[field] +
                static_cast<std::size_t>(value) * embed_dim_,
            static_cast<std::size_t>(embed_dim_)};
  }
  std::size_t embed_offset(int field, int value) const {
    return embed_off_[field] + static_cast<std::size_t>(value) * embed_dim_;
  }
  std::size_t bias_u_offset() const { return bias_u_off_; }
  std::size_t bias_c_offset() const { return bias_c_off_; }
  std::size_t global_bias_offset() const { return global_bias_off_; }
  std::size_t uplift_w_offset(std::size_t row) const {
    return uplift_w_off_ + row * uplift_in_dim();
  }
  std::size_t uplift_c_offset(std::size_t row) const { return uplift_c_off_ + row; }

  double global_bias() const { return params_[global_bias_off_]; }
  void set_global_bias(double b) { params_[global_bias_off_] = b; }

  void check_vocab(int field, int value) const {
    if (value < 0 || value >= vocab_[field])
      throw vocab_error("feature " + std::to_string(field) + " value " +
                        std::to_string(value) + " outside vocabulary of size " +
                        std::to_string(vocab_[field]));
  }

  // --- forward pass ---
  DipnForward forward(const Features& x) const {
    DipnForward f;
    f.h.assign(embed_dim_, 0.0);
    for (int fld = 0; fld < kNumFeatureFields; ++fld) {
      const auto e = embed_vec(fld, x[fld]);
      for (int i = 0; i < embed_dim_; ++i) f.h[i] += e[i];
    }
    f.s = params_[bias_c_off_];
    for (int i = 0; i < embed_dim_; ++i) f.s += params_[bias_u_off_ + i] * f.h[i];
    f.bias_out = f.s >= 0.0 ? f.s : kLeakySlope * f.s;
    f.bias_logit = f.bias_out + params_[global_bias_off_];
    f.p_bias = sigmoid(f.bias_logit);

    const std::size_t rows = num_uplift_weights();
    f.pre.resize(rows);
    f.w.resize(rows);
    double w_prev = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* a = params_.data() + uplift_w_offset(r);
      double z = params_[uplift_c_offset(r)];
      for (int i = 0; i < embed_dim_; ++i) z += a[i] * f.h[i];
      z += a[embed_dim_] * f.p_bias;
      z += a[embed_dim_ + 1] * w_prev;
      f.pre[r] = z;
      f.w[r] = z > 0.0 ? z : 0.0;
      w_prev = f.w[r];
    }
    return f;
  }

  // Response probabilities at every grid level; shares one forward pass.
  std::vector<double> predict_curve(const Features& x) const {
    const DipnForward f = forward(x);
    std::vector<double> out(grid_.size());
    double logit = f.bias_logit;
    out[0] = sigmoid(logit);
    for (std::size_t j = 1; j < grid_.size(); ++j) {
      logit += f.w[j - 1];
      out[j] = sigmoid(logit);
    }
    return out;
  }

  double predict(const Features& x, double incentive) const {
    const std::size_t level = grid_.index_floor(incentive);
    const DipnForward f = forward(x);
    double logit = f.bias_logit;
    for (std::size_t j = 1; j <= level; ++j) logit += f.w[j - 1];
    return sigmoid(logit);
  }

  std::vector<double> uplift_weights(const Features& x) const { return forward(x).w; }

  TrainConfig train_config;  // echo of the config last used to train

 private:
  void layout() {
    std::size_t off = 0;
    for (int f = 0; f < kNumFeatureFields; ++f) {
      embed_off_[f] = off;
      off += static_cast<std::size_t>(vocab_[f]) * embed_dim_;
    }
    bias_u_off_ = off;
    off += embed_dim_;
    bias_c_off_ = off++;
    global_bias_off_ = off++;
    uplift_w_off_ = off;
    off += num_uplift_weights() * uplift_in_dim();
    uplift_c_off_ = off;
    off += num_uplift_weights();
    total_size_ = off;
  }

  IncentiveGrid grid_;
  std::array<int, kNumFeatureFields> vocab_;
  int embed_dim_;
  std::array<std::size_t, kNumFeatureFields> embed_off_{};
  std::size_t bias_u_off_ = 0, bias_c_off_ = 0, global_bias_off_ = 0;
  std::size_t uplift_w_off_ = 0, uplift_c_off_ = 0, total_size_ = 0;
  std::vector<double> params_;
};

}  // namespace promo

#endif  // PROMO_DIPN_HPP_
