#ifndef PROMO_MLP_HPP_
#define PROMO_MLP_HPP_

// Plain feed-forward baseline.  The incentive enters as a one-hot over the
// grid levels next to the summed categorical embeddings; hidden layers are
// ReLU, the output is a single logit.  No shape constraint of any kind.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "promo/dipn.hpp"
#include "promo/errors.hpp"
#include "promo/grid.hpp"
#include "promo/losses.hpp"
#include "promo/rng.hpp"

namespace promo {

struct MlpForward {
  std::vector<double> input;               // E + D
  std::vector<std::vector<double>> pre;    // per layer pre-activations
  std::vector<std::vector<double>> act;    // per layer activations (last = logit)
  double logit = 0;
};

class MlpModel {
 public:
  MlpModel(IncentiveGrid grid, std::array<int, kNumFeatureFields> vocab_sizes,
           int embed_dim, std::vector<int> hidden_widths, std::uint64_t init_seed)
      : grid_(std::move(grid)),
        vocab_(vocab_sizes),
        embed_dim_(embed_dim),
        hidden_(std::move(hidden_widths)) {
    if (embed_dim_ < 1) throw std::invalid_argument("MlpModel: embed_dim must be >= 1");
    for (const int v : vocab_)
      if (v < 1) throw std::invalid_argument("MlpModel: vocab sizes must be >= 1");
    for (const int w : hidden_)
      if (w < 1) throw std::invalid_argument("MlpModel: hidden widths must be >= 1");
    layout();
    params_.assign(total_size_, 0.0);
    Rng rng(derive_seed(init_seed, 0x6d6c70ULL));
    for (int f = 0; f < kNumFeatureFields; ++f)
      for (std::size_t i = 0; i < static_cast<std::size_t>(vocab_[f]) * embed_dim_; ++i)
        params_[embed_off_[f] + i] = rng.uniform(-0.05, 0.05);
    for (std::size_t l = 0; l < layer_in_.size(); ++l) {
      const double r = std::sqrt(6.0 / (layer_in_[l] + layer_out_[l]));
      for (std::size_t i = 0;
           i < static_cast<std::size_t>(layer_in_[l]) * layer_out_[l]; ++i)
        params_[weight_off_[l] + i] = rng.uniform(-r, r);
      // biases start at zero
    }
  }

  const IncentiveGrid& grid() const { return grid_; }
  int embed_dim() const { return embed_dim_; }
  const std::array<int, kNumFeatureFields>& vocab_sizes() const { return vocab_; }
  const std::vector<int>& hidden_widths() const { return hidden_; }
  std::size_t num_layers() const { return layer_in_.size(); }
  int layer_in(std::size_t l) const { return layer_in_[l]; }
  int layer_out(std::size_t l) const { return layer_out_[l]; }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  std::size_t num_params() const { return params_.size(); }
  std::size_t embed_offset(int field, int value) const {
    return embed_off_[field] + static_cast<std::size_t>(value) * embed_dim_;
  }
  std::size_t weight_offset(std::size_t layer) const { return weight_off_[layer]; }
  std::size_t bias_offset(std::size_t layer) const { return bias_off_[layer]; }

  void check_vocab(int field, int value) const {
    if (value < 0 || value >= vocab_[field])
      throw vocab_error("feature " + std::to_string(field) + " value " +
                        std::to_string(value) + " outside vocabulary of size " +
                        std::to_string(vocab_[field]));
  }

  MlpForward forward(const Features& x, std::size_t level) const {
    MlpForward f;
    const std::size_t d = grid_.size();
    f.input.assign(embed_dim_ + d, 0.0);
    for (int fld = 0; fld < kNumFeatureFields; ++fld) {
      check_vocab(fld, x[fld]);
      const double* e = params_.data() + embed_offset(fld, x[fld]);
      for (int i = 0; i < embed_dim_; ++i) f.input[i] += e[i];
    }
    f.input[embed_dim_ + level] = 1.0;

    const std::vector<double>* in = &f.input;
    f.pre.resize(num_layers());
    f.act.resize(num_layers());
    for (std::size_t l = 0; l < num_layers(); ++l) {
      const int nin = layer_in_[l], nout = layer_out_[l];
      f.pre[l].assign(nout, 0.0);
      const double* w = params_.data() + weight_off_[l];
      const double* b = params_.data() + bias_off_[l];
      for (int o = 0; o < nout; ++o) {
        double z = b[o];
        const double* wrow = w + static_cast<std::size_t>(o) * nin;
        for (int i = 0; i < nin; ++i) z += wrow[i] * (*in)[i];
        f.pre[l][o] = z;
      }
      f.act[l] = f.pre[l];
      if (l + 1 < num_layers())
        for (auto& v : f.act[l]) v = v > 0.0 ? v : 0.0;  // hidden ReLU
      in = &f.act[l];
    }
    f.logit = f.act.back()[0];
    return f;
  }

  double predict(const Features& x, double incentive) const {
    return sigmoid(forward(x, grid_.index_floor(incentive)).logit);
  }

  std::vector<double> predict_curve(const Features& x) const {
    std::vector<double> out(grid_.size());
    for (std::size_t j = 0; j < grid_.size(); ++j) out[j] = sigmoid(forward(x, j).logit);
    return out;
  }

  TrainConfig train_config;

 private:
  void layout() {
    std::size_t off = 0;
    for (int f = 0; f < kNumFeatureFields; ++f) {
      embed_off_[f] = off;
      off += static_cast<std::size_t>(vocab_[f]) * embed_dim_;
    }
    int in = embed_dim_ + static_cast<int>(grid_.size());
    for (std::size_t l = 0; l <= hidden_.size(); ++l) {
      const int out = l < hidden_.size() ? hidden_[l] : 1;
      layer_in_.push_back(in);
      layer_out_.push_back(out);
      weight_off_.push_back(off);
      off += static_cast<std::size_t>(in) * out;
      bias_off_.push_back(off);
      off += out;
      in = out;
    }
    total_size_ = off;
  }

  IncentiveGrid grid_;
  std::array<int, kNumFeatureFields> vocab_;
  int embed_dim_;
  std::vector<int> hidden_;
  std::array<std::size_t, kNumFeatureFields> embed_off_{};
  std::vector<int> layer_in_, layer_out_;
  std::vector<std::size_t> weight_off_, bias_off_;
  std::size_t total_size_ = 0;
  std::vector<double> params_;
};

}  // namespace promo

#endif  // PROMO_MLP_HPP_
