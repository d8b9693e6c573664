#ifndef PROMO_GRID_HPP_
#define PROMO_GRID_HPP_

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "promo/errors.hpp"

namespace promo {

// The D discretized incentive levels d_0 < ... < d_{D-1}, shared by models,
// allocator and metrics.
class IncentiveGrid {
 public:
  explicit IncentiveGrid(std::vector<double> levels) : levels_(std::move(levels)) {
    if (levels_.size() < 2)
      throw std::invalid_argument("IncentiveGrid: need at least 2 levels");
    for (std::size_t j = 1; j < levels_.size(); ++j)
      if (!(levels_[j] > levels_[j - 1]))
        throw std::invalid_argument("IncentiveGrid: levels must be strictly increasing");
  }

  // Levels {0, stride, 2*stride, ...} covering [0, hi].
  static IncentiveGrid strided(double stride, double hi = 100.0) {
    if (stride <= 0.0) throw std::invalid_argument("IncentiveGrid: stride must be > 0");
    std::vector<double> lv;
    for (double d = 0.0; d <= hi + 1e-9; d += stride) lv.push_back(d);
    return IncentiveGrid(std::move(lv));
  }

  std::size_t size() const { return levels_.size(); }
  double level(std::size_t j) const { return levels_[j]; }
  const std::vector<double>& levels() const { return levels_; }
  double min_level() const { return levels_.front(); }
  double max_level() const { return levels_.back(); }

  // Largest j with levels[j] <= c.  Off-grid values round down; values below
  // d_0 are a caller error, not an extrapolation.
  std::size_t index_floor(double c) const {
    if (c < levels_.front())
      throw std::invalid_argument("incentive " + std::to_string(c) +
                                  " below lowest grid level " +
                                  std::to_string(levels_.front()));
    const auto it = std::upper_bound(levels_.begin(), levels_.end(), c);
    return static_cast<std::size_t>(it - levels_.begin()) - 1;
  }

  bool operator==(const IncentiveGrid& o) const { return levels_ == o.levels_; }

 private:
  std::vector<double> levels_;
};

// Prefix-of-ones encoding of an incentive level: bits[j] = 1 iff c >= d_j.
// A nonnegative-weight linear model on this embedding is monotone in c.
struct IsotonicEmbedding {
  std::vector<std::uint8_t> bits;
};

inline IsotonicEmbedding isotonic_embed(const IncentiveGrid& grid, double c) {
  grid.index_floor(c);  // validates c >= d_0
  IsotonicEmbedding e;
  e.bits.resize(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j)
    e.bits[j] = c >= grid.level(j) ? 1 : 0;
  return e;
}

}  // namespace promo

#endif  // PROMO_GRID_HPP_
