#ifndef PROMO_PROPENSITY_HPP_
#define PROMO_PROPENSITY_HPP_

// Inverse-propensity correction for logged promotion data.  Assignment
// propensities are empirical frequencies of each incentive level within a
// feature bucket, with additive smoothing; weights are clipped reciprocals.
// Counting ignores any weights already attached to the samples, so
// re-fitting on weighted data changes nothing.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "promo/errors.hpp"
#include "promo/synthdata.hpp"
#include "promo/textio.hpp"

namespace promo {

// Which categorical fields form the bucket key.  Default: the full joint
// category.
struct BucketSpec {
  std::array<bool, kNumFeatureFields> use{true, true, true};

  std::array<int, kNumFeatureFields> key(const Features& f) const {
    std::array<int, kNumFeatureFields> k{};
    for (int i = 0; i < kNumFeatureFields; ++i) k[i] = use[i] ? f[i] : -1;
    return k;
  }
  std::string describe() const {
    std::string s;
    for (int i = 0; i < kNumFeatureFields; ++i) s += use[i] ? '1' : '0';
    return s;
  }
  static BucketSpec parse(const std::string& s) {
    if (s.size() != kNumFeatureFields)
      throw std::invalid_argument("bucket spec must have " +
                                  std::to_string(kNumFeatureFields) + " flags, e.g. 110");
    BucketSpec b;
    for (int i = 0; i < kNumFeatureFields; ++i) {
      if (s[i] != '0' && s[i] != '1')
        throw std::invalid_argument("bucket spec flags must be 0 or 1");
      b.use[i] = s[i] == '1';
    }
    return b;
  }
};

class PropensityTable {
 public:
  using Key = std::array<int, kNumFeatureFields>;

  PropensityTable(BucketSpec spec, double smoothing, std::vector<int> levels,
                  std::map<Key, std::vector<double>> bucket_probs,
                  std::vector<double> global_probs)
      : spec_(spec),
        smoothing_(smoothing),
        levels_(std::move(levels)),
        buckets_(std::move(bucket_probs)),
        global_(std::move(global_probs)) {}

  const BucketSpec& bucket_spec() const { return spec_; }
  double smoothing() const { return smoothing_; }
  const std::vector<int>& levels() const { return levels_; }
  std::size_t num_buckets() const { return buckets_.size(); }

  // Assignment probability of `incentive` for a user in `features`' bucket.
  // Unknown buckets fall back to the global (all-users) frequencies.
  double propensity(const Features& features, int incentive) const {
    const auto it = buckets_.find(spec_.key(features));
    const std::vector<double>& probs = it == buckets_.end() ? global_ : it->second;
    return probs[level_index(incentive)];
  }

  const std::map<Key, std::vector<double>>& buckets() const { return buckets_; }
  const std::vector<double>& global_probs() const { return global_; }

 private:
  std::size_t level_index(int incentive) const {
    const auto it = std::lower_bound(levels_.begin(), levels_.end(), incentive);
    if (it == levels_.end() || *it != incentive)
      throw incompat_error("incentive " + std::to_string(incentive) +
                           " was never observed when the propensity table was fitted");
    return static_cast<std::size_t>(it - levels_.begin());
  }

  BucketSpec spec_;
  double smoothing_;
  std::vector<int> levels_;
  std::map<Key, std::vector<double>> buckets_;
  std::vector<double> global_;
};

// Empirical frequency of each observed incentive level per bucket, with
// `smoothing` pseudo-counts added to every cell, renormalized.
inline PropensityTable fit_propensity(const std::vector<TrainingSample>& samples,
                                      const BucketSpec& spec = {}, double smoothing = 1.0) {
  if (samples.empty()) throw std::invalid_argument("fit_propensity: no samples");
  if (smoothing < 0.0) throw std::invalid_argument("fit_propensity: smoothing must be >= 0");

  std::vector<int> levels;
  for (const auto& s : samples) levels.push_back(s.incentive);
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  const std::size_t n_levels = levels.size();
  const auto index_of = [&](int v) {
    return static_cast<std::size_t>(
        std::lower_bound(levels.begin(), levels.end(), v) - levels.begin());
  };

  std::map<PropensityTable::Key, std::vector<double>> counts;
  std::vector<double> global(n_levels, 0.0);
  for (const auto& s : samples) {
    auto& row = counts[spec.key(s.features)];
    if (row.empty()) row.assign(n_levels, 0.0);
    row[index_of(s.incentive)] += 1.0;  // weights deliberately ignored
    global[index_of(s.incentive)] += 1.0;
  }

  const auto normalize = [&](std::vector<double>& row) {
    double total = 0.0;
    for (auto& v : row) {
      v += smoothing;
      total += v;
    }
    for (auto& v : row) v /= total;
  };
  for (auto& [key, row] : counts) normalize(row);
  normalize(global);
  return PropensityTable(spec, smoothing, std::move(levels), std::move(counts),
                         std::move(global));
}

// New sample collection with weight_i = min(1 / p(c_i | bucket(x_i)), clip_max).
inline std::vector<TrainingSample> attach_weights(const std::vector<TrainingSample>& samples,
                                                  const PropensityTable& table,
                                                  double clip_max = 100.0) {
  if (clip_max < 1.0) throw std::invalid_argument("attach_weights: clip_max must be >= 1");
  std::vector<TrainingSample> out = samples;
  for (auto& s : out) {
    const double p = table.propensity(s.features, s.incentive);
    s.weight = std::min(1.0 / p, clip_max);
  }
  return out;
}

// --- serialization ---------------------------------------------------------

inline void save_propensity(const std::string& path, const PropensityTable& t) {
  auto out = open_for_write(path);
  out << "promo-propensity v1\n";
  out << "bucket " << t.bucket_spec().describe() << " smoothing "
      << format_double(t.smoothing()) << '\n';
  out << "levels " << t.levels().size();
  for (const int v : t.levels()) out << ' ' << v;
  out << '\n';
  out << "global";
  for (const double p : t.global_probs()) out << ' ' << format_double(p);
  out << '\n';
  for (const auto& [key, row] : t.buckets()) {
    out << "bucketrow " << key[0] << ' ' << key[1] << ' ' << key[2];
    for (const double p : row) out << ' ' << format_double(p);
    out << '\n';
  }
}

inline PropensityTable load_propensity(const std::string& path) {
  const auto lines = read_lines(path);
  expect_header(lines, "promo-propensity", 1, path);
  std::size_t i = 1;
  const auto spec_t = split_tokens(lines.at(i++));
  if (spec_t.size() != 4 || spec_t[0] != "bucket" || spec_t[2] != "smoothing")
    throw incompat_error("bad propensity bucket line");
  const BucketSpec spec = BucketSpec::parse(std::string(spec_t[1]));
  const double smoothing = parse_double(spec_t[3]);
  const auto lv_t = split_tokens(lines.at(i++));
  if (lv_t.size() < 2 || lv_t[0] != "levels") throw incompat_error("bad levels line");
  const auto n_levels = static_cast<std::size_t>(parse_int(lv_t[1]));
  if (lv_t.size() != n_levels + 2) throw incompat_error("levels length mismatch");
  std::vector<int> levels;
  for (std::size_t k = 0; k < n_levels; ++k)
    levels.push_back(static_cast<int>(parse_int(lv_t[k + 2])));
  const auto gl_t = split_tokens(lines.at(i++));
  if (gl_t.size() != n_levels + 1 || gl_t[0] != "global")
    throw incompat_error("bad global propensity line");
  std::vector<double> global;
  for (std::size_t k = 0; k < n_levels; ++k) global.push_back(parse_double(gl_t[k + 1]));
  std::map<PropensityTable::Key, std::vector<double>> buckets;
  for (; i < lines.size(); ++i) {
    const auto t = split_tokens(lines[i]);
    if (t.size() != n_levels + 4 || t[0] != "bucketrow")
      throw incompat_error("bad bucketrow line: " + lines[i]);
    PropensityTable::Key key{static_cast<int>(parse_int(t[1])),
                             static_cast<int>(parse_int(t[2])),
                             static_cast<int>(parse_int(t[3]))};
    std::vector<double> row;
    for (std::size_t k = 0; k < n_levels; ++k) row.push_back(parse_double(t[k + 4]));
    buckets.emplace(key, std::move(row));
  }
  return PropensityTable(spec, smoothing, std::move(levels), std::move(buckets),
                         std::move(global));
}

}  // namespace promo

#endif  // PROMO_PROPENSITY_HPP_
