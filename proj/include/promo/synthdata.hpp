#ifndef PROMO_SYNTHDATA_HPP_
#define PROMO_SYNTHDATA_HPP_

// Synthetic population with closed-form ground-truth response curves.
// Each joint category of three 1-in-n categorical features gets a monotone
// curve y over integer incentives 0..100: a baseline a plus uplift mass
// b = 1-a spread as a normalized Gaussian-bump cumulative sum.  Datasets are
// drawn from the curves with deliberate per-category count imbalance; an
// optional biased variant skews incentive assignment by category to exercise
// inverse-propensity correction.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "promo/errors.hpp"
#include "promo/rng.hpp"
#include "promo/textio.hpp"

namespace promo {

constexpr int kNumFeatureFields = 3;
using Features = std::array<int, kNumFeatureFields>;

constexpr int kCurvePoints = 101;  // integer incentives 0..100
constexpr int kMinDrawIncentive = 1;
constexpr int kMaxDrawIncentive = 100;

struct CurveParams {
  double a = 0.0;      // baseline response probability, in (0,1)
  double b = 0.0;      // uplift mass, exactly 1 - a
  double mu = 0.0;     // Gaussian center, in [-50, 150]
  double delta = 1.0;  // Gaussian width, in (0, 50]
};

struct GroundTruthCurve {
  CurveParams params;
  std::array<double, kCurvePoints> y{};  // monotone nondecreasing, y[0] = a
};

// Discrete response curve: y[i] = a + b/(100 Z) * sum_{h=1..i} e(h), with
// e(h) = exp(-(h-mu)^2 / (2 delta^2)) and Z = max_{h=0..100} e(h).  Starting
// the sum at h=1 keeps y[0] = a exactly (the continuous form integrates from
// 0) and bounds y by a + b <= 1.
inline GroundTruthCurve build_curve(const CurveParams& p) {
  if (!(p.a > 0.0 && p.a < 1.0)) throw std::invalid_argument("CurveParams: a must be in (0,1)");
  if (!(p.delta > 0.0)) throw std::invalid_argument("CurveParams: delta must be > 0");
  // e(h)/Z computed as exp(q(h) - max q): immune to underflow when delta is
  // tiny and the bump sits far from the range.
  std::array<double, kCurvePoints> q{};
  double qmax = -std::numeric_limits<double>::infinity();
  for (int h = 0; h < kCurvePoints; ++h) {
    const double t = (h - p.mu) / p.delta;
    q[h] = -0.5 * t * t;
    qmax = std::max(qmax, q[h]);
  }
  GroundTruthCurve curve;
  curve.params = p;
  double sum = 0.0;
  curve.y[0] = p.a;
  for (int i = 1; i < kCurvePoints; ++i) {
    sum += std::exp(q[i] - qmax);
    curve.y[i] = std::min(p.a + p.b / 100.0 * sum, 1.0 - 1e-9);
  }
  return curve;
}

class SyntheticPopulation {
 public:
  SyntheticPopulation(int n1, int n2, int n3, std::uint64_t seed,
                      std::vector<GroundTruthCurve> curves)
      : n_{n1, n2, n3}, seed_(seed), curves_(std::move(curves)) {
    if (curves_.size() != num_categories())
      throw std::invalid_argument("SyntheticPopulation: need one curve per joint category");
  }

  int n1() const { return n_[0]; }
  int n2() const { return n_[1]; }
  int n3() const { return n_[2]; }
  std::uint64_t seed() const { return seed_; }
  std::size_t num_categories() const {
    return static_cast<std::size_t>(n_[0]) * n_[1] * n_[2];
  }

  std::size_t category_index(const Features& f) const {
    if (f[0] < 0 || f[0] >= n_[0] || f[1] < 0 || f[1] >= n_[1] || f[2] < 0 || f[2] >= n_[2])
      throw vocab_error("category (" + std::to_string(f[0]) + "," + std::to_string(f[1]) +
                        "," + std::to_string(f[2]) + ") outside population bounds");
    return (static_cast<std::size_t>(f[0]) * n_[1] + f[1]) * n_[2] + f[2];
  }
  Features category_at(std::size_t idx) const {
    const int i3 = static_cast<int>(idx % n_[2]);
    const int i2 = static_cast<int>((idx / n_[2]) % n_[1]);
    const int i1 = static_cast<int>(idx / (static_cast<std::size_t>(n_[1]) * n_[2]));
    return {i1, i2, i3};
  }

  const GroundTruthCurve& curve(const Features& f) const { return curves_[category_index(f)]; }
  const GroundTruthCurve& curve_at(std::size_t idx) const { return curves_[idx]; }

 private:
  std::array<int, 3> n_;
  std::uint64_t seed_;
  std::vector<GroundTruthCurve> curves_;
};

struct TrainingSample {
  Features features{0, 0, 0};
  int incentive = 0;        // integer incentive value in 0..100
  int label = 0;            // binary response
  double weight = 1.0;      // >= 0; IPS weight slot
  double propensity = -1.0; // assignment probability when known, else -1
};

// One curve per joint category with a ~ U(0,1), b = 1-a, mu ~ U(-50,150),
// delta ~ U(eps,50].  Deterministic in the seed; categories are visited in
// lexicographic order.
inline SyntheticPopulation gen_population(int n1, int n2, int n3, std::uint64_t seed) {
  if (n1 < 1 || n2 < 1 || n3 < 1)
    throw std::invalid_argument("gen_population: category counts must be >= 1");
  constexpr double kDeltaEps = 1e-3;  // U(0,50) literally allows delta=0
  Rng rng(derive_seed(seed, 0x706f70));
  std::vector<GroundTruthCurve> curves;
  curves.reserve(static_cast<std::size_t>(n1) * n2 * n3);
  const std::size_t total = static_cast<std::size_t>(n1) * n2 * n3;
  for (std::size_t c = 0; c < total; ++c) {
    CurveParams p;
    do {
      p.a = rng.uniform();
    } while (p.a <= 0.0);
    p.b = 1.0 - p.a;
    p.mu = rng.uniform(-50.0, 150.0);
    p.delta = 50.0 - rng.uniform() * (50.0 - kDeltaEps);
    curves.push_back(build_curve(p));
  }
  return SyntheticPopulation(n1, n2, n3, seed, std::move(curves));
}

namespace detail {

// Per-category sample counts: z ~ U{1..1000}; when target_total > 0 the z's
// are rescaled to sum exactly to it (largest-remainder rounding), preserving
// the draw's sparsity ratios.
inline std::vector<std::int64_t> category_counts(const SyntheticPopulation& pop, Rng& rng,
                                                 std::int64_t target_total) {
  const std::size_t m = pop.num_categories();
  std::vector<std::int64_t> z(m);
  for (std::size_t c = 0; c < m; ++c) z[c] = rng.uniform_int(1, 1000);
  if (target_total <= 0) return z;
  const double zsum = static_cast<double>(std::accumulate(z.begin(), z.end(), std::int64_t{0}));
  std::vector<std::int64_t> counts(m);
  std::vector<std::pair<double, std::size_t>> rema(m);
  std::int64_t assigned = 0;
  for (std::size_t c = 0; c < m; ++c) {
    const double exact = static_cast<double>(z[c]) * static_cast<double>(target_total) / zsum;
    counts[c] = static_cast<std::int64_t>(exact);
    rema[c] = {exact - static_cast<double>(counts[c]), c};
    assigned += counts[c];
  }
  std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (std::size_t i = 0; assigned < target_total; ++i, ++assigned) counts[rema[i % m].second]++;
  return counts;
}

}  // namespace detail

// Noisy, sparse observations: per category, count z ~ U{1..1000}; per sample,
// incentive p ~ U{1..100} and label ~ Bernoulli(y[p]).  target_total > 0
// rescales counts to an exact total.
inline std::vector<TrainingSample> draw_dataset(const SyntheticPopulation& pop,
                                                std::uint64_t seed,
                                                std::int64_t target_total = 0) {
  Rng rng(derive_seed(seed, 0x647261));
  const auto counts = detail::category_counts(pop, rng, target_total);
  std::vector<TrainingSample> out;
  for (std::size_t c = 0; c < pop.num_categories(); ++c) {
    const auto& curve = pop.curve_at(c);
    const Features f = pop.category_at(c);
    for (std::int64_t s = 0; s < counts[c]; ++s) {
      TrainingSample smp;
      smp.features = f;
      smp.incentive = static_cast<int>(rng.uniform_int(kMinDrawIncentive, kMaxDrawIncentive));
      smp.label = rng.bernoulli(curve.y[smp.incentive]) ? 1 : 0;
      out.push_back(smp);
    }
  }
  return out;
}

struct BiasedDataset {
  std::vector<TrainingSample> samples;  // propensity field filled in
  // True assignment probabilities over incentives 1..100, one row per joint
  // category (row index = population category index).  Rows sum to 1.
  std::vector<std::array<double, kMaxDrawIncentive>> propensities;
};

// Treatment-bias fixture: incentive assignment is tilted by category so that
// higher-baseline categories receive lower incentives.  The tilt is a softmax
// over incentives with exponent -strength * (a - 1/2) * centered(p); strength
// 0 recovers the uniform draw exactly.
inline BiasedDataset draw_biased_dataset(const SyntheticPopulation& pop, double bias_strength,
                                         std::uint64_t seed, std::int64_t target_total = 0) {
  if (bias_strength < 0.0)
    throw std::invalid_argument("draw_biased_dataset: bias_strength must be >= 0");
  Rng rng(derive_seed(seed, 0x626961));
  const auto counts = detail::category_counts(pop, rng, target_total);
  BiasedDataset out;
  out.propensities.resize(pop.num_categories());
  for (std::size_t c = 0; c < pop.num_categories(); ++c) {
    const auto& curve = pop.curve_at(c);
    const double tilt = bias_strength * (curve.params.a - 0.5);
    auto& prop = out.propensities[c];
    double norm = 0.0;
    for (int p = kMinDrawIncentive; p <= kMaxDrawIncentive; ++p) {
      const double centered = (p - 50.5) / 49.5;  // spans [-1, 1] over 1..100
      prop[p - 1] = std::exp(-tilt * centered);
      norm += prop[p - 1];
    }
    for (auto& v : prop) v /= norm;

    const Features f = pop.category_at(c);
    for (std::int64_t s = 0; s < counts[c]; ++s) {
      TrainingSample smp;
      smp.features = f;
      // inverse-CDF draw over the category's incentive distribution
      const double u = rng.uniform();
      double acc = 0.0;
      int chosen = kMaxDrawIncentive;
      for (int p = kMinDrawIncentive; p <= kMaxDrawIncentive; ++p) {
        acc += prop[p - 1];
        if (u < acc) {
          chosen = p;
          break;
        }
      }
      smp.incentive = chosen;
      smp.propensity = prop[chosen - 1];
      smp.label = rng.bernoulli(curve.y[smp.incentive]) ? 1 : 0;
      out.samples.push_back(smp);
    }
  }
  return out;
}

// --- serialization ---------------------------------------------------------
//
// Dataset: "promo-dataset v1" then one record per line:
//   f1 f2 f3 incentive label weight [propensity]
// Population: "promo-population v1", a counts/seed line, then per category:
//   curve f1 f2 f3 a b mu delta
//   y <101 values>

inline void save_dataset(const std::string& path, const std::vector<TrainingSample>& samples) {
  auto out = open_for_write(path);
  out << "promo-dataset v1\n";
  for (const auto& s : samples) {
    out << s.features[0] << ' ' << s.features[1] << ' ' << s.features[2] << ' '
        << s.incentive << ' ' << s.label << ' ' << format_double(s.weight);
    if (s.propensity >= 0.0) out << ' ' << format_double(s.propensity);
    out << '\n';
  }
}

inline std::vector<TrainingSample> load_dataset(const std::string& path) {
  const auto lines = read_lines(path);
  expect_header(lines, "promo-dataset", 1, path);
  std::vector<TrainingSample> samples;
  samples.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto t = split_tokens(lines[i]);
    if (t.size() != 6 && t.size() != 7)
      throw incompat_error("dataset record needs 6 or 7 fields: " + lines[i]);
    TrainingSample s;
    s.features = {static_cast<int>(parse_int(t[0])), static_cast<int>(parse_int(t[1])),
                  static_cast<int>(parse_int(t[2]))};
    s.incentive = static_cast<int>(parse_int(t[3]));
    s.label = static_cast<int>(parse_int(t[4]));
    s.weight = parse_double(t[5]);
    if (s.weight < 0.0) throw incompat_error("negative sample weight in " + path);
    if (t.size() == 7) s.propensity = parse_double(t[6]);
    samples.push_back(s);
  }
  return samples;
}

inline void save_population(const std::string& path, const SyntheticPopulation& pop) {
  auto out = open_for_write(path);
  out << "promo-population v1\n";
  out << "counts " << pop.n1() << ' ' << pop.n2() << ' ' << pop.n3() << " seed " << pop.seed()
      << '\n';
  for (std::size_t c = 0; c < pop.num_categories(); ++c) {
    const Features f = pop.category_at(c);
    const auto& cv = pop.curve_at(c);
    out << "curve " << f[0] << ' ' << f[1] << ' ' << f[2] << ' ' << format_double(cv.params.a)
        << ' ' << format_double(cv.params.b) << ' ' << format_double(cv.params.mu) << ' '
        << format_double(cv.params.delta) << '\n';
    out << "y";
    for (const double v : cv.y) out << ' ' << format_double(v);
    out << '\n';
  }
}

inline SyntheticPopulation load_population(const std::string& path) {
  const auto lines = read_lines(path);
  expect_header(lines, "promo-population", 1, path);
  if (lines.size() < 2) throw incompat_error("truncated population file: " + path);
  const auto head = split_tokens(lines[1]);
  if (head.size() != 6 || head[0] != "counts" || head[4] != "seed")
    throw incompat_error("bad population counts line: " + lines[1]);
  const int n1 = static_cast<int>(parse_int(head[1]));
  const int n2 = static_cast<int>(parse_int(head[2]));
  const int n3 = static_cast<int>(parse_int(head[3]));
  const auto seed = static_cast<std::uint64_t>(parse_int(head[5]));
  const std::size_t m = static_cast<std::size_t>(n1) * n2 * n3;
  std::vector<GroundTruthCurve> curves(m);
  std::size_t line = 2;
  for (std::size_t c = 0; c < m; ++c, line += 2) {
    if (line + 1 >= lines.size()) throw incompat_error("truncated population file: " + path);
    const auto ct = split_tokens(lines[line]);
    if (ct.size() != 8 || ct[0] != "curve")
      throw incompat_error("bad curve line: " + lines[line]);
    GroundTruthCurve cv;
    cv.params.a = parse_double(ct[4]);
    cv.params.b = parse_double(ct[5]);
    cv.params.mu = parse_double(ct[6]);
    cv.params.delta = parse_double(ct[7]);
    const auto yt = split_tokens(lines[line + 1]);
    if (yt.size() != kCurvePoints + 1 || yt[0] != "y")
      throw incompat_error("bad y line in population file");
    for (int i = 0; i < kCurvePoints; ++i) cv.y[i] = parse_double(yt[i + 1]);
    const std::size_t idx =
        (static_cast<std::size_t>(parse_int(ct[1])) * n2 + parse_int(ct[2])) * n3 +
        parse_int(ct[3]);
    curves[idx] = cv;
  }
  return SyntheticPopulation(n1, n2, n3, seed, std::move(curves));
}

}  // namespace promo

#endif  // PROMO_SYNTHDATA_HPP_
