#ifndef PROMO_METRICS_HPP_
#define PROMO_METRICS_HPP_

// The seven evaluation metrics over trained models and allocation plans:
// LogLoss, AUC-ROC, reverse/equal pair rates over predicted curves, maximum
// local slope standard deviation, and the future response/cost of a plan
// against ground-truth curves or a matched holdout.  Per-user means use
// Neumaier compensated summation so results do not depend on accumulation
// luck.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "promo/allocator.hpp"
#include "promo/errors.hpp"
#include "promo/grid.hpp"
#include "promo/losses.hpp"
#include "promo/synthdata.hpp"
#include "promo/textio.hpp"

namespace promo {

class NeumaierSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0, comp_ = 0.0;
};

constexpr double kDefaultEqTol = 1e-9;

// --- pair rates over predicted curves ---------------------------------------

// Fraction of level pairs (d_a > d_b) with predict(d_a) < predict(d_b) - tol.
inline double rpr_of_curve(std::span<const double> curve, double eq_tol = kDefaultEqTol) {
  const std::size_t d = curve.size();
  if (d < 2) throw std::invalid_argument("rpr: need at least two levels");
  std::size_t reversed = 0;
  for (std::size_t a = 1; a < d; ++a)
    for (std::size_t b = 0; b < a; ++b)
      if (curve[a] < curve[b] - eq_tol) ++reversed;
  return static_cast<double>(2 * reversed) / static_cast<double>(d * (d - 1));
}

inline double epr_of_curve(std::span<const double> curve, double eq_tol = kDefaultEqTol) {
  const std::size_t d = curve.size();
  if (d < 2) throw std::invalid_argument("epr: need at least two levels");
  std::size_t equal = 0;
  for (std::size_t a = 1; a < d; ++a)
    for (std::size_t b = 0; b < a; ++b)
      if (std::abs(curve[a] - curve[b]) <= eq_tol) ++equal;
  return static_cast<double>(2 * equal) / static_cast<double>(d * (d - 1));
}

inline double rpr_of_curves(const std::vector<std::vector<double>>& curves,
                            double eq_tol = kDefaultEqTol) {
  if (curves.empty()) throw std::invalid_argument("rpr: no users");
  NeumaierSum s;
  for (const auto& c : curves) s.add(rpr_of_curve(c, eq_tol));
  return s.value() / static_cast<double>(curves.size());
}

inline double epr_of_curves(const std::vector<std::vector<double>>& curves,
                            double eq_tol = kDefaultEqTol) {
  if (curves.empty()) throw std::invalid_argument("epr: no users");
  NeumaierSum s;
  for (const auto& c : curves) s.add(epr_of_curve(c, eq_tol));
  return s.value() / static_cast<double>(curves.size());
}

// --- maximum local slope standard deviation ---------------------------------

// Local slopes between consecutive levels, anchored at the left endpoint; a
// window [d_i - r, d_i + r] at every grid level collects the slopes anchored
// inside it.  The user's value is the maximum population standard deviation
// across windows with at least two slopes.
inline double mlss_of_curve(std::span<const double> curve, const IncentiveGrid& grid,
                            double radius) {
  const std::size_t d = grid.size();
  if (d < 3) throw std::invalid_argument("mlss: need at least three grid levels");
  if (curve.size() != d) throw std::invalid_argument("mlss: curve/grid size mismatch");
  std::vector<double> slope(d - 1);
  for (std::size_t j = 0; j + 1 < d; ++j)
    slope[j] = (curve[j + 1] - curve[j]) / (grid.level(j + 1) - grid.level(j));
  double best = -1.0;
  for (std::size_t i = 0; i < d; ++i) {
    NeumaierSum sum, sq;
    std::size_t n = 0;
    for (std::size_t j = 0; j + 1 < d; ++j) {
      if (grid.level(j) < grid.level(i) - radius || grid.level(j) > grid.level(i) + radius)
        continue;
      sum.add(slope[j]);
      ++n;
    }
    if (n < 2) continue;  // window too narrow, skipped
    const double mean = sum.value() / static_cast<double>(n);
    for (std::size_t j = 0; j + 1 < d; ++j) {
      if (grid.level(j) < grid.level(i) - radius || grid.level(j) > grid.level(i) + radius)
        continue;
      sq.add((slope[j] - mean) * (slope[j] - mean));
    }
    best = std::max(best, std::sqrt(sq.value() / static_cast<double>(n)));
  }
  if (best < 0.0)
    throw std::invalid_argument(
        "mlss: every window holds fewer than two slopes; increase the window radius");
  return best;
}

inline double mlss_of_curves(const std::vector<std::vector<double>>& curves,
                             const IncentiveGrid& grid, double radius) {
  if (curves.empty()) throw std::invalid_argument("mlss: no users");
  NeumaierSum s;
  for (const auto& c : curves) s.add(mlss_of_curve(c, grid, radius));
  return s.value() / static_cast<double>(curves.size());
}

// --- fit metrics -------------------------------------------------------------

template <class Model>
double logloss_metric(const Model& model, std::span<const TrainingSample> samples) {
  if (samples.empty()) throw std::invalid_argument("logloss: no samples");
  NeumaierSum s;
  for (const auto& smp : samples)
    s.add(log_loss(model.predict(smp.features, smp.incentive), smp.label, 1.0));
  return s.value() / static_cast<double>(samples.size());
}

// Mann-Whitney rank statistic; ties contribute one half.
inline double auc_from_scores(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::invalid_argument("auc: need matching nonempty scores and labels");
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0, n_neg = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based tie average
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]]) {
        rank_sum_pos += avg_rank;
        ++n_pos;
      } else {
        ++n_neg;
      }
    }
    i = j;
  }
  if (n_pos == 0 || n_neg == 0)
    throw std::invalid_argument("auc: both classes must be present");
  const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

template <class Model>
double auc_roc(const Model& model, std::span<const TrainingSample> samples) {
  std::vector<double> scores;
  std::vector<int> labels;
  scores.reserve(samples.size());
  labels.reserve(samples.size());
  for (const auto& smp : samples) {
    scores.push_back(model.predict(smp.features, smp.incentive));
    labels.push_back(smp.label);
  }
  return auc_from_scores(scores, labels);
}

template <class Model>
std::vector<std::vector<double>> curves_for_users(const Model& model,
                                                  std::span<const Features> users) {
  std::vector<std::vector<double>> curves;
  curves.reserve(users.size());
  for (const auto& x : users) curves.push_back(model.predict_curve(x));
  return curves;
}

// --- future response / future cost -------------------------------------------

namespace detail {

inline int integer_level_value(const IncentiveGrid& grid, int level_index) {
  const double v = grid.level(static_cast<std::size_t>(level_index));
  const int r = static_cast<int>(std::llround(v));
  if (std::abs(v - r) > 1e-9 || r < 0 || r >= kCurvePoints)
    throw std::invalid_argument("grid level " + std::to_string(v) +
                                " is not an integer incentive in 0..100");
  return r;
}

}  // namespace detail

// Expected ground-truth response of the plan: mean over users of the true
// curve at the assigned incentive (expectation over two-point mixes).
inline double future_response_synthetic(const AllocationPlan& plan,
                                        std::span<const Features> users,
                                        const IncentiveGrid& grid,
                                        const SyntheticPopulation& pop) {
  if (plan.assignment.size() != users.size())
    throw std::invalid_argument("future_response: plan/users size mismatch");
  if (users.empty()) throw std::invalid_argument("future_response: no users");
  NeumaierSum s;
  for (std::size_t i = 0; i < users.size(); ++i) {
    const auto& curve = pop.curve(users[i]);  // vocab_error for unknown categories
    const auto& a = plan.assignment[i];
    double v = a.prob * curve.y[detail::integer_level_value(grid, a.level)];
    if (a.mixed()) v += a.prob2 * curve.y[detail::integer_level_value(grid, a.level2)];
    s.add(v);
  }
  return s.value() / static_cast<double>(users.size());
}

struct HoldoutMetrics {
  double response = std::numeric_limits<double>::quiet_NaN();
  double cost = std::numeric_limits<double>::quiet_NaN();
  double cost_error = std::numeric_limits<double>::quiet_NaN();  // excess over budget
  std::size_t matched_users = 0;
  std::size_t unmatched_users = 0;
  double match_rate = 0.0;
  bool low_match_warning = false;  // match rate below one half
};

// Importance-sampling style holdout evaluation: for each planned
// (user type, level) look up holdout records of the same joint category at
// the same incentive and average their labels (and face-value costs).
// Users without a match are excluded and counted.
inline HoldoutMetrics future_metrics_holdout(const AllocationPlan& plan,
                                             std::span<const Features> users,
                                             const IncentiveGrid& grid,
                                             std::span<const TrainingSample> holdout,
                                             double budget_per_capita) {
  if (plan.assignment.size() != users.size())
    throw std::invalid_argument("future_metrics_holdout: plan/users size mismatch");
  if (users.empty()) throw std::invalid_argument("future_metrics_holdout: no users");
  struct Cell {
    double n = 0, positives = 0, cost = 0;
  };
  std::map<std::tuple<int, int, int, int>, Cell> cells;
  for (const auto& s : holdout) {
    auto& c = cells[{s.features[0], s.features[1], s.features[2], s.incentive}];
    c.n += 1.0;
    c.positives += static_cast<double>(s.label);
    c.cost += static_cast<double>(s.incentive);  // face value
  }
  const auto lookup = [&](const Features& x, int level_index) -> const Cell* {
    const int v = detail::integer_level_value(grid, level_index);
    const auto it = cells.find({x[0], x[1], x[2], v});
    return it == cells.end() ? nullptr : &it->second;
  };

  HoldoutMetrics out;
  NeumaierSum resp, cost;
  for (std::size_t i = 0; i < users.size(); ++i) {
    const auto& a = plan.assignment[i];
    const Cell* c1 = lookup(users[i], a.level);
    const Cell* c2 = a.mixed() ? lookup(users[i], a.level2) : nullptr;
    if (c1 == nullptr || (a.mixed() && c2 == nullptr)) {
      ++out.unmatched_users;
      continue;
    }
    double r = a.prob * c1->positives / c1->n;
    double g = a.prob * c1->cost / c1->n;
    if (a.mixed()) {
      r += a.prob2 * c2->positives / c2->n;
      g += a.prob2 * c2->cost / c2->n;
    }
    resp.add(r);
    cost.add(g);
    ++out.matched_users;
  }
  out.match_rate =
      static_cast<double>(out.matched_users) / static_cast<double>(users.size());
  out.low_match_warning = out.match_rate < 0.5;
  if (out.matched_users > 0) {
    out.response = resp.value() / static_cast<double>(out.matched_users);
    out.cost = cost.value() / static_cast<double>(out.matched_users);
    out.cost_error = std::max(0.0, out.cost - budget_per_capita);
  }
  return out;
}

// --- the full report ----------------------------------------------------------

struct MetricsReport {
  std::string model_kind;
  double logloss = std::numeric_limits<double>::quiet_NaN();
  double auc = std::numeric_limits<double>::quiet_NaN();
  double rpr = std::numeric_limits<double>::quiet_NaN();
  double epr = std::numeric_limits<double>::quiet_NaN();
  double mlss = std::numeric_limits<double>::quiet_NaN();
  double future_response = std::numeric_limits<double>::quiet_NaN();
  double future_cost = std::numeric_limits<double>::quiet_NaN();  // per capita
  double future_cost_error = std::numeric_limits<double>::quiet_NaN();
  // config echoes
  std::vector<double> grid_levels;
  double eq_tol = kDefaultEqTol;
  double window_radius = 0.0;
  std::size_t num_samples = 0;
  std::size_t num_users = 0;
  std::string notes;  // e.g. holdout match warnings
  std::string summation = "neumaier";
};

inline void save_report(const std::string& path, const MetricsReport& r) {
  auto out = open_for_write(path);
  out << "promo-report v1\n";
  out << "model " << r.model_kind << '\n';
  out << "grid " << r.grid_levels.size();
  for (const double d : r.grid_levels) out << ' ' << format_double(d);
  out << '\n';
  out << "eq_tol " << format_double(r.eq_tol) << " window_radius "
      << format_double(r.window_radius) << '\n';
  out << "samples " << r.num_samples << " users " << r.num_users << '\n';
  out << "LogLoss " << format_double(r.logloss) << '\n';
  out << "AUC-ROC " << format_double(r.auc) << '\n';
  out << "RPR " << format_double(r.rpr) << '\n';
  out << "EPR " << format_double(r.epr) << '\n';
  out << "MLSS " << format_double(r.mlss) << '\n';
  out << "Future-response " << format_double(r.future_response) << '\n';
  out << "Future-cost " << format_double(r.future_cost) << '\n';
  out << "Future-cost-error " << format_double(r.future_cost_error) << '\n';
  out << "summation " << r.summation << '\n';
  if (!r.notes.empty()) out << "notes " << r.notes << '\n';
}

inline MetricsReport load_report(const std::string& path) {
  const auto lines = read_lines(path);
  expect_header(lines, "promo-report", 1, path);
  MetricsReport r;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto t = split_tokens(lines[i]);
    if (t.empty()) continue;
    if (t[0] == "model" && t.size() == 2) r.model_kind = std::string(t[1]);
    else if (t[0] == "grid" && t.size() >= 2)
      for (std::size_t j = 2; j < t.size(); ++j) r.grid_levels.push_back(parse_double(t[j]));
    else if (t[0] == "eq_tol" && t.size() == 4) {
      r.eq_tol = parse_double(t[1]);
      r.window_radius = parse_double(t[3]);
    } else if (t[0] == "samples" && t.size() == 4) {
      r.num_samples = static_cast<std::size_t>(parse_int(t[1]));
      r.num_users = static_cast<std::size_t>(parse_int(t[3]));
    } else if (t[0] == "LogLoss") r.logloss = parse_double(t[1]);
    else if (t[0] == "AUC-ROC") r.auc = parse_double(t[1]);
    else if (t[0] == "RPR") r.rpr = parse_double(t[1]);
    else if (t[0] == "EPR") r.epr = parse_double(t[1]);
    else if (t[0] == "MLSS") r.mlss = parse_double(t[1]);
    else if (t[0] == "Future-response") r.future_response = parse_double(t[1]);
    else if (t[0] == "Future-cost") r.future_cost = parse_double(t[1]);
    else if (t[0] == "Future-cost-error") r.future_cost_error = parse_double(t[1]);
    else if (t[0] == "summation" && t.size() == 2) r.summation = std::string(t[1]);
    else if (t[0] == "notes") r.notes = lines[i].substr(6);
  }
  return r;
}

// Companion CSV of per-user predicted curves for external plotting.
inline void save_curves_csv(const std::string& path, std::span<const Features> users,
                            const std::vector<std::vector<double>>& curves,
                            const IncentiveGrid& grid) {
  if (users.size() != curves.size())
    throw std::invalid_argument("save_curves_csv: users/curves size mismatch");
  auto out = open_for_write(path);
  out << "user,f1,f2,f3";
  for (const double d : grid.levels()) out << ",p_" << format_double(d);
  out << '\n';
  for (std::size_t i = 0; i < users.size(); ++i) {
    out << i << ',' << users[i][0] << ',' << users[i][1] << ',' << users[i][2];
    for (const double p : curves[i]) out << ',' << format_double(p);
    out << '\n';
  }
}

}  // namespace promo

#endif  // PROMO_METRICS_HPP_
