#ifndef PROMO_ALLOCATOR_HPP_
#define PROMO_ALLOCATOR_HPP_

// Budget-constrained assignment over precomputed response/cost coefficients.
//
// The per-user policy scores level j as f[i][j] - sum_k lambda_k g_k[i][j].
// For a single budget, spend(lambda) is a nonincreasing step function, so
// the dual is solved exactly by bisection; users whose argmax flips at the
// final lambda get an explicit two-point distribution so the expected spend
// meets the budget exactly.  Multiple budgets use projected subgradient
// ascent with a bisection polish when only one constraint ends up active,
// and a greedy mixing repair to restore feasibility.  Costs may be negative
// (the per-capita transform needs that).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "promo/errors.hpp"
#include "promo/grid.hpp"
#include "promo/rng.hpp"
#include "promo/synthdata.hpp"
#include "promo/textio.hpp"

namespace promo {

using CostModel = std::function<double(const Features&, double incentive)>;

inline CostModel face_value_cost() {
  return [](const Features&, double incentive) { return incentive; };
}

struct ResponseMatrix {
  IncentiveGrid grid;
  std::size_t num_users = 0;
  std::vector<double> f;               // num_users x D, row-major
  std::vector<std::vector<double>> g;  // K cost matrices, each num_users x D

  std::size_t num_levels() const { return grid.size(); }
  std::size_t num_costs() const { return g.size(); }
  double response(std::size_t i, std::size_t j) const { return f[i * num_levels() + j]; }
  double cost(std::size_t k, std::size_t i, std::size_t j) const {
    return g[k][i * num_levels() + j];
  }

  void validate() const {
    const std::size_t want = num_users * num_levels();
    if (f.size() != want) throw std::invalid_argument("ResponseMatrix: f size mismatch");
    if (g.empty()) throw std::invalid_argument("ResponseMatrix: need at least one cost matrix");
    for (const auto& gk : g)
      if (gk.size() != want) throw std::invalid_argument("ResponseMatrix: cost size mismatch");
    for (const double v : f)
      if (!(v >= 0.0 && v <= 1.0))
        throw std::invalid_argument("ResponseMatrix: responses must be in [0,1]");
    for (const auto& gk : g)
      for (const double v : gk)
        if (!std::isfinite(v))
          throw std::invalid_argument("ResponseMatrix: costs must be finite");
  }

  std::uint64_t checksum() const {
    std::uint64_t h = fnv1a64("promo-matrix");
    h = fnv1a64_doubles(grid.levels(), h);
    h = fnv1a64(std::to_string(num_users), h);
    h = fnv1a64_doubles(f, h);
    for (const auto& gk : g) h = fnv1a64_doubles(gk, h);
    return h;
  }
};

// f[i][j] = model prediction at grid level j; g_k from the supplied cost
// models (face value by default).  Model errors are rethrown with the user
// index attached.
template <class Model>
ResponseMatrix build_matrix(const Model& model, std::span<const Features> users,
                            std::vector<CostModel> cost_models = {}) {
  if (cost_models.empty()) cost_models.push_back(face_value_cost());
  ResponseMatrix m{model.grid(), users.size(), {}, {}};
  const std::size_t d = m.num_levels();
  m.f.resize(users.size() * d);
  m.g.assign(cost_models.size(), std::vector<double>(users.size() * d));
  for (std::size_t i = 0; i < users.size(); ++i) {
    try {
      const auto curve = model.predict_curve(users[i]);
      for (std::size_t j = 0; j < d; ++j) m.f[i * d + j] = curve[j];
      for (std::size_t k = 0; k < cost_models.size(); ++k)
        for (std::size_t j = 0; j < d; ++j)
          m.g[k][i * d + j] = cost_models[k](users[i], m.grid.level(j));
    } catch (const vocab_error& e) {
      throw vocab_error("user " + std::to_string(i) + ": " + e.what());
    }
  }
  m.validate();
  return m;
}

struct UserAssignment {
  int level = 0;      // primary level index
  double prob = 1.0;  // probability of `level`
  int level2 = -1;    // second level of a two-point mix, -1 when deterministic
  double prob2 = 0.0;

  bool mixed() const { return level2 >= 0; }
};

struct AllocationPlan {
  std::vector<UserAssignment> assignment;
  std::vector<double> lambda;
  std::vector<double> expected_spend;  // per constraint
  double expected_objective = 0.0;
  std::vector<double> user_cost;  // num_users x K, expected per-user cost
};

struct DualSolution {
  std::vector<double> lambda;
  bool converged = false;
  int iterations = 0;
  std::vector<double> spend_at_lambda;  // deterministic assignment at lambda
  double objective_at_lambda = 0.0;
  std::uint64_t matrix_checksum = 0;
  std::uint64_t model_checksum = 0;  // optional, attached by callers
};

namespace detail {

// Per-user argmax of f - lambda.g; ties prefer the cheaper (then lower) level.
inline int best_level(const ResponseMatrix& m, std::span<const double> lambda,
                      std::size_t i) {
  const std::size_t d = m.num_levels();
  int best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < d; ++j) {
    double score = m.response(i, j);
    for (std::size_t k = 0; k < lambda.size(); ++k) score -= lambda[k] * m.cost(k, i, j);
    if (score > best_score ||
        (score == best_score && m.cost(0, i, j) < m.cost(0, i, static_cast<std::size_t>(best))))
      best = static_cast<int>(j), best_score = score;
  }
  return best;
}

inline std::vector<int> assign_levels(const ResponseMatrix& m, std::span<const double> lambda) {
  std::vector<int> lv(m.num_users);
  for (std::size_t i = 0; i < m.num_users; ++i) lv[i] = best_level(m, lambda, i);
  return lv;
}

inline std::vector<double> spend_of_levels(const ResponseMatrix& m,
                                           std::span<const int> levels) {
  std::vector<double> s(m.num_costs(), 0.0);
  for (std::size_t i = 0; i < m.num_users; ++i)
    for (std::size_t k = 0; k < m.num_costs(); ++k)
      s[k] += m.cost(k, i, static_cast<std::size_t>(levels[i]));
  return s;
}

inline void finalize_plan(const ResponseMatrix& m, AllocationPlan& plan) {
  const std::size_t kk = m.num_costs();
  plan.expected_spend.assign(kk, 0.0);
  plan.expected_objective = 0.0;
  plan.user_cost.assign(m.num_users * kk, 0.0);
  for (std::size_t i = 0; i < m.num_users; ++i) {
    auto& a = plan.assignment[i];
    if (a.level2 >= 0 && a.prob2 <= 1e-15) {  // degenerate mix collapses
      a.level2 = -1;
      a.prob = 1.0;
      a.prob2 = 0.0;
    }
    plan.expected_objective += a.prob * m.response(i, a.level);
    if (a.mixed()) plan.expected_objective += a.prob2 * m.response(i, a.level2);
    for (std::size_t k = 0; k < kk; ++k) {
      double c = a.prob * m.cost(k, i, a.level);
      if (a.mixed()) c += a.prob2 * m.cost(k, i, a.level2);
      plan.user_cost[i * kk + k] = c;
      plan.expected_spend[k] += c;
    }
  }
}

inline AllocationPlan plan_from_levels(const ResponseMatrix& m, std::span<const int> levels,
                                       std::vector<double> lambda) {
  AllocationPlan plan;
  plan.lambda = std::move(lambda);
  plan.assignment.resize(m.num_users);
  for (std::size_t i = 0; i < m.num_users; ++i) plan.assignment[i].level = levels[i];
  detail::finalize_plan(m, plan);
  return plan;
}

inline double min_possible_spend(const ResponseMatrix& m, std::size_t k) {
  double total = 0.0;
  for (std::size_t i = 0; i < m.num_users; ++i) {
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m.num_levels(); ++j) lo = std::min(lo, m.cost(k, i, j));
    total += lo;
  }
  return total;
}

constexpr double kFeasTol = 1e-9;

inline bool plan_feasible(std::span<const double> spend, std::span<const double> budgets) {
  for (std::size_t k = 0; k < budgets.size(); ++k)
    if (spend[k] > budgets[k] + kFeasTol * std::max(1.0, std::abs(budgets[k]))) return false;
  return true;
}

// Scalar-dual bisection on constraint k with the other multipliers at zero.
inline std::pair<DualSolution, AllocationPlan> solve_bisection(const ResponseMatrix& m,
                                                               std::size_t k, double budget,
                                                               double tol_rel) {
  const double min_spend = min_possible_spend(m, k);
  if (budget < min_spend - kFeasTol * std::max(1.0, std::abs(min_spend)))
    throw infeasible_error("budget " + std::to_string(budget) +
                               " below minimum possible spend " + std::to_string(min_spend),
                           min_spend);

  std::vector<double> lambda(m.num_costs(), 0.0);
  DualSolution dual;
  dual.lambda = lambda;
  dual.matrix_checksum = m.checksum();

  auto levels = assign_levels(m, lambda);
  auto spend = spend_of_levels(m, levels);
  if (spend[k] <= budget + kFeasTol * std::max(1.0, std::abs(budget))) {
    dual.converged = true;
    dual.spend_at_lambda = spend;
    auto plan = plan_from_levels(m, levels, lambda);
    dual.objective_at_lambda = plan.expected_objective;
    return {dual, plan};
  }

  // bracket: spend(lo) > budget >= spend(hi)
  double lo = 0.0, hi = 1.0;
  auto spend_at = [&](double lam) {
    lambda[k] = lam;
    return spend_of_levels(m, assign_levels(m, lambda))[k];
  };
  int iters = 0;
  while (spend_at(hi) > budget) {
    lo = hi;
    hi *= 2.0;
    if (++iters > 80)
      throw std::runtime_error("dual bisection: failed to bracket lambda (hi=" +
                               std::to_string(hi) + ", spend=" +
                               std::to_string(spend_at(hi)) + ", budget=" +
                               std::to_string(budget) + ")");
  }
  for (int it = 0; it < 200; ++it) {
    ++iters;
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;  // interval at float resolution
    if (spend_at(mid) > budget)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-12 * std::max(1.0, hi)) break;
    if (budget - spend_at(hi) < tol_rel * std::max(1.0, std::abs(budget))) break;
  }

  lambda[k] = hi;
  auto hi_levels = assign_levels(m, lambda);
  auto hi_spend = spend_of_levels(m, hi_levels);
  lambda[k] = lo;
  const auto lo_levels = assign_levels(m, lambda);
  lambda[k] = hi;

  AllocationPlan plan = plan_from_levels(m, hi_levels, lambda);
  dual.lambda = lambda;
  dual.converged = true;
  dual.iterations = iters;
  dual.spend_at_lambda = hi_spend;
  dual.objective_at_lambda = plan.expected_objective;

  // Boundary users: argmax flips inside the final interval.  Upgrading them
  // (fully, then one fractionally) spends the remaining budget exactly; at
  // the dual optimum all flips have equal marginal rate, so order only
  // matters up to the interval width.
  struct Flip {
    std::size_t user;
    double dg, df, ratio;
  };
  std::vector<Flip> flips;
  for (std::size_t i = 0; i < m.num_users; ++i) {
    if (lo_levels[i] == hi_levels[i]) continue;
    const double dg = m.cost(k, i, static_cast<std::size_t>(lo_levels[i])) -
                      m.cost(k, i, static_cast<std::size_t>(hi_levels[i]));
    const double df = m.response(i, static_cast<std::size_t>(lo_levels[i])) -
                      m.response(i, static_cast<std::size_t>(hi_levels[i]));
    if (dg <= 0.0) continue;
    flips.push_back({i, dg, df, df / dg});
  }
  std::sort(flips.begin(), flips.end(), [](const Flip& a, const Flip& b) {
    return a.ratio != b.ratio ? a.ratio > b.ratio : a.user < b.user;
  });
  double remaining = budget - hi_spend[k];
  for (const auto& fl : flips) {
    if (remaining <= kFeasTol) break;
    const double theta = std::min(1.0, remaining / fl.dg);
    auto& a = plan.assignment[fl.user];
    if (theta >= 1.0 - 1e-15) {
      a.level = lo_levels[fl.user];
    } else {
      a.level2 = lo_levels[fl.user];
      a.prob2 = theta;
      a.prob = 1.0 - theta;
    }
    remaining -= theta * fl.dg;
  }
  detail::finalize_plan(m, plan);
  return {dual, plan};
}

}  // namespace detail

// Deterministic per-user policy at fixed multipliers.
inline AllocationPlan assign_given_lambda(const ResponseMatrix& m,
                                          std::span<const double> lambda) {
  if (lambda.size() != m.num_costs())
    throw std::invalid_argument("assign_given_lambda: lambda size mismatch");
  for (const double l : lambda)
    if (l < 0.0) throw std::invalid_argument("assign_given_lambda: lambda must be >= 0");
  return detail::plan_from_levels(m, detail::assign_levels(m, lambda),
                                  std::vector<double>(lambda.begin(), lambda.end()));
}

// Single-budget solve by exact dual bisection.
inline std::pair<DualSolution, AllocationPlan> solve_dual_single(const ResponseMatrix& m,
                                                                 double budget,
                                                                 double tol_rel = 1e-6) {
  if (m.num_costs() != 1)
    throw std::invalid_argument("solve_dual_single expects one cost matrix; use solve_dual_multi");
  return detail::solve_bisection(m, 0, budget, tol_rel);
}

struct MultiDualOptions {
  int max_iterations = 5000;
  double tol_rel = 1e-6;
};

// Multi-constraint solve: projected subgradient on lambda, keeping the best
// feasible plan seen; if exactly one constraint is active the scalar
// bisection refines it.  The returned plan satisfies every budget (mixing
// repair), or an error reports the best lambda and violations.
inline std::pair<DualSolution, AllocationPlan> solve_dual_multi(
    const ResponseMatrix& m, std::span<const double> budgets, MultiDualOptions opts = {}) {
  const std::size_t kk = m.num_costs();
  if (budgets.size() != kk)
    throw std::invalid_argument("solve_dual_multi: budget count must match cost matrices");
  for (std::size_t k = 0; k < kk; ++k) {
    const double ms = detail::min_possible_spend(m, k);
    if (budgets[k] < ms - detail::kFeasTol * std::max(1.0, std::abs(ms)))
      throw infeasible_error("budget " + std::to_string(budgets[k]) + " for constraint " +
                                 std::to_string(k) + " below minimum possible spend " +
                                 std::to_string(ms),
                             ms);
  }
  if (kk == 1) return detail::solve_bisection(m, 0, budgets[0], opts.tol_rel);

  double g_max = 0.0;
  for (const auto& gk : m.g)
    for (const double v : gk) g_max = std::max(g_max, std::abs(v));
  const double eta0 = g_max > 0.0 ? 1.0 / g_max : 1.0;

  std::vector<double> lambda(kk, 0.0);
  bool have_best = false;
  AllocationPlan best_plan;
  std::vector<double> best_lambda = lambda;
  double least_violation = std::numeric_limits<double>::infinity();
  std::vector<double> least_violating_lambda = lambda;
  std::vector<double> violations(kk, 0.0);

  int t = 1;
  for (; t <= opts.max_iterations; ++t) {
    const auto levels = detail::assign_levels(m, lambda);
    const auto spend = detail::spend_of_levels(m, levels);
    if (detail::plan_feasible(spend, budgets)) {
      auto plan = detail::plan_from_levels(m, levels, lambda);
      if (!have_best || plan.expected_objective > best_plan.expected_objective) {
        best_plan = std::move(plan);
        best_lambda = lambda;
        have_best = true;
      }
    } else {
      double v = 0.0;
      for (std::size_t k = 0; k < kk; ++k)
        v = std::max(v, (spend[k] - budgets[k]) / std::max(1.0, std::abs(budgets[k])));
      if (v < least_violation) {
        least_violation = v;
        least_violating_lambda = lambda;
        for (std::size_t k = 0; k < kk; ++k) violations[k] = spend[k] - budgets[k];
      }
    }
    const double eta = eta0 / std::sqrt(static_cast<double>(t));
    for (std::size_t k = 0; k < kk; ++k)
      lambda[k] = std::max(0.0, lambda[k] + eta * (spend[k] - budgets[k]));
  }

  // Polish: with one active constraint and the rest slack at zero price, the
  // scalar dual is exact for the whole problem.
  const std::vector<double>& probe = have_best ? best_lambda : lambda;
  std::size_t active = kk;
  int n_active = 0;
  for (std::size_t k = 0; k < kk; ++k)
    if (probe[k] > 1e-10) {
      active = k;
      ++n_active;
    }
  if (n_active <= 1) {
    try {
      auto [dual1, plan1] =
          detail::solve_bisection(m, n_active == 1 ? active : 0, budgets[n_active == 1 ? active : 0],
                                  opts.tol_rel);
      if (detail::plan_feasible(plan1.expected_spend, budgets)) {
        if (!have_best || plan1.expected_objective >= best_plan.expected_objective) {
          dual1.iterations += t - 1;
          dual1.lambda.resize(kk);
          plan1.lambda = dual1.lambda;
          return {dual1, plan1};
        }
      }
    } catch (const infeasible_error&) {
      // fall through to the subgradient result
    }
  }

  if (!have_best) {
    std::string msg = "no feasible plan within " + std::to_string(opts.max_iterations) +
                      " iterations; best lambda = [";
    for (std::size_t k = 0; k < kk; ++k)
      msg += (k ? " " : "") + format_double(least_violating_lambda[k]);
    msg += "], violations = [";
    for (std::size_t k = 0; k < kk; ++k) msg += (k ? " " : "") + format_double(violations[k]);
    msg += "]";
    throw infeasible_error(msg, least_violation);
  }

  // Spend leftover budget on the binding constraints via the same two-point
  // mixing device, one constraint at a time (order = constraint index).
  // Upgrades only consider moves that keep every other constraint feasible.
  AllocationPlan plan = best_plan;
  for (std::size_t k = 0; k < kk; ++k) {
    double remaining = budgets[k] - plan.expected_spend[k];
    if (remaining <= detail::kFeasTol) continue;
    struct Move {
      std::size_t user;
      int to;
      double dg, df, ratio;
    };
    std::vector<Move> moves;
    for (std::size_t i = 0; i < m.num_users; ++i) {
      const auto& a = plan.assignment[i];
      if (a.mixed()) continue;
      const auto cur = static_cast<std::size_t>(a.level);
      double best_ratio = 0.0;
      Move mv{i, -1, 0.0, 0.0, 0.0};
      for (std::size_t j = 0; j < m.num_levels(); ++j) {
        const double dg = m.cost(k, i, j) - m.cost(k, i, cur);
        const double df = m.response(i, j) - m.response(i, cur);
        if (dg <= 0.0 || df <= 0.0) continue;
        const double r = df / dg;
        if (r > best_ratio) {
          best_ratio = r;
          mv = {i, static_cast<int>(j), dg, df, r};
        }
      }
      if (mv.to >= 0) moves.push_back(mv);
    }
    std::sort(moves.begin(), moves.end(), [](const Move& a, const Move& b) {
      return a.ratio != b.ratio ? a.ratio > b.ratio : a.user < b.user;
    });
    for (const auto& mv : moves) {
      if (remaining <= detail::kFeasTol) break;
      // cap theta so no other constraint is violated by this move
      double theta = std::min(1.0, remaining / mv.dg);
      for (std::size_t k2 = 0; k2 < kk; ++k2) {
        if (k2 == k) continue;
        const double dg2 =
            m.cost(k2, mv.user, static_cast<std::size_t>(mv.to)) -
            m.cost(k2, mv.user, static_cast<std::size_t>(plan.assignment[mv.user].level));
        if (dg2 <= 0.0) continue;
        const double room = budgets[k2] - plan.expected_spend[k2];
        theta = std::min(theta, std::max(0.0, room / dg2));
      }
      if (theta <= 1e-15) continue;
      auto& a = plan.assignment[mv.user];
      if (theta >= 1.0 - 1e-15) {
        a.level = mv.to;
      } else {
        a.level2 = mv.to;
        a.prob2 = theta;
        a.prob = 1.0 - theta;
      }
      detail::finalize_plan(m, plan);
      remaining = budgets[k] - plan.expected_spend[k];
    }
  }
  detail::finalize_plan(m, plan);

  DualSolution dual;
  dual.lambda = best_lambda;
  dual.converged = have_best;
  dual.iterations = t - 1;
  const auto lv = detail::assign_levels(m, best_lambda);
  dual.spend_at_lambda = detail::spend_of_levels(m, lv);
  dual.objective_at_lambda = plan.expected_objective;
  dual.matrix_checksum = m.checksum();
  return {dual, plan};
}

// Per-capita budgets: shift costs by b_k, solve against zero budgets, then
// report the plan in original cost units.
inline std::pair<DualSolution, AllocationPlan> solve_per_capita(
    const ResponseMatrix& m, std::span<const double> per_capita, MultiDualOptions opts = {}) {
  if (per_capita.size() != m.num_costs())
    throw std::invalid_argument("solve_per_capita: need one bound per cost matrix");
  ResponseMatrix shifted = m;
  for (std::size_t k = 0; k < m.num_costs(); ++k)
    for (auto& v : shifted.g[k]) v -= per_capita[k];
  const std::vector<double> zeros(m.num_costs(), 0.0);
  auto [dual, plan] = solve_dual_multi(shifted, zeros, opts);
  // translate diagnostics and spends back to original units
  AllocationPlan out = std::move(plan);
  out.lambda = dual.lambda;
  detail::finalize_plan(m, out);
  dual.matrix_checksum = m.checksum();
  for (std::size_t k = 0; k < m.num_costs(); ++k)
    dual.spend_at_lambda[k] += per_capita[k] * static_cast<double>(m.num_users);
  dual.objective_at_lambda = out.expected_objective;
  return {dual, out};
}

// Exact LP oracle by vertex enumeration (test-scale only: N*D <= 40, K <= 2).
// Every vertex of Eq-style assignment polytopes has at most K "extra"
// positive variables: all-integral, one user mixing two levels (one budget
// tight), one user mixing three levels or two users mixing two levels each
// (both budgets tight).
struct ExactSolution {
  AllocationPlan plan;
  double lp_objective = 0.0;
  double ilp_objective = 0.0;  // best all-integral assignment
};

inline ExactSolution solve_exact_small(const ResponseMatrix& m,
                                       std::span<const double> budgets) {
  const std::size_t n = m.num_users, d = m.num_levels(), kk = m.num_costs();
  if (n * d > 40) throw std::invalid_argument("solve_exact_small: instance above N*D <= 40");
  if (budgets.size() != kk || kk < 1 || kk > 2)
    throw std::invalid_argument("solve_exact_small: supports K in {1,2}");

  ExactSolution sol;
  sol.lp_objective = -std::numeric_limits<double>::infinity();
  sol.ilp_objective = -std::numeric_limits<double>::infinity();
  if (n == 0) {
    sol.lp_objective = sol.ilp_objective = 0.0;
    sol.plan.lambda.assign(kk, 0.0);
    detail::finalize_plan(m, sol.plan);
    return sol;
  }

  std::vector<int> levels(n, 0);
  std::vector<UserAssignment> best_assign;

  const auto feasible = [&](const std::array<double, 2>& spend) {
    for (std::size_t k = 0; k < kk; ++k)
      if (spend[k] > budgets[k] + detail::kFeasTol * std::max(1.0, std::abs(budgets[k])))
        return false;
    return true;
  };

  // pass 1: all-integral assignments
  const auto integral_rec = [&](auto&& self, std::size_t i, double obj,
                                std::array<double, 2> spend) -> void {
    if (i == n) {
      if (!feasible(spend)) return;
      if (obj > sol.ilp_objective) sol.ilp_objective = obj;
      if (obj > sol.lp_objective) {
        sol.lp_objective = obj;
        best_assign.assign(n, {});
        for (std::size_t u = 0; u < n; ++u) best_assign[u].level = levels[u];
      }
      return;
    }
    for (std::size_t j = 0; j < d; ++j) {
      levels[i] = static_cast<int>(j);
      auto s = spend;
      for (std::size_t k = 0; k < kk; ++k) s[k] += m.cost(k, i, j);
      self(self, i + 1, obj + m.response(i, j), s);
    }
  };
  integral_rec(integral_rec, 0, 0.0, {0.0, 0.0});

  // candidate fractional vertex: others fixed at `levels`, `frac` mixing
  const auto try_mix = [&](std::size_t frac, std::span<const int> mix_levels,
                           std::span<const double> mix_probs, double others_obj,
                           const std::array<double, 2>& others_spend) {
    double obj = others_obj;
    std::array<double, 2> spend = others_spend;
    for (std::size_t t2 = 0; t2 < mix_levels.size(); ++t2) {
      obj += mix_probs[t2] * m.response(frac, static_cast<std::size_t>(mix_levels[t2]));
      for (std::size_t k = 0; k < kk; ++k)
        spend[k] += mix_probs[t2] * m.cost(k, frac, static_cast<std::size_t>(mix_levels[t2]));
    }
    if (!feasible(spend) || obj <= sol.lp_objective) return;
    sol.lp_objective = obj;
    best_assign.assign(n, {});
    for (std::size_t u = 0; u < n; ++u) best_assign[u].level = levels[u];
    auto& a = best_assign[frac];
    a.level = mix_levels[0];
    a.prob = mix_probs[0];
    if (mix_levels.size() > 1 && mix_probs[1] > 0.0) {
      a.level2 = mix_levels[1];
      a.prob2 = mix_probs[1];
    }
  };

  // pass 2: one fractional user, one budget tight
  for (std::size_t frac = 0; frac < n; ++frac) {
    // enumerate all others then evaluate mix pairs at the leaf
    const auto others = [&](auto&& self, std::size_t i, double obj,
                            std::array<double, 2> spend) -> void {
      if (i == frac) {
        self(self, i + 1, obj, spend);
        return;
      }
      if (i >= n) {
        for (std::size_t k_t = 0; k_t < kk; ++k_t) {  // which budget is tight
          for (std::size_t j1 = 0; j1 < d; ++j1) {
            for (std::size_t j2 = 0; j2 < d; ++j2) {
              if (j1 == j2) continue;
              const double g1 = m.cost(k_t, frac, j1), g2 = m.cost(k_t, frac, j2);
              if (std::abs(g2 - g1) < 1e-14) continue;
              const double theta = (budgets[k_t] - spend[k_t] - g1) / (g2 - g1);
              if (theta <= 1e-12 || theta >= 1.0 - 1e-12) continue;
              const int lvs[2] = {static_cast<int>(j1), static_cast<int>(j2)};
              const double pr[2] = {1.0 - theta, theta};
              try_mix(frac, lvs, pr, obj, spend);
            }
          }
        }
        return;
      }
      for (std::size_t j = 0; j < d; ++j) {
        levels[i] = static_cast<int>(j);
        auto s = spend;
        for (std::size_t k = 0; k < kk; ++k) s[k] += m.cost(k, i, j);
        self(self, i + 1, obj + m.response(i, j), s);
      }
    };
    others(others, 0, 0.0, {0.0, 0.0});
  }

  // passes 3 and 4 only exist with two budgets
  if (kk == 2) {
    // one user mixing three levels, both budgets tight
    for (std::size_t frac = 0; frac < n; ++frac) {
      const auto others = [&](auto&& self, std::size_t i, double obj,
                              std::array<double, 2> spend) -> void {
        if (i == frac) {
          self(self, i + 1, obj, spend);
          return;
        }
        if (i >= n) {
          for (std::size_t j1 = 0; j1 < d; ++j1)
            for (std::size_t j2 = j1 + 1; j2 < d; ++j2)
              for (std::size_t j3 = j2 + 1; j3 < d; ++j3) {
                // theta1 + theta2 + theta3 = 1, both budgets tight
                const double a11 = m.cost(0, frac, j2) - m.cost(0, frac, j1);
                const double a12 = m.cost(0, frac, j3) - m.cost(0, frac, j1);
                const double a21 = m.cost(1, frac, j2) - m.cost(1, frac, j1);
                const double a22 = m.cost(1, frac, j3) - m.cost(1, frac, j1);
                const double b1 = budgets[0] - spend[0] - m.cost(0, frac, j1);
                const double b2 = budgets[1] - spend[1] - m.cost(1, frac, j1);
                const double det = a11 * a22 - a12 * a21;
                if (std::abs(det) < 1e-12) continue;
                const double t2 = (b1 * a22 - a12 * b2) / det;
                const double t3 = (a11 * b2 - b1 * a21) / det;
                const double t1 = 1.0 - t2 - t3;
                if (t1 <= 1e-12 || t2 <= 1e-12 || t3 <= 1e-12) continue;
                // a vertex needs at most 2 extra positives; 3-level support
                // means both budgets tight, which this construction enforces
                const int lvs[3] = {static_cast<int>(j1), static_cast<int>(j2),
                                    static_cast<int>(j3)};
                const double pr[3] = {t1, t2, t3};
                double obj2 = obj;
                std::array<double, 2> sp = spend;
                for (int q = 0; q < 3; ++q) {
                  obj2 += pr[q] * m.response(frac, static_cast<std::size_t>(lvs[q]));
                  for (std::size_t k = 0; k < 2; ++k)
                    sp[k] += pr[q] * m.cost(k, frac, static_cast<std::size_t>(lvs[q]));
                }
                if (!feasible(sp) || obj2 <= sol.lp_objective) continue;
                sol.lp_objective = obj2;
                best_assign.assign(n, {});
                for (std::size_t u = 0; u < n; ++u) best_assign[u].level = levels[u];
                // record the two largest-probability levels; three-point
                // supports are vanishing-measure and only occur in the oracle
                auto& a = best_assign[frac];
                a.level = lvs[0];
                a.prob = pr[0];
                a.level2 = lvs[1];
                a.prob2 = pr[1];
              }
          return;
        }
        for (std::size_t j = 0; j < d; ++j) {
          levels[i] = static_cast<int>(j);
          auto s = spend;
          for (std::size_t k = 0; k < kk; ++k) s[k] += m.cost(k, i, j);
          self(self, i + 1, obj + m.response(i, j), s);
        }
      };
      others(others, 0, 0.0, {0.0, 0.0});
    }

    // two users mixing two levels each, both budgets tight
    for (std::size_t fa = 0; fa < n; ++fa) {
      for (std::size_t fb = fa + 1; fb < n; ++fb) {
        const auto others = [&](auto&& self, std::size_t i, double obj,
                                std::array<double, 2> spend) -> void {
          if (i == fa || i == fb) {
            self(self, i + 1, obj, spend);
            return;
          }
          if (i >= n) {
            for (std::size_t a1 = 0; a1 < d; ++a1)
              for (std::size_t a2 = 0; a2 < d; ++a2) {
                if (a1 == a2) continue;
                for (std::size_t b1 = 0; b1 < d; ++b1)
                  for (std::size_t b2 = 0; b2 < d; ++b2) {
                    if (b1 == b2) continue;
                    const double m11 = m.cost(0, fa, a2) - m.cost(0, fa, a1);
                    const double m12 = m.cost(0, fb, b2) - m.cost(0, fb, b1);
                    const double m21 = m.cost(1, fa, a2) - m.cost(1, fa, a1);
                    const double m22 = m.cost(1, fb, b2) - m.cost(1, fb, b1);
                    const double r1 =
                        budgets[0] - spend[0] - m.cost(0, fa, a1) - m.cost(0, fb, b1);
                    const double r2 =
                        budgets[1] - spend[1] - m.cost(1, fa, a1) - m.cost(1, fb, b1);
                    const double det = m11 * m22 - m12 * m21;
                    if (std::abs(det) < 1e-12) continue;
                    const double ta = (r1 * m22 - m12 * r2) / det;
                    const double tb = (m11 * r2 - r1 * m21) / det;
                    if (ta <= 1e-12 || ta >= 1.0 - 1e-12 || tb <= 1e-12 ||
                        tb >= 1.0 - 1e-12)
                      continue;
                    double obj2 = obj;
                    std::array<double, 2> sp = spend;
                    obj2 += (1.0 - ta) * m.response(fa, a1) + ta * m.response(fa, a2);
                    obj2 += (1.0 - tb) * m.response(fb, b1) + tb * m.response(fb, b2);
                    for (std::size_t k = 0; k < 2; ++k) {
                      sp[k] += (1.0 - ta) * m.cost(k, fa, a1) + ta * m.cost(k, fa, a2);
                      sp[k] += (1.0 - tb) * m.cost(k, fb, b1) + tb * m.cost(k, fb, b2);
                    }
                    if (!feasible(sp) || obj2 <= sol.lp_objective) continue;
                    sol.lp_objective = obj2;
                    best_assign.assign(n, {});
                    for (std::size_t u = 0; u < n; ++u) best_assign[u].level = levels[u];
                    best_assign[fa] = {static_cast<int>(a1), 1.0 - ta, static_cast<int>(a2),
                                       ta};
                    best_assign[fb] = {static_cast<int>(b1), 1.0 - tb, static_cast<int>(b2),
                                       tb};
                  }
              }
            return;
          }
          for (std::size_t j = 0; j < d; ++j) {
            levels[i] = static_cast<int>(j);
            auto s = spend;
            for (std::size_t k = 0; k < kk; ++k) s[k] += m.cost(k, i, j);
            self(self, i + 1, obj + m.response(i, j), s);
          }
        };
        others(others, 0, 0.0, {0.0, 0.0});
      }
    }
  }

  if (best_assign.empty())
    throw infeasible_error("solve_exact_small: no feasible assignment", 0.0);
  sol.plan.assignment = best_assign;
  sol.plan.lambda.assign(kk, 0.0);
  detail::finalize_plan(m, sol.plan);
  return sol;
}

// Applies the per-user policy to a user outside the solved batch, computing
// its response/cost row on the fly.  Pure function of (lambda, x).
template <class Model>
std::size_t online_decide(const DualSolution& dual, const Model& model, const Features& x,
                          std::vector<CostModel> cost_models = {}) {
  if (cost_models.empty()) cost_models.push_back(face_value_cost());
  if (dual.lambda.size() != cost_models.size())
    throw std::invalid_argument("online_decide: lambda size must match cost models");
  const auto curve = model.predict_curve(x);
  const auto& grid = model.grid();
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  double best_cost = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < grid.size(); ++j) {
    double score = curve[j];
    const double c0 = cost_models[0](x, grid.level(j));
    score -= dual.lambda[0] * c0;
    for (std::size_t k = 1; k < cost_models.size(); ++k)
      score -= dual.lambda[k] * cost_models[k](x, grid.level(j));
    if (score > best_score || (score == best_score && c0 < best_cost)) {
      best = j;
      best_score = score;
      best_cost = c0;
    }
  }
  return best;
}

struct SampledPlan {
  std::vector<int> levels;            // one concrete level index per user
  std::vector<double> realized_spend; // per constraint
  double realized_objective = 0.0;    // sum of f at the sampled levels
};

// Draws concrete levels from each two-point distribution.  All-deterministic
// plans do not consume randomness at all.
inline SampledPlan sample_plan(const AllocationPlan& plan, const ResponseMatrix& m,
                               std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x73616d70ULL));
  SampledPlan out;
  out.levels.resize(plan.assignment.size());
  out.realized_spend.assign(m.num_costs(), 0.0);
  for (std::size_t i = 0; i < plan.assignment.size(); ++i) {
    const auto& a = plan.assignment[i];
    int lv = a.level;
    if (a.mixed() && rng.uniform() < a.prob2) lv = a.level2;
    out.levels[i] = lv;
    out.realized_objective += m.response(i, static_cast<std::size_t>(lv));
    for (std::size_t k = 0; k < m.num_costs(); ++k)
      out.realized_spend[k] += m.cost(k, i, static_cast<std::size_t>(lv));
  }
  return out;
}

// --- serialization ---------------------------------------------------------

inline void save_plan(const std::string& path, const AllocationPlan& plan) {
  auto out = open_for_write(path);
  out << "promo-plan v1\n";
  out << "lambda " << plan.lambda.size();
  for (const double l : plan.lambda) out << ' ' << format_double(l);
  out << '\n';
  out << "expected_objective " << format_double(plan.expected_objective) << '\n';
  out << "expected_spend";
  for (const double s : plan.expected_spend) out << ' ' << format_double(s);
  out << '\n';
  const std::size_t kk = plan.expected_spend.size();
  for (std::size_t i = 0; i < plan.assignment.size(); ++i) {
    const auto& a = plan.assignment[i];
    out << "user " << i;
    if (a.mixed())
      out << " mix " << a.level << ' ' << format_double(a.prob) << ' ' << a.level2 << ' '
          << format_double(a.prob2);
    else
      out << " level " << a.level;
    out << " cost";
    for (std::size_t k = 0; k < kk; ++k) out << ' ' << format_double(plan.user_cost[i * kk + k]);
    out << '\n';
  }
}

inline AllocationPlan load_plan(const std::string& path) {
  const auto lines = read_lines(path);
  expect_header(lines, "promo-plan", 1, path);
  AllocationPlan plan;
  std::size_t i = 1;
  const auto lam_t = split_tokens(lines.at(i++));
  if (lam_t.size() < 2 || lam_t[0] != "lambda") throw incompat_error("bad plan lambda line");
  const auto kk = static_cast<std::size_t>(parse_int(lam_t[1]));
  if (lam_t.size() != kk + 2) throw incompat_error("plan lambda length mismatch");
  for (std::size_t k = 0; k < kk; ++k) plan.lambda.push_back(parse_double(lam_t[k + 2]));
  const auto obj_t = split_tokens(lines.at(i++));
  if (obj_t.size() != 2 || obj_t[0] != "expected_objective")
    throw incompat_error("bad plan objective line");
  plan.expected_objective = parse_double(obj_t[1]);
  const auto sp_t = split_tokens(lines.at(i++));
  if (sp_t.size() != kk + 1 || sp_t[0] != "expected_spend")
    throw incompat_error("bad plan spend line");
  for (std::size_t k = 0; k < kk; ++k) plan.expected_spend.push_back(parse_double(sp_t[k + 1]));
  for (; i < lines.size(); ++i) {
    const auto t = split_tokens(lines[i]);
    if (t.size() < 3 || t[0] != "user") throw incompat_error("bad plan user line: " + lines[i]);
    UserAssignment a;
    std::size_t cost_at;
    if (t[2] == "level") {
      a.level = static_cast<int>(parse_int(t[3]));
      cost_at = 4;
    } else if (t[2] == "mix") {
      a.level = static_cast<int>(parse_int(t[3]));
      a.prob = parse_double(t[4]);
      a.level2 = static_cast<int>(parse_int(t[5]));
      a.prob2 = parse_double(t[6]);
      cost_at = 7;
    } else {
      throw incompat_error("bad plan user line: " + lines[i]);
    }
    if (t.size() != cost_at + 1 + kk || t[cost_at] != "cost")
      throw incompat_error("bad plan cost fields: " + lines[i]);
    for (std::size_t k = 0; k < kk; ++k)
      plan.user_cost.push_back(parse_double(t[cost_at + 1 + k]));
    plan.assignment.push_back(a);
  }
  return plan;
}

inline void save_dual(const std::string& path, const DualSolution& dual) {
  auto out = open_for_write(path);
  out << "promo-dual v1\n";
  out << "lambda " << dual.lambda.size();
  for (const double l : dual.lambda) out << ' ' << format_double(l);
  out << '\n';
  out << "converged " << (dual.converged ? 1 : 0) << " iterations " << dual.iterations << '\n';
  out << "spend";
  for (const double s : dual.spend_at_lambda) out << ' ' << format_double(s);
  out << '\n';
  out << "objective " << format_double(dual.objective_at_lambda) << '\n';
  out << "matrix_checksum " << dual.matrix_checksum << '\n';
  out << "model_checksum " << dual.model_checksum << '\n';
}

inline DualSolution load_dual(const std::string& path) {
  const auto lines = read_lines(path);
  expect_header(lines, "promo-dual", 1, path);
  DualSolution d;
  std::size_t i = 1;
  const auto lam_t = split_tokens(lines.at(i++));
  if (lam_t.size() < 2 || lam_t[0] != "lambda") throw incompat_error("bad dual lambda line");
  const auto kk = static_cast<std::size_t>(parse_int(lam_t[1]));
  for (std::size_t k = 0; k < kk; ++k) d.lambda.push_back(parse_double(lam_t[k + 2]));
  const auto cv_t = split_tokens(lines.at(i++));
  if (cv_t.size() != 4 || cv_t[0] != "converged") throw incompat_error("bad dual converged line");
  d.converged = parse_int(cv_t[1]) != 0;
  d.iterations = static_cast<int>(parse_int(cv_t[3]));
  const auto sp_t = split_tokens(lines.at(i++));
  if (sp_t.empty() || sp_t[0] != "spend") throw incompat_error("bad dual spend line");
  for (std::size_t k = 1; k < sp_t.size(); ++k) d.spend_at_lambda.push_back(parse_double(sp_t[k]));
  const auto ob_t = split_tokens(lines.at(i++));
  if (ob_t.size() != 2 || ob_t[0] != "objective") throw incompat_error("bad dual objective line");
  d.objective_at_lambda = parse_double(ob_t[1]);
  const auto mc_t = split_tokens(lines.at(i++));
  if (mc_t.size() != 2 || mc_t[0] != "matrix_checksum")
    throw incompat_error("bad dual matrix checksum line");
  d.matrix_checksum = static_cast<std::uint64_t>(parse_int(mc_t[1]));
  const auto mo_t = split_tokens(lines.at(i++));
  if (mo_t.size() != 2 || mo_t[0] != "model_checksum")
    throw incompat_error("bad dual model checksum line");
  d.model_checksum = static_cast<std::uint64_t>(parse_int(mo_t[1]));
  return d;
}

}  // namespace promo

#endif  // PROMO_ALLOCATOR_HPP_
