#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "promo/allocator.hpp"
#include "promo/dipn.hpp"
#include "promo/rng.hpp"

using namespace promo;

namespace {

ResponseMatrix make_matrix(const std::vector<std::vector<double>>& f,
                           const std::vector<std::vector<std::vector<double>>>& costs,
                           std::vector<double> levels = {}) {
  const std::size_t n = f.size();
  const std::size_t d = f.front().size();
  if (levels.empty())
    for (std::size_t j = 0; j < d; ++j) levels.push_back(static_cast<double>(j) * 10.0);
  ResponseMatrix m{IncentiveGrid(levels), n, {}, {}};
  for (const auto& row : f) m.f.insert(m.f.end(), row.begin(), row.end());
  for (const auto& ck : costs) {
    std::vector<double> flat;
    for (const auto& row : ck) flat.insert(flat.end(), row.begin(), row.end());
    m.g.push_back(std::move(flat));
  }
  m.validate();
  return m;
}

// random instance with face-value costs on a strictly increasing level set
ResponseMatrix random_instance(Rng& rng, std::size_t max_n = 8, std::size_t max_d = 5,
                               bool random_costs = false, std::size_t n_costs = 1) {
  const auto n = static_cast<std::size_t>(rng.uniform_int(1, static_cast<int>(max_n)));
  const auto d = static_cast<std::size_t>(rng.uniform_int(2, static_cast<int>(max_d)));
  std::vector<double> levels;
  double lv = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    levels.push_back(lv);
    lv += rng.uniform(1.0, 10.0);
  }
  ResponseMatrix m{IncentiveGrid(levels), n, {}, {}};
  m.f.resize(n * d);
  for (auto& v : m.f) v = rng.uniform(0.0, 1.0);
  for (std::size_t k = 0; k < n_costs; ++k) {
    std::vector<double> g(n * d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j)
        g[i * d + j] = random_costs ? rng.uniform(0.0, 10.0) : levels[j];
    m.g.push_back(std::move(g));
  }
  m.validate();
  return m;
}

double budget_between(Rng& rng, const ResponseMatrix& m, std::size_t k) {
  double lo = 0.0, hi = 0.0;
  for (std::size_t i = 0; i < m.num_users; ++i) {
    double mn = m.cost(k, i, 0), mx = m.cost(k, i, 0);
    for (std::size_t j = 1; j < m.num_levels(); ++j) {
      mn = std::min(mn, m.cost(k, i, j));
      mx = std::max(mx, m.cost(k, i, j));
    }
    lo += mn;
    hi += mx;
  }
  return lo + rng.uniform(0.05, 0.95) * (hi - lo);
}

}  // namespace

TEST_CASE("build_matrix fills responses and costs", "[allocator]") {
  const DipnModel model(IncentiveGrid::strided(10.0), {2, 2, 2}, 4, 3);
  const std::vector<Features> users{{0, 0, 0}, {1, 1, 1}, {0, 1, 0}};
  const auto m = build_matrix(model, users);
  REQUIRE(m.num_users == 3);
  REQUIRE(m.num_costs() == 1);
  for (std::size_t i = 0; i < m.num_users; ++i)
    for (std::size_t j = 0; j < m.num_levels(); ++j) {
      if (j > 0) REQUIRE(m.response(i, j) >= m.response(i, j - 1));  // DIPN rows monotone
      REQUIRE(m.cost(0, i, j) == m.grid.level(j));                   // face value
    }

  const auto empty = build_matrix(model, std::span<const Features>{});
  CHECK(empty.num_users == 0);

  const std::vector<Features> bad{{0, 0, 0}, {5, 0, 0}};
  CHECK_THROWS_WITH(build_matrix(model, bad), Catch::Matchers::ContainsSubstring("user 1"));
}

TEST_CASE("assign_given_lambda picks the scored argmax", "[allocator]") {
  // single user: f=[0.2,0.8], costs [0,10], lambda=0.05 -> scores [0.2,0.3]
  const auto m = make_matrix({{0.2, 0.8}}, {{{0.0, 10.0}}}, {0.0, 10.0});
  const std::vector<double> lam{0.05};
  const auto plan = assign_given_lambda(m, lam);
  CHECK(plan.assignment[0].level == 1);
  CHECK_FALSE(plan.assignment[0].mixed());
  CHECK(plan.expected_objective == 0.8);
  CHECK(plan.expected_spend[0] == 10.0);

  // lambda 0: pure argmax of f (top level for monotone rows)
  const std::vector<double> zero{0.0};
  CHECK(assign_given_lambda(m, zero).assignment[0].level == 1);

  // enormous lambda: cheapest level wins
  const std::vector<double> huge{1e9};
  CHECK(assign_given_lambda(m, huge).assignment[0].level == 0);

  const std::vector<double> neg{-1.0};
  CHECK_THROWS_AS(assign_given_lambda(m, neg), std::invalid_argument);
}

TEST_CASE("spend is nonincreasing in lambda for face-value costs", "[allocator]") {
  Rng rng(2027);
  for (int t = 0; t < 30; ++t) {
    const auto m = random_instance(rng);
    double prev = std::numeric_limits<double>::infinity();
    for (double lam = 0.0; lam <= 2.0; lam += 0.05) {
      const std::vector<double> l{lam};
      const auto spend = assign_given_lambda(m, l).expected_spend[0];
      REQUIRE(spend <= prev + 1e-12);
      prev = spend;
    }
  }
}

TEST_CASE("argmax is invariant to common positive scaling of f and lambda", "[allocator]") {
  Rng rng(515);
  for (int t = 0; t < 20; ++t) {
    auto m = random_instance(rng);
    const double lam = rng.uniform(0.0, 0.2);
    const std::vector<double> l1{lam};
    const auto p1 = assign_given_lambda(m, l1);
    const double c = rng.uniform(0.1, 7.0);
    ResponseMatrix scaled = m;
    for (auto& v : scaled.f) v = std::min(1.0, v * std::min(c, 1.0));
    // keep f within [0,1]: scale both f and lambda by c <= 1
    const double cc = std::min(c, 1.0);
    for (std::size_t i = 0; i < m.f.size(); ++i) scaled.f[i] = m.f[i] * cc;
    const std::vector<double> l2{lam * cc};
    const auto p2 = assign_given_lambda(scaled, l2);
    for (std::size_t i = 0; i < m.num_users; ++i)
      REQUIRE(p1.assignment[i].level == p2.assignment[i].level);
  }
}

TEST_CASE("slack budgets solve at lambda zero", "[allocator]") {
  Rng rng(88);
  const auto m = random_instance(rng);
  double max_spend = 0.0;
  for (std::size_t i = 0; i < m.num_users; ++i) max_spend += m.grid.max_level();
  const auto [dual, plan] = solve_dual_single(m, max_spend + 1.0);
  CHECK(dual.lambda[0] == 0.0);
  const std::vector<double> zero{0.0};
  CHECK(plan.expected_objective == assign_given_lambda(m, zero).expected_objective);
}

TEST_CASE("exact-minimum budgets assign the cheapest levels", "[allocator]") {
  const auto m = make_matrix({{0.4, 0.9}, {0.1, 0.8}}, {{{0.0, 10.0}, {0.0, 10.0}}},
                             {0.0, 10.0});
  const auto [dual, plan] = solve_dual_single(m, 0.0);
  CHECK(plan.expected_spend[0] <= detail::kFeasTol);
  for (const auto& a : plan.assignment) {
    CHECK(a.level == 0);
    CHECK_FALSE(a.mixed());
  }
  CHECK_THROWS_AS(solve_dual_single(m, -1.0), infeasible_error);
  try {
    solve_dual_single(m, -1.0);
  } catch (const infeasible_error& e) {
    CHECK(e.min_spend() == 0.0);
  }
}

TEST_CASE("two-user hand-enumerated LP optimum", "[allocator]") {
  // f=[[0.2,0.9],[0.5,0.6]], face costs {0,10}, budget 5: LP mixes user 0
  // between the levels at theta=1/2 (objective 1.05); best integral is 0.7.
  const auto m = make_matrix({{0.2, 0.9}, {0.5, 0.6}}, {{{0.0, 10.0}, {0.0, 10.0}}},
                             {0.0, 10.0});
  const std::vector<double> budgets{5.0};
  const auto exact = solve_exact_small(m, budgets);
  CHECK_THAT(exact.lp_objective, Catch::Matchers::WithinAbs(1.05, 1e-12));
  CHECK_THAT(exact.ilp_objective, Catch::Matchers::WithinAbs(0.7, 1e-12));

  const auto [dual, plan] = solve_dual_single(m, 5.0);
  CHECK_THAT(plan.expected_objective, Catch::Matchers::WithinAbs(1.05, 1e-9));
  CHECK_THAT(plan.expected_spend[0], Catch::Matchers::WithinAbs(5.0, 1e-9));
  REQUIRE(plan.assignment[0].mixed());
  CHECK_THAT(plan.assignment[0].prob2, Catch::Matchers::WithinAbs(0.5, 1e-9));
  CHECK_FALSE(plan.assignment[1].mixed());
}

TEST_CASE("single-constraint duals match the exact LP", "[allocator][oracle]") {
  Rng rng(90210);
  for (int t = 0; t < 25; ++t) {
    const auto m = random_instance(rng, 6, 4, t % 2 == 1);
    const double budget = budget_between(rng, m, 0);
    const std::vector<double> budgets{budget};
    const auto exact = solve_exact_small(m, budgets);
    const auto [dual, plan] = solve_dual_single(m, budget);
    const double tol = 1e-6 * std::max(1.0, std::abs(exact.lp_objective));
    INFO("instance " << t << ": dual " << plan.expected_objective << " vs lp "
                     << exact.lp_objective);
    REQUIRE(plan.expected_objective <= exact.lp_objective + 1e-9);  // weak duality
    REQUIRE(exact.lp_objective - plan.expected_objective <= tol);
    REQUIRE(plan.expected_spend[0] <= budget + 1e-9 * std::max(1.0, budget));
    REQUIRE(exact.lp_objective >= exact.ilp_objective - 1e-12);
    // at most one fractional user per binding constraint
    int mixed = 0;
    for (const auto& a : plan.assignment) mixed += a.mixed() ? 1 : 0;
    REQUIRE(mixed <= 1);
  }
}

TEST_CASE("multi-constraint duals approach the exact LP", "[allocator][oracle]") {
  Rng rng(777);
  int done = 0;
  for (int t = 0; done < 8 && t < 40; ++t) {
    const auto m = random_instance(rng, 4, 3, true, 2);
    const std::vector<double> budgets{budget_between(rng, m, 0), budget_between(rng, m, 1)};
    ExactSolution exact;
    try {
      exact = solve_exact_small(m, budgets);
    } catch (const infeasible_error&) {
      continue;  // jointly infeasible draw
    }
    std::pair<DualSolution, AllocationPlan> res;
    try {
      res = solve_dual_multi(m, budgets);
    } catch (const infeasible_error&) {
      continue;
    }
    const auto& plan = res.second;
    for (std::size_t k = 0; k < 2; ++k)
      REQUIRE(plan.expected_spend[k] <= budgets[k] + 1e-9 * std::max(1.0, budgets[k]));
    REQUIRE(plan.expected_objective <= exact.lp_objective + 1e-9);
    const double gap = (exact.lp_objective - plan.expected_objective) /
                       std::max(1.0, std::abs(exact.lp_objective));
    INFO("instance " << t << " gap " << gap);
    REQUIRE(gap < 1e-3);
    ++done;
  }
  REQUIRE(done == 8);
}

TEST_CASE("a slack extra constraint reduces to the single-budget solution", "[allocator]") {
  Rng rng(31);
  auto m = random_instance(rng, 5, 4);
  m.g.push_back(m.g[0]);  // duplicate cost matrix; second budget huge
  const double budget = budget_between(rng, m, 0);
  const std::vector<double> budgets{budget, 1e9};
  const auto [dual_m, plan_m] = solve_dual_multi(m, budgets);
  CHECK(dual_m.lambda[1] <= 1e-10);

  ResponseMatrix single = m;
  single.g.pop_back();
  const auto [dual_s, plan_s] = solve_dual_single(single, budget);
  CHECK_THAT(plan_m.expected_objective,
             Catch::Matchers::WithinAbs(plan_s.expected_objective,
                                        1e-6 * std::max(1.0, plan_s.expected_objective)));
}

TEST_CASE("per-capita budgets recover the equivalent total-budget plan", "[allocator]") {
  Rng rng(606);
  const auto m = random_instance(rng, 6, 4);
  const double budget = budget_between(rng, m, 0);
  const auto [dual_s, plan_s] = solve_dual_single(m, budget);
  const double b = plan_s.expected_spend[0] / static_cast<double>(m.num_users);

  const std::vector<double> pc{b};
  const auto [dual_p, plan_p] = solve_per_capita(m, pc);
  CHECK_THAT(plan_p.expected_objective,
             Catch::Matchers::WithinAbs(plan_s.expected_objective, 1e-6));
  CHECK(plan_p.expected_spend[0] / static_cast<double>(m.num_users) <= b + 1e-9);

  // a per-capita bound above the dearest level is vacuous
  const std::vector<double> vac{m.grid.max_level() + 5.0};
  const auto [dual_v, plan_v] = solve_per_capita(m, vac);
  CHECK(dual_v.lambda[0] == 0.0);
  const std::vector<double> zero{0.0};
  CHECK(plan_v.expected_objective == assign_given_lambda(m, zero).expected_objective);
}

TEST_CASE("exact oracle basics", "[allocator]") {
  // one user, ample budget: argmax f
  const auto m1 = make_matrix({{0.3, 0.7, 0.5}}, {{{0.0, 10.0, 20.0}}}, {0.0, 10.0, 20.0});
  const std::vector<double> b1{100.0};
  const auto e1 = solve_exact_small(m1, b1);
  CHECK(e1.lp_objective == 0.7);
  CHECK(e1.plan.assignment[0].level == 1);

  // enumeration bound
  ResponseMatrix big{IncentiveGrid::strided(10.0), 5, {}, {}};
  big.f.assign(5 * 11, 0.5);
  big.g.assign(1, std::vector<double>(5 * 11, 1.0));
  const std::vector<double> b2{10.0};
  CHECK_THROWS_AS(solve_exact_small(big, b2), std::invalid_argument);
}

TEST_CASE("online decisions agree with the solved batch", "[allocator]") {
  const DipnModel model(IncentiveGrid::strided(10.0), {2, 2, 2}, 6, 5);
  std::vector<Features> users;
  for (int i1 = 0; i1 < 2; ++i1)
    for (int i2 = 0; i2 < 2; ++i2)
      for (int i3 = 0; i3 < 2; ++i3) users.push_back({i1, i2, i3});
  const auto m = build_matrix(model, users);
  const double budget = 0.6 * 8.0 * m.grid.max_level();
  const auto [dual, plan] = solve_dual_single(m, budget);
  for (std::size_t i = 0; i < users.size(); ++i) {
    if (plan.assignment[i].mixed()) continue;  // boundary users may differ
    CHECK(online_decide(dual, model, users[i]) ==
          static_cast<std::size_t>(plan.assignment[i].level));
  }
  DualSolution zero = dual;
  std::fill(zero.lambda.begin(), zero.lambda.end(), 0.0);
  const auto curve = model.predict_curve(users[0]);
  const std::size_t argmax =
      std::max_element(curve.begin(), curve.end()) - curve.begin();
  CHECK(online_decide(zero, model, users[0]) == argmax);
}

TEST_CASE("sampling realizes expected spend in the long run", "[allocator]") {
  const auto m = make_matrix({{0.2, 0.9}, {0.5, 0.6}, {0.1, 0.3}},
                             {{{0.0, 10.0}, {0.0, 10.0}, {0.0, 10.0}}}, {0.0, 10.0});
  const auto [dual, plan] = solve_dual_single(m, 14.0);
  REQUIRE(plan.expected_spend[0] == Catch::Approx(14.0).margin(1e-9));

  // deterministic users sample identically regardless of seed
  const auto s1 = sample_plan(plan, m, 1);
  const auto s2 = sample_plan(plan, m, 2);
  for (std::size_t i = 0; i < plan.assignment.size(); ++i)
    if (!plan.assignment[i].mixed()) REQUIRE(s1.levels[i] == s2.levels[i]);

  double mean_spend = 0.0, var_one = 0.0;
  for (const auto& a : plan.assignment)
    if (a.mixed()) {
      const double d = 10.0;  // cost gap between the two levels
      var_one += a.prob * a.prob2 * d * d;
    }
  const int kResamples = 10000;
  for (int r = 0; r < kResamples; ++r) mean_spend += sample_plan(plan, m, 100 + r).realized_spend[0];
  mean_spend /= kResamples;
  const double sigma = std::sqrt(var_one / kResamples);
  INFO("mean " << mean_spend << " sigma " << sigma);
  REQUIRE(std::abs(mean_spend - plan.expected_spend[0]) <= 3.0 * sigma + 1e-9);
}

TEST_CASE("plans and duals round-trip through files", "[allocator]") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "promo_alloc_test";
  fs::create_directories(dir);
  const auto m = make_matrix({{0.2, 0.9}, {0.5, 0.6}}, {{{0.0, 10.0}, {0.0, 10.0}}},
                             {0.0, 10.0});
  const auto [dual, plan] = solve_dual_single(m, 5.0);
  const auto planfile = (dir / "plan.txt").string();
  save_plan(planfile, plan);
  const auto p2 = load_plan(planfile);
  REQUIRE(p2.assignment.size() == plan.assignment.size());
  REQUIRE(p2.lambda == plan.lambda);
  REQUIRE(p2.expected_objective == plan.expected_objective);
  REQUIRE(p2.expected_spend == plan.expected_spend);
  REQUIRE(p2.user_cost == plan.user_cost);
  for (std::size_t i = 0; i < plan.assignment.size(); ++i) {
    REQUIRE(p2.assignment[i].level == plan.assignment[i].level);
    REQUIRE(p2.assignment[i].prob == plan.assignment[i].prob);
    REQUIRE(p2.assignment[i].level2 == plan.assignment[i].level2);
    REQUIRE(p2.assignment[i].prob2 == plan.assignment[i].prob2);
  }

  DualSolution d = dual;
  d.model_checksum = 12345;
  const auto dualfile = (dir / "dual.txt").string();
  save_dual(dualfile, d);
  const auto d2 = load_dual(dualfile);
  REQUIRE(d2.lambda == d.lambda);
  REQUIRE(d2.converged == d.converged);
  REQUIRE(d2.iterations == d.iterations);
  REQUIRE(d2.spend_at_lambda == d.spend_at_lambda);
  REQUIRE(d2.matrix_checksum == d.matrix_checksum);
  REQUIRE(d2.model_checksum == 12345);
  fs::remove_all(dir);
}

TEST_CASE("identical inputs yield identical plans", "[allocator]") {
  Rng rng(321);
  const auto m = random_instance(rng, 7, 5);
  const double budget = budget_between(rng, m, 0);
  const auto [d1, p1] = solve_dual_single(m, budget);
  const auto [d2, p2] = solve_dual_single(m, budget);
  REQUIRE(d1.lambda == d2.lambda);
  REQUIRE(p1.expected_objective == p2.expected_objective);
  for (std::size_t i = 0; i < p1.assignment.size(); ++i) {
    REQUIRE(p1.assignment[i].level == p2.assignment[i].level);
    REQUIRE(p1.assignment[i].prob2 == p2.assignment[i].prob2);
  }
}
