#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <map>

#include "promo/metrics.hpp"
#include "promo/model_io.hpp"
#include "promo/train.hpp"

using namespace promo;

namespace {

// minimal model stand-in with an arbitrary response rule
struct StubModel {
  IncentiveGrid g = IncentiveGrid::strided(10.0);
  double lo = 0.0, hi = 1.0;
  const IncentiveGrid& grid() const { return g; }
  double predict(const Features&, double incentive) const {
    return incentive > 50.0 ? hi : lo;
  }
  std::vector<double> predict_curve(const Features& x) const {
    std::vector<double> out;
    for (const double d : g.levels()) out.push_back(predict(x, d));
    return out;
  }
};

}  // namespace

TEST_CASE("logloss metric unit values", "[metrics]") {
  std::vector<TrainingSample> samples;
  for (int i = 0; i < 100; ++i) {
    TrainingSample s;
    s.incentive = i % 2 == 0 ? 80 : 20;
    s.label = i % 2 == 0 ? 1 : 0;
    samples.push_back(s);
  }
  const StubModel perfect;  // predicts 1 above 50, 0 below: matches labels
  CHECK(logloss_metric(perfect, samples) < 1e-6);

  StubModel half;
  half.lo = half.hi = 0.5;
  CHECK_THAT(logloss_metric(half, samples),
             Catch::Matchers::WithinAbs(0.6931471805599453, 1e-15));

  CHECK_THROWS_AS(logloss_metric(half, std::span<const TrainingSample>{}),
                  std::invalid_argument);

  // agrees with the training loss at alpha = 0 and unit weights
  const DipnModel m(IncentiveGrid::strided(10.0), {2, 2, 2}, 4, 9);
  std::vector<TrainingSample> batch;
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    TrainingSample s;
    s.features = {static_cast<int>(rng.uniform_int(0, 1)),
                  static_cast<int>(rng.uniform_int(0, 1)),
                  static_cast<int>(rng.uniform_int(0, 1))};
    s.incentive = static_cast<int>(rng.uniform_int(1, 100));
    s.label = static_cast<int>(rng.uniform_int(0, 1));
    batch.push_back(s);
  }
  CHECK_THAT(logloss_metric(m, batch),
             Catch::Matchers::WithinAbs(dipn_total_loss(m, batch, 0.0), 1e-12));
}

TEST_CASE("auc unit values", "[metrics]") {
  const std::vector<double> sep{0.1, 0.2, 0.8, 0.9};
  const std::vector<int> lab{0, 0, 1, 1};
  CHECK(auc_from_scores(sep, lab) == 1.0);

  const std::vector<double> anti{0.9, 0.8, 0.2, 0.1};
  CHECK(auc_from_scores(anti, lab) == 0.0);

  const std::vector<double> ties{0.5, 0.5, 0.5, 0.5};
  CHECK(auc_from_scores(ties, lab) == 0.5);

  const std::vector<int> single{1, 1, 1, 1};
  CHECK_THROWS_AS(auc_from_scores(sep, single), std::invalid_argument);

  // label-independent scores sit near one half
  Rng rng(2024);
  std::vector<double> scores(10000);
  std::vector<int> labels(10000);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = rng.uniform();
    labels[i] = rng.bernoulli(0.4) ? 1 : 0;
  }
  CHECK(std::abs(auc_from_scores(scores, labels) - 0.5) <= 0.03);
}

TEST_CASE("pair rates on fixed curves", "[metrics]") {
  CHECK_THAT(rpr_of_curve(std::vector<double>{0.2, 0.1, 0.3, 0.4}),
             Catch::Matchers::WithinAbs(1.0 / 6.0, 1e-15));
  CHECK(rpr_of_curve(std::vector<double>{0.1, 0.2, 0.3, 0.4}) == 0.0);
  CHECK_THAT(epr_of_curve(std::vector<double>{0.2, 0.2, 0.3, 0.4}),
             Catch::Matchers::WithinAbs(1.0 / 6.0, 1e-15));
  CHECK(epr_of_curve(std::vector<double>{0.1, 0.3, 0.5, 0.9}) == 0.0);
  CHECK(epr_of_curve(std::vector<double>{0.4, 0.4, 0.4}) == 1.0);

  // reversed + equal + concordant pairs account for every pair
  Rng rng(8);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> c(5);
    for (auto& v : c) v = rng.uniform(0.0, 0.2);  // small range forces near-ties
    const double tol = 0.05;
    std::size_t rp = 0, ep = 0, cp = 0;
    for (std::size_t a = 1; a < c.size(); ++a)
      for (std::size_t b = 0; b < a; ++b) {
        if (c[a] < c[b] - tol) ++rp;
        else if (std::abs(c[a] - c[b]) <= tol) ++ep;
        else ++cp;
      }
    const double total = rpr_of_curve(c, tol) + epr_of_curve(c, tol) +
                         static_cast<double>(2 * cp) / static_cast<double>(c.size() * (c.size() - 1));
    REQUIRE_THAT(total, Catch::Matchers::WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("any dipn scores zero reverse pairs", "[metrics]") {
  Rng rng(99);
  for (int t = 0; t < 10; ++t) {
    const DipnModel m(IncentiveGrid::strided(10.0), {3, 2, 2}, 6, rng.next_u64());
    std::vector<Features> users;
    for (int i = 0; i < 50; ++i)
      users.push_back({static_cast<int>(rng.uniform_int(0, 2)),
                       static_cast<int>(rng.uniform_int(0, 1)),
                       static_cast<int>(rng.uniform_int(0, 1))});
    const auto curves = curves_for_users(m, users);
    REQUIRE(rpr_of_curves(curves) == 0.0);
  }
}

TEST_CASE("mlss values and properties", "[metrics]") {
  const IncentiveGrid unit({0.0, 1.0, 2.0, 3.0});

  SECTION("linear curves have zero slope variance") {
    const IncentiveGrid g = IncentiveGrid::strided(10.0);
    std::vector<double> linear;
    for (std::size_t j = 0; j < g.size(); ++j)
      linear.push_back(0.05 + 0.04 * static_cast<double>(j));
    CHECK_THAT(mlss_of_curve(linear, g, 100.0), Catch::Matchers::WithinAbs(0.0, 1e-12));
  }

  SECTION("frozen hand-computed window std") {
    // slopes 0.1, 0.1, 0.5; radius covers all three
    const std::vector<double> c{0.2, 0.3, 0.4, 0.9};
    CHECK_THAT(mlss_of_curve(c, unit, 5.0),
               Catch::Matchers::WithinAbs(0.1885618083164127, 1e-15));
  }

  SECTION("two-slope degenerate grid") {
    const IncentiveGrid g3({0.0, 1.0, 2.0});
    const std::vector<double> c{0.1, 0.2, 0.5};  // slopes 0.1, 0.3
    CHECK_THAT(mlss_of_curve(c, g3, 10.0), Catch::Matchers::WithinAbs(0.1, 1e-15));
  }

  SECTION("narrow windows are skipped; all skipped is an error") {
    const IncentiveGrid g({0.0, 10.0, 20.0});
    const std::vector<double> c{0.1, 0.2, 0.5};
    CHECK_THROWS_WITH(mlss_of_curve(c, g, 0.5),
                      Catch::Matchers::ContainsSubstring("window radius"));
  }

  SECTION("invariant to constant curve shifts") {
    const std::vector<double> c{0.11, 0.27, 0.31, 0.64};
    std::vector<double> shifted = c;
    for (auto& v : shifted) v += 0.2;
    CHECK_THAT(mlss_of_curve(shifted, unit, 2.0),
               Catch::Matchers::WithinAbs(mlss_of_curve(c, unit, 2.0), 1e-12));
  }
}

TEST_CASE("synthetic future response", "[metrics]") {
  const auto pop = gen_population(2, 1, 2, 44);
  const IncentiveGrid grid = IncentiveGrid::strided(20.0);  // D=6, integers
  std::vector<Features> users;
  for (std::size_t c = 0; c < pop.num_categories(); ++c) users.push_back(pop.category_at(c));

  SECTION("all-minimum plans average the baselines") {
    AllocationPlan plan;
    plan.assignment.assign(users.size(), UserAssignment{});
    double mean_a = 0.0;
    for (const auto& u : users) mean_a += pop.curve(u).params.a;
    mean_a /= static_cast<double>(users.size());
    CHECK_THAT(future_response_synthetic(plan, users, grid, pop),
               Catch::Matchers::WithinAbs(mean_a, 1e-15));
  }

  SECTION("single-category population returns the curve value exactly") {
    const auto tiny = gen_population(1, 1, 1, 9);
    const std::vector<Features> one{{0, 0, 0}};
    AllocationPlan plan;
    plan.assignment.assign(1, UserAssignment{});
    plan.assignment[0].level = 3;  // incentive 60
    CHECK(future_response_synthetic(plan, one, grid, tiny) == tiny.curve_at(0).y[60]);
  }

  SECTION("unknown categories are an error") {
    AllocationPlan plan;
    plan.assignment.assign(1, UserAssignment{});
    const std::vector<Features> bad{{7, 0, 0}};
    CHECK_THROWS_AS(future_response_synthetic(plan, bad, grid, pop), vocab_error);
  }

  SECTION("the true-curve oracle plan bounds every feasible plan") {
    // response matrix built from ground truth itself
    ResponseMatrix m{grid, users.size(), {}, {}};
    const std::size_t d = grid.size();
    m.f.resize(users.size() * d);
    m.g.assign(1, std::vector<double>(users.size() * d));
    for (std::size_t i = 0; i < users.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) {
        m.f[i * d + j] = pop.curve(users[i]).y[static_cast<int>(grid.level(j))];
        m.g[0][i * d + j] = grid.level(j);
      }
    const double budget = 30.0 * static_cast<double>(users.size());
    const std::vector<double> budgets{budget};
    const auto oracle = solve_exact_small(m, budgets);
    const double oracle_resp = future_response_synthetic(oracle.plan, users, grid, pop);

    const auto [dual, dual_plan] = solve_dual_single(m, budget);
    CHECK(oracle_resp >= future_response_synthetic(dual_plan, users, grid, pop) - 1e-9);

    AllocationPlan cheap;
    cheap.assignment.assign(users.size(), UserAssignment{});
    CHECK(oracle_resp >= future_response_synthetic(cheap, users, grid, pop) - 1e-12);
  }
}

TEST_CASE("holdout matching reproduces cell means", "[metrics]") {
  const IncentiveGrid grid({10.0, 20.0, 30.0});
  std::vector<TrainingSample> holdout;
  // two user types, known cell means at incentive 20
  for (int i = 0; i < 10; ++i) {
    TrainingSample s;
    s.features = {0, 0, 0};
    s.incentive = 20;
    s.label = i < 7 ? 1 : 0;  // mean 0.7
    holdout.push_back(s);
    s.features = {1, 0, 0};
    s.label = i < 3 ? 1 : 0;  // mean 0.3
    holdout.push_back(s);
  }
  const std::vector<Features> users{{0, 0, 0}, {1, 0, 0}};
  AllocationPlan plan;
  plan.assignment.assign(2, UserAssignment{});
  plan.assignment[0].level = 1;
  plan.assignment[1].level = 1;
  const auto hm = future_metrics_holdout(plan, users, grid, holdout, 15.0);
  CHECK(hm.matched_users == 2);
  CHECK_THAT(hm.response, Catch::Matchers::WithinAbs(0.5, 1e-12));
  CHECK_THAT(hm.cost, Catch::Matchers::WithinAbs(20.0, 1e-12));
  CHECK_THAT(hm.cost_error, Catch::Matchers::WithinAbs(5.0, 1e-12));

  // a plan level with no holdout data is excluded and reported
  plan.assignment[1].level = 2;
  const auto hm2 = future_metrics_holdout(plan, users, grid, holdout, 15.0);
  CHECK(hm2.matched_users == 1);
  CHECK(hm2.unmatched_users == 1);
  CHECK(hm2.match_rate == 0.5);

  plan.assignment[0].level = 0;
  const auto hm3 = future_metrics_holdout(plan, users, grid, holdout, 15.0);
  CHECK(hm3.low_match_warning);
}

TEST_CASE("holdout and synthetic evaluation agree", "[metrics]") {
  const auto pop = gen_population(2, 2, 2, 61);
  const IncentiveGrid grid({10, 20, 30, 40, 50, 60, 70, 80, 90, 100});
  std::vector<Features> users;
  Rng rng(5);
  for (int i = 0; i < 400; ++i)
    users.push_back(pop.category_at(
        static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(pop.num_categories()) - 1))));

  // plan from the true curves under a mid budget
  ResponseMatrix m{grid, users.size(), {}, {}};
  const std::size_t d = grid.size();
  m.f.resize(users.size() * d);
  m.g.assign(1, std::vector<double>(users.size() * d));
  for (std::size_t i = 0; i < users.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) {
      m.f[i * d + j] = pop.curve(users[i]).y[static_cast<int>(grid.level(j))];
      m.g[0][i * d + j] = grid.level(j);
    }
  const auto [dual, plan] = solve_dual_single(m, 40.0 * static_cast<double>(users.size()));

  const auto holdout = draw_dataset(pop, 303, 10000);
  const auto hm = future_metrics_holdout(plan, users, grid, holdout, 40.0);
  // sparse categories leave some (category, level) cells empty by design
  REQUIRE(hm.match_rate > 0.6);

  // the holdout estimate covers matched users only; restrict the synthetic
  // expectation to the same subset before comparing
  std::map<std::pair<std::size_t, int>, std::size_t> holdout_per_cell;
  for (const auto& s : holdout)
    holdout_per_cell[{pop.category_index(s.features), s.incentive}]++;
  const auto matched = [&](std::size_t i) {
    const auto& a = plan.assignment[i];
    const auto has = [&](int lv) {
      return holdout_per_cell.count(
                 {pop.category_index(users[i]),
                  static_cast<int>(grid.level(static_cast<std::size_t>(lv)))}) > 0;
    };
    return has(a.level) && (!a.mixed() || has(a.level2));
  };
  AllocationPlan subplan;
  std::vector<Features> subusers;
  for (std::size_t i = 0; i < users.size(); ++i) {
    if (!matched(i)) continue;
    subplan.assignment.push_back(plan.assignment[i]);
    subusers.push_back(users[i]);
  }
  REQUIRE(subusers.size() == hm.matched_users);
  const double synth = future_response_synthetic(subplan, subusers, grid, pop);

  // 3-sigma band from the matched cells' binomial noise
  std::map<std::pair<std::size_t, int>, double> weight_per_cell;
  for (std::size_t i = 0; i < users.size(); ++i) {
    if (!matched(i)) continue;
    const auto& a = plan.assignment[i];
    weight_per_cell[{pop.category_index(users[i]),
                     static_cast<int>(grid.level(static_cast<std::size_t>(a.level)))}] +=
        a.prob;
    if (a.mixed())
      weight_per_cell[{pop.category_index(users[i]),
                       static_cast<int>(grid.level(static_cast<std::size_t>(a.level2)))}] +=
          a.prob2;
  }
  double var = 0.0;
  for (const auto& [cell, w_users] : weight_per_cell) {
    const double y = pop.curve_at(cell.first).y[cell.second];
    const double w = w_users / static_cast<double>(hm.matched_users);
    var += w * w * y * (1.0 - y) / static_cast<double>(holdout_per_cell.at(cell));
  }
  const double sigma = std::sqrt(var);
  INFO("synthetic " << synth << " holdout " << hm.response << " sigma " << sigma);
  REQUIRE(std::abs(hm.response - synth) <= 3.0 * sigma + 1e-9);
}

TEST_CASE("reports round-trip and echo their configuration", "[metrics]") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "promo_metrics_test";
  fs::create_directories(dir);
  MetricsReport r;
  r.model_kind = "dipn";
  r.logloss = 0.57;
  r.auc = 0.69;
  r.rpr = 0.0;
  r.epr = 0.001;
  r.mlss = 0.006;
  r.future_response = 0.759;
  r.future_cost = 11.0;
  r.future_cost_error = 0.0;
  r.grid_levels = {0, 10, 20};
  r.eq_tol = 1e-9;
  r.window_radius = 20.0;
  r.num_samples = 10000;
  r.num_users = 10000;
  const auto file = (dir / "report.txt").string();
  save_report(file, r);
  const auto r2 = load_report(file);
  CHECK(r2.model_kind == "dipn");
  CHECK(r2.logloss == r.logloss);
  CHECK(r2.rpr == r.rpr);
  CHECK(r2.future_response == r.future_response);
  CHECK(r2.eq_tol == 1e-9);
  CHECK(r2.window_radius == 20.0);
  CHECK(r2.grid_levels == r.grid_levels);
  CHECK(r2.num_samples == 10000);
  CHECK(r2.summation == "neumaier");
  CHECK(r.rpr + r.epr <= 1.0);

  const DipnModel m(IncentiveGrid({0.0, 10.0, 20.0}), {2, 1, 1}, 3, 4);
  const std::vector<Features> users{{0, 0, 0}, {1, 0, 0}};
  save_curves_csv((dir / "curves.csv").string(), users, curves_for_users(m, users), m.grid());
  const auto lines = read_lines((dir / "curves.csv").string());
  REQUIRE(lines.size() == 3);
  fs::remove_all(dir);
}
