#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "promo/dipn.hpp"
#include "promo/losses.hpp"
#include "promo/mlp.hpp"
#include "promo/model_io.hpp"
#include "promo/train.hpp"

using namespace promo;

namespace {

IncentiveGrid toy_grid() { return IncentiveGrid({0.0, 1.0, 2.0}); }

DipnModel zeroed_dipn(const IncentiveGrid& g, int e_dim = 4) {
  DipnModel m(g, {2, 2, 2}, e_dim, 1);
  for (auto& p : m.parameters()) p = 0.0;
  return m;
}

}  // namespace

TEST_CASE("zero parameters predict one half everywhere", "[model]") {
  const auto m = zeroed_dipn(IncentiveGrid::strided(10.0));
  const auto curve = m.predict_curve({1, 0, 1});
  for (const double p : curve) REQUIRE(p == 0.5);
}

TEST_CASE("hand-set toy weights reproduce the expected curve", "[model]") {
  // bias net output 0, global bias -1, uplift weights [0.5, 0.5]:
  // curve must be sigmoid(-1), sigmoid(-0.5), sigmoid(0).
  auto m = zeroed_dipn(toy_grid(), 1);
  m.set_global_bias(-1.0);
  m.parameters()[m.uplift_c_offset(0)] = 0.5;
  m.parameters()[m.uplift_c_offset(1)] = 0.5;
  const auto curve = m.predict_curve({0, 0, 0});
  CHECK_THAT(curve[0], Catch::Matchers::WithinAbs(0.2689414213699951, 1e-15));
  CHECK_THAT(curve[1], Catch::Matchers::WithinAbs(0.3775406687981454, 1e-15));
  CHECK_THAT(curve[2], Catch::Matchers::WithinAbs(0.5, 1e-15));
  CHECK(m.predict({0, 0, 0}, 0.0) == sigmoid(m.forward({0, 0, 0}).bias_logit));
}

TEST_CASE("predict_curve equals predict at every level", "[model]") {
  const DipnModel m(IncentiveGrid::strided(10.0), {3, 2, 4}, 8, 99);
  const Features x{2, 1, 3};
  const auto curve = m.predict_curve(x);
  REQUIRE(curve.size() == m.grid().size());
  for (std::size_t j = 0; j < curve.size(); ++j)
    REQUIRE(curve[j] == m.predict(x, m.grid().level(j)));
  // off-grid queries round down
  CHECK(m.predict(x, 14.7) == curve[1]);
  CHECK_THROWS_AS(m.predict(x, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(m.predict({3, 0, 0}, 10.0), vocab_error);
}

TEST_CASE("random models are monotone by construction", "[model]") {
  Rng rng(31337);
  for (int t = 0; t < 40; ++t) {
    const DipnModel m(IncentiveGrid::strided(5.0), {4, 3, 5}, 6, rng.next_u64());
    for (int u = 0; u < 25; ++u) {
      const Features x{static_cast<int>(rng.uniform_int(0, 3)),
                       static_cast<int>(rng.uniform_int(0, 2)),
                       static_cast<int>(rng.uniform_int(0, 4))};
      const auto w = m.uplift_weights(x);
      for (const double v : w) REQUIRE(v >= 0.0);
      const auto curve = m.predict_curve(x);
      for (std::size_t j = 1; j < curve.size(); ++j) REQUIRE(curve[j] >= curve[j - 1]);
    }
  }
}

TEST_CASE("log loss unit values", "[model]") {
  CHECK_THAT(log_loss(0.5, 1, 1.0), Catch::Matchers::WithinAbs(0.6931471805599453, 1e-15));
  CHECK_THAT(log_loss(0.5, 0, 1.0), Catch::Matchers::WithinAbs(0.6931471805599453, 1e-15));
  CHECK(log_loss(1.0, 1, 1.0) < 1e-6);  // clamped perfect prediction
  CHECK(log_loss(0.0, 0, 1.0) < 1e-6);
  CHECK(log_loss(0.3, 1, 2.0) == 2.0 * log_loss(0.3, 1, 1.0));
}

TEST_CASE("smoothness loss values and properties", "[model]") {
  const std::vector<double> constant{0.7, 0.7, 0.7, 0.7};
  CHECK(smoothness_loss(constant) == 0.0);

  const std::vector<double> pair{1.0, 2.0};
  CHECK_THAT(smoothness_loss(pair), Catch::Matchers::WithinAbs(0.2499998750000625, 1e-15));

  const std::vector<double> single{0.4};
  CHECK(smoothness_loss(single) == 0.0);

  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> w(5);
    for (auto& v : w) v = rng.uniform(0.0, 3.0);
    REQUIRE(smoothness_loss(w) >= 0.0);
  }
}

TEST_CASE("alpha schedule", "[model]") {
  TrainConfig cfg;
  cfg.alpha_upper = 1.0;
  cfg.alpha_lower = 0.01;
  cfg.alpha_decay = 1e-3;
  CHECK_THAT(alpha_schedule(cfg, 500), Catch::Matchers::WithinAbs(0.5, 1e-12));
  CHECK(alpha_schedule(cfg, 100000000) == 0.01);
  cfg.alpha_decay = 0.0;
  CHECK(alpha_schedule(cfg, 12345) == 1.0);
  CHECK_THROWS_AS(alpha_schedule(cfg, -1), std::invalid_argument);
  TrainConfig bad;
  bad.alpha_lower = 2.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("total loss reduces to log loss at alpha zero", "[model]") {
  const DipnModel m(toy_grid(), {2, 2, 2}, 4, 17);
  std::vector<TrainingSample> batch;
  Rng rng(3);
  for (int i = 0; i < 12; ++i) {
    TrainingSample s;
    s.features = {static_cast<int>(rng.uniform_int(0, 1)),
                  static_cast<int>(rng.uniform_int(0, 1)),
                  static_cast<int>(rng.uniform_int(0, 1))};
    s.incentive = static_cast<int>(rng.uniform_int(0, 2));
    s.label = static_cast<int>(rng.uniform_int(0, 1));
    batch.push_back(s);
  }
  double mean_ll = 0.0;
  for (const auto& s : batch)
    mean_ll += log_loss(m.predict(s.features, s.incentive), s.label, s.weight);
  mean_ll /= static_cast<double>(batch.size());
  CHECK_THAT(dipn_total_loss(m, batch, 0.0), Catch::Matchers::WithinAbs(mean_ll, 1e-12));
  CHECK(std::isfinite(dipn_total_loss(m, batch, 5.0)));
}

TEST_CASE("constant uplift weights make total loss alpha-independent", "[model]") {
  auto m = zeroed_dipn(toy_grid());
  for (std::size_t r = 0; r < m.num_uplift_weights(); ++r)
    m.parameters()[m.uplift_c_offset(r)] = 0.3;
  TrainingSample s;
  s.incentive = 2;
  s.label = 1;
  const std::vector<TrainingSample> batch{s};
  CHECK(dipn_total_loss(m, batch, 0.0) == dipn_total_loss(m, batch, 10.0));
}

TEST_CASE("model files round-trip bit-identically", "[model]") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "promo_model_test";
  fs::create_directories(dir);

  SECTION("dipn") {
    DipnModel m(IncentiveGrid::strided(20.0), {3, 2, 2}, 5, 71);
    m.train_config.learning_rate = 0.025;
    m.train_config.optimizer = OptimizerKind::kMomentum;
    const auto file = (dir / "m1.txt").string();
    save_model(file, m);
    const auto loaded = load_model(file);
    REQUIRE(model_kind(loaded) == "dipn");
    const auto& lm = std::get<DipnModel>(loaded);
    REQUIRE(std::equal(lm.parameters().begin(), lm.parameters().end(),
                       m.parameters().begin(), m.parameters().end()));
    REQUIRE(lm.train_config.learning_rate == 0.025);
    REQUIRE(lm.train_config.optimizer == OptimizerKind::kMomentum);
    const Features x{2, 1, 0};
    REQUIRE(lm.predict_curve(x) == m.predict_curve(x));
    REQUIRE(model_checksum(loaded) == model_checksum(AnyModel(m)));
  }

  SECTION("mlp") {
    MlpModel m(IncentiveGrid::strided(25.0), {2, 2, 3}, 4, {7, 3}, 5);
    const auto file = (dir / "m2.txt").string();
    save_model(file, m);
    const auto loaded = load_model(file);
    REQUIRE(model_kind(loaded) == "mlp");
    const auto& lm = std::get<MlpModel>(loaded);
    REQUIRE(lm.hidden_widths() == std::vector<int>{7, 3});
    const Features x{1, 0, 2};
    REQUIRE(lm.predict_curve(x) == m.predict_curve(x));
    // a parameter change must change the checksum
    MlpModel m2 = m;
    m2.parameters()[0] += 1e-9;
    REQUIRE(model_checksum(AnyModel(m2)) != model_checksum(AnyModel(m)));
  }
  fs::remove_all(dir);
}

TEST_CASE("mlp basics", "[model]") {
  const MlpModel m(IncentiveGrid::strided(10.0), {2, 3, 2}, 6, {8}, 21);
  const Features x{1, 2, 0};
  const auto curve = m.predict_curve(x);
  REQUIRE(curve.size() == 11);
  for (std::size_t j = 0; j < curve.size(); ++j)
    REQUIRE(curve[j] == m.predict(x, m.grid().level(j)));
  const MlpModel m2(IncentiveGrid::strided(10.0), {2, 3, 2}, 6, {8}, 21);
  REQUIRE(std::equal(m.parameters().begin(), m.parameters().end(), m2.parameters().begin(),
                     m2.parameters().end()));
  CHECK_THROWS_AS(m.predict({0, 3, 0}, 10.0), vocab_error);
}
