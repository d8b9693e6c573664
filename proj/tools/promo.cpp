// promo: command-line pipeline for personalized-promotion experiments.
//
//   gen       generate a synthetic population and train/validation/test splits
//   train     fit a DIPN (two-phase) or MLP response model
//   allocate  build the response matrix over the test users and solve the
//             budgeted assignment by Lagrangian duality
//   evaluate  compute the metric suite and write a report (+ curves CSV)
//   decide    apply solved dual variables to a single user
//   compare   print two reports side by side
//
// Settings come from a JSON config file; command-line flags override config
// values, which override built-in defaults.  Unknown config keys are
// rejected.  Exit codes: 0 success, 2 usage/config error, 3 infeasible
// optimization, 4 data/model incompatibility.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "promo/allocator.hpp"
#include "promo/metrics.hpp"
#include "promo/model_io.hpp"
#include "promo/propensity.hpp"
#include "promo/synthdata.hpp"
#include "promo/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace promo;

namespace {

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Paths {
  std::string population, train, validation, test;
  std::string model, train_log, propensity;
  std::string plan, dual;
  std::string report, curves_csv;
};

enum class BudgetForm { kTotal, kPerCapita, kMulti };

struct SubgroupCost {
  int field = 0;
  int value = 0;
};

struct RunConfig {
  Paths paths;
  int n1 = 2, n2 = 2, n3 = 2;
  double bias_strength = 0.0;
  std::int64_t total = 20000;
  std::vector<std::int64_t> split{5000, 5000, 10000};

  std::vector<double> grid_levels;  // explicit levels win over stride
  double grid_stride = 10.0;

  std::string model_kind = "dipn";
  int embed_dim = 8;
  std::vector<int> hidden{16};
  TrainConfig train;

  bool ips_enabled = false;
  std::string ips_bucket = "111";
  double ips_smoothing = 1.0;
  double ips_clip_max = 100.0;

  BudgetForm budget_form = BudgetForm::kPerCapita;
  double budget_total = 0.0;
  double budget_per_capita = 11.0;
  std::vector<double> budgets_multi;
  std::vector<std::optional<SubgroupCost>> multi_costs;  // nullopt = face value

  double eq_tol = kDefaultEqTol;
  double window_radius = 20.0;

  std::uint64_t seed_population = 1;
  std::uint64_t seed_data = 2;
  std::uint64_t seed_train = 3;

  IncentiveGrid grid() const {
    if (!grid_levels.empty()) return IncentiveGrid(grid_levels);
    return IncentiveGrid::strided(grid_stride);
  }
};

void default_paths(RunConfig& cfg, const std::string& out_dir) {
  auto set_if_empty = [&](std::string& p, const char* name) {
    if (p.empty()) p = (fs::path(out_dir) / name).string();
  };
  set_if_empty(cfg.paths.population, "population.txt");
  set_if_empty(cfg.paths.train, "train.txt");
  set_if_empty(cfg.paths.validation, "validation.txt");
  set_if_empty(cfg.paths.test, "test.txt");
  set_if_empty(cfg.paths.model, "model.txt");
  set_if_empty(cfg.paths.train_log, "train_log.txt");
  set_if_empty(cfg.paths.propensity, "propensity.txt");
  set_if_empty(cfg.paths.plan, "plan.txt");
  set_if_empty(cfg.paths.dual, "dual.txt");
  set_if_empty(cfg.paths.report, "report.txt");
  set_if_empty(cfg.paths.curves_csv, "curves.csv");
}

void reject_unknown(const json& j, const std::string& section,
                    const std::vector<std::string>& allowed) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw config_error("unknown key '" + key + "' in config section '" + section + "'");
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw config_error("config parse error in " + path + ": " + e.what());
  }
  RunConfig cfg;
  reject_unknown(j, "(top level)",
                 {"paths", "population", "grid", "model", "train", "bias_correction",
                  "budget", "metrics", "seeds"});
  if (j.contains("paths")) {
    const auto& p = j["paths"];
    reject_unknown(p, "paths",
                   {"population", "train", "validation", "test", "model", "train_log",
                    "propensity", "plan", "dual", "report", "curves_csv"});
    auto get = [&](const char* k, std::string& dst) {
      if (p.contains(k)) dst = p[k].get<std::string>();
    };
    get("population", cfg.paths.population);
    get("train", cfg.paths.train);
    get("validation", cfg.paths.validation);
    get("test", cfg.paths.test);
    get("model", cfg.paths.model);
    get("train_log", cfg.paths.train_log);
    get("propensity", cfg.paths.propensity);
    get("plan", cfg.paths.plan);
    get("dual", cfg.paths.dual);
    get("report", cfg.paths.report);
    get("curves_csv", cfg.paths.curves_csv);
  }
  if (j.contains("population")) {
    const auto& p = j["population"];
    reject_unknown(p, "population", {"n1", "n2", "n3", "bias_strength", "total", "split"});
    if (p.contains("n1")) cfg.n1 = p["n1"].get<int>();
    if (p.contains("n2")) cfg.n2 = p["n2"].get<int>();
    if (p.contains("n3")) cfg.n3 = p["n3"].get<int>();
    if (p.contains("bias_strength")) cfg.bias_strength = p["bias_strength"].get<double>();
    if (p.contains("total")) cfg.total = p["total"].get<std::int64_t>();
    if (p.contains("split")) cfg.split = p["split"].get<std::vector<std::int64_t>>();
  }
  if (j.contains("grid")) {
    const auto& p = j["grid"];
    reject_unknown(p, "grid", {"levels", "stride"});
    if (p.contains("levels")) cfg.grid_levels = p["levels"].get<std::vector<double>>();
    if (p.contains("stride")) cfg.grid_stride = p["stride"].get<double>();
  }
  if (j.contains("model")) {
    const auto& p = j["model"];
    reject_unknown(p, "model", {"kind", "embed_dim", "hidden"});
    if (p.contains("kind")) cfg.model_kind = p["kind"].get<std::string>();
    if (p.contains("embed_dim")) cfg.embed_dim = p["embed_dim"].get<int>();
    if (p.contains("hidden")) cfg.hidden = p["hidden"].get<std::vector<int>>();
  }
  if (j.contains("train")) {
    const auto& p = j["train"];
    reject_unknown(p, "train",
                   {"learning_rate", "epochs_bias", "epochs_uplift", "batch_size",
                    "alpha_upper", "alpha_lower", "alpha_decay", "optimizer"});
    if (p.contains("learning_rate")) cfg.train.learning_rate = p["learning_rate"].get<double>();
    if (p.contains("epochs_bias")) cfg.train.epochs_bias = p["epochs_bias"].get<int>();
    if (p.contains("epochs_uplift")) cfg.train.epochs_uplift = p["epochs_uplift"].get<int>();
    if (p.contains("batch_size")) cfg.train.batch_size = p["batch_size"].get<int>();
    if (p.contains("alpha_upper")) cfg.train.alpha_upper = p["alpha_upper"].get<double>();
    if (p.contains("alpha_lower")) cfg.train.alpha_lower = p["alpha_lower"].get<double>();
    if (p.contains("alpha_decay")) cfg.train.alpha_decay = p["alpha_decay"].get<double>();
    if (p.contains("optimizer"))
      cfg.train.optimizer = optimizer_from_name(p["optimizer"].get<std::string>());
  }
  if (j.contains("bias_correction")) {
    const auto& p = j["bias_correction"];
    reject_unknown(p, "bias_correction", {"enabled", "bucket", "smoothing", "clip_max"});
    if (p.contains("enabled")) cfg.ips_enabled = p["enabled"].get<bool>();
    if (p.contains("bucket")) cfg.ips_bucket = p["bucket"].get<std::string>();
    if (p.contains("smoothing")) cfg.ips_smoothing = p["smoothing"].get<double>();
    if (p.contains("clip_max")) cfg.ips_clip_max = p["clip_max"].get<double>();
  }
  if (j.contains("budget")) {
    const auto& p = j["budget"];
    reject_unknown(p, "budget", {"total", "per_capita", "multi"});
    int forms = 0;
    if (p.contains("total")) {
      cfg.budget_form = BudgetForm::kTotal;
      cfg.budget_total = p["total"].get<double>();
      ++forms;
    }
    if (p.contains("per_capita")) {
      cfg.budget_form = BudgetForm::kPerCapita;
      cfg.budget_per_capita = p["per_capita"].get<double>();
      ++forms;
    }
    if (p.contains("multi")) {
      const auto& m = p["multi"];
      reject_unknown(m, "budget.multi", {"budgets", "costs"});
      cfg.budget_form = BudgetForm::kMulti;
      cfg.budgets_multi = m["budgets"].get<std::vector<double>>();
      if (m.contains("costs")) {
        for (const auto& c : m["costs"]) {
          if (c.is_string() && c.get<std::string>() == "face") {
            cfg.multi_costs.emplace_back(std::nullopt);
          } else if (c.is_object() && c.contains("subgroup")) {
            const auto& s = c["subgroup"];
            reject_unknown(s, "budget.multi.costs.subgroup", {"field", "value"});
            cfg.multi_costs.emplace_back(
                SubgroupCost{s["field"].get<int>(), s["value"].get<int>()});
          } else {
            throw config_error("cost model must be \"face\" or {\"subgroup\": ...}");
          }
        }
      }
      ++forms;
    }
    if (forms != 1)
      throw config_error("budget section must contain exactly one of total | per_capita | multi");
  }
  if (j.contains("metrics")) {
    const auto& p = j["metrics"];
    reject_unknown(p, "metrics", {"eq_tol", "window_radius"});
    if (p.contains("eq_tol")) cfg.eq_tol = p["eq_tol"].get<double>();
    if (p.contains("window_radius")) cfg.window_radius = p["window_radius"].get<double>();
  }
  if (j.contains("seeds")) {
    const auto& p = j["seeds"];
    reject_unknown(p, "seeds", {"population", "data", "train"});
    if (p.contains("population")) cfg.seed_population = p["population"].get<std::uint64_t>();
    if (p.contains("data")) cfg.seed_data = p["data"].get<std::uint64_t>();
    if (p.contains("train")) cfg.seed_train = p["train"].get<std::uint64_t>();
  }
  return cfg;
}

void require_exists(const std::string& path, const std::string& what) {
  if (!fs::exists(path))
    throw config_error(what + " not found: " + path +
                       " (generate it first or point the config at it)");
}

std::vector<CostModel> cost_models_from_config(const RunConfig& cfg) {
  std::vector<CostModel> models;
  if (cfg.budget_form != BudgetForm::kMulti) {
    models.push_back(face_value_cost());
    return models;
  }
  for (std::size_t k = 0; k < cfg.budgets_multi.size(); ++k) {
    if (k < cfg.multi_costs.size() && cfg.multi_costs[k].has_value()) {
      const SubgroupCost sc = *cfg.multi_costs[k];
      if (sc.field < 0 || sc.field >= kNumFeatureFields)
        throw config_error("subgroup cost field out of range");
      models.push_back([sc](const Features& x, double incentive) {
        return x[sc.field] == sc.value ? incentive : 0.0;
      });
    } else {
      models.push_back(face_value_cost());
    }
  }
  return models;
}

// --- gen ---------------------------------------------------------------------

int cmd_gen(const RunConfig& cfg, bool force) {
  if (cfg.split.size() != 3) throw config_error("population.split must have 3 entries");
  if (cfg.split[0] + cfg.split[1] + cfg.split[2] != cfg.total)
    throw config_error("population.split must sum to population.total");
  for (const std::string& p :
       {cfg.paths.population, cfg.paths.train, cfg.paths.validation, cfg.paths.test}) {
    if (fs::exists(p) && !force)
      throw config_error("output exists (use --force to overwrite): " + p);
    const auto dir = fs::path(p).parent_path();
    if (!dir.empty()) fs::create_directories(dir);
  }

  const auto pop = gen_population(cfg.n1, cfg.n2, cfg.n3, cfg.seed_population);
  save_population(cfg.paths.population, pop);

  std::vector<TrainingSample> samples;
  if (cfg.bias_strength > 0.0) {
    samples = draw_biased_dataset(pop, cfg.bias_strength, cfg.seed_data, cfg.total).samples;
  } else {
    samples = draw_dataset(pop, cfg.seed_data, cfg.total);
  }
  Rng rng(derive_seed(cfg.seed_data, 0x73706c69ULL));
  rng.shuffle(samples);

  const auto n0 = static_cast<std::size_t>(cfg.split[0]);
  const auto n1 = static_cast<std::size_t>(cfg.split[1]);
  save_dataset(cfg.paths.train, {samples.begin(), samples.begin() + n0});
  save_dataset(cfg.paths.validation, {samples.begin() + n0, samples.begin() + n0 + n1});
  save_dataset(cfg.paths.test, {samples.begin() + n0 + n1, samples.end()});
  std::cout << "wrote " << cfg.paths.population << ", " << cfg.paths.train << " ("
            << cfg.split[0] << "), " << cfg.paths.validation << " (" << cfg.split[1] << "), "
            << cfg.paths.test << " (" << cfg.split[2] << ")\n";
  return 0;
}

// --- train ---------------------------------------------------------------------

int cmd_train(const RunConfig& cfg) {
  require_exists(cfg.paths.train, "training dataset");
  auto train_samples = load_dataset(cfg.paths.train);
  std::vector<TrainingSample> validation;
  if (fs::exists(cfg.paths.validation)) validation = load_dataset(cfg.paths.validation);

  if (cfg.ips_enabled) {
    const auto table = fit_propensity(train_samples, BucketSpec::parse(cfg.ips_bucket),
                                      cfg.ips_smoothing);
    train_samples = attach_weights(train_samples, table, cfg.ips_clip_max);
    save_propensity(cfg.paths.propensity, table);
    std::cout << "fitted propensities over " << table.num_buckets() << " buckets -> "
              << cfg.paths.propensity << "\n";
  }

  const IncentiveGrid grid = cfg.grid();
  // vocabulary comes from the population file when present, otherwise from
  // the largest feature index seen in the data
  std::array<int, 3> vocab{cfg.n1, cfg.n2, cfg.n3};
  if (fs::exists(cfg.paths.population)) {
    const auto pop = load_population(cfg.paths.population);
    vocab = {pop.n1(), pop.n2(), pop.n3()};
  } else {
    vocab = {1, 1, 1};
    for (const auto& s : train_samples)
      for (int f = 0; f < kNumFeatureFields; ++f)
        vocab[f] = std::max(vocab[f], s.features[f] + 1);
    for (const auto& s : validation)
      for (int f = 0; f < kNumFeatureFields; ++f)
        vocab[f] = std::max(vocab[f], s.features[f] + 1);
  }
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed_train;
  TrainLog log;
  if (cfg.model_kind == "dipn") {
    DipnModel model(grid, vocab, cfg.embed_dim, cfg.seed_train);
    log = train_bias_phase(model, train_samples, tc, validation);
    const auto ulog = train_uplift_phase(model, train_samples, tc, validation);
    log.insert(log.end(), ulog.begin(), ulog.end());
    save_model(cfg.paths.model, model);
  } else if (cfg.model_kind == "mlp") {
    MlpModel model(grid, vocab, cfg.embed_dim, cfg.hidden, cfg.seed_train);
    log = train_mlp(model, train_samples, tc, validation);
    save_model(cfg.paths.model, model);
  } else {
    throw config_error("model.kind must be dipn or mlp, got '" + cfg.model_kind + "'");
  }
  save_train_log(cfg.paths.train_log, log);
  std::cout << "trained " << cfg.model_kind << " on " << train_samples.size()
            << " samples -> " << cfg.paths.model << " (log: " << cfg.paths.train_log << ")\n";
  return 0;
}

// --- allocate --------------------------------------------------------------------

std::vector<Features> users_of(const std::vector<TrainingSample>& samples) {
  std::vector<Features> users;
  users.reserve(samples.size());
  for (const auto& s : samples) users.push_back(s.features);
  return users;
}

int cmd_allocate(const RunConfig& cfg) {
  require_exists(cfg.paths.model, "model file");
  require_exists(cfg.paths.test, "test dataset");
  const AnyModel model = load_model(cfg.paths.model);
  const auto test_samples = load_dataset(cfg.paths.test);
  const auto users = users_of(test_samples);

  const auto cost_models = cost_models_from_config(cfg);
  const ResponseMatrix matrix = std::visit(
      [&](const auto& m) {
        return build_matrix(m, std::span<const Features>(users), cost_models);
      },
      model);

  DualSolution dual;
  AllocationPlan plan;
  switch (cfg.budget_form) {
    case BudgetForm::kTotal:
      std::tie(dual, plan) = solve_dual_single(matrix, cfg.budget_total);
      break;
    case BudgetForm::kPerCapita: {
      const std::vector<double> pc{cfg.budget_per_capita};
      std::tie(dual, plan) = solve_per_capita(matrix, pc);
      break;
    }
    case BudgetForm::kMulti:
      std::tie(dual, plan) = solve_dual_multi(matrix, cfg.budgets_multi);
      break;
  }
  dual.model_checksum = model_checksum(model);
  save_plan(cfg.paths.plan, plan);
  save_dual(cfg.paths.dual, dual);
  std::cout << "allocated " << users.size() << " users; lambda =";
  for (const double l : dual.lambda) std::cout << ' ' << l;
  std::cout << "; expected spend =";
  for (const double s : plan.expected_spend) std::cout << ' ' << s;
  std::cout << " -> " << cfg.paths.plan << "\n";
  return 0;
}

// --- evaluate --------------------------------------------------------------------

json report_to_json(const MetricsReport& r) {
  json j;
  j["model"] = r.model_kind;
  j["grid"] = r.grid_levels;
  j["eq_tol"] = r.eq_tol;
  j["window_radius"] = r.window_radius;
  j["samples"] = r.num_samples;
  j["users"] = r.num_users;
  j["LogLoss"] = r.logloss;
  j["AUC-ROC"] = r.auc;
  j["RPR"] = r.rpr;
  j["EPR"] = r.epr;
  j["MLSS"] = r.mlss;
  j["Future-response"] = r.future_response;
  j["Future-cost"] = r.future_cost;
  j["Future-cost-error"] = r.future_cost_error;
  j["summation"] = r.summation;
  if (!r.notes.empty()) j["notes"] = r.notes;
  return j;
}

MetricsReport report_from_json(const json& j) {
  MetricsReport r;
  r.model_kind = j.value("model", "");
  r.grid_levels = j.value("grid", std::vector<double>{});
  r.eq_tol = j.value("eq_tol", kDefaultEqTol);
  r.window_radius = j.value("window_radius", 0.0);
  r.num_samples = j.value("samples", std::size_t{0});
  r.num_users = j.value("users", std::size_t{0});
  r.logloss = j.value("LogLoss", 0.0);
  r.auc = j.value("AUC-ROC", 0.0);
  r.rpr = j.value("RPR", 0.0);
  r.epr = j.value("EPR", 0.0);
  r.mlss = j.value("MLSS", 0.0);
  r.future_response = j.value("Future-response", 0.0);
  r.future_cost = j.value("Future-cost", 0.0);
  r.future_cost_error = j.value("Future-cost-error", 0.0);
  r.summation = j.value("summation", "neumaier");
  r.notes = j.value("notes", "");
  return r;
}

MetricsReport read_report_any(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open report: " + path);
  char c = 0;
  in >> c;
  if (c == '{') {
    in.seekg(0);
    json j;
    in >> j;
    return report_from_json(j);
  }
  return load_report(path);
}

void print_side_by_side(const MetricsReport& a, const MetricsReport& b) {
  const auto row = [](const std::string& name, double va, double vb) {
    std::printf("%-20s %14.6g %14.6g\n", name.c_str(), va, vb);
  };
  std::printf("%-20s %14s %14s\n", "metric", a.model_kind.c_str(), b.model_kind.c_str());
  row("LogLoss", a.logloss, b.logloss);
  row("AUC-ROC", a.auc, b.auc);
  row("RPR", a.rpr, b.rpr);
  row("EPR", a.epr, b.epr);
  row("MLSS", a.mlss, b.mlss);
  row("Future-response", a.future_response, b.future_response);
  row("Future-cost", a.future_cost, b.future_cost);
  row("Future-cost-error", a.future_cost_error, b.future_cost_error);
}

int cmd_evaluate(const RunConfig& cfg, bool as_json, const std::string& compare_with) {
  // one pass over required inputs so the user sees every missing file at once
  std::string missing;
  for (const auto& [p, what] :
       std::initializer_list<std::pair<std::string, std::string>>{
           {cfg.paths.model, "model"},
           {cfg.paths.test, "test dataset"},
           {cfg.paths.plan, "plan"}}) {
    if (!fs::exists(p)) missing += "  " + what + ": " + p + "\n";
  }
  if (!missing.empty()) throw config_error("missing inputs for evaluate:\n" + missing);

  const AnyModel model = load_model(cfg.paths.model);
  const auto test_samples = load_dataset(cfg.paths.test);
  const auto users = users_of(test_samples);
  const auto plan = load_plan(cfg.paths.plan);
  if (plan.assignment.size() != users.size())
    throw incompat_error("plan covers " + std::to_string(plan.assignment.size()) +
                         " users but the test split has " + std::to_string(users.size()));

  const IncentiveGrid& grid = model_grid(model);
  MetricsReport r;
  r.model_kind = model_kind(model);
  r.grid_levels = grid.levels();
  r.eq_tol = cfg.eq_tol;
  r.window_radius = cfg.window_radius;
  r.num_samples = test_samples.size();
  r.num_users = users.size();

  std::visit(
      [&](const auto& m) {
        r.logloss = logloss_metric(m, test_samples);
        r.auc = auc_roc(m, test_samples);
        const auto curves = curves_for_users(m, users);
        r.rpr = rpr_of_curves(curves, cfg.eq_tol);
        r.epr = epr_of_curves(curves, cfg.eq_tol);
        r.mlss = mlss_of_curves(curves, grid, cfg.window_radius);
        save_curves_csv(cfg.paths.curves_csv, users, curves, grid);
      },
      model);

  const double n = static_cast<double>(users.size());
  r.future_cost = plan.expected_spend[0] / n;
  double budget0 = 0.0;
  switch (cfg.budget_form) {
    case BudgetForm::kTotal: budget0 = cfg.budget_total / n; break;
    case BudgetForm::kPerCapita: budget0 = cfg.budget_per_capita; break;
    case BudgetForm::kMulti: budget0 = cfg.budgets_multi.at(0) / n; break;
  }
  r.future_cost_error = std::max(0.0, r.future_cost - budget0);

  if (fs::exists(cfg.paths.population)) {
    const auto pop = load_population(cfg.paths.population);
    r.future_response = future_response_synthetic(plan, users, grid, pop);
  } else {
    // logged-data route: match the plan against the test split as holdout
    const auto hm = future_metrics_holdout(plan, users, grid, test_samples, budget0);
    r.future_response = hm.response;
    r.future_cost = hm.cost;
    r.future_cost_error = hm.cost_error;
    r.notes = "holdout match rate " + format_double(hm.match_rate) +
              (hm.low_match_warning ? " (below 0.5: estimate unreliable)" : "");
  }

  if (as_json) {
    auto out = open_for_write(cfg.paths.report);
    out << report_to_json(r).dump(2) << '\n';
  } else {
    save_report(cfg.paths.report, r);
  }
  std::cout << "report -> " << cfg.paths.report << " (curves: " << cfg.paths.curves_csv
            << ")\n";
  if (!compare_with.empty()) {
    const auto other = read_report_any(compare_with);
    print_side_by_side(r, other);
  }
  return 0;
}

// --- decide ----------------------------------------------------------------------

int cmd_decide(const RunConfig& cfg, const std::vector<int>& feature_args) {
  require_exists(cfg.paths.model, "model file");
  require_exists(cfg.paths.dual, "dual solution");
  if (feature_args.size() != kNumFeatureFields)
    throw config_error("decide needs exactly 3 feature indices");
  const AnyModel model = load_model(cfg.paths.model);
  const DualSolution dual = load_dual(cfg.paths.dual);
  if (dual.model_checksum != 0 && dual.model_checksum != model_checksum(model))
    throw incompat_error(
        "dual variables were solved against a different model/grid (stale lambda); re-run "
        "allocate");
  const Features x{feature_args[0], feature_args[1], feature_args[2]};
  const auto cost_models = cost_models_from_config(cfg);
  const std::size_t level = std::visit(
      [&](const auto& m) { return online_decide(dual, m, x, cost_models); }, model);
  std::cout << level << ' ' << model_grid(model).level(level) << '\n';
  return 0;
}

int cmd_compare(const std::string& path_a, const std::string& path_b, bool as_json) {
  const auto a = read_report_any(path_a);
  const auto b = read_report_any(path_b);
  if (as_json) {
    json j;
    j["left"] = report_to_json(a);
    j["right"] = report_to_json(b);
    std::cout << j.dump(2) << '\n';
  } else {
    print_side_by_side(a, b);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"personalized promotion toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "promo_out";
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--out-dir", out_dir, "directory for default artifact paths");

  auto* gen = app.add_subcommand("gen", "generate population and dataset splits");
  std::string preset;
  bool force = false;
  std::optional<int> n1, n2, n3;
  std::optional<double> bias_strength;
  std::optional<std::int64_t> total;
  std::optional<std::uint64_t> seed_pop, seed_data;
  gen->add_option("--preset", preset, "synthetic1 (2x2x2) or synthetic2 (3x5x7)");
  gen->add_option("--n1", n1, "categories of feature 1");
  gen->add_option("--n2", n2, "categories of feature 2");
  gen->add_option("--n3", n3, "categories of feature 3");
  gen->add_option("--bias-strength", bias_strength, "treatment-bias tilt (0 = randomized)");
  gen->add_option("--total", total, "total samples across the three splits");
  gen->add_option("--seed", seed_pop, "population seed");
  gen->add_option("--data-seed", seed_data, "sampling seed");
  gen->add_flag("--force", force, "overwrite existing outputs");

  auto* train = app.add_subcommand("train", "train a response model");
  std::optional<std::string> model_kind;
  std::optional<std::uint64_t> seed_train;
  std::optional<double> lr, a_up, a_lo, a_decay;
  std::optional<int> epochs_bias, epochs_uplift, batch, embed_dim;
  std::optional<std::string> optimizer;
  bool ips = false;
  train->add_option("--model-kind", model_kind, "dipn | mlp");
  train->add_option("--seed", seed_train, "training seed");
  train->add_option("--lr", lr, "learning rate");
  train->add_option("--epochs-bias", epochs_bias);
  train->add_option("--epochs-uplift", epochs_uplift);
  train->add_option("--batch", batch);
  train->add_option("--embed-dim", embed_dim);
  train->add_option("--alpha-upper", a_up);
  train->add_option("--alpha-lower", a_lo);
  train->add_option("--alpha-decay", a_decay);
  train->add_option("--optimizer", optimizer, "sgd | momentum | adam");
  train->add_flag("--ips", ips, "fit propensities and attach IPS weights");

  auto* allocate = app.add_subcommand("allocate", "solve the budgeted assignment");
  std::optional<double> budget_total, budget_pc;
  std::vector<double> budgets_multi;
  allocate->add_option("--budget-total", budget_total, "total budget");
  allocate->add_option("--budget-per-capita", budget_pc, "per-capita budget");
  allocate->add_option("--budgets", budgets_multi, "multi-constraint budgets");

  auto* evaluate = app.add_subcommand("evaluate", "compute the metric report");
  bool as_json = false;
  std::string compare_with;
  evaluate->add_flag("--json", as_json, "write the report as JSON");
  evaluate->add_option("--compare", compare_with, "print side by side with another report");

  auto* decide = app.add_subcommand("decide", "single-user decision from solved duals");
  std::vector<int> features;
  decide->add_option("features", features, "three categorical indices")->expected(3);

  auto* compare = app.add_subcommand("compare", "print two reports side by side");
  std::string rep_a, rep_b;
  bool cmp_json = false;
  compare->add_option("left", rep_a, "first report")->required();
  compare->add_option("right", rep_b, "second report")->required();
  compare->add_flag("--json", cmp_json, "machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    default_paths(cfg, out_dir);

    if (!preset.empty()) {
      if (preset == "synthetic1") {
        cfg.n1 = cfg.n2 = cfg.n3 = 2;
      } else if (preset == "synthetic2") {
        cfg.n1 = 3;
        cfg.n2 = 5;
        cfg.n3 = 7;
      } else {
        throw config_error("unknown preset '" + preset + "'");
      }
    }
    if (n1) cfg.n1 = *n1;
    if (n2) cfg.n2 = *n2;
    if (n3) cfg.n3 = *n3;
    if (bias_strength) cfg.bias_strength = *bias_strength;
    if (total) {
      cfg.total = *total;
      if (cfg.split[0] + cfg.split[1] + cfg.split[2] != cfg.total)
        cfg.split = {cfg.total / 4, cfg.total / 4, cfg.total - 2 * (cfg.total / 4)};
    }
    if (seed_pop) cfg.seed_population = *seed_pop;
    if (seed_data) cfg.seed_data = *seed_data;
    if (model_kind) cfg.model_kind = *model_kind;
    if (seed_train) cfg.seed_train = *seed_train;
    if (lr) cfg.train.learning_rate = *lr;
    if (epochs_bias) cfg.train.epochs_bias = *epochs_bias;
    if (epochs_uplift) cfg.train.epochs_uplift = *epochs_uplift;
    if (batch) cfg.train.batch_size = *batch;
    if (embed_dim) cfg.embed_dim = *embed_dim;
    if (a_up) cfg.train.alpha_upper = *a_up;
    if (a_lo) cfg.train.alpha_lower = *a_lo;
    if (a_decay) cfg.train.alpha_decay = *a_decay;
    if (optimizer) cfg.train.optimizer = optimizer_from_name(*optimizer);
    if (ips) cfg.ips_enabled = true;
    if ((budget_total ? 1 : 0) + (budget_pc ? 1 : 0) + (budgets_multi.empty() ? 0 : 1) > 1)
      throw config_error("give exactly one budget form");
    if (budget_total) {
      cfg.budget_form = BudgetForm::kTotal;
      cfg.budget_total = *budget_total;
    }
    if (budget_pc) {
      cfg.budget_form = BudgetForm::kPerCapita;
      cfg.budget_per_capita = *budget_pc;
    }
    if (!budgets_multi.empty()) {
      cfg.budget_form = BudgetForm::kMulti;
      cfg.budgets_multi = budgets_multi;
      cfg.multi_costs.clear();
    }

    if (gen->parsed()) return cmd_gen(cfg, force);
    if (train->parsed()) return cmd_train(cfg);
    if (allocate->parsed()) return cmd_allocate(cfg);
    if (evaluate->parsed()) return cmd_evaluate(cfg, as_json, compare_with);
    if (decide->parsed()) return cmd_decide(cfg, features);
    if (compare->parsed()) return cmd_compare(rep_a, rep_b, cmp_json);
    return 2;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const infeasible_error& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return 3;
  } catch (const vocab_error& e) {
    std::cerr << "incompatible: " << e.what() << '\n';
    return 4;
  } catch (const incompat_error& e) {
    std::cerr << "incompatible: " << e.what() << '\n';
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
