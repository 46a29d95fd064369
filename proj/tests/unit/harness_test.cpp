#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

#include "adsense/allocation.hpp"
#include "adsense/error.hpp"
#include "adsense/harness.hpp"

using namespace adsense;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("adsense_harness_" + name);
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& f) {
  std::ifstream in(f);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentSpec small_spec() {
  ExperimentSpec spec;
  spec.config = ModelConfig::from_ratios(0.05, 2.0, 16.0, 1.0, 300);
  spec.r_grid = {from_db(0.0), from_db(15.0)};
  spec.policies = all_policies();
  spec.trials = 40;
  spec.base_seed = 17;
  spec.mc_samples_first_stage = 20;
  return spec;
}

}  // namespace

TEST_CASE("decibel helpers and grids") {
  CHECK(to_db(100.0) == doctest::Approx(20.0));
  CHECK(from_db(-20.0) == doctest::Approx(0.01));
  const std::vector<double> g = db_grid(-20.0, 40.0, 3.0);
  CHECK(g.size() == 21);
  CHECK(to_db(g.back()) == doctest::Approx(40.0));
  CHECK(db_grid(-20.0, 40.0, 1.0).size() == 61);
  CHECK_THROWS_AS(db_grid(0.0, 1.0, 0.0), DomainError);
  CHECK_THROWS_AS(db_grid(1.0, 0.0, 1.0), DomainError);
}

TEST_CASE("policy names round-trip") {
  for (Policy p : all_policies()) CHECK(parse_policy(policy_name(p)) == p);
  CHECK_FALSE(parse_policy("bogus").has_value());
  CHECK(all_policies().size() == 6);
}

TEST_CASE("trial with an empty support has zero error") {
  const ModelConfig c = ModelConfig::from_ratios(0.0, 2.0, 16.0, 10.0, 200);
  for (Policy p : all_policies()) {
    const TrialOutcome o = run_trial(c, p, 0.3, 5);
    CHECK(o.support_size == 0);
    CHECK(o.error == 0.0);
  }
}

TEST_CASE("oracle error vanishes at very high r") {
  const ModelConfig c = ModelConfig::from_ratios(0.05, 2.0, 16.0, 1e8, 1000);
  const TrialOutcome o = run_trial(c, Policy::oracle, 0.0, 3);
  CHECK(o.support_size > 0);
  CHECK(o.error / static_cast<double>(o.support_size) < 1e-6);
}

TEST_CASE("trial argument checks and trace") {
  const ModelConfig c = ModelConfig::from_ratios(0.1, 2.0, 16.0, 4.0, 100);
  CHECK_THROWS_AS(run_trial(c, Policy::optimal_two_stage, 1.5, 1), DomainError);
  CHECK_THROWS_AS(run_trial(ModelConfig::from_ratios(0.1, 2.0, 16.0, 0.0, 100), Policy::nonadaptive, 0.0, 1), DomainError);

  TrialTrace tr;
  const TrialOutcome o = run_trial(c, Policy::optimal_two_stage, 0.25, 7, &tr);
  REQUIRE(tr.states.size() == 3);
  REQUIRE(tr.allocations.size() == 2);
  double spent = 0.0;
  for (const auto& a : tr.allocations) spent += std::accumulate(a.begin(), a.end(), 0.0);
  CHECK(spent == doctest::Approx(100.0).epsilon(1e-9));
  CHECK(tr.states.back().budget_remaining == doctest::Approx(0.0).scale(100.0).epsilon(1e-9));
  CHECK(o.lambda_used == 0.25);
}

TEST_CASE("policies share the signal and noise at a matched seed") {
  const ModelConfig c = ModelConfig::from_ratios(0.1, 2.0, 16.0, 4.0, 500);
  TrialTrace a, b, d;
  run_trial(c, Policy::optimal_two_stage, 0.3, 99, &a);
  run_trial(c, Policy::subopt_second_stage, 0.3, 99, &b);
  run_trial(c, Policy::oracle, 0.3, 99, &d);
  CHECK(a.signal.amplitudes == b.signal.amplitudes);
  CHECK(a.signal.amplitudes == d.signal.amplitudes);
  // same first stage, so the same posterior after it
  CHECK(a.states[1].probs == b.states[1].probs);
}

TEST_CASE("non-adaptive simulation matches the closed form") {
  for (double q : {1.0, 2.0}) {
    ExperimentSpec spec;
    spec.config = ModelConfig::from_ratios(0.02, q, 16.0, 1.0, 2000);
    spec.r_grid = {from_db(-5.0), from_db(10.0)};
    spec.policies = {Policy::nonadaptive, Policy::oracle};
    spec.trials = 1500;
    spec.base_seed = 4;
    const ExperimentSummary s = estimate_gain(spec);
    for (const SummaryRow& row : s.rows) {
      if (row.policy == Policy::nonadaptive) {
        CHECK(std::abs(row.mean_error - row.nonadaptive_analytic) <= 3.0 * row.std_error);
        CHECK(std::abs(row.gain_db) <= 3.0 * row.gain_db_se);
      } else {
        ModelConfig c = spec.config;
        c.nu2 = c.sigma2 / row.r;
        CHECK(row.gain_db <= to_db(oracle_gain_bound(c)) + 3.0 * row.gain_db_se);
      }
    }
  }
}

TEST_CASE("estimate_gain rows do not depend on the worker count") {
  ExperimentSpec spec = small_spec();
  const ExperimentSummary a = estimate_gain(spec);
  spec.workers = 4;
  const ExperimentSummary b = estimate_gain(spec);
  REQUIRE(a.rows.size() == b.rows.size());
  REQUIRE(a.rows.size() == 12);
  for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(gain_csv_row(a.rows[i]) == gain_csv_row(b.rows[i]));
  CHECK(a.find(Policy::oracle, 15.0) != nullptr);
  CHECK(a.find(Policy::oracle, 16.0) == nullptr);
}

TEST_CASE("lambda hints and sinks") {
  ExperimentSpec spec = small_spec();
  spec.policies = {Policy::optimal_two_stage};
  std::size_t seen = 0;
  const ExperimentSummary s = estimate_gain(
      spec, [&](const SummaryRow&) { ++seen; }, [](Policy, std::size_t) { return std::optional<double>{0.2}; });
  CHECK(seen == 2);
  for (const SummaryRow& r : s.rows) CHECK(r.lambda == 0.2);
}

TEST_CASE("CSV layout") {
  CHECK(gain_csv_header() == "policy,p,q,s,r_db,lambda,mean_error,std_error,gain_db,bound_gain_db,trials,seed");
  ExperimentSpec spec = small_spec();
  spec.trials = 1;
  spec.policies = {Policy::nonadaptive};
  const ExperimentSummary s = estimate_gain(spec);
  const std::string row = gain_csv_row(s.rows.front());
  CHECK(row.rfind("nonadaptive,", 0) == 0);
  CHECK(row.find(",unreliable,") != std::string::npos);
  CHECK(std::count(row.begin(), row.end(), ',') == 11);
}

TEST_CASE("spec validation") {
  ExperimentSpec spec = small_spec();
  spec.trials = 0;
  CHECK_THROWS_AS(spec.validate(), DomainError);
  spec = small_spec();
  spec.r_grid.clear();
  CHECK_THROWS_AS(spec.validate(), DomainError);
  spec = small_spec();
  spec.r_grid = {0.0};
  CHECK_THROWS_AS(spec.validate(), DomainError);
  spec = small_spec();
  spec.policies.clear();
  CHECK_THROWS_AS(spec.validate(), DomainError);
}

TEST_CASE("tail check") {
  const ModelConfig c = ModelConfig::from_ratios(0.1, 2.0, 16.0, 1.0, 1000);
  const TailCheckResult wide = tail_check_lemma1(c, 0.5, 10.0, 200, 3);
  CHECK(wide.exceedances == 0);
  CHECK(wide.empirical_freq == 0.0);

  const ModelConfig full = ModelConfig::from_ratios(1.0, 2.0, 16.0, 1.0, 1000);
  CHECK(tail_check_lemma1(full, 0.5, 0.01, 100, 3).empirical_freq == 0.0);

  const TailCheckResult t = tail_check_lemma1(c, 0.5, 0.05, 300, 8);
  CHECK(t.empirical_freq <= t.bound_freq);
  CHECK(t.cp_gamma == doctest::Approx(0.6103307816072754).epsilon(1e-9));
  const TailCheckResult t4 = tail_check_lemma1(c, 0.5, 0.05, 300, 8, 4);
  CHECK(t4.exceedances == t.exceedances);

  CHECK_THROWS_AS(tail_check_lemma1(c, 0.5, 0.05, 99, 3), DomainError);
  CHECK_THROWS_AS(tail_check_lemma1(c, 0.0, 0.05, 100, 3), DomainError);
  CHECK_THROWS_AS(tail_check_lemma1(c, 0.5, 0.0, 100, 3), DomainError);
}

TEST_CASE("lambda sweep") {
  ExperimentSpec spec = small_spec();
  spec.config.p = 0.01;
  spec.config.n_dim = 1000;
  spec.r_grid = {from_db(20.0), from_db(30.0)};
  const std::vector<LambdaRow> rows = lambda_sweep(spec);
  REQUIRE(rows.size() == 2);
  for (const LambdaRow& r : rows) {
    CHECK(r.lambda_exact >= 0.0);
    CHECK(r.lambda_exact <= 1.0);
    CHECK(r.lambda_bound > 0.0);
    CHECK(r.lambda_asymptotic > 0.0);
    CHECK_FALSE(r.bound_undetermined);
  }
  CHECK(rows[1].lambda_bound < rows[0].lambda_bound);
  CHECK(lambda_csv_row(rows[0]).find(",false,20,17") != std::string::npos);
}

TEST_CASE("sweep writes rows and a manifest") {
  const fs::path dir = scratch_dir("sweep");
  SweepPlan plan{small_spec(), {0.05, 0.1}, {2.0}};
  plan.spec.policies = {Policy::nonadaptive, Policy::oracle};
  const auto out = sweep(plan, dir);
  CHECK(out.size() == 2);
  const std::string csv = slurp(dir / "gain.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 2 * 2);
  const nlohmann::json m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(m["status"] == "complete");
  CHECK(m["rows_written"] == 8);
  CHECK(m.contains("version"));
  CHECK(m["spec"]["base_seed"] == 17);
  fs::remove_all(dir);
}

TEST_CASE("failed sweep leaves a partial manifest") {
  const fs::path dir = scratch_dir("partial");
  SweepPlan plan{small_spec(), {0.05, 1.5}, {2.0}};
  plan.spec.policies = {Policy::nonadaptive};
  CHECK_THROWS(sweep(plan, dir));
  const nlohmann::json m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  CHECK(m["status"] == "partial");
  CHECK(m["rows_written"] == 2);
  CHECK(m["error"].get<std::string>().find("p must be") != std::string::npos);
  fs::remove_all(dir);
}
