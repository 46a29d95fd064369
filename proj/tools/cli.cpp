#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "adsense/allocation.hpp"
#include "adsense/error.hpp"
#include "adsense/manifest.hpp"
#include "adsense/simd/kernels.hpp"

namespace adsense::cli {
namespace {

using nlohmann::json;

constexpr const char* kSynopsis =
    "usage: adsense <command> [options]\n"
    "commands: bounds, sweep-lambda, sweep-gain, tail-check, trial\n"
    "run `adsense --help` for every option";

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string opt_fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string{}; }

[[noreturn]] void usage(const std::string& msg) { throw ExitRequest{2, msg}; }

std::optional<CoefficientSource> parse_source(const std::string& s) {
  for (auto src : {CoefficientSource::quadrature, CoefficientSource::prop1, CoefficientSource::prop1_weak,
                   CoefficientSource::prop2, CoefficientSource::automatic}) {
    if (s == source_name(src)) return src;
  }
  if (s == "auto") return CoefficientSource::automatic;
  return std::nullopt;
}

std::vector<Policy> parse_policies(const std::vector<std::string>& names) {
  std::vector<Policy> out;
  for (const auto& n : names) {
    if (n == "all") {
      for (Policy p : all_policies()) out.push_back(p);
      continue;
    }
    auto p = parse_policy(n);
    if (!p) usage("policies: unknown policy '" + n + "'");
    out.push_back(*p);
  }
  return out;
}

// Typed read of one config-file key; type mismatches are usage errors.
template <typename T>
T get_field(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    usage("config file: field " + key + " has the wrong type");
  }
}

template <typename T>
std::vector<T> get_list(const json& j, const std::string& key) {
  if (j.is_array()) return get_field<std::vector<T>>(j, key);
  return {get_field<T>(j, key)};
}

void apply_file(CliConfig& c, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) usage("config file: cannot read " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    usage("config file: " + path.string() + " is not valid JSON (" + e.what() + ")");
  }
  if (!j.is_object()) usage("config file: top level must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const json& v = it.value();
    if (k == "p") c.p_values = get_list<double>(v, k);
    else if (k == "q") c.q_values = get_list<double>(v, k);
    else if (k == "s") c.s = get_field<double>(v, k);
    else if (k == "N" || k == "n_dim") c.n_dim = get_field<std::size_t>(v, k);
    else if (k == "trials") c.trials = get_field<std::size_t>(v, k);
    else if (k == "seed" || k == "base_seed") c.seed = get_field<std::uint64_t>(v, k);
    else if (k == "r_db_min") c.r_db_min = get_field<double>(v, k);
    else if (k == "r_db_max") c.r_db_max = get_field<double>(v, k);
    else if (k == "r_db_step") c.r_db_step = get_field<double>(v, k);
    else if (k == "r_db") c.r_db = get_field<double>(v, k);
    else if (k == "mc_samples" || k == "mc_samples_first_stage") c.mc_samples = get_field<std::size_t>(v, k);
    else if (k == "workers") c.workers = get_field<unsigned>(v, k);
    else if (k == "lambda") c.lambda = get_field<double>(v, k);
    else if (k == "epsilon") c.epsilon = get_field<double>(v, k);
    else if (k == "out_dir") c.out_dir = get_field<std::string>(v, k);
    else if (k == "isa") c.isa = get_field<std::string>(v, k);
    else if (k == "source" || k == "bound_source") {
      auto s = parse_source(get_field<std::string>(v, k));
      if (!s) usage("config file: field " + k + " names an unknown source");
      c.source = *s;
    } else if (k == "policies") {
      c.policies = parse_policies(get_list<std::string>(v, k));
    } else {
      usage("config file: unknown field " + k);
    }
  }
}

void validate(const CliConfig& c) {
  if (c.p_values.empty()) usage("p: at least one value required");
  if (c.q_values.empty()) usage("q: at least one value required");
  try {
    for (double p : c.p_values) {
      for (double q : c.q_values) ModelConfig::from_ratios(p, q, c.s, 1.0, c.n_dim);
    }
    db_grid(c.r_db_min, c.r_db_max, c.step_db());
  } catch (const DomainError& e) {
    usage(e.what());
  }
  if (!std::isfinite(c.r_db)) usage("r_db must be finite");
  if (c.trials < 1) usage("trials must be >= 1");
  if (c.mc_samples < 1) usage("mc_samples must be >= 1");
  if (c.workers < 1) usage("workers must be >= 1");
  if (!(c.epsilon > 0.0)) usage("epsilon must be positive");
  if (c.lambda && !(*c.lambda >= 0.0 && *c.lambda <= 1.0)) usage("lambda must be in [0, 1]");
  if (c.isa && *c.isa != "scalar" && *c.isa != "avx2") usage("isa must be scalar or avx2");

  const bool single = c.command == Command::trial || c.command == Command::tail_check;
  if (single && (c.p_values.size() != 1 || c.q_values.size() != 1)) {
    usage(std::string{command_name(c.command)} + " takes a single p and q");
  }
  if (c.command == Command::sweep_gain || c.command == Command::sweep_lambda) {
    for (double p : c.p_values) {
      if (!(p > 0.0 && p < 1.0)) usage("p must be in (0, 1) for " + std::string{command_name(c.command)});
    }
  }
  if (c.command == Command::tail_check) {
    if (c.trials < 100) usage("trials must be >= 100 for tail-check");
    if (c.lambda && !(*c.lambda > 0.0)) usage("lambda must be in (0, 1] for tail-check");
    if (!(c.p_values[0] > 0.0)) usage("p must be positive for tail-check");
  }
  if (c.command == Command::trial && c.policies.size() > 1) usage("trial takes a single policy");
}

json config_json(const CliConfig& c) {
  json pol = json::array();
  for (Policy p : c.policies) pol.push_back(std::string{policy_name(p)});
  json j{{"command", command_name(c.command)},
         {"out_dir", c.out_dir.string()},
         {"p", c.p_values},
         {"q", c.q_values},
         {"s", c.s},
         {"N", c.n_dim},
         {"trials", c.trials},
         {"seed", c.seed},
         {"r_db_min", c.r_db_min},
         {"r_db_max", c.r_db_max},
         {"r_db_step", c.step_db()},
         {"r_db", c.r_db},
         {"mc_samples", c.mc_samples},
         {"workers", c.workers},
         {"source", source_name(c.source)},
         {"policies", pol},
         {"epsilon", c.epsilon}};
  j["lambda"] = c.lambda ? json(*c.lambda) : json(nullptr);
  if (c.config_path) j["config_path"] = c.config_path->string();
  return j;
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return f;
}

ExperimentSpec spec_for(const CliConfig& c, double p, double q) {
  ExperimentSpec spec;
  spec.config = c.model(p, q, 1.0);
  spec.r_grid = c.r_grid();
  spec.policies = c.policies.empty() ? all_policies() : c.policies;
  spec.trials = c.trials;
  spec.base_seed = c.seed;
  spec.mc_samples_first_stage = c.mc_samples;
  spec.workers = c.workers;
  spec.bound_source = c.source;
  return spec;
}

void run_bounds(const CliConfig& c, std::ostream& log) {
  const auto path = c.out_dir / "bounds.csv";
  auto csv = open_csv(path);
  csv << bounds_csv_header() << '\n';
  std::size_t rows = 0;
  for (double p : c.p_values) {
    for (double q : c.q_values) {
      for (double r : c.r_grid()) {
        const BoundReport rep = gain_lower_bound(c.model(p, q, r), c.source, true);
        csv << bounds_csv_row(rep, to_db(r)) << '\n';
        ++rows;
        if (c.verbosity > 0) log << "bounds p=" << p << " q=" << q << " r_db=" << to_db(r) << '\n';
      }
    }
  }
  if (!csv.flush()) throw std::runtime_error("failed writing " + path.string());
  json m{{"command", "bounds"}, {"cli", config_json(c)}, {"outputs", {"bounds.csv"}}, {"rows_written", rows},
         {"status", "complete"}};
  write_manifest(c.out_dir / "manifest.json", m);
}

void run_sweep_lambda(const CliConfig& c, std::ostream& log) {
  const auto path = c.out_dir / "lambda.csv";
  auto csv = open_csv(path);
  csv << lambda_csv_header() << '\n';
  std::size_t rows = 0;
  for (double p : c.p_values) {
    for (double q : c.q_values) {
      lambda_sweep(spec_for(c, p, q), [&](const LambdaRow& row) {
        csv << lambda_csv_row(row) << '\n';
        csv.flush();
        ++rows;
        if (c.verbosity > 0) log << "sweep-lambda p=" << p << " q=" << q << " r_db=" << row.r_db << '\n';
      });
    }
  }
  if (!csv) throw std::runtime_error("failed writing " + path.string());
  json m{{"command", "sweep-lambda"}, {"cli", config_json(c)}, {"outputs", {"lambda.csv"}},
         {"rows_written", rows}, {"status", "complete"}};
  write_manifest(c.out_dir / "manifest.json", m);
}

void run_sweep_gain(const CliConfig& c) {
  SweepPlan plan{spec_for(c, c.p_values[0], c.q_values[0]), c.p_values, c.q_values};
  sweep(plan, c.out_dir);
  // sweep() wrote its own manifest; add the CLI view of the run.
  const auto mpath = c.out_dir / "manifest.json";
  std::ifstream in(mpath);
  json m = json::parse(in);
  m["cli"] = config_json(c);
  write_manifest(mpath, m);
}

void run_tail_check(const CliConfig& c, std::ostream& out) {
  const ModelConfig cfg = c.model(c.p_values[0], c.q_values[0], from_db(c.r_db));
  const double lam = c.lambda.value_or(0.5);
  const TailCheckResult res = tail_check_lemma1(cfg, lam, c.epsilon, c.trials, c.seed, c.workers);
  const bool pass = res.empirical_freq <= res.bound_freq;
  out << "tail-check p=" << fmt(cfg.p) << " gamma=" << fmt(cfg.gamma()) << " N=" << cfg.n_dim
      << " lambda=" << fmt(lam) << " epsilon=" << fmt(c.epsilon) << '\n'
      << "empirical_freq=" << fmt(res.empirical_freq) << " (" << res.exceedances << "/" << res.trials << ")"
      << " bound_freq=" << fmt(res.bound_freq) << ' ' << (pass ? "PASS" : "FAIL") << '\n';
  json r{{"empirical_freq", res.empirical_freq}, {"bound_freq", res.bound_freq}, {"cp_gamma", res.cp_gamma},
         {"threshold", res.threshold}, {"exceedances", res.exceedances}, {"trials", res.trials},
         {"pass", pass}};
  r["cp_2gamma"] = res.cp_2gamma ? json(*res.cp_2gamma) : json(nullptr);
  json m{{"command", "tail-check"}, {"cli", config_json(c)}, {"lambda", lam}, {"result", r},
         {"status", "complete"}};
  write_manifest(c.out_dir / "manifest.json", m);
}

void run_trial_cmd(const CliConfig& c, std::ostream& out) {
  const ModelConfig cfg = c.model(c.p_values[0], c.q_values[0], from_db(c.r_db));
  const Policy policy = c.policies.empty() ? Policy::optimal_two_stage : c.policies[0];
  double lam = 0.0;
  std::string lam_from = "flag";
  if (c.lambda) {
    lam = *c.lambda;
  } else if (policy == Policy::large_r_approx) {
    lam = theorem2_lambda_star(cfg);
    lam_from = "asymptotic";
  } else if (policy != Policy::nonadaptive && policy != Policy::oracle) {
    lam = first_stage_bound(cfg, c.source).lambda_frac;
    lam_from = "bound";
  }
  TrialTrace trace;
  const TrialOutcome res = run_trial(cfg, policy, lam, c.seed, &trace);

  out << "# policy=" << policy_name(policy) << " lambda=" << fmt(res.lambda_used) << " (" << lam_from << ")"
      << " seed=" << c.seed << " error=" << fmt(res.error) << " analytic_risk=" << fmt(res.analytic_risk)
      << " support=" << res.support_size << '\n';
  out << "stage,index,in_support,x,prob,mean,var,effort_next\n";
  const auto& sig = trace.signal;
  for (std::size_t t = 0; t < trace.states.size(); ++t) {
    const BeliefState& st = trace.states[t];
    for (std::size_t i = 0; i < st.size(); ++i) {
      const double eff = t < trace.allocations.size() ? trace.allocations[t][i] : 0.0;
      out << t << ',' << i << ',' << int(sig.support[i]) << ',' << fmt(sig.amplitudes[i]) << ','
          << fmt(st.probs[i]) << ',' << fmt(st.means[i]) << ',' << fmt(st.variances[i]) << ',' << fmt(eff)
          << '\n';
    }
  }
  json m{{"command", "trial"},
         {"cli", config_json(c)},
         {"policy", policy_name(policy)},
         {"lambda", res.lambda_used},
         {"lambda_from", lam_from},
         {"result", {{"error", res.error}, {"analytic_risk", res.analytic_risk}, {"support", res.support_size}}},
         {"status", "complete"}};
  write_manifest(c.out_dir / "manifest.json", m);
}

json error_json(const char* kind, const std::exception& e) {
  json j{{"error", kind}, {"message", e.what()}};
  if (auto* ne = dynamic_cast<const NumericalError*>(&e)) {
    j["value"] = ne->value();
    j["error_estimate"] = ne->error_estimate();
  }
  return j;
}

}  // namespace

const char* command_name(Command command) {
  switch (command) {
    case Command::bounds: return "bounds";
    case Command::sweep_lambda: return "sweep-lambda";
    case Command::sweep_gain: return "sweep-gain";
    case Command::tail_check: return "tail-check";
    case Command::trial: return "trial";
  }
  return "?";
}

double CliConfig::step_db() const {
  if (r_db_step != 0.0) return r_db_step;
  return command == Command::bounds ? 1.0 : 3.0;
}

std::vector<double> CliConfig::r_grid() const { return db_grid(r_db_min, r_db_max, step_db()); }

ModelConfig CliConfig::model(double p, double q, double r) const {
  return ModelConfig::from_ratios(p, q, s, r, n_dim);
}

CliConfig parse_and_validate(const std::vector<std::string>& argv) {
  CLI::App app{"Two-stage adaptive sensing: analytic gain bounds and Monte Carlo sweeps", "adsense"};
  app.require_subcommand(1);

  std::string config_path, out_dir, source, isa;
  std::vector<double> p, q;
  double s = 0, r_db_min = 0, r_db_max = 0, r_db_step = 0, r_db = 0, lambda = 0, epsilon = 0;
  std::size_t n_dim = 0, trials = 0, mc = 0;
  std::uint64_t seed = 0;
  unsigned workers = 0;
  std::vector<std::string> policies;
  int verbose = 0;

  auto* o_config = app.add_option("--config", config_path, "JSON experiment file; explicit flags win over it");
  auto* o_out = app.add_option("--out-dir", out_dir, "directory for CSV and manifest output (default: out)");
  auto* o_p = app.add_option("--p", p, "prior signal probability p in [0, 1]; comma list allowed (default 0.01)")
                  ->delimiter(',');
  auto* o_q = app.add_option("--q", q, "error exponent q > 0; comma list allowed (default 2)")->delimiter(',');
  auto* o_s = app.add_option("--s", s, "amplitude SNR s = mu^2 / sigma^2, linear, >= 0 (default 16)");
  auto* o_n = app.add_option("--N", n_dim, "number of components N >= 1 (default 10000)");
  auto* o_trials = app.add_option("--trials", trials, "Monte Carlo trials per r point (default 2000)");
  auto* o_seed = app.add_option("--seed", seed, "base seed, unsigned 64-bit (default 1)");
  auto* o_rmin = app.add_option("--r-db-min", r_db_min, "lowest budget ratio r in dB (default -20)");
  auto* o_rmax = app.add_option("--r-db-max", r_db_max, "highest budget ratio r in dB (default 40)");
  auto* o_rstep = app.add_option("--r-db-step", r_db_step,
                                 "r grid step in dB (default 1 for bounds, 3 for the sweeps)");
  auto* o_rdb = app.add_option("--r-db", r_db, "budget ratio r in dB for trial and tail-check (default 0)");
  auto* o_mc = app.add_option("--mc-samples", mc,
                              "Monte Carlo samples per lambda in the exact first-stage search (default 2000)");
  auto* o_workers = app.add_option("--workers", workers, "worker threads, >= 1 (default 1)");
  auto* o_source = app.add_option("--source", source,
                                   "Chernoff coefficient source: automatic|quadrature|prop1|prop1_weak|prop2");
  auto* o_pol = app.add_option("--policies", policies,
                               "comma list of policies or 'all': optimal_two_stage, subopt_first_stage, "
                               "subopt_second_stage, large_r_approx, nonadaptive, oracle")
                    ->delimiter(',');
  auto* o_lambda = app.add_option("--lambda", lambda,
                                  "first-stage budget fraction in [0, 1] for trial and tail-check "
                                  "(default: bound-based for trial, 0.5 for tail-check)");
  auto* o_eps = app.add_option("--epsilon", epsilon, "tail-check deviation epsilon > 0 (default 0.05)");
  auto* o_isa = app.add_option("--isa", isa, "force kernel ISA: scalar|avx2 (default: best available)");
  app.add_flag("-v,--verbose", verbose, "progress on stderr; repeat for more");

  struct Sub {
    const char* name;
    const char* help;
    Command cmd;
  };
  const Sub subs[] = {
      {"bounds", "analytic gain lower bound and Chernoff coefficients per r (no Monte Carlo)", Command::bounds},
      {"sweep-lambda", "exact, bound-based and large-r first-stage fractions per r", Command::sweep_lambda},
      {"sweep-gain", "simulated gain of each policy per r", Command::sweep_gain},
      {"tail-check", "empirical vs Bernstein tail frequency of the first-stage statistic", Command::tail_check},
      {"trial", "one seeded trial; prints the per-stage state trajectory as CSV", Command::trial},
  };
  std::vector<CLI::App*> sub_apps;
  for (const auto& sdef : subs) sub_apps.push_back(app.add_subcommand(sdef.name, sdef.help)->fallthrough());

  std::vector<std::string> args(argv.size() > 1 ? argv.begin() + 1 : argv.end(), argv.end());
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    throw ExitRequest{0, app.help()};
  } catch (const CLI::CallForAllHelp&) {
    throw ExitRequest{0, app.help("", CLI::AppFormatMode::All)};
  } catch (const CLI::RequiredError& e) {
    if (app.get_subcommands().empty()) usage(std::string{"missing command\n"} + kSynopsis);
    usage(std::string{e.what()} + '\n' + kSynopsis);
  } catch (const CLI::ParseError& e) {
    usage(std::string{e.what()} + '\n' + kSynopsis);
  }

  CliConfig c;
  for (std::size_t i = 0; i < sub_apps.size(); ++i) {
    if (sub_apps[i]->parsed()) c.command = subs[i].cmd;
  }
  if (o_config->count()) {
    c.config_path = config_path;
    apply_file(c, config_path);
  }
  if (o_out->count()) c.out_dir = out_dir;
  if (o_p->count()) c.p_values = p;
  if (o_q->count()) c.q_values = q;
  if (o_s->count()) c.s = s;
  if (o_n->count()) c.n_dim = n_dim;
  if (o_trials->count()) c.trials = trials;
  if (o_seed->count()) c.seed = seed;
  if (o_rmin->count()) c.r_db_min = r_db_min;
  if (o_rmax->count()) c.r_db_max = r_db_max;
  if (o_rstep->count()) c.r_db_step = r_db_step;
  if (o_rdb->count()) c.r_db = r_db;
  if (o_mc->count()) c.mc_samples = mc;
  if (o_workers->count()) c.workers = workers;
  if (o_source->count()) {
    auto src = parse_source(source);
    if (!src) usage("source: unknown coefficient source '" + source + "'");
    c.source = *src;
  }
  if (o_pol->count()) c.policies = parse_policies(policies);
  if (o_lambda->count()) c.lambda = lambda;
  if (o_eps->count()) c.epsilon = epsilon;
  if (o_isa->count()) c.isa = isa;
  c.verbosity = verbose;
  validate(c);
  return c;
}

void dispatch(const CliConfig& c, std::ostream& out, std::ostream& log) {
  if (c.isa) simd::force_isa(*c.isa == "avx2" ? simd::Isa::avx2 : simd::Isa::scalar);
  std::filesystem::create_directories(c.out_dir);
  switch (c.command) {
    case Command::bounds: run_bounds(c, log); break;
    case Command::sweep_lambda: run_sweep_lambda(c, log); break;
    case Command::sweep_gain: run_sweep_gain(c); break;
    case Command::tail_check: run_tail_check(c, out); break;
    case Command::trial: run_trial_cmd(c, out); break;
  }
}

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CliConfig c;
  try {
    c = parse_and_validate(argv);
  } catch (const ExitRequest& e) {
    (e.code == 0 ? out : err) << e.message << '\n';
    return e.code;
  }
  try {
    dispatch(c, out, err);
  } catch (const UsageError& e) {
    err << error_json("usage", e).dump() << '\n';
    return 2;
  } catch (const DomainError& e) {
    err << error_json("domain", e).dump() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    err << error_json("numerical", e).dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << error_json("runtime", e).dump() << '\n';
    return 1;
  }
  return 0;
}

std::string bounds_csv_header() {
  return "p,q,s,r_db,lambda_star,c0,cp_exact,cp_prop1,cp_prop1_weak,cp_prop2,gain_bound_db,undetermined_lambda";
}

std::string bounds_csv_row(const BoundReport& b, double r_db) {
  return fmt(b.p) + ',' + fmt(b.q) + ',' + fmt(b.s) + ',' + fmt(r_db) + ',' + fmt(b.maximizing_lambda) + ',' +
         fmt(b.c0) + ',' + opt_fmt(b.cp_exact) + ',' + fmt(b.cp_upper_prop1) + ',' + fmt(b.cp_upper_prop1_weak) +
         ',' + opt_fmt(b.cp_upper_prop2) + ',' + fmt(to_db(b.gain_lower_bound)) + ',' +
         (b.undetermined_lambda ? "true" : "false");
}

}  // namespace adsense::cli
