#include "cli.hpp"

#include "gcf/crossfit.hpp"
#include "gcf/data_model.hpp"
#include "gcf/error.hpp"
#include "gcf/estimators.hpp"
#include "gcf/nuisance.hpp"
#include "gcf/report.hpp"
#include "gcf/simulation.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <optional>

namespace gcf::cli {

namespace {

struct LearnerOptions {
  std::string outcome_learner = "linear";
  std::string propensity_learner = "multinomial-logit";
  double outcome_ridge = 0.0;
  double logit_ridge = 1e-8;
  int logit_max_iter = 100;
  double logit_tol = 1e-8;

  LearnerSpec outcome_spec() const {
    LearnerSpec spec = LearnerSpec::linear(outcome_ridge);
    spec.kind = parse_learner_kind(outcome_learner);
    if (spec.kind == LearnerSpec::Kind::plugin) spec.plugin_name = outcome_learner;
    return spec;
  }
  LearnerSpec propensity_spec() const {
    LearnerSpec spec = LearnerSpec::multinomial_logit(logit_ridge, logit_max_iter, logit_tol);
    spec.kind = parse_learner_kind(propensity_learner);
    if (spec.kind == LearnerSpec::Kind::plugin) spec.plugin_name = propensity_learner;
    return spec;
  }
};

struct EstimateConfig {
  std::string input;
  std::string treatment;
  std::string outcome;
  std::optional<int> arms;
  std::vector<std::string> estimators{"dif", "gaipw", "gcf"};
  int k = 3;
  double xi = 1e-3;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  bool unstratified = false;
  bool binary_style_denominator = false;
  std::string interval = "simultaneous";
  LearnerOptions learners;
  std::string json_out;
  std::string table_out;
  std::string models_out;
  std::string folds_out;
};

struct SimulateConfig {
  std::string design;
  std::string design_file;
  std::optional<std::size_t> n;
  std::optional<std::size_t> reps;
  std::optional<std::uint64_t> seed;
  std::optional<int> k;
  std::optional<double> xi;
  std::optional<double> alpha;
  std::vector<std::string> estimators;
  std::optional<std::string> interval;
  bool unstratified = false;
  unsigned threads = 0;
  LearnerOptions learners;
  std::string csv_out;
  std::string table_out;
  std::string json_out;
};

void add_learner_options(CLI::App* cmd, LearnerOptions& opts) {
  cmd->add_option("--outcome-learner", opts.outcome_learner,
                  "Outcome learner: linear or a registered plug-in name")
      ->capture_default_str();
  cmd->add_option("--propensity-learner", opts.propensity_learner,
                  "Propensity learner: multinomial-logit or a registered plug-in name")
      ->capture_default_str();
  cmd->add_option("--outcome-ridge", opts.outcome_ridge, "Ridge penalty for outcome regressions")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--logit-ridge", opts.logit_ridge, "Ridge penalty for the multinomial logit")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--logit-max-iter", opts.logit_max_iter, "Newton iteration cap")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--logit-tol", opts.logit_tol, "Tolerance on the max-norm of the mean score")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

std::ostream& open_or(const std::string& path, std::ofstream& file, std::ostream& fallback) {
  if (path.empty() || path == "-") return fallback;
  file.open(path);
  if (!file) throw ArgumentError("cannot write '" + path + "'");
  return file;
}

std::vector<Method> parse_methods(const std::vector<std::string>& names) {
  std::vector<Method> methods;
  for (const auto& name : names) {
    const auto m = parse_method(name);
    if (std::find(methods.begin(), methods.end(), m) == methods.end()) methods.push_back(m);
  }
  if (methods.empty()) throw ArgumentError("no estimators requested");
  return methods;
}

int cmd_estimate(const EstimateConfig& cfg, const std::string& effective_config, std::ostream& out,
                 std::ostream& err) {
  const auto methods = parse_methods(cfg.estimators);
  if (std::find(methods.begin(), methods.end(), Method::oracle) != methods.end()) {
    throw ArgumentError("ORACLE needs the true nuisance functions; it is only available in simulate");
  }
  if (!(cfg.xi > 0.0 && cfg.xi < 0.5)) throw ArgumentError("xi must lie in (0, 0.5)");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ArgumentError("alpha must lie in (0, 1)");

  const auto raw = read_csv_file(cfg.input);
  const auto data = validate_dataset(raw, {cfg.treatment, cfg.outcome}, cfg.arms);
  const auto summary = arm_counts(data);
  for (const int j : summary.empty_arms()) {
    err << "warning: arm " << data.arm_name(j) << " has no units\n";
  }

  const auto learners =
      NuisanceLearners::from_specs(cfg.learners.outcome_spec(), cfg.learners.propensity_spec());
  EstimatorOptions options;
  options.alpha = cfg.alpha;
  options.binary_style_denominator = cfg.binary_style_denominator;
  options.interval = parse_interval(cfg.interval);

  std::vector<AteEstimate> estimates;
  std::optional<NuisancePredictions> crossfit_np;
  std::optional<NuisancePredictions> full_np;
  std::optional<FoldPlan> plan;
  for (const auto method : methods) {
    switch (method) {
      case Method::dif:
        estimates.push_back(dif_estimate(data, options));
        break;
      case Method::gaipw:
        full_np = fit_full_sample(data, learners, cfg.xi);
        estimates.push_back(gaipw_estimate(data, *full_np, options));
        break;
      case Method::gcf:
        plan = make_folds(data, cfg.k, cfg.seed, !cfg.unstratified);
        crossfit_np = fit_out_of_fold(data, *plan, learners, cfg.xi);
        estimates.push_back(gcf_estimate(data, *plan, *crossfit_np, options));
        break;
      case Method::oracle:
        break;
    }
  }

  nlohmann::json doc{{"schema_version", kSchemaVersion},
                     {"input", cfg.input},
                     {"n", data.n()},
                     {"p", data.p()},
                     {"n_arms", data.n_arms()},
                     {"arm_labels", data.arm_names()},
                     {"arm_counts", summary.counts},
                     {"config", effective_config},
                     {"estimates", nlohmann::json::array()}};
  for (const auto& est : estimates) doc["estimates"].push_back(to_json(est, data.arm_names()));

  const NuisancePredictions* diag_source = crossfit_np ? &*crossfit_np : (full_np ? &*full_np : nullptr);
  if (diag_source != nullptr) {
    const auto diag = positivity_diagnostic(diag_source->e_raw, cfg.xi);
    doc["positivity"] = to_json(diag);
    out << "positivity (xi=" << cfg.xi << "): " << diag.violations << " of " << data.n()
        << " units outside [xi, 1-xi]" << (diag.overlap_concern ? "  ** overlap concern **" : "")
        << '\n';
    for (int j = 1; j <= data.n_arms(); ++j) {
      out << "  arm " << data.arm_name(j) << ": min " << diag.min_by_arm[static_cast<std::size_t>(j - 1)]
          << ", max " << diag.max_by_arm[static_cast<std::size_t>(j - 1)] << '\n';
    }
  }

  std::ofstream table_file;
  open_or(cfg.table_out, table_file, out) << format_estimate_table(estimates, data.arm_names());
  if (!cfg.json_out.empty()) {
    std::ofstream json_file;
    open_or(cfg.json_out, json_file, out) << doc.dump(2) << '\n';
  }
  if (!cfg.folds_out.empty() && plan) {
    std::ofstream folds_file;
    write_folds_csv(*plan, open_or(cfg.folds_out, folds_file, out));
  }
  if (!cfg.models_out.empty()) {
    // Full-sample fits of the built-in learners, for reproducibility.
    std::ofstream models_file;
    nlohmann::json models{{"schema_version", kSchemaVersion}};
    const auto outcome_spec = cfg.learners.outcome_spec();
    const auto propensity_spec = cfg.learners.propensity_spec();
    if (outcome_spec.kind == LearnerSpec::Kind::linear) {
      models["outcome"] = to_json(fit_outcome_model(data, outcome_spec.ridge));
    }
    if (propensity_spec.kind == LearnerSpec::Kind::multinomial_logit) {
      models["propensity"] = to_json(fit_multinomial_logit(data.covariates(), data.treatments(),
                                                           data.n_arms(), propensity_spec));
    }
    open_or(cfg.models_out, models_file, out) << models.dump(2) << '\n';
  }
  return kSuccess;
}

int cmd_simulate(const SimulateConfig& cfg, const std::string& effective_config, std::ostream& out,
                 std::ostream& err) {
  SimulationDesign design;
  if (!cfg.design_file.empty()) {
    design = read_design_file(cfg.design_file);
  } else if (!cfg.design.empty()) {
    design = builtin_design(cfg.design);
  } else {
    throw ArgumentError("simulate needs a design name or --design-file");
  }
  if (cfg.n) design.n = *cfg.n;
  if (cfg.reps) design.reps = *cfg.reps;
  if (cfg.seed) design.seed = *cfg.seed;
  if (cfg.k) design.folds = *cfg.k;
  if (cfg.xi) design.xi = *cfg.xi;
  if (cfg.alpha) design.alpha = *cfg.alpha;
  if (cfg.interval) design.interval = parse_interval(*cfg.interval);
  if (!cfg.estimators.empty()) design.estimators = parse_methods(cfg.estimators);
  if (cfg.unstratified) design.stratified = false;
  design.outcome_learner = cfg.learners.outcome_spec();
  design.propensity_learner = cfg.learners.propensity_spec();
  design.validate();

  MonteCarloOptions options;
  options.threads = cfg.threads;
  const auto report = run_monte_carlo(design, options);
  if (report.reps_failed > 0) {
    err << "warning: " << report.reps_failed << " of " << report.reps_requested
        << " replications failed";
    if (!report.failures.empty()) err << " (first: " << report.failures.front() << ")";
    err << '\n';
  }

  std::ofstream table_file;
  open_or(cfg.table_out, table_file, out) << format_metrics_table(report);
  if (!cfg.csv_out.empty()) {
    std::ofstream csv_file;
    write_metrics_csv(report, open_or(cfg.csv_out, csv_file, out));
  }
  if (!cfg.json_out.empty()) {
    std::ofstream json_file;
    auto doc = to_json(report);
    doc["design_parameters"] = to_json(design);
    doc["config"] = effective_config;
    open_or(cfg.json_out, json_file, out) << doc.dump(2) << '\n';
  }
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Doubly robust pairwise treatment effects with generalized cross-fitting", "gcf"};
  app.set_config("--config", "", "TOML/INI file; command-line flags override its values");
  app.require_subcommand(1);

  EstimateConfig est;
  auto* estimate = app.add_subcommand("estimate", "Estimate pairwise effects from a CSV file");
  estimate->add_option("--input,-i", est.input, "CSV with a header row")
      ->required()
      ->check(CLI::ExistingFile);
  estimate->add_option("--treatment", est.treatment, "Treatment column name")->required();
  estimate->add_option("--outcome", est.outcome, "Outcome column name")->required();
  estimate->add_option("--arms", est.arms, "Number of arms J (default: inferred from labels)")
      ->check(CLI::Range(2, 1000));
  estimate->add_option("--estimators", est.estimators, "Comma-separated: dif,gaipw,gcf")
      ->delimiter(',')
      ->capture_default_str();
  estimate->add_option("--k", est.k, "Number of cross-fitting folds")
      ->check(CLI::Range(2, 10))
      ->capture_default_str();
  estimate->add_option("--xi", est.xi, "Propensity clipping bound")->capture_default_str();
  estimate->add_option("--alpha", est.alpha, "Simultaneous level is 1 - alpha")->capture_default_str();
  estimate->add_option("--seed", est.seed, "Fold assignment seed")->capture_default_str();
  estimate->add_flag("--unstratified", est.unstratified, "Do not stratify folds by arm");
  estimate->add_flag("--binary-style-denominator", est.binary_style_denominator,
                     "Use 1 - e_j'(x) for the j' residual weight");
  estimate->add_option("--interval", est.interval, "Confidence intervals: simultaneous or per-pair")
      ->check(CLI::IsMember({"simultaneous", "per-pair"}))
      ->capture_default_str();
  add_learner_options(estimate, est.learners);
  estimate->add_option("--json-out", est.json_out, "Write estimates as JSON");
  estimate->add_option("--table-out", est.table_out, "Write the text table here instead of stdout");
  estimate->add_option("--models-out", est.models_out, "Write full-sample fitted models as JSON");
  estimate->add_option("--folds-out", est.folds_out, "Write the fold assignment as CSV");

  SimulateConfig sim;
  auto* simulate = app.add_subcommand("simulate", "Run a Monte Carlo study");
  simulate->add_option("design", sim.design, "Built-in design: design1-adequate, design2-lack, design3-j6");
  simulate->add_option("--design-file", sim.design_file, "JSON design file")->check(CLI::ExistingFile);
  simulate->add_option("--n", sim.n, "Sample size per replication");
  simulate->add_option("--reps", sim.reps, "Number of replications");
  simulate->add_option("--seed", sim.seed, "Base seed");
  simulate->add_option("--k", sim.k, "Number of cross-fitting folds")->check(CLI::Range(2, 10));
  simulate->add_option("--xi", sim.xi, "Propensity clipping bound");
  simulate->add_option("--alpha", sim.alpha, "Simultaneous level is 1 - alpha");
  simulate->add_option("--estimators", sim.estimators, "Comma-separated: dif,gaipw,gcf,oracle")
      ->delimiter(',');
  simulate->add_option("--interval", sim.interval,
                       "Intervals judged for coverage: per-pair (default) or simultaneous")
      ->check(CLI::IsMember({"simultaneous", "per-pair"}));
  simulate->add_flag("--unstratified", sim.unstratified, "Do not stratify folds by arm");
  simulate->add_option("--threads", sim.threads, "Worker threads (0: all cores)")->capture_default_str();
  add_learner_options(simulate, sim.learners);
  simulate->add_option("--csv-out", sim.csv_out, "Write metrics CSV");
  simulate->add_option("--table-out", sim.table_out, "Write the text table here instead of stdout");
  simulate->add_option("--json-out", sim.json_out, "Write metrics and provenance as JSON");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    const auto effective = app.config_to_str(true, false);
    if (estimate->parsed()) return cmd_estimate(est, effective, out, err);
    return cmd_simulate(sim, effective, out, err);
  } catch (const ValidationError& e) {
    err << "data validation error: " << e.what() << '\n';
    return kDataValidation;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const ArgumentError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kNumericalFailure;
  }
}

}  // namespace gcf::cli
