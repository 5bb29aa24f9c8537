#pragma once

#include "gcf/crossfit.hpp"
#include "gcf/data_model.hpp"
#include "gcf/estimators.hpp"
#include "gcf/nuisance.hpp"
#include "gcf/simulation.hpp"

#include "json.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace gcf {

inline constexpr int kSchemaVersion = 1;

nlohmann::json to_json(const AteEstimate& est, const std::vector<std::string>& arm_names = {});
nlohmann::json to_json(const OutcomeModel& model);
nlohmann::json to_json(const PropensityModel& model);
nlohmann::json to_json(const PositivityReport& report);
nlohmann::json to_json(const MetricsReport& report);
nlohmann::json to_json(const SimulationDesign& design);

// Columns: pair, method, estimate, std_error, ci_lower, ci_upper.
std::string format_estimate_table(const std::vector<AteEstimate>& estimates,
                                  const std::vector<std::string>& arm_names = {});

// One row per estimator x pair.
void write_metrics_csv(const MetricsReport& report, std::ostream& out);

// Metric blocks (Bias, RMSE, Coverage) by estimator, one column per pair.
std::string format_metrics_table(const MetricsReport& report);

// Design file: JSON object whose keys override `base`. Recognised keys:
// name, n_arms, n, alphas, betas, noise_sd, reps, folds, estimators, seed,
// xi, alpha, interval, stratified. read_design_file also accepts "base", naming a
// built-in design to start from.
SimulationDesign design_from_json(const nlohmann::json& doc, SimulationDesign base = {});
SimulationDesign read_design_file(const std::string& path);

}  // namespace gcf
