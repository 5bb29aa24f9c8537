#include "gcf/report.hpp"

#include "gcf/error.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace gcf {

using nlohmann::json;

namespace {

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Matrix matrix_from_json(const json& doc, const char* key) {
  if (!doc.is_array() || doc.empty()) throw ArgumentError(std::string("design: '") + key + "' must be a non-empty array of rows");
  const auto rows = doc.size();
  const auto cols = doc.front().size();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!doc[r].is_array() || doc[r].size() != cols) {
      throw ArgumentError(std::string("design: '") + key + "' rows must have equal length");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = doc[r][c].get<double>();
    }
  }
  return m;
}

std::string pair_label(const PairIndex& pair, const std::vector<std::string>& names) {
  if (names.empty()) return "tau_" + std::to_string(pair.j) + "," + std::to_string(pair.j_prime);
  return names[static_cast<std::size_t>(pair.j - 1)] + " - " +
         names[static_cast<std::size_t>(pair.j_prime - 1)];
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

json to_json(const AteEstimate& est, const std::vector<std::string>& arm_names) {
  json pairs = json::array();
  for (const auto& pair : all_pairs(est.n_arms())) {
    const auto [lo, hi] = est.ci(pair.j, pair.j_prime);
    json entry{{"j", pair.j},
               {"j_prime", pair.j_prime},
               {"estimate", est.estimate(pair.j, pair.j_prime)},
               {"variance", est.variance(pair.j, pair.j_prime)},
               {"std_error", est.std_error(pair.j, pair.j_prime)},
               {"ci_lower", lo},
               {"ci_upper", hi}};
    if (!arm_names.empty()) {
      entry["arm_j"] = arm_names[static_cast<std::size_t>(pair.j - 1)];
      entry["arm_j_prime"] = arm_names[static_cast<std::size_t>(pair.j_prime - 1)];
    }
    pairs.push_back(std::move(entry));
  }
  return {{"schema_version", kSchemaVersion},
          {"method", to_string(est.method())},
          {"n_arms", est.n_arms()},
          {"n_used", est.n_used()},
          {"alpha", est.alpha()},
          {"interval", to_string(est.interval())},
          {"multiplier", est.multiplier()},
          {"pairs", std::move(pairs)},
          {"estimates", matrix_json(est.estimates())}};
}

json to_json(const OutcomeModel& model) {
  json arms = json::array();
  for (int j = 1; j <= model.n_arms(); ++j) {
    if (!model.has_arm(j)) {
      arms.push_back({{"arm", j}, {"coefficients", nullptr}});
      continue;
    }
    arms.push_back({{"arm", j},
                    {"coefficients", vector_json(model.coefficients(j))},
                    {"residual_variance", model.residual_variance(j)}});
  }
  return {{"schema_version", kSchemaVersion}, {"learner", "linear"}, {"arms", std::move(arms)}};
}

json to_json(const PropensityModel& model) {
  return {{"schema_version", kSchemaVersion},
          {"learner", "multinomial-logit"},
          {"reference_arm", model.n_arms()},
          {"coefficients", matrix_json(model.coefficients)},
          {"iterations", model.iterations},
          {"gradient_norm", model.gradient_norm},
          {"converged", model.converged},
          {"log_likelihood", model.log_likelihood}};
}

json to_json(const PositivityReport& report) {
  return {{"xi", report.xi},
          {"min_by_arm", report.min_by_arm},
          {"max_by_arm", report.max_by_arm},
          {"violations", report.violations},
          {"overlap_concern", report.overlap_concern}};
}

json to_json(const MetricsReport& report) {
  json cells = json::array();
  for (const auto& c : report.cells) {
    cells.push_back({{"method", to_string(c.method)},
                     {"j", c.pair.j},
                     {"j_prime", c.pair.j_prime},
                     {"truth", c.truth},
                     {"bias", c.bias},
                     {"rmse", c.rmse},
                     {"coverage", c.coverage},
                     {"mean_ci_width", c.mean_ci_width},
                     {"mean_variance", c.mean_variance},
                     {"count", c.count}});
  }
  return {{"schema_version", kSchemaVersion},
          {"design", report.design_name},
          {"n_arms", report.n_arms},
          {"n", report.n},
          {"reps_requested", report.reps_requested},
          {"reps_succeeded", report.reps_succeeded},
          {"reps_failed", report.reps_failed},
          {"wall_clock_seconds", report.wall_clock_seconds},
          {"failures", report.failures},
          {"cells", std::move(cells)}};
}

json to_json(const SimulationDesign& design) {
  json estimators = json::array();
  for (const auto m : design.estimators) estimators.push_back(to_string(m));
  return {{"name", design.name},
          {"n_arms", design.n_arms},
          {"n", design.n},
          {"alphas", matrix_json(design.alphas)},
          {"betas", matrix_json(design.betas)},
          {"noise_sd", design.noise_sd},
          {"reps", design.reps},
          {"folds", design.folds},
          {"estimators", std::move(estimators)},
          {"seed", design.seed},
          {"xi", design.xi},
          {"alpha", design.alpha},
          {"interval", to_string(design.interval)},
          {"stratified", design.stratified}};
}

std::string format_estimate_table(const std::vector<AteEstimate>& estimates,
                                  const std::vector<std::string>& arm_names) {
  std::ostringstream os;
  os << std::left << std::setw(24) << "pair" << std::setw(8) << "method" << std::right
     << std::setw(12) << "estimate" << std::setw(12) << "std_error" << std::setw(12)
     << "ci_lower" << std::setw(12) << "ci_upper" << '\n';
  for (const auto& est : estimates) {
    for (const auto& pair : all_pairs(est.n_arms())) {
      const auto [lo, hi] = est.ci(pair.j, pair.j_prime);
      os << std::left << std::setw(24) << pair_label(pair, arm_names) << std::setw(8)
         << to_string(est.method()) << std::right << std::setw(12)
         << fixed(est.estimate(pair.j, pair.j_prime), 4) << std::setw(12)
         << fixed(est.std_error(pair.j, pair.j_prime), 4) << std::setw(12) << fixed(lo, 4)
         << std::setw(12) << fixed(hi, 4) << '\n';
    }
  }
  return os.str();
}

void write_metrics_csv(const MetricsReport& report, std::ostream& out) {
  out << "design,n,method,j,j_prime,truth,bias,rmse,coverage,mean_ci_width,mean_variance,count\n";
  out << std::setprecision(10);
  for (const auto& c : report.cells) {
    out << report.design_name << ',' << report.n << ',' << to_string(c.method) << ',' << c.pair.j
        << ',' << c.pair.j_prime << ',' << c.truth << ',' << c.bias << ',' << c.rmse << ','
        << c.coverage << ',' << c.mean_ci_width << ',' << c.mean_variance << ',' << c.count
        << '\n';
  }
}

std::string format_metrics_table(const MetricsReport& report) {
  const auto pairs = all_pairs(report.n_arms);
  std::vector<Method> methods;
  for (const auto& c : report.cells) {
    if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) methods.push_back(c.method);
  }
  std::ostringstream os;
  os << report.design_name << "  N=" << report.n << "  replications=" << report.reps_succeeded
     << '/' << report.reps_requested << '\n';
  os << std::left << std::setw(10) << "Metric" << std::setw(8) << "" << std::right;
  for (const auto& pair : pairs) os << std::setw(11) << pair_label(pair, {});
  os << '\n';
  const auto rule = std::string(18 + 11 * pairs.size(), '-');
  os << rule << '\n';
  const char* metric_names[] = {"Bias", "RMSE", "Coverage"};
  for (int metric = 0; metric < 3; ++metric) {
    for (std::size_t m = 0; m < methods.size(); ++m) {
      os << std::left << std::setw(10) << (m == 0 ? metric_names[metric] : "") << std::setw(8)
         << to_string(methods[m]) << std::right;
      for (const auto& pair : pairs) {
        const auto& c = report.cell(methods[m], pair);
        if (metric == 0) os << std::setw(11) << fixed(c.bias, 4);
        else if (metric == 1) os << std::setw(11) << fixed(c.rmse, 4);
        else os << std::setw(10) << fixed(100.0 * c.coverage, 2) << '%';
      }
      os << '\n';
    }
    os << rule << '\n';
  }
  return os.str();
}

SimulationDesign design_from_json(const json& doc, SimulationDesign base) {
  if (!doc.is_object()) throw ArgumentError("design file must hold a JSON object");
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "name") base.name = value.get<std::string>();
      else if (key == "n_arms") base.n_arms = value.get<int>();
      else if (key == "n") base.n = value.get<std::size_t>();
      else if (key == "alphas") base.alphas = matrix_from_json(value, "alphas");
      else if (key == "betas") base.betas = matrix_from_json(value, "betas");
      else if (key == "noise_sd") base.noise_sd = value.get<double>();
      else if (key == "reps") base.reps = value.get<std::size_t>();
      else if (key == "folds") base.folds = value.get<int>();
      else if (key == "seed") base.seed = value.get<std::uint64_t>();
      else if (key == "xi") base.xi = value.get<double>();
      else if (key == "alpha") base.alpha = value.get<double>();
      else if (key == "stratified") base.stratified = value.get<bool>();
      else if (key == "interval") base.interval = parse_interval(value.get<std::string>());
      else if (key == "estimators") {
        base.estimators.clear();
        for (const auto& m : value) base.estimators.push_back(parse_method(m.get<std::string>()));
      } else {
        throw ArgumentError("design: unknown key '" + key + "'");
      }
    }
  } catch (const json::exception& err) {
    throw ArgumentError(std::string("design: ") + err.what());
  }
  base.validate();
  return base;
}

SimulationDesign read_design_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open design file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& err) {
    throw ArgumentError("design file '" + path + "': " + err.what());
  }
  SimulationDesign base;
  if (doc.contains("base")) {
    base = builtin_design(doc.at("base").get<std::string>());
    doc.erase("base");
  }
  return design_from_json(doc, base);
}

}  // namespace gcf
