#include "gcf/data_model.hpp"

#include "gcf/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>

namespace gcf {

PairIndex PairIndex::canonical(int j, int j_prime, int n_arms) {
  if (j == j_prime) throw ArgumentError("pair arms must differ");
  if (j < 1 || j > n_arms || j_prime < 1 || j_prime > n_arms) {
    throw ArgumentError("pair arm outside 1.." + std::to_string(n_arms));
  }
  return j < j_prime ? PairIndex{j, j_prime} : PairIndex{j_prime, j};
}

std::vector<PairIndex> all_pairs(int n_arms) {
  std::vector<PairIndex> pairs;
  for (int j = 1; j <= n_arms; ++j) {
    for (int k = j + 1; k <= n_arms; ++k) pairs.push_back({j, k});
  }
  return pairs;
}

std::string to_string(const PairIndex& pair) {
  return "(" + std::to_string(pair.j) + "," + std::to_string(pair.j_prime) + ")";
}

Dataset::Dataset(Matrix covariates, std::vector<int> treatments, Vector outcomes, int n_arms,
                 std::vector<std::string> arm_names)
    : covariates_(std::move(covariates)),
      treatments_(std::move(treatments)),
      outcomes_(std::move(outcomes)),
      n_arms_(n_arms),
      arm_names_(std::move(arm_names)) {
  if (n_arms_ < 2) throw ValidationError("at least two arms required");
  const auto n = treatments_.size();
  if (n == 0) throw ValidationError("dataset has no rows");
  if (static_cast<std::size_t>(covariates_.rows()) != n ||
      static_cast<std::size_t>(outcomes_.size()) != n) {
    throw ValidationError("length mismatch: " + std::to_string(covariates_.rows()) +
                          " covariate rows, " + std::to_string(n) + " treatments, " +
                          std::to_string(outcomes_.size()) + " outcomes");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (treatments_[i] < 1 || treatments_[i] > n_arms_) {
      throw ValidationError("label outside 1.." + std::to_string(n_arms_) + " at row " +
                            std::to_string(i + 1) + ": " + std::to_string(treatments_[i]));
    }
    if (!std::isfinite(outcomes_[static_cast<Eigen::Index>(i)])) {
      throw ValidationError("non-finite outcome at row " + std::to_string(i + 1));
    }
  }
  if (!covariates_.allFinite()) throw ValidationError("non-finite covariate");
  if (arm_names_.empty()) {
    for (int j = 1; j <= n_arms_; ++j) arm_names_.push_back(std::to_string(j));
  } else if (static_cast<int>(arm_names_.size()) != n_arms_) {
    throw ValidationError("arm dictionary size does not match n_arms");
  }
}

const std::string& Dataset::arm_name(int j) const {
  if (j < 1 || j > n_arms_) throw ArgumentError("arm outside 1.." + std::to_string(n_arms_));
  return arm_names_[static_cast<std::size_t>(j - 1)];
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Matrix x(static_cast<Eigen::Index>(rows.size()), covariates_.cols());
  std::vector<int> z(rows.size());
  Vector y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = rows[r];
    if (src >= n()) throw ArgumentError("subset row out of range");
    const auto dst = static_cast<Eigen::Index>(r);
    x.row(dst) = covariates_.row(static_cast<Eigen::Index>(src));
    z[r] = treatments_[src];
    y[dst] = outcomes_[static_cast<Eigen::Index>(src)];
  }
  return Dataset(std::move(x), std::move(z), std::move(y), n_arms_, arm_names_);
}

std::vector<int> ArmSummary::empty_arms() const {
  std::vector<int> empty;
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] == 0) empty.push_back(static_cast<int>(j) + 1);
  }
  return empty;
}

ArmSummary arm_counts(const Dataset& d) {
  const auto J = static_cast<std::size_t>(d.n_arms());
  std::vector<std::size_t> counts(J, 0);
  std::vector<double> sums(J, 0.0);
  for (std::size_t i = 0; i < d.n(); ++i) {
    const auto arm = static_cast<std::size_t>(d.treatments()[i] - 1);
    ++counts[arm];
    sums[arm] += d.outcomes()[static_cast<Eigen::Index>(i)];
  }
  ArmSummary summary{counts, {}};
  for (std::size_t j = 0; j < J; ++j) {
    summary.means.push_back(counts[j] > 0 ? std::optional<double>(sums[j] / counts[j])
                                          : std::nullopt);
  }
  return summary;
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

// Splits one CSV record; supports double-quoted fields with "" escapes.
std::vector<std::string> split_record(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t c = 0; c < line.size(); ++c) {
    const char ch = line[c];
    if (quoted) {
      if (ch == '"') {
        if (c + 1 < line.size() && line[c + 1] == '"') {
          field.push_back('"');
          ++c;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
      was_quoted = true;
    } else if (ch == ',') {
      fields.push_back(was_quoted ? field : trim(field));
      field.clear();
      was_quoted = false;
    } else {
      field.push_back(ch);
    }
  }
  if (quoted) throw ValidationError("line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(was_quoted ? field : trim(field));
  return fields;
}

std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  // "nan"/"inf" parse here and are reported as non-finite by the caller.
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return std::nullopt;
  return v;
}

std::optional<long long> parse_integer(const std::string& s) {
  long long v = 0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || first == last) return std::nullopt;
  return v;
}

std::size_t column_index(const RawTable& raw, const std::string& name, const char* role) {
  const auto it = std::find(raw.header.begin(), raw.header.end(), name);
  if (it == raw.header.end()) {
    throw ValidationError(std::string("missing ") + role + " column '" + name + "'");
  }
  if (std::find(it + 1, raw.header.end(), name) != raw.header.end()) {
    throw ValidationError("duplicate column '" + name + "'");
  }
  return static_cast<std::size_t>(it - raw.header.begin());
}

}  // namespace

RawTable read_csv(std::istream& in) {
  RawTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
      line.erase(0, 3);
    }
    if (trim(line).empty()) continue;
    auto fields = split_record(line, line_no);
    if (table.header.empty()) {
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw ValidationError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(table.header.size()) + " fields, found " +
                            std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(line_no);
  }
  if (table.header.empty()) throw ValidationError("empty CSV input: no header row");
  return table;
}

RawTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return read_csv(in);
}

std::vector<std::string> covariate_names(const RawTable& raw, const ColumnRoles& roles) {
  const auto t = column_index(raw, roles.treatment, "treatment");
  const auto o = column_index(raw, roles.outcome, "outcome");
  std::vector<std::string> names;
  for (std::size_t c = 0; c < raw.header.size(); ++c) {
    if (c != t && c != o) names.push_back(raw.header[c]);
  }
  return names;
}

Dataset validate_dataset(const RawTable& raw, const ColumnRoles& roles,
                         std::optional<int> n_arms) {
  if (n_arms && *n_arms < 2) throw ValidationError("at least two arms required");
  const auto t_col = column_index(raw, roles.treatment, "treatment");
  const auto y_col = column_index(raw, roles.outcome, "outcome");
  std::vector<std::size_t> x_cols;
  for (std::size_t c = 0; c < raw.header.size(); ++c) {
    if (c != t_col && c != y_col) x_cols.push_back(c);
  }
  const auto n = raw.rows.size();
  if (n == 0) throw ValidationError("CSV has a header but no data rows");

  auto line_of = [&](std::size_t r) {
    return r < raw.line_numbers.size() ? raw.line_numbers[r] : r + 2;
  };

  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(x_cols.size()));
  Vector y(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = raw.rows[r];
    const auto yv = parse_double(row[y_col]);
    if (!yv) {
      throw ValidationError("line " + std::to_string(line_of(r)) + ": outcome '" + row[y_col] +
                            "' is not numeric");
    }
    if (!std::isfinite(*yv)) {
      throw ValidationError("line " + std::to_string(line_of(r)) + ": non-finite outcome");
    }
    y[static_cast<Eigen::Index>(r)] = *yv;
    for (std::size_t c = 0; c < x_cols.size(); ++c) {
      const auto& cell = row[x_cols[c]];
      const auto xv = parse_double(cell);
      if (!xv) {
        throw ValidationError("line " + std::to_string(line_of(r)) + ": covariate '" +
                              raw.header[x_cols[c]] + "' value '" + cell + "' is not numeric");
      }
      if (!std::isfinite(*xv)) {
        throw ValidationError("line " + std::to_string(line_of(r)) + ": non-finite covariate '" +
                              raw.header[x_cols[c]] + "'");
      }
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = *xv;
    }
  }

  std::vector<int> z(n);
  std::vector<std::string> names;
  bool all_integer = true;
  long long max_label = 0;
  for (const auto& row : raw.rows) {
    const auto v = parse_integer(row[t_col]);
    if (!v) {
      all_integer = false;
      break;
    }
    max_label = std::max(max_label, *v);
  }
  int J = 0;
  if (all_integer) {
    J = n_arms.value_or(static_cast<int>(std::min<long long>(max_label, 1 << 20)));
    if (J < 2) throw ValidationError("at least two arms required");
    for (std::size_t r = 0; r < n; ++r) {
      const auto v = *parse_integer(raw.rows[r][t_col]);
      if (v < 1 || v > J) {
        throw ValidationError("line " + std::to_string(line_of(r)) + ": label outside 1.." +
                              std::to_string(J) + ": " + raw.rows[r][t_col]);
      }
      z[r] = static_cast<int>(v);
    }
  } else {
    std::set<std::string> distinct;
    for (const auto& row : raw.rows) distinct.insert(row[t_col]);
    J = n_arms.value_or(static_cast<int>(distinct.size()));
    if (J < 2) throw ValidationError("at least two arms required");
    if (static_cast<int>(distinct.size()) > J) {
      throw ValidationError("label outside 1.." + std::to_string(J) + ": found " +
                            std::to_string(distinct.size()) + " distinct treatment labels");
    }
    std::map<std::string, int> code;
    for (const auto& label : distinct) {
      code.emplace(label, static_cast<int>(code.size()) + 1);
      names.push_back(label);
    }
    // Unobserved arms (J larger than the label set) keep numeric names.
    for (int j = static_cast<int>(names.size()) + 1; j <= J; ++j) names.push_back(std::to_string(j));
    for (std::size_t r = 0; r < n; ++r) z[r] = code.at(raw.rows[r][t_col]);
  }
  return Dataset(std::move(x), std::move(z), std::move(y), J, std::move(names));
}

PositivityReport positivity_diagnostic(const Matrix& propensities, double xi) {
  if (!(xi > 0.0 && xi < 0.5)) throw ArgumentError("xi must lie in (0, 0.5)");
  PositivityReport report;
  report.xi = xi;
  const auto J = propensities.cols();
  for (Eigen::Index j = 0; j < J; ++j) {
    report.min_by_arm.push_back(propensities.col(j).minCoeff());
    report.max_by_arm.push_back(propensities.col(j).maxCoeff());
  }
  for (Eigen::Index i = 0; i < propensities.rows(); ++i) {
    const auto row = propensities.row(i);
    if (row.minCoeff() < xi || row.maxCoeff() > 1.0 - xi) ++report.violations;
  }
  report.overlap_concern = report.violations > 0;
  return report;
}

}  // namespace gcf
