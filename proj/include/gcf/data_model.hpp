#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gcf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Arms are labelled 1..J everywhere in the library.
struct PairIndex {
  int j = 1;
  int j_prime = 2;

  // Throws ArgumentError unless 1 <= j < j' <= n_arms.
  static PairIndex canonical(int j, int j_prime, int n_arms);

  friend bool operator==(const PairIndex&, const PairIndex&) = default;
};

// All C(J,2) canonical pairs in lexicographic order.
std::vector<PairIndex> all_pairs(int n_arms);

std::string to_string(const PairIndex& pair);

// Observed sample: covariates, treatment arm in 1..J, outcome.
// Immutable once built; the constructor enforces every invariant.
class Dataset {
 public:
  Dataset(Matrix covariates, std::vector<int> treatments, Vector outcomes, int n_arms,
          std::vector<std::string> arm_names = {});

  std::size_t n() const { return treatments_.size(); }
  std::size_t p() const { return static_cast<std::size_t>(covariates_.cols()); }
  int n_arms() const { return n_arms_; }

  const Matrix& covariates() const { return covariates_; }
  const std::vector<int>& treatments() const { return treatments_; }
  const Vector& outcomes() const { return outcomes_; }

  // External name of arm j (1-based); the decimal label when none was given.
  const std::string& arm_name(int j) const;
  const std::vector<std::string>& arm_names() const { return arm_names_; }

  // Rows in the given order; arm dictionary is preserved.
  Dataset subset(std::span<const std::size_t> rows) const;

 private:
  Matrix covariates_;
  std::vector<int> treatments_;
  Vector outcomes_;
  int n_arms_;
  std::vector<std::string> arm_names_;
};

struct ArmSummary {
  std::vector<std::size_t> counts;
  // nullopt for an empty arm
  std::vector<std::optional<double>> means;

  std::vector<int> empty_arms() const;
};

ArmSummary arm_counts(const Dataset& d);

// Raw CSV contents before any typing. Line numbers are 1-based file lines.
struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

RawTable read_csv(std::istream& in);
RawTable read_csv_file(const std::string& path);

struct ColumnRoles {
  std::string treatment = "treatment";
  std::string outcome = "outcome";
};

// Types the raw table: every column other than the treatment and outcome
// columns is a numeric covariate, kept in file order. Treatment labels that
// are all integers must already lie in 1..J; otherwise labels are treated as
// strings and encoded 1..J in sorted order. When n_arms is absent J is the
// largest integer label, or the number of distinct string labels.
Dataset validate_dataset(const RawTable& raw, const ColumnRoles& roles,
                         std::optional<int> n_arms = std::nullopt);

// Names of the covariate columns validate_dataset would use.
std::vector<std::string> covariate_names(const RawTable& raw, const ColumnRoles& roles);

struct PositivityReport {
  double xi = 0.0;
  std::vector<double> min_by_arm;
  std::vector<double> max_by_arm;
  // Units with any propensity outside [xi, 1 - xi].
  std::size_t violations = 0;
  bool overlap_concern = false;
};

// propensities: n x J, one probability vector per row.
PositivityReport positivity_diagnostic(const Matrix& propensities, double xi);

}  // namespace gcf
