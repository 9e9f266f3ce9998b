#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace htefuse {

/// Raised on malformed input data; the message lists offending row numbers.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One subject. Covariates exclude the intercept; a constant column is
/// prepended internally wherever a design matrix is built.
struct Observation {
  double time = 0.0;
  int status = 0;     // 1 = event observed, 0 = censored
  int treatment = 0;  // A
  int source = 0;     // 1 = RCT, 0 = RWD
  std::vector<double> covariates;
};

/// Immutable fused RCT+RWD sample, stored column-wise.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Eigen::VectorXd time, Eigen::VectorXi status, Eigen::VectorXi treatment,
          Eigen::VectorXi source, Eigen::MatrixXd covariates);

  int n() const { return static_cast<int>(time_.size()); }
  int p() const { return static_cast<int>(x_.cols()); }
  int n1() const { return n1_; }
  int n0() const { return n() - n1_; }

  const Eigen::VectorXd& time() const { return time_; }
  const Eigen::VectorXd& log_time() const { return log_time_; }
  const Eigen::VectorXi& status() const { return status_; }
  const Eigen::VectorXi& treatment() const { return treat_; }
  const Eigen::VectorXi& source() const { return source_; }
  const Eigen::MatrixXd& x() const { return x_; }

  Observation row(int i) const;
  Dataset subset(const std::vector<int>& rows) const;
  Dataset rct_only() const;

  /// n1 >= 1 (needed for identification); called by the data entry points.
  void require_rct_rows() const;

 private:
  Eigen::VectorXd time_, log_time_;
  Eigen::VectorXi status_, treat_, source_;
  Eigen::MatrixXd x_;
  int n1_ = 0;
};

/// Column-name mapping for delimited-text input. An empty covariate list
/// means "every column not otherwise claimed, in header order".
struct ColumnMap {
  std::string time = "time";
  std::string status = "status";
  std::string treatment = "treat";
  std::string source = "source";
  std::vector<std::string> covariates;
};

Dataset load_dataset(const std::string& path, const ColumnMap& columns = {});
void write_dataset(const Dataset& d, const std::string& path);

struct FoldAssignment {
  std::vector<int> fold_of;
  int k = 0;
  std::uint64_t seed = 0;

  std::vector<int> members(int fold) const;
  std::vector<int> complement(int fold) const;
};

/// Deterministic folds stratified by (source, treatment); within each
/// stratum fold sizes differ by at most one.
FoldAssignment split_folds(const Dataset& d, int k, std::uint64_t seed);

}  // namespace htefuse
