#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace deconf {

using Index = Eigen::Index;
using StateId = int;
using ActionId = int;
using LatentId = int;

using Vector = Eigen::VectorXd;
/// Probability and logit tables are stored row-major: one distribution per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Error categories. The numeric values double as CLI exit codes.
enum class ErrorKind : int {
  kUsage = 1,
  kValidation = 2,
  kNumerical = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised when a trajectory has zero likelihood under every latent.
class ImpossibleEvidence : public Error {
 public:
  explicit ImpossibleEvidence(const std::string& what) : Error(ErrorKind::kValidation, what) {}
};

}  // namespace deconf
