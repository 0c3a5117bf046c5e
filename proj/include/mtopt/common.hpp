#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace mtopt {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model file could not be parsed (syntax, missing field, bad type).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Model content violates an invariant; message lists every violation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// File could not be read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Muscle fiber span collapsed (projected length <= 0) at the queried state.
class DegenerateGeometryError : public Error {
 public:
  explicit DegenerateGeometryError(const std::string& muscle)
      : Error("degenerate muscle geometry: fiber span non-positive for muscle '" +
              muscle + "'"),
        muscle_(muscle) {}
  const std::string& muscle() const { return muscle_; }

 private:
  std::string muscle_;
};

/// Iterative solver failed to converge within its iteration budget.
class SolverError : public Error {
 public:
  explicit SolverError(const std::string& what, double residual = 0.0)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Requested torque lies outside the feasible set of an equality-constrained problem.
class InfeasibleError : public Error {
 public:
  explicit InfeasibleError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  /// Phase-one residual: distance to the nearest attainable right-hand side.
  double residual() const { return residual_; }

 private:
  double residual_;
};

/// Numerical integration produced a non-finite state.
class IntegrationError : public Error {
 public:
  explicit IntegrationError(const std::string& what, double time)
      : Error(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

inline bool all_finite(const Eigen::Ref<const VectorXd>& v) {
  return v.allFinite();
}

/// FNV-1a, used for content fingerprints of models, datasets, and networks.
inline uint64_t fnv1a64(std::string_view bytes, uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(const void* data, size_t size, uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a64(std::string_view(static_cast<const char*>(data), size), h);
}

inline std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

}  // namespace mtopt
