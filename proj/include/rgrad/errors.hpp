#pragma once

#include <stdexcept>

namespace rgrad {

/// A camera grouping that cannot produce two nonempty regimes.
class DegeneratePartitionError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Standardized moments requested for a zero-variance sample.
class UndefinedMomentsError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A ratio whose denominator vanished.
class UndefinedRatioError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Inconsistent or incomplete run configuration.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace rgrad
