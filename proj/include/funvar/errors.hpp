#pragma once

#include <stdexcept>
#include <string>

namespace funvar {

/// Bad argument or violated precondition on a public operation.
class invalid_input : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Least-squares spline design without full column rank.
class rank_deficient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No training point within the bandwidth under the `error` weight policy.
class empty_neighborhood : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every bandwidth candidate was disqualified.
class cv_failure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Too many failed replications in an experiment.
class experiment_aborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace funvar
