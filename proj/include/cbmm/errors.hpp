#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cbmm {

// A parameter or function argument lies outside its admissible domain.
class DomainError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// Too few observations for the requested estimate.
class InsufficientDataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Observations carry no usable information (e.g. all values identical).
class DegenerateDataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// An optimiser exhausted its budget; the message describes the best point found.
class FitFailure : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Posterior responsibilities are undefined because the mixture density vanishes.
class UndefinedPosteriorError : public std::runtime_error {
  public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    UndefinedPosteriorError()
        : std::runtime_error("mixture density is zero at the evaluation point"),
          point_index(npos) {}
    explicit UndefinedPosteriorError(std::size_t index)
        : std::runtime_error("mixture density is zero at point index " + std::to_string(index)),
          point_index(index) {}

    std::size_t point_index;
};

}  // namespace cbmm
