#pragma once

#include <stdexcept>
#include <string>

namespace hvlab {

/// Invalid input: bad grid, malformed config, violated precondition.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A pointwise domain violation such as 1 + a <= 0.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A time step refused by a solver (positivity loss, CFL violation,
/// singular flow map). Carries the offending diagnostic in what().
class StepRejected : public std::runtime_error {
public:
    StepRejected(const std::string& what, double diagnostic)
        : std::runtime_error(what), diagnostic_(diagnostic) {}
    double diagnostic() const noexcept { return diagnostic_; }

private:
    double diagnostic_;
};

/// The elliptic fixed point failed to contract.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, double contraction, int iterations)
        : std::runtime_error(what), contraction_(contraction), iterations_(iterations) {}
    double contraction_estimate() const noexcept { return contraction_; }
    int iterations() const noexcept { return iterations_; }

private:
    double contraction_;
    int iterations_;
};

}  // namespace hvlab
