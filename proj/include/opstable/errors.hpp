#pragma once

#include <stdexcept>
#include <string>

namespace opstable {

// Bad input: a precondition or a model constraint is violated.
struct DomainError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A numerical routine failed to reach its tolerance.
struct NumericalError : std::runtime_error {
    NumericalError(const std::string& what, double residual = 0.0)
        : std::runtime_error(what), residual(residual) {}
    double residual;
};

}  // namespace opstable
