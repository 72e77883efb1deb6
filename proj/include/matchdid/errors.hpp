#pragma once

#include <stdexcept>
#include <string>

namespace matchdid {

// Malformed external input: bad file schema, inconsistent panel records,
// unknown labels. CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// A matrix factorization failed because the input is not symmetric
// positive definite.
class DecompositionError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// A design or covariance matrix is numerically rank deficient (constant or
// collinear columns). The message names the offending column.
class SingularityError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// A matching problem has no feasible solution, e.g. fewer controls than
// requested matches. CLI maps this to exit code 3.
class InfeasibleError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace matchdid
