#pragma once

#include <stdexcept>
#include <string>

namespace adattn {

// Shape/contract violations (mismatched dimensions, bad arguments).
struct DimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or out-of-contract input data (bad labels, empty sequences, ...).
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values or diverging computations.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File format / IO problems.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace adattn
