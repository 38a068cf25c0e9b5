#pragma once

#include <stdexcept>

namespace cclv {

/// Model evaluated outside its valid parameter region.
class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A calibration step failed (non-convergence, too many clamped nodes, ...).
class CalibrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace cclv
