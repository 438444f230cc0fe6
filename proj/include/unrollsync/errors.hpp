#pragma once

#include <stdexcept>
#include <string>

namespace unrollsync {

/// Numerical failure inside an iterative solver or during training.
class SolverError : public std::runtime_error {
public:
    enum class Kind {
        DegenerateIterate,  ///< ||H z|| = 0 in the power method
        DegeneratePhase,    ///< zero entry before a U(1) phase projection
        DegenerateBlock,    ///< rank-deficient 3x3 block before SO(3) projection
        Divergence,         ///< non-finite iterate, loss or gradient
    };

    SolverError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Malformed, truncated or unsupported dataset/model file.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace unrollsync
