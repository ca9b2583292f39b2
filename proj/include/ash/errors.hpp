#pragma once

#include <stdexcept>
#include <string>

namespace ash {

// Invalid dimensions or incompatible operand shapes.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Broken API precondition that is not shape-related.
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad or impossible data: manifests, labels, sampling constraints.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem failures.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite loss during training.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Structured faults while reading the binary checkpoint / codes files.
enum class FormatFault { BadMagic, BadVersion, Truncated, Mismatch };

class FormatError : public std::runtime_error {
public:
    FormatError(FormatFault fault, const std::string& msg)
        : std::runtime_error(msg), fault_(fault) {}
    FormatFault fault() const { return fault_; }

private:
    FormatFault fault_;
};

}  // namespace ash
