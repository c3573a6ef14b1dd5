#ifndef FD2CL_ERRORS_HPP
#define FD2CL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace fd2cl {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or inner-dimension mismatch in tensor operations.
struct DimensionError : Error {
    using Error::Error;
};

// Bad or inconsistent configuration (unknown keys, invalid enum values).
struct ConfigError : Error {
    using Error::Error;
};

// Mismatched continual-learning state (index sets, incomplete matrices).
struct StateError : Error {
    using Error::Error;
};

// Empty or degenerate data where samples are required.
struct DataError : Error {
    using Error::Error;
};

// On-disk format violations; carries the byte offset of the failure.
struct FormatError : Error {
    std::size_t offset;
    FormatError(const std::string& msg, std::size_t off)
        : Error(msg + " (byte offset " + std::to_string(off) + ")"), offset(off) {}
};

// Non-finite values where a contract requires finite results.
struct NumericalError : Error {
    using Error::Error;
};

// Violated call contract (e.g. non-unit rows passed where unit rows are required).
struct ContractError : Error {
    using Error::Error;
};

}  // namespace fd2cl

#endif
