#pragma once

#include <stdexcept>
#include <string>

namespace smim {

// Error taxonomy. CLI exit codes: ConfigError -> 2, DataError -> 3,
// NumericError -> 4, anything else -> 1.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dimension mismatch between operands (messages name both shapes).
struct ShapeError : Error {
    using Error::Error;
};

// A value outside an operation's domain (NaN input, negative sigma,
// out-of-range label).
struct DomainError : Error {
    using Error::Error;
};

// Invalid experiment / network / training configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Ingest or file-format failure.
struct DataError : Error {
    using Error::Error;
};

// Numerical routine failure (e.g. eigensolver non-convergence).
struct NumericError : Error {
    using Error::Error;
};

// API misuse: a call sequence violating a documented contract.
struct ContractError : Error {
    using Error::Error;
};

}  // namespace smim
