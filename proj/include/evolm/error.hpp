#pragma once

#include <stdexcept>
#include <string>

namespace evolm {

// Base for all library errors. Subclasses map to CLI exit codes:
// everything except DivergenceError exits 1, DivergenceError exits 2.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape/axis mismatch between tensors.
struct DimensionError : Error {
    using Error::Error;
};

// Caller violated an operation precondition.
struct ContractError : Error {
    using Error::Error;
};

// Invalid or rejected run configuration.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed or inconsistent input data.
struct DataError : Error {
    using Error::Error;
};

// Token id outside the vocabulary.
struct VocabError : Error {
    using Error::Error;
};

// Corrupt or truncated checkpoint file.
struct IntegrityError : Error {
    using Error::Error;
};

// Training loss became non-finite.
struct DivergenceError : Error {
    using Error::Error;
};

}  // namespace evolm
