#pragma once

#include <stdexcept>
#include <string>

namespace loopsim {

// Base class for everything this library throws.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonHermitianError : Error {
    using Error::Error;
};

struct UnnormalizedStateError : Error {
    using Error::Error;
};

struct ZeroProbabilityCollapseError : Error {
    using Error::Error;
};

struct DomainError : Error {
    using Error::Error;
};

struct OverflowError : Error {
    using Error::Error;
};

struct NegativeAlphaError : DomainError {
    using DomainError::DomainError;
};

struct SeriesTooShortError : Error {
    using Error::Error;
};

// Fewer than two autocorrelation lags above the fit floor: the decay time is
// consistent with zero.
struct NoDecaySignalError : Error {
    using Error::Error;
};

struct AllCensoredError : Error {
    using Error::Error;
};

struct EmptyEnsembleError : Error {
    using Error::Error;
};

// Config parse or validation failure; message carries line/key context.
struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace loopsim
