#pragma once

#include <stdexcept>
#include <string>

namespace sora {

// Base for all errors thrown by the kit.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape / rank mismatches between tensors.
struct DimensionError : Error {
    using Error::Error;
};

// Video / latent geometry violations (divisibility, frame-count consistency).
struct GeometryError : Error {
    using Error::Error;
};

// Scalar argument outside its mathematical domain (e.g. timestep outside [0,1]).
struct DomainError : Error {
    using Error::Error;
};

// Degenerate or invalid values (zero std, empty text, bad mask spec).
struct ValueError : Error {
    using Error::Error;
};

// NaN / Inf produced by a tensor op, or non-finite loss.
struct NumericError : Error {
    using Error::Error;
};

// File / serialization problems.
struct IoError : Error {
    using Error::Error;
};

}  // namespace sora
