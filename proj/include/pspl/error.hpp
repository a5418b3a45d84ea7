#pragma once

#include <stdexcept>
#include <string>

namespace pspl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidSpecError : public Error {
public:
    using Error::Error;
};

/// Unsupported or malformed file content.
class FormatError : public Error {
public:
    using Error::Error;
};

class TaggingError : public Error {
public:
    using Error::Error;
};

/// Degenerate or inverted cells.
class GeometryError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// Krylov non-convergence, non-finite iterates, singular dense systems.
class SolverError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Trajectories that cannot be compared (mesh or time-grid mismatch).
class IncompatibleError : public Error {
public:
    using Error::Error;
};

} // namespace pspl
