#pragma once

#include <stdexcept>
#include <string>

namespace commin {

// Base for every error raised by the library. The CLI maps the subclasses
// below onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Contract violation on an argument (bad shape, bad range, malformed input).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

// Malformed or inconsistent experiment configuration. Exit code 1.
class ConfigError : public Error {
public:
    using Error::Error;
};

// A required checkpoint, dataset or pair archive is absent. Exit code 2.
class MissingArtifact : public Error {
public:
    using Error::Error;
};

// Archive exists but cannot be parsed, or its content fails validation.
class CorruptArchive : public Error {
public:
    using Error::Error;
};

// Archive parsed fine but holds a different model kind than requested.
class KindMismatch : public Error {
public:
    using Error::Error;
};

// Loss became NaN/inf during optimisation.
class TrainingDiverged : public Error {
public:
    using Error::Error;
};

}  // namespace commin
