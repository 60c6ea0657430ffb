#pragma once

#include <stdexcept>
#include <string>

namespace ercfuse {

// Base of every exception thrown by the library. Messages carry the offending
// id / path / value so CLI output is actionable without a debugger.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ManifestError : public Error {
public:
    using Error::Error;
};

class AudioError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class PredictionFormatError : public Error {
public:
    using Error::Error;
};

class FusionError : public Error {
public:
    using Error::Error;
};

class MetricError : public Error {
public:
    using Error::Error;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace ercfuse
