#pragma once

#include <stdexcept>
#include <string>

namespace chd {

/// Base class for every error raised by the library. Callers that only care
/// about "did the pipeline fail" can catch this one type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace chd
