#pragma once

#include <stdexcept>
#include <string>

namespace vfo {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// invalid parameter or state values
struct DomainError : Error {
    using Error::Error;
};

// integration blew up; `time` is where it happened
struct DivergenceError : Error {
    double time;
    DivergenceError(const std::string& msg, double t) : Error(msg), time(t) {}
};

// two series expected on the same grid were not
struct GridMismatchError : Error {
    using Error::Error;
};

// unreadable or malformed input data
struct DataError : Error {
    using Error::Error;
};

struct NoVoicingError : DataError {
    using DataError::DataError;
};

// not enough Poincare crossings to form a ratio
struct EntrainmentError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

}
