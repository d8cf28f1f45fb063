#pragma once

#include <stdexcept>
#include <string>

namespace nearfar {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Afocal or degenerate system: no positive object distance is imaged onto the sensor.
class NoFiniteConjugate : public Error {
public:
    using Error::Error;
};

class LayoutInfeasible : public Error {
public:
    using Error::Error;
};

class SensorTooSmall : public Error {
public:
    using Error::Error;
};

class AlignmentUnreliable : public Error {
public:
    using Error::Error;
};

class NoValidDepth : public Error {
public:
    using Error::Error;
};

/// Calibration design matrix is rank deficient.
class Unidentifiable : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed file or document; the message names the offending field or line.
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace nearfar
