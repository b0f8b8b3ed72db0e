#pragma once

#include <stdexcept>
#include <string>

namespace nsm {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IOError : public Error {
public:
    using Error::Error;
};

// Malformed input files (OBJ parse failures, bad keypoint files).
class FormatError : public Error {
public:
    using Error::Error;
};

// Mesh violates the disk-topology requirements.
class TopologyError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

// Non-finite value encountered while evaluating a network.
class EvalError : public Error {
public:
    using Error::Error;
};

class OutOfDomainError : public Error {
public:
    using Error::Error;
};

class ProjectionError : public Error {
public:
    using Error::Error;
};

class SingularJacobianError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

class CheckpointCorruptError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

class CheckpointVersionError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

class CheckpointShapeError : public CheckpointError {
public:
    using CheckpointError::CheckpointError;
};

} // namespace nsm
