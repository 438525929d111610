#pragma once

#include <stdexcept>
#include <string>

namespace okapi {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor op called with non-conforming shapes.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Structured text (rank output, teacher reply, dataset line) failed to parse.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

// Teacher replied but violated the expected record structure.
class ProtocolError : public Error {
public:
    explicit ProtocolError(const std::string& msg) : Error(msg) {}
};

// External teacher unreachable / retry budget exhausted.
class TransportError : public Error {
public:
    explicit TransportError(const std::string& msg) : Error(msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Training aborted (non-finite loss, bad role, bad inputs).
class TrainError : public Error {
public:
    explicit TrainError(const std::string& msg) : Error(msg) {}
};

} // namespace okapi
