#ifndef UDAKIT_ERRORS_HPP
#define UDAKIT_ERRORS_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace udakit {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public Error {
  public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

class FormatError : public Error {
  public:
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

class CountMismatch : public Error {
  public:
    CountMismatch(const std::string& what, std::size_t expected, std::size_t actual)
        : Error(what + ": expected " + std::to_string(expected) + " entries, got " +
                std::to_string(actual)),
          expected(expected),
          actual(actual) {}
    std::size_t expected;
    std::size_t actual;
};

class UnmappedClass : public Error {
  public:
    UnmappedClass(std::uint16_t id, std::size_t first_index)
        : Error("semantic id " + std::to_string(id) + " not in class map (first at index " +
                std::to_string(first_index) + ")"),
          id(id),
          first_index(first_index) {}
    std::uint16_t id;
    std::size_t first_index;
};

class DegenerateInput : public Error {
  public:
    explicit DegenerateInput(const std::string& msg) : Error(msg) {}
};

class EmptyResult : public Error {
  public:
    explicit EmptyResult(const std::string& msg) : Error(msg) {}
};

class EmptySegment : public Error {
  public:
    explicit EmptySegment(const std::string& msg) : Error(msg) {}
};

class InsufficientBatch : public Error {
  public:
    explicit InsufficientBatch(const std::string& msg) : Error(msg) {}
};

class AllIgnored : public Error {
  public:
    explicit AllIgnored(const std::string& msg) : Error(msg) {}
};

class LengthMismatch : public Error {
  public:
    explicit LengthMismatch(const std::string& msg) : Error(msg) {}
};

class EmptyEnsemble : public Error {
  public:
    explicit EmptyEnsemble(const std::string& msg) : Error(msg) {}
};

class MissingPrediction : public Error {
  public:
    MissingPrediction(const std::string& scan, const std::string& model)
        : Error("missing prediction for scan '" + scan + "' from model '" + model + "'"),
          scan(scan),
          model(model) {}
    std::string scan;
    std::string model;
};

class MissingFile : public Error {
  public:
    explicit MissingFile(const std::string& msg) : Error(msg) {}
};

class ZeroRangePoint : public Error {
  public:
    explicit ZeroRangePoint(const std::string& msg) : Error(msg) {}
};

class NoDefinedClasses : public Error {
  public:
    explicit NoDefinedClasses(const std::string& msg) : Error(msg) {}
};

class EmptyMatrix : public Error {
  public:
    explicit EmptyMatrix(const std::string& msg) : Error(msg) {}
};

class ConfigError : public Error {
  public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

}  // namespace udakit

#endif
