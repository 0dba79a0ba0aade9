#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace laca {

/// Broad error class; maps one-to-one onto CLI exit codes.
enum class ErrorKind { Config, Backend, Data };

int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

class BackendError : public Error {
 public:
  explicit BackendError(const std::string& what) : Error(ErrorKind::Backend, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

// corpus

class MalformedXml : public DataError {
 public:
  MalformedXml(const std::string& what, std::size_t line)
      : DataError(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class SchemaViolation : public DataError {
 public:
  SchemaViolation(const std::string& what, std::size_t line)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class DuplicateId : public DataError {
 public:
  explicit DuplicateId(const std::string& id)
      : DataError("duplicate id '" + id + "'"), id_(id) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

class InvalidUtf8 : public DataError {
 public:
  using DataError::DataError;
};

// tagging

class OverlappingAspects : public DataError {
 public:
  using DataError::DataError;
};

class UnalignableSpan : public DataError {
 public:
  using DataError::DataError;
};

// genformat

class EmptyTupleList : public DataError {
 public:
  EmptyTupleList() : DataError("cannot serialize an empty tuple list") {}
};

class InvalidAspect : public DataError {
 public:
  using DataError::DataError;
};

// eval

class IdMismatch : public DataError {
 public:
  using DataError::DataError;
};

class EmptyInput : public DataError {
 public:
  using DataError::DataError;
};

// backend

class BackendUnavailable : public BackendError {
 public:
  using BackendError::BackendError;
};

class ProtocolViolation : public BackendError {
 public:
  using BackendError::BackendError;
};

// pipeline

class ConfigInvalid : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class ConfigDrift : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// A pipeline stage failed; the manifest holds every stage completed before it.
class StageFailure : public Error {
 public:
  StageFailure(const std::string& stage, ErrorKind cause, const std::string& what)
      : Error(cause, "stage '" + stage + "' failed: " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace laca
