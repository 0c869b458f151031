#ifndef VSR_ERRORS_HPP
#define VSR_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace vsr {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// The scene cannot instantiate a question template unambiguously.
class TemplateInapplicable : public Error {
 public:
  using Error::Error;
};

// No scene is consistent with a set of perception statements.
class Contradiction : public Error {
 public:
  using Error::Error;
};

class EnumerationBudgetExceeded : public Error {
 public:
  using Error::Error;
};

class ArchitectureMismatch : public Error {
 public:
  using Error::Error;
};

class SerializationError : public Error {
 public:
  using Error::Error;
};

class MissingPlaceholder : public Error {
 public:
  using Error::Error;
};

class NonFiniteGradient : public Error {
 public:
  using Error::Error;
};

class JudgeUnavailable : public Error {
 public:
  using Error::Error;
};

class MalformedVerdict : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class VersionMismatch : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class ChecksumError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace vsr

#endif  // VSR_ERRORS_HPP
