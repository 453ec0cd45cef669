#pragma once

#include <stdexcept>
#include <string>

namespace kgr3 {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Raised by a pipeline stage when an upstream artifact it depends on is absent.
class MissingArtifactError : public Error {
 public:
  MissingArtifactError(const std::string& what, std::string required_command)
      : Error(what), required_command_(std::move(required_command)) {}
  const std::string& required_command() const { return required_command_; }

 private:
  std::string required_command_;
};

}  // namespace kgr3
