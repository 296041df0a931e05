#pragma once

#include <stdexcept>
#include <string>

namespace lnlab {

enum class ErrorKind {
  config,   // invalid configuration or parameters
  usage,    // unknown format name, bad flag value
  format,   // malformed input file content
  domain,   // numeric argument outside its domain
  io,       // file system failures
  runtime,  // anything raised while running a pipeline
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};
struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error(ErrorKind::format, what) {}
};
struct DomainError : Error {
  explicit DomainError(const std::string& what) : Error(ErrorKind::domain, what) {}
};
struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};
struct RuntimeFailure : Error {
  explicit RuntimeFailure(const std::string& what) : Error(ErrorKind::runtime, what) {}
};

}  // namespace lnlab
