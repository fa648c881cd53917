#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace emopipe {

// Root of every error the library throws. Stage orchestration catches this
// type to attach stage context.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A value outside its mathematical domain (rating out of range, non-finite
// component, zero-norm operand, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A (subject, channel) group that cannot be standardized.
class DegenerateChannelError : public Error {
 public:
  DegenerateChannelError(int subject, std::size_t channel, const std::string& why);

  int subject() const noexcept { return subject_; }
  std::size_t channel() const noexcept { return channel_; }

 private:
  int subject_;
  std::size_t channel_;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what);

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

// Cross-file consistency failure, e.g. a record with no rating row.
class ReferentialError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A map or reduce function failed; the message names the offending record.
class JobError : public Error {
 public:
  using Error::Error;
};

class InitializationError : public Error {
 public:
  using Error::Error;
};

class MissingPrerequisiteError : public Error {
 public:
  MissingPrerequisiteError(const std::string& file, const std::string& producer);

  const std::string& file() const noexcept { return file_; }
  const std::string& producer() const noexcept { return producer_; }

 private:
  std::string file_;
  std::string producer_;
};

}  // namespace emopipe
