#pragma once

#include <stdexcept>
#include <string>

namespace rnncnn {

// Every error raised by the library derives from Error so callers (the CLI in
// particular) can report a one-line diagnostic.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class EmptySentenceError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class CorruptionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class CoverageError : public Error {
 public:
  using Error::Error;
};

class StatisticsError : public Error {
 public:
  using Error::Error;
};

class LabelError : public Error {
 public:
  using Error::Error;
};

class SimilarityError : public Error {
 public:
  using Error::Error;
};

class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace rnncnn
