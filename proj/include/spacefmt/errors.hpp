#pragma once

#include <stdexcept>
#include <string>

namespace spacefmt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LexError : public Error {
 public:
  LexError(const std::string& what, int line, int col)
      : Error(what + " at " + std::to_string(line) + ":" + std::to_string(col)),
        line_(line),
        col_(col) {}

  int line() const { return line_; }
  int col() const { return col_; }

 private:
  int line_;
  int col_;
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, int line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  int line() const { return line_; }

 private:
  int line_;
};

class MissingRaw : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class EmptyCorpus : public Error {
 public:
  using Error::Error;
};

class DegenerateSplit : public Error {
 public:
  using Error::Error;
};

/// A prediction was requested at a token position of the interleaved stream.
class ParityError : public Error {
 public:
  using Error::Error;
};

class ModelIoError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

class VocabMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace spacefmt
