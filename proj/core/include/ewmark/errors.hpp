#pragma once

#include <stdexcept>
#include <string>

namespace ewmark {

// Base class for every error raised by the toolkit. Specific subclasses
// exist so callers (and tests) can distinguish failure modes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ZeroVectorError : public Error {
 public:
  explicit ZeroVectorError(const std::string& msg = "vector norm below 1e-12")
      : Error(msg) {}
};

class DimMismatchError : public Error {
 public:
  explicit DimMismatchError(const std::string& msg) : Error(msg) {}
};

class MalformedError : public Error {
 public:
  explicit MalformedError(const std::string& msg) : Error(msg) {}
};

class InsufficientCandidatesError : public Error {
 public:
  InsufficientCandidatesError(const std::string& msg, std::size_t qualified)
      : Error(msg + " (" + std::to_string(qualified) + " qualified)"),
        qualified_(qualified) {}
  std::size_t qualified() const { return qualified_; }

 private:
  std::size_t qualified_;
};

class InvalidParamsError : public Error {
 public:
  explicit InvalidParamsError(const std::string& msg) : Error(msg) {}
};

class DegenerateRowError : public Error {
 public:
  explicit DegenerateRowError(const std::string& msg) : Error(msg) {}
};

struct MatrixDiagnostics;  // wet.hpp

class RankDeficientError : public Error {
 public:
  RankDeficientError(const std::string& msg, int rank, double condition)
      : Error(msg + " (rank " + std::to_string(rank) + ", condition " +
              std::to_string(condition) + ")"),
        rank_(rank),
        condition_(condition) {}
  int rank() const { return rank_; }
  double condition() const { return condition_; }

 private:
  int rank_;
  double condition_;
};

class RankTooLargeError : public Error {
 public:
  explicit RankTooLargeError(const std::string& msg) : Error(msg) {}
};

class UnderDeterminedError : public Error {
 public:
  explicit UnderDeterminedError(const std::string& msg) : Error(msg) {}
};

class SingularSystemError : public Error {
 public:
  explicit SingularSystemError(const std::string& msg) : Error(msg) {}
};

class UnseenClassError : public Error {
 public:
  explicit UnseenClassError(const std::string& msg) : Error(msg) {}
};

class EmptyGroupError : public Error {
 public:
  explicit EmptyGroupError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

class BindFailureError : public Error {
 public:
  explicit BindFailureError(const std::string& msg) : Error(msg) {}
};

class TimeoutError : public Error {
 public:
  explicit TimeoutError(const std::string& msg) : Error(msg) {}
};

class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& msg) : Error(msg) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class StageError : public Error {
 public:
  StageError(const std::string& stage, const std::string& msg)
      : Error("[" + stage + "] " + msg), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace ewmark
