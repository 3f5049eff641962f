#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ita {

enum class ErrorKind {
  kInvalidConfig,
  kBounds,
  kEmptyInput,
  kEmptyGraph,
  kDimensionMismatch,
  kUndefinedSimilarity,
  kSchema,
  kDecode,
  kParse,
  kTransport,
  kProtocol,
  kIo,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidConfig: return "invalid-config";
    case ErrorKind::kBounds: return "bounds";
    case ErrorKind::kEmptyInput: return "empty-input";
    case ErrorKind::kEmptyGraph: return "empty-graph";
    case ErrorKind::kDimensionMismatch: return "dimension-mismatch";
    case ErrorKind::kUndefinedSimilarity: return "undefined-similarity";
    case ErrorKind::kSchema: return "schema";
    case ErrorKind::kDecode: return "decode";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kTransport: return "transport";
    case ErrorKind::kProtocol: return "protocol";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

/// Single exception type for the library; `kind()` drives CLI exit codes and
/// retry decisions.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// Transport failures are the only retriable class.
  bool retriable() const noexcept { return kind_ == ErrorKind::kTransport; }

 private:
  ErrorKind kind_;
};

/// Remote call failed; carries the input positions that were not embedded.
class TransportError : public Error {
 public:
  TransportError(const std::string& message, std::vector<std::size_t> failed)
      : Error(ErrorKind::kTransport, message), failed_(std::move(failed)) {}

  const std::vector<std::size_t>& failed_indices() const noexcept {
    return failed_;
  }

 private:
  std::vector<std::size_t> failed_;
};

/// LLM output that could not be read as a segment list.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::string raw_text)
      : Error(ErrorKind::kParse, message), raw_text_(std::move(raw_text)) {}

  const std::string& raw_text() const noexcept { return raw_text_; }

 private:
  std::string raw_text_;
};

}  // namespace ita
