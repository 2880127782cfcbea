#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vrag {

/// Root of every error thrown by the engine.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidGtin : public Error { using Error::Error; };
class DuplicateItem : public Error { using Error::Error; };
class UnknownLabel : public Error { using Error::Error; };
class EmbedError : public Error { using Error::Error; };
class DimensionError : public Error { using Error::Error; };
class EmptyStore : public Error { using Error::Error; };
class SnapshotError : public Error { using Error::Error; };
class ImageError : public Error { using Error::Error; };
class SegmentationError : public Error { using Error::Error; };
class EmptyMask : public Error { using Error::Error; };
class ExtractionError : public Error { using Error::Error; };
class NoContextAvailable : public Error { using Error::Error; };
class BudgetExceeded : public Error { using Error::Error; };
class CompletionError : public Error { using Error::Error; };
class SchemaError : public Error { using Error::Error; };
class EvalError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };

/// Connection failure, timeout, or non-2xx status from a remote service.
class TransportError : public Error {
public:
    explicit TransportError(const std::string& what, int status = 0)
        : Error(what), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

/// Malformed manifest content; carries the 1-based line number.
class IngestError : public Error {
public:
    IngestError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace vrag
