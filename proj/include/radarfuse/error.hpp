#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace radarfuse {

enum class ErrorKind {
    dimension,  // shape / extent mismatch
    contract,   // violated precondition on values
    index,      // out-of-range node / element index
    label,      // class label outside [0, classes)
    range,      // target outside unambiguous radar range
    bounds,     // window outside frame
    parse,      // malformed file contents
    io,         // filesystem failures
    config,     // invalid or unknown configuration
    split,      // impossible dataset split
    numeric,    // non-finite values during training
    degenerate  // statistics undefined (zero variance, zero power, ...)
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
   public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

   private:
    ErrorKind kind_;
};

// Malformed binary input; carries the byte offset at which decoding failed.
class ParseError : public Error {
   public:
    ParseError(std::size_t offset, const std::string& message)
        : Error(ErrorKind::parse, message + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

   private:
    std::size_t offset_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace radarfuse
