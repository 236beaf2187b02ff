#pragma once

#include <stdexcept>
#include <string>

namespace district {

enum class ErrorKind {
    parse,         // malformed JSON or binary input
    encoding,      // input is not valid UTF-8
    schema,        // well-formed input that violates the data schema
    precondition,  // caller passed arguments outside an operation's domain
    split,         // split produced no training data
    retrieval,     // empty eligible pool
    contract,      // a pluggable component broke its contract
    alignment,     // predictions and gold states do not line up
    config,        // bad run configuration
    transport,     // remote endpoint unreachable or failing (retryable)
    protocol,      // remote endpoint answered with a malformed payload
    io,            // filesystem failure
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    bool retryable() const noexcept { return kind_ == ErrorKind::transport; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace district
