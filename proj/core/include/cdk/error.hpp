#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace cdk {

/// Library error with a stable one-token code (E_SHAPE, E_PARSE, ...).
/// The CLI prints the code on stderr so callers can grep for it.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

    const std::string& code() const { return code_; }

private:
    std::string code_;
};

[[noreturn]] inline void fail(std::string code, const std::string& message) {
    throw Error(std::move(code), message);
}

} // namespace cdk
