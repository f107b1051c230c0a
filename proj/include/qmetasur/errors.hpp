#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace qmetasur {

// Base of every error raised by the library. `kind()` is the machine-readable tag
// printed by the CLI on failure.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    [[nodiscard]] virtual auto kind() const noexcept -> const char* { return "Error"; }
};

class RangeError : public Error {
public:
    using Error::Error;
    [[nodiscard]] auto kind() const noexcept -> const char* override { return "RangeError"; }
};

class DomainError : public Error {
public:
    using Error::Error;
    [[nodiscard]] auto kind() const noexcept -> const char* override { return "DomainError"; }
};

class DegenerateError : public Error {
public:
    using Error::Error;
    [[nodiscard]] auto kind() const noexcept -> const char* override { return "DegenerateError"; }
};

class ConfigError : public Error {
public:
    using Error::Error;
    [[nodiscard]] auto kind() const noexcept -> const char* override { return "ConfigError"; }
};

// Malformed token sequence. Carries the offending position and the raw ids for logging.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t position, std::vector<std::int32_t> tokens = {})
        : Error(what + " (at token " + std::to_string(position) + ")"), position_(position), tokens_(std::move(tokens)) {}
    [[nodiscard]] auto kind() const noexcept -> const char* override { return "ParseError"; }
    [[nodiscard]] auto position() const noexcept -> std::size_t { return position_; }
    [[nodiscard]] auto tokens() const noexcept -> const std::vector<std::int32_t>& { return tokens_; }

private:
    std::size_t position_;
    std::vector<std::int32_t> tokens_;
};

class ArityError : public Error {
public:
    ArityError(const std::string& what, std::vector<std::int32_t> tokens = {})
        : Error(what), tokens_(std::move(tokens)) {}
    [[nodiscard]] auto kind() const noexcept -> const char* override { return "ArityError"; }
    [[nodiscard]] auto tokens() const noexcept -> const std::vector<std::int32_t>& { return tokens_; }

private:
    std::vector<std::int32_t> tokens_;
};

} // namespace qmetasur
