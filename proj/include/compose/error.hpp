#pragma once

#include <stdexcept>
#include <string>

namespace compose {

// Base for every error raised by the library. The module tag names the
// subsystem that failed so the CLI can report "[module] message".
class Error : public std::runtime_error {
   public:
    Error(std::string module, const std::string& message)
        : std::runtime_error(message), module_(std::move(module)) {}

    const std::string& module() const noexcept { return module_; }

   private:
    std::string module_;
};

class InvalidArgument : public Error {
   public:
    using Error::Error;
};

class InvalidState : public Error {
   public:
    using Error::Error;
};

class ValidationError : public Error {
   public:
    using Error::Error;
};

class IoError : public Error {
   public:
    using Error::Error;
};

class NumericalError : public Error {
   public:
    using Error::Error;
};

// Malformed input file; line is 1-based, 0 when not applicable.
class ParseError : public Error {
   public:
    ParseError(std::string module, const std::string& message, std::size_t line)
        : Error(std::move(module), message), line_(line) {}

    std::size_t line() const noexcept { return line_; }

   private:
    std::size_t line_;
};

// Config schema violation; path is the dotted field path.
class ConfigError : public Error {
   public:
    ConfigError(const std::string& path, const std::string& message)
        : Error("config", path + ": " + message), path_(path) {}

    const std::string& path() const noexcept { return path_; }

   private:
    std::string path_;
};

}  // namespace compose
