#pragma once

#include <stdexcept>
#include <string>

namespace iosicp {

// Error taxonomy shared by every module. The CLI maps ConfigError to exit
// code 2 and everything else to 3.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

struct DomainError : Error {
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

struct GraphError : Error {
    explicit GraphError(const std::string& msg) : Error(msg) {}
};

struct GenerationError : Error {
    explicit GenerationError(const std::string& msg) : Error(msg) {}
};

struct ParseError : Error {
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

}  // namespace iosicp
