#ifndef HIERCP_ERROR_HPP
#define HIERCP_ERROR_HPP

#include <stdexcept>
#include <string>

namespace hiercp {

// Bad arguments or malformed content. The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem and stream failures. The CLI maps this to exit code 2.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace hiercp

#endif
