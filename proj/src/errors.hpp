#pragma once

#include <stdexcept>
#include <string>

namespace convflat {

// shape/geometry preconditions (kernel larger than padded input, dim mismatch)
class geometry_error : public std::invalid_argument {
public:
    explicit geometry_error(const std::string& msg) : std::invalid_argument(msg) {}
};

// bad argument values (labels not one-hot, invalid config fields, ...)
class validation_error : public std::invalid_argument {
public:
    explicit validation_error(const std::string& msg) : std::invalid_argument(msg) {}
};

// a verification oracle was asked for a problem above its size cap
class size_cap_error : public std::runtime_error {
public:
    explicit size_cap_error(const std::string& msg) : std::runtime_error(msg) {}
};

class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace convflat
