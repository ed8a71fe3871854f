#pragma once

#include <stdexcept>
#include <string>

namespace nglod {

// Malformed inputs: empty meshes, bad CSG arity, empty octrees.
class StructuralError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Coordinates or levels outside their valid domain.
class RangeError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// API misuse, e.g. backward() without a forward pass.
class UsageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace nglod
