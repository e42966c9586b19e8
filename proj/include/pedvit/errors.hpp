#pragma once

#include <stdexcept>
#include <string>

namespace pedvit {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class AssemblyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class PlanningError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

} // namespace pedvit
