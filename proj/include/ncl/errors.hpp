#pragma once

#include <stdexcept>
#include <string>

namespace ncl {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input values (out-of-range parameters, unnormalized distributions).
class ArgumentError : public Error {
public:
    using Error::Error;
};

// A mathematical hypothesis does not hold, e.g. the measure is not dust.
class DomainError : public Error {
public:
    using Error::Error;
};

// Round-off or construction produced something that cannot be a probability.
class IntegrityError : public Error {
public:
    using Error::Error;
};

// Two inputs that should describe the same model do not.
class MismatchError : public Error {
public:
    using Error::Error;
};

class SearchError : public Error {
public:
    using Error::Error;
};

}  // namespace ncl
