#pragma once

#include <stdexcept>
#include <string>

namespace hierspec {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Evaluation point lies within the guard radius of a pole of the kernel.
class PoleProximity : public Error {
public:
    PoleProximity(const std::string& what, double pole)
        : Error(what), pole_(pole) {}
    double pole() const noexcept { return pole_; }

private:
    double pole_;
};

/// Green function requested at lambda = 0 for a recurrent operator.
class RecurrentRegime : public Error {
public:
    using Error::Error;
};

class ToleranceNotMet : public Error {
public:
    using Error::Error;
};

class RootCountAmbiguous : public Error {
public:
    using Error::Error;
};

/// 1 - sigma R (or Sigma^{-1} - R) is numerically singular at the requested lambda.
class SecularSingularity : public Error {
public:
    using Error::Error;
};

class RootRejected : public Error {
public:
    using Error::Error;
};

class SymmetryViolation : public Error {
public:
    using Error::Error;
};

class ConvergenceFailure : public Error {
public:
    using Error::Error;
};

class NearSingular : public Error {
public:
    using Error::Error;
};

} // namespace hierspec
