#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sksim {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A position fell outside the configured domain.
class DomainError : public Error {
public:
    using Error::Error;
};

/// The model cannot support the requested object (no positive root, q < 0, ...).
class ModelError : public Error {
public:
    using Error::Error;
};

/// A caller violated a documented precondition.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Candidate w failed the generator-residual check. Carries the residual
/// |Lw - psi(., w)| at every grid node.
class InvalidMartingaleFunction : public Error {
public:
    InvalidMartingaleFunction(const std::string& what, double residual_sup,
                              std::vector<double> residual_profile)
        : Error(what), residual_sup_(residual_sup), profile_(std::move(residual_profile)) {}

    double residual_sup() const noexcept { return residual_sup_; }
    const std::vector<double>& residual_profile() const noexcept { return profile_; }

private:
    double residual_sup_;
    std::vector<double> profile_;
};

/// Solution exceeded the configured ceiling.
class BlowUpError : public Error {
public:
    using Error::Error;
};

/// A numerical scheme produced a value outside its admissible range.
class SchemeFailure : public Error {
public:
    using Error::Error;
};

/// A simulation hit its population ceiling.
class GrowthError : public Error {
public:
    using Error::Error;
};

/// Malformed or out-of-range run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace sksim
