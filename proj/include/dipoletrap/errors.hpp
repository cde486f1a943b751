#pragma once

#include <stdexcept>
#include <string>

namespace dipoletrap {

/// Invalid configuration value. `field()` names the offending key.
class ConfigError : public std::invalid_argument
{
public:
    ConfigError(std::string field, const std::string& what)
        : std::invalid_argument(field.empty() ? what : field + ": " + what), field_(std::move(field))
    {
    }

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Numerical failure: integrator blow-up, root not bracketed, fit did not converge.
class NumericalError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class IntegrationAborted : public NumericalError
{
public:
    IntegrationAborted(const std::string& what, double time, double energy)
        : NumericalError(what), time_(time), energy_(energy)
    {
    }

    double time() const noexcept { return time_; }
    double energy() const noexcept { return energy_; }

private:
    double time_;
    double energy_;
};

class FitError : public NumericalError
{
public:
    using NumericalError::NumericalError;
};

}  // namespace dipoletrap
