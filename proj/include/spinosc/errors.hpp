// Exception types shared across the library and the CLI

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spinosc {

// Invalid physical parameters, basis, or configuration values.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what, std::size_t line = 0)
        : std::invalid_argument(line ? "line " + std::to_string(line) + ": " + what : what)
        , line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Any failure of a numerical integrator (NaN, norm underflow, PSD loss).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what, long step = -1)
        : std::runtime_error(step >= 0 ? what + " (step " + std::to_string(step) + ")" : what)
        , step_(step) {}

    long step() const noexcept { return step_; }

private:
    long step_;
};

// The Fock cutoff no longer holds the state: too much population near n_max.
class CutoffError : public NumericalError {
public:
    CutoffError(const std::string& what, std::size_t required_n_max, long step = -1)
        : NumericalError(what + "; estimated required n_max >= " + std::to_string(required_n_max), step)
        , required_(required_n_max) {}

    std::size_t required_n_max() const noexcept { return required_; }

private:
    std::size_t required_;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace spinosc
