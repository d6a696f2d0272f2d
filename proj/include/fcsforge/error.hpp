#ifndef FCSFORGE_ERROR_HPP_
#define FCSFORGE_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <vector>

namespace fcsforge {

// Base error. `category()` is the machine-readable tag emitted by the CLI.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(message), category_(std::move(category)) {}
    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& m) : Error("parse", m) {}
};

class PlanError : public Error {
public:
    explicit PlanError(const std::string& m) : Error("plan", m) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& m) : Error("data", m) {}
};

class FitError : public Error {
public:
    explicit FitError(const std::string& m) : Error("fit", m) {}
};

// Rank deficiency in a design matrix; carries the offending column names.
class RankError : public FitError {
public:
    RankError(const std::string& m, std::vector<std::string> cols)
        : FitError(m), columns_(std::move(cols)) {}
    const std::vector<std::string>& columns() const noexcept { return columns_; }

private:
    std::vector<std::string> columns_;
};

// Perfect prediction in a categorical fit; caller should augment and retry.
class SeparationError : public FitError {
public:
    explicit SeparationError(const std::string& m) : FitError(m) {}
};

class ConvergenceError : public FitError {
public:
    explicit ConvergenceError(const std::string& m) : FitError(m) {}
};

class BoundsError : public Error {
public:
    explicit BoundsError(const std::string& m) : Error("bounds", m) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& m) : Error("io", m) {}
};

}  // namespace fcsforge

#endif  // FCSFORGE_ERROR_HPP_
