#pragma once

#include <stdexcept>
#include <string>

namespace mnadec {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Netlist/input errors (CLI exit code 2).
class ParseError : public Error {
public:
    enum class Code {
        Syntax,
        UnknownModel,
        DanglingNode,
        SelfLoop,
        DisconnectedCircuit,
        DuplicateElementId,
    };

    ParseError(Code code, int line, int column, const std::string& message)
        : Error(format(code, line, column, message)),
          code_(code), line_(line), column_(column) {}

    Code code() const { return code_; }
    int line() const { return line_; }
    int column() const { return column_; }

    static const char* code_name(Code code);

private:
    static std::string format(Code code, int line, int column, const std::string& message);

    Code code_;
    int line_;
    int column_;
};

/// A topological prerequisite failed while building basis matrices. Normally the
/// verifier rejects such circuits first; seeing this from a verified circuit is a bug.
class AssumptionViolation : public Error {
public:
    AssumptionViolation(std::string stage, const std::string& message)
        : Error("assumption violated at stage '" + stage + "': " + message),
          stage_(std::move(stage)) {}

    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

/// A block the decoupling theorem guarantees to be regular was numerically singular.
class SingularStageMatrix : public Error {
public:
    explicit SingularStageMatrix(const std::string& block)
        : Error("singular stage matrix: " + block) {}
};

/// Newton iteration failed to converge (CLI exit code 3).
class NewtonDivergence : public Error {
public:
    NewtonDivergence(int iterations, double last_residual, const std::string& context)
        : Error(context + ": Newton diverged after " + std::to_string(iterations) +
                " iterations, last residual " + std::to_string(last_residual)),
          iterations_(iterations), last_residual_(last_residual) {}

    int iterations() const { return iterations_; }
    double last_residual() const { return last_residual_; }

private:
    int iterations_;
    double last_residual_;
};

class SingularJacobian : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

} // namespace mnadec
