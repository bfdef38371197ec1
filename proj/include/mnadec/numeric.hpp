#pragma once

#include "mnadec/decouple.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mnadec {

enum class Integrator { ImplicitEuler, Trapezoidal };

struct SolverConfig {
    double newton_tol = 1e-10;   ///< residual infinity norm
    int newton_max_iter = 50;
    double step_size = 1e-3;     ///< seconds
    Integrator integrator = Integrator::ImplicitEuler;
    double fd_epsilon = 1e-7;    ///< test-mode finite-difference step

    void validate() const; ///< throws DimensionMismatch on nonsensical values
};

struct StepDiagnostics {
    int newton_iterations = 0;
    double residual_norm = 0.0;     ///< final Newton residual
    double mna_residual_norm = 0.0; ///< round-trip MNA residual at this state
};

struct Trajectory {
    std::vector<double> times;
    std::vector<Vector> x;
    std::vector<Vector> y;
    std::vector<Vector> z;
    std::vector<StepDiagnostics> diagnostics;

    /// Set when integration stopped early; the trajectory holds all completed steps.
    struct Failure {
        int step = 0;
        double time = 0.0;
        std::string message;
    };
    std::optional<Failure> failure;

    std::size_t size() const { return times.size(); }
};

struct ConsistentState {
    Vector x;
    Vector y;
    Vector z;
};

/// Solve g(x, y, t) = 0 for y: g1..g3 by direct solves in cascade order, then the
/// coupled (g4, g5) subsystem by damped Newton with the analytic Jacobian.
Vector solve_algebraic(const DecoupledSystem& system, const Vector& x, double t,
                       const SolverConfig& config,
                       const Vector* initial_guess = nullptr);

/// Consistent initial conditions: free x0, y0 from the algebraic block, z0 from the
/// output block (using xdot = f(x0, y0, t0)).
ConsistentState consistent_initial_conditions(const DecoupledSystem& system, const Vector& x0,
                                              double t0, const SolverConfig& config);

/// Fixed-step time integration of the semi-explicit system. On Newton divergence the
/// trajectory computed so far is returned with `failure` set.
Trajectory integrate(const DecoupledSystem& system, const Vector& x0, double t0, double t_end,
                     const SolverConfig& config);

std::string trajectory_to_csv(const DecoupledSystem& system, const Trajectory& trajectory);
std::string trajectory_to_json(const DecoupledSystem& system, const Trajectory& trajectory);

} // namespace mnadec
