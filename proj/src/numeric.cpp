#include "mnadec/numeric.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace mnadec {

namespace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Damped Newton on a generic residual/Jacobian pair. Returns iterations used.
template <typename ResidualFn, typename JacobianFn>
int damped_newton(Vector& u, ResidualFn residual, JacobianFn jacobian, const SolverConfig& config,
                  const char* context) {
    Vector r = residual(u);
    double norm = r.size() > 0 ? r.lpNorm<Eigen::Infinity>() : 0.0;
    for (int iter = 0; iter < config.newton_max_iter; ++iter) {
        if (norm <= config.newton_tol) return iter;
        Matrix j = jacobian(u);
        Eigen::FullPivLU<Matrix> lu(j);
        if (!lu.isInvertible())
            throw SingularJacobian(std::string(context) + ": singular Newton Jacobian");
        Vector delta = lu.solve(-r);
        if (!delta.allFinite())
            throw NewtonDivergence(iter, norm, std::string(context) + ": non-finite Newton step");

        // Halve the step until the residual is finite and decreasing. The full step
        // overflows fast on diode exponentials, while r(u + lambda*delta) shrinks
        // like (1 - lambda)*r for small lambda, so a decrease always exists.
        double lambda = 1.0;
        bool accepted = false;
        Vector best_u, best_r;
        double best_norm = std::numeric_limits<double>::infinity();
        for (int halving = 0; halving <= 64; ++halving) {
            Vector candidate = u + lambda * delta;
            Vector cr = residual(candidate);
            double cnorm = cr.lpNorm<Eigen::Infinity>();
            if (std::isfinite(cnorm) && cnorm < best_norm) {
                best_u = candidate;
                best_r = cr;
                best_norm = cnorm;
                if (cnorm < norm) {
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if (!std::isfinite(best_norm))
            throw NewtonDivergence(iter, norm, std::string(context) + ": residual overflow");
        (void)accepted;
        u = best_u;
        r = best_r;
        norm = best_norm;
    }
    if (norm <= config.newton_tol) return config.newton_max_iter;
    throw NewtonDivergence(config.newton_max_iter, norm, context);
}

} // namespace

void SolverConfig::validate() const {
    if (newton_tol <= 0.0 || step_size <= 0.0 || newton_max_iter < 1 || fd_epsilon <= 0.0)
        throw DimensionMismatch("solver configuration out of range");
}

Vector solve_algebraic(const DecoupledSystem& system, const Vector& x, double t,
                       const SolverConfig& config, const Vector* initial_guess) {
    config.validate();
    const VariablePartition& p = system.partition();
    if (x.size() != p.dim_x()) throw DimensionMismatch("solve_algebraic: bad x dimension");

    Vector y = Vector::Zero(p.dim_y());
    // g1, g2: purely time dependent, one linear solve each.
    y.head(p.n_phi_vs) = system.phi_vs_of_t(t);
    y.segment(p.n_phi_vs, p.n_i_tree) = system.i_tree_of_t(t);

    // g3 is affine in phi~_Vc and does not depend on the later unknowns.
    if (p.n_phi_vc > 0) {
        Vector g = system.eval_g(x, y, t);
        Vector g3 = g.segment(p.n_phi_vs + p.n_i_tree, p.n_phi_vc);
        Eigen::FullPivLU<Matrix> lu(system.block_a3());
        if (!lu.isInvertible()) throw SingularJacobian("solve_algebraic: A3 singular");
        y.segment(p.n_phi_vs + p.n_i_tree, p.n_phi_vc) = lu.solve(-g3);
    }

    // Coupled (g4, g5) by damped Newton over [phi~_R; i_Vc].
    int offset = p.n_phi_vs + p.n_i_tree + p.n_phi_vc;
    int nw = p.n_phi_r + p.n_i_vc;
    if (nw > 0) {
        Vector w = Vector::Zero(nw);
        if (initial_guess && initial_guess->size() == p.dim_y())
            w = initial_guess->segment(offset, nw);
        auto with_w = [&](const Vector& ww) {
            Vector yy = y;
            yy.segment(offset, nw) = ww;
            return yy;
        };
        damped_newton(
            w,
            [&](const Vector& ww) -> Vector {
                return system.eval_g(x, with_w(ww), t).segment(offset, nw);
            },
            [&](const Vector& ww) -> Matrix {
                Matrix dg_dx, dg_dy;
                system.g_jacobian(x, with_w(ww), t, dg_dx, dg_dy);
                return dg_dy.block(offset, offset, nw, nw);
            },
            config, "solve_algebraic");
        y.segment(offset, nw) = w;
    }
    return y;
}

ConsistentState consistent_initial_conditions(const DecoupledSystem& system, const Vector& x0,
                                              double t0, const SolverConfig& config) {
    ConsistentState state;
    state.x = x0;
    state.y = solve_algebraic(system, x0, t0, config);
    Vector xdot = system.solve_f(state.x, state.y, t0);
    state.z = system.solve_output(state.x, state.y, xdot, t0);
    return state;
}

Trajectory integrate(const DecoupledSystem& system, const Vector& x0, double t0, double t_end,
                     const SolverConfig& config) {
    config.validate();
    const VariablePartition& p = system.partition();
    int nx = p.dim_x(), ny = p.dim_y();
    double h = config.step_size;
    bool trapezoidal = config.integrator == Integrator::Trapezoidal;

    Trajectory trajectory;
    auto record = [&](double t, const Vector& x, const Vector& y, const Vector& xdot,
                      int iterations, double residual) {
        Vector z = system.solve_output(x, y, xdot, t);
        OriginalState original = system.reconstruct(x, y, z);
        StorageDerivatives sd = system.storage_derivatives(x, y, xdot, t);
        StepDiagnostics diag;
        diag.newton_iterations = iterations;
        diag.residual_norm = residual;
        Vector mna = mna_residual(system.circuit(), original, sd, t);
        diag.mna_residual_norm = mna.size() > 0 ? mna.lpNorm<Eigen::Infinity>() : 0.0;
        trajectory.times.push_back(t);
        trajectory.x.push_back(x);
        trajectory.y.push_back(y);
        trajectory.z.push_back(z);
        trajectory.diagnostics.push_back(diag);
    };

    Vector x = x0;
    Vector y;
    try {
        y = solve_algebraic(system, x, t0, config);
    } catch (const NewtonDivergence& e) {
        trajectory.failure = Trajectory::Failure{0, t0, e.what()};
        return trajectory;
    }
    record(t0, x, y, system.solve_f(x, y, t0), 0, 0.0);

    // Non-mass part of the differential residual, kept for the trapezoidal average.
    Vector rhs_prev = system.eval_diff(x, y, Vector::Zero(nx), t0);

    long long steps = static_cast<long long>(std::ceil((t_end - t0) / h - 1e-9));
    for (long long k = 0; k < steps; ++k) {
        double t1 = t0 + static_cast<double>(k + 1) * h;
        Vector u(nx + ny);
        u << x, y;
        const Vector x_prev = x;

        auto split_residual = [&](const Vector& uu) -> Vector {
            Vector xx = uu.head(nx);
            Vector yy = uu.tail(ny);
            Vector xdot = (xx - x_prev) / h;
            Vector dd = system.eval_diff(xx, yy, xdot, t1);
            if (trapezoidal) {
                Vector rhs_now = system.eval_diff(xx, yy, Vector::Zero(nx), t1);
                dd += 0.5 * (rhs_prev - rhs_now);
            }
            Vector g = system.eval_g(xx, yy, t1);
            Vector out(nx + ny);
            out << dd, g;
            return out;
        };
        auto split_jacobian = [&](const Vector& uu) -> Matrix {
            Vector xx = uu.head(nx);
            Vector yy = uu.tail(ny);
            Vector xdot = (xx - x_prev) / h;
            Matrix dd_dx, dd_dy, dd_dxdot, dg_dx, dg_dy;
            system.diff_jacobian(xx, yy, xdot, t1, dd_dx, dd_dy, dd_dxdot);
            system.g_jacobian(xx, yy, t1, dg_dx, dg_dy);
            double theta = trapezoidal ? 0.5 : 1.0;
            Matrix out(nx + ny, nx + ny);
            out.topLeftCorner(nx, nx) = theta * dd_dx + dd_dxdot / h;
            out.topRightCorner(nx, ny) = theta * dd_dy;
            out.bottomLeftCorner(ny, nx) = dg_dx;
            out.bottomRightCorner(ny, ny) = dg_dy;
            return out;
        };

        int iterations = 0;
        try {
            iterations = damped_newton(u, split_residual, split_jacobian, config, "integrate");
        } catch (const Error& e) {
            trajectory.failure = Trajectory::Failure{static_cast<int>(k + 1), t1, e.what()};
            return trajectory;
        }

        x = u.head(nx);
        y = u.tail(ny);
        double residual = split_residual(u).lpNorm<Eigen::Infinity>();
        record(t1, x, y, (x - x_prev) / h, iterations, residual);
        if (trapezoidal) rhs_prev = system.eval_diff(x, y, Vector::Zero(nx), t1);
    }
    return trajectory;
}

namespace {

std::vector<std::string> column_names(const DecoupledSystem& system) {
    std::vector<std::string> names;
    for (const auto* group : {&system.partition().x, &system.partition().y, &system.partition().z})
        for (const auto& combo : *group) names.push_back(combo.name);
    return names;
}

} // namespace

std::string trajectory_to_csv(const DecoupledSystem& system, const Trajectory& trajectory) {
    std::ostringstream out;
    out << "t";
    for (const auto& name : column_names(system)) out << "," << name;
    out << ",newton_iterations,residual_norm,mna_residual\n";
    for (std::size_t k = 0; k < trajectory.size(); ++k) {
        out << format_double(trajectory.times[k]);
        for (const Vector* v : {&trajectory.x[k], &trajectory.y[k], &trajectory.z[k]})
            for (Eigen::Index i = 0; i < v->size(); ++i) out << "," << format_double((*v)[i]);
        const auto& diag = trajectory.diagnostics[k];
        out << "," << diag.newton_iterations << "," << format_double(diag.residual_norm) << ","
            << format_double(diag.mna_residual_norm) << "\n";
    }
    return out.str();
}

std::string trajectory_to_json(const DecoupledSystem& system, const Trajectory& trajectory) {
    nlohmann::json out;
    out["columns"] = column_names(system);
    out["times"] = trajectory.times;
    nlohmann::json states = nlohmann::json::array();
    for (std::size_t k = 0; k < trajectory.size(); ++k) {
        nlohmann::json row;
        row["x"] = std::vector<double>(trajectory.x[k].data(),
                                       trajectory.x[k].data() + trajectory.x[k].size());
        row["y"] = std::vector<double>(trajectory.y[k].data(),
                                       trajectory.y[k].data() + trajectory.y[k].size());
        row["z"] = std::vector<double>(trajectory.z[k].data(),
                                       trajectory.z[k].data() + trajectory.z[k].size());
        row["newton_iterations"] = trajectory.diagnostics[k].newton_iterations;
        row["residual_norm"] = trajectory.diagnostics[k].residual_norm;
        row["mna_residual"] = trajectory.diagnostics[k].mna_residual_norm;
        states.push_back(row);
    }
    out["states"] = states;
    if (trajectory.failure) {
        out["failure"] = {{"step", trajectory.failure->step},
                          {"time", trajectory.failure->time},
                          {"message", trajectory.failure->message}};
    }
    return out.dump(2);
}

} // namespace mnadec
