#include "mnadec/artifacts.hpp"
#include "mnadec/numeric.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace mnadec;

enum ExitCode { kOk = 0, kVerificationFailure = 1, kInputError = 2, kNumericalFailure = 3 };

int log_level() {
    const char* env = std::getenv("MNADEC_LOG");
    if (!env) return 0;
    std::string level = env;
    if (level == "debug") return 2;
    if (level == "info") return 1;
    return 0;
}

void log_info(const std::string& message) {
    if (log_level() >= 1) std::cerr << "[mnadec] " << message << "\n";
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open netlist '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

Circuit load_circuit(const std::string& path, const std::string& order) {
    Circuit circuit = parse_netlist(read_file(path), path);
    if (order == "paper-example") circuit = with_numeric_node_order(circuit);
    return circuit;
}

Vector parse_x0(const std::string& spec, int dim) {
    Vector x0 = Vector::Zero(dim);
    if (spec.empty() || spec == "zeros") return x0;
    std::istringstream in(spec);
    std::string item;
    int index = 0;
    while (std::getline(in, item, ',')) {
        if (index >= dim) throw Error("--x0 has more entries than differential variables");
        x0[index++] = std::stod(item);
    }
    if (index != dim)
        throw Error("--x0 needs " + std::to_string(dim) + " comma-separated values");
    return x0;
}

void write_or_print(const std::string& path, const std::string& content) {
    if (path.empty()) {
        std::cout << content << "\n";
        return;
    }
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << content;
    log_info("wrote " + path);
}

int cmd_check(const std::string& netlist, const std::string& json_path) {
    Circuit circuit = parse_netlist(read_file(netlist), netlist);
    VerificationReport report = verify_circuit(circuit);
    write_or_print(json_path, report_to_json(report));
    return report.passed ? kOk : kVerificationFailure;
}

int cmd_decouple(const std::string& netlist, const std::string& outdir,
                 const std::string& order) {
    Circuit circuit = load_circuit(netlist, order);
    VerificationReport report = verify_circuit(circuit);
    if (!report.passed) {
        std::cerr << report_to_json(report) << "\n";
        return kVerificationFailure;
    }
    SplitChain chain = build_split_chain(circuit);
    DecoupledSystem system = DecoupledSystem::assemble(circuit, chain, report);
    for (const auto& path : write_decouple_artifacts(circuit, system, outdir))
        log_info("wrote " + path);
    return kOk;
}

int cmd_init(const std::string& netlist, const std::string& x0_spec, double t0,
             const std::string& json_path) {
    Circuit circuit = parse_netlist(read_file(netlist), netlist);
    VerificationReport report = verify_circuit(circuit);
    if (!report.passed) {
        std::cerr << report_to_json(report) << "\n";
        return kVerificationFailure;
    }
    SplitChain chain = build_split_chain(circuit);
    DecoupledSystem system = DecoupledSystem::assemble(circuit, chain, report);
    SolverConfig config;
    Vector x0 = parse_x0(x0_spec, system.partition().dim_x());
    ConsistentState state = consistent_initial_conditions(system, x0, t0, config);

    Vector xdot = system.solve_f(state.x, state.y, t0);
    OriginalState original = system.reconstruct(state.x, state.y, state.z);
    StorageDerivatives sd = system.storage_derivatives(state.x, state.y, xdot, t0);
    Vector residual = mna_residual(circuit, original, sd, t0);
    double norm = residual.size() > 0 ? residual.lpNorm<Eigen::Infinity>() : 0.0;

    nlohmann::json out;
    out["t0"] = t0;
    auto fill = [&](const char* key, const std::vector<NamedCombo>& names, const Vector& values) {
        nlohmann::json obj = nlohmann::json::object();
        for (std::size_t i = 0; i < names.size(); ++i)
            obj[names[i].name] = values[static_cast<Eigen::Index>(i)];
        out[key] = obj;
    };
    fill("x", system.partition().x, state.x);
    fill("y", system.partition().y, state.y);
    fill("z", system.partition().z, state.z);
    out["mna_residual_inf"] = norm;
    write_or_print(json_path, out.dump(2));
    std::cout << "mna residual inf-norm: " << norm << "\n";
    return kOk;
}

int cmd_simulate(const std::string& netlist, double t_end, double h,
                 const std::string& integrator, const std::string& out_path,
                 const std::string& json_path, const std::string& x0_spec, double t0) {
    Circuit circuit = parse_netlist(read_file(netlist), netlist);
    VerificationReport report = verify_circuit(circuit);
    if (!report.passed) {
        std::cerr << report_to_json(report) << "\n";
        return kVerificationFailure;
    }
    SplitChain chain = build_split_chain(circuit);
    DecoupledSystem system = DecoupledSystem::assemble(circuit, chain, report);
    SolverConfig config;
    config.step_size = h;
    config.integrator =
        integrator == "trapezoidal" ? Integrator::Trapezoidal : Integrator::ImplicitEuler;
    Vector x0 = parse_x0(x0_spec, system.partition().dim_x());

    Trajectory trajectory = integrate(system, x0, t0, t_end, config);
    write_or_print(out_path, trajectory_to_csv(system, trajectory));
    if (!json_path.empty()) write_or_print(json_path, trajectory_to_json(system, trajectory));
    if (trajectory.failure) {
        std::cerr << "integration failed at step " << trajectory.failure->step << " (t="
                  << trajectory.failure->time << "): " << trajectory.failure->message << "\n";
        return kNumericalFailure;
    }
    log_info("simulated " + std::to_string(trajectory.size()) + " states");
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Topological decoupling of modified nodal analysis circuit equations"};
    app.set_help_flag("--help", "Print help");
    app.require_subcommand(1);

    std::string netlist, json_path, outdir, order = "file", x0_spec = "zeros";
    std::string integrator = "implicit-euler", out_path = "trajectory.csv";
    double t0 = 0.0, t_end = 1.0, h = 1e-3;

    auto* check = app.add_subcommand("check", "Verify the decoupling assumptions");
    check->add_option("netlist", netlist)->required();
    check->add_option("--json", json_path, "Write the report to a file instead of stdout");

    auto* decouple = app.add_subcommand("decouple", "Emit basis matrices and system description");
    decouple->add_option("netlist", netlist)->required();
    decouple->add_option("--outdir", outdir)->required();
    decouple->add_option("--order", order)->check(CLI::IsMember({"file", "paper-example"}));

    auto* init = app.add_subcommand("init", "Generate consistent initial conditions");
    init->add_option("netlist", netlist)->required();
    init->add_option("--x0", x0_spec, "Comma-separated differential values or 'zeros'");
    init->add_option("--t0", t0);
    init->add_option("--json", json_path);

    auto* simulate = app.add_subcommand("simulate", "Time integration of the decoupled system");
    simulate->set_help_flag("--help", "Print help");
    simulate->add_option("netlist", netlist)->required();
    simulate->add_option("--t-end", t_end)->required();
    simulate->add_option("--h", h);
    simulate->add_option("--integrator", integrator)
        ->check(CLI::IsMember({"implicit-euler", "trapezoidal"}));
    simulate->add_option("--out", out_path);
    simulate->add_option("--json", json_path, "Also write the trajectory with diagnostics as JSON");
    simulate->add_option("--x0", x0_spec);
    simulate->add_option("--t0", t0);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kOk : kInputError;
    }

    try {
        if (app.got_subcommand(check)) return cmd_check(netlist, json_path);
        if (app.got_subcommand(decouple)) return cmd_decouple(netlist, outdir, order);
        if (app.got_subcommand(init)) return cmd_init(netlist, x0_spec, t0, json_path);
        if (app.got_subcommand(simulate))
            return cmd_simulate(netlist, t_end, h, integrator, out_path, json_path, x0_spec, t0);
    } catch (const ParseError& e) {
        std::cerr << e.what() << "\n";
        return kInputError;
    } catch (const NewtonDivergence& e) {
        std::cerr << e.what() << "\n";
        return kNumericalFailure;
    } catch (const SingularJacobian& e) {
        std::cerr << e.what() << "\n";
        return kNumericalFailure;
    } catch (const SingularStageMatrix& e) {
        std::cerr << e.what() << "\n";
        return kNumericalFailure;
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return kInputError;
    }
    return kOk;
}
