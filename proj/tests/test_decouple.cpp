#include <catch2/catch_amalgamated.hpp>

#include "testutil.hpp"

#include <map>

using namespace mnadec;
using testutil::load_netlist;

TEST_CASE("assembled buck system evaluates the worked-example equations") {
    auto built = testutil::build_system_from_file("buck.net");
    std::mt19937 rng(307);
    double mismatch = testutil::buck_equation_mismatch(built, rng, 20);
    REQUIRE(mismatch < 1e-12);
}

TEST_CASE("buck variable partition names") {
    auto built = testutil::build_system_from_file("buck.net");
    const VariablePartition& p = built.system.partition();
    auto names = [](const std::vector<NamedCombo>& combos) {
        std::vector<std::string> out;
        for (const auto& combo : combos) out.push_back(combo.name);
        return out;
    };
    REQUIRE(names(p.x) == std::vector<std::string>{"phi(3)", "i(L1)"});
    REQUIRE(names(p.y) == std::vector<std::string>{"phi(1)", "phi(2)"});
    REQUIRE(names(p.z) == std::vector<std::string>{"i(Vs)"});
}

TEST_CASE("a circuit without storage elements is purely algebraic") {
    Circuit circuit = parse_netlist("V1 1 0 DC 1\nR1 1 2 1\nR2 2 0 1\n");
    auto built = testutil::build_system(circuit);
    REQUIRE(built.system.partition().dim_x() == 0);
    REQUIRE(built.system.partition().dim_y() == 2); // phi~_Vs = phi1, phi~_R = phi2
}

TEST_CASE("capacitor components split into intra-component differences") {
    Circuit circuit = parse_netlist(
        "V1 1 0 DC 1\nC1 1 2 1e-6\nC2 2 3 1e-6\nC3 4 5 1e-6\n"
        "R1 3 0 1\nR2 4 0 1\nR3 5 0 1\n");
    SplitChain chain = build_split_chain(circuit);
    std::vector<std::string> got;
    for (const auto& combo : chain.phi_c_names) got.push_back(combo.name);
    // Component {4,5} yields the difference; the ground component (1-2-3 merged with
    // the source node) contributes its potentials directly.
    REQUIRE(got == std::vector<std::string>{"phi(4)-phi(5)", "phi(2)", "phi(3)"});
}

TEST_CASE("reconstruction applies the worked-example splitting matrices") {
    auto built = testutil::build_system_from_file("buck.net");
    Vector x(2), y(2), z(1);
    x << 2.0, 0.5;  // phi3, i_L
    y << 1.0, 1.5;  // phi1, phi2
    z << -0.1;      // i_Vs
    OriginalState state = built.system.reconstruct(x, y, z);
    REQUIRE(state.phi.size() == 3);
    REQUIRE(state.phi[0] == Catch::Approx(1.0));
    REQUIRE(state.phi[1] == Catch::Approx(1.5));
    REQUIRE(state.phi[2] == Catch::Approx(2.0));
    REQUIRE(state.i_l[0] == Catch::Approx(0.5));
    REQUIRE(state.i_vs[0] == Catch::Approx(-0.1));

    OriginalState zeros = built.system.reconstruct(Vector::Zero(2), Vector::Zero(2), Vector::Zero(1));
    REQUIRE(zeros.phi.isZero());
    REQUIRE(zeros.i_l.isZero());
}

TEST_CASE("project_state inverts reconstruct and matches the named combinations") {
    std::mt19937 rng(311);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (const char* name : {"buck.net", "buck_mosfet.net", "opamp.net"}) {
        auto built = testutil::build_system_from_file(name);
        const VariablePartition& p = built.system.partition();
        Vector x(p.dim_x()), y(p.dim_y()), z(p.dim_z());
        for (auto* v : {&x, &y, &z})
            for (Eigen::Index i = 0; i < v->size(); ++i) (*v)[i] = dist(rng);

        OriginalState state = built.system.reconstruct(x, y, z);
        Vector x2, y2, z2;
        project_state(built.system, state, x2, y2, z2);
        INFO(name);
        REQUIRE((x - x2).lpNorm<Eigen::Infinity>() < 1e-10);
        REQUIRE((y - y2).lpNorm<Eigen::Infinity>() < 1e-10);
        REQUIRE((z - z2).lpNorm<Eigen::Infinity>() < 1e-10);

        // The named integer combinations evaluate to the same coordinates: the
        // recursive last-node rule is the dense recovery in closed form.
        std::map<std::string, double> unknowns;
        for (int node = 1; node < built.circuit.node_count(); ++node)
            unknowns["phi(" + built.circuit.nodes[node] + ")"] = state.phi[node - 1];
        auto inductors = built.circuit.branches_of_kind(ElementKind::Inductor);
        for (std::size_t i = 0; i < inductors.size(); ++i)
            unknowns["i(" + built.circuit.branches[inductors[i]].id + ")"] =
                state.i_l[static_cast<Eigen::Index>(i)];
        auto vc = built.circuit.branches_of_kind(ElementKind::VSourceControlled);
        for (std::size_t i = 0; i < vc.size(); ++i)
            unknowns["i(" + built.circuit.branches[vc[i]].id + ")"] =
                state.i_vc[static_cast<Eigen::Index>(i)];
        auto vs = built.circuit.branches_of_kind(ElementKind::VSourceIndependent);
        for (std::size_t i = 0; i < vs.size(); ++i)
            unknowns["i(" + built.circuit.branches[vs[i]].id + ")"] =
                state.i_vs[static_cast<Eigen::Index>(i)];

        auto eval_combo = [&](const NamedCombo& combo) {
            double value = 0.0;
            for (const auto& [coef, unknown] : combo.terms) value += coef * unknowns.at(unknown);
            return value;
        };
        for (int i = 0; i < p.dim_x(); ++i)
            REQUIRE(eval_combo(p.x[i]) == Catch::Approx(x[i]).margin(1e-10));
        for (int i = 0; i < p.dim_y(); ++i)
            REQUIRE(eval_combo(p.y[i]) == Catch::Approx(y[i]).margin(1e-10));
        for (int i = 0; i < p.dim_z(); ++i)
            REQUIRE(eval_combo(p.z[i]) == Catch::Approx(z[i]).margin(1e-10));
    }
}

TEST_CASE("mna_residual vanishes at consistent states and reacts to perturbations") {
    auto built = testutil::build_system_from_file("buck.net");
    SolverConfig config;
    ConsistentState state = consistent_initial_conditions(built.system, Vector::Zero(2), 0.0, config);
    Vector xdot = built.system.solve_f(state.x, state.y, 0.0);
    OriginalState original = built.system.reconstruct(state.x, state.y, state.z);
    StorageDerivatives sd = built.system.storage_derivatives(state.x, state.y, xdot, 0.0);
    Vector residual = mna_residual(built.circuit, original, sd, 0.0);
    REQUIRE(residual.lpNorm<Eigen::Infinity>() < 1e-10);

    // Perturbing the algebraic potential phi~_Vs must light up the source row.
    Vector y_bad = state.y;
    y_bad[0] += 1.0;
    OriginalState perturbed = built.system.reconstruct(state.x, y_bad, state.z);
    Vector bad = mna_residual(built.circuit, perturbed, sd, 0.0);
    int n_phi = built.circuit.node_count() - 1;
    int n_l = 1;
    REQUIRE(std::abs(bad[n_phi + n_l + 0]) > 0.5); // the Vs constraint row
}

TEST_CASE("zero state with zero sources has zero MNA residual") {
    Circuit circuit = parse_netlist("V1 1 0 DC 0\nR1 1 2 1\nC1 2 0 1e-6\nL1 2 0 1e-3\n");
    OriginalState state;
    state.phi = Vector::Zero(2);
    state.i_l = Vector::Zero(1);
    state.i_vs = Vector::Zero(1);
    state.i_vc = Vector::Zero(0);
    Vector residual = mna_residual(circuit, state, StorageDerivatives::zeros(1, 1), 0.0);
    REQUIRE(residual.isZero());
}

TEST_CASE("index-1 structure at random consistent points of all examples") {
    std::mt19937 rng(313);
    for (const char* name : {"buck.net", "buck_mosfet.net", "opamp.net", "smps.net"}) {
        auto built = testutil::build_system_from_file(name);
        auto report = testutil::index1_structure_check(built, rng, 10);
        INFO(name << ": " << report.error);
        REQUIRE(report.error.empty());
        REQUIRE(report.max_upper_relative < 1e-8);
        REQUIRE(report.max_condition < 1e12);
        REQUIRE(report.min_leading_eig > 0.0);
        REQUIRE(report.max_jacobian_error < 1e-5);
    }
}

TEST_CASE("the algebraic block cannot see the output variables") {
    for (const char* name : {"buck.net", "buck_mosfet.net", "opamp.net", "smps.net"}) {
        auto built = testutil::build_system_from_file(name);
        const SplitChain& chain = built.chain;
        Eigen::MatrixXi s_rbar = chain.s_rbar.to_dense_int();
        for (ElementKind kind :
             {ElementKind::Capacitor, ElementKind::Resistor, ElementKind::VSourceIndependent,
              ElementKind::VSourceControlled}) {
            Eigen::MatrixXi a = incidence_reduced(built.circuit, {kind}).to_dense_int();
            INFO(name << " kind " << kind_name(kind));
            REQUIRE((a.transpose() * s_rbar).isZero());
        }
    }
}

TEST_CASE("diagonal blocks of dg/dy are the theorem's A1, A2, A3, A5 and A5 = A3^T") {
    for (const char* name : {"buck_mosfet.net", "smps.net"}) {
        auto built = testutil::build_system_from_file(name);
        const DecoupledSystem& system = built.system;
        const VariablePartition& p = system.partition();
        REQUIRE(system.block_a5().isApprox(system.block_a3().transpose()));

        Vector x = Vector::Zero(p.dim_x());
        SolverConfig config;
        Vector y = solve_algebraic(system, x, 0.0, config);
        Matrix dg_dx, dg_dy;
        system.g_jacobian(x, y, 0.0, dg_dx, dg_dy);
        int r0 = 0;
        REQUIRE(dg_dy.block(r0, r0, p.n_phi_vs, p.n_phi_vs).isApprox(system.block_a1()));
        r0 += p.n_phi_vs;
        REQUIRE(dg_dy.block(r0, r0, p.n_i_tree, p.n_i_tree).isApprox(system.block_a2()));
        r0 += p.n_i_tree;
        REQUIRE(dg_dy.block(r0, r0, p.n_phi_vc, p.n_phi_vc).isApprox(system.block_a3()));
        r0 += p.n_phi_vc + p.n_phi_r;
        REQUIRE(dg_dy.block(r0, r0, p.n_i_vc, p.n_i_vc).isApprox(system.block_a5()));
    }
}

TEST_CASE("assembly refuses unverified circuits") {
    Circuit circuit = parse_netlist(testutil::violating_circuits()[0].netlist);
    VerificationReport report = verify_circuit(circuit);
    REQUIRE_FALSE(report.passed);
    REQUIRE_THROWS_AS(
        DecoupledSystem::assemble(circuit, SplitChain{}, report), AssumptionViolation);
}
