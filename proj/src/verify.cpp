#include "mnadec/verify.hpp"

#include "mnadec/graph.hpp"

#include <json.hpp>

#include <algorithm>
#include <set>
#include <sstream>

namespace mnadec {

namespace {

using EK = ElementKind;

const std::vector<EK> kVsOnly = {EK::VSourceIndependent};
const std::vector<EK> kCVs = {EK::Capacitor, EK::VSourceIndependent};
const std::vector<EK> kCV = {EK::Capacitor, EK::VSourceIndependent, EK::VSourceControlled};
const std::vector<EK> kCRV = {EK::Capacitor, EK::Resistor, EK::VSourceIndependent,
                              EK::VSourceControlled};
const std::vector<EK> kCLRV = {EK::Capacitor, EK::Inductor, EK::Resistor,
                               EK::VSourceIndependent, EK::VSourceControlled};

std::vector<std::pair<int, std::string>> path_to_branches(const Circuit& circuit,
                                                          const std::vector<PathStep>& path) {
    std::vector<std::pair<int, std::string>> out;
    for (const auto& step : path) out.emplace_back(step.sign, circuit.branches[step.branch].id);
    return out;
}

/// Largest type whose Eq.-(1) allowance covers a voltage control between the given
/// nodes: 4 when a C-V path exists, 3 when a C-R-V path exists, otherwise 1 (any
/// branch voltage). When a rewrite is found it is recorded.
int voltage_control_level(const Circuit& circuit, int node_a, int node_b,
                          std::vector<std::pair<int, std::string>>& rewrite) {
    if (auto path = find_path(circuit, node_a, node_b, kCV)) {
        rewrite = path_to_branches(circuit, *path);
        return 4;
    }
    if (auto path = find_path(circuit, node_a, node_b, kCRV)) {
        rewrite = path_to_branches(circuit, *path);
        return 3;
    }
    rewrite.clear();
    return 1;
}

} // namespace

bool VerificationReport::has_code(const std::string& code) const {
    return std::any_of(violations.begin(), violations.end(),
                       [&](const Violation& v) { return v.code == code; });
}

std::vector<Violation> check_well_posedness(const Circuit& circuit) {
    std::vector<Violation> violations;
    int n = circuit.node_count();

    // Connectivity of the full graph.
    {
        auto partition = connected_components(incidence_unreduced(circuit), n, 0);
        if (partition.component_count() > 1) {
            Violation v;
            v.code = "DISCONNECTED";
            for (int comp = 0; comp < partition.component_count(); ++comp) {
                if (comp == partition.ground_component) continue;
                for (int node : partition.component_nodes[comp])
                    v.witness_nodes.push_back(circuit.nodes[node]);
            }
            v.detail = "circuit graph is not connected";
            violations.push_back(std::move(v));
        }
    }

    // V-loops: a cycle in the voltage-source-only subgraph. Detection via exact
    // column rank, witness via the fundamental loop of a spanning forest.
    {
        std::vector<EK> v_kinds = {EK::VSourceIndependent, EK::VSourceControlled};
        SignMatrix a_v = incidence_reduced(circuit, v_kinds);
        if (integer_rank(a_v) < a_v.cols) {
            auto forest = spanning_forest(a_v, n, n - 1);
            for (std::size_t j = 0; j < forest.loop_branches.size(); ++j) {
                Violation v;
                v.code = "VLOOP";
                int loop = forest.loop_branches[j];
                v.witness_branches.push_back(a_v.col_labels[loop]);
                v.element_ids.push_back(a_v.col_labels[loop]);
                for (const auto& step : forest.loop_tree_path[j])
                    v.witness_branches.push_back(a_v.col_labels[step.branch]);
                v.detail = "loop made up of only voltage sources";
                violations.push_back(std::move(v));
            }
        }
    }

    // I-cutsets: [A_C, A_L, A_R, A_V] losing full row rank; the witness is the node
    // set cut off from ground in the C-L-R-V subgraph (its boundary branches are all
    // current sources).
    {
        SignMatrix a_clrv = incidence_reduced(circuit, kCLRV);
        if (integer_rank(a_clrv) < n - 1) {
            auto partition = connected_components(a_clrv, n, n - 1);
            for (int comp = 0; comp < partition.component_count(); ++comp) {
                if (comp == partition.ground_component) continue;
                Violation v;
                v.code = "ICUTSET";
                std::set<int> cut; // original node indices of the cut-off set
                for (int row : partition.component_nodes[comp]) {
                    cut.insert(row + 1);
                    v.witness_nodes.push_back(circuit.nodes[row + 1]);
                }
                for (const auto& element : circuit.branches) {
                    bool in_a = cut.count(element.from_node) > 0;
                    bool in_b = cut.count(element.to_node) > 0;
                    if (in_a != in_b) {
                        v.witness_branches.push_back(element.id);
                        v.element_ids.push_back(element.id);
                    }
                }
                v.detail = "cutset made up of only current sources";
                violations.push_back(std::move(v));
            }
        }
    }

    return violations;
}

std::vector<Violation> check_controlled_vsources(const Circuit& circuit,
                                                 std::vector<ControlRewrite>& rewrites) {
    std::vector<Violation> violations;
    int n = circuit.node_count();

    SignMatrix a_vc = incidence_reduced(circuit, {EK::VSourceControlled});
    ComponentPartition merged_cvs = connected_components(incidence_reduced(circuit, kCVs), n, n - 1);
    auto contracted = contract(a_vc, merged_cvs);

    // A Vc branch contracted into a self-loop closes a C-V loop through a C-Vs path.
    for (int col : contracted.zero_columns) {
        const std::string& id = a_vc.col_labels[col];
        const Element& element = circuit.branches[circuit.find_element(id)];
        Violation v;
        v.code = "CS1";
        v.element_ids.push_back(id);
        v.witness_branches.push_back(id);
        if (auto path = find_path(circuit, element.from_node, element.to_node, kCVs))
            for (const auto& step : *path)
                v.witness_branches.push_back(circuit.branches[step.branch].id);
        v.detail = "controlled voltage source closes a C-V loop";
        violations.push_back(std::move(v));
    }

    // A cycle among the contracted Vc branches is a C-V loop as well.
    {
        auto forest = spanning_forest(contracted.matrix, contracted.matrix.rows + 1,
                                      contracted.matrix.rows);
        for (std::size_t j = 0; j < forest.loop_branches.size(); ++j) {
            int loop = forest.loop_branches[j];
            if (std::find(contracted.zero_columns.begin(), contracted.zero_columns.end(), loop) !=
                contracted.zero_columns.end())
                continue; // already reported
            Violation v;
            v.code = "CS1";
            v.element_ids.push_back(a_vc.col_labels[loop]);
            v.witness_branches.push_back(a_vc.col_labels[loop]);
            for (const auto& step : forest.loop_tree_path[j])
                v.witness_branches.push_back(a_vc.col_labels[step.branch]);
            v.detail = "loop of controlled voltage sources closed through C-Vs paths";
            violations.push_back(std::move(v));
        }
    }

    // Eq.-(3d) dependency allowance: v_c(A^T_CVs phi, i_L, t).
    for (const auto& element : circuit.branches) {
        if (element.kind != EK::VSourceControlled) continue;
        for (std::size_t k = 0; k < element.controls.size(); ++k) {
            const ControlRef& ref = element.controls[k];
            ControlRewrite rewrite;
            rewrite.element_id = element.id;
            rewrite.control_index = static_cast<int>(k);

            if (ref.kind == ControlRef::Kind::InductorCurrent) continue;
            if (ref.kind == ControlRef::Kind::ControlledVSourceCurrent) {
                Violation v;
                v.code = "VC_DEP";
                v.element_ids.push_back(element.id);
                v.detail = "controlled voltage sources may not depend on i_Vc (control " +
                           std::to_string(k) + ")";
                violations.push_back(std::move(v));
                continue;
            }

            int node_a = -1, node_b = -1;
            if (ref.kind == ControlRef::Kind::BranchVoltage) {
                const Element& target = circuit.branches[circuit.find_element(ref.element_id)];
                if (target.kind == EK::Capacitor || target.kind == EK::VSourceIndependent) {
                    rewrite.signed_branches = {{1, target.id}};
                    rewrites.push_back(std::move(rewrite));
                    continue;
                }
                node_a = target.from_node;
                node_b = target.to_node;
            } else {
                node_a = ref.node_a;
                node_b = ref.node_b;
            }
            if (auto path = find_path(circuit, node_a, node_b, kCVs)) {
                rewrite.signed_branches = path_to_branches(circuit, *path);
                rewrites.push_back(std::move(rewrite));
            } else {
                Violation v;
                v.code = "VC_DEP";
                v.element_ids.push_back(element.id);
                v.witness_nodes = {circuit.nodes[node_a], circuit.nodes[node_b]};
                v.detail = "control voltage has no C-Vs-only path between " +
                           circuit.nodes[node_a] + " and " + circuit.nodes[node_b];
                violations.push_back(std::move(v));
            }
        }
    }

    return violations;
}

std::vector<Violation> classify_controlled_isources(const Circuit& circuit,
                                                    std::map<std::string, int>& ic_type_of,
                                                    std::vector<ControlRewrite>& rewrites) {
    std::vector<Violation> violations;

    for (const auto& element : circuit.branches) {
        if (element.kind != EK::ISourceControlled) continue;

        // Smallest type whose terminal-path condition holds; the families are nested.
        int k_min = 0;
        if (find_path(circuit, element.from_node, element.to_node, kVsOnly)) k_min = 1;
        else if (find_path(circuit, element.from_node, element.to_node, kCVs)) k_min = 2;
        else if (find_path(circuit, element.from_node, element.to_node, kCV)) k_min = 3;
        else if (find_path(circuit, element.from_node, element.to_node, kCRV)) k_min = 4;

        if (k_min == 0) {
            Violation v;
            v.code = "CS5";
            v.element_ids.push_back(element.id);
            // Cut witness: the C-R-V component of a terminal on the non-ground side.
            int n = circuit.node_count();
            auto universe_of = [n](int node) { return node == 0 ? n - 1 : node - 1; };
            auto partition = connected_components(incidence_reduced(circuit, kCRV), n, n - 1);
            int comp = partition.component_of[universe_of(element.from_node)];
            if (comp == partition.ground_component)
                comp = partition.component_of[universe_of(element.to_node)];
            for (int node : partition.component_nodes[comp])
                v.witness_nodes.push_back(circuit.nodes[node == n - 1 ? 0 : node + 1]);
            v.detail = "controlled current source sits in an L-I cutset (no C-R-V-only path "
                       "between its terminals)";
            violations.push_back(std::move(v));
            continue;
        }

        // Largest type whose Eq.-(1) dependency allowance covers the declared controls.
        int k_max = 4;
        bool ivc_limited = false;
        std::vector<ControlRewrite> element_rewrites;
        for (std::size_t k = 0; k < element.controls.size(); ++k) {
            const ControlRef& ref = element.controls[k];
            if (ref.kind == ControlRef::Kind::InductorCurrent) continue;
            if (ref.kind == ControlRef::Kind::ControlledVSourceCurrent) {
                if (k_max > 2) {
                    k_max = 2;
                    ivc_limited = true;
                }
                continue;
            }
            int node_a, node_b;
            bool direct_cv = false, direct_crv = false;
            if (ref.kind == ControlRef::Kind::BranchVoltage) {
                const Element& target = circuit.branches[circuit.find_element(ref.element_id)];
                direct_cv = target.kind == EK::Capacitor || target.kind == EK::VSourceIndependent ||
                            target.kind == EK::VSourceControlled;
                direct_crv = direct_cv || target.kind == EK::Resistor;
                node_a = target.from_node;
                node_b = target.to_node;
            } else {
                node_a = ref.node_a;
                node_b = ref.node_b;
            }
            ControlRewrite rewrite;
            rewrite.element_id = element.id;
            rewrite.control_index = static_cast<int>(k);
            int level;
            if (direct_cv) {
                level = 4;
                rewrite.signed_branches = {{1, ref.element_id}};
            } else {
                level = voltage_control_level(circuit, node_a, node_b, rewrite.signed_branches);
                if (level < 3 && direct_crv) {
                    level = 3;
                    rewrite.signed_branches = {{1, ref.element_id}};
                }
            }
            if (!rewrite.signed_branches.empty()) element_rewrites.push_back(std::move(rewrite));
            if (level < k_max) {
                k_max = level;
                ivc_limited = false;
            }
        }

        if (k_min > k_max) {
            Violation v;
            if (ivc_limited) {
                v.code = "IC_IVC_DEP";
                v.detail = "i_Vc control on a controlled current source whose smallest eligible "
                           "type is " + std::to_string(k_min);
            } else if (k_max == 1) {
                v.code = "CS2";
                v.detail = "controls need arbitrary branch voltages (type 1) but there is no "
                           "Vs-only path between the terminals";
            } else {
                v.code = "CS4";
                v.detail = "controls need A^T_CRV phi (type <= 3) but there is no C-V-only path "
                           "between the terminals";
            }
            v.element_ids.push_back(element.id);
            violations.push_back(std::move(v));
            continue;
        }

        ic_type_of[element.id] = k_min;
        for (auto& rewrite : element_rewrites) rewrites.push_back(std::move(rewrite));
    }

    // Controlled resistors: g_R may depend on A^T_R phi, A^T_CV phi and i_L, so voltage
    // controls must be representable through a C-R-V-only path.
    for (const auto& element : circuit.branches) {
        if (element.kind != EK::Resistor || element.controls.empty()) continue;
        for (std::size_t k = 0; k < element.controls.size(); ++k) {
            const ControlRef& ref = element.controls[k];
            if (ref.kind == ControlRef::Kind::InductorCurrent) continue;
            if (ref.kind == ControlRef::Kind::ControlledVSourceCurrent) {
                Violation v;
                v.code = "R_DEP";
                v.element_ids.push_back(element.id);
                v.detail = "resistors may not depend on i_Vc (control " + std::to_string(k) + ")";
                violations.push_back(std::move(v));
                continue;
            }
            int node_a, node_b;
            if (ref.kind == ControlRef::Kind::BranchVoltage) {
                const Element& target = circuit.branches[circuit.find_element(ref.element_id)];
                if (target.kind == EK::Capacitor || target.kind == EK::Resistor ||
                    target.kind == EK::VSourceIndependent || target.kind == EK::VSourceControlled) {
                    ControlRewrite rewrite;
                    rewrite.element_id = element.id;
                    rewrite.control_index = static_cast<int>(k);
                    rewrite.signed_branches = {{1, target.id}};
                    rewrites.push_back(std::move(rewrite));
                    continue;
                }
                node_a = target.from_node;
                node_b = target.to_node;
            } else {
                node_a = ref.node_a;
                node_b = ref.node_b;
            }
            if (auto path = find_path(circuit, node_a, node_b, kCRV)) {
                ControlRewrite rewrite;
                rewrite.element_id = element.id;
                rewrite.control_index = static_cast<int>(k);
                rewrite.signed_branches = path_to_branches(circuit, *path);
                rewrites.push_back(std::move(rewrite));
            } else {
                Violation v;
                v.code = "R_DEP";
                v.element_ids.push_back(element.id);
                v.witness_nodes = {circuit.nodes[node_a], circuit.nodes[node_b]};
                v.detail = "resistor control has no C-R-V-only path between " +
                           circuit.nodes[node_a] + " and " + circuit.nodes[node_b];
                violations.push_back(std::move(v));
            }
        }
    }

    return violations;
}

VerificationReport verify_circuit(const Circuit& circuit) {
    VerificationReport report;
    auto wp = check_well_posedness(circuit);
    report.violations.insert(report.violations.end(), wp.begin(), wp.end());
    if (report.violations.empty()) {
        auto vc = check_controlled_vsources(circuit, report.control_rewrites);
        report.violations.insert(report.violations.end(), vc.begin(), vc.end());
        auto ic = classify_controlled_isources(circuit, report.ic_type_of, report.control_rewrites);
        report.violations.insert(report.violations.end(), ic.begin(), ic.end());
    }
    report.passed = report.violations.empty();
    return report;
}

std::string report_to_json(const VerificationReport& report) {
    nlohmann::json out;
    out["passed"] = report.passed;
    out["violations"] = nlohmann::json::array();
    for (const auto& v : report.violations) {
        nlohmann::json item;
        item["code"] = v.code;
        item["elements"] = v.element_ids;
        item["witness"]["branches"] = v.witness_branches;
        item["witness"]["nodes"] = v.witness_nodes;
        item["detail"] = v.detail;
        out["violations"].push_back(item);
    }
    out["ic_types"] = nlohmann::json::object();
    for (const auto& [id, type] : report.ic_type_of) out["ic_types"][id] = type;
    out["rewrites"] = nlohmann::json::object();
    for (const auto& rewrite : report.control_rewrites) {
        nlohmann::json terms = nlohmann::json::array();
        for (const auto& [sign, branch] : rewrite.signed_branches)
            terms.push_back({{"sign", sign}, {"branch", branch}});
        out["rewrites"][rewrite.element_id + "." + std::to_string(rewrite.control_index)] = terms;
    }
    return out.dump(2);
}

} // namespace mnadec
