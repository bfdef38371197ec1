#pragma once

#include "mnadec/netlist.hpp"

#include <map>
#include <string>
#include <vector>

namespace mnadec {

/// Stable violation codes (also used in the JSON report and matched by tests):
///   DISCONNECTED  circuit graph not connected
///   VLOOP         loop of only voltage sources
///   ICUTSET       cutset of only current sources
///   CS1           controlled voltage source inside a C-V loop
///   CS2           controls need full A^T phi but no Vs-only terminal path
///   CS4           controls need A^T_CRV phi but no C-V-only terminal path
///   CS5           controlled current source in an L-I cutset (no C-R-V terminal path)
///   IC_IVC_DEP    i_Vc control on a source whose smallest eligible type is >= 3
///   VC_DEP        controlled V source control not representable via A^T_CVs phi / i_L
///   R_DEP         resistor control not representable via A^T_R phi, A^T_CV phi, i_L
/// Controls that reference currents through independent voltage sources never reach
/// the checker; the parser rejects them.
struct Violation {
    std::string code;
    std::vector<std::string> element_ids;
    std::vector<std::string> witness_branches; ///< loop / cutset-boundary branch ids
    std::vector<std::string> witness_nodes;    ///< deficient-cut node names / path endpoints
    std::string detail;
};

/// Signed branch-voltage sum a control was rewritten into (v = sum sign * v_branch).
struct ControlRewrite {
    std::string element_id;
    int control_index = 0;
    std::vector<std::pair<int, std::string>> signed_branches;
};

struct VerificationReport {
    bool passed = false;
    std::vector<Violation> violations;
    std::map<std::string, int> ic_type_of; ///< controlled I source id -> type 1..4
    std::vector<ControlRewrite> control_rewrites;

    bool has_code(const std::string& code) const;
};

/// Assumption-1 checks: connectivity, V-loops, I-cutsets (rank-based detection with
/// loop / cut witnesses).
std::vector<Violation> check_well_posedness(const Circuit& circuit);

/// Assumption-3.1 and Eq.-(3d) dependency checks for controlled voltage sources.
/// Appends any rewrites of accepted controls to `rewrites`.
std::vector<Violation> check_controlled_vsources(const Circuit& circuit,
                                                 std::vector<ControlRewrite>& rewrites);

/// Assumption-3.2..3.5 classification of controlled current sources into types 1..4
/// plus Eq.-(1) dependency validation; also validates controlled-resistor controls.
std::vector<Violation> classify_controlled_isources(const Circuit& circuit,
                                                    std::map<std::string, int>& ic_type_of,
                                                    std::vector<ControlRewrite>& rewrites);

/// Run all checks.
VerificationReport verify_circuit(const Circuit& circuit);

std::string report_to_json(const VerificationReport& report);

} // namespace mnadec
