#pragma once

#include "mnadec/graph.hpp"

#include <string>
#include <vector>

namespace mnadec {

/// (Q, P) basis pair for one splitting stage, together with the graph data that
/// produced it. `source` is the contracted incidence matrix A_kind^T Q_chain (stored
/// untransposed, rows = current nodes), `partition` its connected components.
struct StageBasis {
    std::string stage;            ///< "Vs", "C", "Vc", "R"
    SignMatrix contracted;        ///< contracted kind incidence over the current nodes
    std::vector<int> zero_columns;
    ComponentPartition partition;
    SignMatrix q;
    SignMatrix p;
};

/// (V, W) pair for the final inductor stage.
struct LoopBasis {
    SignMatrix contracted; ///< Q_{Vs C Vc R}^T A_L
    SpanningForest forest;
    SignMatrix v;
    SignMatrix w;
};

/// Named linear combination of original unknowns with integer coefficients.
struct NamedCombo {
    std::string name;
    std::vector<std::pair<int, std::string>> terms; ///< (coefficient, unknown name)
};

/// The full cascade (P_Vs,Q_Vs), (P_C,Q_C), (P_Vc,Q_Vc), (P_R,Q_R), (V_L,W_L) plus
/// composed products, built purely from the circuit graph.
struct SplitChain {
    StageBasis vs;
    StageBasis c;
    StageBasis vc;
    StageBasis r;
    LoopBasis l;

    SignMatrix q_vs_c;        ///< Q_Vs Q_C
    SignMatrix q_vs_c_vc;     ///< Q_Vs Q_C Q_Vc
    SignMatrix q_vs_c_vc_r;   ///< Q_Vs Q_C Q_Vc Q_R

    // Splitting matrices mapping each tilde/bar block into nodal potentials:
    // phi = s_vs*phi~_Vs + s_c*phi~_C + s_vc*phi~_Vc + s_r*phi~_R + s_rbar*phi-_R.
    SignMatrix s_vs;   ///< P_Vs
    SignMatrix s_c;    ///< Q_Vs P_C
    SignMatrix s_vc;   ///< Q_Vs Q_C P_Vc
    SignMatrix s_r;    ///< Q_Vs Q_C Q_Vc P_R
    SignMatrix s_rbar; ///< Q_Vs Q_C Q_Vc Q_R

    // Variable naming (integer combinations of original unknowns).
    std::vector<NamedCombo> phi_vs_names;   ///< entries of phi~_Vs
    std::vector<NamedCombo> phi_c_names;    ///< entries of phi~_C
    std::vector<NamedCombo> phi_vc_names;   ///< entries of phi~_Vc
    std::vector<NamedCombo> phi_r_names;    ///< entries of phi~_R
    std::vector<NamedCombo> phi_rbar_names; ///< entries of phi-_R
    std::vector<NamedCombo> i_tree_names;   ///< entries of i~_L
    std::vector<NamedCombo> i_loop_names;   ///< entries of i-_L

    const StageBasis& stage(int index) const;
};

/// Q and P of Eq.-style block structure for a component partition: Q carries one
/// ones-column per non-ground component (zero on the ground component); P carries
/// identity columns for all but the last node of each non-ground component and for
/// every non-ground node of the ground component. Rows keep the original node order.
struct QpPair {
    SignMatrix q;
    SignMatrix p;
};
QpPair q_and_p_from_components(const ComponentPartition& partition);

/// V, W from a spanning forest: W has one column per fundamental loop (+1 on the loop
/// branch, +-1 on tree branches per orientation); V is the identity on tree branches.
struct VwPair {
    SignMatrix v;
    SignMatrix w;
};
VwPair vw_from_forest(const SpanningForest& forest, int branch_count);

/// Run the five-stage cascade on a circuit. Throws AssumptionViolation when a stage's
/// rank prerequisite fails (V-loop reaching the Vs stage, controlled-source loop at the
/// Vc stage, L-I cutset leaking into the final stage).
SplitChain build_split_chain(const Circuit& circuit);

} // namespace mnadec
