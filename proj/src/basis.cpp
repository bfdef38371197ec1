#include "mnadec/basis.hpp"

#include <algorithm>
#include <sstream>

namespace mnadec {

namespace {

int universe_row(int node, int ground_node) { return node < ground_node ? node : node - 1; }

std::string phi_name(const Circuit& circuit, int node) {
    return "phi(" + circuit.nodes[node] + ")";
}

std::string current_name(const std::string& id) { return "i(" + id + ")"; }

std::string combo_label(const NamedCombo& combo) {
    std::ostringstream out;
    bool first = true;
    for (const auto& [coef, name] : combo.terms) {
        if (coef == 0) continue;
        if (coef > 0 && !first) out << "+";
        if (coef == -1) out << "-";
        else if (coef != 1) out << coef << "*";
        out << name;
        first = false;
    }
    if (first) out << "0";
    return out.str();
}

} // namespace

const StageBasis& SplitChain::stage(int index) const {
    switch (index) {
        case 0: return vs;
        case 1: return c;
        case 2: return vc;
        default: return r;
    }
}

QpPair q_and_p_from_components(const ComponentPartition& partition) {
    int rows = partition.node_count - 1; // all universe nodes except ground
    QpPair out;
    out.q = SignMatrix(rows, partition.nonground_component_count());
    int p_cols = 0;
    for (int comp = 0; comp < partition.component_count(); ++comp)
        p_cols += static_cast<int>(partition.component_nodes[comp].size()) - 1;
    out.p = SignMatrix(rows, p_cols);

    for (int comp = 0, q_col = 0; comp < partition.component_count(); ++comp) {
        if (comp == partition.ground_component) continue;
        for (int node : partition.component_nodes[comp])
            out.q.add_entry(universe_row(node, partition.ground_node), q_col, 1);
        ++q_col;
    }

    // P columns component by component (ground last): identity on all but the last
    // node of a non-ground component, identity on every non-ground node of the
    // ground component.
    int p_col = 0;
    auto emit_columns = [&](int comp) {
        for (int node : partition.component_nodes[comp]) {
            if (node == partition.ground_node) continue;
            if (comp != partition.ground_component && node == partition.last_node(comp)) continue;
            out.p.add_entry(universe_row(node, partition.ground_node), p_col++, 1);
        }
    };
    for (int comp = 0; comp < partition.component_count(); ++comp)
        if (comp != partition.ground_component) emit_columns(comp);
    emit_columns(partition.ground_component);

    out.q.finalize();
    out.p.finalize();
    return out;
}

VwPair vw_from_forest(const SpanningForest& forest, int branch_count) {
    VwPair out;
    out.v = SignMatrix(branch_count, static_cast<int>(forest.tree_branches.size()));
    out.w = SignMatrix(branch_count, static_cast<int>(forest.loop_branches.size()));
    for (std::size_t j = 0; j < forest.tree_branches.size(); ++j)
        out.v.add_entry(forest.tree_branches[j], static_cast<int>(j), 1);
    for (std::size_t j = 0; j < forest.loop_branches.size(); ++j) {
        out.w.add_entry(forest.loop_branches[j], static_cast<int>(j), 1);
        for (const auto& step : forest.loop_tree_path[j])
            out.w.add_entry(step.branch, static_cast<int>(j), step.sign);
    }
    out.v.finalize();
    out.w.finalize();
    return out;
}

namespace {

/// One potential-splitting stage: contract the kind incidence by everything merged so
/// far, take components of the contracted graph, and emit (Q, P). `block_rep` maps the
/// current contracted nodes to original circuit nodes (the recursive last-node rule)
/// and is updated in place.
StageBasis run_stage(const Circuit& circuit, const std::string& stage_name,
                     const std::vector<ElementKind>& kind,
                     const std::vector<ElementKind>& merged_kinds,
                     std::vector<int>& block_rep, std::vector<NamedCombo>& tilde_names) {
    int n_reduced = circuit.node_count() - 1;
    SignMatrix a_kind = incidence_reduced(circuit, kind);
    ComponentPartition merged =
        connected_components(incidence_reduced(circuit, merged_kinds), n_reduced + 1, n_reduced);

    StageBasis stage;
    stage.stage = stage_name;
    auto contracted = contract(a_kind, merged);
    stage.contracted = std::move(contracted.matrix);
    stage.zero_columns = std::move(contracted.zero_columns);

    int blocks = stage.contracted.rows;
    stage.partition = connected_components(stage.contracted, blocks + 1, blocks);

    auto qp = q_and_p_from_components(stage.partition);
    stage.q = std::move(qp.q);
    stage.p = std::move(qp.p);

    // Row labels: representative node of each contracted block.
    for (int b = 0; b < blocks; ++b) {
        stage.q.row_labels.push_back(phi_name(circuit, block_rep[b]));
        stage.p.row_labels.push_back(phi_name(circuit, block_rep[b]));
    }

    // Names of the phi~ entries, in P column order, and the new block representatives.
    tilde_names.clear();
    std::vector<int> new_rep;
    auto emit_names = [&](int comp) {
        const auto& members = stage.partition.component_nodes[comp];
        bool ground = comp == stage.partition.ground_component;
        int last = stage.partition.last_node(comp);
        for (int block : members) {
            if (block >= blocks) continue; // virtual ground
            if (!ground && block == last) continue;
            NamedCombo combo;
            if (ground) {
                combo.terms = {{1, phi_name(circuit, block_rep[block])}};
            } else {
                combo.terms = {{1, phi_name(circuit, block_rep[block])},
                               {-1, phi_name(circuit, block_rep[last])}};
            }
            combo.name = combo_label(combo);
            tilde_names.push_back(std::move(combo));
        }
    };
    for (int comp = 0; comp < stage.partition.component_count(); ++comp) {
        if (comp == stage.partition.ground_component) continue;
        emit_names(comp);
        new_rep.push_back(block_rep[stage.partition.last_node(comp)]);
        stage.q.col_labels.push_back(phi_name(circuit, new_rep.back()));
    }
    emit_names(stage.partition.ground_component);
    for (const auto& combo : tilde_names) stage.p.col_labels.push_back(combo.name);

    block_rep = std::move(new_rep);
    return stage;
}

} // namespace

SplitChain build_split_chain(const Circuit& circuit) {
    SplitChain chain;
    int n_reduced = circuit.node_count() - 1;

    std::vector<int> block_rep(n_reduced);
    for (int i = 0; i < n_reduced; ++i) block_rep[i] = i + 1;

    using EK = ElementKind;
    chain.vs = run_stage(circuit, "Vs", {EK::VSourceIndependent}, {}, block_rep,
                         chain.phi_vs_names);
    if (!chain.vs.zero_columns.empty() || chain.vs.contracted.cols !=
            chain.vs.partition.node_count - chain.vs.partition.component_count())
        throw AssumptionViolation("Vs", "loop made up of independent voltage sources");

    chain.c = run_stage(circuit, "C", {EK::Capacitor}, {EK::VSourceIndependent}, block_rep,
                        chain.phi_c_names);

    chain.vc = run_stage(circuit, "Vc", {EK::VSourceControlled},
                         {EK::VSourceIndependent, EK::Capacitor}, block_rep, chain.phi_vc_names);
    if (!chain.vc.zero_columns.empty() || chain.vc.contracted.cols !=
            chain.vc.partition.node_count - chain.vc.partition.component_count())
        throw AssumptionViolation("Vc", "controlled voltage source inside a C-V loop");

    chain.r = run_stage(circuit, "R", {EK::Resistor},
                        {EK::VSourceIndependent, EK::Capacitor, EK::VSourceControlled}, block_rep,
                        chain.phi_r_names);

    // Remaining blocks carry the output potentials phi-_R.
    for (int rep : block_rep) {
        NamedCombo combo;
        combo.terms = {{1, phi_name(circuit, rep)}};
        combo.name = combo_label(combo);
        chain.phi_rbar_names.push_back(std::move(combo));
    }

    // Final stage: V_L, W_L from the spanning forest of the contracted inductor graph.
    {
        SignMatrix a_l = incidence_reduced(circuit, {EK::Inductor});
        ComponentPartition merged = connected_components(
            incidence_reduced(circuit, {EK::VSourceIndependent, EK::Capacitor,
                                        EK::VSourceControlled, EK::Resistor}),
            n_reduced + 1, n_reduced);
        auto contracted = contract(a_l, merged);
        chain.l.contracted = std::move(contracted.matrix);
        int blocks = chain.l.contracted.rows;
        chain.l.forest = spanning_forest(chain.l.contracted, blocks + 1, blocks);
        if (static_cast<int>(chain.l.forest.tree_branches.size()) != blocks)
            throw AssumptionViolation(
                "L", "nodes not reachable from ground through C, R, V and L elements (L-I cutset)");
        auto vw = vw_from_forest(chain.l.forest, chain.l.contracted.cols);
        chain.l.v = std::move(vw.v);
        chain.l.w = std::move(vw.w);
        chain.l.v.row_labels = chain.l.contracted.col_labels;
        chain.l.w.row_labels = chain.l.contracted.col_labels;
    }

    // Composed products and the potential splitting maps.
    chain.q_vs_c = chain.vs.q.multiply(chain.c.q);
    chain.q_vs_c_vc = chain.q_vs_c.multiply(chain.vc.q);
    chain.q_vs_c_vc_r = chain.q_vs_c_vc.multiply(chain.r.q);
    chain.s_vs = chain.vs.p;
    chain.s_c = chain.vs.q.multiply(chain.c.p);
    chain.s_vc = chain.q_vs_c.multiply(chain.vc.p);
    chain.s_r = chain.q_vs_c_vc.multiply(chain.r.p);
    chain.s_rbar = chain.q_vs_c_vc_r;

    // Current splitting names from the forest: i-_L are the fundamental loop currents,
    // i~_L the tree currents minus their W-weighted loop contributions.
    {
        const auto& labels = chain.l.contracted.col_labels;
        const auto& forest = chain.l.forest;
        for (int loop : forest.loop_branches) {
            NamedCombo combo;
            combo.terms = {{1, current_name(labels[loop])}};
            combo.name = combo_label(combo);
            chain.i_loop_names.push_back(std::move(combo));
        }
        for (std::size_t j = 0; j < forest.tree_branches.size(); ++j) {
            int tree = forest.tree_branches[j];
            NamedCombo combo;
            combo.terms = {{1, current_name(labels[tree])}};
            for (std::size_t k = 0; k < forest.loop_branches.size(); ++k) {
                int w = chain.l.w.value_at(tree, static_cast<int>(k));
                if (w != 0)
                    combo.terms.push_back({-w, current_name(labels[forest.loop_branches[k]])});
            }
            combo.name = combo_label(combo);
            chain.i_tree_names.push_back(std::move(combo));
        }
    }

    return chain;
}

} // namespace mnadec
