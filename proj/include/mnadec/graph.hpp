#pragma once

#include "mnadec/netlist.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mnadec {

/// Sparse matrix with entries in {-1, 0, +1}: incidence matrices, basis matrices and
/// their products. Immutable after construction except for labels.
struct SignMatrix {
    struct Triplet {
        int row;
        int col;
        int value; // +1 or -1
    };

    int rows = 0;
    int cols = 0;
    std::vector<Triplet> entries; // sorted by (col, row), no duplicates
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;

    SignMatrix() = default;
    SignMatrix(int rows_, int cols_) : rows(rows_), cols(cols_) {}

    static SignMatrix identity(int n);

    void add_entry(int row, int col, int value);
    void finalize(); ///< sort entries by (col, row); rejects duplicates and values not in {-1,+1}

    int value_at(int row, int col) const;
    std::vector<Triplet> column(int col) const;
    bool column_is_zero(int col) const;

    SignMatrix transposed() const;
    /// Exact product; throws if any resulting entry leaves {-1, 0, +1}.
    SignMatrix multiply(const SignMatrix& other) const;
    /// Column sub-selection in the given order.
    SignMatrix select_columns(const std::vector<int>& columns) const;

    Eigen::MatrixXi to_dense_int() const;
    Eigen::SparseMatrix<double> to_sparse() const;

    bool same_entries(const SignMatrix& other) const; ///< dims + entries, ignoring labels
};

/// Partition of a node universe into connected components. The universe is
/// 0..node_count-1 with one designated ground node. Non-ground components are ordered
/// by their smallest node index; the component containing ground is always last.
struct ComponentPartition {
    std::vector<int> component_of;                ///< node -> component index
    std::vector<std::vector<int>> component_nodes; ///< per component, ascending node order
    int ground_component = -1;
    int node_count = 0;
    int ground_node = -1;

    int component_count() const { return static_cast<int>(component_nodes.size()); }
    int nonground_component_count() const { return component_count() - 1; }
    /// Highest node index of a component.
    int last_node(int component) const { return component_nodes[component].back(); }
};

struct PathStep {
    int branch = -1; ///< column index (or circuit branch index for find_path)
    int sign = 0;    ///< +1 = traversed from->to
};

/// Spanning forest of an incidence matrix, Kruskal in column order. Loop branches are
/// the columns not in the tree; each closes one fundamental loop through the tree.
struct SpanningForest {
    std::vector<int> tree_branches; ///< ascending column indices
    std::vector<int> loop_branches; ///< ascending column indices
    /// Per loop branch: tree path from the loop branch's head back to its tail,
    /// so that loop branch + path forms the oriented fundamental loop.
    std::vector<std::vector<PathStep>> loop_tree_path;
    int node_count = 0;
};

/// n x b incidence matrix over all nodes (ground row included) for the selected kinds;
/// columns in kind-sorted order restricted to `kinds`.
SignMatrix incidence_unreduced(const Circuit& circuit, const std::vector<ElementKind>& kinds);

/// As above with the ground row removed (rows = nodes 1..n-1).
SignMatrix incidence_reduced(const Circuit& circuit, const std::vector<ElementKind>& kinds);

SignMatrix incidence_unreduced(const Circuit& circuit);
SignMatrix incidence_reduced(const Circuit& circuit);

/// Connected components of the graph described by `m` over `node_count` nodes.
/// For a reduced matrix (rows == node_count - 1) the ground node is the virtual node
/// `node_count - 1`; single-entry columns connect to it. Zero columns are self-loops
/// and connect nothing.
ComponentPartition connected_components(const SignMatrix& m, int node_count, int ground_node);

SpanningForest spanning_forest(const SignMatrix& m, int node_count, int ground_node);

/// Quotient incidence matrix: rows become the non-ground components of `by` in
/// partition order (the ground component maps to the eliminated ground row).
/// Branches with both endpoints in one component turn into zero columns and are
/// reported in `zero_columns`. Equals the exact product Q^T * m for the Q of `by`.
struct ContractResult {
    SignMatrix matrix;
    std::vector<int> zero_columns;
};
ContractResult contract(const SignMatrix& m, const ComponentPartition& by);

/// Row image under P^T for the P of `by`: the last node of every non-ground component
/// is identified with ground (its row dropped); remaining rows keep their entries and
/// are ordered component by component (ground component last), ascending node order.
SignMatrix identify_last_nodes(const SignMatrix& m, const ComponentPartition& by);

/// BFS path between two circuit nodes through branches of the allowed kinds.
/// Signs are chosen so that sum(sign * v_branch) == phi(a) - phi(b).
std::optional<std::vector<PathStep>> find_path(const Circuit& circuit, int node_a, int node_b,
                                               const std::vector<ElementKind>& allowed_kinds);

/// Exact integer rank by fraction-free (Bareiss) elimination.
int integer_rank(const Eigen::MatrixXi& m);
int integer_rank(const SignMatrix& m);

/// Exact integer determinant (Bareiss); throws DimensionMismatch for non-square input.
long long integer_determinant(const Eigen::MatrixXi& m);

// Matrix Market coordinate/integer IO. Zero-dimension matrices round-trip.
void write_matrix_market(std::ostream& out, const SignMatrix& m);
void write_matrix_market_file(const std::string& path, const SignMatrix& m);
SignMatrix read_matrix_market(std::istream& in);
SignMatrix read_matrix_market_file(const std::string& path);

} // namespace mnadec
