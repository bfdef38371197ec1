#include "mnadec/graph.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <queue>
#include <sstream>

namespace mnadec {

namespace {

[[noreturn]] void dim_fail(const std::string& message) { throw DimensionMismatch(message); }

/// Endpoints of a column in the node universe (rows + virtual ground). Zero columns
/// are self-loops at ground.
struct Endpoints {
    int from;
    int to;
};

Endpoints column_endpoints(const SignMatrix& m, int col, int ground_node) {
    int from = -1, to = -1;
    for (const auto& entry : m.column(col)) {
        if (entry.value > 0) {
            if (from >= 0) dim_fail("column has two +1 entries");
            from = entry.row;
        } else {
            if (to >= 0) dim_fail("column has two -1 entries");
            to = entry.row;
        }
    }
    if (from < 0) from = ground_node;
    if (to < 0) to = ground_node;
    return {from, to};
}

struct UnionFind {
    std::vector<int> parent;

    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }

    int find(int a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    }

    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[std::max(a, b)] = std::min(a, b);
        return true;
    }
};

} // namespace

// --- SignMatrix ---

SignMatrix SignMatrix::identity(int n) {
    SignMatrix m(n, n);
    for (int i = 0; i < n; ++i) m.add_entry(i, i, 1);
    m.finalize();
    return m;
}

void SignMatrix::add_entry(int row, int col, int value) {
    entries.push_back({row, col, value});
}

void SignMatrix::finalize() {
    std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
        return a.col != b.col ? a.col < b.col : a.row < b.row;
    });
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (e.row < 0 || e.row >= rows || e.col < 0 || e.col >= cols)
            dim_fail("sign matrix entry out of range");
        if (e.value != 1 && e.value != -1)
            dim_fail("sign matrix entry must be +1 or -1");
        if (i > 0 && entries[i - 1].row == e.row && entries[i - 1].col == e.col)
            dim_fail("duplicate sign matrix entry");
    }
}

int SignMatrix::value_at(int row, int col) const {
    for (const auto& e : entries)
        if (e.row == row && e.col == col) return e.value;
    return 0;
}

std::vector<SignMatrix::Triplet> SignMatrix::column(int col) const {
    std::vector<Triplet> out;
    for (const auto& e : entries)
        if (e.col == col) out.push_back(e);
    return out;
}

bool SignMatrix::column_is_zero(int col) const { return column(col).empty(); }

SignMatrix SignMatrix::transposed() const {
    SignMatrix out(cols, rows);
    for (const auto& e : entries) out.add_entry(e.col, e.row, e.value);
    out.finalize();
    out.row_labels = col_labels;
    out.col_labels = row_labels;
    return out;
}

SignMatrix SignMatrix::multiply(const SignMatrix& other) const {
    if (cols != other.rows) dim_fail("sign matrix product dimension mismatch");
    std::map<std::pair<int, int>, int> acc;
    std::vector<std::vector<Triplet>> rows_of_other(other.rows);
    for (const auto& e : other.entries) rows_of_other[e.row].push_back(e);
    for (const auto& a : entries)
        for (const auto& b : rows_of_other[a.col]) acc[{a.row, b.col}] += a.value * b.value;
    SignMatrix out(rows, other.cols);
    for (const auto& [pos, value] : acc) {
        if (value == 0) continue;
        if (value != 1 && value != -1)
            dim_fail("sign matrix product left {-1,0,+1}");
        out.add_entry(pos.first, pos.second, value);
    }
    out.finalize();
    out.row_labels = row_labels;
    out.col_labels = other.col_labels;
    return out;
}

SignMatrix SignMatrix::select_columns(const std::vector<int>& columns) const {
    SignMatrix out(rows, static_cast<int>(columns.size()));
    out.row_labels = row_labels;
    for (std::size_t j = 0; j < columns.size(); ++j) {
        for (const auto& e : column(columns[j])) out.add_entry(e.row, static_cast<int>(j), e.value);
        if (!col_labels.empty()) out.col_labels.push_back(col_labels[columns[j]]);
    }
    out.finalize();
    return out;
}

Eigen::MatrixXi SignMatrix::to_dense_int() const {
    Eigen::MatrixXi dense = Eigen::MatrixXi::Zero(rows, cols);
    for (const auto& e : entries) dense(e.row, e.col) = e.value;
    return dense;
}

Eigen::SparseMatrix<double> SignMatrix::to_sparse() const {
    Eigen::SparseMatrix<double> out(rows, cols);
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(entries.size());
    for (const auto& e : entries) triplets.emplace_back(e.row, e.col, static_cast<double>(e.value));
    out.setFromTriplets(triplets.begin(), triplets.end());
    return out;
}

bool SignMatrix::same_entries(const SignMatrix& other) const {
    if (rows != other.rows || cols != other.cols) return false;
    if (entries.size() != other.entries.size()) return false;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& a = entries[i];
        const auto& b = other.entries[i];
        if (a.row != b.row || a.col != b.col || a.value != b.value) return false;
    }
    return true;
}

// --- incidence ---

namespace {

SignMatrix incidence_impl(const Circuit& circuit, const std::vector<ElementKind>& kinds,
                          bool reduced) {
    auto wanted = [&](ElementKind kind) {
        return std::find(kinds.begin(), kinds.end(), kind) != kinds.end();
    };
    std::vector<int> columns;
    for (int branch : kind_sorted_incidence_order(circuit))
        if (wanted(circuit.branches[branch].kind)) columns.push_back(branch);

    int n = circuit.node_count();
    SignMatrix m(reduced ? n - 1 : n, static_cast<int>(columns.size()));
    for (std::size_t j = 0; j < columns.size(); ++j) {
        const Element& element = circuit.branches[columns[j]];
        m.col_labels.push_back(element.id);
        auto row_of = [&](int node) { return reduced ? node - 1 : node; };
        if (!reduced || element.from_node != 0)
            m.add_entry(row_of(element.from_node), static_cast<int>(j), 1);
        if (!reduced || element.to_node != 0)
            m.add_entry(row_of(element.to_node), static_cast<int>(j), -1);
    }
    for (int node = reduced ? 1 : 0; node < n; ++node) m.row_labels.push_back(circuit.nodes[node]);
    m.finalize();
    return m;
}

} // namespace

SignMatrix incidence_unreduced(const Circuit& circuit, const std::vector<ElementKind>& kinds) {
    return incidence_impl(circuit, kinds, false);
}

SignMatrix incidence_reduced(const Circuit& circuit, const std::vector<ElementKind>& kinds) {
    return incidence_impl(circuit, kinds, true);
}

SignMatrix incidence_unreduced(const Circuit& circuit) {
    return incidence_impl(circuit, {kAllKinds.begin(), kAllKinds.end()}, false);
}

SignMatrix incidence_reduced(const Circuit& circuit) {
    return incidence_impl(circuit, {kAllKinds.begin(), kAllKinds.end()}, true);
}

// --- components / forests ---

ComponentPartition connected_components(const SignMatrix& m, int node_count, int ground_node) {
    if (ground_node < 0 || ground_node >= node_count) dim_fail("ground node out of range");
    if (m.rows != node_count && m.rows != node_count - 1)
        dim_fail("node count inconsistent with matrix rows");

    UnionFind uf(node_count);
    for (int col = 0; col < m.cols; ++col) {
        auto [from, to] = column_endpoints(m, col, ground_node);
        if (from != to) uf.unite(from, to);
    }

    // Components ordered by smallest member; the ground component moves to the end.
    std::map<int, std::vector<int>> by_root;
    for (int node = 0; node < node_count; ++node) by_root[uf.find(node)].push_back(node);

    ComponentPartition partition;
    partition.node_count = node_count;
    partition.ground_node = ground_node;
    partition.component_of.assign(node_count, -1);
    int ground_root = uf.find(ground_node);
    for (auto& [root, members] : by_root) {
        if (root == ground_root) continue;
        partition.component_nodes.push_back(members);
    }
    partition.component_nodes.push_back(by_root[ground_root]);
    partition.ground_component = partition.component_count() - 1;
    for (int comp = 0; comp < partition.component_count(); ++comp)
        for (int node : partition.component_nodes[comp]) partition.component_of[node] = comp;
    return partition;
}

SpanningForest spanning_forest(const SignMatrix& m, int node_count, int ground_node) {
    SpanningForest forest;
    forest.node_count = node_count;

    struct TreeEdge {
        int branch;
        int from, to;
    };
    UnionFind uf(node_count);
    std::vector<std::vector<std::pair<int, TreeEdge>>> adjacency(node_count); // node -> (peer, edge)
    std::vector<Endpoints> endpoints(m.cols);

    for (int col = 0; col < m.cols; ++col) {
        endpoints[col] = column_endpoints(m, col, ground_node);
        auto [from, to] = endpoints[col];
        if (from != to && uf.unite(from, to)) {
            forest.tree_branches.push_back(col);
            adjacency[from].push_back({to, {col, from, to}});
            adjacency[to].push_back({from, {col, from, to}});
        } else {
            forest.loop_branches.push_back(col);
        }
    }

    // Close each fundamental loop: BFS through the tree from head (to) back to tail (from).
    for (int loop : forest.loop_branches) {
        auto [from, to] = endpoints[loop];
        std::vector<PathStep> path;
        if (from != to) {
            std::vector<int> previous(node_count, -1);
            std::vector<TreeEdge> via(node_count, {-1, -1, -1});
            std::queue<int> queue;
            queue.push(to);
            previous[to] = to;
            while (!queue.empty() && previous[from] < 0) {
                int node = queue.front();
                queue.pop();
                for (const auto& [peer, edge] : adjacency[node]) {
                    if (previous[peer] >= 0) continue;
                    previous[peer] = node;
                    via[peer] = edge;
                    queue.push(peer);
                }
            }
            if (previous[from] < 0) dim_fail("loop endpoints not tree-connected");
            for (int node = from; node != to; node = previous[node]) {
                const TreeEdge& edge = via[node];
                // Walking head -> tail in reverse: the traversal direction at this hop is
                // previous[node] -> node.
                path.push_back({edge.branch, edge.from == previous[node] ? 1 : -1});
            }
            std::reverse(path.begin(), path.end());
        }
        forest.loop_tree_path.push_back(std::move(path));
    }
    return forest;
}

ContractResult contract(const SignMatrix& m, const ComponentPartition& by) {
    if (m.rows != by.node_count && m.rows != by.node_count - 1)
        dim_fail("contract: partition does not match matrix rows");

    // Non-ground components become the new rows, in partition order.
    std::vector<int> row_of_component(by.component_count(), -1);
    int next = 0;
    for (int comp = 0; comp < by.component_count(); ++comp)
        if (comp != by.ground_component) row_of_component[comp] = next++;

    ContractResult result;
    result.matrix = SignMatrix(next, m.cols);
    result.matrix.col_labels = m.col_labels;
    for (int comp = 0; comp < by.component_count(); ++comp)
        if (comp != by.ground_component)
            result.matrix.row_labels.push_back("c" + std::to_string(comp));

    for (int col = 0; col < m.cols; ++col) {
        auto [from, to] = column_endpoints(m, col, by.ground_node);
        int comp_from = by.component_of[from];
        int comp_to = by.component_of[to];
        if (comp_from == comp_to) {
            result.zero_columns.push_back(col);
            continue;
        }
        if (row_of_component[comp_from] >= 0)
            result.matrix.add_entry(row_of_component[comp_from], col, 1);
        if (row_of_component[comp_to] >= 0)
            result.matrix.add_entry(row_of_component[comp_to], col, -1);
    }
    result.matrix.finalize();
    return result;
}

SignMatrix identify_last_nodes(const SignMatrix& m, const ComponentPartition& by) {
    if (m.rows != by.node_count && m.rows != by.node_count - 1)
        dim_fail("identify_last_nodes: partition does not match matrix rows");

    // Surviving rows: all but the last node of each non-ground component, plus the
    // non-ground members of the ground component; component by component, ground last.
    std::vector<int> kept;
    for (int comp = 0; comp < by.component_count(); ++comp) {
        for (int node : by.component_nodes[comp]) {
            if (node >= m.rows) continue; // virtual ground has no row
            if (comp != by.ground_component && node == by.last_node(comp)) continue;
            kept.push_back(node);
        }
    }

    std::vector<int> row_map(m.rows, -1);
    SignMatrix out(static_cast<int>(kept.size()), m.cols);
    out.col_labels = m.col_labels;
    for (std::size_t i = 0; i < kept.size(); ++i) {
        row_map[kept[i]] = static_cast<int>(i);
        if (!m.row_labels.empty()) out.row_labels.push_back(m.row_labels[kept[i]]);
    }
    for (const auto& e : m.entries)
        if (row_map[e.row] >= 0) out.add_entry(row_map[e.row], e.col, e.value);
    out.finalize();
    return out;
}

std::optional<std::vector<PathStep>> find_path(const Circuit& circuit, int node_a, int node_b,
                                               const std::vector<ElementKind>& allowed_kinds) {
    if (node_a == node_b) dim_fail("find_path: endpoints must differ");
    auto allowed = [&](ElementKind kind) {
        return std::find(allowed_kinds.begin(), allowed_kinds.end(), kind) != allowed_kinds.end();
    };

    struct Hop {
        int peer;
        int branch;
        int sign; // +1 when traversing from->to
    };
    std::vector<std::vector<Hop>> adjacency(circuit.node_count());
    for (int b = 0; b < circuit.branch_count(); ++b) {
        const Element& element = circuit.branches[b];
        if (!allowed(element.kind)) continue;
        adjacency[element.from_node].push_back({element.to_node, b, 1});
        adjacency[element.to_node].push_back({element.from_node, b, -1});
    }

    std::vector<int> previous(circuit.node_count(), -1);
    std::vector<Hop> via(circuit.node_count(), {-1, -1, 0});
    std::queue<int> queue;
    queue.push(node_a);
    previous[node_a] = node_a;
    while (!queue.empty() && previous[node_b] < 0) {
        int node = queue.front();
        queue.pop();
        for (const auto& hop : adjacency[node]) {
            if (previous[hop.peer] >= 0) continue;
            previous[hop.peer] = node;
            via[hop.peer] = hop;
            queue.push(hop.peer);
        }
    }
    if (previous[node_b] < 0) return std::nullopt;

    // Unwind b -> a; traversal direction a -> b, so sum(sign * v) telescopes to
    // phi(a) - phi(b).
    std::vector<PathStep> path;
    for (int node = node_b; node != node_a; node = previous[node])
        path.push_back({via[node].branch, via[node].sign});
    std::reverse(path.begin(), path.end());
    return path;
}

// --- exact integer linear algebra (fraction-free Bareiss) ---

namespace {

long long checked_mul(long long a, long long b) {
    long long out;
    if (__builtin_mul_overflow(a, b, &out)) dim_fail("integer overflow in exact elimination");
    return out;
}

long long checked_sub(long long a, long long b) {
    long long out;
    if (__builtin_sub_overflow(a, b, &out)) dim_fail("integer overflow in exact elimination");
    return out;
}

} // namespace

int integer_rank(const Eigen::MatrixXi& m) {
    Eigen::Index rows = m.rows(), cols = m.cols();
    std::vector<std::vector<long long>> a(rows, std::vector<long long>(cols));
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) a[i][j] = m(i, j);

    long long previous_pivot = 1;
    int rank = 0;
    for (Eigen::Index col = 0; col < cols && rank < rows; ++col) {
        Eigen::Index pivot_row = -1;
        for (Eigen::Index r = rank; r < rows; ++r)
            if (a[r][col] != 0) {
                pivot_row = r;
                break;
            }
        if (pivot_row < 0) continue;
        std::swap(a[rank], a[pivot_row]);
        for (Eigen::Index r = rank + 1; r < rows; ++r) {
            for (Eigen::Index cc = col + 1; cc < cols; ++cc)
                a[r][cc] = checked_sub(checked_mul(a[rank][col], a[r][cc]),
                                       checked_mul(a[r][col], a[rank][cc])) /
                           previous_pivot;
            a[r][col] = 0;
        }
        previous_pivot = a[rank][col];
        ++rank;
    }
    return rank;
}

int integer_rank(const SignMatrix& m) { return integer_rank(m.to_dense_int()); }

long long integer_determinant(const Eigen::MatrixXi& m) {
    if (m.rows() != m.cols()) dim_fail("determinant of non-square matrix");
    Eigen::Index n = m.rows();
    if (n == 0) return 1;
    std::vector<std::vector<long long>> a(n, std::vector<long long>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) a[i][j] = m(i, j);

    long long previous_pivot = 1;
    int sign = 1;
    for (Eigen::Index k = 0; k < n - 1; ++k) {
        if (a[k][k] == 0) {
            Eigen::Index swap_row = -1;
            for (Eigen::Index r = k + 1; r < n; ++r)
                if (a[r][k] != 0) {
                    swap_row = r;
                    break;
                }
            if (swap_row < 0) return 0;
            std::swap(a[k], a[swap_row]);
            sign = -sign;
        }
        for (Eigen::Index i = k + 1; i < n; ++i)
            for (Eigen::Index j = k + 1; j < n; ++j)
                a[i][j] = checked_sub(checked_mul(a[k][k], a[i][j]), checked_mul(a[i][k], a[k][j])) /
                          previous_pivot;
        previous_pivot = a[k][k];
    }
    return sign * a[n - 1][n - 1];
}

// --- Matrix Market IO ---

void write_matrix_market(std::ostream& out, const SignMatrix& m) {
    out << "%%MatrixMarket matrix coordinate integer general\n";
    if (!m.row_labels.empty()) {
        out << "% rows:";
        for (const auto& label : m.row_labels) out << " " << label;
        out << "\n";
    }
    if (!m.col_labels.empty()) {
        out << "% cols:";
        for (const auto& label : m.col_labels) out << " " << label;
        out << "\n";
    }
    out << m.rows << " " << m.cols << " " << m.entries.size() << "\n";
    for (const auto& e : m.entries) out << e.row + 1 << " " << e.col + 1 << " " << e.value << "\n";
}

void write_matrix_market_file(const std::string& path, const SignMatrix& m) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    write_matrix_market(out, m);
}

SignMatrix read_matrix_market(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("%%MatrixMarket", 0) != 0)
        throw Error("not a Matrix Market stream");
    std::vector<std::string> row_labels, col_labels;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '%') {
            std::istringstream header(line.substr(1));
            std::string tag;
            header >> tag;
            if (tag == "rows:" || tag == "cols:") {
                std::string label;
                auto& target = tag == "rows:" ? row_labels : col_labels;
                while (header >> label) target.push_back(label);
            }
            continue;
        }
        break;
    }
    std::istringstream sizes(line);
    int rows = 0, cols = 0;
    long long nnz = 0;
    if (!(sizes >> rows >> cols >> nnz)) throw Error("bad Matrix Market size line");
    SignMatrix m(rows, cols);
    m.row_labels = std::move(row_labels);
    m.col_labels = std::move(col_labels);
    for (long long k = 0; k < nnz; ++k) {
        int r = 0, c = 0, v = 0;
        if (!(in >> r >> c >> v)) throw Error("truncated Matrix Market data");
        m.add_entry(r - 1, c - 1, v);
    }
    m.finalize();
    return m;
}

SignMatrix read_matrix_market_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    return read_matrix_market(in);
}

} // namespace mnadec
