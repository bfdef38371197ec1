#pragma once

#include "mnadec/artifacts.hpp"
#include "mnadec/basis.hpp"
#include "mnadec/decouple.hpp"
#include "mnadec/numeric.hpp"
#include "mnadec/verify.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace testutil {

using namespace mnadec;

inline std::string data_path(const std::string& name) {
    return std::string(MNADEC_DATA_DIR) + "/" + name;
}

inline Circuit load_netlist(const std::string& name) {
    std::ifstream in(data_path(name));
    if (!in) throw std::runtime_error("missing data file " + name);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_netlist(buffer.str(), name);
}

// --- independent graph oracles ---

/// BFS component count over an explicit edge list (independent of union-find).
inline int bfs_component_count(int nodes, const std::vector<std::pair<int, int>>& edges) {
    std::vector<std::vector<int>> adj(nodes);
    for (auto [a, b] : edges) {
        if (a == b) continue;
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    std::vector<bool> seen(nodes, false);
    int count = 0;
    for (int start = 0; start < nodes; ++start) {
        if (seen[start]) continue;
        ++count;
        std::vector<int> queue = {start};
        seen[start] = true;
        while (!queue.empty()) {
            int node = queue.back();
            queue.pop_back();
            for (int next : adj[node])
                if (!seen[next]) {
                    seen[next] = true;
                    queue.push_back(next);
                }
        }
    }
    return count;
}

/// Edge list of a sign matrix over its node universe (rows + virtual ground).
inline std::vector<std::pair<int, int>> edges_of(const SignMatrix& m, int ground) {
    std::vector<std::pair<int, int>> edges;
    for (int col = 0; col < m.cols; ++col) {
        int from = ground, to = ground;
        for (const auto& e : m.column(col)) (e.value > 0 ? from : to) = e.row;
        edges.push_back({from, to});
    }
    return edges;
}

/// Floating-point rank through column-pivoted QR, as a cross-check oracle for the
/// exact integer rank.
inline int double_rank(const Eigen::MatrixXi& m) {
    if (m.rows() == 0 || m.cols() == 0) return 0;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m.cast<double>());
    qr.setThreshold(1e-9);
    return static_cast<int>(qr.rank());
}

// --- random circuit generation (Proposition-1-compliant by construction) ---

struct RandomCircuitOptions {
    int max_nodes = 12;     // including ground
    int max_branches = 20;
    bool with_controlled = false;
};

inline double log_uniform(std::mt19937& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(std::log(lo), std::log(hi));
    return std::exp(dist(rng));
}

inline Circuit random_circuit(std::mt19937& rng, const RandomCircuitOptions& opt = {}) {
    std::uniform_int_distribution<int> node_count_dist(2, opt.max_nodes);
    int n = node_count_dist(rng);

    Circuit circuit;
    circuit.name = "random";
    for (int i = 0; i < n; ++i) circuit.nodes.push_back(std::to_string(i));

    int next_id = 0;
    auto fresh_id = [&](char prefix) {
        return std::string(1, prefix) + "x" + std::to_string(next_id++);
    };

    std::vector<int> vs_root(n);
    for (int i = 0; i < n; ++i) vs_root[i] = i;
    std::function<int(int)> vs_find = [&](int a) {
        while (vs_root[a] != a) a = vs_root[a] = vs_root[vs_root[a]];
        return a;
    };

    auto add_element = [&](ElementKind kind, int from, int to) -> Element& {
        Element element;
        element.kind = kind;
        element.from_node = from;
        element.to_node = to;
        switch (kind) {
            case ElementKind::Capacitor:
                element.id = fresh_id('C');
                element.behavior.model = LinearC{log_uniform(rng, 1e-3, 1.0)};
                break;
            case ElementKind::Inductor:
                element.id = fresh_id('L');
                element.behavior.model = LinearL{log_uniform(rng, 1e-3, 1.0)};
                break;
            case ElementKind::Resistor:
                element.id = fresh_id('R');
                element.behavior.model = LinearG{log_uniform(rng, 0.1, 10.0)};
                break;
            case ElementKind::VSourceIndependent:
                element.id = fresh_id('V');
                element.behavior.model = WaveformDC{log_uniform(rng, 0.5, 5.0)};
                break;
            case ElementKind::ISourceIndependent:
                element.id = fresh_id('I');
                element.behavior.model = WaveformDC{log_uniform(rng, 0.1, 1.0)};
                break;
            case ElementKind::VSourceControlled:
                element.id = fresh_id('V');
                element.behavior.model = PolynomialSource{{0.0, 2.0}};
                break;
            case ElementKind::ISourceControlled:
                element.id = fresh_id('I');
                element.behavior.model = PolynomialSource{{0.0, 0.5}};
                break;
        }
        circuit.branches.push_back(std::move(element));
        return circuit.branches.back();
    };

    // Spanning tree over C/L/R/Vs keeps [A_C, A_L, A_R, A_V] full row rank.
    const ElementKind tree_kinds[] = {ElementKind::Capacitor, ElementKind::Inductor,
                                      ElementKind::Resistor, ElementKind::VSourceIndependent};
    for (int node = 1; node < n; ++node) {
        std::uniform_int_distribution<int> peer_dist(0, node - 1);
        std::uniform_int_distribution<int> kind_dist(0, 3);
        ElementKind kind = tree_kinds[kind_dist(rng)];
        int peer = peer_dist(rng);
        if (kind == ElementKind::VSourceIndependent) vs_root[vs_find(node)] = vs_find(peer);
        add_element(kind, node, peer);
    }

    std::uniform_int_distribution<int> extra_dist(0, std::max(0, opt.max_branches - (n - 1)));
    int extras = extra_dist(rng);
    std::uniform_int_distribution<int> node_dist(0, n - 1);
    const ElementKind extra_kinds[] = {ElementKind::Capacitor, ElementKind::Inductor,
                                       ElementKind::Resistor, ElementKind::VSourceIndependent,
                                       ElementKind::ISourceIndependent};
    for (int k = 0; k < extras; ++k) {
        int a = node_dist(rng), b = node_dist(rng);
        if (a == b) continue;
        std::uniform_int_distribution<int> kind_dist(0, 4);
        ElementKind kind = extra_kinds[kind_dist(rng)];
        if (kind == ElementKind::VSourceIndependent) {
            if (vs_find(a) == vs_find(b)) kind = ElementKind::Resistor; // avoid V-loops
            else vs_root[vs_find(a)] = vs_find(b);
        }
        add_element(kind, a, b);
    }

    if (opt.with_controlled) {
        auto caps = circuit.branches_of_kind(ElementKind::Capacitor);
        auto inductors = circuit.branches_of_kind(ElementKind::Inductor);
        auto sources = circuit.branches_of_kind(ElementKind::VSourceIndependent);

        // A controlled current source across a C or Vs branch (type <= 2 by that path).
        std::vector<int> across = caps;
        across.insert(across.end(), sources.begin(), sources.end());
        if (!across.empty()) {
            std::uniform_int_distribution<std::size_t> pick(0, across.size() - 1);
            const Element host = circuit.branches[across[pick(rng)]];
            Element& ic = add_element(ElementKind::ISourceControlled, host.from_node, host.to_node);
            ControlRef ref;
            ref.kind = ControlRef::Kind::BranchVoltage;
            ref.element_id = host.id;
            ref.gain = 0.25;
            ic.controls.push_back(ref);
            if (!inductors.empty()) {
                ControlRef current;
                current.kind = ControlRef::Kind::InductorCurrent;
                current.element_id = circuit.branches[inductors[0]].id;
                current.gain = 0.1;
                ic.controls.push_back(current);
            }
        }

        // A controlled voltage source feeding a fresh node through a resistor: never
        // part of a C-V loop, controlled by a capacitor voltage when one exists.
        if (!caps.empty()) {
            int new_node = circuit.node_count();
            circuit.nodes.push_back(std::to_string(new_node));
            Element& vc = add_element(ElementKind::VSourceControlled, new_node, node_dist(rng));
            ControlRef ref;
            ref.kind = ControlRef::Kind::BranchVoltage;
            ref.element_id = circuit.branches[caps[0]].id;
            ref.gain = 1.5;
            vc.controls.push_back(ref);
            add_element(ElementKind::Resistor, new_node, 0);
        }
    }
    return circuit;
}

// --- dense implicit-Euler reference on the raw MNA system ---

struct DenseReferenceState {
    OriginalState state;
};

/// One implicit-Euler step on the original MNA equations: Newton on the stacked
/// residual with backward-difference storage terms and a finite-difference Jacobian.
/// Completely bypasses the decoupling machinery.
inline OriginalState dense_implicit_euler_step(const Circuit& circuit,
                                               const OriginalState& previous, double h,
                                               double t_next, double tol = 1e-12,
                                               int max_iter = 60) {
    int n_phi = static_cast<int>(previous.phi.size());
    int n_l = static_cast<int>(previous.i_l.size());
    int n_vs = static_cast<int>(previous.i_vs.size());
    int n_vc = static_cast<int>(previous.i_vc.size());
    int dim = n_phi + n_l + n_vs + n_vc;

    auto caps = circuit.branches_of_kind(ElementKind::Capacitor);
    auto unpack = [&](const Vector& u) {
        OriginalState s;
        s.phi = u.head(n_phi);
        s.i_l = u.segment(n_phi, n_l);
        s.i_vs = u.segment(n_phi + n_l, n_vs);
        s.i_vc = u.tail(n_vc);
        return s;
    };
    auto cap_charge = [&](const Vector& phi) {
        Vector q(static_cast<int>(caps.size()));
        for (std::size_t i = 0; i < caps.size(); ++i) {
            const Element& element = circuit.branches[caps[i]];
            double v = (element.from_node ? phi[element.from_node - 1] : 0.0) -
                       (element.to_node ? phi[element.to_node - 1] : 0.0);
            q[static_cast<Eigen::Index>(i)] =
                std::get<LinearC>(element.behavior.model).capacitance * v;
        }
        return q;
    };
    auto inductor_flux = [&](const Vector& i_l) {
        auto inductors = circuit.branches_of_kind(ElementKind::Inductor);
        Vector flux = Vector::Zero(n_l);
        for (int i = 0; i < n_l; ++i)
            flux[i] = std::get<LinearL>(circuit.branches[inductors[i]].behavior.model).inductance *
                      i_l[i];
        for (const auto& coupling : circuit.couplings) {
            // Mutual terms; indices in kind-local order.
            auto local = [&](const std::string& id) {
                auto list = circuit.branches_of_kind(ElementKind::Inductor);
                for (std::size_t j = 0; j < list.size(); ++j)
                    if (circuit.branches[list[j]].id == id) return static_cast<int>(j);
                return -1;
            };
            int i = local(coupling.inductor_a), j = local(coupling.inductor_b);
            double li = std::get<LinearL>(circuit.branches[circuit.find_element(coupling.inductor_a)]
                                              .behavior.model)
                            .inductance;
            double lj = std::get<LinearL>(circuit.branches[circuit.find_element(coupling.inductor_b)]
                                              .behavior.model)
                            .inductance;
            double m = coupling.coefficient * std::sqrt(li * lj);
            flux[i] += m * i_l[j];
            flux[j] += m * i_l[i];
        }
        return flux;
    };

    Vector q_prev = cap_charge(previous.phi);
    Vector flux_prev = inductor_flux(previous.i_l);

    auto residual = [&](const Vector& u) {
        OriginalState s = unpack(u);
        StorageDerivatives sd;
        sd.dq_c = (cap_charge(s.phi) - q_prev) / h;
        sd.dphi_l = (inductor_flux(s.i_l) - flux_prev) / h;
        return mna_residual(circuit, s, sd, t_next);
    };

    Vector u(dim);
    u << previous.phi, previous.i_l, previous.i_vs, previous.i_vc;
    Vector r = residual(u);
    for (int iter = 0; iter < max_iter && r.lpNorm<Eigen::Infinity>() > tol; ++iter) {
        Matrix jac(dim, dim);
        double eps = 1e-7;
        for (int j = 0; j < dim; ++j) {
            Vector up = u, dn = u;
            up[j] += eps;
            dn[j] -= eps;
            jac.col(j) = (residual(up) - residual(dn)) / (2 * eps);
        }
        u += jac.fullPivLu().solve(-r);
        r = residual(u);
    }
    return unpack(u);
}

/// Central finite-difference Jacobian of a vector function.
template <typename Fn>
Matrix fd_jacobian(Fn fn, const Vector& at, double eps) {
    Vector base = fn(at);
    Matrix jac(base.size(), at.size());
    for (Eigen::Index j = 0; j < at.size(); ++j) {
        Vector up = at, dn = at;
        up[j] += eps;
        dn[j] -= eps;
        jac.col(j) = (fn(up) - fn(dn)) / (2 * eps);
    }
    return jac;
}

// --- exact chain invariants (kernels, rank completeness, sign entries) ---

/// Verify every stage of a split chain with exact integer arithmetic. Returns an
/// empty string on success, a description of the first failure otherwise.
inline std::string check_chain_invariants(const Circuit& circuit, const SplitChain& chain) {
    using Eigen::MatrixXi;
    int n = circuit.node_count() - 1;
    MatrixXi q_chain = MatrixXi::Identity(n, n);

    const std::pair<const StageBasis*, ElementKind> stages[] = {
        {&chain.vs, ElementKind::VSourceIndependent},
        {&chain.c, ElementKind::Capacitor},
        {&chain.vc, ElementKind::VSourceControlled},
        {&chain.r, ElementKind::Resistor},
    };
    int p_total = 0;
    for (const auto& [stage, kind] : stages) {
        MatrixXi a_kind = incidence_reduced(circuit, {kind}).to_dense_int();
        MatrixXi source = a_kind.transpose() * q_chain; // b_kind x m
        MatrixXi q = stage->q.to_dense_int();
        MatrixXi p = stage->p.to_dense_int();

        if (q.rows() != source.cols()) return stage->stage + ": Q row mismatch";
        if ((source * q).isZero() == false) return stage->stage + ": source^T Q != 0";
        // im Q must have the full kernel dimension.
        int nullity = source.cols() - integer_rank(source);
        if (q.cols() != nullity) return stage->stage + ": Q does not span the kernel";
        // [P Q] is a basis.
        MatrixXi basis(q.rows(), p.cols() + q.cols());
        basis << p, q;
        if (basis.rows() != basis.cols()) return stage->stage + ": [P Q] not square";
        if (basis.rows() > 0 && integer_determinant(basis) == 0)
            return stage->stage + ": [P Q] singular";
        // Appendix item 1: source * P has full column rank.
        if (integer_rank(MatrixXi(source * p)) != p.cols())
            return stage->stage + ": source P rank deficient";
        p_total += p.cols();
        q_chain = q_chain * q;
    }

    // Final stage: A' W = 0 and [V W] a basis of the branch space.
    MatrixXi a_l = incidence_reduced(circuit, {ElementKind::Inductor}).to_dense_int();
    MatrixXi contracted = q_chain.transpose() * a_l;
    MatrixXi v = chain.l.v.to_dense_int();
    MatrixXi w = chain.l.w.to_dense_int();
    if (!(contracted * w).isZero()) return "L: A' W != 0";
    int nullity = contracted.cols() - integer_rank(contracted);
    if (w.cols() != nullity) return "L: W does not span the kernel";
    MatrixXi vw(v.rows(), v.cols() + w.cols());
    vw << v, w;
    if (vw.rows() != vw.cols()) return "L: [V W] not square";
    if (vw.rows() > 0 && integer_determinant(vw) == 0) return "L: [V W] singular";
    // Appendix item 3: the cascaded product keeps full row rank.
    if (integer_rank(contracted) != contracted.rows()) return "L: cascade lost row rank";

    // Composed products match and the column counts telescope.
    if (chain.q_vs_c_vc_r.to_dense_int() != q_chain) return "chain product mismatch";
    if (chain.q_vs_c.to_dense_int() !=
        MatrixXi(chain.vs.q.to_dense_int() * chain.c.q.to_dense_int()))
        return "Q_VsC mismatch";
    if (chain.q_vs_c_vc_r.cols != n - p_total) return "column counts do not telescope";
    return {};
}

// --- appendix-lemma trials (exact arithmetic, independent of the chain) ---

inline bool lemma_basis_products_trial(std::mt19937& rng, std::string& error) {
    Circuit circuit = random_circuit(rng);
    std::vector<ElementKind> kinds;
    for (ElementKind kind : kAllKinds)
        if (rng() % 2) kinds.push_back(kind);
    int n = circuit.node_count();
    SignMatrix a = incidence_reduced(circuit, kinds);
    ComponentPartition partition = connected_components(a, n, n - 1);
    QpPair qp = q_and_p_from_components(partition);
    Eigen::MatrixXi at = a.to_dense_int().transpose();
    Eigen::MatrixXi ap = at * qp.p.to_dense_int();
    if (integer_rank(ap) != static_cast<int>(ap.cols())) {
        error = "A^T P lost column rank";
        return false;
    }
    if (integer_rank(at) == at.rows()) { // A^T has full row rank
        if (ap.rows() != ap.cols() || integer_determinant(ap) == 0) {
            error = "A^T P not regular despite full row rank";
            return false;
        }
    }
    // Item 2 on the full circuit graph (always connected): A V is regular.
    SignMatrix full = incidence_reduced(circuit, {kAllKinds.begin(), kAllKinds.end()});
    SpanningForest forest = spanning_forest(full, n, n - 1);
    VwPair vw = vw_from_forest(forest, full.cols);
    Eigen::MatrixXi av = full.to_dense_int() * vw.v.to_dense_int();
    if (av.rows() != av.cols() || integer_determinant(av) == 0) {
        error = "A V not regular";
        return false;
    }
    return true;
}

inline bool lemma_cascade_rank_trial(std::mt19937& rng, std::string& error) {
    Circuit circuit = random_circuit(rng);
    SplitChain chain = build_split_chain(circuit);
    Eigen::MatrixXi a_l =
        incidence_reduced(circuit, {ElementKind::Inductor}).to_dense_int();
    Eigen::MatrixXi product = chain.q_vs_c_vc_r.to_dense_int().transpose() * a_l;
    if (integer_rank(product) != product.rows()) {
        error = "Q^T_{Vs C Vc R} A_L lost row rank";
        return false;
    }
    return true;
}

inline bool lemma_spd_congruence_trial(std::mt19937& rng, std::string& error) {
    std::uniform_int_distribution<int> size_dist(1, 6);
    int n = size_dist(rng);
    int m = size_dist(rng);
    if (m > n) std::swap(m, n); // B must be tall for full column rank
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix seed(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) seed(i, j) = gauss(rng);
    Matrix spd = seed.transpose() * seed + 0.1 * Matrix::Identity(n, n);
    Matrix b(n, m);
    do {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) b(i, j) = gauss(rng);
    } while (b.fullPivLu().rank() < m);
    Matrix congruent = b.transpose() * spd * b;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (congruent + congruent.transpose()));
    if (eig.eigenvalues().minCoeff() <= 0.0) {
        error = "B^T A B not positive definite";
        return false;
    }
    return true;
}

inline bool lemma_block_triangular_trial(std::mt19937& rng, std::string& error) {
    std::uniform_int_distribution<int> count_dist(2, 4);
    std::uniform_int_distribution<int> size_dist(1, 3);
    std::uniform_int_distribution<int> fill_dist(-2, 2);
    int blocks = count_dist(rng);
    std::vector<int> sizes(blocks);
    int total = 0;
    for (int& s : sizes) total += (s = size_dist(rng));
    Eigen::MatrixXi m = Eigen::MatrixXi::Zero(total, total);
    int offset = 0;
    for (int s : sizes) {
        // Regular diagonal block: lower triangular with unit diagonal, then a row flip.
        Eigen::MatrixXi block = Eigen::MatrixXi::Identity(s, s);
        for (int i = 0; i < s; ++i)
            for (int j = 0; j < i; ++j) block(i, j) = fill_dist(rng);
        m.block(offset, offset, s, s) = block;
        offset += s;
    }
    // Arbitrary strictly-lower bullets.
    offset = 0;
    for (int bi = 0; bi < blocks; ++bi) {
        int row0 = offset;
        offset += sizes[bi];
        int col = 0;
        for (int bj = 0; bj < bi; ++bj) {
            for (int r = 0; r < sizes[bi]; ++r)
                for (int c = 0; c < sizes[bj]; ++c) m(row0 + r, col + c) = fill_dist(rng);
            col += sizes[bj];
        }
    }
    if (integer_determinant(m) == 0) {
        error = "block lower triangular matrix with regular blocks came out singular";
        return false;
    }
    return true;
}

/// Proposition-2 orthogonality: for every accepted controlled current source of type k,
/// the k-stage chain product annihilates its incidence column exactly.
inline std::string check_prop2_orthogonality(const Circuit& circuit,
                                              const VerificationReport& report,
                                              const SplitChain& chain) {
    SignMatrix a_ic = incidence_reduced(circuit, {ElementKind::ISourceControlled});
    Eigen::MatrixXi a = a_ic.to_dense_int();
    Eigen::MatrixXi q_of_type[4] = {
        chain.vs.q.to_dense_int(), chain.q_vs_c.to_dense_int(),
        chain.q_vs_c_vc.to_dense_int(), chain.q_vs_c_vc_r.to_dense_int()};
    for (int col = 0; col < a_ic.cols; ++col) {
        const std::string& id = a_ic.col_labels[col];
        auto it = report.ic_type_of.find(id);
        if (it == report.ic_type_of.end()) return id + ": missing type assignment";
        const Eigen::MatrixXi& q = q_of_type[it->second - 1];
        if (!(q.transpose() * a.col(col)).isZero())
            return id + ": Q^T column product is nonzero for type " +
                   std::to_string(it->second);
    }
    return {};
}

/// Hand-built circuits violating one controlled-source assumption each, with the
/// violation code the checker must emit. Five families, four variants apiece.
struct ViolatingCase {
    std::string name;
    std::string netlist;
    std::string code;
};

inline std::vector<ViolatingCase> violating_circuits() {
    return {
        // CS1: controlled voltage source inside a C-V loop.
        {"cs1-parallel-cap", "C1 1 0 1e-6\nVC1 1 0 POLY(0,1) CTRL V(C1)\nR1 1 0 10\n", "CS1"},
        {"cs1-v-c-loop",
         "V1 1 2 DC 1\nC1 2 0 1e-6\nVC1 1 0 POLY(0,2) CTRL V(C1)\nR1 1 0 10\n", "CS1"},
        {"cs1-two-vc-cycle",
         "C1 1 0 1e-6\nVC1 1 2 POLY(0,1) CTRL V(C1)\nVC2 2 0 POLY(0,1) CTRL V(C1)\nR1 2 0 10\n",
         "CS1"},
        {"cs1-two-cap-loop",
         "C1 1 2 1e-6\nC2 2 0 1e-6\nVC1 1 0 POLY(0,1) CTRL V(C2)\nR1 1 0 10\n", "CS1"},
        // CS2: controls demand arbitrary branch voltages but no Vs-only terminal path.
        {"cs2-li-island",
         "V1 1 0 DC 1\nR1 1 2 1\nL1 2 0 1e-3\nLX 2 4 1e-3\nIX 4 0 DC 1e-3\n"
         "IC1 2 0 POLY(0,1) CTRL V(4,0)\n",
         "CS2"},
        {"cs2-cap-terminals",
         "V1 1 0 DC 1\nC1 1 2 1e-6\nR1 2 0 1\nLX 2 4 1e-3\nIX 4 0 DC 1e-3\n"
         "IC1 1 2 POLY(0,1) CTRL V(4,0)\n",
         "CS2"},
        {"cs2-deep-island",
         "V1 1 0 DC 1\nR1 1 2 1\nLX 2 4 1e-3\nLY 4 5 1e-3\nIX 5 0 DC 1e-3\n"
         "IC1 2 0 POLY(0,0.5) CTRL V(5,0)\n",
         "CS2"},
        {"cs2-island-pair",
         "V1 1 0 DC 1\nR1 1 2 1\nLX 2 4 1e-3\nLY 2 5 1e-3\nIX 4 5 DC 1e-3\n"
         "IC1 2 0 POLY(0,1) CTRL V(4,5)\n",
         "CS2"},
        // CS4: controls need A^T_CRV phi (type <= 3) but only a C-R-V terminal path exists.
        {"cs4-inductor-voltage",
         "V1 1 0 DC 1\nR1 1 2 1\nL1 2 0 1e-3\nIC1 2 0 POLY(0,1) CTRL V(L1)\n", "CS4"},
        {"cs4-resistor-voltage",
         "V1 1 0 DC 1\nR1 1 2 2\nR2 2 0 2\nIC1 2 0 POLY(0,0.2) CTRL V(R1)\n", "CS4"},
        {"cs4-node-pair",
         "V1 1 0 DC 1\nR1 1 2 1\nR3 2 3 1\nR2 3 0 1\nIC1 3 0 POLY(0,1) CTRL V(2,3)\n", "CS4"},
        {"cs4-mixed-path",
         "V1 1 0 DC 1\nC1 1 2 1e-6\nR1 2 3 1\nR2 3 0 1\nIC1 3 0 POLY(0,1) CTRL V(1,3)\n",
         "CS4"},
        // CS5: the source itself sits in an L-I cutset.
        {"cs5-behind-inductor",
         "V1 1 0 DC 1\nR1 1 2 1\nL1 2 3 1e-3\nIC1 3 0 POLY(0,1) CTRL V(R1)\n", "CS5"},
        {"cs5-inductor-chain",
         "V1 1 0 DC 1\nL1 1 2 1e-3\nL2 2 3 1e-3\nIC1 3 0 POLY(0,1) CTRL V(V1)\nR1 1 0 1\n",
         "CS5"},
        {"cs5-between-inductors",
         "V1 1 0 DC 1\nR1 1 2 1\nL1 2 3 1e-3\nL2 2 4 1e-3\nIC1 3 4 POLY(0,1) CTRL V(R1)\n",
         "CS5"},
        {"cs5-cap-island",
         "V1 1 0 DC 1\nR1 1 2 1\nL1 2 3 1e-3\nC1 3 4 1e-6\nIC1 4 0 POLY(0,1) CTRL V(R1)\n",
         "CS5"},
        // IC_IVC_DEP: i_Vc dependency on a source whose smallest eligible type is >= 3.
        {"ivc-type3",
         "V1 1 0 DC 1\nC1 1 2 1e-6\nVC1 2 3 POLY(0,1) CTRL V(C1)\nR2 3 0 1\nR3 1 3 1\n"
         "IC1 1 3 POLY(0,1) CTRL I(VC1)\n",
         "IC_IVC_DEP"},
        {"ivc-type3-long",
         "V1 1 0 DC 1\nC1 1 2 1e-6\nC2 2 3 1e-6\nVC1 3 4 POLY(0,1) CTRL V(C1)\nR2 4 0 1\n"
         "R3 1 4 1\nIC1 1 4 POLY(0,1) CTRL I(VC1) V(C2)\n",
         "IC_IVC_DEP"},
        {"ivc-type4",
         "V1 1 0 DC 1\nC1 1 2 1e-6\nVC1 2 3 POLY(0,1) CTRL V(C1)\nR2 3 0 1\nR4 3 5 1\n"
         "IC1 1 5 POLY(0,1) CTRL I(VC1)\n",
         "IC_IVC_DEP"},
        {"ivc-through-sources",
         "V1 1 0 DC 1\nR1 1 2 1\nC1 2 0 1e-6\nVC1 3 0 POLY(0,1) CTRL V(C1)\nR2 3 2 1\n"
         "IC1 3 1 POLY(0,0.3) CTRL I(VC1)\n",
         "IC_IVC_DEP"},
    };
}

struct BuiltSystem {
    Circuit circuit;
    VerificationReport report;
    SplitChain chain;
    DecoupledSystem system;
};

// --- index-1 structure checks (finite differences against the decoupled blocks) ---

struct Index1Report {
    double max_upper_relative = 0.0; ///< largest strict-upper block entry of dg/dy, relative
    double max_condition = 0.0;      ///< worst diagonal-block condition number
    double min_leading_eig = std::numeric_limits<double>::infinity();
    double max_jacobian_error = 0.0; ///< analytic vs finite-difference, relative
    std::string error;
};

inline Index1Report index1_structure_check(const BuiltSystem& built, std::mt19937& rng,
                                           int points, double fd_epsilon = 1e-7) {
    Index1Report report;
    const DecoupledSystem& system = built.system;
    const VariablePartition& p = system.partition();
    SolverConfig config;

    // Leading differential matrices are symmetric positive definite.
    for (const Matrix* m : {&system.leading_c(), &system.leading_l()}) {
        if (m->rows() == 0) continue;
        Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (*m + m->transpose()));
        report.min_leading_eig = std::min(report.min_leading_eig, eig.eigenvalues().minCoeff());
    }

    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    const int block_sizes[5] = {p.n_phi_vs, p.n_i_tree, p.n_phi_vc, p.n_phi_r, p.n_i_vc};

    for (int point = 0; point < points; ++point) {
        Vector x(p.dim_x());
        for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = dist(rng);
        double t = 0.25 * std::abs(dist(rng));
        Vector y;
        try {
            y = solve_algebraic(system, x, t, config);
        } catch (const Error& e) {
            report.error = std::string("solve_algebraic failed: ") + e.what();
            return report;
        }

        auto g_of_y = [&](const Vector& yy) { return system.eval_g(x, yy, t); };
        Matrix fd = fd_jacobian(g_of_y, y, fd_epsilon);
        double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());

        // Strict upper blocks must vanish.
        int row0 = 0;
        for (int bi = 0; bi < 5; ++bi) {
            int col0 = 0;
            for (int bj = 0; bj < 5; ++bj) {
                if (bj > bi && block_sizes[bi] > 0 && block_sizes[bj] > 0) {
                    double magnitude =
                        fd.block(row0, col0, block_sizes[bi], block_sizes[bj]).cwiseAbs().maxCoeff();
                    report.max_upper_relative =
                        std::max(report.max_upper_relative, magnitude / scale);
                }
                col0 += block_sizes[bj];
            }
            row0 += block_sizes[bi];
        }

        // Diagonal blocks stay well conditioned.
        Matrix dg_dx, dg_dy;
        system.g_jacobian(x, y, t, dg_dx, dg_dy);
        row0 = 0;
        for (int bi = 0; bi < 5; ++bi) {
            if (block_sizes[bi] > 0) {
                Matrix diag = dg_dy.block(row0, row0, block_sizes[bi], block_sizes[bi]);
                Eigen::JacobiSVD<Matrix> svd(diag);
                double smin = svd.singularValues().minCoeff();
                double smax = svd.singularValues().maxCoeff();
                report.max_condition =
                    std::max(report.max_condition, smin > 0 ? smax / smin
                                                            : std::numeric_limits<double>::infinity());
            }
            row0 += block_sizes[bi];
        }

        // Analytic Jacobians agree with central differences.
        auto g_of_x = [&](const Vector& xx) { return system.eval_g(xx, y, t); };
        Matrix fd_x = fd_jacobian(g_of_x, x, fd_epsilon);
        double err = 0.0;
        if (fd.size() > 0) err = (dg_dy - fd).cwiseAbs().maxCoeff() / scale;
        if (fd_x.size() > 0)
            err = std::max(err, (dg_dx - fd_x).cwiseAbs().maxCoeff() / scale);
        report.max_jacobian_error = std::max(report.max_jacobian_error, err);
    }
    return report;
}

// --- hand-coded Example-1 equations (buck converter) for the golden residual check ---

struct BuckDevices {
    double c = 1e-4, l = 1e-3, g_load = 1.0;
    double g_on = 10.0, g_off = 1e-6, v0 = 0.5, k = 20.0;
    double i_sat = 1e-12, v_t = 0.025852;
    double vs = 5.0;

    double g_switch(double s) const {
        return g_off + (g_on - g_off) / (1.0 + std::exp(-k * (s - v0)));
    }
    double diode_current(double v) const { return i_sat * std::expm1(v / v_t); }
};

/// Largest deviation between the assembled buck system and the four displayed
/// equations of the worked example, over `trials` random states.
inline double buck_equation_mismatch(const BuiltSystem& built, std::mt19937& rng, int trials) {
    const DecoupledSystem& system = built.system;
    BuckDevices dev;
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    double worst = 0.0;

    for (int trial = 0; trial < trials; ++trial) {
        double phi1 = dist(rng), phi2 = dist(rng), phi3 = dist(rng);
        double i_l = dist(rng), dphi3 = dist(rng), di_l = dist(rng);
        double t = std::abs(dist(rng));

        Vector x(2), y(2), xdot(2);
        x << phi3, i_l;       // [phi~_C; i-_L]
        y << phi1, phi2;      // [phi~_Vs; phi~_R]
        xdot << dphi3, di_l;

        // Differential part: C phi3' + G phi3 - i_L = 0 and L i_L' - (phi2 - phi3) = 0.
        Vector dd = system.eval_diff(x, y, xdot, t);
        worst = std::max(worst, std::abs(dd[0] - (dev.c * dphi3 + dev.g_load * phi3 - i_l)));
        worst = std::max(worst, std::abs(dd[1] - (dev.l * di_l - (phi2 - phi3))));

        // Algebraic part: phi1 - v_s(t) = 0 and
        // -g_S(phi3)(phi1 - phi2) - g_D(-phi2)(-phi2) + i_L = 0.
        Vector g = system.eval_g(x, y, t);
        worst = std::max(worst, std::abs(g[0] - (phi1 - dev.vs)));
        double g4 = -dev.g_switch(phi3) * (phi1 - phi2) - dev.diode_current(-phi2) + i_l;
        worst = std::max(worst, std::abs(g[1] - g4));

        // Output: g_S(phi3)(phi1 - phi2) + i_Vs = 0.
        Vector z = system.solve_output(x, y, xdot, t);
        worst = std::max(worst, std::abs(z[0] + dev.g_switch(phi3) * (phi1 - phi2)));
    }
    return worst;
}

inline BuiltSystem build_system(const Circuit& circuit) {
    VerificationReport report = verify_circuit(circuit);
    SplitChain chain = build_split_chain(circuit);
    DecoupledSystem system = DecoupledSystem::assemble(circuit, chain, report);
    return BuiltSystem{circuit, std::move(report), std::move(chain), std::move(system)};
}

inline BuiltSystem build_system_from_file(const std::string& name) {
    return build_system(load_netlist(name));
}

} // namespace testutil
