#include "mnadec/decouple.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace mnadec {

namespace {

using EK = ElementKind;

double phi_of(const Vector& phi, int node) { return node == 0 ? 0.0 : phi[node - 1]; }

/// Kind-local index tables (file order within a kind, matching incidence columns).
std::map<std::string, int> kind_local_index(const Circuit& circuit, EK kind) {
    std::map<std::string, int> out;
    int next = 0;
    for (const auto& element : circuit.branches)
        if (element.kind == kind) out[element.id] = next++;
    return out;
}

Matrix dense(const Sparse& m) { return Matrix(m); }

} // namespace

StorageDerivatives StorageDerivatives::zeros(int n_c, int n_l) {
    StorageDerivatives out;
    out.dq_c = Vector::Zero(n_c);
    out.dphi_l = Vector::Zero(n_l);
    return out;
}

// ---------------------------------------------------------------------------
// Raw MNA residual: an element-by-element stamping pass over the circuit, kept
// independent of the assembled DecoupledSystem so it can serve as the
// round-trip oracle.
// ---------------------------------------------------------------------------

Vector mna_residual(const Circuit& circuit, const OriginalState& state,
                    const StorageDerivatives& derivatives, double t) {
    int n_phi = circuit.node_count() - 1;
    auto l_index = kind_local_index(circuit, EK::Inductor);
    auto vs_index = kind_local_index(circuit, EK::VSourceIndependent);
    auto vc_index = kind_local_index(circuit, EK::VSourceControlled);
    int n_l = static_cast<int>(l_index.size());
    int n_vs = static_cast<int>(vs_index.size());
    int n_vc = static_cast<int>(vc_index.size());

    if (state.phi.size() != n_phi || state.i_l.size() != n_l || state.i_vs.size() != n_vs ||
        state.i_vc.size() != n_vc)
        throw DimensionMismatch("mna_residual: state dimensions do not match the circuit");

    auto control_of = [&](const Element& element) {
        double s = 0.0;
        for (const auto& ref : element.controls) {
            double u = 0.0;
            switch (ref.kind) {
                case ControlRef::Kind::NodePairVoltage:
                    u = phi_of(state.phi, ref.node_a) - phi_of(state.phi, ref.node_b);
                    break;
                case ControlRef::Kind::BranchVoltage: {
                    const Element& target =
                        circuit.branches[circuit.find_element(ref.element_id)];
                    u = phi_of(state.phi, target.from_node) - phi_of(state.phi, target.to_node);
                    break;
                }
                case ControlRef::Kind::InductorCurrent:
                    u = state.i_l[l_index.at(ref.element_id)];
                    break;
                case ControlRef::Kind::ControlledVSourceCurrent:
                    u = state.i_vc[vc_index.at(ref.element_id)];
                    break;
            }
            s += ref.gain * u;
        }
        return s;
    };

    Vector kcl = Vector::Zero(n_phi);
    Vector row_l = Vector::Zero(n_l);
    Vector row_vs = Vector::Zero(n_vs);
    Vector row_vc = Vector::Zero(n_vc);

    auto stamp = [&](const Element& element, double current) {
        if (element.from_node != 0) kcl[element.from_node - 1] += current;
        if (element.to_node != 0) kcl[element.to_node - 1] -= current;
    };

    int c_local = 0;
    for (const auto& element : circuit.branches) {
        double v = phi_of(state.phi, element.from_node) - phi_of(state.phi, element.to_node);
        switch (element.kind) {
            case EK::Capacitor:
                stamp(element, derivatives.dq_c[c_local++]);
                break;
            case EK::Inductor: {
                int j = l_index.at(element.id);
                stamp(element, state.i_l[j]);
                row_l[j] = derivatives.dphi_l[j] - v;
                break;
            }
            case EK::Resistor: {
                bool has_control = !element.controls.empty();
                double s = has_control ? control_of(element) : v;
                stamp(element, element.behavior.resistor_current(v, s, has_control));
                break;
            }
            case EK::VSourceIndependent: {
                int j = vs_index.at(element.id);
                stamp(element, state.i_vs[j]);
                row_vs[j] = v - element.behavior.waveform_value(t);
                break;
            }
            case EK::VSourceControlled: {
                int j = vc_index.at(element.id);
                stamp(element, state.i_vc[j]);
                row_vc[j] = v - element.behavior.source_value(control_of(element));
                break;
            }
            case EK::ISourceIndependent:
                stamp(element, element.behavior.waveform_value(t));
                break;
            case EK::ISourceControlled:
                stamp(element, element.behavior.source_value(control_of(element)));
                break;
        }
    }

    Vector residual(n_phi + n_l + n_vs + n_vc);
    residual << kcl, row_l, row_vs, row_vc;
    return residual;
}

// ---------------------------------------------------------------------------
// DecoupledSystem
// ---------------------------------------------------------------------------

void DecoupledSystem::build_wiring(const Circuit& circuit) {
    auto l_index = kind_local_index(circuit, EK::Inductor);
    auto vc_index = kind_local_index(circuit, EK::VSourceControlled);

    auto make_slot = [&](int branch) {
        const Element& element = circuit.branches[branch];
        DeviceSlot slot;
        slot.circuit_branch = branch;
        slot.has_control = !element.controls.empty();
        for (const auto& ref : element.controls) {
            ControlTermRef term;
            term.gain = ref.gain;
            switch (ref.kind) {
                case ControlRef::Kind::NodePairVoltage:
                    term.source = ControlTermRef::Source::PhiDiff;
                    term.a = ref.node_a;
                    term.b = ref.node_b;
                    break;
                case ControlRef::Kind::BranchVoltage: {
                    const Element& target =
                        circuit.branches[circuit.find_element(ref.element_id)];
                    term.source = ControlTermRef::Source::PhiDiff;
                    term.a = target.from_node;
                    term.b = target.to_node;
                    break;
                }
                case ControlRef::Kind::InductorCurrent:
                    term.source = ControlTermRef::Source::InductorCurrent;
                    term.a = l_index.at(ref.element_id);
                    break;
                case ControlRef::Kind::ControlledVSourceCurrent:
                    term.source = ControlTermRef::Source::VcCurrent;
                    term.a = vc_index.at(ref.element_id);
                    break;
            }
            slot.control.push_back(term);
        }
        return slot;
    };

    for (int branch : kind_sorted_incidence_order(circuit)) {
        switch (circuit.branches[branch].kind) {
            case EK::Capacitor: caps_.push_back(make_slot(branch)); break;
            case EK::Inductor: inductors_.push_back(make_slot(branch)); break;
            case EK::Resistor: resistors_.push_back(make_slot(branch)); break;
            case EK::VSourceIndependent: vs_.push_back(make_slot(branch)); break;
            case EK::VSourceControlled: vc_.push_back(make_slot(branch)); break;
            case EK::ISourceIndependent: is_.push_back(make_slot(branch)); break;
            case EK::ISourceControlled: ic_.push_back(make_slot(branch)); break;
        }
    }
}

double DecoupledSystem::control_value(const DeviceSlot& slot, const Vector& phi,
                                      const Vector& i_l, const Vector& i_vc) const {
    double s = 0.0;
    for (const auto& term : slot.control) {
        switch (term.source) {
            case ControlTermRef::Source::PhiDiff:
            case ControlTermRef::Source::BranchVoltage:
                s += term.gain * (phi_of(phi, term.a) - phi_of(phi, term.b));
                break;
            case ControlTermRef::Source::InductorCurrent:
                s += term.gain * i_l[term.a];
                break;
            case ControlTermRef::Source::VcCurrent:
                s += term.gain * i_vc[term.a];
                break;
        }
    }
    return s;
}

void DecoupledSystem::control_gradient(const DeviceSlot& slot, Eigen::RowVectorXd& dphi,
                                       Eigen::RowVectorXd& dil, Eigen::RowVectorXd& divc) const {
    dphi.setZero(circuit_.node_count() - 1);
    dil.setZero(static_cast<int>(inductors_.size()));
    divc.setZero(static_cast<int>(vc_.size()));
    for (const auto& term : slot.control) {
        switch (term.source) {
            case ControlTermRef::Source::PhiDiff:
            case ControlTermRef::Source::BranchVoltage:
                if (term.a != 0) dphi[term.a - 1] += term.gain;
                if (term.b != 0) dphi[term.b - 1] -= term.gain;
                break;
            case ControlTermRef::Source::InductorCurrent:
                dil[term.a] += term.gain;
                break;
            case ControlTermRef::Source::VcCurrent:
                divc[term.a] += term.gain;
                break;
        }
    }
}

void DecoupledSystem::build_matrices() {
    const Circuit& circuit = circuit_;
    a_c_ = incidence_reduced(circuit, {EK::Capacitor}).to_sparse();
    a_l_ = incidence_reduced(circuit, {EK::Inductor}).to_sparse();
    a_r_ = incidence_reduced(circuit, {EK::Resistor}).to_sparse();
    a_vs_ = incidence_reduced(circuit, {EK::VSourceIndependent}).to_sparse();
    a_vc_ = incidence_reduced(circuit, {EK::VSourceControlled}).to_sparse();
    a_is_ = incidence_reduced(circuit, {EK::ISourceIndependent}).to_sparse();
    a_ic_ = incidence_reduced(circuit, {EK::ISourceControlled}).to_sparse();

    s_vs_ = chain_.s_vs.to_sparse();
    s_c_ = chain_.s_c.to_sparse();
    s_vc_ = chain_.s_vc.to_sparse();
    s_r_ = chain_.s_r.to_sparse();
    s_rbar_ = chain_.s_rbar.to_sparse();
    vl_ = chain_.l.v.to_sparse();
    wl_ = chain_.l.w.to_sparse();

    // Device matrices: diagonal C, full L with mutual couplings.
    {
        int n_c = static_cast<int>(caps_.size());
        cap_matrix_.resize(n_c, n_c);
        std::vector<Eigen::Triplet<double>> trip;
        for (int i = 0; i < n_c; ++i)
            trip.emplace_back(i, i, std::get<LinearC>(device_of(caps_[i]).model).capacitance);
        cap_matrix_.setFromTriplets(trip.begin(), trip.end());
    }
    {
        int n_l = static_cast<int>(inductors_.size());
        Matrix l = Matrix::Zero(n_l, n_l);
        std::map<std::string, int> index;
        for (int i = 0; i < n_l; ++i) {
            const Element& element = circuit.branches[inductors_[i].circuit_branch];
            index[element.id] = i;
            l(i, i) = std::get<LinearL>(element.behavior.model).inductance;
        }
        for (const auto& coupling : circuit.couplings) {
            int i = index.at(coupling.inductor_a);
            int j = index.at(coupling.inductor_b);
            double m = coupling.coefficient * std::sqrt(l(i, i) * l(j, j));
            l(i, j) += m;
            l(j, i) += m;
        }
        ind_matrix_ = l.sparseView();
    }

    // Constant diagonal blocks of dg/dy and dh/dz, plus the coupling sub-blocks.
    a1_ = dense(Sparse(a_vs_.transpose() * s_vs_));
    a2_ = dense(Sparse(s_rbar_.transpose() * a_l_ * vl_));
    a3_ = dense(Sparse(a_vc_.transpose() * s_vc_));
    a5_ = dense(Sparse(s_vc_.transpose() * a_vc_));
    b2_ = dense(Sparse(s_rbar_.transpose() * a_is_));
    d_vc_vs_ = dense(Sparse(a_vc_.transpose() * s_vs_));
    d_vc_c_ = dense(Sparse(a_vc_.transpose() * s_c_));
    d_c_c_ = dense(Sparse(a_c_.transpose() * s_c_));
    d_c_vs_ = dense(Sparse(a_c_.transpose() * s_vs_));
    d_l_vs_ = dense(Sparse(a_l_.transpose() * s_vs_));
    d_l_c_ = dense(Sparse(a_l_.transpose() * s_c_));
    d_l_vc_ = dense(Sparse(a_l_.transpose() * s_vc_));
    d_l_r_ = dense(Sparse(a_l_.transpose() * s_r_));
    d_l_rbar_ = dense(Sparse(a_l_.transpose() * s_rbar_));

    m1_ = dense(Sparse(s_c_.transpose() * a_c_ * cap_matrix_)) * d_c_c_;
    m1_vs_ = dense(Sparse(s_c_.transpose() * a_c_ * cap_matrix_)) * d_c_vs_;
    Matrix ind = dense(ind_matrix_);
    Matrix wl = dense(wl_), vl = dense(vl_);
    ml_ww_ = wl.transpose() * ind * wl;
    ml_wv_ = wl.transpose() * ind * vl;
    ml_vv_ = vl.transpose() * ind * vl;
    ml_vw_ = vl.transpose() * ind * wl;

    auto check_square = [](const Matrix& m, const char* name) {
        if (m.rows() != m.cols()) throw SingularStageMatrix(std::string(name) + " (not square)");
    };
    check_square(a1_, "A1");
    check_square(a2_, "A2");
    check_square(a3_, "A3");
    check_square(a5_, "A5");

    auto factorize = [](Eigen::FullPivLU<Matrix>& lu, const Matrix& m, const char* name) {
        lu.compute(m);
        if (m.rows() > 0 && !lu.isInvertible()) throw SingularStageMatrix(name);
    };
    factorize(lu_a1_, a1_, "A1");
    factorize(lu_a2_, a2_, "A2");
    factorize(lu_a3_, a3_, "A3");
    factorize(lu_a5_, a5_, "A5");
    factorize(lu_a1t_, Matrix(a1_.transpose()), "A1^T");
    factorize(lu_a2t_, Matrix(a2_.transpose()), "A2^T");

    llt_m1_.compute(m1_);
    if (m1_.rows() > 0 && llt_m1_.info() != Eigen::Success)
        throw SingularStageMatrix("P_C^T Q_Vs^T A_C C A_C^T Q_Vs P_C");
    llt_ml_ww_.compute(ml_ww_);
    if (ml_ww_.rows() > 0 && llt_ml_ww_.info() != Eigen::Success)
        throw SingularStageMatrix("W_L^T L W_L");

    // Constant chain-rule maps d[phi, i_L, i_Vc]/d[x; y].
    const VariablePartition& p = partition_;
    int nx = p.dim_x(), ny = p.dim_y();
    int n_phi = circuit.node_count() - 1;
    phi_map_ = Matrix::Zero(n_phi, nx + ny);
    il_map_ = Matrix::Zero(static_cast<int>(inductors_.size()), nx + ny);
    ivc_map_ = Matrix::Zero(static_cast<int>(vc_.size()), nx + ny);
    int col = 0;
    phi_map_.middleCols(col, p.n_phi_c) = dense(s_c_);
    col += p.n_phi_c;
    il_map_.middleCols(col, p.n_i_loop) = wl;
    col += p.n_i_loop;
    phi_map_.middleCols(col, p.n_phi_vs) = dense(s_vs_);
    col += p.n_phi_vs;
    il_map_.middleCols(col, p.n_i_tree) = vl;
    col += p.n_i_tree;
    phi_map_.middleCols(col, p.n_phi_vc) = dense(s_vc_);
    col += p.n_phi_vc;
    phi_map_.middleCols(col, p.n_phi_r) = dense(s_r_);
    col += p.n_phi_r;
    ivc_map_.middleCols(col, p.n_i_vc) = Matrix::Identity(p.n_i_vc, p.n_i_vc);
}

DecoupledSystem DecoupledSystem::assemble(const Circuit& circuit, const SplitChain& chain,
                                          const VerificationReport& report) {
    if (!report.passed)
        throw AssumptionViolation("assemble", "verification did not pass");

    DecoupledSystem system;
    system.circuit_ = circuit;
    system.chain_ = chain;
    system.report_ = report;
    system.build_wiring(system.circuit_);

    VariablePartition& p = system.partition_;
    p.n_phi_c = chain.s_c.cols;
    p.n_i_loop = chain.l.w.cols;
    p.n_phi_vs = chain.s_vs.cols;
    p.n_i_tree = chain.l.v.cols;
    p.n_phi_vc = chain.s_vc.cols;
    p.n_phi_r = chain.s_r.cols;
    p.n_i_vc = static_cast<int>(system.vc_.size());
    p.n_i_vs = static_cast<int>(system.vs_.size());
    p.n_phi_rbar = chain.s_rbar.cols;

    p.x = chain.phi_c_names;
    p.x.insert(p.x.end(), chain.i_loop_names.begin(), chain.i_loop_names.end());
    p.y = chain.phi_vs_names;
    p.y.insert(p.y.end(), chain.i_tree_names.begin(), chain.i_tree_names.end());
    p.y.insert(p.y.end(), chain.phi_vc_names.begin(), chain.phi_vc_names.end());
    p.y.insert(p.y.end(), chain.phi_r_names.begin(), chain.phi_r_names.end());
    for (const auto& slot : system.vc_) {
        NamedCombo combo;
        combo.name = "i(" + circuit.branches[slot.circuit_branch].id + ")";
        combo.terms = {{1, combo.name}};
        p.y.push_back(std::move(combo));
    }
    for (const auto& slot : system.vs_) {
        NamedCombo combo;
        combo.name = "i(" + circuit.branches[slot.circuit_branch].id + ")";
        combo.terms = {{1, combo.name}};
        p.z.push_back(std::move(combo));
    }
    p.z.insert(p.z.end(), chain.phi_rbar_names.begin(), chain.phi_rbar_names.end());

    system.build_matrices();
    return system;
}

// --- device evaluations over reconstructed state ---

Vector DecoupledSystem::eval_resistor_currents(const Vector& phi, const Vector& i_l,
                                               double t) const {
    (void)t;
    Vector out(static_cast<int>(resistors_.size()));
    Vector no_ivc = Vector::Zero(static_cast<int>(vc_.size()));
    for (std::size_t i = 0; i < resistors_.size(); ++i) {
        const DeviceSlot& slot = resistors_[i];
        const Element& element = circuit_.branches[slot.circuit_branch];
        double v = phi_of(phi, element.from_node) - phi_of(phi, element.to_node);
        double s = slot.has_control ? control_value(slot, phi, i_l, no_ivc) : v;
        out[static_cast<int>(i)] = device_of(slot).resistor_current(v, s, slot.has_control);
    }
    return out;
}

Vector DecoupledSystem::eval_ic_values(const Vector& phi, const Vector& i_l, const Vector& i_vc,
                                       double t) const {
    (void)t;
    Vector out(static_cast<int>(ic_.size()));
    for (std::size_t i = 0; i < ic_.size(); ++i)
        out[static_cast<int>(i)] = device_of(ic_[i]).source_value(control_value(ic_[i], phi, i_l, i_vc));
    return out;
}

Vector DecoupledSystem::eval_vc_values(const Vector& phi, const Vector& i_l, double t) const {
    (void)t;
    Vector out(static_cast<int>(vc_.size()));
    Vector no_ivc = Vector::Zero(static_cast<int>(vc_.size()));
    for (std::size_t i = 0; i < vc_.size(); ++i)
        out[static_cast<int>(i)] = device_of(vc_[i]).source_value(control_value(vc_[i], phi, i_l, no_ivc));
    return out;
}

Vector DecoupledSystem::eval_is_values(double t) const {
    Vector out(static_cast<int>(is_.size()));
    for (std::size_t i = 0; i < is_.size(); ++i)
        out[static_cast<int>(i)] = device_of(is_[i]).waveform_value(t);
    return out;
}

Vector DecoupledSystem::eval_dis_values(double t) const {
    Vector out(static_cast<int>(is_.size()));
    for (std::size_t i = 0; i < is_.size(); ++i)
        out[static_cast<int>(i)] = device_of(is_[i]).waveform_derivative(t);
    return out;
}

Vector DecoupledSystem::eval_vs_values(double t) const {
    Vector out(static_cast<int>(vs_.size()));
    for (std::size_t i = 0; i < vs_.size(); ++i)
        out[static_cast<int>(i)] = device_of(vs_[i]).waveform_value(t);
    return out;
}

Vector DecoupledSystem::eval_dvs_values(double t) const {
    Vector out(static_cast<int>(vs_.size()));
    for (std::size_t i = 0; i < vs_.size(); ++i)
        out[static_cast<int>(i)] = device_of(vs_[i]).waveform_derivative(t);
    return out;
}

Vector DecoupledSystem::eval_core(const Vector& phi, const Vector& i_l, const Vector& i_vc,
                                  double t) const {
    Vector core = a_l_ * i_l;
    core += a_r_ * eval_resistor_currents(phi, i_l, t);
    core += a_vc_ * i_vc;
    core += a_is_ * eval_is_values(t);
    core += a_ic_ * eval_ic_values(phi, i_l, i_vc, t);
    return core;
}

void DecoupledSystem::core_jacobian(const Vector& phi, const Vector& i_l, const Vector& i_vc,
                                    double t, Matrix& d_phi, Matrix& d_il, Matrix& d_ivc) const {
    (void)t;
    int n_phi = circuit_.node_count() - 1;
    int n_l = static_cast<int>(inductors_.size());
    int n_vc = static_cast<int>(vc_.size());
    d_phi = Matrix::Zero(n_phi, n_phi);
    d_il = dense(a_l_);
    d_ivc = dense(a_vc_);

    Vector no_ivc = Vector::Zero(n_vc);
    Eigen::RowVectorXd ds_dphi, ds_dil, ds_divc;

    auto stamp_rows = [&](const Element& element, const Eigen::RowVectorXd& row_phi,
                          const Eigen::RowVectorXd& row_il, const Eigen::RowVectorXd& row_ivc) {
        auto add = [&](int node, double sign) {
            if (node == 0) return;
            d_phi.row(node - 1) += sign * row_phi;
            d_il.row(node - 1) += sign * row_il;
            d_ivc.row(node - 1) += sign * row_ivc;
        };
        add(element.from_node, 1.0);
        add(element.to_node, -1.0);
    };

    for (const auto& slot : resistors_) {
        const Element& element = circuit_.branches[slot.circuit_branch];
        double v = phi_of(phi, element.from_node) - phi_of(phi, element.to_node);
        double s = slot.has_control ? control_value(slot, phi, i_l, no_ivc) : v;
        double di_dv = device_of(slot).resistor_dv(v, s, slot.has_control);
        double di_ds = device_of(slot).resistor_ds(v, s, slot.has_control);

        Eigen::RowVectorXd row_phi = Eigen::RowVectorXd::Zero(n_phi);
        Eigen::RowVectorXd row_il = Eigen::RowVectorXd::Zero(n_l);
        Eigen::RowVectorXd row_ivc = Eigen::RowVectorXd::Zero(n_vc);
        if (element.from_node != 0) row_phi[element.from_node - 1] += di_dv;
        if (element.to_node != 0) row_phi[element.to_node - 1] -= di_dv;
        if (slot.has_control && di_ds != 0.0) {
            control_gradient(slot, ds_dphi, ds_dil, ds_divc);
            row_phi += di_ds * ds_dphi;
            row_il += di_ds * ds_dil;
            row_ivc += di_ds * ds_divc;
        }
        stamp_rows(element, row_phi, row_il, row_ivc);
    }

    for (const auto& slot : ic_) {
        const Element& element = circuit_.branches[slot.circuit_branch];
        double s = control_value(slot, phi, i_l, i_vc);
        double di_ds = device_of(slot).source_derivative(s);
        control_gradient(slot, ds_dphi, ds_dil, ds_divc);
        stamp_rows(element, di_ds * ds_dphi, di_ds * ds_dil, di_ds * ds_divc);
    }
}

Vector DecoupledSystem::reconstruct_phi(const Vector& x, const Vector& y,
                                        const Vector* phi_rbar) const {
    const VariablePartition& p = partition_;
    Vector phi = s_c_ * x.head(p.n_phi_c);
    phi += s_vs_ * y.head(p.n_phi_vs);
    phi += s_vc_ * y.segment(p.n_phi_vs + p.n_i_tree, p.n_phi_vc);
    phi += s_r_ * y.segment(p.n_phi_vs + p.n_i_tree + p.n_phi_vc, p.n_phi_r);
    if (phi_rbar) phi += s_rbar_ * (*phi_rbar);
    return phi;
}

Vector DecoupledSystem::reconstruct_il(const Vector& x, const Vector& y) const {
    const VariablePartition& p = partition_;
    return wl_ * x.tail(p.n_i_loop) + vl_ * y.segment(p.n_phi_vs, p.n_i_tree);
}

Vector DecoupledSystem::phi_vs_of_t(double t) const {
    return lu_a1_.solve(eval_vs_values(t));
}

Vector DecoupledSystem::dphi_vs_of_t(double t) const {
    return lu_a1_.solve(eval_dvs_values(t));
}

Vector DecoupledSystem::i_tree_of_t(double t) const {
    return lu_a2_.solve(-(b2_ * eval_is_values(t)));
}

Vector DecoupledSystem::di_tree_of_t(double t) const {
    return lu_a2_.solve(-(b2_ * eval_dis_values(t)));
}

Vector DecoupledSystem::eval_g(const Vector& x, const Vector& y, double t) const {
    const VariablePartition& p = partition_;
    if (x.size() != p.dim_x() || y.size() != p.dim_y())
        throw DimensionMismatch("eval_g: bad state dimensions");

    Vector phi = reconstruct_phi(x, y, nullptr);
    Vector i_l = reconstruct_il(x, y);
    Vector i_vc = y.tail(p.n_i_vc);
    Vector core = eval_core(phi, i_l, i_vc, t);

    Vector g(p.dim_y());
    int row = 0;
    g.segment(row, p.n_phi_vs) = a1_ * y.head(p.n_phi_vs) - eval_vs_values(t);
    row += p.n_phi_vs;
    g.segment(row, p.n_i_tree) = s_rbar_.transpose() * core; // = A2 i~_L + B2 i_s(t)
    row += p.n_i_tree;
    g.segment(row, p.n_phi_vc) =
        a_vc_.transpose() * phi - eval_vc_values(phi, i_l, t);
    row += p.n_phi_vc;
    g.segment(row, p.n_phi_r) = s_r_.transpose() * core;
    row += p.n_phi_r;
    g.segment(row, p.n_i_vc) = s_vc_.transpose() * core;
    return g;
}

void DecoupledSystem::g_jacobian(const Vector& x, const Vector& y, double t, Matrix& dg_dx,
                                 Matrix& dg_dy) const {
    const VariablePartition& p = partition_;
    int nx = p.dim_x(), ny = p.dim_y();

    Vector phi = reconstruct_phi(x, y, nullptr);
    Vector i_l = reconstruct_il(x, y);
    Vector i_vc = y.tail(p.n_i_vc);

    Matrix core_dphi, core_dil, core_divc;
    core_jacobian(phi, i_l, i_vc, t, core_dphi, core_dil, core_divc);
    Matrix core_j = core_dphi * phi_map_ + core_dil * il_map_ + core_divc * ivc_map_;

    Matrix full = Matrix::Zero(ny, nx + ny);
    int row = 0;
    // g1: A1 on phi~_Vs only.
    full.block(row, nx, p.n_phi_vs, p.n_phi_vs) = a1_;
    row += p.n_phi_vs;
    // g2 / g4 / g5: projections of the core.
    full.middleRows(row, p.n_i_tree) = dense(s_rbar_).transpose() * core_j;
    row += p.n_i_tree;
    // g3: A_Vc^T phi - v_c(controls, t).
    {
        Matrix g3 = dense(a_vc_).transpose() * phi_map_;
        Vector no_ivc = Vector::Zero(p.n_i_vc);
        Eigen::RowVectorXd ds_dphi, ds_dil, ds_divc;
        for (std::size_t i = 0; i < vc_.size(); ++i) {
            double s = control_value(vc_[i], phi, i_l, no_ivc);
            double dv_ds = device_of(vc_[i]).source_derivative(s);
            control_gradient(vc_[i], ds_dphi, ds_dil, ds_divc);
            g3.row(static_cast<int>(i)) -=
                dv_ds * (ds_dphi * phi_map_ + ds_dil * il_map_);
        }
        full.middleRows(row, p.n_phi_vc) = g3;
        row += p.n_phi_vc;
    }
    full.middleRows(row, p.n_phi_r) = dense(s_r_).transpose() * core_j;
    row += p.n_phi_r;
    full.middleRows(row, p.n_i_vc) = dense(s_vc_).transpose() * core_j;

    dg_dx = full.leftCols(nx);
    dg_dy = full.rightCols(ny);
}

Vector DecoupledSystem::eval_diff(const Vector& x, const Vector& y, const Vector& xdot,
                                  double t) const {
    const VariablePartition& p = partition_;
    if (xdot.size() != p.dim_x()) throw DimensionMismatch("eval_diff: bad xdot dimension");

    Vector phi = reconstruct_phi(x, y, nullptr);
    Vector i_l = reconstruct_il(x, y);
    Vector i_vc = y.tail(p.n_i_vc);
    Vector core = eval_core(phi, i_l, i_vc, t);

    Vector out(p.dim_x());
    out.head(p.n_phi_c) = m1_ * xdot.head(p.n_phi_c) + m1_vs_ * dphi_vs_of_t(t) +
                          s_c_.transpose() * core;
    out.tail(p.n_i_loop) = ml_ww_ * xdot.tail(p.n_i_loop) + ml_wv_ * di_tree_of_t(t) -
                           wl_.transpose() * (a_l_.transpose() * phi);
    return out;
}

void DecoupledSystem::diff_jacobian(const Vector& x, const Vector& y, const Vector& xdot,
                                    double t, Matrix& dd_dx, Matrix& dd_dy,
                                    Matrix& dd_dxdot) const {
    (void)xdot;
    const VariablePartition& p = partition_;
    int nx = p.dim_x(), ny = p.dim_y();

    Vector phi = reconstruct_phi(x, y, nullptr);
    Vector i_l = reconstruct_il(x, y);
    Vector i_vc = y.tail(p.n_i_vc);

    Matrix core_dphi, core_dil, core_divc;
    core_jacobian(phi, i_l, i_vc, t, core_dphi, core_dil, core_divc);
    Matrix core_j = core_dphi * phi_map_ + core_dil * il_map_ + core_divc * ivc_map_;

    Matrix full = Matrix::Zero(nx, nx + ny);
    full.topRows(p.n_phi_c) = dense(s_c_).transpose() * core_j;
    full.bottomRows(p.n_i_loop) = -dense(wl_).transpose() * dense(a_l_).transpose() * phi_map_;

    dd_dx = full.leftCols(nx);
    dd_dy = full.rightCols(ny);
    dd_dxdot = Matrix::Zero(nx, nx);
    dd_dxdot.topLeftCorner(p.n_phi_c, p.n_phi_c) = m1_;
    dd_dxdot.bottomRightCorner(p.n_i_loop, p.n_i_loop) = ml_ww_;
}

Vector DecoupledSystem::solve_f(const Vector& x, const Vector& y, double t) const {
    const VariablePartition& p = partition_;
    Vector phi = reconstruct_phi(x, y, nullptr);
    Vector i_l = reconstruct_il(x, y);
    Vector i_vc = y.tail(p.n_i_vc);
    Vector core = eval_core(phi, i_l, i_vc, t);

    Vector xdot(p.dim_x());
    xdot.head(p.n_phi_c) =
        llt_m1_.solve(-(m1_vs_ * dphi_vs_of_t(t) + s_c_.transpose() * core));
    xdot.tail(p.n_i_loop) = llt_ml_ww_.solve(wl_.transpose() * (a_l_.transpose() * phi) -
                                             ml_wv_ * di_tree_of_t(t));
    return xdot;
}

Vector DecoupledSystem::solve_output(const Vector& x, const Vector& y, const Vector& xdot,
                                     double t) const {
    const VariablePartition& p = partition_;
    Vector phi_partial = reconstruct_phi(x, y, nullptr);
    Vector i_l = reconstruct_il(x, y);
    Vector i_vc = y.tail(p.n_i_vc);

    // phi-_R first: Eq. of V_L^T rows, linear with matrix -A2^T.
    Vector di_l = vl_ * di_tree_of_t(t) + wl_ * xdot.tail(p.n_i_loop);
    Vector rhs_rbar = vl_.transpose() * (ind_matrix_ * di_l) -
                      vl_.transpose() * (a_l_.transpose() * phi_partial);
    Vector phi_rbar = lu_a2t_.solve(rhs_rbar);

    // i_Vs second, with the full reconstructed potentials.
    Vector phi = phi_partial + s_rbar_ * phi_rbar;
    Vector dq_c = cap_matrix_ * (d_c_c_ * xdot.head(p.n_phi_c) + d_c_vs_ * dphi_vs_of_t(t));
    Vector core = eval_core(phi, i_l, i_vc, t);
    Vector rhs_ivs = -(s_vs_.transpose() * (a_c_ * dq_c + core));
    Vector i_vs = lu_a1t_.solve(rhs_ivs);

    Vector z(p.dim_z());
    z << i_vs, phi_rbar;
    return z;
}

OriginalState DecoupledSystem::reconstruct(const Vector& x, const Vector& y,
                                           const Vector& z) const {
    const VariablePartition& p = partition_;
    if (x.size() != p.dim_x() || y.size() != p.dim_y() || z.size() != p.dim_z())
        throw DimensionMismatch("reconstruct: bad state dimensions");
    OriginalState state;
    Vector phi_rbar = z.tail(p.n_phi_rbar);
    state.phi = reconstruct_phi(x, y, &phi_rbar);
    state.i_l = reconstruct_il(x, y);
    state.i_vs = z.head(p.n_i_vs);
    state.i_vc = y.tail(p.n_i_vc);
    return state;
}

StorageDerivatives DecoupledSystem::storage_derivatives(const Vector& x, const Vector& y,
                                                        const Vector& xdot, double t) const {
    (void)x;
    (void)y;
    const VariablePartition& p = partition_;
    StorageDerivatives out;
    out.dq_c = cap_matrix_ * (d_c_c_ * xdot.head(p.n_phi_c) + d_c_vs_ * dphi_vs_of_t(t));
    out.dphi_l =
        ind_matrix_ * (vl_ * di_tree_of_t(t) + wl_ * xdot.tail(p.n_i_loop));
    return out;
}

Matrix DecoupledSystem::block_a4(const Vector& x, const Vector& y, double t) const {
    Matrix dg_dx, dg_dy;
    g_jacobian(x, y, t, dg_dx, dg_dy);
    const VariablePartition& p = partition_;
    int row = p.n_phi_vs + p.n_i_tree + p.n_phi_vc;
    return dg_dy.block(row, row, p.n_phi_r, p.n_phi_r);
}

void project_state(const DecoupledSystem& system, const OriginalState& state, Vector& x,
                   Vector& y, Vector& z) {
    const VariablePartition& p = system.partition();
    const SplitChain& chain = system.chain();
    int n_phi = system.circuit().node_count() - 1;

    Matrix basis(n_phi, n_phi);
    int col = 0;
    auto put = [&](const SignMatrix& m) {
        basis.middleCols(col, m.cols) = m.to_dense_int().cast<double>();
        col += m.cols;
    };
    put(chain.s_c);
    put(chain.s_vs);
    put(chain.s_vc);
    put(chain.s_r);
    put(chain.s_rbar);
    Vector split_phi = basis.fullPivLu().solve(state.phi);

    int n_l = static_cast<int>(state.i_l.size());
    Matrix current_basis(n_l, n_l);
    current_basis.leftCols(chain.l.w.cols) = chain.l.w.to_dense_int().cast<double>();
    current_basis.rightCols(chain.l.v.cols) = chain.l.v.to_dense_int().cast<double>();
    Vector split_il = n_l > 0 ? Vector(current_basis.fullPivLu().solve(state.i_l)) : Vector(0);

    x.resize(p.dim_x());
    y.resize(p.dim_y());
    z.resize(p.dim_z());
    x << split_phi.head(p.n_phi_c), split_il.head(p.n_i_loop);
    y << split_phi.segment(p.n_phi_c, p.n_phi_vs), split_il.tail(p.n_i_tree),
        split_phi.segment(p.n_phi_c + p.n_phi_vs, p.n_phi_vc),
        split_phi.segment(p.n_phi_c + p.n_phi_vs + p.n_phi_vc, p.n_phi_r), state.i_vc;
    z << state.i_vs, split_phi.tail(p.n_phi_rbar);
}

// --- JSON descriptions ---

namespace {

nlohmann::json combo_json(const NamedCombo& combo) {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& [coef, unknown] : combo.terms)
        terms.push_back({{"coef", coef}, {"unknown", unknown}});
    return {{"name", combo.name}, {"terms", terms}};
}

} // namespace

std::string DecoupledSystem::partition_to_json() const {
    nlohmann::json out;
    for (const auto* group : {&partition_.x, &partition_.y, &partition_.z}) {
        nlohmann::json list = nlohmann::json::array();
        for (const auto& combo : *group) list.push_back(combo_json(combo));
        if (group == &partition_.x) out["x"] = list;
        else if (group == &partition_.y) out["y"] = list;
        else out["z"] = list;
    }
    out["sizes"] = {{"phi_c", partition_.n_phi_c},   {"i_loop", partition_.n_i_loop},
                    {"phi_vs", partition_.n_phi_vs}, {"i_tree", partition_.n_i_tree},
                    {"phi_vc", partition_.n_phi_vc}, {"phi_r", partition_.n_phi_r},
                    {"i_vc", partition_.n_i_vc},     {"i_vs", partition_.n_i_vs},
                    {"phi_rbar", partition_.n_phi_rbar}};
    return out.dump(2);
}

std::string DecoupledSystem::system_to_json() const {
    nlohmann::json out;
    auto stage_json = [&](const StageBasis& stage) {
        nlohmann::json s;
        s["stage"] = stage.stage;
        s["source"] = "A_" + stage.stage + "^T contracted by preceding stages";
        s["q"] = {{"rows", stage.q.rows}, {"cols", stage.q.cols}, {"file", "Q_" + stage.stage + ".mtx"}};
        s["p"] = {{"rows", stage.p.rows}, {"cols", stage.p.cols}, {"file", "P_" + stage.stage + ".mtx"}};
        nlohmann::json zero = nlohmann::json::array();
        for (int colIdx : stage.zero_columns) zero.push_back(stage.contracted.col_labels[colIdx]);
        s["contracted_to_self_loops"] = zero;
        return s;
    };
    out["stages"] = {stage_json(chain_.vs), stage_json(chain_.c), stage_json(chain_.vc),
                     stage_json(chain_.r)};
    out["loop_stage"] = {
        {"v", {{"rows", chain_.l.v.rows}, {"cols", chain_.l.v.cols}, {"file", "V_L.mtx"}}},
        {"w", {{"rows", chain_.l.w.rows}, {"cols", chain_.l.w.cols}, {"file", "W_L.mtx"}}}};
    out["blocks"] = {{"A1", {{"rows", a1_.rows()}, {"cols", a1_.cols()}}},
                     {"A2", {{"rows", a2_.rows()}, {"cols", a2_.cols()}}},
                     {"A3", {{"rows", a3_.rows()}, {"cols", a3_.cols()}}},
                     {"A5", {{"rows", a5_.rows()}, {"cols", a5_.cols()}}}};

    nlohmann::json devices = nlohmann::json::array();
    for (const auto& element : circuit_.branches) {
        nlohmann::json d;
        d["id"] = element.id;
        d["kind"] = kind_name(element.kind);
        d["from"] = circuit_.nodes[element.from_node];
        d["to"] = circuit_.nodes[element.to_node];
        if (!element.controls.empty()) {
            nlohmann::json refs = nlohmann::json::array();
            for (const auto& ref : element.controls) {
                nlohmann::json r;
                r["gain"] = ref.gain;
                switch (ref.kind) {
                    case ControlRef::Kind::BranchVoltage:
                        r["v"] = ref.element_id;
                        break;
                    case ControlRef::Kind::NodePairVoltage:
                        r["v"] = {circuit_.nodes[ref.node_a], circuit_.nodes[ref.node_b]};
                        break;
                    case ControlRef::Kind::InductorCurrent:
                    case ControlRef::Kind::ControlledVSourceCurrent:
                        r["i"] = ref.element_id;
                        break;
                }
                refs.push_back(r);
            }
            d["controls"] = refs;
        }
        devices.push_back(d);
    }
    out["devices"] = devices;

    nlohmann::json rewrites = nlohmann::json::object();
    for (const auto& rewrite : report_.control_rewrites) {
        nlohmann::json terms = nlohmann::json::array();
        for (const auto& [sign, branch] : rewrite.signed_branches)
            terms.push_back({{"sign", sign}, {"branch", branch}});
        rewrites[rewrite.element_id + "." + std::to_string(rewrite.control_index)] = terms;
    }
    out["control_rewrites"] = rewrites;
    out["ic_types"] = report_.ic_type_of;
    return out.dump(2);
}

} // namespace mnadec
