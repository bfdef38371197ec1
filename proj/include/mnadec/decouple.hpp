#pragma once

#include "mnadec/basis.hpp"
#include "mnadec/verify.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <memory>
#include <string>
#include <vector>

namespace mnadec {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Sparse = Eigen::SparseMatrix<double>;

/// Differential x = [phi~_C, i-_L], algebraic y = [phi~_Vs, i~_L, phi~_Vc, phi~_R, i_Vc],
/// output z = [i_Vs, phi-_R], each entry named as an integer combination of the
/// original MNA unknowns.
struct VariablePartition {
    std::vector<NamedCombo> x;
    std::vector<NamedCombo> y;
    std::vector<NamedCombo> z;

    int n_phi_c = 0;
    int n_i_loop = 0; // x = [phi~_C; i-_L]
    int n_phi_vs = 0;
    int n_i_tree = 0;
    int n_phi_vc = 0;
    int n_phi_r = 0;
    int n_i_vc = 0;   // y = [phi~_Vs; i~_L; phi~_Vc; phi~_R; i_Vc]
    int n_i_vs = 0;
    int n_phi_rbar = 0; // z = [i_Vs; phi-_R]

    int dim_x() const { return n_phi_c + n_i_loop; }
    int dim_y() const { return n_phi_vs + n_i_tree + n_phi_vc + n_phi_r + n_i_vc; }
    int dim_z() const { return n_i_vs + n_phi_rbar; }
};

/// Original MNA state.
struct OriginalState {
    Vector phi;  ///< nodal potentials, nodes 1..n-1
    Vector i_l;  ///< inductor currents, kind-sorted L order
    Vector i_vs; ///< independent V source currents
    Vector i_vc; ///< controlled V source currents
};

/// Time-derivative estimates for the storage terms of the raw MNA residual.
struct StorageDerivatives {
    Vector dq_c;   ///< d/dt q_C per capacitor branch
    Vector dphi_l; ///< d/dt phi_L per inductor branch

    static StorageDerivatives zeros(int n_c, int n_l);
};

/// Raw MNA residual rows, the round-trip oracle: KCL (n-1), inductor voltage (b_L),
/// independent source (b_Vs) and controlled source (b_Vc) constraint rows.
Vector mna_residual(const Circuit& circuit, const OriginalState& state,
                    const StorageDerivatives& derivatives, double t);

/// The assembled semi-explicit index-1 system of the decoupling: differential block,
/// algebraic blocks g1..g5, output block h, with all constant matrices precomputed and
/// the constant diagonal blocks factorized. Immutable after assembly; evaluators are
/// re-entrant.
class DecoupledSystem {
public:
    static DecoupledSystem assemble(const Circuit& circuit, const SplitChain& chain,
                                    const VerificationReport& report);

    const Circuit& circuit() const { return circuit_; }
    const SplitChain& chain() const { return chain_; }
    const VariablePartition& partition() const { return partition_; }
    const VerificationReport& report() const { return report_; }

    // --- algebraic block g(x, y, t), stacked [g1; g2; g3; g4; g5] ---
    Vector eval_g(const Vector& x, const Vector& y, double t) const;
    /// Analytic Jacobians of g.
    void g_jacobian(const Vector& x, const Vector& y, double t, Matrix& dg_dx,
                    Matrix& dg_dy) const;

    // --- differential block, stacked [dd1; dd2] = 0 with xdot given ---
    Vector eval_diff(const Vector& x, const Vector& y, const Vector& xdot, double t) const;
    void diff_jacobian(const Vector& x, const Vector& y, const Vector& xdot, double t,
                       Matrix& dd_dx, Matrix& dd_dy, Matrix& dd_dxdot) const;

    /// Explicit right-hand side xdot = f(x, y, t) (solves the two SPD leading blocks).
    Vector solve_f(const Vector& x, const Vector& y, double t) const;

    // --- output block: solves h for z given state and differential-variable rates ---
    Vector solve_output(const Vector& x, const Vector& y, const Vector& xdot, double t) const;

    // --- reconstruction ---
    OriginalState reconstruct(const Vector& x, const Vector& y, const Vector& z) const;
    /// Discrete/analytic storage derivatives consistent with the decoupled evaluators.
    StorageDerivatives storage_derivatives(const Vector& x, const Vector& y,
                                           const Vector& xdot, double t) const;

    /// Time-dependent algebraic prefixes: phi~_Vs(t), i~_L(t) and their derivatives.
    Vector phi_vs_of_t(double t) const;
    Vector dphi_vs_of_t(double t) const;
    Vector i_tree_of_t(double t) const;
    Vector di_tree_of_t(double t) const;

    // Constant blocks (dense copies, for tests and diagnostics).
    const Matrix& block_a1() const { return a1_; }
    const Matrix& block_a2() const { return a2_; }
    const Matrix& block_a3() const { return a3_; }
    const Matrix& block_a5() const { return a5_; }
    /// State-dependent diagonal block A4 at a given state.
    Matrix block_a4(const Vector& x, const Vector& y, double t) const;
    /// Leading differential matrices: P_C^T Q_Vs^T A_C C A_C^T Q_Vs P_C and W_L^T L W_L.
    const Matrix& leading_c() const { return m1_; }
    const Matrix& leading_l() const { return ml_ww_; }

    std::string system_to_json() const;
    std::string partition_to_json() const;

private:
    DecoupledSystem() = default;

    struct ControlTermRef {
        enum class Source { PhiDiff, BranchVoltage, InductorCurrent, VcCurrent } source;
        int a = -1; ///< node index (PhiDiff) or kind-local branch index otherwise
        int b = -1;
        double gain = 1.0;
    };
    struct DeviceSlot {
        int circuit_branch = -1;
        bool has_control = false;
        std::vector<ControlTermRef> control;
    };

    // Shared evaluation scratch (per call, stack-local; assembled helpers are const).
    struct EvalState;

    void build_wiring(const Circuit& circuit);
    void build_matrices();
    const DeviceFunction& device_of(const DeviceSlot& slot) const {
        return circuit_.branches[slot.circuit_branch].behavior;
    }
    double control_value(const DeviceSlot& slot, const Vector& phi, const Vector& i_l,
                         const Vector& i_vc) const;
    void control_gradient(const DeviceSlot& slot, Eigen::RowVectorXd& dphi,
                          Eigen::RowVectorXd& dil, Eigen::RowVectorXd& divc) const;

    Vector eval_resistor_currents(const Vector& phi, const Vector& i_l, double t) const;
    Vector eval_ic_values(const Vector& phi, const Vector& i_l, const Vector& i_vc,
                          double t) const;
    Vector eval_vc_values(const Vector& phi, const Vector& i_l, double t) const;
    Vector eval_is_values(double t) const;
    Vector eval_dis_values(double t) const;
    Vector eval_vs_values(double t) const;
    Vector eval_dvs_values(double t) const;

    /// KCL core A_R i_R + A_L i_L + A_Vc i_Vc + A_Is i_s + A_Ic i_c (no storage term).
    Vector eval_core(const Vector& phi, const Vector& i_l, const Vector& i_vc,
                     double t) const;
    /// d(core)/d[phi, i_l, i_vc] as dense blocks.
    void core_jacobian(const Vector& phi, const Vector& i_l, const Vector& i_vc, double t,
                       Matrix& d_phi, Matrix& d_il, Matrix& d_ivc) const;

    Vector reconstruct_phi(const Vector& x, const Vector& y, const Vector* phi_rbar) const;
    Vector reconstruct_il(const Vector& x, const Vector& y) const;

    Circuit circuit_;
    SplitChain chain_;
    VerificationReport report_;
    VariablePartition partition_;

    // Kind-sorted device tables.
    std::vector<DeviceSlot> caps_, inductors_, resistors_, vs_, vc_, is_, ic_;

    // Constant sparse matrices.
    Sparse a_c_, a_l_, a_r_, a_vs_, a_vc_, a_is_, a_ic_; ///< reduced incidence per kind
    Sparse s_vs_, s_c_, s_vc_, s_r_, s_rbar_;            ///< potential splitting maps
    Sparse vl_, wl_;                                     ///< current splitting maps
    Sparse cap_matrix_;                                  ///< diag C
    Sparse ind_matrix_;                                  ///< L (with mutual couplings)

    Matrix a1_, a2_, a3_, a5_, b2_;
    Matrix d_vc_vs_, d_vc_c_;    ///< A_Vc^T S_Vs, A_Vc^T S_C
    Matrix d_c_c_, d_c_vs_;      ///< A_C^T S_C, A_C^T S_Vs
    Matrix d_l_vs_, d_l_c_, d_l_vc_, d_l_r_, d_l_rbar_;
    Matrix m1_, m1_vs_;          ///< leading C blocks
    Matrix ml_ww_, ml_wv_, ml_vv_, ml_vw_;

    Eigen::FullPivLU<Matrix> lu_a1_, lu_a2_, lu_a3_, lu_a5_, lu_a1t_, lu_a2t_;
    Eigen::LLT<Matrix> llt_m1_, llt_ml_ww_;

    // Constant variable-to-state maps used by the chain-rule Jacobians.
    Matrix phi_map_, il_map_, ivc_map_;
};

/// Splittings evaluated in reverse: map an original state onto (x, y, z).
/// Exact for states generated by reconstruct(); used by tests and `init --x0`.
void project_state(const DecoupledSystem& system, const OriginalState& state, Vector& x,
                   Vector& y, Vector& z);

} // namespace mnadec
