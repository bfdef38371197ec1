#pragma once

#include "mnadec/errors.hpp"

#include <array>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace mnadec {

enum class ElementKind {
    Capacitor,
    Inductor,
    Resistor,
    VSourceIndependent,
    VSourceControlled,
    ISourceIndependent,
    ISourceControlled,
};

constexpr std::array<ElementKind, 7> kAllKinds = {
    ElementKind::Capacitor,        ElementKind::Inductor,
    ElementKind::Resistor,         ElementKind::VSourceIndependent,
    ElementKind::VSourceControlled, ElementKind::ISourceIndependent,
    ElementKind::ISourceControlled,
};

const char* kind_name(ElementKind kind);

/// Reference to a quantity that controls an element's value. Gains scale the
/// referenced quantity; an element's effective control is the sum of its gained refs.
struct ControlRef {
    enum class Kind {
        BranchVoltage,            ///< voltage across element `element_id`
        NodePairVoltage,          ///< phi(node_a) - phi(node_b)
        InductorCurrent,          ///< current through inductor `element_id`
        ControlledVSourceCurrent, ///< current through controlled V source `element_id`
    };

    Kind kind;
    std::string element_id; // BranchVoltage / InductorCurrent / ControlledVSourceCurrent
    int node_a = -1;        // NodePairVoltage
    int node_b = -1;
    double gain = 1.0;
};

// Device models. Scalar parameters of LinearC/LinearL/LinearG are strictly positive.
struct LinearC { double capacitance; };
struct LinearL { double inductance; };
struct LinearG { double conductance; };
struct DiodeShockley { double saturation_current; double thermal_voltage; };
struct SmoothSwitch { double g_on; double g_off; double v_threshold; double steepness; };
struct PolynomialSource { std::vector<double> coeffs; }; // value = sum coeffs[k] * s^k
struct WaveformDC { double value; };
struct WaveformSin { double offset; double amplitude; double frequency; double phase; };
struct TableWaveform { std::vector<double> times; std::vector<double> values; };

using DeviceModel = std::variant<LinearC, LinearL, LinearG, DiodeShockley, SmoothSwitch,
                                 PolynomialSource, WaveformDC, WaveformSin, TableWaveform>;

struct DeviceFunction {
    DeviceModel model;

    /// Independent-source waveforms: value and time derivative.
    double waveform_value(double t) const;
    double waveform_derivative(double t) const;

    /// Controlled V/I sources: value of the source given the combined control s.
    double source_value(double s) const;
    double source_derivative(double s) const;

    /// Resistors: branch current i(v, s) and partial derivatives. For models without
    /// an external control, s is ignored and the own branch voltage is used.
    double resistor_current(double v, double s, bool has_control) const;
    double resistor_dv(double v, double s, bool has_control) const;
    double resistor_ds(double v, double s, bool has_control) const;
};

/// One circuit branch. The branch is oriented from `from_node` to `to_node`
/// (it leaves `from_node`), so its voltage is phi(from) - phi(to).
struct Element {
    std::string id;
    ElementKind kind;
    int from_node = -1;
    int to_node = -1;
    DeviceFunction behavior;
    std::vector<ControlRef> controls;
};

/// Mutual inductive coupling between two inductors (K card), M = k*sqrt(La*Lb).
struct MutualCoupling {
    std::string id;
    std::string inductor_a;
    std::string inductor_b;
    double coefficient = 0.0;
};

struct Circuit {
    std::string name;
    std::vector<std::string> nodes; ///< node names; index 0 is ground ("0")
    std::vector<Element> branches;  ///< file order
    std::vector<MutualCoupling> couplings;

    int node_count() const { return static_cast<int>(nodes.size()); }
    int branch_count() const { return static_cast<int>(branches.size()); }

    /// Index into `branches`, or -1 if no such element.
    int find_element(const std::string& id) const;
    /// Index into `nodes`, or -1 if no such node.
    int find_node(const std::string& name) const;

    std::vector<int> branches_of_kind(ElementKind kind) const;
};

/// Parse a netlist (grammar in docs/netlist.md). Nodes are numbered in first-appearance
/// order with ground pinned to the literal token `0`; element order follows the file.
Circuit parse_netlist(const std::string& text, const std::string& name = "circuit");

/// Inverse of parse_netlist up to formatting; parse(serialize(c)) == c.
std::string serialize_netlist(const Circuit& circuit);

/// Canonical branch order [C, L, R, Vs, Vc, Is, Ic], stable by file order within each
/// kind. All incidence matrices use this order.
std::vector<int> kind_sorted_incidence_order(const Circuit& circuit);

/// As above, with controlled current sources sub-ordered by their assigned type (1..4).
std::vector<int> kind_sorted_incidence_order(
    const Circuit& circuit, const std::vector<std::pair<std::string, int>>& ic_types);

/// Renumber nodes by ascending numeric node name (the ordering used by the worked
/// examples). Requires every node name to be a nonnegative integer literal.
Circuit with_numeric_node_order(const Circuit& circuit);

bool operator==(const ControlRef& a, const ControlRef& b);
bool operator==(const Element& a, const Element& b);
bool operator==(const Circuit& a, const Circuit& b);
bool operator==(const DeviceFunction& a, const DeviceFunction& b);
bool operator==(const MutualCoupling& a, const MutualCoupling& b);

} // namespace mnadec
