#include "mnadec/netlist.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace mnadec {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Token {
    std::string text;
    int column; // 1-based
};

std::vector<Token> tokenize(const std::string& line) {
    std::vector<Token> tokens;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i >= line.size()) break;
        std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        tokens.push_back({line.substr(start, i - start), static_cast<int>(start) + 1});
    }
    return tokens;
}

[[noreturn]] void fail(ParseError::Code code, int line, int col, const std::string& msg) {
    throw ParseError(code, line, col, msg);
}

double parse_number(const std::string& text, int line, int col) {
    const char* begin = text.c_str();
    char* end = nullptr;
    double value = std::strtod(begin, &end);
    if (end == begin) fail(ParseError::Code::Syntax, line, col, "expected a number, got '" + text + "'");
    std::string suffix = lower(std::string(end));
    double scale = 1.0;
    if (suffix.empty()) scale = 1.0;
    else if (suffix == "f") scale = 1e-15;
    else if (suffix == "p") scale = 1e-12;
    else if (suffix == "n") scale = 1e-9;
    else if (suffix == "u") scale = 1e-6;
    else if (suffix == "m") scale = 1e-3;
    else if (suffix == "k") scale = 1e3;
    else if (suffix == "meg") scale = 1e6;
    else if (suffix == "g") scale = 1e9;
    else if (suffix == "t") scale = 1e12;
    else fail(ParseError::Code::Syntax, line, col, "unknown unit suffix '" + suffix + "'");
    return value * scale;
}

/// Split "NAME(a,b,c)" into name and comma-separated arguments.
bool split_call(const std::string& token, std::string& name, std::vector<std::string>& args) {
    auto open = token.find('(');
    if (open == std::string::npos || token.back() != ')') return false;
    name = token.substr(0, open);
    args.clear();
    std::string inner = token.substr(open + 1, token.size() - open - 2);
    std::string current;
    for (char ch : inner) {
        if (ch == ',') {
            args.push_back(current);
            current.clear();
        } else {
            current += ch;
        }
    }
    if (!current.empty() || !args.empty() || !inner.empty()) args.push_back(current);
    return true;
}

struct PendingControl {
    double gain = 1.0;
    char ref = 'V'; // 'V' or 'I'
    std::vector<std::string> args;
    int line = 0;
    int column = 0;
};

struct PendingElement {
    std::string id;
    char type = 0; // R C L V I
    std::string node_from, node_to;
    std::vector<Token> body;
    int line = 0;
};

bool spd_check(const std::vector<std::vector<double>>& m) {
    // Small hand-rolled Cholesky; returns false when not positive definite.
    std::size_t n = m.size();
    std::vector<std::vector<double>> l(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double sum = m[i][j];
            for (std::size_t k = 0; k < j; ++k) sum -= l[i][k] * l[j][k];
            if (i == j) {
                if (sum <= 0.0) return false;
                l[i][i] = std::sqrt(sum);
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    return true;
}

} // namespace

const char* kind_name(ElementKind kind) {
    switch (kind) {
        case ElementKind::Capacitor: return "C";
        case ElementKind::Inductor: return "L";
        case ElementKind::Resistor: return "R";
        case ElementKind::VSourceIndependent: return "Vs";
        case ElementKind::VSourceControlled: return "Vc";
        case ElementKind::ISourceIndependent: return "Is";
        case ElementKind::ISourceControlled: return "Ic";
    }
    return "?";
}

const char* ParseError::code_name(Code code) {
    switch (code) {
        case Code::Syntax: return "SyntaxError";
        case Code::UnknownModel: return "UnknownModel";
        case Code::DanglingNode: return "DanglingNode";
        case Code::SelfLoop: return "SelfLoop";
        case Code::DisconnectedCircuit: return "DisconnectedCircuit";
        case Code::DuplicateElementId: return "DuplicateElementId";
    }
    return "ParseError";
}

std::string ParseError::format(Code code, int line, int column, const std::string& message) {
    std::ostringstream out;
    out << code_name(code) << " at line " << line << ", column " << column << ": " << message;
    return out.str();
}

int Circuit::find_element(const std::string& id) const {
    for (int i = 0; i < branch_count(); ++i)
        if (branches[i].id == id) return i;
    return -1;
}

int Circuit::find_node(const std::string& name) const {
    for (int i = 0; i < node_count(); ++i)
        if (nodes[i] == name) return i;
    return -1;
}

std::vector<int> Circuit::branches_of_kind(ElementKind kind) const {
    std::vector<int> out;
    for (int i = 0; i < branch_count(); ++i)
        if (branches[i].kind == kind) out.push_back(i);
    return out;
}

Circuit parse_netlist(const std::string& text, const std::string& name) {
    Circuit circuit;
    circuit.name = name;
    circuit.nodes.push_back("0"); // ground is always node 0

    auto node_index = [&](const std::string& node_name) {
        int idx = circuit.find_node(node_name);
        if (idx >= 0) return idx;
        circuit.nodes.push_back(node_name);
        return circuit.node_count() - 1;
    };

    std::vector<PendingElement> pending;
    std::vector<std::vector<PendingControl>> pending_controls;
    std::vector<std::array<Token, 4>> coupling_tokens;
    std::vector<int> coupling_lines;

    std::istringstream stream(text);
    std::string raw_line;
    int line_no = 0;
    while (std::getline(stream, raw_line)) {
        ++line_no;
        auto tokens = tokenize(raw_line);
        if (tokens.empty()) continue;
        if (tokens[0].text[0] == '*') continue; // comment
        if (lower(tokens[0].text) == ".end") continue;
        if (tokens[0].text[0] == '.')
            fail(ParseError::Code::Syntax, line_no, tokens[0].column,
                 "directive '" + tokens[0].text + "' is not supported");

        char type = static_cast<char>(std::toupper(static_cast<unsigned char>(tokens[0].text[0])));
        if (type == 'K') {
            if (tokens.size() != 4)
                fail(ParseError::Code::Syntax, line_no, tokens[0].column,
                     "coupling card needs 'K<id> L1 L2 k'");
            coupling_tokens.push_back({tokens[0], tokens[1], tokens[2], tokens[3]});
            coupling_lines.push_back(line_no);
            continue;
        }
        if (type != 'R' && type != 'C' && type != 'L' && type != 'V' && type != 'I')
            fail(ParseError::Code::Syntax, line_no, tokens[0].column,
                 "element id must start with R, C, L, V, I or K, got '" + tokens[0].text + "'");
        if (tokens.size() < 4)
            fail(ParseError::Code::Syntax, line_no, tokens[0].column,
                 "element line needs id, two nodes and a model");

        PendingElement pe;
        pe.id = tokens[0].text;
        pe.type = type;
        pe.node_from = tokens[1].text;
        pe.node_to = tokens[2].text;
        pe.body.assign(tokens.begin() + 3, tokens.end());
        pe.line = line_no;
        pending.push_back(std::move(pe));
    }

    // First pass: materialize elements and register nodes in first-appearance order.
    for (auto& pe : pending) {
        for (const auto& existing : circuit.branches)
            if (existing.id == pe.id)
                fail(ParseError::Code::DuplicateElementId, pe.line, 1,
                     "element id '" + pe.id + "' already defined");

        Element element;
        element.id = pe.id;
        element.from_node = node_index(pe.node_from);
        element.to_node = node_index(pe.node_to);
        if (element.from_node == element.to_node)
            fail(ParseError::Code::SelfLoop, pe.line, 1,
                 "element '" + pe.id + "' connects node '" + pe.node_from + "' to itself");

        // Split body into model tokens and an optional CTRL clause.
        std::vector<Token> model_tokens;
        std::vector<PendingControl> controls;
        bool in_ctrl = false;
        for (const auto& token : pe.body) {
            if (lower(token.text) == "ctrl") {
                if (in_ctrl)
                    fail(ParseError::Code::Syntax, pe.line, token.column, "duplicate CTRL clause");
                in_ctrl = true;
                continue;
            }
            if (!in_ctrl) {
                model_tokens.push_back(token);
                continue;
            }
            // gain*REF or REF
            PendingControl pc;
            pc.line = pe.line;
            pc.column = token.column;
            std::string ref_text = token.text;
            auto star = ref_text.find('*');
            if (star != std::string::npos) {
                pc.gain = parse_number(ref_text.substr(0, star), pe.line, token.column);
                ref_text = ref_text.substr(star + 1);
            }
            std::string call_name;
            std::vector<std::string> call_args;
            if (!split_call(ref_text, call_name, call_args) ||
                (lower(call_name) != "v" && lower(call_name) != "i"))
                fail(ParseError::Code::Syntax, pe.line, token.column,
                     "control reference must be V(...) or I(...), got '" + token.text + "'");
            pc.ref = lower(call_name) == "v" ? 'V' : 'I';
            pc.args = call_args;
            if (pc.ref == 'V' && (pc.args.empty() || pc.args.size() > 2))
                fail(ParseError::Code::Syntax, pe.line, token.column, "V() control needs 1 or 2 arguments");
            controls.push_back(std::move(pc));
        }
        if (in_ctrl && controls.empty())
            fail(ParseError::Code::Syntax, pe.line, 1, "CTRL clause without references");
        if (model_tokens.empty())
            fail(ParseError::Code::Syntax, pe.line, 1, "missing device model");

        // Interpret the model per element type.
        const Token& m0 = model_tokens[0];
        std::string call_name;
        std::vector<std::string> call_args;
        bool is_call = split_call(m0.text, call_name, call_args);
        std::string keyword = is_call ? lower(call_name) : lower(m0.text);

        auto need_args = [&](std::size_t lo, std::size_t hi) {
            if (call_args.size() < lo || call_args.size() > hi)
                fail(ParseError::Code::Syntax, pe.line, m0.column,
                     "model '" + call_name + "' has wrong argument count");
        };
        auto arg = [&](std::size_t i) { return parse_number(call_args[i], pe.line, m0.column); };

        switch (pe.type) {
            case 'C': {
                if (is_call || model_tokens.size() != 1)
                    fail(ParseError::Code::UnknownModel, pe.line, m0.column,
                         "capacitor model must be a single capacitance value");
                double c = parse_number(m0.text, pe.line, m0.column);
                if (c <= 0.0)
                    fail(ParseError::Code::Syntax, pe.line, m0.column, "capacitance must be positive");
                element.kind = ElementKind::Capacitor;
                element.behavior.model = LinearC{c};
                if (!controls.empty())
                    fail(ParseError::Code::Syntax, pe.line, m0.column, "capacitors cannot be controlled");
                break;
            }
            case 'L': {
                if (is_call || model_tokens.size() != 1)
                    fail(ParseError::Code::UnknownModel, pe.line, m0.column,
                         "inductor model must be a single inductance value");
                double l = parse_number(m0.text, pe.line, m0.column);
                if (l <= 0.0)
                    fail(ParseError::Code::Syntax, pe.line, m0.column, "inductance must be positive");
                element.kind = ElementKind::Inductor;
                element.behavior.model = LinearL{l};
                if (!controls.empty())
                    fail(ParseError::Code::Syntax, pe.line, m0.column, "inductors cannot be controlled");
                break;
            }
            case 'R': {
                element.kind = ElementKind::Resistor;
                if (!is_call) {
                    if (model_tokens.size() != 1)
                        fail(ParseError::Code::Syntax, pe.line, m0.column, "trailing tokens after resistance");
                    double r = parse_number(m0.text, pe.line, m0.column);
                    if (r <= 0.0)
                        fail(ParseError::Code::Syntax, pe.line, m0.column, "resistance must be positive");
                    element.behavior.model = LinearG{1.0 / r};
                    if (!controls.empty())
                        fail(ParseError::Code::Syntax, pe.line, m0.column,
                             "a linear resistor cannot be controlled; use SWITCH(...)");
                } else if (keyword == "diode") {
                    need_args(2, 2);
                    double i_sat = arg(0), v_t = arg(1);
                    if (i_sat <= 0.0 || v_t <= 0.0)
                        fail(ParseError::Code::Syntax, pe.line, m0.column, "diode parameters must be positive");
                    element.behavior.model = DiodeShockley{i_sat, v_t};
                    if (!controls.empty())
                        fail(ParseError::Code::Syntax, pe.line, m0.column,
                             "diodes use their own branch voltage and cannot be controlled");
                } else if (keyword == "switch") {
                    need_args(4, 4);
                    double g_on = arg(0), g_off = arg(1), v0 = arg(2), k = arg(3);
                    if (g_on <= 0.0 || g_off <= 0.0 || k <= 0.0)
                        fail(ParseError::Code::Syntax, pe.line, m0.column,
                             "switch conductances and steepness must be positive");
                    element.behavior.model = SmoothSwitch{g_on, g_off, v0, k};
                } else {
                    fail(ParseError::Code::UnknownModel, pe.line, m0.column,
                         "unknown resistor model '" + call_name + "'");
                }
                break;
            }
            case 'V':
            case 'I': {
                bool controlled = !controls.empty();
                if (keyword == "dc") {
                    if (model_tokens.size() != 2)
                        fail(ParseError::Code::Syntax, pe.line, m0.column, "DC needs one value");
                    element.behavior.model =
                        WaveformDC{parse_number(model_tokens[1].text, pe.line, model_tokens[1].column)};
                } else if (keyword == "sin") {
                    need_args(3, 4);
                    element.behavior.model =
                        WaveformSin{arg(0), arg(1), arg(2), call_args.size() == 4 ? arg(3) : 0.0};
                } else if (keyword == "table") {
                    if (call_args.size() < 4 || call_args.size() % 2 != 0)
                        fail(ParseError::Code::Syntax, pe.line, m0.column,
                             "TABLE needs an even number (>= 4) of arguments");
                    TableWaveform table;
                    for (std::size_t i = 0; i < call_args.size(); i += 2) {
                        table.times.push_back(arg(i));
                        table.values.push_back(arg(i + 1));
                    }
                    for (std::size_t i = 1; i < table.times.size(); ++i)
                        if (table.times[i] <= table.times[i - 1])
                            fail(ParseError::Code::Syntax, pe.line, m0.column,
                                 "TABLE times must be strictly increasing");
                    element.behavior.model = std::move(table);
                } else if (keyword == "poly") {
                    need_args(1, 16);
                    PolynomialSource poly;
                    for (std::size_t i = 0; i < call_args.size(); ++i) poly.coeffs.push_back(arg(i));
                    element.behavior.model = std::move(poly);
                    if (!controlled)
                        fail(ParseError::Code::Syntax, pe.line, m0.column,
                             "POLY sources need a CTRL clause");
                } else {
                    fail(ParseError::Code::UnknownModel, pe.line, m0.column,
                         "unknown source model '" + (is_call ? call_name : m0.text) + "'");
                }
                bool is_poly = std::holds_alternative<PolynomialSource>(element.behavior.model);
                if (controlled && !is_poly)
                    fail(ParseError::Code::Syntax, pe.line, m0.column,
                         "independent source waveforms cannot carry a CTRL clause");
                if (pe.type == 'V')
                    element.kind = controlled ? ElementKind::VSourceControlled
                                              : ElementKind::VSourceIndependent;
                else
                    element.kind = controlled ? ElementKind::ISourceControlled
                                              : ElementKind::ISourceIndependent;
                break;
            }
            default:
                fail(ParseError::Code::Syntax, pe.line, 1, "unreachable");
        }

        circuit.branches.push_back(std::move(element));
        pending_controls.push_back(std::move(controls));
    }

    // Second pass: resolve control references now that all nodes/elements exist.
    for (std::size_t b = 0; b < pending_controls.size(); ++b) {
        for (const auto& pc : pending_controls[b]) {
            ControlRef ref;
            ref.gain = pc.gain;
            if (pc.ref == 'V') {
                if (pc.args.size() == 1) {
                    int idx = circuit.find_element(pc.args[0]);
                    if (idx < 0)
                        fail(ParseError::Code::DanglingNode, pc.line, pc.column,
                             "control references unknown element '" + pc.args[0] + "'");
                    ref.kind = ControlRef::Kind::BranchVoltage;
                    ref.element_id = pc.args[0];
                } else if (pc.args.size() == 2) {
                    int a = circuit.find_node(pc.args[0]);
                    int bb = circuit.find_node(pc.args[1]);
                    if (a < 0)
                        fail(ParseError::Code::DanglingNode, pc.line, pc.column,
                             "control references unknown node '" + pc.args[0] + "'");
                    if (bb < 0)
                        fail(ParseError::Code::DanglingNode, pc.line, pc.column,
                             "control references unknown node '" + pc.args[1] + "'");
                    ref.kind = ControlRef::Kind::NodePairVoltage;
                    ref.node_a = a;
                    ref.node_b = bb;
                } else {
                    fail(ParseError::Code::Syntax, pc.line, pc.column, "V() needs 1 or 2 arguments");
                }
            } else {
                if (pc.args.size() != 1)
                    fail(ParseError::Code::Syntax, pc.line, pc.column, "I() needs 1 argument");
                int idx = circuit.find_element(pc.args[0]);
                if (idx < 0)
                    fail(ParseError::Code::DanglingNode, pc.line, pc.column,
                         "control references unknown element '" + pc.args[0] + "'");
                ElementKind kind = circuit.branches[idx].kind;
                if (kind == ElementKind::Inductor) {
                    ref.kind = ControlRef::Kind::InductorCurrent;
                } else if (kind == ElementKind::VSourceControlled) {
                    ref.kind = ControlRef::Kind::ControlledVSourceCurrent;
                } else {
                    fail(ParseError::Code::Syntax, pc.line, pc.column,
                         "I(" + pc.args[0] + "): only inductor and controlled-V-source currents can control elements");
                }
                ref.element_id = pc.args[0];
            }
            circuit.branches[b].controls.push_back(std::move(ref));
        }
    }

    // Coupling cards.
    for (std::size_t k = 0; k < coupling_tokens.size(); ++k) {
        const auto& toks = coupling_tokens[k];
        int line = coupling_lines[k];
        MutualCoupling coupling;
        coupling.id = toks[0].text;
        coupling.inductor_a = toks[1].text;
        coupling.inductor_b = toks[2].text;
        coupling.coefficient = parse_number(toks[3].text, line, toks[3].column);
        for (const auto& name : {coupling.inductor_a, coupling.inductor_b}) {
            int idx = circuit.find_element(name);
            if (idx < 0 || circuit.branches[idx].kind != ElementKind::Inductor)
                fail(ParseError::Code::DanglingNode, line, 1,
                     "coupling '" + coupling.id + "' references non-inductor '" + name + "'");
        }
        if (coupling.inductor_a == coupling.inductor_b)
            fail(ParseError::Code::Syntax, line, 1, "coupling needs two distinct inductors");
        if (std::abs(coupling.coefficient) >= 1.0)
            fail(ParseError::Code::Syntax, line, 1, "coupling coefficient must satisfy |k| < 1");
        circuit.couplings.push_back(std::move(coupling));
    }

    if (!circuit.couplings.empty()) {
        // Assemble the inductance matrix and require positive definiteness.
        auto inductors = circuit.branches_of_kind(ElementKind::Inductor);
        std::map<std::string, std::size_t> index;
        for (std::size_t i = 0; i < inductors.size(); ++i)
            index[circuit.branches[inductors[i]].id] = i;
        std::vector<std::vector<double>> l(inductors.size(),
                                           std::vector<double>(inductors.size(), 0.0));
        for (std::size_t i = 0; i < inductors.size(); ++i)
            l[i][i] = std::get<LinearL>(circuit.branches[inductors[i]].behavior.model).inductance;
        for (const auto& coupling : circuit.couplings) {
            std::size_t i = index[coupling.inductor_a];
            std::size_t j = index[coupling.inductor_b];
            double m = coupling.coefficient * std::sqrt(l[i][i] * l[j][j]);
            l[i][j] += m;
            l[j][i] += m;
        }
        if (!spd_check(l))
            fail(ParseError::Code::Syntax, 1, 1, "coupled inductance matrix is not positive definite");
    }

    if (circuit.branch_count() == 0)
        fail(ParseError::Code::Syntax, 1, 1, "netlist contains no elements");

    // Connectivity over the full graph (ground included).
    {
        std::vector<std::vector<int>> adjacency(circuit.node_count());
        for (const auto& element : circuit.branches) {
            adjacency[element.from_node].push_back(element.to_node);
            adjacency[element.to_node].push_back(element.from_node);
        }
        std::vector<bool> seen(circuit.node_count(), false);
        std::vector<int> queue = {0};
        seen[0] = true;
        while (!queue.empty()) {
            int node = queue.back();
            queue.pop_back();
            for (int next : adjacency[node])
                if (!seen[next]) {
                    seen[next] = true;
                    queue.push_back(next);
                }
        }
        for (int node = 0; node < circuit.node_count(); ++node)
            if (!seen[node])
                fail(ParseError::Code::DisconnectedCircuit, 1, 1,
                     "node '" + circuit.nodes[node] + "' is not connected to ground");
    }

    return circuit;
}

namespace {

std::string model_to_string(const Element& element) {
    const DeviceModel& model = element.behavior.model;
    if (auto* c = std::get_if<LinearC>(&model)) return format_double(c->capacitance);
    if (auto* l = std::get_if<LinearL>(&model)) return format_double(l->inductance);
    if (auto* g = std::get_if<LinearG>(&model)) return format_double(1.0 / g->conductance);
    if (auto* d = std::get_if<DiodeShockley>(&model))
        return "DIODE(" + format_double(d->saturation_current) + "," +
               format_double(d->thermal_voltage) + ")";
    if (auto* s = std::get_if<SmoothSwitch>(&model))
        return "SWITCH(" + format_double(s->g_on) + "," + format_double(s->g_off) + "," +
               format_double(s->v_threshold) + "," + format_double(s->steepness) + ")";
    if (auto* p = std::get_if<PolynomialSource>(&model)) {
        std::string out = "POLY(";
        for (std::size_t i = 0; i < p->coeffs.size(); ++i)
            out += (i ? "," : "") + format_double(p->coeffs[i]);
        return out + ")";
    }
    if (auto* dc = std::get_if<WaveformDC>(&model)) return "DC " + format_double(dc->value);
    if (auto* sin = std::get_if<WaveformSin>(&model))
        return "SIN(" + format_double(sin->offset) + "," + format_double(sin->amplitude) + "," +
               format_double(sin->frequency) + "," + format_double(sin->phase) + ")";
    if (auto* table = std::get_if<TableWaveform>(&model)) {
        std::string out = "TABLE(";
        for (std::size_t i = 0; i < table->times.size(); ++i) {
            if (i) out += ",";
            out += format_double(table->times[i]) + "," + format_double(table->values[i]);
        }
        return out + ")";
    }
    return "?";
}

} // namespace

std::string serialize_netlist(const Circuit& circuit) {
    std::ostringstream out;
    out << "* " << circuit.name << "\n";
    for (const auto& element : circuit.branches) {
        out << element.id << " " << circuit.nodes[element.from_node] << " "
            << circuit.nodes[element.to_node] << " " << model_to_string(element);
        if (!element.controls.empty()) {
            out << " CTRL";
            for (const auto& ref : element.controls) {
                out << " ";
                if (ref.gain != 1.0) out << format_double(ref.gain) << "*";
                switch (ref.kind) {
                    case ControlRef::Kind::BranchVoltage:
                        out << "V(" << ref.element_id << ")";
                        break;
                    case ControlRef::Kind::NodePairVoltage:
                        out << "V(" << circuit.nodes[ref.node_a] << "," << circuit.nodes[ref.node_b]
                            << ")";
                        break;
                    case ControlRef::Kind::InductorCurrent:
                    case ControlRef::Kind::ControlledVSourceCurrent:
                        out << "I(" << ref.element_id << ")";
                        break;
                }
            }
        }
        out << "\n";
    }
    for (const auto& coupling : circuit.couplings)
        out << coupling.id << " " << coupling.inductor_a << " " << coupling.inductor_b << " "
            << format_double(coupling.coefficient) << "\n";
    return out.str();
}

namespace {

int kind_rank(ElementKind kind) {
    switch (kind) {
        case ElementKind::Capacitor: return 0;
        case ElementKind::Inductor: return 1;
        case ElementKind::Resistor: return 2;
        case ElementKind::VSourceIndependent: return 3;
        case ElementKind::VSourceControlled: return 4;
        case ElementKind::ISourceIndependent: return 5;
        case ElementKind::ISourceControlled: return 6;
    }
    return 7;
}

} // namespace

std::vector<int> kind_sorted_incidence_order(const Circuit& circuit) {
    std::vector<int> order(circuit.branch_count());
    for (int i = 0; i < circuit.branch_count(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return kind_rank(circuit.branches[a].kind) < kind_rank(circuit.branches[b].kind);
    });
    return order;
}

std::vector<int> kind_sorted_incidence_order(
    const Circuit& circuit, const std::vector<std::pair<std::string, int>>& ic_types) {
    auto type_of = [&](const std::string& id) {
        for (const auto& [name, type] : ic_types)
            if (name == id) return type;
        return 4;
    };
    std::vector<int> order = kind_sorted_incidence_order(circuit);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        int ra = kind_rank(circuit.branches[a].kind);
        int rb = kind_rank(circuit.branches[b].kind);
        if (ra != rb) return ra < rb;
        if (circuit.branches[a].kind != ElementKind::ISourceControlled) return false;
        return type_of(circuit.branches[a].id) < type_of(circuit.branches[b].id);
    });
    return order;
}

Circuit with_numeric_node_order(const Circuit& circuit) {
    std::vector<std::pair<long long, int>> keyed;
    for (int i = 0; i < circuit.node_count(); ++i) {
        const std::string& name = circuit.nodes[i];
        char* end = nullptr;
        long long value = std::strtoll(name.c_str(), &end, 10);
        if (end == name.c_str() || *end != '\0' || value < 0)
            throw ParseError(ParseError::Code::Syntax, 1, 1,
                             "paper-example ordering requires numeric node names, got '" + name + "'");
        keyed.emplace_back(value, i);
    }
    std::sort(keyed.begin(), keyed.end());
    std::vector<int> new_index(circuit.node_count());
    Circuit out = circuit;
    out.nodes.clear();
    for (std::size_t pos = 0; pos < keyed.size(); ++pos) {
        new_index[keyed[pos].second] = static_cast<int>(pos);
        out.nodes.push_back(circuit.nodes[keyed[pos].second]);
    }
    for (auto& element : out.branches) {
        element.from_node = new_index[element.from_node];
        element.to_node = new_index[element.to_node];
        for (auto& ref : element.controls) {
            if (ref.kind == ControlRef::Kind::NodePairVoltage) {
                ref.node_a = new_index[ref.node_a];
                ref.node_b = new_index[ref.node_b];
            }
        }
    }
    return out;
}

bool operator==(const ControlRef& a, const ControlRef& b) {
    return a.kind == b.kind && a.element_id == b.element_id && a.node_a == b.node_a &&
           a.node_b == b.node_b && a.gain == b.gain;
}

bool operator==(const DeviceFunction& a, const DeviceFunction& b) {
    if (a.model.index() != b.model.index()) return false;
    return std::visit(
        [&](const auto& lhs) {
            using T = std::decay_t<decltype(lhs)>;
            const auto& rhs = std::get<T>(b.model);
            if constexpr (std::is_same_v<T, LinearC>) return lhs.capacitance == rhs.capacitance;
            else if constexpr (std::is_same_v<T, LinearL>) return lhs.inductance == rhs.inductance;
            else if constexpr (std::is_same_v<T, LinearG>) return lhs.conductance == rhs.conductance;
            else if constexpr (std::is_same_v<T, DiodeShockley>)
                return lhs.saturation_current == rhs.saturation_current &&
                       lhs.thermal_voltage == rhs.thermal_voltage;
            else if constexpr (std::is_same_v<T, SmoothSwitch>)
                return lhs.g_on == rhs.g_on && lhs.g_off == rhs.g_off &&
                       lhs.v_threshold == rhs.v_threshold && lhs.steepness == rhs.steepness;
            else if constexpr (std::is_same_v<T, PolynomialSource>) return lhs.coeffs == rhs.coeffs;
            else if constexpr (std::is_same_v<T, WaveformDC>) return lhs.value == rhs.value;
            else if constexpr (std::is_same_v<T, WaveformSin>)
                return lhs.offset == rhs.offset && lhs.amplitude == rhs.amplitude &&
                       lhs.frequency == rhs.frequency && lhs.phase == rhs.phase;
            else
                return lhs.times == std::get<TableWaveform>(b.model).times &&
                       lhs.values == std::get<TableWaveform>(b.model).values;
        },
        a.model);
}

bool operator==(const Element& a, const Element& b) {
    return a.id == b.id && a.kind == b.kind && a.from_node == b.from_node &&
           a.to_node == b.to_node && a.behavior == b.behavior && a.controls == b.controls;
}

bool operator==(const MutualCoupling& a, const MutualCoupling& b) {
    return a.id == b.id && a.inductor_a == b.inductor_a && a.inductor_b == b.inductor_b &&
           a.coefficient == b.coefficient;
}

bool operator==(const Circuit& a, const Circuit& b) {
    return a.name == b.name && a.nodes == b.nodes && a.branches == b.branches &&
           a.couplings == b.couplings;
}

// --- device function evaluation ---

double DeviceFunction::waveform_value(double t) const {
    if (auto* dc = std::get_if<WaveformDC>(&model)) return dc->value;
    if (auto* s = std::get_if<WaveformSin>(&model))
        return s->offset + s->amplitude * std::sin(2.0 * M_PI * s->frequency * t + s->phase);
    if (auto* table = std::get_if<TableWaveform>(&model)) {
        const auto& ts = table->times;
        const auto& vs = table->values;
        if (t <= ts.front()) return vs.front();
        if (t >= ts.back()) return vs.back();
        auto it = std::upper_bound(ts.begin(), ts.end(), t);
        std::size_t hi = static_cast<std::size_t>(it - ts.begin());
        std::size_t lo = hi - 1;
        double w = (t - ts[lo]) / (ts[hi] - ts[lo]);
        return vs[lo] + w * (vs[hi] - vs[lo]);
    }
    throw DimensionMismatch("waveform_value on a non-waveform model");
}

double DeviceFunction::waveform_derivative(double t) const {
    if (std::holds_alternative<WaveformDC>(model)) return 0.0;
    if (auto* s = std::get_if<WaveformSin>(&model)) {
        double w = 2.0 * M_PI * s->frequency;
        return s->amplitude * w * std::cos(w * t + s->phase);
    }
    if (auto* table = std::get_if<TableWaveform>(&model)) {
        const auto& ts = table->times;
        const auto& vs = table->values;
        if (t <= ts.front() || t >= ts.back()) return 0.0;
        auto it = std::upper_bound(ts.begin(), ts.end(), t);
        std::size_t hi = static_cast<std::size_t>(it - ts.begin());
        std::size_t lo = hi - 1;
        return (vs[hi] - vs[lo]) / (ts[hi] - ts[lo]);
    }
    throw DimensionMismatch("waveform_derivative on a non-waveform model");
}

double DeviceFunction::source_value(double s) const {
    if (auto* poly = std::get_if<PolynomialSource>(&model)) {
        double acc = 0.0;
        for (auto it = poly->coeffs.rbegin(); it != poly->coeffs.rend(); ++it) acc = acc * s + *it;
        return acc;
    }
    throw DimensionMismatch("source_value on a non-POLY model");
}

double DeviceFunction::source_derivative(double s) const {
    if (auto* poly = std::get_if<PolynomialSource>(&model)) {
        double acc = 0.0;
        for (std::size_t k = poly->coeffs.size(); k-- > 1;)
            acc = acc * s + static_cast<double>(k) * poly->coeffs[k];
        return acc;
    }
    throw DimensionMismatch("source_derivative on a non-POLY model");
}

namespace {

double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }

double switch_conductance(const SmoothSwitch& sw, double s) {
    return sw.g_off + (sw.g_on - sw.g_off) * logistic(sw.steepness * (s - sw.v_threshold));
}

double switch_conductance_ds(const SmoothSwitch& sw, double s) {
    double sig = logistic(sw.steepness * (s - sw.v_threshold));
    return (sw.g_on - sw.g_off) * sw.steepness * sig * (1.0 - sig);
}

} // namespace

double DeviceFunction::resistor_current(double v, double s, bool has_control) const {
    if (auto* g = std::get_if<LinearG>(&model)) return g->conductance * v;
    if (auto* d = std::get_if<DiodeShockley>(&model))
        return d->saturation_current * std::expm1(v / d->thermal_voltage);
    if (auto* sw = std::get_if<SmoothSwitch>(&model))
        return switch_conductance(*sw, has_control ? s : v) * v;
    throw DimensionMismatch("resistor_current on a non-resistor model");
}

double DeviceFunction::resistor_dv(double v, double s, bool has_control) const {
    if (auto* g = std::get_if<LinearG>(&model)) return g->conductance;
    if (auto* d = std::get_if<DiodeShockley>(&model))
        return d->saturation_current / d->thermal_voltage * std::exp(v / d->thermal_voltage);
    if (auto* sw = std::get_if<SmoothSwitch>(&model)) {
        if (has_control) return switch_conductance(*sw, s);
        return switch_conductance(*sw, v) + switch_conductance_ds(*sw, v) * v;
    }
    throw DimensionMismatch("resistor_dv on a non-resistor model");
}

double DeviceFunction::resistor_ds(double v, double s, bool has_control) const {
    if (auto* sw = std::get_if<SmoothSwitch>(&model))
        return has_control ? switch_conductance_ds(*sw, s) * v : 0.0;
    return 0.0;
}

} // namespace mnadec
