#include <catch2/catch_amalgamated.hpp>

#include "testutil.hpp"

using namespace mnadec;
using testutil::load_netlist;

TEST_CASE("buck netlist parses into the worked-example shape") {
    Circuit circuit = load_netlist("buck.net");
    REQUIRE(circuit.node_count() == 4); // ground + 3
    REQUIRE(circuit.branch_count() == 6);
    REQUIRE(circuit.nodes[0] == "0");
    REQUIRE(circuit.nodes[1] == "1");

    auto order = kind_sorted_incidence_order(circuit);
    std::vector<std::string> ids;
    for (int branch : order) ids.push_back(circuit.branches[branch].id);
    REQUIRE(ids == std::vector<std::string>{"C1", "L1", "RgS", "RgD", "RL", "Vs"});

    const Element& sw = circuit.branches[circuit.find_element("RgS")];
    REQUIRE(sw.kind == ElementKind::Resistor);
    REQUIRE(sw.controls.size() == 1);
    REQUIRE(sw.controls[0].kind == ControlRef::Kind::BranchVoltage);
    REQUIRE(sw.controls[0].element_id == "RL");
}

TEST_CASE("minimal well-posed circuit") {
    Circuit circuit = parse_netlist("V1 1 0 DC 1.0\nR1 1 0 1.0\n");
    REQUIRE(circuit.node_count() == 2);
    REQUIRE(circuit.branch_count() == 2);
}

TEST_CASE("self-loop is rejected") {
    try {
        parse_netlist("R1 1 1 1.0\nR2 1 0 1.0\n");
        FAIL("expected SelfLoop");
    } catch (const ParseError& e) {
        REQUIRE(e.code() == ParseError::Code::SelfLoop);
    }
}

TEST_CASE("parse errors carry their taxonomy") {
    auto expect_code = [](const std::string& text, ParseError::Code code) {
        try {
            parse_netlist(text);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            REQUIRE(e.code() == code);
        }
    };
    expect_code("R1 1 0 1.0\nR1 0 1 2.0\n", ParseError::Code::DuplicateElementId);
    expect_code("V1 1 0 GAUSS(1,2)\n", ParseError::Code::UnknownModel);
    expect_code("R1 1 0 BLOB(1)\n", ParseError::Code::UnknownModel);
    expect_code("V1 1 0 DC 1\nR1 1 0 SWITCH(1,1e-6,0,1) CTRL V(9,0)\n",
                ParseError::Code::DanglingNode);
    expect_code("V1 1 0 DC 1\nR1 1 0 SWITCH(1,1e-6,0,1) CTRL V(Rmissing)\n",
                ParseError::Code::DanglingNode);
    expect_code("R1 1 0 1.0\nR2 2 3 1.0\n", ParseError::Code::DisconnectedCircuit);
    expect_code("R1 1 0 -2.0\n", ParseError::Code::Syntax);
    // Currents through independent voltage sources may not control anything.
    expect_code("V1 1 0 DC 1\nI2 1 0 POLY(0,1) CTRL I(V1)\n", ParseError::Code::Syntax);
}

TEST_CASE("parse-serialize-parse round-trips to an identical circuit") {
    for (const char* name :
         {"buck.net", "buck_linear.net", "buck_mosfet.net", "opamp.net", "smps.net", "rc.net"}) {
        Circuit circuit = load_netlist(name);
        Circuit again = parse_netlist(serialize_netlist(circuit), circuit.name);
        INFO(name);
        REQUIRE(circuit == again);
    }
}

TEST_CASE("random circuits survive the serialize/parse round trip") {
    std::mt19937 rng(42);
    for (int i = 0; i < 25; ++i) {
        testutil::RandomCircuitOptions opt;
        opt.with_controlled = i % 2 == 0;
        Circuit generated = testutil::random_circuit(rng, opt);
        // Node numbering is a parse-side convention (first appearance), so the
        // round-trip property starts from a parsed circuit.
        Circuit circuit = parse_netlist(serialize_netlist(generated), "random");
        Circuit again = parse_netlist(serialize_netlist(circuit), "random");
        REQUIRE(circuit == again);
    }
}

TEST_CASE("branch order is a pure function of file content") {
    std::string text = "V1 1 0 DC 1\nC3 2 0 1e-6\nR2 1 2 10\nL9 2 3 1e-3\nR7 3 0 5\n";
    Circuit a = parse_netlist(text);
    Circuit b = parse_netlist(text);
    REQUIRE(a == b);
    REQUIRE(kind_sorted_incidence_order(a) == kind_sorted_incidence_order(b));
}

TEST_CASE("one element of each kind lands in canonical kind order") {
    // Deliberately shuffled in the file; Ic last even though it appears first.
    std::string text =
        "Ictl a b POLY(0,1) CTRL V(C4)\n"
        "Isrc b 0 DC 1e-3\n"
        "Vc1 c 0 POLY(0,2) CTRL V(C4)\n"
        "R5 a c 100\n"
        "V2 a 0 DC 1\n"
        "L8 b c 1e-3\n"
        "C4 a b 1e-6\n";
    Circuit circuit = parse_netlist(text);
    std::vector<std::pair<std::string, int>> types = {{"Ictl", 2}};
    auto order = kind_sorted_incidence_order(circuit, types);
    std::vector<std::string> ids;
    for (int branch : order) ids.push_back(circuit.branches[branch].id);
    REQUIRE(ids == std::vector<std::string>{"C4", "L8", "R5", "V2", "Vc1", "Isrc", "Ictl"});
}

TEST_CASE("engineering suffixes and models") {
    Circuit circuit =
        parse_netlist("V1 1 0 SIN(0,5,1k)\nR1 1 2 2.2k\nC1 2 0 10u\nL1 2 0 1meg\n");
    REQUIRE(std::get<LinearG>(circuit.branches[1].behavior.model).conductance ==
            Catch::Approx(1.0 / 2200.0));
    REQUIRE(std::get<LinearC>(circuit.branches[2].behavior.model).capacitance ==
            Catch::Approx(1e-5));
    REQUIRE(std::get<LinearL>(circuit.branches[3].behavior.model).inductance ==
            Catch::Approx(1e6));
    const auto& sin = std::get<WaveformSin>(circuit.branches[0].behavior.model);
    REQUIRE(sin.frequency == Catch::Approx(1000.0));
}

TEST_CASE("waveforms expose values and time derivatives") {
    DeviceFunction dc{WaveformDC{2.5}};
    REQUIRE(dc.waveform_value(3.0) == 2.5);
    REQUIRE(dc.waveform_derivative(3.0) == 0.0);

    DeviceFunction sine{WaveformSin{1.0, 2.0, 50.0, 0.25}};
    double t = 0.0123;
    double fd = (sine.waveform_value(t + 1e-7) - sine.waveform_value(t - 1e-7)) / 2e-7;
    REQUIRE(sine.waveform_derivative(t) == Catch::Approx(fd).epsilon(1e-5));

    DeviceFunction table{TableWaveform{{0.0, 1.0, 2.0}, {0.0, 4.0, 4.0}}};
    REQUIRE(table.waveform_value(0.5) == Catch::Approx(2.0));
    REQUIRE(table.waveform_derivative(0.5) == Catch::Approx(4.0));
    REQUIRE(table.waveform_value(5.0) == 4.0);
    REQUIRE(table.waveform_derivative(5.0) == 0.0);
}

TEST_CASE("coupled inductors accept |k| < 1 and reject non-SPD matrices") {
    Circuit ok = parse_netlist("V1 1 0 DC 1\nL1 1 2 1e-3\nL2 2 0 1e-3\nK1 L1 L2 0.9\n");
    REQUIRE(ok.couplings.size() == 1);
    try {
        parse_netlist("V1 1 0 DC 1\nL1 1 2 1e-3\nL2 2 0 1e-3\nK1 L1 L2 1.5\n");
        FAIL("expected rejection");
    } catch (const ParseError&) {
    }
}
