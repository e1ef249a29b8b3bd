"""Netlist grammar, error reporting, and round-trip serialization."""

import math

import pytest

from mona.errors import NetlistError
from mona.netlist import parse_netlist, serialize_netlist


class TestGrammar:
    def test_resistor_stored_as_conductance(self):
        parsed = parse_netlist("R load 2 0 10")
        el = parsed.elements[0]
        assert el.kind == "R"
        assert el.value == pytest.approx(0.1)

    def test_sinusoidal_source(self):
        parsed = parse_netlist("V src 1 0 SIN(160 60)")
        w = parsed.elements[0].waveform
        assert w.kind == "sin"
        assert (w.amplitude, w.frequency, w.phase) == (160.0, 60.0, 0.0)
        assert w(1.0 / 240.0) == pytest.approx(160.0 * math.sin(math.pi / 2))

    def test_sin_with_phase_and_spaces(self):
        parsed = parse_netlist("i inj a 0 sin( 2.5  100  0.75 )")
        w = parsed.elements[0].waveform
        assert (w.amplitude, w.frequency, w.phase) == (2.5, 100.0, 0.75)

    def test_dc_source(self):
        parsed = parse_netlist("I bias 1 0 DC 1e-3")
        assert parsed.elements[0].waveform(123.0) == 1e-3

    def test_diode_parameters(self):
        parsed = parse_netlist("D d1 3 4 IS=1e-14 VT=0.025 RP=1e12")
        d = parsed.elements[0].diode
        assert d.saturation_current == 1e-14
        assert d.thermal_voltage == 0.025
        assert d.parallel_resistance == 1e12

    def test_device_with_two_windings(self):
        parsed = parse_netlist("M xfmr 1 0 2 3 FIELD=builtin")
        el = parsed.elements[0]
        assert el.nodes == (1, 0, 2, 3)
        assert el.field_ref == "builtin"

    def test_node_allocation_order(self):
        parsed = parse_netlist("R a n1 n2 1\nR b n2 gnd 1\nR c n3 0 1")
        assert parsed.node_ids == {"n1": 1, "n2": 2, "n3": 3}
        assert parsed.n_nodes == 3

    def test_ground_aliases(self):
        parsed = parse_netlist("R a 1 GND 1\nR b 1 0 1")
        assert all(el.nodes[1] == 0 for el in parsed.elements)

    def test_comments_and_case(self):
        parsed = parse_netlist("""
# comment line
r LOAD 1 0 10  # trailing comment

v SRC 1 0 sin(1 50)
""")
        assert [el.kind for el in parsed.elements] == ["R", "V"]


class TestErrors:
    @pytest.mark.parametrize("line, pattern, lineno", [
        ("R r1 1 0 ten", "not a number", 1),
        ("R r1 1 0 -5", "positive", 1),
        ("Q q1 1 0 5", "unknown element kind", 1),
        ("R r1 1 0 1\nR r1 2 0 1", "duplicate", 2),
        ("V v1 1 0 160", "SIN", 1),
        ("D d1 1 0 IS=1e-14 VT=0.025", "missing parameters", 1),
        ("D d1 1 0 IS=1e-14 VT=0.025 XX=1", "unknown diode parameter", 1),
        ("M m1 1 0 2 FIELD=x", "two terminals per winding", 1),
        ("M m1 1 0 2 0", "FIELD", 1),
        ("R r1 1 1 5", "itself", 1),
        ("", "no elements", None),
    ])
    def test_messages_carry_line_numbers(self, line, pattern, lineno):
        with pytest.raises(NetlistError, match=pattern) as excinfo:
            parse_netlist(line)
        if lineno is not None:
            assert f"line {lineno}" in str(excinfo.value)


class TestRoundTrip:
    REFERENCE = """
V src 1 0 SIN(160 60 0.1)
I inj 2 0 DC 0.25
R load 2 0 10
C filt 2 0 4.7e-6
L choke 1 2 0.003
D d1 2 3 IS=1e-14 VT=0.025 RP=1e12
M xfmr 1 0 3 0 FIELD=core.mesh
"""

    def test_serialize_parse_identity(self):
        first = parse_netlist(self.REFERENCE)
        text = serialize_netlist(first)
        second = parse_netlist(text)
        assert serialize_netlist(second) == text
        assert second.node_ids == first.node_ids
        for a, b in zip(first.elements, second.elements):
            assert a == b
