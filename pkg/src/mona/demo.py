"""Built-in full-wave rectifier demo.

A 60 Hz, 160 V sine drives the primary of the built-in transformer; the
secondary feeds a four-diode bridge into a 10 ohm load whose minus rail is
ground.  Node 4 is the rectified output.  The transformer geometry is the
parameterized core of :class:`mona.fem.TransformerParams`; turn counts give
an open-circuit secondary amplitude of about 20 V, so the output peaks near
20 V minus two diode drops.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .coupling import CoupledSystem, assemble_coupled
from .circuit import build_incidence, validate_topology
from .fem import TransformerParams, build_field_model, generate_transformer_mesh
from .netlist import ParsedNetlist, parse_netlist
from .probes import compile_probe

__all__ = ["DEMO_NETLIST", "DEMO_MESH_DENSITY", "build_demo_system", "demo_probes"]

DEMO_NETLIST = """\
# full-wave rectifier: source, transformer, diode bridge, resistive load
V src 1 0 SIN(160 60)
M xfmr 1 0 2 3 FIELD=builtin
D d1 2 4 IS=1e-14 VT=0.025 RP=1e12
D d2 3 4 IS=1e-14 VT=0.025 RP=1e12
D d3 0 2 IS=1e-14 VT=0.025 RP=1e12
D d4 0 3 IS=1e-14 VT=0.025 RP=1e12
R load 4 0 10
"""

DEMO_MESH_DENSITY = 0.0125  # 32x32 cells, 2048 triangles


@dataclass
class DemoBundle:
    system: CoupledSystem
    parsed: ParsedNetlist
    mesh: object
    materials: object
    windings: list = field(default_factory=list)


def build_demo_system(mesh_density: float = DEMO_MESH_DENSITY,
                      params: TransformerParams | None = None) -> DemoBundle:
    """Assemble the rectifier system on the built-in transformer."""
    params = params or TransformerParams()
    parsed = parse_netlist(DEMO_NETLIST)
    graph = build_incidence(parsed.elements, parsed.n_nodes)
    report = validate_topology(graph)
    if not report.passed:
        raise AssertionError(f"demo netlist failed validation:\n{report}")
    mesh, materials, windings = generate_transformer_mesh(params, mesh_density)
    fieldmodel = build_field_model(mesh, materials, windings)
    system = assemble_coupled(graph, fieldmodel)
    return DemoBundle(system=system, parsed=parsed, mesh=mesh,
                      materials=materials, windings=windings)


def demo_probes(bundle: DemoBundle) -> dict:
    """Default trace probes: source voltage, rectified output, load-node state."""
    system, node_ids = bundle.system, bundle.parsed.node_ids
    return {
        "v_src": compile_probe(system, "v(src)", node_ids),
        "v_R": compile_probe(system, "v(load)", node_ids),
        "psi_load": compile_probe(system, "psi(4)", node_ids),
    }
