"""Shared builders: small circuits and a coarse-mesh rectifier system."""

import numpy as np
import pytest

from mona.circuit import build_incidence
from mona.coupling import assemble_coupled
from mona.demo import DEMO_NETLIST
from mona.fem import TransformerParams, build_field_model, generate_transformer_mesh
from mona.netlist import parse_netlist

RLC_NETLIST = """
V src 1 0 SIN(10 50)
R r1 1 2 2
L l1 2 3 0.01
C c1 3 0 0.001
"""

LINEAR_COUPLED_NETLIST = """
V src 1 0 SIN(160 60)
M xfmr 1 0 2 0 FIELD=builtin
R load 2 0 10
"""

COARSE_MESH_DENSITY = 0.025  # 512 triangles, 225 interior dofs


def build_from_netlist(text, field=None):
    parsed = parse_netlist(text)
    graph = build_incidence(parsed.elements, parsed.n_nodes)
    system = assemble_coupled(graph, field)
    return parsed, graph, system


@pytest.fixture(scope="session")
def coarse_field():
    mesh, materials, windings = generate_transformer_mesh(
        TransformerParams(), COARSE_MESH_DENSITY)
    return build_field_model(mesh, materials, windings)


@pytest.fixture(scope="session")
def rlc():
    return build_from_netlist(RLC_NETLIST)


@pytest.fixture(scope="session")
def rectifier(coarse_field):
    return build_from_netlist(DEMO_NETLIST, field=coarse_field)


@pytest.fixture(scope="session")
def linear_coupled(coarse_field):
    return build_from_netlist(LINEAR_COUPLED_NETLIST, field=coarse_field)


def random_state(system, rng, amplitude=0.1):
    lay = system.layout
    return amplitude * rng.standard_normal(lay.size)


def dense_incidence(pairs, n_nodes):
    """Independent incidence stamping used by the dense oracles."""
    mat = np.zeros((n_nodes, len(pairs)))
    for k, (plus, minus) in enumerate(pairs):
        if plus:
            mat[plus - 1, k] = 1.0
        if minus:
            mat[minus - 1, k] = -1.0
    return mat
