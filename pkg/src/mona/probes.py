"""Named scalar probes evaluated after every accepted time step.

Probe expressions:

* ``H``           total stored energy at the step's end time
* ``psi(node)``   magnetic node potential (a state, end of step)
* ``u(node)``     electric node potential (a rate, interval midpoint)
* ``v(elem)``     branch voltage of a named element (rate, midpoint)
* ``i(elem)``     branch current of a named element

Voltages and currents are difference quotients of the step, i.e.
second-order accurate at the midpoint of the step they belong to; states are
exact grid-point values, which also makes them the right choice for
step-halving error studies.
"""

from __future__ import annotations

import re

from .circuit import resistive_branch_current
from .coupling import CoupledSystem

__all__ = ["compile_probe", "parse_probe_spec", "default_state_probe"]

_CALL = re.compile(r"^\s*(psi|u|v|i)\s*\(\s*([^()\s]+)\s*\)\s*$", re.IGNORECASE)


def _node_index(system: CoupledSystem, token: str, node_ids: dict | None) -> int:
    if node_ids is not None and token in node_ids:
        node = node_ids[token]
    else:
        try:
            node = int(token)
        except ValueError:
            raise ValueError(f"unknown node {token!r}") from None
    if not 0 <= node <= system.graph.n_nodes:
        raise ValueError(f"node id {node} out of range")
    return node


def compile_probe(system: CoupledSystem, expr: str, node_ids: dict | None = None):
    """Turn a probe expression into a callable over step contexts."""
    text = expr.strip()
    if text.upper() == "H":
        return lambda ctx: ctx.system.energy(ctx.y_next)

    match = _CALL.match(text)
    if not match:
        raise ValueError(f"cannot parse probe expression {expr!r}")
    fn, arg = match.group(1).lower(), match.group(2)
    layout = system.layout

    if fn in ("psi", "u"):
        node = _node_index(system, arg, node_ids)
        if node == 0:
            return lambda ctx: 0.0
        if fn == "psi":
            off = layout.block_slice("psi").start + node - 1
            return lambda ctx: float(ctx.y_next[off])
        off = layout.block_slice("psi").start + node - 1
        return lambda ctx: float(ctx.rate[off])

    kind, col = system.graph.find_branch(arg)
    g = system.graph

    if fn == "v":
        if kind == "D":
            column = g.a_r[:, g.n_linear_resistive + col]
        else:
            mats = {"R": g.a_r, "C": g.a_c, "L": g.a_l, "V": g.a_v, "I": g.a_i, "M": g.a_m}
            column = mats[kind][:, col]
        psi_slice = layout.block_slice("psi")

        def probe_v(ctx):
            return float(column @ ctx.rate[psi_slice])
        return probe_v

    if fn == "i":
        psi_slice = layout.block_slice("psi")
        if kind in ("R", "D"):
            res_col = col if kind == "R" else g.n_linear_resistive + col

            def probe_i(ctx):
                v_all = g.a_r.T @ ctx.rate[psi_slice]
                i_all, _ = resistive_branch_current(g, v_all)
                return float(i_all[res_col])
            return probe_i
        if kind == "L":
            def probe_i(ctx):
                psi = ctx.y_next[psi_slice]
                return float(g.inv_inductance[col] * (g.a_l[:, col] @ psi))
            return probe_i
        if kind in ("C", "V", "M"):
            block = {"C": "q_c", "V": "q_v", "M": "q_m"}[kind]
            off = layout.block_slice(block).start + col
            return lambda ctx: float(ctx.rate[off])
        if kind == "I":
            wave = g.current_waveforms[col]
            return lambda ctx: float(wave(ctx.t_mid))
    raise ValueError(f"probe {fn!r} is not defined for element kind {kind!r}")


def parse_probe_spec(system: CoupledSystem, spec: str, node_ids: dict | None = None) -> dict:
    """Parse ``name=expr,name=expr`` into a probe dict; names must be unique."""
    probes = {}
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise ValueError(f"probe {item!r} must look like name=expression")
        name, expr = (s.strip() for s in item.split("=", 1))
        if name in probes:
            raise ValueError(f"duplicate probe name {name!r}")
        probes[name] = compile_probe(system, expr, node_ids)
    return probes


def default_state_probe(system: CoupledSystem):
    """State probe for convergence studies: the magnetic potential of the
    node adjacent to the first linear resistor (the load), falling back to
    the first state component."""
    pairs = system.graph.branch_pairs.get("R")
    if pairs is not None and len(pairs):
        plus, minus = pairs[0]
        node = plus if plus != 0 else minus
        off = system.layout.block_slice("psi").start + node - 1
        return lambda ctx: float(ctx.y_next[off])
    if system.layout.size == 0:
        raise ValueError("system has no state to probe")
    return lambda ctx: float(ctx.y_next[0])
