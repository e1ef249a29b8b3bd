"""Command-line front end.

Subcommands: ``run`` (transient with CSV traces), ``converge`` (step-halving
error table), ``demo-rectifier`` (built-in benchmark), and ``check``
(parse + topology validation only).  Exit codes: 0 success, 1 parse or
validation failure, 2 solver failure.  The environment variable ``MONA_LOG``
(error | info | debug) sets diagnostic verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import demo as demo_mod
from .circuit import build_incidence, validate_topology
from .coupling import assemble_coupled
from .errors import MonaError, NetlistError, SolverError, TopologyError
from .fem import TransformerParams, build_field_model, generate_transformer_mesh, load_mesh
from .netlist import parse_netlist
from .probes import default_state_probe, parse_probe_spec
from .stepping import NewtonConfig, TimeGrid, convergence_study, run_transient

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_SOLVER = 2


@dataclass
class Scenario:
    """One simulation job as assembled from the command line."""

    netlist_path: Path | None
    mesh_path: Path | None
    mesh_density: float | None
    grid: "TimeGrid"
    probe_spec: str | None
    newton: "NewtonConfig"
    out_dir: Path

    def __post_init__(self):
        if self.netlist_path is not None and not Path(self.netlist_path).exists():
            raise FileNotFoundError(f"netlist not found: {self.netlist_path}")
        if self.mesh_path is not None and not Path(self.mesh_path).exists():
            raise FileNotFoundError(f"mesh not found: {self.mesh_path}")


def _fmt(x: float) -> str:
    return f"{x:.17g}"


@dataclass
class CsvTrace:
    """A rectangular table bound for disk; the first column is time."""

    header: list
    rows: list

    def __post_init__(self):
        width = len(self.header)
        if any(len(row) != width for row in self.rows):
            raise ValueError("CSV rows must match the header width")
        if self.header and self.header[0] == "t":
            times = [row[0] for row in self.rows]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ValueError("time column must be strictly increasing")

    def write(self, path) -> None:
        """Serialize with 17 significant digits (binary64 round-trip exact)."""
        path = Path(path)
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(",".join(self.header) + "\n")
                for row in self.rows:
                    fh.write(",".join(_fmt(v) if isinstance(v, float) else str(v)
                                      for v in row) + "\n")
        except OSError as exc:
            raise MonaError(f"cannot write {path}: {exc}") from exc


def write_csv(table, path, probe_names=None, system=None) -> None:
    """Write a transient result or a convergence table to a CSV file."""
    from .stepping import TransientResult

    if isinstance(table, CsvTrace):
        table.write(path)
    elif isinstance(table, TransientResult):
        trace_table(table, probe_names or [], system).write(path)
    else:
        eoc_table(table).write(path)


def trace_table(result, probe_names, system) -> CsvTrace:
    header = ["t", *probe_names, "H", "eps_H"]
    energies = result.energies(system)
    rows = []
    for k, rec in enumerate(result.records):
        row = [rec.time]
        row += [float(result.probes[name][k]) for name in probe_names]
        row += [float(energies[k]), rec.audit.residual]
        rows.append(row)
    return CsvTrace(header=header, rows=rows)


def audit_table(result) -> CsvTrace:
    header = ["t", "d_tau_H", "resistive_loss", "eddy_loss",
              "source_power_I", "source_power_V", "eps_H", "eps_H_rel"]
    peak = result.peak_supplied_power()
    denom = peak if peak > 0 else 1.0
    rows = []
    for rec in result.records:
        a = rec.audit
        rows.append([rec.time, a.dh_dt, a.resistive_loss, a.eddy_loss,
                     a.source_power_i, a.source_power_v, a.residual,
                     a.residual / denom])
    return CsvTrace(header=header, rows=rows)


def eoc_table(rows) -> CsvTrace:
    header = ["tau", "eps_tau", "eoc", "max_eps_H"]
    table = [[r.tau, r.error, "" if r.order is None else _fmt(r.order),
              r.max_balance_residual] for r in rows]
    return CsvTrace(header=header, rows=table)


def scenario_from_args(args) -> Scenario:
    return Scenario(
        netlist_path=Path(args.netlist) if getattr(args, "netlist", None) else None,
        mesh_path=Path(args.mesh) if getattr(args, "mesh", None) else None,
        mesh_density=getattr(args, "mesh_density", None),
        grid=TimeGrid(t0=0.0, t_end=args.t_end, tau=args.tau),
        probe_spec=getattr(args, "probes", None),
        newton=NewtonConfig(tol=args.newton_tol),
        out_dir=Path(args.out),
    )


def _assemble_scenario(scenario: Scenario):
    """Parse the netlist, resolve the field reference, assemble the system."""
    parsed = parse_netlist(scenario.netlist_path.read_text(encoding="utf-8"))
    graph = build_incidence(parsed.elements, parsed.n_nodes)
    report = validate_topology(graph)
    for issue in report.warnings:
        log.info("topology: %s", issue.message)
    if not report.passed:
        raise TopologyError(str(report))

    refs = {el.field_ref for el in parsed.elements if el.kind == "M"}
    fieldmodel = None
    if refs:
        if len(refs) > 1:
            raise NetlistError(f"all devices must share one FIELD reference, got {sorted(refs)}")
        ref = refs.pop()
        if scenario.mesh_path is not None:
            mesh, materials, windings = load_mesh(scenario.mesh_path)
        elif ref.lower() == "builtin":
            density = scenario.mesh_density or demo_mod.DEMO_MESH_DENSITY
            mesh, materials, windings = generate_transformer_mesh(TransformerParams(), density)
        else:
            mesh, materials, windings = load_mesh(scenario.netlist_path.parent / ref)
        fieldmodel = build_field_model(mesh, materials, windings)

    system = assemble_coupled(graph, fieldmodel)
    log.info("assembled system: %s", system.dimension_report())
    return parsed, system


def cmd_run(args) -> int:
    scenario = scenario_from_args(args)
    parsed, system = _assemble_scenario(scenario)
    probes = parse_probe_spec(system, scenario.probe_spec, parsed.node_ids) \
        if scenario.probe_spec else {}
    result = run_transient(system, scenario.grid, probes=probes, config=scenario.newton)
    out = scenario.out_dir
    out.mkdir(parents=True, exist_ok=True)
    trace_table(result, list(probes), system).write(out / "trace.csv")
    audit_table(result).write(out / "audit.csv")
    print(f"wrote {out / 'trace.csv'} and {out / 'audit.csv'} "
          f"({result.grid.n_steps} steps, max |eps_H| = "
          f"{result.max_balance_residual():.3e} W)")
    return EXIT_OK


def cmd_converge(args) -> int:
    scenario = scenario_from_args(args)
    if scenario.netlist_path is not None:
        parsed, system = _assemble_scenario(scenario)
    else:
        bundle = demo_mod.build_demo_system(
            mesh_density=scenario.mesh_density or demo_mod.DEMO_MESH_DENSITY)
        parsed, system = bundle.parsed, bundle.system
    if scenario.probe_spec:
        probes = parse_probe_spec(system, scenario.probe_spec, parsed.node_ids)
        probe = next(iter(probes.values()))
    else:
        probe = default_state_probe(system)
    rows = convergence_study(system, scenario.grid, args.halvings, probe,
                             config=scenario.newton)
    out = scenario.out_dir
    out.mkdir(parents=True, exist_ok=True)
    eoc_table(rows).write(out / "eoc.csv")
    for r in rows:
        eoc = "--" if r.order is None else f"{r.order:.2f}"
        print(f"tau={r.tau:<12.6g} eps_tau={r.error:<12.6g} eoc={eoc:<6} "
              f"max|eps_H|={r.max_balance_residual:.3e}")
    print(f"wrote {out / 'eoc.csv'}")
    return EXIT_OK


def cmd_demo(args) -> int:
    from .fem import save_mesh

    bundle = demo_mod.build_demo_system(
        mesh_density=args.mesh_density or demo_mod.DEMO_MESH_DENSITY)
    system = bundle.system
    grid = TimeGrid(t0=0.0, t_end=args.t_end, tau=args.tau)
    probes = demo_mod.demo_probes(bundle)
    config = NewtonConfig(tol=args.newton_tol)
    result = run_transient(system, grid, probes=probes, config=config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "demo.net").write_text(demo_mod.DEMO_NETLIST, encoding="utf-8")
    save_mesh(out / "transformer.mesh", bundle.mesh, bundle.materials, bundle.windings)
    trace_table(result, list(probes), system).write(out / "trace.csv")
    audit_table(result).write(out / "audit.csv")
    v_r = result.probe("v_R")
    print(f"rectifier demo: {grid.n_steps} steps, v_R peak {np.max(v_r):.2f} V, "
          f"max |eps_H| = {result.max_balance_residual():.3e} W")
    print(f"wrote demo.net, transformer.mesh, trace.csv, audit.csv in {out}")
    return EXIT_OK


def cmd_check(args) -> int:
    parsed = parse_netlist(Path(args.netlist).read_text(encoding="utf-8"))
    graph = build_incidence(parsed.elements, parsed.n_nodes)
    report = validate_topology(graph)
    print(report)
    if not report.passed:
        return EXIT_INVALID
    print(f"{len(parsed.elements)} elements, {parsed.n_nodes} nodes: ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mona",
        description="Field-circuit transient simulation with a certified power balance")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, netlist_required=True):
        if netlist_required:
            p.add_argument("--netlist", required=True, help="netlist file")
        else:
            p.add_argument("--netlist", help="netlist file (default: built-in demo)")
        p.add_argument("--mesh", help="mesh file overriding the netlist FIELD reference")
        p.add_argument("--mesh-density", type=float, default=None,
                       help="cell size for the built-in transformer [m]")
        p.add_argument("--tau", type=float, default=6.25e-4, help="time step [s]")
        p.add_argument("--t-end", type=float, default=0.05, dest="t_end",
                       help="end time [s]")
        p.add_argument("--probes", help="comma-separated name=expr probe list")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--newton-tol", type=float, default=1e-12, dest="newton_tol")

    p_run = sub.add_parser("run", help="run a transient and write trace/audit CSVs")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_conv = sub.add_parser("converge", help="step-halving convergence study")
    common(p_conv, netlist_required=False)
    p_conv.add_argument("--halvings", type=int, default=3)
    p_conv.set_defaults(func=cmd_converge)

    p_demo = sub.add_parser("demo-rectifier", help="run the built-in rectifier benchmark")
    p_demo.add_argument("--mesh-density", type=float, default=None)
    p_demo.add_argument("--tau", type=float, default=6.25e-4)
    p_demo.add_argument("--t-end", type=float, default=0.05, dest="t_end")
    p_demo.add_argument("--out", default=".")
    p_demo.add_argument("--newton-tol", type=float, default=1e-12, dest="newton_tol")
    p_demo.set_defaults(func=cmd_demo)

    p_check = sub.add_parser("check", help="parse and validate a netlist")
    p_check.add_argument("--netlist", required=True)
    p_check.set_defaults(func=cmd_check)
    return parser


def _configure_logging() -> None:
    level = os.environ.get("MONA_LOG", "error").lower()
    numeric = {"error": logging.ERROR, "info": logging.INFO,
               "debug": logging.DEBUG}.get(level, logging.ERROR)
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("mona").setLevel(numeric)


def run_cli(argv) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (MonaError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))
