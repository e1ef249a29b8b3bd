"""Command-line interface: subcommands, CSV outputs, exit codes."""

import numpy as np
import pytest

import mona.cli as cli
from mona.cli import run_cli
from mona.errors import SolverError

RLC = """
V src 1 0 SIN(10 50)
R r1 1 2 2
L l1 2 3 0.01
C c1 3 0 0.001
"""

VLOOP = """
V v1 1 0 SIN(10 50)
V v2 1 0 SIN(20 50)
R r1 1 0 1
"""


def read_csv(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    return header, rows


@pytest.fixture
def rlc_net(tmp_path):
    path = tmp_path / "rlc.net"
    path.write_text(RLC)
    return path


class TestCheck:
    def test_valid_netlist_passes(self, rlc_net, capsys):
        before = rlc_net.read_bytes()
        assert run_cli(["check", "--netlist", str(rlc_net)]) == 0
        out = capsys.readouterr().out
        assert "ok" in out
        assert rlc_net.read_bytes() == before  # check never mutates files

    def test_voltage_loop_fails_with_names(self, tmp_path, capsys):
        path = tmp_path / "loop.net"
        path.write_text(VLOOP)
        assert run_cli(["check", "--netlist", str(path)]) == 1
        out = capsys.readouterr().out
        assert "v1" in out and "v2" in out

    def test_parse_error_exit_code(self, tmp_path, capsys):
        path = tmp_path / "bad.net"
        path.write_text("R r1 1 0 ten\n")
        assert run_cli(["check", "--netlist", str(path)]) == 1
        assert "line 1" in capsys.readouterr().err

    def test_missing_file(self, tmp_path, capsys):
        assert run_cli(["check", "--netlist", str(tmp_path / "nope.net")]) == 1


class TestRun:
    def test_writes_trace_and_audit(self, rlc_net, tmp_path, capsys):
        out = tmp_path / "out"
        code = run_cli(["run", "--netlist", str(rlc_net), "--tau", "5e-4",
                        "--t-end", "0.02", "--out", str(out),
                        "--probes", "v_r=v(r1),u1=u(1)"])
        assert code == 0
        header, rows = read_csv(out / "trace.csv")
        assert header == ["t", "v_r", "u1", "H", "eps_H"]
        assert len(rows) == 40
        times = [float(r[0]) for r in rows]
        assert all(b > a for a, b in zip(times, times[1:]))
        header, rows = read_csv(out / "audit.csv")
        assert header[:3] == ["t", "d_tau_H", "resistive_loss"]
        assert header[-1] == "eps_H_rel"
        assert max(abs(float(r[6])) for r in rows) <= 1e-10

    def test_empty_probe_list_columns(self, rlc_net, tmp_path):
        out = tmp_path / "out"
        run_cli(["run", "--netlist", str(rlc_net), "--tau", "1e-3",
                 "--t-end", "0.01", "--out", str(out)])
        header, _rows = read_csv(out / "trace.csv")
        assert header == ["t", "H", "eps_H"]

    def test_csv_round_trip_is_exact(self, rlc_net, tmp_path):
        from mona.circuit import build_incidence
        from mona.coupling import assemble_coupled
        from mona.netlist import parse_netlist
        from mona.probes import compile_probe
        from mona.stepping import TimeGrid, run_transient

        out = tmp_path / "out"
        run_cli(["run", "--netlist", str(rlc_net), "--tau", "5e-4",
                 "--t-end", "0.02", "--out", str(out), "--probes", "psi3=psi(3)"])
        _header, rows = read_csv(out / "trace.csv")
        parsed = parse_netlist(RLC)
        graph = build_incidence(parsed.elements, parsed.n_nodes)
        system = assemble_coupled(graph)
        probes = {"psi3": compile_probe(system, "psi(3)", parsed.node_ids)}
        result = run_transient(system, TimeGrid(0.0, 0.02, 5e-4), probes=probes)
        series = result.probe("psi3")
        for row, expected in zip(rows, series):
            assert float(row[1]) == expected  # bit-exact after %.17g round trip

    def test_deterministic_outputs(self, rlc_net, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            run_cli(["run", "--netlist", str(rlc_net), "--tau", "1e-3",
                     "--t-end", "0.01", "--out", str(out)])
        assert (out1 / "trace.csv").read_bytes() == (out2 / "trace.csv").read_bytes()
        assert (out1 / "audit.csv").read_bytes() == (out2 / "audit.csv").read_bytes()

    def test_inconsistent_source_exit_code(self, tmp_path, capsys):
        path = tmp_path / "dc.net"
        path.write_text("V src 1 0 DC 5\nR r1 1 0 1\n")
        code = run_cli(["run", "--netlist", str(path), "--tau", "1e-3",
                        "--t-end", "0.01", "--out", str(tmp_path)])
        assert code == 1
        assert "vanish at t0" in capsys.readouterr().err

    def test_solver_failure_exit_code(self, rlc_net, tmp_path, monkeypatch, capsys):
        def boom(*args, **kwargs):
            raise SolverError("synthetic failure")

        monkeypatch.setattr(cli, "run_transient", boom)
        code = run_cli(["run", "--netlist", str(rlc_net), "--tau", "1e-3",
                        "--t-end", "0.01", "--out", str(tmp_path)])
        assert code == 2
        assert "solver failure" in capsys.readouterr().err


class TestConverge:
    def test_rlc_eoc_table(self, rlc_net, tmp_path, capsys):
        out = tmp_path / "out"
        code = run_cli(["converge", "--netlist", str(rlc_net), "--tau", "1e-3",
                        "--t-end", "0.04", "--halvings", "2", "--out", str(out),
                        "--probes", "p=psi(3)"])
        assert code == 0
        header, rows = read_csv(out / "eoc.csv")
        assert header == ["tau", "eps_tau", "eoc", "max_eps_H"]
        assert len(rows) == 3
        assert rows[0][2] == ""
        for row in rows[1:]:
            assert 1.9 <= float(row[2]) <= 2.1

    def test_demo_default_netlist(self, tmp_path, capsys):
        # no --netlist: the built-in rectifier is studied with the default
        # load-node state probe
        out = tmp_path / "out"
        code = run_cli(["converge", "--mesh-density", "0.025", "--tau", "2.5e-3",
                        "--t-end", "0.025", "--halvings", "1", "--out", str(out)])
        assert code == 0
        header, rows = read_csv(out / "eoc.csv")
        assert len(rows) == 2
        assert float(rows[1][2]) > 1.0


class TestDemoRectifier:
    def test_demo_outputs(self, tmp_path, capsys):
        out = tmp_path / "demo"
        code = run_cli(["demo-rectifier", "--mesh-density", "0.025",
                        "--tau", "1.25e-3", "--t-end", "0.025", "--out", str(out)])
        assert code == 0
        assert (out / "demo.net").exists()
        assert (out / "transformer.mesh").exists()
        header, rows = read_csv(out / "trace.csv")
        assert header[:3] == ["t", "v_src", "v_R"]
        v_r = np.array([float(r[2]) for r in rows])
        assert v_r.min() >= -1.0
        assert v_r.max() > 10.0
        # the dumped netlist and mesh reproduce the run
        from mona.fem import load_mesh
        mesh, _mats, winds = load_mesh(out / "transformer.mesh")
        assert mesh.n_triangles == 512
        assert len(winds) == 2

    def test_dumped_mesh_reproduces_builtin(self, tmp_path):
        demo_out = tmp_path / "demo"
        run_cli(["demo-rectifier", "--mesh-density", "0.025",
                 "--tau", "1.25e-3", "--t-end", "0.0125", "--out", str(demo_out)])
        args = ["--tau", "1.25e-3", "--t-end", "0.0125",
                "--probes", "v_R=v(load)", "--netlist", str(demo_out / "demo.net")]
        via_builtin = tmp_path / "builtin"
        via_file = tmp_path / "file"
        run_cli(["run", *args, "--mesh-density", "0.025", "--out", str(via_builtin)])
        run_cli(["run", *args, "--mesh", str(demo_out / "transformer.mesh"),
                 "--out", str(via_file)])
        assert (via_builtin / "trace.csv").read_bytes() == \
            (via_file / "trace.csv").read_bytes()


def test_write_csv_dispatch(tmp_path):
    from mona.circuit import build_incidence
    from mona.cli import CsvTrace, write_csv
    from mona.coupling import assemble_coupled
    from mona.netlist import parse_netlist
    from mona.stepping import TimeGrid, convergence_study, run_transient
    from mona.probes import compile_probe

    parsed = parse_netlist(RLC)
    graph = build_incidence(parsed.elements, parsed.n_nodes)
    system = assemble_coupled(graph)
    result = run_transient(system, TimeGrid(0.0, 0.01, 1e-3))
    write_csv(result, tmp_path / "a.csv", probe_names=[], system=system)
    assert (tmp_path / "a.csv").read_text().startswith("t,H,eps_H")

    rows = convergence_study(system, TimeGrid(0.0, 0.02, 1e-3), halvings=1,
                             probe=compile_probe(system, "psi(3)", parsed.node_ids))
    write_csv(rows, tmp_path / "b.csv")
    assert (tmp_path / "b.csv").read_text().startswith("tau,eps_tau")

    with pytest.raises(ValueError, match="strictly increasing"):
        CsvTrace(header=["t", "x"], rows=[[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(ValueError, match="width"):
        CsvTrace(header=["t", "x"], rows=[[1.0]])


def test_unknown_subcommand_exit_code():
    assert run_cli(["frobnicate"]) == 1


def test_log_level_from_environment(rlc_net, monkeypatch):
    import logging

    monkeypatch.setenv("MONA_LOG", "debug")
    run_cli(["check", "--netlist", str(rlc_net)])
    assert logging.getLogger("mona").level == logging.DEBUG
    monkeypatch.setenv("MONA_LOG", "error")
    run_cli(["check", "--netlist", str(rlc_net)])
    assert logging.getLogger("mona").level == logging.ERROR
