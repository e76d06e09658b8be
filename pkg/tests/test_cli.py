import math

import numpy as np
import pytest

from jcpulse import cli, compiler
from jcpulse.cli import main, parse_target
from jcpulse.model import format_params


def test_parse_target_named():
    assert parse_target("noon(3)") == compiler.noon_target(3)
    assert parse_target("noon:2") == compiler.noon_target(2)
    assert parse_target("max-entangled(3)") == compiler.max_entangled_target(3)


def test_parse_target_inline():
    t = parse_target("inline:{(0,0):0.6,(1,1):0.8}")
    assert t == {(0, 0): 0.6 + 0j, (1, 1): 0.8 + 0j}
    t2 = parse_target("inline:{(2,0):0.6+0.8j}")
    assert t2[(2, 0)] == pytest.approx(0.6 + 0.8j)


def test_parse_target_rejects_garbage():
    with pytest.raises(ValueError):
        parse_target("bell(2)")
    with pytest.raises(ValueError):
        parse_target("inline:oops")


def test_synthesize_and_run_ideal(tmp_path, capsys):
    rc = main(["synthesize", "--target", "noon(3)", "--out", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "12 non-trivial" in out
    assert (tmp_path / "program.txt").exists()
    rc = main(["run-ideal", "--program", str(tmp_path / "program.txt"),
               "--out", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "fidelity vs target: 1.0000" in out


def test_synthesize_max_entangled(tmp_path, capsys):
    rc = main(["synthesize", "--target", "max-entangled(3)", "--out", str(tmp_path)])
    assert rc == 0
    assert "18 non-trivial" in capsys.readouterr().out


def test_synthesize_trivial_inline(tmp_path, capsys):
    rc = main(["synthesize", "--target", "inline:{(0,0):1}", "--out", str(tmp_path)])
    assert rc == 0
    assert "0 non-trivial" in capsys.readouterr().out


def test_params_file_flag(tmp_path, capsys):
    params = cli.default_params(cli.DECOHERENCE_PRESET)
    pfile = tmp_path / "params.txt"
    pfile.write_text(format_params(params))
    rc = main(["synthesize", "--target", "noon(1)", "--params", str(pfile),
               "--out", str(tmp_path)])
    assert rc == 0


def test_validation_exit_code(tmp_path):
    rc = main(["synthesize", "--target", "inline:{(0,0):0.5}",
               "--out", str(tmp_path)])  # not normalized
    assert rc == cli.EXIT_VALIDATION
    rc = main(["run-ideal", "--program", str(tmp_path / "missing.txt"),
               "--out", str(tmp_path)])
    assert rc == cli.EXIT_VALIDATION


def test_numerical_exit_code(monkeypatch, tmp_path):
    def boom(args):
        raise RuntimeError("integrator blew up")

    monkeypatch.setattr(cli, "cmd_synthesize", boom)
    parser = cli.build_parser()
    args = parser.parse_args(["synthesize", "--target", "noon(1)"])
    args.func = boom
    monkeypatch.setattr(parser.__class__, "parse_args",
                        lambda self, argv=None: args)
    monkeypatch.setattr(cli, "build_parser", lambda: parser)
    assert main(["synthesize", "--target", "noon(1)"]) == cli.EXIT_NUMERICAL


def test_fidelity_sweep_csv(tmp_path):
    rc = main(["fidelity-sweep", "--sweep", "n", "--n-max", "3",
               "--out", str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "sweep_n.csv").read_text().splitlines()
    assert lines[0].startswith("# jcpulse csv v1")
    assert lines[1].startswith("# params")
    assert lines[2].split(",")[0] == "n"
    assert len(lines) == 6


def test_csv_outputs_deterministic(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        assert main(["trajectories", "--target", "noon(1)", "--n-traj", "32",
                     "--seed", "7", "--out", str(out)]) == 0
    assert (out1 / "trajectories.csv").read_bytes() == \
        (out2 / "trajectories.csv").read_bytes()
    # results.txt differs only in wall time
    keep = lambda p: [l for l in (p / "results.txt").read_text().splitlines()
                      if not l.startswith("wall_time")]
    assert keep(out1) == keep(out2)


def test_lindblad_command(tmp_path, capsys):
    rc = main(["lindblad", "--target", "noon(2)", "--out", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "fidelity" in out
    val = float((tmp_path / "results.txt").read_text().splitlines()[0].split("=")[1])
    assert 0.9 < val < 1.0


def test_reproduce_table1(tmp_path):
    rc = main(["reproduce", "table1", "--out", str(tmp_path)])
    assert rc == 0
    lines = [l for l in (tmp_path / "table1.csv").read_text().splitlines()
             if not l.startswith("#")]
    header, rows = lines[0].split(","), [l.split(",") for l in lines[1:]]
    assert header[:3] == ["step", "kind", "theta_rad"]
    assert len(rows) == 24  # two populated states after each of 12 steps
    pops = [float(r[-1]) for r in rows]
    assert all(abs(p - 0.5) < 1e-10 for p in pops)
    assert (tmp_path / "table1_program.txt").exists()


def test_reproduce_fig10_ordering(tmp_path):
    rc = main(["reproduce", "fig10", "--out", str(tmp_path)])
    assert rc == 0
    lines = [l for l in (tmp_path / "fig10.csv").read_text().splitlines()
             if not l.startswith("#")]
    rows = [list(map(float, l.split(","))) for l in lines[1:]]
    assert len(rows) == 20
    for tq, m1c, m2c, m1l, m2l in rows:
        assert m1c > m2c and m1l > m2l


def test_simulate_timeseries(tmp_path):
    rc = main(["simulate", "--target", "noon(1)", "--out", str(tmp_path),
               "--sample-dt-ns", "0.05", "--window-ns", "2.0"])
    assert rc == 0
    assert (tmp_path / "timeseries.csv").exists()
    assert (tmp_path / "schedule.csv").exists()
    assert (tmp_path / "manifest.txt").exists()
    lines = [l for l in (tmp_path / "timeseries.csv").read_text().splitlines()
             if not l.startswith("#")]
    assert lines[0] == "t_ns,q_expect,na_expect,nb_expect,norm_or_trace"
    last = list(map(float, lines[-1].split(",")))
    assert last[4] == pytest.approx(1.0, abs=1e-6)  # norm column
