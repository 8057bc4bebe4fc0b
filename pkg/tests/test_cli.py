import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from paramtrace.cli import (
    CLIError,
    RunSpec,
    SweepSpec,
    main,
    parse_budget_points,
    parse_sigma_points,
    read_config_file,
    run,
    sweep,
)

FAST = ["--m", "64", "--sigma", "0.1", "--n-omega", "4", "--n-psi", "2", "--nt", "20"]


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def identity_mtx(tmp_path):
    path = tmp_path / "eye.mtx"
    lines = ["%%MatrixMarket matrix coordinate real symmetric", "10 10 10"]
    lines += [f"{i} {i} 1.0" for i in range(1, 11)]
    path.write_text("\n".join(lines) + "\n")
    return path


def test_identity_density_concentrated_at_one(identity_mtx, tmp_path):
    out = tmp_path / "d.csv"
    assert main(["--matrix", str(identity_mtx), *FAST, "--nt", "21", "--out", str(out)]) == 0
    rows = read_csv(out)
    t = np.array([float(r["t"]) for r in rows])
    d = np.array([float(r["density"]) for r in rows])
    assert t[np.argmax(d)] == pytest.approx(1.0, abs=1e-12)
    # sigma is 1e-9 in original units here; 5 sigma out the kernel is ~4e-6 of its peak
    assert np.all(d[np.abs(t - 1.0) > 5e-9] < 1e-5 * d.max())


def test_invalid_path_exits_nonzero(tmp_path, capsys):
    assert main(["--matrix", str(tmp_path / "missing.mtx")]) != 0
    err = capsys.readouterr().err.strip()
    assert err.startswith("paramtrace: error:") and "\n" not in err


def test_module_entry_point_exit_status(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "paramtrace", "--matrix", str(tmp_path / "missing.mtx")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode != 0
    assert len(proc.stderr.strip().splitlines()) == 1


def test_malformed_matrix_exits_nonzero(tmp_path):
    bad = tmp_path / "bad.mtx"
    bad.write_text("%%MatrixMarket matrix coordinate real general\n1 1 1\n1 1 1\n")
    assert main(["--matrix", str(bad)]) != 0


def test_run_outputs_csv_and_report(tmp_path):
    out, rep = tmp_path / "d.csv", tmp_path / "r.json"
    assert main(["--reference", *FAST, "--out", str(out), "--report", str(rep)]) == 0
    text = out.read_text().splitlines()
    assert text[0] == "t,density" and len(text) == 21
    report = json.loads(rep.read_text())
    assert set(report) >= {"l1_error", "matvec_count", "wall_time_seconds", "config"}
    assert report["matvec_count"] == (2 * 64 + 1) * 6
    assert report["l1_error"] > 0
    assert report["config"]["n_omega"] == 4
    # grid in original units spans the estimated interval
    t = [float(line.split(",")[0]) for line in text[1:]]
    assert t[0] == pytest.approx(report["interval"][0]) and t[-1] == pytest.approx(report["interval"][1])


def test_csv_round_trips_exactly(tmp_path):
    out = tmp_path / "d.csv"
    spec = RunSpec(m=32, sigma=0.2, n_omega=3, n_psi=2, nt=7, out=str(out))
    run(spec)
    again = run(RunSpec(**{**vars(spec), "out": str(tmp_path / "e.csv")}))
    assert again["matvec_count"] == 65 * 5
    assert out.read_bytes() == (tmp_path / "e.csv").read_bytes()
    vals = [float(r["density"]) for r in read_csv(out)]
    assert all(repr(v) == repr(float(f"{v:.17g}")) for v in vals)


def test_clamp_nonneg(tmp_path, identity_mtx):
    out_raw, out_clamped = tmp_path / "a.csv", tmp_path / "b.csv"
    # plain interpolant at low degree dips below zero away from the eigenvalue
    args = ["--matrix", str(identity_mtx), "--interval=-1,3", "--m", "16", "--sigma", "0.05"]
    args += ["--n-omega", "0", "--n-psi", "4", "--nt", "50", "--plain"]
    assert main([*args, "--out", str(out_raw)]) == 0
    assert main([*args, "--clamp-nonneg", "--out", str(out_clamped)]) == 0
    raw = np.array([float(r["density"]) for r in read_csv(out_raw)])
    clamped = np.array([float(r["density"]) for r in read_csv(out_clamped)])
    assert raw.min() < 0
    np.testing.assert_array_equal(clamped, np.maximum(raw, 0))


def test_explicit_interval(tmp_path):
    out = tmp_path / "d.csv"
    assert main([*FAST, "--interval=-2,46", "--out", str(out)]) == 0
    t = [float(r["t"]) for r in read_csv(out)]
    assert t[0] == -2.0 and t[-1] == 46.0
    assert main([*FAST, "--interval", "5,1"]) != 0


def test_argument_errors_are_one_line(capsys):
    assert main(["--n-omega", "many"]) != 0
    err = capsys.readouterr().err.strip()
    assert err.startswith("paramtrace: error:") and "\n" not in err


def test_degree_auto_and_odd_rounding(caplog):
    assert RunSpec(m=None, sigma=0.005).degree() == 3200
    assert RunSpec(m=None, sigma=0.003).degree() == 5334
    assert RunSpec(m=31).degree() == 32


def test_config_file_flags_win(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nm = 32\nsigma = 0.2\nn-omega = 3\nn_psi = 1\nnt = 5\nreference = true\n")
    rep = tmp_path / "r.json"
    assert main(["--config", str(cfg), "--n-omega", "2", "--out", str(tmp_path / "d.csv"), "--report", str(rep)]) == 0
    report = json.loads(rep.read_text())
    assert report["config"]["n_omega"] == 2 and report["config"]["m"] == 32
    assert report["l1_error"] is not None


def test_config_file_errors(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("bogus = 1\n")
    assert main(["--config", str(cfg)]) != 0
    cfg.write_text("no equals sign\n")
    with pytest.raises(CLIError):
        read_config_file(cfg)
    assert main(["--config", str(tmp_path / "none.cfg")]) != 0


def test_parse_sweep_points():
    assert parse_budget_points("16,8:8", "psi") == [(0, 16), (8, 8)]
    assert parse_budget_points("10", "even") == [(5, 5)]
    assert parse_budget_points("10", "omega") == [(10, 0)]
    np.testing.assert_allclose(parse_sigma_points("0.001:0.1:3"), [0.001, 0.01, 0.1])
    assert parse_sigma_points("0.1,0.2") == [0.1, 0.2]


def test_sweep_spec_validation():
    with pytest.raises(CLIError):
        SweepSpec(RunSpec(), "budget", [], 1)
    with pytest.raises(CLIError):
        SweepSpec(RunSpec(), "budget", [(1, 1)], 0)
    with pytest.raises(CLIError):
        SweepSpec(RunSpec(), "depth", [1], 1)


def test_budget_sweep_rows_and_seeds(tmp_path):
    out = tmp_path / "s.csv"
    assert main([*FAST, "--seed", "5", "--sweep-budget", "4,8", "--split", "psi", "--reps", "3", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert list(rows[0]) == ["axis_value", "repetition", "seed", "l1_error", "matvec_count"]
    assert len(rows) == 6
    assert [int(r["seed"]) for r in rows] == [5, 6, 7, 5, 6, 7]
    assert [int(r["matvec_count"]) for r in rows] == [129 * 4] * 3 + [129 * 8] * 3


def test_sigma_sweep_uses_auto_degree(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["--n-omega", "4", "--n-psi", "4", "--nt", "10", "--sweep-sigma", "0.4,0.2", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert [float(r["axis_value"]) for r in rows] == [0.4, 0.2]
    assert [int(r["matvec_count"]) for r in rows] == [(2 * 40 + 1) * 8, (2 * 80 + 1) * 8]


def test_single_point_sweep_equals_run(tmp_path):
    base = RunSpec(m=32, sigma=0.2, n_omega=3, n_psi=2, nt=9, seed=4, reference=True, out=str(tmp_path / "d.csv"))
    rows = sweep(SweepSpec(RunSpec(**{**vars(base), "out": str(tmp_path / "s.csv")}), "budget", [(3, 2)], 1))
    assert rows[0]["l1_error"] == run(base)["l1_error"]


def test_budget_sweep_monte_carlo_rate():
    # Girard-Hutchinson only: the mean error halves per quadrupling of n_psi
    base = RunSpec(m=64, sigma=0.1, n_omega=0, nt=50, reference=True, out=None)
    rows = sweep(SweepSpec(base, "budget", [(0, 16), (0, 64)], reps=30))
    err = {v: np.mean([r["l1_error"] for r in rows if r["axis_value"] == v]) for v in (16, 64)}
    assert 0.35 <= err[64] / err[16] <= 0.70


@pytest.mark.slow
def test_sigma_endpoints_ordering():
    # small sigma: Nystrom alone wins; large sigma: Hutchinson beats Nystrom.
    # the split budget's worst ratio to the best method is the smallest.
    budgets = [(80, 0), (40, 40), (0, 80)]
    means = {}
    for sigma, reps in ((0.002, 1), (0.3, 3)):
        rows = sweep(SweepSpec(RunSpec(m=None, sigma=sigma, nt=100, out=None), "budget", budgets, reps))
        means[sigma] = [np.mean([r["l1_error"] for r in rows[i * reps : (i + 1) * reps]]) for i in range(3)]
    small, large = means[0.002], means[0.3]
    assert small[0] < small[1] < small[2]
    assert large[2] < large[0] and large[1] < large[0]
    worst = [max(small[i] / min(small), large[i] / min(large)) for i in range(3)]
    assert np.argmin(worst) == 1
