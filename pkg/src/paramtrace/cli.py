"""Command-line experiment runner.

Single runs write the estimated density as ``t,density`` CSV (original
spectral units) and, optionally, a JSON report. Sweeps over the sketch
budget or the smoothing width write one CSV row per repetition::

    paramtrace --matrix hamiltonian --nc 1 --m 2000 --sigma 0.005 \\
        --n-omega 80 --n-psi 0 --nt 100 --reference --out density.csv \\
        --report report.json

    paramtrace --sweep-budget 16,32,64 --split psi --reps 10 --out sweep.csv

``--sigma`` is the smoothing width on the transformed axis, where the
spectral interval is mapped onto ``[-1, 1]``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import re
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .estimators import DensityEstimate, EstimatorConfig, chebyshev_nystrom_pp
from .operator import (
    SpectralInterval,
    SymmetricOperator,
    build_hamiltonian,
    estimate_spectral_interval,
    load_matrix_market,
)
from .reference import MAX_DENSE_DIM, dense_spectrum, exact_density, l1_error

log = logging.getLogger("paramtrace")

INTERVAL_MARGIN = 0.01


class CLIError(Exception):
    pass


@dataclass
class RunSpec:
    matrix: str = "hamiltonian"
    nc: int = 1
    boundary: str = "periodic"
    m: int | None = None
    n_omega: int = 80
    n_psi: int = 0
    sigma: float = 0.005
    seed: int = 0
    pinv_threshold: float = 1e-5
    zero_threshold: float = 1e-5
    guard: bool = True
    nonneg: bool = True
    nt: int = 100
    interval: str = "auto"
    reference: bool = False
    out: str | None = None
    report: str | None = None
    clamp_nonneg: bool = False

    def degree(self) -> int:
        """Requested degree, ``ceil(16 / sigma)`` when unset, rounded up to even."""
        m = self.m if self.m is not None else math.ceil(16.0 / self.sigma)
        if m % 2:
            log.warning("degree %d is odd; using %d", m, m + 1)
            m += 1
        return m


@dataclass
class SweepSpec:
    base: RunSpec
    axis: str
    points: list = field(default_factory=list)
    reps: int = 1

    def __post_init__(self):
        if self.axis not in ("budget", "sigma"):
            raise CLIError(f"unknown sweep axis {self.axis!r}")
        if not self.points:
            raise CLIError("a sweep needs at least one point")
        if self.reps < 1:
            raise CLIError("--reps must be at least 1")


_HAMILTONIAN_RE = re.compile(r"^hamiltonian(?:\((\d+)\))?$")


def load_operator(spec: RunSpec) -> SymmetricOperator:
    match = _HAMILTONIAN_RE.match(spec.matrix)
    if match:
        n_c = int(match.group(1)) if match.group(1) else spec.nc
        return build_hamiltonian(n_c, boundary=spec.boundary)
    path = Path(spec.matrix)
    if not path.is_file():
        raise CLIError(f"matrix file not found: {path}")
    return load_matrix_market(path)


def resolve_interval(A: SymmetricOperator, text: str) -> SpectralInterval:
    if text == "auto":
        return estimate_spectral_interval(A, margin=INTERVAL_MARGIN)
    return SpectralInterval.parse(text)


class _Problem:
    """Operator, interval and (lazily) the reference spectrum shared by a sweep."""

    def __init__(self, spec: RunSpec, need_reference: bool):
        self.A = load_operator(spec)
        self.interval = resolve_interval(self.A, spec.interval)
        self.grid = np.linspace(self.interval.a, self.interval.b, spec.nt)
        self.spectrum = None
        if need_reference:
            if self.A.dim > MAX_DENSE_DIM:
                raise CLIError(f"reference needs a dense eigensolve; n={self.A.dim} exceeds {MAX_DENSE_DIM}")
            self.spectrum = dense_spectrum(self.A)

    def estimate(self, spec: RunSpec) -> tuple[DensityEstimate, float | None]:
        # sigma is given on the [-1, 1] axis; the pipeline expects original units
        sigma = spec.sigma * self.interval.width / 2.0
        config = EstimatorConfig(
            m=spec.degree(),
            n_omega=spec.n_omega,
            n_psi=spec.n_psi,
            sigma=sigma,
            grid=self.grid,
            seed=spec.seed,
            pinv_rel_threshold=spec.pinv_threshold,
            zero_density_threshold=spec.zero_threshold,
            guard=spec.guard,
            nonneg=spec.nonneg,
        )
        est = chebyshev_nystrom_pp(self.A, self.interval, config)
        err = None
        if self.spectrum is not None:
            err = l1_error(est, exact_density(self.spectrum, sigma, self.grid))
        return est, err


def _open_out(path):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", newline=""), True


def format_density_csv(grid, values) -> str:
    buf = io.StringIO()
    buf.write("t,density\n")
    for t, v in zip(grid, values):
        buf.write(f"{t:.17g},{v:.17g}\n")
    return buf.getvalue()


def run(spec: RunSpec) -> dict:
    """Execute one estimate and write the requested outputs; returns the report dict."""
    problem = _Problem(spec, spec.reference)
    est, err = problem.estimate(spec)
    values = np.maximum(est.values, 0.0) if spec.clamp_nonneg else est.values

    report = {
        "l1_error": err,
        "matvec_count": est.matvec_count,
        "wall_time_seconds": est.timings.get("sketch_seconds"),
        "dim": problem.A.dim,
        "interval": [problem.interval.a, problem.interval.b],
        "config": _echo(spec),
    }
    text = format_density_csv(est.grid, values)
    fh, close = _open_out(spec.out)
    try:
        fh.write(text)
    finally:
        if close:
            fh.close()
    if spec.report:
        with open(spec.report, "w") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    return report


def sweep(spec: SweepSpec) -> list[dict]:
    """Repeat the estimate over the sweep axis; seeds are ``base_seed + repetition``."""
    problem = _Problem(spec.base, need_reference=True)
    rows = []
    for point in spec.points:
        if spec.axis == "budget":
            n_omega, n_psi = point
            point_spec = replace(spec.base, n_omega=n_omega, n_psi=n_psi)
            axis_value = n_omega + n_psi
        else:
            point_spec = replace(spec.base, sigma=point)
            axis_value = point
        for rep in range(spec.reps):
            seed = spec.base.seed + rep
            est, err = problem.estimate(replace(point_spec, seed=seed))
            rows.append(
                {
                    "axis_value": axis_value,
                    "repetition": rep,
                    "seed": seed,
                    "l1_error": err,
                    "matvec_count": est.matvec_count,
                }
            )
            log.info("%s=%s rep=%d l1=%.3e", spec.axis, axis_value, rep, err)
    fh, close = _open_out(spec.base.out)
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["axis_value", "repetition", "seed", "l1_error", "matvec_count"])
        for r in rows:
            writer.writerow(
                [f"{r['axis_value']:.17g}", r["repetition"], r["seed"], f"{r['l1_error']:.17g}", r["matvec_count"]]
            )
    finally:
        if close:
            fh.close()
    return rows


def _echo(spec: RunSpec) -> dict:
    d = dict(vars(spec))
    d["m"] = spec.degree()
    return d


def parse_budget_points(text: str, split: str) -> list[tuple[int, int]]:
    points = []
    for item in text.split(","):
        item = item.strip()
        if ":" in item:
            a, b = item.split(":")
            points.append((int(a), int(b)))
            continue
        total = int(item)
        if split == "omega":
            points.append((total, 0))
        elif split == "psi":
            points.append((0, total))
        else:
            points.append((total // 2, total - total // 2))
    return points


def parse_sigma_points(text: str) -> list[float]:
    """``lo:hi:count`` (log-spaced, endpoints included) or a comma-separated list."""
    if ":" in text:
        lo, hi, count = text.split(":")
        return [float(v) for v in np.geomspace(float(lo), float(hi), int(count))]
    return [float(v) for v in text.split(",")]


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment. Keys use flag names."""
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise CLIError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CLIError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value.strip("\"'")
    return values


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _degree(text):
    if text in (None, "auto"):
        return None
    return int(text)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CLIError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(
        prog="paramtrace",
        description="Chebyshev-Nystrom++ spectral density estimation.",
    )
    p.add_argument("--config", help="key=value file with defaults; command-line flags win")
    p.add_argument("--matrix", default="hamiltonian", help="'hamiltonian', 'hamiltonian(n_c)' or a Matrix Market path")
    p.add_argument("--nc", type=int, default=1, help="cells per axis for the built-in Hamiltonian")
    p.add_argument("--boundary", choices=("periodic", "dirichlet"), default="periodic")
    p.add_argument("--m", type=_degree, default=None, help="Chebyshev degree (even), or 'auto' (default) for ceil(16/sigma)")
    p.add_argument("--n-omega", type=int, default=80)
    p.add_argument("--n-psi", type=int, default=0)
    p.add_argument("--sigma", type=float, default=0.005, help="smoothing width on the [-1, 1] axis")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pinv-threshold", type=float, default=1e-5)
    p.add_argument("--zero-threshold", type=float, default=1e-5)
    p.add_argument("--no-guard", dest="guard", action="store_false", help="disable the vanishing-density check")
    p.add_argument("--plain", dest="nonneg", action="store_false", help="use the plain (possibly negative) interpolant")
    p.add_argument("--nt", type=int, default=100)
    p.add_argument("--interval", default="auto", help="'a,b' or 'auto'; write --interval=-2,5 for a negative a")
    p.add_argument("--reference", action="store_true", help="compare against a dense eigensolve")
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.add_argument("--report", help="JSON report path")
    p.add_argument("--clamp-nonneg", action="store_true", help="clip negative densities to 0 in the CSV")
    p.add_argument("--sweep-budget", help="comma list of totals or n_omega:n_psi pairs")
    p.add_argument("--split", choices=("even", "omega", "psi"), default="even", help="how budget totals are split")
    p.add_argument("--sweep-sigma", help="lo:hi:count (log-spaced) or comma list")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


_BOOL_KEYS = {"guard", "nonneg", "reference", "clamp_nonneg", "verbose"}


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        defaults = read_config_file(args.config)
        known = {a.dest: a for a in parser._actions}
        converted = {}
        for key, value in defaults.items():
            if key not in known or key == "config":
                raise CLIError(f"{args.config}: unknown key {key!r}")
            action = known[key]
            if key in _BOOL_KEYS:
                converted[key] = _bool(value)
            elif action.type is not None:
                converted[key] = action.type(value)
            else:
                converted[key] = value
        parser.set_defaults(**converted)
        args = parser.parse_args(argv)
    return args


def spec_from_args(args) -> RunSpec | SweepSpec:
    sweeping = args.sweep_budget or args.sweep_sigma
    if args.sweep_budget and args.sweep_sigma:
        raise CLIError("choose one of --sweep-budget and --sweep-sigma")
    m = args.m
    base = RunSpec(
        matrix=args.matrix,
        nc=args.nc,
        boundary=args.boundary,
        m=m,
        n_omega=args.n_omega,
        n_psi=args.n_psi,
        sigma=args.sigma,
        seed=args.seed,
        pinv_threshold=args.pinv_threshold,
        zero_threshold=args.zero_threshold,
        guard=args.guard,
        nonneg=args.nonneg,
        nt=args.nt,
        interval=args.interval,
        reference=args.reference or bool(sweeping),
        out=args.out,
        report=args.report,
        clamp_nonneg=args.clamp_nonneg,
    )
    if args.nt < 2:
        raise CLIError("--nt must be at least 2")
    if args.sweep_budget:
        return SweepSpec(base, "budget", parse_budget_points(args.sweep_budget, args.split), args.reps)
    if args.sweep_sigma:
        return SweepSpec(base, "sigma", parse_sigma_points(args.sweep_sigma), args.reps)
    return base


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        spec = spec_from_args(args)
        if isinstance(spec, SweepSpec):
            sweep(spec)
        else:
            report = run(spec)
            if spec.reference and spec.out:
                print(f"l1_error={report['l1_error']:.6e} matvecs={report['matvec_count']}", file=sys.stderr)
    except (CLIError, ValueError, OSError) as exc:
        print(f"paramtrace: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
