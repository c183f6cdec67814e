"""Command-line front end.

Subcommands: ``occupation-pdf``, ``sliding-pdf``, ``simulate``, ``compare`` and
``reproduce``.  Every run writes a ``<output>.manifest.json`` next to its
main output.

Exit codes: 0 success, 1 other library error, 2 invalid flags or config,
3 quadrature non-convergence, 4 not in a stable sliding region,
5 dependent x/y noise, 6 a simulated path diverged, 7 grids with disjoint
supports.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import jsonschema
import numpy as np

from . import __version__
from .errors import (
    DomainError, IndependenceViolated, MismatchedGrids, NonConvergence, NonFinite,
    NotStableSliding, OccSlideError,
)
from .grids import DensityGrid, atomic_write, build_histogram, write_csv
from .montecarlo import SimConfig, ks_distance, l1_distance, simulate_filippov, simulate_two_valued
from .occupation import (
    TwoValuedDriftSpec, arcsine_pdf, constant_drift_pdf, occupation_density,
    occupation_pdf_longtime,
)
from .sliding_long import covariance, longtime_marginal_y, longtime_pdf
from .sliding_short import frozen_params_from_system, orthogonal_pdf, parallel_pdf
from .systems import NoiseSpec, PiecewiseAffineSystem, example_system

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2
EXIT_CODES = [
    (NonConvergence, 3),
    (IndependenceViolated, 5),
    (NotStableSliding, 4),
    (NonFinite, 6),
    (MismatchedGrids, 7),
    (DomainError, EXIT_USAGE),
]

FIG1_TIMES = (0.1, 0.3, 1.0, 3.0, 10.0)
FIG2_TIMES = (0.1, 0.5, 1.0, 2.0)
BUDGETS = {"desk": (10_000, 1e-4), "paper": (100_000, 1e-5)}


class UsageError(Exception):
    """Bad flags or configuration (exit 2)."""


# ---------------------------------------------------------------------------
# configuration files

_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_vector = {"type": "array", "items": {"type": "number"}}
_initial = {
    "type": "object",
    "properties": {"x0": {"type": "number"}, "y0": _vector},
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "kind": {"const": "two_valued"},
                "a_L": {"type": "number"},
                "a_R": {"type": "number"},
                "diffusion_scale": {"type": "number", "exclusiveMinimum": 0},
                "initial": _initial,
            },
            "required": ["kind", "a_L", "a_R"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "builtin_example"},
                "noise": {
                    "type": "object",
                    "properties": {"epsilon": {"type": "number", "exclusiveMinimum": 0}},
                    "required": ["epsilon"],
                    "additionalProperties": False,
                },
                "initial": _initial,
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "piecewise_affine"},
                "N": {"type": "integer", "minimum": 2},
                "A_L": _matrix, "c_L": _vector, "A_R": _matrix, "c_R": _vector,
                "noise": {
                    "type": "object",
                    "properties": {
                        "epsilon": {"type": "number", "exclusiveMinimum": 0},
                        "D": _matrix,
                    },
                    "required": ["epsilon", "D"],
                    "additionalProperties": False,
                },
                "initial": _initial,
            },
            "required": ["kind", "N", "A_L", "c_L", "A_R", "c_R", "noise"],
            "additionalProperties": False,
        },
    ]
}


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


class LoadedConfig:
    """A validated configuration file turned into library objects."""

    def __init__(self, raw: dict):
        self.raw = raw
        self.kind = raw["kind"]
        init = raw.get("initial", {})
        self.x0 = float(init.get("x0", 0.0))
        self.system = self.noise = None
        self.spec = None
        if self.kind == "two_valued":
            self.spec_kwargs = dict(a_L=raw["a_L"], a_R=raw["a_R"], x0=self.x0,
                                    diffusion_scale=raw.get("diffusion_scale", 1.0))
            self.y0 = None
            return
        if self.kind == "builtin_example":
            eps = raw.get("noise", {}).get("epsilon", 0.1)
            self.system = example_system()
            self.noise = NoiseSpec(eps, np.diag([1.0, 0.1]))
            self.y0 = np.asarray(init.get("y0", [2.0]), dtype=float)
        else:
            n = raw["N"]
            try:
                self.system = PiecewiseAffineSystem.from_matrices(
                    raw["A_L"], raw["c_L"], raw["A_R"], raw["c_R"])
            except ValueError as exc:
                raise UsageError(f"config: {exc}") from None
            if self.system.dim != n:
                raise UsageError(f"config: N={n} but matrices are {self.system.dim}-dimensional")
            D = np.asarray(raw["noise"]["D"], dtype=float)
            if D.shape != (n, n):
                raise UsageError(f"config: noise.D must be {n}x{n}")
            self.noise = NoiseSpec(raw["noise"]["epsilon"], D)
            self.y0 = np.asarray(init.get("y0", np.zeros(n - 1)), dtype=float)
        if self.y0.size != self.system.dim - 1:
            raise UsageError(f"config: initial.y0 must have {self.system.dim - 1} entries")

    def two_valued_spec(self, t: float) -> TwoValuedDriftSpec:
        return TwoValuedDriftSpec(t=t, **self.spec_kwargs)


def load_config(path) -> LoadedConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"--config: cannot read {path}: {exc}") from None
    kinds = {sub["properties"]["kind"]["const"]: sub for sub in CONFIG_SCHEMA["oneOf"]}
    kind = raw.get("kind") if isinstance(raw, dict) else None
    if kind not in kinds:
        raise UsageError(f"--config: 'kind' must be one of {sorted(kinds)}")
    try:
        jsonschema.validate(raw, kinds[kind])
    except jsonschema.ValidationError as exc:
        raise UsageError(f"--config: {path} does not match the schema: {exc.message}") from None
    return LoadedConfig(raw)


# ---------------------------------------------------------------------------
# manifests

class Run:
    """Collects outputs and writes the manifest when the command finishes."""

    def __init__(self, argv: Sequence[str], config=None, seed: Optional[int] = None):
        self.argv = list(argv)
        self.config = config
        self.seed = seed
        self.outputs: list[str] = []
        self.start = time.perf_counter()
        self.extra: dict = {}

    def add(self, path) -> Path:
        self.outputs.append(str(path))
        return Path(path)

    def manifest(self, main_output) -> Path:
        doc = {
            "command": self.argv,
            "config_hash": config_hash(self.config if self.config is not None else self.argv),
            "seed": self.seed,
            "version": __version__,
            "wall_time_s": time.perf_counter() - self.start,
            "outputs": self.outputs,
        }
        doc.update(self.extra)
        path = Path(str(main_output) + ".manifest.json")
        return atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_json(path, obj) -> Path:
    return atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# occupation-pdf

def _midpoints(lo: float, hi: float, n: int) -> np.ndarray:
    return lo + (hi - lo) * (np.arange(n) + 0.5) / n


def cmd_occupation_pdf(args, run: Run) -> int:
    if not args.t > 0:
        raise UsageError("--t must be positive")
    if args.grid < 2:
        raise UsageError("--grid must be at least 2")
    spec = TwoValuedDriftSpec(args.aL, args.aR, args.x0, args.t)
    tau = _midpoints(0.0, args.t, args.grid)
    sidecar = {"a_L": args.aL, "a_R": args.aR, "x0": args.x0, "t": args.t}
    if args.special:
        if args.x0 != 0:
            raise UsageError("--special requires --x0 0")
        if args.special == "arcsine":
            if args.aL != 0 or args.aR != 0:
                raise UsageError("--special arcsine requires --aL 0 --aR 0")
            dens = arcsine_pdf(tau, args.t)
        else:
            if args.aL != -args.aR:
                raise UsageError("--special constant-drift requires --aL = -(--aR)")
            dens = constant_drift_pdf(tau, args.t, args.aR)
        sidecar.update(atom_at_zero=0.0, atom_at_t=0.0, method=args.special)
    elif args.asymptotic:
        dens = occupation_pdf_longtime(tau, args.t, args.aL, args.aR)
        sidecar.update(atom_at_zero=0.0, atom_at_t=0.0, method="long-time asymptotic")
    else:
        od = occupation_density(spec)
        dens = od.pdf(tau)
        sidecar.update(atom_at_zero=od.atom_at_zero, atom_at_t=od.atom_at_t, method="exact",
                       mean=od.mean(), std=od.std())
    out = Path(args.out)
    write_csv(out, ["tau", "density"], [tau, dens])
    run.add(out)
    run.add(_write_json(str(out) + ".atoms.json", sidecar))
    run.manifest(out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# sliding-pdf

def _span(center, spread, k=6.0):
    return center - k * spread, center + k * spread


def cmd_sliding_pdf(args, run: Run) -> int:
    cfg = load_config(args.config)
    run.config = cfg.raw
    if cfg.system is None:
        raise UsageError("sliding-pdf needs a builtin_example or piecewise_affine config")
    if not args.t > 0:
        raise UsageError("--t must be positive")
    n = args.grid
    if n < 2:
        raise UsageError("--grid must be at least 2")
    sysm, noise, y0, t = cfg.system, cfg.noise, cfg.y0, args.t
    out = Path(args.out)
    if args.mode in ("long-marginal-y", "short-parallel") and y0.size != 1:
        raise UsageError(f"--mode {args.mode} grids are only produced for N = 2")
    if args.mode.startswith("short"):
        p = frozen_params_from_system(sysm, noise, y0)
        if args.mode == "short-orthogonal":
            c = p.scale
            lo = -(6 * math.sqrt(c * t) + 12 * c / p.a_L)
            hi = 6 * math.sqrt(c * t) + 12 * c / p.a_R
            x = np.linspace(lo, hi, n)
            write_csv(out, ["x", "density"], [x, orthogonal_pdf(x, t, p)])
        else:
            sd = math.sqrt(noise.epsilon * t * p.gamma[0, 0])
            ends = y0[0] + t * np.array([p.b_L[0], p.b_R[0]])
            y = np.linspace(ends.min() - 6 * sd, ends.max() + 6 * sd, n)
            write_csv(out, ["y", "density"], [y, parallel_pdf(y, t, p)])
        run.add(out)
    else:
        traj = covariance(sysm, noise, y0, t)
        st = traj(t)
        aL, aR = sysm.a_L(st.y_S), sysm.a_R(st.y_S)
        eps, alpha = noise.epsilon, noise.alpha
        x = np.linspace(-12 * alpha * eps / (2 * aL), 12 * alpha * eps / (2 * aR), n)
        if args.mode == "long-marginal-y":
            y = np.linspace(*_span(st.y_S[0], math.sqrt(eps * st.Theta[0, 0])), n)
            write_csv(out, ["y", "density"],
                      [y, longtime_marginal_y(y, t, sysm, noise, y0, trajectory=traj)])
        else:
            if y0.size != 1:
                raise UsageError("--mode long-joint grids are only produced for N = 2")
            y = np.linspace(*_span(st.y_S[0], math.sqrt(eps * st.Theta[0, 0])), n)
            X, Y = np.meshgrid(x, y, indexing="ij")
            f = longtime_pdf(X.ravel(), Y.reshape(-1, 1), t, sysm, noise, y0, trajectory=traj)
            write_csv(out, ["x", "y", "density"], [X.ravel(), Y.ravel(), f])
        run.add(out)
        side = Path(str(out) + ".trajectory.csv")
        ts = traj.times
        states = [traj(s) for s in ts]
        m = y0.size
        cols = [ts] + [np.array([s.y_S[i] for s in states]) for i in range(m)]
        cols += [np.array([s.Theta[i, j] for s in states]) for i in range(m) for j in range(m)]
        header = ["t"] + [f"y_S_{i}" for i in range(m)] + \
            [f"Theta_{i}{j}" for i in range(m) for j in range(m)]
        write_csv(side, header, cols)
        run.add(side)
    run.manifest(out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate

def _simulate(cfg: LoadedConfig, sim: SimConfig):
    if cfg.kind == "two_valued":
        return simulate_two_valued(cfg.two_valued_spec(sim.t_final), sim)
    return simulate_filippov(cfg.system, cfg.noise, cfg.y0, sim, x0=cfg.x0)


def cmd_simulate(args, run: Run) -> int:
    cfg = load_config(args.config)
    run.config = cfg.raw
    run.seed = args.seed
    try:
        sim = SimConfig(args.paths, args.dt, args.t, args.seed,
                        "final_state_and_occupation" if args.record == "occupation" else "final_state")
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    if args.bins < 1:
        raise UsageError("--bins must be at least 1")
    res = _simulate(cfg, sim)
    variable = args.variable or ("tau" if args.record == "occupation"
                                 else ("x" if cfg.kind == "two_valued" else "y"))
    if variable == "tau":
        if res.tau is None:
            raise UsageError("--variable tau needs --record occupation")
        samples = res.tau
    elif variable == "x":
        samples = res.x
    else:
        if res.y is None:
            raise UsageError("--variable y needs a Filippov config")
        samples = res.y[:, 0]
    hist = build_histogram(samples, args.bins, args.range, axis=variable)
    out = Path(args.out)
    hist.to_csv(out)
    run.add(out)
    if args.raw:
        cols = [res.x[:, None]]
        names = ["x"]
        if res.y is not None:
            cols.append(res.y)
            names += [f"y{i}" for i in range(res.y.shape[1])]
        if res.tau is not None:
            cols.append(res.tau[:, None])
            names.append("tau")
        raw_path = Path(args.raw)
        buf = io.BytesIO()
        np.save(buf, np.hstack(cols))
        atomic_write(raw_path, buf.getvalue())
        run.add(raw_path)
        run.extra["raw_columns"] = names
    run.extra.update(n_paths=sim.n_paths, dt=sim.dt, t_final=sim.t_final, variable=variable,
                     in_range_fraction=hist.in_range_fraction)
    run.manifest(out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare

def _load_grid(path) -> DensityGrid:
    try:
        return DensityGrid.from_csv(path)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read grid {path}: {exc}") from None


def grid_cdf(grid: DensityGrid):
    """CDF of a tabulated density by cumulative trapezoid, normalised to 1."""
    x, v = grid.abscissae, grid.values
    cum = np.r_[0.0, np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(x))]
    cum /= cum[-1]
    return lambda s: np.interp(s, x, cum, left=0.0, right=1.0)


def cmd_compare(args, run: Run) -> int:
    analytic = _load_grid(args.analytic)
    if args.metric == "l1":
        empirical = _load_grid(args.empirical)
        value = l1_distance(analytic, empirical)
    else:
        try:
            samples = np.load(args.empirical)
        except (OSError, ValueError) as exc:
            raise UsageError(f"--empirical: ks needs a .npy sample file: {exc}") from None
        col = args.column if samples.ndim > 1 else None
        samples = samples[:, col] if col is not None else samples
        value = ks_distance(samples, grid_cdf(analytic))
    report = {"metric": args.metric, "value": value,
              "analytic": str(args.analytic), "empirical": str(args.empirical)}
    if args.threshold is not None:
        report.update(threshold=args.threshold, passed=bool(value <= args.threshold))
    out = Path(args.out)
    _write_json(out, report)
    run.add(out)
    run.manifest(out)
    print(f"{args.metric} = {value:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# reproduce

def _check(name, value, threshold, op="<="):
    ok = value <= threshold if op == "<=" else abs(value) <= threshold
    return {"check": name, "value": float(value), "threshold": threshold, "passed": bool(ok)}


def reproduce_figure1(outdir: Path, run: Run, n: int = 512) -> list:
    checks = []
    for t in FIG1_TIMES:
        spec = TwoValuedDriftSpec(2.0, 1.0, 0.0, t)
        od = occupation_density(spec)
        s = _midpoints(0.0, 1.0, n)
        path = outdir / f"fig1_t{t:g}.csv"
        write_csv(path, ["tau_over_t", "t_times_p"], [s, t * od.pdf(s * t)])
        run.add(path)
        checks.append(_check(f"normalisation t={t:g}", abs(od.mass() - 1), 1e-4))
        if t == 10.0:
            gauss = occupation_pdf_longtime(s * t, t, 2.0, 1.0)
            gpath = outdir / "fig1_t10_gaussian.csv"
            write_csv(gpath, ["tau_over_t", "t_times_p"], [s, t * gauss])
            run.add(gpath)
            checks.append(_check("mean/t vs 2/3 (relative)", od.mean() / t / (2 / 3) - 1, 0.02, "abs"))
            checks.append(_check("std vs sqrt(10)/3 (relative)",
                                 od.std() / (math.sqrt(10) / 3) - 1, 0.02, "abs"))
            l1 = l1_distance(DensityGrid("s", s, t * od.pdf(s * t)), DensityGrid("s", s, t * gauss))
            checks.append(_check("L1 exact vs Gaussian", l1, 0.05))
    return checks


def reproduce_figure2(outdir: Path, run: Run, budget: str, seed: int, bins: int = 40,
                      n: int = 300) -> list:
    paths, dt = BUDGETS[budget]
    sysm = example_system()
    noise = NoiseSpec(0.1, np.diag([1.0, 0.1]))
    y0 = np.array([2.0])
    p = frozen_params_from_system(sysm, noise, y0)
    traj = covariance(sysm, noise, y0, max(FIG2_TIMES))
    checks = []
    for t in FIG2_TIMES:
        res = simulate_filippov(sysm, noise, y0, SimConfig(paths, dt, t, seed))
        y = res.y[:, 0]
        hist = build_histogram(y, bins, axis="y")
        grid = np.linspace(y.min() - 0.1, y.max() + 0.1, n)
        short = DensityGrid("y", grid, parallel_pdf(grid, t, p))
        long = DensityGrid("y", grid, longtime_marginal_y(grid, t, sysm, noise, y0, trajectory=traj))
        tag = f"t{t:g}"
        for name, obj in (("histogram", hist), ("short", short), ("long", long)):
            path = outdir / f"fig2_{tag}_{name}.csv"
            obj.to_csv(path)
            run.add(path)
        hg = hist.as_grid()
        l1s, l1l = l1_distance(hg, short), l1_distance(hg, long)
        if t == 0.1:
            checks.append(_check("L1 short-time vs histogram, t=0.1", l1s, 0.1))
        elif t == 2.0:
            checks.append(_check("L1 long-time vs histogram, t=2", l1l, 0.1))
        checks.append({"check": f"L1 values t={t:g}", "short": l1s, "long": l1l,
                       "informational": True})
    return checks


def cmd_reproduce(args, run: Run) -> int:
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    run.seed = args.seed
    if args.figure == 1:
        checks = reproduce_figure1(outdir, run)
    else:
        checks = reproduce_figure2(outdir, run, args.budget, args.seed)
    summary = outdir / f"fig{args.figure}_summary.json"
    gated = [c for c in checks if "passed" in c]
    _write_json(summary, {"figure": args.figure, "budget": args.budget,
                          "all_passed": all(c["passed"] for c in gated), "checks": checks})
    run.add(summary)
    run.manifest(summary)
    for c in gated:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['check']}: {c['value']:.6g} "
              f"(threshold {c['threshold']:g})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def _range(text):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected LO,HI") from None
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="occslide", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("occupation-pdf", help="occupation-time density on a grid")
    p.add_argument("--aL", type=float, required=True)
    p.add_argument("--aR", type=float, required=True)
    p.add_argument("--x0", type=float, default=0.0)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--grid", type=int, default=512)
    p.add_argument("--out", required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--asymptotic", action="store_true", help="use the long-time form")
    g.add_argument("--special", choices=["arcsine", "constant-drift"])
    p.set_defaults(func=cmd_occupation_pdf)

    p = sub.add_parser("sliding-pdf", help="short- or long-time sliding densities")
    p.add_argument("--config", required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--mode", required=True,
                   choices=["short-parallel", "short-orthogonal", "long-joint", "long-marginal-y"])
    p.add_argument("--grid", type=int, default=256)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sliding_pdf)

    p = sub.add_parser("simulate", help="Euler-Maruyama Monte-Carlo histogram")
    p.add_argument("--config", required=True)
    p.add_argument("--paths", type=int, required=True)
    p.add_argument("--dt", type=float, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--record", choices=["occupation", "state"], default="state")
    p.add_argument("--variable", choices=["x", "y", "tau"])
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--range", type=_range, help="histogram range LO,HI")
    p.add_argument("--raw", help="also save raw samples to this .npy file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="distance between analytic and empirical results")
    p.add_argument("--analytic", required=True)
    p.add_argument("--empirical", required=True)
    p.add_argument("--metric", choices=["l1", "ks"], default="l1")
    p.add_argument("--column", type=int, default=0, help="sample column for ks")
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("reproduce", help="regenerate the data behind a figure")
    p.add_argument("--figure", type=int, choices=[1, 2], required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--budget", choices=sorted(BUDGETS), default="desk")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_reproduce)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    run = Run(["occslide"] + argv)
    try:
        return args.func(args, run)
    except UsageError as exc:
        print(f"occslide {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OccSlideError as exc:
        for cls, code in EXIT_CODES:
            if isinstance(exc, cls):
                break
        else:
            code = EXIT_ERROR
        print(f"occslide {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
