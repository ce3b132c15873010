"""Batch command-line front end: datasets in, risk curves out.

Subcommands:
  gen-data     write a synthetic dataset as CSV
  exhaustive   enumerate every in-budget configuration per epsilon, solve
  genetic      genetic lower bound per epsilon, trace file per grid point
  gencol-w2    column generation per penalty strength tau, risk reports
  certify      converge gencol-w2, then prove optimality over all columns

Solver commands read exactly one dataset source (--data CSV, --cifar binary
plus --classes, or --synthetic), run over an explicit comma-separated grid,
and write <out>_curve.csv with a JSON mirror, per-point trace files, and a
manifest recording the full parameterization.  Outputs are reproducible
byte for byte for a fixed argument list, elapsed-time fields excepted.
Rows with converged=false are lower bounds on the risk, not estimates of
it.  Grid points run sequentially unless --parallel is given; the
ADVRISK_THREADS environment variable caps the worker count.

Exit codes: 0 success, 2 bad arguments, 3 unreadable data, 4 LP failure,
5 enumeration cap exceeded, 6 internal invariant violation.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import enum
import json
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from advrisk import __version__, lp
from advrisk.configuration import ConfigurationPool
from advrisk.data import (
    LabeledDataset,
    SyntheticSpec,
    generate_synthetic,
    load_cifar100_test,
    load_csv,
    save_csv,
)
from advrisk.gencol import GencolParams, certify_optimality, gencol_w2
from advrisk.geometry import Metric
from advrisk.search import (
    EnumerationCapExceeded,
    GeneticParams,
    exhaustive_search,
    genetic_search,
)

__all__ = ["Command", "RunSpec", "CurveRow", "RiskCurve", "run", "emit_risk_curve", "main"]

EXIT_OK = 0
EXIT_BAD_ARGS = 2
EXIT_BAD_DATA = 3
EXIT_LP_FAILURE = 4
EXIT_CAP_EXCEEDED = 5
EXIT_INVARIANT = 6

CURVE_HEADER = "param,risk,objective,n_configs,n_configs_by_length,elapsed_s,converged"


class DataSourceError(RuntimeError):
    """Dataset could not be read or constructed."""


class LpFailureError(RuntimeError):
    """The solver did not return an optimal solution."""


class CurveInvariantError(RuntimeError):
    """A guaranteed property of the emitted curve failed to hold."""


class Command(enum.Enum):
    GEN_DATA = "gen-data"
    EXHAUSTIVE = "exhaustive"
    GENETIC = "genetic"
    GENCOL_W2 = "gencol-w2"
    CERTIFY = "certify"


@dataclass(frozen=True)
class RunSpec:
    """Fully resolved invocation: one command, one dataset source, one grid."""

    command: Command
    data: str | None = None
    cifar: str | None = None
    synthetic: bool = False
    classes: int | None = None
    n: int = 1000
    sigma: float = 0.35
    center_box: float = 1.0
    metric: Metric = Metric.EUCLIDEAN
    eps: tuple[float, ...] = ()
    tau: tuple[float, ...] = ()
    beta: int = 3
    samples: int | None = None
    rule_weights: tuple[float, float, float] = (1.0, 1.0, 0.0)
    time_limit: float = 300.0
    stagnation: int = 50
    seed: int = 0
    out: str = "advrisk"
    max_configs: int | None = None
    parallel: bool = False


@dataclass(frozen=True)
class CurveRow:
    param: float
    risk: float
    objective: float
    n_configs: int
    n_configs_by_length: str
    elapsed_s: float
    converged: bool


@dataclass
class RiskCurve:
    """Grid results, kept sorted by parameter before emission."""

    points: list[CurveRow]

    def sorted(self) -> "RiskCurve":
        return RiskCurve(sorted(self.points, key=lambda r: r.param))

    def validate(self, risk_cap: float) -> None:
        for prev, cur in zip(self.points, self.points[1:]):
            if not cur.param > prev.param:
                raise CurveInvariantError(
                    f"grid parameters must be strictly increasing, got "
                    f"{prev.param!r} then {cur.param!r}"
                )
        for row in self.points:
            if not -1e-9 <= row.risk <= risk_cap + 1e-9:
                raise CurveInvariantError(
                    f"risk {row.risk!r} at param {row.param!r} is outside "
                    f"[0, {risk_cap!r}]"
                )


def emit_risk_curve(curve: RiskCurve, prefix: str) -> tuple[str, str]:
    """Write <prefix>_curve.csv and its JSON mirror; returns both paths."""
    if not curve.points:
        raise ValueError("refusing to emit an empty risk curve")
    csv_path = f"{prefix}_curve.csv"
    json_path = f"{prefix}_curve.json"
    lines = [CURVE_HEADER]
    for r in curve.points:
        lines.append(
            f"{r.param!r},{r.risk!r},{r.objective!r},{r.n_configs},"
            f"{r.n_configs_by_length},{r.elapsed_s:.6f},"
            f"{'true' if r.converged else 'false'}"
        )
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    rows = [
        {
            "param": r.param,
            "risk": r.risk,
            "objective": r.objective,
            "n_configs": r.n_configs,
            "n_configs_by_length": r.n_configs_by_length,
            "elapsed_s": r.elapsed_s,
            "converged": r.converged,
        }
        for r in curve.points
    ]
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2)
        fh.write("\n")
    return csv_path, json_path


def _parse_grid(text: str, name: str, allow_zero: bool) -> tuple[float, ...]:
    values = []
    for piece in text.split(","):
        piece = piece.strip()
        if not piece:
            continue
        try:
            v = float(piece)
        except ValueError:
            raise ValueError(f"{name}: {piece!r} is not a number") from None
        if not np.isfinite(v) or v < 0 or (v == 0 and not allow_zero):
            bound = ">= 0" if allow_zero else "> 0"
            raise ValueError(f"{name}: values must be finite and {bound}, got {piece}")
        values.append(v)
    if not values:
        raise ValueError(f"{name}: the grid is empty")
    if len(set(values)) != len(values):
        raise ValueError(f"{name}: duplicate grid values")
    return tuple(values)


def _parse_weights(text: str) -> tuple[float, float, float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"--rule-weights wants a:b:c, got {text!r}")
    try:
        w = tuple(float(p) for p in parts)
    except ValueError:
        raise ValueError(f"--rule-weights wants numbers, got {text!r}") from None
    return w  # range checks live in GeneticParams


def _worker_count(n_tasks: int) -> int:
    raw = os.environ.get("ADVRISK_THREADS", "")
    if raw:
        try:
            cap = int(raw)
        except ValueError:
            raise ValueError(f"ADVRISK_THREADS={raw!r} is not an integer") from None
        if cap < 1:
            raise ValueError("ADVRISK_THREADS must be at least 1")
    else:
        cap = os.cpu_count() or 1
    return max(1, min(n_tasks, cap))


def _load_dataset(spec: RunSpec) -> LabeledDataset:
    try:
        if spec.data is not None:
            return load_csv(spec.data)
        if spec.cifar is not None:
            return load_cifar100_test(spec.cifar, spec.classes)
        return generate_synthetic(
            SyntheticSpec(
                n_classes=spec.classes if spec.classes is not None else 10,
                n_points=spec.n,
                center_box=spec.center_box,
                sigma=spec.sigma,
                seed=spec.seed,
            )
        )
    except (OSError, ValueError) as exc:
        raise DataSourceError(str(exc)) from exc


def _lengths_of(pool: ConfigurationPool) -> str:
    return ";".join(f"{m}:{idx.shape[0]}" for m, idx, _ in pool.blocks())


def _solve_checked(pool: ConfigurationPool) -> lp.LpSolution:
    rp = lp.ReducedProblem.from_pool(pool)
    try:
        sol = lp.solve(rp)
    except RuntimeError as exc:
        raise LpFailureError(str(exc)) from exc
    if sol.status is not lp.LpStatus.OPTIMAL:
        raise LpFailureError(f"solver returned status {sol.status.name}")
    return sol


def _zero_budget_row(ds: LabeledDataset, elapsed0: float) -> CurveRow:
    # budget zero admits only the singleton columns, so the risk is 0 by
    # construction; solved as a real LP to keep the audit trail uniform
    rp = lp.ReducedProblem.from_columns(
        ds.n_points, [((i,), 1.0) for i in range(ds.n_points)]
    )
    sol = lp.solve(rp)
    return CurveRow(
        param=0.0,
        risk=1.0 - sol.objective / ds.n_points,
        objective=sol.objective,
        n_configs=ds.n_points,
        n_configs_by_length=f"1:{ds.n_points}",
        elapsed_s=time.perf_counter() - elapsed0,
        converged=True,
    )


def _execute_point(
    spec: RunSpec, ds: LabeledDataset, param: float
) -> tuple[CurveRow, dict[str, str]]:
    """Run one grid point; returns its curve row and files to write."""
    t0 = time.perf_counter()
    files: dict[str, str] = {}
    n = ds.n_points

    if spec.command in (Command.EXHAUSTIVE, Command.GENETIC) and param == 0.0:
        return _zero_budget_row(ds, t0), files

    if spec.command is Command.EXHAUSTIVE:
        pool = exhaustive_search(ds, spec.metric, param, max_configs=spec.max_configs)
        sol = _solve_checked(pool)
        row = CurveRow(
            param, 1.0 - sol.objective / n, sol.objective,
            len(pool), _lengths_of(pool), time.perf_counter() - t0, True,
        )
        return row, files

    if spec.command is Command.GENETIC:
        params = GeneticParams(
            samples_per_generation=spec.samples,
            rule_weights=spec.rule_weights,
            time_limit=spec.time_limit,
            stagnation_generations=spec.stagnation,
            seed=spec.seed,
        )
        try:
            pool, sol, trace = genetic_search(ds, spec.metric, param, params)
        except RuntimeError as exc:
            raise LpFailureError(str(exc)) from exc
        # the loop exits early on stagnation; hitting the clock means the
        # search was cut off and the row is only a lower bound
        converged = trace.records[-1].elapsed_s < spec.time_limit
        files[f"{spec.out}_trace_eps{param!r}.csv"] = trace.to_csv()
        files[f"{spec.out}_trace_eps{param!r}.json"] = trace.to_json()
        row = CurveRow(
            param, 1.0 - sol.objective / n, sol.objective,
            len(pool), _lengths_of(pool), time.perf_counter() - t0, converged,
        )
        return row, files

    # gencol-w2 and certify share the penalized run
    params = GencolParams(
        tau=param,
        beta=spec.beta,
        samples_per_generation=spec.samples,
        time_limit=spec.time_limit,
        stagnation_generations=spec.stagnation,
        seed=spec.seed,
    )
    try:
        pool, sol, report, trace = gencol_w2(ds, params)
    except RuntimeError as exc:
        raise LpFailureError(str(exc)) from exc
    elapsed = time.perf_counter() - t0
    files[f"{spec.out}_trace_tau{param!r}.csv"] = trace.to_csv()
    files[f"{spec.out}_trace_tau{param!r}.json"] = trace.to_json()
    files[f"{spec.out}_report_tau{param!r}.json"] = report.to_json(
        param, spec.beta, elapsed
    )
    if spec.command is Command.CERTIFY:
        cap = spec.max_configs if spec.max_configs is not None else 1_000_000
        certified, violation = certify_optimality(sol, ds, param, max_configs=cap)
        files[f"{spec.out}_certificate_tau{param!r}.json"] = json.dumps(
            {
                "tau": param,
                "certified": certified,
                "max_violation": violation,
                "corrected_risk": report.corrected_risk,
                "converged": report.converged,
            },
            indent=2,
        ) + "\n"
    row = CurveRow(
        param, report.corrected_risk, sol.objective,
        len(pool), _lengths_of(pool), elapsed, report.converged,
    )
    return row, files


_WORKER_STATE: tuple[RunSpec, LabeledDataset] | None = None


def _worker_init(spec: RunSpec) -> None:
    global _WORKER_STATE
    _WORKER_STATE = (spec, _load_dataset(spec))


def _worker_run(param: float) -> tuple[CurveRow, dict[str, str]]:
    spec, ds = _WORKER_STATE
    return _execute_point(spec, ds, param)


def _write_manifest(spec: RunSpec, grid: tuple[float, ...]) -> str:
    import scipy

    if spec.data is not None:
        source = {"kind": "csv", "path": spec.data}
    elif spec.cifar is not None:
        source = {"kind": "cifar", "path": spec.cifar, "classes": spec.classes}
    else:
        source = {
            "kind": "synthetic",
            "classes": spec.classes if spec.classes is not None else 10,
            "n": spec.n,
            "sigma": spec.sigma,
            "center_box": spec.center_box,
        }
    manifest = {
        "command": spec.command.value,
        "dataset": source,
        "metric": spec.metric.value,
        "grid": list(grid),
        "params": {
            "beta": spec.beta,
            "samples": spec.samples,
            "rule_weights": list(spec.rule_weights),
            "time_limit": spec.time_limit,
            "stagnation": spec.stagnation,
            "max_configs": spec.max_configs,
        },
        "seed": spec.seed,
        "versions": {
            "advrisk": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
    }
    path = f"{spec.out}_manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return path


def run(spec: RunSpec) -> int:
    """Execute a resolved RunSpec; returns the process exit code."""
    if spec.command is Command.GEN_DATA:
        ds = _load_dataset(spec)
        try:
            save_csv(ds, spec.out)
        except OSError as exc:
            raise DataSourceError(str(exc)) from exc
        print(
            f"wrote {spec.out}: {ds.n_points} points, "
            f"{ds.n_classes} classes, d={ds.n_features}"
        )
        return EXIT_OK

    ds = _load_dataset(spec)
    grid = tuple(sorted(spec.eps if spec.eps else spec.tau))
    workers = _worker_count(len(grid))
    if spec.parallel and len(grid) > 1 and workers > 1:
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=workers, initializer=_worker_init, initargs=(spec,)
        ) as ex:
            results = list(ex.map(_worker_run, grid))
    else:
        results = [_execute_point(spec, ds, param) for param in grid]

    curve = RiskCurve([row for row, _ in results]).sorted()
    n_max = int(ds.class_counts.max())
    curve.validate(1.0 - n_max / ds.n_points)
    if spec.command is Command.EXHAUSTIVE:
        # exact classical values: a larger budget keeps every smaller-budget
        # configuration, so any decrease can only be a solver defect
        for prev, cur in zip(curve.points, curve.points[1:]):
            if cur.risk < prev.risk - 1e-9:
                raise CurveInvariantError(
                    f"classical risk decreased from {prev.risk!r} at "
                    f"{prev.param!r} to {cur.risk!r} at {cur.param!r}"
                )

    for _, extra in results:
        for path, text in extra.items():
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
    csv_path, _ = emit_risk_curve(curve, spec.out)
    _write_manifest(spec, grid)
    for r in curve.points:
        print(
            f"param={r.param!r} risk={r.risk:.6f} objective={r.objective:.6f} "
            f"configs={r.n_configs} elapsed={r.elapsed_s:.2f}s "
            f"converged={'true' if r.converged else 'false'}"
        )
    print(f"wrote {csv_path} ({len(curve.points)} rows)")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="advrisk",
        description="Lower bounds on the minimal adversarial risk of "
        "multi-class classification, from transport LPs over point "
        "configurations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="write a synthetic dataset as CSV")
    gen.add_argument("--classes", type=int, default=10)
    gen.add_argument("--n", type=int, default=1000)
    gen.add_argument("--sigma", type=float, default=0.35)
    gen.add_argument("--center-box", type=float, default=1.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", default="synthetic.csv")

    def add_shared(p: argparse.ArgumentParser, budget: str) -> None:
        p.add_argument("--data", help="dataset CSV (label,x1,...,xd)")
        p.add_argument("--cifar", help="CIFAR-100 binary test file")
        p.add_argument(
            "--synthetic", action="store_true",
            help="generate the dataset in place (--classes/--n/--sigma/--seed)",
        )
        p.add_argument("--classes", type=int, help="classes to keep / generate")
        p.add_argument("--n", type=int, default=1000)
        p.add_argument("--sigma", type=float, default=0.35)
        p.add_argument("--center-box", type=float, default=1.0)
        p.add_argument("--metric", choices=["l2", "linf"], default="l2")
        if budget == "eps":
            p.add_argument("--eps", required=True, help="comma list of budgets")
        else:
            p.add_argument("--tau", required=True, help="comma list of penalty strengths")
        p.add_argument("--time-limit", type=float, default=300.0)
        p.add_argument("--stagnation", type=int, default=50)
        p.add_argument("--samples", type=int, help="offspring per generation")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="advrisk")
        p.add_argument("--max-configs", type=int)
        p.add_argument(
            "--parallel", action="store_true",
            help="run independent grid points in parallel processes",
        )

    ex = sub.add_parser("exhaustive", help="exact risk per budget")
    add_shared(ex, "eps")

    ge = sub.add_parser("genetic", help="genetic lower bound per budget")
    add_shared(ge, "eps")
    ge.add_argument("--rule-weights", default="1:1:0", help="add:swap:drop weights")

    gc = sub.add_parser("gencol-w2", help="column generation per tau")
    add_shared(gc, "tau")
    gc.add_argument("--beta", type=int, default=3, help="pool cap multiplier")

    ce = sub.add_parser("certify", help="gencol-w2 plus full dual certificate")
    add_shared(ce, "tau")
    ce.add_argument("--beta", type=int, default=3, help="pool cap multiplier")

    return parser


def _spec_from_args(args: argparse.Namespace) -> RunSpec:
    command = Command(args.command)
    if command is Command.GEN_DATA:
        SyntheticSpec(
            n_classes=args.classes, n_points=args.n,
            center_box=args.center_box, sigma=args.sigma, seed=args.seed,
        )
        return RunSpec(
            command=command, synthetic=True, classes=args.classes, n=args.n,
            sigma=args.sigma, center_box=args.center_box, seed=args.seed,
            out=args.out,
        )

    sources = [args.data is not None, args.cifar is not None, args.synthetic]
    if sum(sources) != 1:
        raise ValueError("exactly one of --data, --cifar, --synthetic is required")
    if args.cifar is not None and args.classes is None:
        raise ValueError("--cifar needs --classes")

    if command in (Command.EXHAUSTIVE, Command.GENETIC):
        eps = _parse_grid(args.eps, "--eps", allow_zero=True)
        tau: tuple[float, ...] = ()
    else:
        tau = _parse_grid(args.tau, "--tau", allow_zero=False)
        eps = ()
    weights = (
        _parse_weights(args.rule_weights)
        if command is Command.GENETIC
        else (1.0, 1.0, 0.0)
    )
    beta = getattr(args, "beta", 3)
    if args.max_configs is not None and args.max_configs < 1:
        raise ValueError("--max-configs must be positive")

    spec = RunSpec(
        command=command,
        data=args.data,
        cifar=args.cifar,
        synthetic=args.synthetic,
        classes=args.classes,
        n=args.n,
        sigma=args.sigma,
        center_box=args.center_box,
        metric=Metric.parse(args.metric),
        eps=eps,
        tau=tau,
        beta=beta,
        samples=args.samples,
        rule_weights=weights,
        time_limit=args.time_limit,
        stagnation=args.stagnation,
        seed=args.seed,
        out=args.out,
        max_configs=args.max_configs,
        parallel=args.parallel,
    )
    # let the parameter dataclasses reject bad combinations up front
    if args.synthetic:
        SyntheticSpec(
            n_classes=spec.classes if spec.classes is not None else 10,
            n_points=spec.n, center_box=spec.center_box, sigma=spec.sigma,
            seed=spec.seed,
        )
    if command is Command.GENETIC:
        GeneticParams(
            samples_per_generation=spec.samples, rule_weights=spec.rule_weights,
            time_limit=spec.time_limit, stagnation_generations=spec.stagnation,
            seed=spec.seed,
        )
    elif command in (Command.GENCOL_W2, Command.CERTIFY):
        for t in tau:
            GencolParams(
                tau=t, beta=spec.beta, samples_per_generation=spec.samples,
                time_limit=spec.time_limit, stagnation_generations=spec.stagnation,
                seed=spec.seed,
            )
    return spec


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_BAD_ARGS
    try:
        spec = _spec_from_args(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_ARGS
    try:
        return run(spec)
    except DataSourceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_DATA
    except EnumerationCapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP_EXCEEDED
    except CurveInvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (LpFailureError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LP_FAILURE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_ARGS


if __name__ == "__main__":
    sys.exit(main())
