"""Config-driven experiment runner with CSV and plot-data output.

An experiment is a problem, a grid of solver cells, and a seed list.  Every
(cell, seed) pair produces a `trace_<label>_s<seed>.csv` file and one row in
`summary.csv`; a tidy `plotdata_<experiment>.csv` (series_label, t,
residual_mstar) collects the residual curves, and `render_svg` can turn it
into a minimal log-scale line chart.  Wall-clock timings go to
`timing_<tag>.csv` sidecars and `metadata.txt`, so re-running a config with
the same seeds reproduces the deterministic CSV bodies byte for byte.

Exit codes: 0 all runs completed, 1 configuration error, 2 some runs failed
(failures are recorded in the summary, never fatal).
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import metrics, sketch, solvers
from .errors import ApproxNewtonError, DomainError
from .problems import (
    FiniteSumObjective,
    least_squares_objective,
    load_libsvm,
    svm_hinge2_objective,
    synthetic_spectrum_matrix,
    synthetic_spiked_matrix,
    synthetic_two_class,
)

LIPSCHITZ_FREE = "lipschitz_free"
SKETCH_SWEEP = "sketch_sweep"
REGULARIZED_SWEEP = "regularized_sweep"
NEWSAMP_SWEEP = "newsamp_sweep"
EMBEDDING_CHECK = "embedding_check"
CUSTOM = "custom"
EXPERIMENTS = (
    LIPSCHITZ_FREE,
    SKETCH_SWEEP,
    REGULARIZED_SWEEP,
    NEWSAMP_SWEEP,
    EMBEDDING_CHECK,
    CUSTOM,
)

OUTPUT_ENV_VAR = "APPROXNEWTON_OUT"

TRACE_COLUMNS = ("t", "grad_norm", "grad_mstar_norm", "inner_residual", "status")
SUMMARY_COLUMNS = (
    "tag",
    "seed",
    "status",
    "iters",
    "final_grad_mstar",
    "rate_class",
    "rho",
)
EMBEDDING_COLUMNS = ("kind", "seed", "achieved_eps", "holds")


@dataclass
class ExperimentConfig:
    experiment: str
    problem: dict
    grid: list[dict]
    seeds: list[int]
    output_dir: str
    max_iters: int = 100
    grad_tol: float = 1e-8
    full_scale: bool = False
    workers: int | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise DomainError(f"unknown experiment {self.experiment!r}")
        if not self.grid:
            raise DomainError("grid must not be empty")
        if not self.seeds:
            raise DomainError("seed list must not be empty")


@dataclass
class RunOutcome:
    tag: str
    label: str
    seed: int
    status: str
    iters: int
    final_grad_mstar: float | None
    rate_class: str
    rho: float | None
    trace: solvers.IterationTrace | None
    wall_ms: list[float] = field(default_factory=list)


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _write_csv(path: str, columns, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def build_objective(problem: dict) -> FiniteSumObjective:
    """Instantiate the objective described by a problem spec dict."""
    kind = problem.get("kind")
    if kind == "synthetic":
        ds = synthetic_spectrum_matrix(
            problem["n"], problem["d"], problem["decay"], problem.get("seed", 0)
        )
        return least_squares_objective(ds.rows, ds.labels)
    if kind == "spiked":
        ds = synthetic_spiked_matrix(
            problem["n"],
            problem["d"],
            problem.get("seed", 0),
            n_heavy=problem.get("n_heavy"),
            heavy_scale=problem.get("heavy_scale", 0.3),
        )
        return least_squares_objective(ds.rows, ds.labels)
    if kind == "two_class":
        ds = synthetic_two_class(
            problem["n"],
            problem["d"],
            problem.get("seed", 0),
            separation=problem.get("separation", 2.0),
        )
        return svm_hinge2_objective(ds, C=problem.get("C", 1.0))
    if kind == "libsvm":
        ds = load_libsvm(problem["path"], binarize_class=problem.get("binarize_class"))
        return svm_hinge2_objective(ds, C=problem.get("C", 1.0))
    raise DomainError(f"unknown problem kind {kind!r}")


def _solver_config(cell: dict, cfg: ExperimentConfig, seed: int) -> solvers.SolverConfig:
    return solvers.SolverConfig(
        hessian_method=cell.get("method", "exact"),
        sketch_kind=cell.get("sketch_kind"),
        sketch_size=cell.get("sketch_size"),
        sample_size=cell.get("sample_size"),
        sample_fraction=cell.get("sample_fraction"),
        alpha=cell.get("alpha", 0.0),
        rank=cell.get("rank"),
        eps0=cell.get("eps0", 0.5),
        eps0_schedule=cell.get("eps0_schedule", solvers.SCHEDULE_CONSTANT),
        gradient_mode=cell.get("gradient_mode", solvers.GRADIENT_FULL),
        gradient_sample_size=cell.get("gradient_sample_size"),
        inner=cell.get("inner", solvers.INNER_EXACT),
        eps1=cell.get("eps1", 0.0),
        max_iters=cell.get("max_iters", cfg.max_iters),
        grad_tol=cell.get("grad_tol", cfg.grad_tol),
        divergence_guard=cell.get("divergence_guard", 1e8),
        seed=seed,
        store_snapshots=cell.get("store_snapshots", False),
    )


def run_cell(
    obj: FiniteSumObjective,
    ref: metrics.MstarReference,
    cell: dict,
    cfg: ExperimentConfig,
    seed: int,
) -> RunOutcome:
    """Execute one grid cell at one seed and classify its trace."""
    label = cell.get("label") or cell.get("method", "run")
    tag = f"{label}_s{seed}"
    try:
        x0 = np.zeros(obj.d)
        warm = cell.get("warm_start_steps", 0)
        if warm:
            warm_trace = solvers.baseline_run(
                obj, "full_newton", x0, max_iters=warm, grad_tol=1e-300,
                store_snapshots=False,
            )
            x0 = warm_trace.x_final
        method = cell.get("method", "exact")
        if method in ("gradient_descent", "newton_cg", "full_newton"):
            trace = solvers.baseline_run(
                obj,
                method,
                x0,
                max_iters=cell.get("max_iters", cfg.max_iters),
                grad_tol=cell.get("grad_tol", cfg.grad_tol),
                eps1=cell.get("eps1", 0.0),
                seed=seed,
                store_snapshots=cell.get("store_snapshots", False),
            )
        else:
            run_cfg = _solver_config(cell, cfg, seed)
            trace = solvers.approximate_newton_run(obj, run_cfg, x0)
        metrics.fill_mstar_norms(trace, ref)
        try:
            report = metrics.classify_rate(trace, ref)
            rate_class, rho = report.classification, report.rho
        except ApproxNewtonError:
            rate_class, rho = "insufficient_data", None
        return RunOutcome(
            tag=tag,
            label=label,
            seed=seed,
            status=trace.status,
            iters=trace.n_steps,
            final_grad_mstar=trace.grad_mstar_norms[-1],
            rate_class=rate_class,
            rho=rho,
            trace=trace,
            wall_ms=list(trace.wall_ms),
        )
    except ApproxNewtonError as exc:
        return RunOutcome(
            tag=tag,
            label=label,
            seed=seed,
            status=f"error:{type(exc).__name__}",
            iters=0,
            final_grad_mstar=None,
            rate_class="",
            rho=None,
            trace=None,
        )


def _trace_rows(trace: solvers.IterationTrace):
    n = len(trace.grad_norms)
    mstar = trace.grad_mstar_norms or [None] * n
    rows = []
    for t in range(n):
        stepped = t < trace.n_steps
        rows.append(
            (
                t,
                trace.grad_norms[t],
                mstar[t],
                trace.inner_residuals[t] if stepped else None,
                "" if stepped else trace.status,
            )
        )
    return rows


def _run_embedding_check(cfg: ExperimentConfig, out_dir: str) -> int:
    problem = cfg.problem
    d = problem.get("d", 10)
    m = problem.get("m", 40 * d)
    eps = problem.get("eps", 0.5)
    A = rng.generator(problem.get("seed", 0)).standard_normal((m, d))
    rows = []
    rates = []
    for cell in cfg.grid:
        kind = cell["sketch_kind"]
        s = cell.get("sketch_size") or sketch.recommended_sketch_size(kind, d, eps)
        successes = 0
        for seed in cfg.seeds:
            if kind == sketch.LEVERAGE_SCORE:
                S = sketch.make_leverage_sketch(A, s, seed)
            else:
                S = sketch.make_oblivious_sketch(kind, s, m, seed)
            report = sketch.verify_subspace_embedding(S, A, eps)
            successes += report.holds
            rows.append((kind, seed, report.achieved_eps, int(report.holds)))
        rates.append((kind, s, successes / len(cfg.seeds)))
    _write_csv(os.path.join(out_dir, "embedding_summary.csv"), EMBEDDING_COLUMNS, rows)
    _write_csv(
        os.path.join(out_dir, "embedding_rates.csv"),
        ("kind", "sketch_size", "success_rate"),
        rates,
    )
    return 0


def run_experiment(cfg: ExperimentConfig) -> int:
    """Run every grid cell at every seed; write traces, summary, plot data."""
    out_dir = cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    started = time.time()
    if cfg.experiment == EMBEDDING_CHECK:
        code = _run_embedding_check(cfg, out_dir)
        _write_metadata(out_dir, cfg, started, [])
        return code

    obj = build_objective(cfg.problem)
    ref = metrics.compute_mstar_reference(obj, np.zeros(obj.d))

    jobs = [(cell, seed) for cell in cfg.grid for seed in cfg.seeds]
    workers = cfg.workers or min(os.cpu_count() or 1, len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(
                pool.map(lambda js: run_cell(obj, ref, js[0], cfg, js[1]), jobs)
            )
    else:
        outcomes = [run_cell(obj, ref, cell, cfg, seed) for cell, seed in jobs]

    summary_rows = []
    plot_rows = []
    for outcome in outcomes:
        summary_rows.append(
            (
                outcome.tag,
                outcome.seed,
                outcome.status,
                outcome.iters,
                outcome.final_grad_mstar,
                outcome.rate_class,
                outcome.rho,
            )
        )
        if outcome.trace is not None:
            _write_csv(
                os.path.join(out_dir, f"trace_{outcome.tag}.csv"),
                TRACE_COLUMNS,
                _trace_rows(outcome.trace),
            )
            _write_csv(
                os.path.join(out_dir, f"timing_{outcome.tag}.csv"),
                ("t", "wall_ms"),
                list(enumerate(outcome.wall_ms)),
            )
            for t, val in enumerate(outcome.trace.grad_mstar_norms):
                plot_rows.append((outcome.tag, t, val))
    _write_csv(os.path.join(out_dir, "summary.csv"), SUMMARY_COLUMNS, summary_rows)
    _write_csv(
        os.path.join(out_dir, f"plotdata_{cfg.experiment}.csv"),
        ("series_label", "t", "residual_mstar"),
        plot_rows,
    )
    _write_metadata(out_dir, cfg, started, outcomes)
    failed = any(o.status.startswith("error:") for o in outcomes)
    return 2 if failed else 0


def _write_metadata(out_dir, cfg, started, outcomes) -> None:
    # Everything time-dependent lives here, outside the deterministic CSVs.
    with open(os.path.join(out_dir, "metadata.txt"), "w") as fh:
        fh.write(f"experiment: {cfg.experiment}\n")
        fh.write(f"started_unix: {started:.3f}\n")
        fh.write(f"elapsed_s: {time.time() - started:.3f}\n")
        for o in outcomes:
            fh.write(f"run {o.tag}: total_wall_ms={sum(o.wall_ms):.3f}\n")


def load_config(path: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse a YAML experiment file, applying CLI overrides on top."""
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise DomainError("config file must contain a mapping")
    data = dict(data)
    for key, val in (overrides or {}).items():
        if val is not None:
            data[key] = val
    known = {
        "experiment",
        "problem",
        "grid",
        "seeds",
        "output_dir",
        "max_iters",
        "grad_tol",
        "full_scale",
        "workers",
    }
    unknown = set(data) - known
    if unknown:
        raise DomainError(f"unknown config keys: {sorted(unknown)}")
    data.setdefault("output_dir", os.environ.get(OUTPUT_ENV_VAR, "approxnewton-out"))
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise DomainError(f"bad config: {exc}") from exc


def default_config(
    experiment: str, output_dir: str, full_scale: bool = False
) -> ExperimentConfig:
    """Built-in experiment definitions reproducing the study's three setups."""
    if experiment == LIPSCHITZ_FREE:
        # separation/C chosen so the support set evolves under Newton instead
        # of the ridge term freezing it (see README calibration notes)
        return ExperimentConfig(
            experiment=experiment,
            problem={
                "kind": "two_class",
                "n": 2000,
                "d": 50,
                "seed": 20,
                "separation": 3.0,
                "C": 50.0,
            },
            grid=[
                {
                    "label": "subsampled-5pct-sv",
                    "method": "subsampled",
                    "sample_fraction": 0.05,
                },
                {"label": "newton", "method": "exact"},
            ],
            seeds=[0],
            output_dir=output_dir,
            max_iters=200,
            grad_tol=1e-10,
        )
    if experiment == SKETCH_SWEEP:
        d = 54
        grid = []
        for kind in sketch.ALL_KINDS:
            for mult in (2, 4, 8):
                grid.append(
                    {
                        "label": f"{kind}-l{mult}d",
                        "method": "sketched",
                        "sketch_kind": kind,
                        "sketch_size": mult * d,
                    }
                )
        return ExperimentConfig(
            experiment=experiment,
            problem={"kind": "synthetic", "n": 10000, "d": d, "decay": 1.2, "seed": 7},
            grid=grid,
            seeds=[0, 1, 2],
            output_dir=output_dir,
            max_iters=150,
            grad_tol=1e-8,
        )
    if experiment in (REGULARIZED_SWEEP, NEWSAMP_SWEEP):
        if full_scale:
            n, d, sizes = 8000, 5000, (100, 300, 600)
            max_iters = 10000
        else:
            n, d, sizes = 800, 500, (10, 30, 60)
            max_iters = 2500
        problem = {"kind": "spiked", "n": n, "d": d, "seed": 11}
        grid = []
        if experiment == REGULARIZED_SWEEP:
            for size in sizes:
                for alpha in (1e-8, 1.2, 1.6, 2.2):
                    grid.append(
                        {
                            "label": f"S{size}-alpha{alpha:g}",
                            "method": "regularized_subsampled",
                            "sample_size": size,
                            "alpha": alpha,
                        }
                    )
        else:
            for size in sizes[::2]:
                for rank in (2, 20):
                    grid.append(
                        {
                            "label": f"S{size}-r{rank}",
                            "method": "newsamp",
                            "sample_size": size,
                            "rank": rank,
                        }
                    )
        return ExperimentConfig(
            experiment=experiment,
            problem=problem,
            grid=grid,
            seeds=[0],
            output_dir=output_dir,
            max_iters=max_iters,
            grad_tol=1e-6,
        )
    if experiment == EMBEDDING_CHECK:
        return ExperimentConfig(
            experiment=experiment,
            problem={"kind": "embedding", "d": 10, "m": 400, "eps": 0.5, "seed": 3},
            grid=[{"sketch_kind": kind} for kind in sketch.ALL_KINDS],
            seeds=list(range(200)),
            output_dir=output_dir,
        )
    raise DomainError(f"no default config for experiment {experiment!r}")


def emit_plot_data(run_dir: str) -> list[str]:
    """Rebuild plot-ready files from a finished run directory.

    Returns the paths written; raises DomainError when the expected summary
    or trace files are missing.
    """
    summary_path = os.path.join(run_dir, "summary.csv")
    if not os.path.isfile(summary_path):
        raise DomainError(f"expected file missing: {summary_path}")
    with open(summary_path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    tag_idx = header.index("tag")
    series: dict[str, list[tuple[int, float]]] = {}
    missing = []
    for row in rows:
        tag = row[tag_idx]
        trace_path = os.path.join(run_dir, f"trace_{tag}.csv")
        if not os.path.isfile(trace_path):
            missing.append(trace_path)
            continue
        pts = []
        with open(trace_path) as fh:
            fh.readline()
            for line in fh:
                parts = line.rstrip("\n").split(",")
                if parts[2]:
                    pts.append((int(parts[0]), float(parts[2])))
        series[tag] = pts
    if missing:
        raise DomainError(f"expected trace files missing: {missing}")
    if not series:
        raise DomainError("no trace data found to plot")
    out_csv = os.path.join(run_dir, "plotdata_replot.csv")
    flat = [(tag, t, v) for tag, pts in sorted(series.items()) for t, v in pts]
    _write_csv(out_csv, ("series_label", "t", "residual_mstar"), flat)
    out_svg = os.path.join(run_dir, "plot_replot.svg")
    render_svg(series, out_svg)
    return [out_csv, out_svg]


def render_svg(
    series: dict[str, list[tuple[int, float]]],
    path: str,
    width: int = 640,
    height: int = 420,
) -> None:
    """Tiny static line chart: iteration on x, residual on a log10 y-axis."""
    pad = 50
    pts_all = [p for pts in series.values() for p in pts if p[1] > 0]
    if not pts_all:
        raise DomainError("no positive residuals to plot")
    tmax = max(p[0] for p in pts_all) or 1
    ymin = math.log10(min(p[1] for p in pts_all))
    ymax = math.log10(max(p[1] for p in pts_all))
    if ymax - ymin < 1e-9:
        ymax = ymin + 1.0

    def sx(t):
        return pad + (width - 2 * pad) * t / tmax

    def sy(v):
        frac = (math.log10(v) - ymin) / (ymax - ymin)
        return height - pad - (height - 2 * pad) * frac

    palette = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" '
        f'y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width // 2}" y="{height - 10}" font-size="12">iteration</text>',
        f'<text x="12" y="{height // 2}" font-size="12" '
        f'transform="rotate(-90 12 {height // 2})">residual (log scale)</text>',
    ]
    for i, (label, pts) in enumerate(sorted(series.items())):
        pos = [(t, v) for t, v in pts if v > 0]
        if not pos:
            continue
        coords = " ".join(f"{sx(t):.2f},{sy(v):.2f}" for t, v in pos)
        color = palette[i % len(palette)]
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
            f'points="{coords}"/>'
        )
        parts.append(
            f'<text x="{width - pad + 4}" y="{pad + 14 * i}" font-size="10" '
            f'fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
