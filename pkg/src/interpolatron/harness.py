"""Experiment drivers behind the CLI: single runs, comparisons,
toy escape/overshoot grids, rate certification, and sensitivity sweeps.

All outputs are deterministic: identical config and seeds produce
byte-identical files.  Trace CSVs have the columns
``step,epoch,beta,loss,grad_norm,alpha_logged`` (plus ``x`` for 1-D runs
when iterate logging is on); reals are serialized with 17 significant
digits and newline-only line endings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, NamedOptimizer, build_problem, resolved_text
from .core import HistoryWindow, MixingCoefficients, MixingMode, StepSchedule
from .optimizers import (
    OptimizerSpec,
    RunResult,
    TraceRow,
    interpolatron_step,
    momentum_step,
    run_optimizer,
    sgd_step,
)
from .problems import escape_steps, max_excursion
from .theory import (
    CompanionSpec,
    NoCertificateError,
    certify,
    contraction_factor,
    fit_rate,
)

__all__ = [
    "run_single",
    "run_compare",
    "run_toy",
    "run_certify",
    "run_sweep",
    "ComparisonReport",
    "ToyReport",
    "CertifyReport",
    "SweepReport",
    "write_trace",
    "TRACE_COLUMNS",
]

TRACE_COLUMNS = ("step", "epoch", "beta", "loss", "grad_norm", "alpha_logged")


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def write_trace(path, trace, iterates=None) -> None:
    """Write one run's trace CSV (header mandatory, newline endings)."""
    path = Path(path)
    columns = TRACE_COLUMNS + (("x",) if iterates is not None else ())
    lines = [",".join(columns)]
    for i, row in enumerate(trace):
        alpha = ";".join(_fmt(a) for a in row.alpha) if row.alpha is not None else ""
        cells = [
            str(row.step),
            str(row.epoch),
            _fmt(row.beta),
            _fmt(row.loss),
            _fmt(row.grad_norm),
            alpha,
        ]
        if iterates is not None:
            cells.append(_fmt(float(iterates[i][0])))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", newline="\n")


def read_trace(path):
    """Read a trace CSV back into a list of dict rows (strings kept)."""
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:]]


@dataclass(frozen=True)
class RunRecord:
    name: str
    seed: int
    result: RunResult
    trace_path: Path


@dataclass(frozen=True)
class ComparisonReport:
    records: tuple
    summary_path: Path
    threshold: float

    @property
    def all_diverged(self) -> bool:
        return all(r.result.diverged for r in self.records)


def _trace_filename(name: str, seed: int) -> str:
    return f"trace_{name}_s{seed}.csv"


def _execute_runs(config: ExperimentConfig, outdir: Path, quiet: bool):
    """Run every (optimizer, seed) pair in declared order; write traces."""
    records = []
    want_iterates = config.log_iterates
    for opt in config.optimizers:
        schedule = config.schedule_for(opt)
        for seed in config.seeds:
            problem, x0 = build_problem(config.problem, seed)
            if want_iterates and problem.dim != 1:
                raise ValueError("iterate logging is only supported for 1-D problems")
            result = run_optimizer(
                problem,
                opt.spec,
                schedule,
                steps=config.steps,
                batch_size=config.batch_size,
                seed=seed,
                x0=x0,
                record_iterates=want_iterates,
            )
            path = outdir / _trace_filename(opt.name, seed)
            write_trace(path, result.trace, result.iterates if want_iterates else None)
            if not quiet:
                status = f"diverged at step {result.diverged_at}" if result.diverged else "ok"
                print(f"[{opt.name} seed={seed}] {len(result.trace)} rows, {status}")
            records.append(RunRecord(opt.name, seed, result, path))
    return records


def _write_resolved(config: ExperimentConfig, outdir: Path) -> None:
    (outdir / "config.resolved").write_text(resolved_text(config), newline="\n")


def run_single(config: ExperimentConfig, outdir, quiet: bool = False):
    """The ``run`` subcommand: exactly one configured optimizer."""
    if len(config.optimizers) != 1:
        raise ValueError("'run' expects exactly one configured optimizer")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_resolved(config, outdir)
    return _execute_runs(config, outdir, quiet)


def steps_to_threshold(trace, threshold: float):
    for row in trace:
        if math.isfinite(row.loss) and row.loss <= threshold:
            return row.step
    return None


def _alpha_unit_fraction(trace):
    rows = [r for r in trace if r.alpha is not None]
    if not rows:
        return None
    inside = sum(1 for r in rows if all(0.0 <= a <= 1.0 for a in r.alpha))
    return inside / len(rows)


def run_compare(config: ExperimentConfig, outdir, quiet: bool = False) -> ComparisonReport:
    """Run all (optimizer, seed) pairs and write per-run traces plus a
    summary CSV with columns
    name,seed,final_loss,best_loss,steps_to_threshold,diverged,alpha_in_unit_fraction.

    The steps-to-threshold metric uses loss <= 1.05 x the best loss seen
    across every run in the comparison.  Divergence of one run is
    recorded, not fatal.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_resolved(config, outdir)
    records = _execute_runs(config, outdir, quiet)

    finite_losses = [
        row.loss
        for rec in records
        for row in rec.result.trace
        if math.isfinite(row.loss)
    ]
    best = min(finite_losses) if finite_losses else math.inf
    threshold = 1.05 * best if best > 0 else best + 0.05 * abs(best)

    lines = ["name,seed,final_loss,best_loss,steps_to_threshold,diverged,alpha_in_unit_fraction"]
    for rec in records:
        trace = rec.result.trace
        losses = [r.loss for r in trace if math.isfinite(r.loss)]
        run_best = min(losses) if losses else math.nan
        stt = steps_to_threshold(trace, threshold)
        frac = _alpha_unit_fraction(trace)
        lines.append(
            ",".join(
                [
                    rec.name,
                    str(rec.seed),
                    _fmt(trace[-1].loss) if trace else "",
                    _fmt(run_best) if losses else "",
                    str(stt) if stt is not None else "",
                    "true" if rec.result.diverged else "false",
                    _fmt(frac) if frac is not None else "",
                ]
            )
        )
    summary_path = outdir / "summary.csv"
    summary_path.write_text("\n".join(lines) + "\n", newline="\n")
    return ComparisonReport(records=tuple(records), summary_path=summary_path, threshold=threshold)


# ---------------------------------------------------------------------------
# toy escape / overshoot grids


@dataclass(frozen=True)
class ToyPoint:
    beta: float
    tau: float
    alpha1: float
    momentum_metric: float
    interp_metric: float
    momentum_monotone: bool = False


@dataclass(frozen=True)
class ToyReport:
    kind: str
    points: tuple
    momentum_median: float
    interp_median: float
    interp_escape_share: float
    monotone_points: int
    best_point: ToyPoint | None
    grid_path: Path
    report_path: Path


def _toy_momentum_beta(beta: float, tau: float, alpha1: float) -> float:
    """Terminal-velocity matching for the escape grid: equalize the two
    recursions' steady displacement per unit gradient,
    beta_m / (1 - tau) = beta / (alpha1 + 2 alpha2)."""
    alpha2 = 1.0 - alpha1
    return beta * (1.0 - tau) / (alpha1 + 2.0 * alpha2)


def _run_momentum_1d(fn, x0: float, beta: float, tau: float, steps: int, x1: float | None = None):
    xs = [x0]
    x_prev = x0
    x = x0 if x1 is None else x1
    if x1 is not None:
        xs.append(x1)
    remaining = steps - (1 if x1 is not None else 0)
    for _ in range(remaining):
        g = fn.gradient(x)
        x_new = (1.0 + tau) * x - tau * x_prev - beta * g
        x_prev, x = x, x_new
        xs.append(x)
    return xs


def _run_interp_1d(fn, x0: float, beta: float, alpha1: float, steps: int, x1: float | None = None):
    a2 = 1.0 - alpha1
    xs = [x0]
    if x1 is None:
        hist_x = [x0, x0]
        hist_g = 0.0  # replicate-zero older gradient
    else:
        hist_x = [x1, x0]
        hist_g = fn.gradient(x0)
        xs.append(x1)
    remaining = steps - (1 if x1 is not None else 0)
    for _ in range(remaining):
        g = fn.gradient(hist_x[0])
        x_new = alpha1 * hist_x[0] + a2 * hist_x[1] - beta * (alpha1 * g + a2 * hist_g)
        hist_g = g
        hist_x = [x_new, hist_x[0]]
        xs.append(x_new)
    return xs


def run_toy(config: ExperimentConfig, outdir, quiet: bool = False) -> ToyReport:
    """Escape (flat_region) or overshoot (narrow_well) grid.

    Each grid point (beta, tau, alpha1) pairs one heavy-ball run with one
    interpolation run.  On the flat region the heavy ball uses the
    terminal-velocity-matched rate and both methods start natively; the
    metric is the escape step count (inf when trapped).  On the well both
    methods share one plain gradient first step at the grid rate and the
    metric is the largest excursion from the well center over
    ``well_steps`` steps; heavy-ball runs whose excursion grows at every
    step are flagged as never returning.
    """
    kind = config.problem["kind"]
    if kind not in ("flat_region", "narrow_well"):
        raise ValueError("'toy' expects a flat_region or narrow_well problem")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_resolved(config, outdir)

    problem, x0v = build_problem(config.problem, config.seeds[0])
    fn = problem.fn
    x0 = float(x0v[0])
    toy = config.toy
    points = []
    escape_ref = (29.0, 4.0)  # reported escape counts sought by the sweep

    for beta in toy["betas"]:
        for tau in toy["taus"]:
            for alpha1 in toy["alpha1s"]:
                if kind == "flat_region":
                    bm = _toy_momentum_beta(beta, tau, alpha1)
                    xs_m = _run_momentum_1d(fn, x0, bm, tau, toy["max_steps"])
                    xs_i = _run_interp_1d(fn, x0, beta, alpha1, toy["max_steps"])
                    region = (-0.5 * config.problem["flat_width"], config.problem["flat_width"])
                    em = escape_steps(xs_m[1:], region, fn.value)
                    ei = escape_steps(xs_i[1:], region, fn.value)
                    points.append(
                        ToyPoint(
                            beta=beta,
                            tau=tau,
                            alpha1=alpha1,
                            momentum_metric=float(em) if em is not None else math.inf,
                            interp_metric=float(ei) if ei is not None else math.inf,
                        )
                    )
                else:
                    x1 = x0 - beta * fn.gradient(x0)  # shared first plain step
                    xs_m = _run_momentum_1d(fn, x0, beta, tau, toy["well_steps"], x1=x1)
                    xs_i = _run_interp_1d(fn, x0, beta, alpha1, toy["well_steps"], x1=x1)
                    center = 0.0
                    excm = max_excursion(xs_m, center)
                    exci = max_excursion(xs_i, center)
                    mono = all(
                        abs(b - center) > abs(a - center)
                        for a, b in zip(xs_m, xs_m[1:])
                    )
                    points.append(
                        ToyPoint(
                            beta=beta,
                            tau=tau,
                            alpha1=alpha1,
                            momentum_metric=excm,
                            interp_metric=exci,
                            momentum_monotone=mono,
                        )
                    )

    mom = np.array([p.momentum_metric for p in points])
    itp = np.array([p.interp_metric for p in points])
    mom_median = float(np.median(mom))
    itp_median = float(np.median(itp))

    if kind == "flat_region":
        mom_escaped = [p for p in points if math.isfinite(p.momentum_metric)]
        if mom_escaped:
            share = sum(
                1 for p in mom_escaped if math.isfinite(p.interp_metric)
            ) / len(mom_escaped)
        else:
            share = 1.0
        finite_both = [
            p
            for p in points
            if math.isfinite(p.momentum_metric) and math.isfinite(p.interp_metric)
        ]
        best = min(
            finite_both,
            key=lambda p: abs(p.momentum_metric - escape_ref[0])
            + abs(p.interp_metric - escape_ref[1]),
            default=None,
        )
    else:
        share = sum(1 for p in points if p.interp_metric < p.momentum_metric) / len(points)
        best = max(points, key=lambda p: p.momentum_metric)
    monotone_points = sum(1 for p in points if p.momentum_monotone)

    grid_path = outdir / "toy_grid.csv"
    header = "beta,tau,alpha1,momentum_metric,interp_metric,momentum_monotone"
    lines = [header]
    for p in points:
        lines.append(
            ",".join(
                [
                    _fmt(p.beta),
                    _fmt(p.tau),
                    _fmt(p.alpha1),
                    _fmt(p.momentum_metric),
                    _fmt(p.interp_metric),
                    "true" if p.momentum_monotone else "false",
                ]
            )
        )
    grid_path.write_text("\n".join(lines) + "\n", newline="\n")

    report_path = outdir / "toy_report.txt"
    rep = [
        f"problem: {kind}",
        f"grid points: {len(points)}",
        f"momentum median metric: {mom_median}",
        f"interpolation median metric: {itp_median}",
    ]
    if kind == "flat_region":
        rep.append(f"interpolation escapes at {share:.0%} of momentum's escape points")
        if best is not None:
            rep.append(
                "closest to the reported 29/4 escape counts: "
                f"beta={best.beta} tau={best.tau} alpha1={best.alpha1} "
                f"momentum={best.momentum_metric:.0f} interpolation={best.interp_metric:.0f}"
            )
    else:
        rep.append(f"interpolation excursion smaller at {share:.0%} of grid points")
        rep.append(f"momentum never-returns (monotone growth) points: {monotone_points}")
        if best is not None:
            rep.append(
                f"largest momentum excursion {best.momentum_metric:.3f} at "
                f"beta={best.beta} tau={best.tau} (interpolation {best.interp_metric:.3f})"
            )
    report_path.write_text("\n".join(rep) + "\n", newline="\n")

    if config.log_iterates and best is not None:
        _write_toy_traces(config, fn, x0, best, kind, outdir)

    if not quiet:
        for line in rep:
            print(line)

    return ToyReport(
        kind=kind,
        points=tuple(points),
        momentum_median=mom_median,
        interp_median=itp_median,
        interp_escape_share=share,
        monotone_points=monotone_points,
        best_point=best,
        grid_path=grid_path,
        report_path=report_path,
    )


def _write_toy_traces(config, fn, x0, point, kind, outdir: Path) -> None:
    """Write 1-D traces (with iterate column) for the highlighted grid
    point, plus a sampled curve of the landscape for plotting."""
    steps = config.toy["max_steps"] if kind == "flat_region" else config.toy["well_steps"]
    if kind == "flat_region":
        bm = _toy_momentum_beta(point.beta, point.tau, point.alpha1)
        xs_m = _run_momentum_1d(fn, x0, bm, point.tau, steps)
        xs_i = _run_interp_1d(fn, x0, point.beta, point.alpha1, steps)
        beta_m = bm
    else:
        x1 = x0 - point.beta * fn.gradient(x0)
        xs_m = _run_momentum_1d(fn, x0, point.beta, point.tau, steps, x1=x1)
        xs_i = _run_interp_1d(fn, x0, point.beta, point.alpha1, steps, x1=x1)
        beta_m = point.beta
    for label, xs, beta in (("momentum", xs_m, beta_m), ("interpolation", xs_i, point.beta)):
        rows = [
            TraceRow(
                step=t,
                epoch=t - 1,
                beta=beta,
                loss=fn.value(x),
                grad_norm=abs(fn.gradient(x)),
                alpha=None,
            )
            for t, x in enumerate(xs[1:], start=1)
        ]
        write_trace(
            outdir / f"toy_trace_{label}.csv",
            rows,
            iterates=[np.array([x]) for x in xs[1:]],
        )
    lo = min(min(xs_m), min(xs_i)) - 0.5
    hi = max(max(xs_m), max(xs_i)) + 0.5
    grid = np.linspace(lo, hi, 512)
    lines = ["x,f"] + [f"{_fmt(x)},{_fmt(fn.value(x))}" for x in grid]
    (outdir / "curve.csv").write_text("\n".join(lines) + "\n", newline="\n")


# ---------------------------------------------------------------------------
# certification


@dataclass(frozen=True)
class CertifyReport:
    certified: bool
    theta: float
    spectral_radius: float | None
    xi: float | None
    xi_hat: float
    d0_hat: float
    rate_ok: bool | None
    bound_ok: bool | None
    report_path: Path


def run_certify(config: ExperimentConfig, outdir, quiet: bool = False) -> CertifyReport:
    """Certify the linear rate on the configured quadratic and check it
    against the trajectory's fitted rate.

    When the contraction hypothesis fails (theta >= 1) the report states
    that no certificate exists but the trajectory still runs.
    """
    if config.problem["kind"] != "quadratic":
        raise ValueError("'certify' expects a quadratic problem")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_resolved(config, outdir)

    seed = config.seeds[0]
    problem, x0 = build_problem(config.problem, seed)
    cert_cfg = config.certify
    alphas = MixingCoefficients(tuple(cert_cfg["alphas"]), MixingMode.INTERPOLATION)
    beta = cert_cfg["beta"]
    spec = OptimizerSpec(kind="interpolatron", k=alphas.k, alphas=alphas)
    schedule = StepSchedule(beta0=beta)

    result = run_optimizer(
        problem,
        spec,
        schedule,
        steps=cert_cfg["steps"],
        batch_size=None,
        seed=seed,
        x0=x0,
        record_iterates=True,
    )
    write_trace(outdir / _trace_filename("certify", seed), result.trace)
    distances = [float(np.linalg.norm(x - problem.optimum)) for x in result.iterates]
    xi_hat, d0_hat = fit_rate(distances)

    theta = contraction_factor(beta, problem.mu, problem.eta)
    comp = CompanionSpec(alphas=alphas, beta=beta, hessian_eigs=tuple(problem.diag_hessian))
    lines = [f"theta: {theta}"]
    if theta >= 1.0:
        certified = False
        radius = xi = None
        rate_ok = bound_ok = None
        lines.append("no certificate (contraction hypothesis theta < 1 fails)")
    else:
        certificate = certify(comp, problem.mu, problem.eta)
        radius, xi = certificate.spectral_radius, certificate.xi
        certified = True
        rate_ok = xi_hat <= radius + cert_cfg["tolerance"]
        # per-step distance bound with 5% slack over the retained range
        keep = len(distances)
        while keep > 0 and distances[keep - 1] < 1e-13:
            keep -= 1
        bound_ok = all(
            distances[t] <= 1.05 * d0_hat * xi_hat**t for t in range(keep)
        )
        lines.append(f"spectral radius: {radius}")
        lines.append(f"certified xi: {xi}")
        lines.append(f"rate check (xi_hat <= radius + {cert_cfg['tolerance']}): {'pass' if rate_ok else 'fail'}")
        lines.append(f"bound check (5% slack): {'pass' if bound_ok else 'fail'}")
    lines.append(f"fitted xi_hat: {xi_hat}")
    lines.append(f"fitted d0_hat: {d0_hat}")

    report_path = outdir / "certify_report.txt"
    report_path.write_text("\n".join(lines) + "\n", newline="\n")
    if not quiet:
        for line in lines:
            print(line)
    return CertifyReport(
        certified=certified,
        theta=theta,
        spectral_radius=radius,
        xi=xi,
        xi_hat=xi_hat,
        d0_hat=d0_hat,
        rate_ok=rate_ok,
        bound_ok=bound_ok,
        report_path=report_path,
    )


# ---------------------------------------------------------------------------
# sensitivity sweep


@dataclass(frozen=True)
class SweepReport:
    alpha_spread: float
    beta_spread: float
    rows: tuple
    summary_path: Path
    report_path: Path


def run_sweep(config: ExperimentConfig, outdir, quiet: bool = False) -> SweepReport:
    """Sensitivity grids: final loss across alpha1 values at a fixed rate
    versus across rates at a fixed alpha1, two-step interpolation.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_resolved(config, outdir)
    sweep = config.sweep
    seed = config.seeds[0]

    rows = []

    def one(axis, value, beta0, alpha1):
        alphas = MixingCoefficients((alpha1, 1.0 - alpha1), MixingMode.INTERPOLATION)
        spec = OptimizerSpec(kind="interpolatron", k=2, alphas=alphas)
        schedule = config.schedule.with_beta0(beta0)
        problem, x0 = build_problem(config.problem, seed)
        result = run_optimizer(
            problem,
            spec,
            schedule,
            steps=config.steps,
            batch_size=config.batch_size,
            seed=seed,
            x0=x0,
        )
        final = result.trace[-1].loss
        name = f"{axis}_{value:g}"
        write_trace(outdir / _trace_filename(name, seed), result.trace)
        rows.append((axis, value, final, result.diverged))
        return final

    alpha_finals = [
        one("alpha1", a, sweep["fixed_beta"], a) for a in sweep["alpha1s"]
    ]
    beta_finals = [
        one("beta", b, b, sweep["fixed_alpha1"]) for b in sweep["betas"]
    ]
    alpha_spread = max(alpha_finals) - min(alpha_finals)
    beta_spread = max(beta_finals) - min(beta_finals)

    summary_path = outdir / "sweep_summary.csv"
    lines = ["axis,value,final_loss,diverged"]
    for axis, value, final, div in rows:
        lines.append(f"{axis},{_fmt(value)},{_fmt(final)},{'true' if div else 'false'}")
    summary_path.write_text("\n".join(lines) + "\n", newline="\n")

    report_lines = [
        f"final-loss spread across alpha1 {sweep['alpha1s']} at beta={sweep['fixed_beta']}: {alpha_spread}",
        f"final-loss spread across beta {sweep['betas']} at alpha1={sweep['fixed_alpha1']}: {beta_spread}",
        f"mixing weights matter less than the learning rate: {'yes' if alpha_spread < beta_spread else 'no'}",
    ]
    report_path = outdir / "sweep_report.txt"
    report_path.write_text("\n".join(report_lines) + "\n", newline="\n")
    if not quiet:
        for line in report_lines:
            print(line)
    return SweepReport(
        alpha_spread=alpha_spread,
        beta_spread=beta_spread,
        rows=tuple(rows),
        summary_path=summary_path,
        report_path=report_path,
    )
