"""Experiment configuration: a YAML document with nested sections.

``parse_config`` validates everything up front and materializes every
default, so the resolved form echoed to ``<out>/config.resolved`` is the
complete description of the experiment.  Errors name the offending key.

Top-level sections::

    problem:     kind: quadratic | flat_region | narrow_well | mlp_blobs
                 plus kind-specific parameters
    schedule:    beta0, decay_epochs, factor
    run:         steps or epochs, batch_size, seeds, log_iterates
    optimizers:  list of {name, kind, ...}; optional per-optimizer beta0
    toy:         betas, taus, alpha1s, max_steps, well_steps
    certify:     alphas, beta, steps, tolerance
    sweep:       alpha1s, betas, fixed_beta, fixed_alpha1
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import yaml

from .core import MixingCoefficients, MixingMode, StepSchedule, as_vector
from .nets import MlpArchitecture, MlpBlobsProblem
from .optimizers import KINDS, OptimizerSpec
from .problems import (
    PiecewiseProblem1D,
    QuadraticProblem,
    make_blobs,
    make_flat_region,
    make_narrow_well,
)

__all__ = ["ConfigError", "ExperimentConfig", "NamedOptimizer", "parse_config", "resolved_text"]


class ConfigError(ValueError):
    """Configuration document is malformed; the message names the key."""


@dataclass(frozen=True)
class NamedOptimizer:
    name: str
    spec: OptimizerSpec
    beta0: float | None = None  # per-optimizer learning-rate override


@dataclass(frozen=True)
class ExperimentConfig:
    problem: dict
    schedule: StepSchedule
    optimizers: tuple
    steps: int
    batch_size: int | None
    seeds: tuple
    log_iterates: bool
    toy: dict
    certify: dict
    sweep: dict

    def schedule_for(self, opt: NamedOptimizer) -> StepSchedule:
        if opt.beta0 is None:
            return self.schedule
        return self.schedule.with_beta0(opt.beta0)


def _require(mapping, key, path, types=None):
    if key not in mapping:
        raise ConfigError(f"missing required key '{path}.{key}'")
    value = mapping[key]
    if types is not None and not isinstance(value, types):
        raise ConfigError(
            f"'{path}.{key}' has wrong type {type(value).__name__}"
        )
    return value


def _positive(value, path):
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"'{path}' must be a number") from None
    if not value > 0:
        raise ConfigError(f"'{path}' must be positive, got {value!r}")
    return value


def _float_list(value, path):
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(f"'{path}' must be a nonempty list of numbers")
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"'{path}' must contain only numbers") from None


_PROBLEM_DEFAULTS = {
    "quadratic": {
        "eig_min": 0.1,
        "eig_max": 1.0,
        "eig_count": 10,
        "eigenvalues": None,
        "optimum": None,
        "start": "slow_axis",
    },
    "flat_region": {
        "flat_width": 1.09,
        "flat_slope": 0.1,
        "sheer_slope": -15.0,
        "start": -0.1,
    },
    "narrow_well": {
        "well_width": 1.0,
        "well_slope": 10.0,
        "outer_slope": 0.1,
        "start": -0.8,
    },
    "mlp_blobs": {
        "n": 300,
        "features": 4,
        "classes": 3,
        "spread": 1.0,
        "data_seed": 7,
        "center_scale": 3.0,
        "hidden": [16],
        "weight_decay": 2.0e-4,
    },
}


def _parse_problem(raw) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("'problem' must be a mapping")
    kind = _require(raw, "kind", "problem", str)
    if kind not in _PROBLEM_DEFAULTS:
        raise ConfigError(
            f"'problem.kind' unknown: {kind!r} "
            f"(expected one of {sorted(_PROBLEM_DEFAULTS)})"
        )
    resolved = {"kind": kind}
    defaults = _PROBLEM_DEFAULTS[kind]
    for key, default in defaults.items():
        resolved[key] = raw.get(key, default)
    for key in raw:
        if key != "kind" and key not in defaults:
            raise ConfigError(f"unknown key 'problem.{key}' for kind {kind!r}")
    if kind == "quadratic" and resolved["eigenvalues"] is not None:
        resolved["eigenvalues"] = _float_list(resolved["eigenvalues"], "problem.eigenvalues")
    if kind == "mlp_blobs":
        if resolved["n"] % resolved["classes"] != 0:
            raise ConfigError("'problem.n' must be divisible by 'problem.classes'")
        resolved["hidden"] = [int(h) for h in resolved["hidden"]]
    return resolved


def build_problem(problem_cfg: dict, seed: int):
    """Instantiate the configured problem; returns (problem, x0).

    The MLP start depends on the run seed (variance-scaled init); the
    analytic problems use the configured fixed start for every seed.
    """
    kind = problem_cfg["kind"]
    if kind == "quadratic":
        if problem_cfg["eigenvalues"] is not None:
            eigs = np.array(problem_cfg["eigenvalues"], dtype=np.float64)
        else:
            eigs = np.logspace(
                np.log10(problem_cfg["eig_min"]),
                np.log10(problem_cfg["eig_max"]),
                int(problem_cfg["eig_count"]),
            )
        d = eigs.size
        opt = problem_cfg["optimum"]
        optimum = as_vector(opt) if opt is not None else np.zeros(d)
        problem = QuadraticProblem(eigs, optimum)
        start = problem_cfg["start"]
        if isinstance(start, str):
            if start == "slow_axis":
                offset = np.zeros(d)
                offset[int(np.argmin(eigs))] = 1.0
            elif start == "ones":
                offset = np.ones(d)
            else:
                raise ConfigError(f"unknown 'problem.start' {start!r}")
            x0 = optimum + offset
        else:
            x0 = as_vector(start)
        return problem, x0
    if kind == "flat_region":
        fn = make_flat_region(
            problem_cfg["flat_width"],
            problem_cfg["flat_slope"],
            problem_cfg["sheer_slope"],
        )
        return PiecewiseProblem1D(fn), np.array([float(problem_cfg["start"])])
    if kind == "narrow_well":
        fn = make_narrow_well(
            problem_cfg["well_width"],
            problem_cfg["well_slope"],
            problem_cfg["outer_slope"],
        )
        return PiecewiseProblem1D(fn), np.array([float(problem_cfg["start"])])
    if kind == "mlp_blobs":
        data = make_blobs(
            n=int(problem_cfg["n"]),
            p=int(problem_cfg["features"]),
            classes=int(problem_cfg["classes"]),
            spread=float(problem_cfg["spread"]),
            seed=int(problem_cfg["data_seed"]),
            center_scale=float(problem_cfg["center_scale"]),
        )
        widths = (
            [int(problem_cfg["features"])]
            + list(problem_cfg["hidden"])
            + [int(problem_cfg["classes"])]
        )
        arch = MlpArchitecture(tuple(widths), float(problem_cfg["weight_decay"]))
        problem = MlpBlobsProblem(arch, data)
        return problem, problem.initial_params(seed)
    raise ConfigError(f"unknown problem kind {kind!r}")


def _parse_optimizer(raw, idx: int) -> NamedOptimizer:
    path = f"optimizers[{idx}]"
    if not isinstance(raw, dict):
        raise ConfigError(f"'{path}' must be a mapping")
    name = _require(raw, "name", path, str)
    kind = _require(raw, "kind", path, str)
    if kind not in KINDS:
        raise ConfigError(
            f"'{path}.kind' unknown optimizer kind {kind!r} "
            f"(expected one of {list(KINDS)})"
        )
    known = {
        "name", "kind", "alphas", "tau", "k", "adam_betas", "adam_eps",
        "ridge", "history_init", "init_stddev", "beta0",
    }
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown key '{path}.{key}'")
    kwargs = {"kind": kind}
    if "alphas" in raw:
        alphas = _float_list(raw["alphas"], f"{path}.alphas")
        try:
            kwargs["alphas"] = MixingCoefficients(tuple(alphas), MixingMode.INTERPOLATION)
        except ValueError as exc:
            raise ConfigError(f"'{path}.alphas': {exc}") from None
        kwargs["k"] = len(alphas)
    if "k" in raw:
        kwargs["k"] = int(raw["k"])
    if "tau" in raw:
        kwargs["tau"] = float(raw["tau"])
    if "adam_betas" in raw:
        b = _float_list(raw["adam_betas"], f"{path}.adam_betas")
        if len(b) != 2:
            raise ConfigError(f"'{path}.adam_betas' must have two entries")
        kwargs["adam_betas"] = tuple(b)
    if "adam_eps" in raw:
        kwargs["adam_eps"] = _positive(raw["adam_eps"], f"{path}.adam_eps")
    if "ridge" in raw:
        kwargs["ridge"] = float(raw["ridge"])
    if "history_init" in raw:
        kwargs["history_init"] = str(raw["history_init"])
    if "init_stddev" in raw:
        kwargs["init_stddev"] = _positive(raw["init_stddev"], f"{path}.init_stddev")
    beta0 = None
    if "beta0" in raw:
        beta0 = _positive(raw["beta0"], f"{path}.beta0")
    try:
        spec = OptimizerSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"'{path}': {exc}") from None
    return NamedOptimizer(name=name, spec=spec, beta0=beta0)


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config document must be a mapping")
    for key in raw:
        if key not in ("problem", "schedule", "run", "optimizers", "toy", "certify", "sweep"):
            raise ConfigError(f"unknown top-level key '{key}'")

    problem = _parse_problem(_require(raw, "problem", "config", dict))

    sched_raw = raw.get("schedule", {})
    if not isinstance(sched_raw, dict):
        raise ConfigError("'schedule' must be a mapping")
    beta0 = _positive(sched_raw.get("beta0", 0.1), "schedule.beta0")
    decay = sched_raw.get("decay_epochs", [])
    factor = float(sched_raw.get("factor", 0.1))
    try:
        schedule = StepSchedule(beta0, tuple(int(e) for e in decay), factor)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"'schedule': {exc}") from None

    run_raw = raw.get("run", {})
    if not isinstance(run_raw, dict):
        raise ConfigError("'run' must be a mapping")
    for key in run_raw:
        if key not in ("steps", "epochs", "batch_size", "seeds", "log_iterates"):
            raise ConfigError(f"unknown key 'run.{key}'")
    batch_size = run_raw.get("batch_size")
    if batch_size is not None:
        batch_size = int(batch_size)
        if batch_size < 1:
            raise ConfigError("'run.batch_size' must be >= 1")
    if problem["kind"] == "mlp_blobs":
        if batch_size is None:
            batch_size = 32
        if batch_size > problem["n"]:
            raise ConfigError("'run.batch_size' exceeds the dataset size")
    steps = run_raw.get("steps")
    epochs = run_raw.get("epochs")
    if steps is not None and epochs is not None:
        raise ConfigError("give either 'run.steps' or 'run.epochs', not both")
    if steps is None:
        if epochs is None:
            epochs = 200 if problem["kind"] == "mlp_blobs" else 100
        per = 1
        if problem["kind"] == "mlp_blobs":
            per = math.ceil(problem["n"] / batch_size)
        steps = int(epochs) * per
    steps = int(steps)
    if steps < 1:
        raise ConfigError("'run.steps' must be >= 1")
    seeds = run_raw.get("seeds", [0])
    if not isinstance(seeds, (list, tuple)) or not seeds:
        raise ConfigError("'run.seeds' must be a nonempty list")
    seeds = tuple(int(s) for s in seeds)
    if any(s < 0 for s in seeds):
        raise ConfigError("'run.seeds' must be nonnegative")
    log_iterates = bool(run_raw.get("log_iterates", False))

    opt_raw = raw.get("optimizers", [])
    if not isinstance(opt_raw, list) or not opt_raw:
        raise ConfigError("'optimizers' must be a nonempty list")
    optimizers = tuple(_parse_optimizer(o, i) for i, o in enumerate(opt_raw))
    names = [o.name for o in optimizers]
    if len(set(names)) != len(names):
        raise ConfigError("optimizer names must be unique")

    toy_raw = raw.get("toy", {})
    if not isinstance(toy_raw, dict):
        raise ConfigError("'toy' must be a mapping")
    toy = {
        "betas": _float_list(toy_raw.get("betas", [0.05, 0.1, 0.25]), "toy.betas"),
        "taus": _float_list(toy_raw.get("taus", [0.9]), "toy.taus"),
        "alpha1s": _float_list(
            toy_raw.get("alpha1s", [0.05, 0.1, 0.25, 0.5]), "toy.alpha1s"
        ),
        "max_steps": int(toy_raw.get("max_steps", 400)),
        "well_steps": int(toy_raw.get("well_steps", 8)),
    }
    for key in toy_raw:
        if key not in toy:
            raise ConfigError(f"unknown key 'toy.{key}'")
    for a in toy["alpha1s"]:
        if not (0.0 < a < 1.0):
            raise ConfigError("'toy.alpha1s' entries must lie in (0, 1)")
    for t in toy["taus"]:
        if not (0.0 <= t < 1.0):
            raise ConfigError("'toy.taus' entries must lie in [0, 1)")

    cert_raw = raw.get("certify", {})
    if not isinstance(cert_raw, dict):
        raise ConfigError("'certify' must be a mapping")
    for key in cert_raw:
        if key not in ("alphas", "beta", "steps", "tolerance"):
            raise ConfigError(f"unknown key 'certify.{key}'")
    cert_alphas = _float_list(cert_raw.get("alphas", [0.5, 0.5]), "certify.alphas")
    try:
        MixingCoefficients(tuple(cert_alphas), MixingMode.INTERPOLATION)
    except ValueError as exc:
        raise ConfigError(f"'certify.alphas': {exc}") from None
    certify = {
        "alphas": cert_alphas,
        "beta": _positive(cert_raw.get("beta", 1.0), "certify.beta"),
        "steps": int(cert_raw.get("steps", 2000)),
        "tolerance": float(cert_raw.get("tolerance", 0.02)),
    }

    sweep_raw = raw.get("sweep", {})
    if not isinstance(sweep_raw, dict):
        raise ConfigError("'sweep' must be a mapping")
    for key in sweep_raw:
        if key not in ("alpha1s", "betas", "fixed_beta", "fixed_alpha1"):
            raise ConfigError(f"unknown key 'sweep.{key}'")
    sweep = {
        "alpha1s": _float_list(
            sweep_raw.get("alpha1s", [0.05, 0.1, 0.25, 0.5]), "sweep.alpha1s"
        ),
        "betas": _float_list(sweep_raw.get("betas", [0.05, 0.1, 0.25]), "sweep.betas"),
        "fixed_beta": _positive(sweep_raw.get("fixed_beta", 0.1), "sweep.fixed_beta"),
        "fixed_alpha1": float(sweep_raw.get("fixed_alpha1", 0.05)),
    }
    if not (0.0 < sweep["fixed_alpha1"] < 1.0):
        raise ConfigError("'sweep.fixed_alpha1' must lie in (0, 1)")

    return ExperimentConfig(
        problem=problem,
        schedule=schedule,
        optimizers=optimizers,
        steps=steps,
        batch_size=batch_size,
        seeds=seeds,
        log_iterates=log_iterates,
        toy=toy,
        certify=certify,
        sweep=sweep,
    )


def resolved_text(config: ExperimentConfig) -> str:
    """Deterministic echo of the fully resolved configuration."""
    doc = {
        "problem": dict(config.problem),
        "schedule": {
            "beta0": config.schedule.beta0,
            "decay_epochs": list(config.schedule.decay_epochs),
            "factor": config.schedule.factor,
        },
        "run": {
            "steps": config.steps,
            "batch_size": config.batch_size,
            "seeds": list(config.seeds),
            "log_iterates": config.log_iterates,
        },
        "optimizers": [
            {
                "name": o.name,
                "kind": o.spec.kind,
                "k": o.spec.k,
                "alphas": list(o.spec.alphas.alphas) if o.spec.alphas else None,
                "tau": o.spec.tau,
                "adam_betas": list(o.spec.adam_betas),
                "adam_eps": o.spec.adam_eps,
                "ridge": o.spec.ridge,
                "history_init": o.spec.history_init,
                "init_stddev": o.spec.init_stddev,
                "beta0": o.beta0,
            }
            for o in config.optimizers
        ],
        "toy": dict(config.toy),
        "certify": dict(config.certify),
        "sweep": dict(config.sweep),
    }
    return yaml.safe_dump(doc, sort_keys=True, default_flow_style=False)
