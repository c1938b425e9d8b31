"""Experiment orchestration: reference solutions, paired trials, CSV traces."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterator, Optional, Sequence

import numpy as np

from . import optim
from .graph import Graph, connected_topology, er_connectivity_probability
from .objectives import (LogisticSuite, ObjectiveSuite, SmoothnessConstants, generate_synthetic,
                         random_quadratic)
from .schedule import ActivationProcess, delay_trace
from .theory import StepSizeInputs, theorem1_stepsize

log = logging.getLogger(__name__)

GAP_FLOOR = 1e-28
TRACE_HEADER = ["trial", "k", "method", "gap", "agent", "delay", "est_err"]
SUMMARY_HEADER = ["method", "k", "gap_mean", "gap_std", "gap_min", "gap_max"]


class ConfigError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


# --- configuration -------------------------------------------------------

def _from_dict(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass
class ObjectiveSpec:
    kind: str = "logistic"
    d: int = 51
    N: int = 250
    B: int = 1
    seed: int = 0
    kappa: Optional[float] = None  # quadratic only

    def validate(self):
        if self.kind not in ("logistic", "quadratic"):
            raise ConfigError(f"objective.kind must be logistic or quadratic, got {self.kind!r}")
        if min(self.d, self.N, self.B) < 1:
            raise ConfigError("objective d, N, B must be >= 1")
        if self.kind == "quadratic" and (self.kappa is None or self.kappa < 1):
            raise ConfigError("quadratic objective needs kappa >= 1")


@dataclass
class TopologySpec:
    kind: str = "erdos_renyi"
    n: int = 250
    p: Optional[float] = None  # erdos_renyi default: 2 log(n)/n
    seed: int = 0

    def resolved_p(self):
        if self.kind != "erdos_renyi":
            return None
        return er_connectivity_probability(self.n) if self.p is None else self.p


@dataclass
class MethodSpec:
    method: str
    gamma: Any = "auto"  # number, "auto", or "<c>/L"
    scale: float = 1.0
    label: Optional[str] = None
    schedule: str = "random_walk"

    @property
    def name(self) -> str:
        return self.label or self.method

    def validate(self):
        if self.method not in optim.METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.schedule not in ("random_walk", "cyclic", "iid_uniform", "star_coordinator"):
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        _parse_gamma(self.gamma)
        if not self.scale > 0:
            raise ConfigError("scale must be positive")


@dataclass
class TheorySpec:
    Delta: Optional[float] = None
    c0: float = 1.0
    beta: float = 0.1
    m0: Optional[float] = None  # default 2N


@dataclass
class ExperimentConfig:
    objective: ObjectiveSpec = field(default_factory=ObjectiveSpec)
    topology: TopologySpec = field(default_factory=TopologySpec)
    methods: list = field(default_factory=list)
    iterations: int = 1000
    trials: int = 1
    base_seed: int = 0
    output: Optional[str] = None
    drift_interval: Optional[int] = None
    theory: TheorySpec = field(default_factory=TheorySpec)
    reference_tol: float = 1e-12
    estimator_error_every: int = 0
    theta0: str = "zeros"
    workers: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data = dict(data)
        sub = {}
        if "objective" in data:
            sub["objective"] = _from_dict(ObjectiveSpec, data.pop("objective"), "objective")
        if "topology" in data:
            sub["topology"] = _from_dict(TopologySpec, data.pop("topology"), "topology")
        if "theory" in data:
            sub["theory"] = _from_dict(TheorySpec, data.pop("theory"), "theory")
        if "methods" in data:
            raw = data.pop("methods")
            if not isinstance(raw, list):
                raise ConfigError("methods must be a list")
            sub["methods"] = [_from_dict(MethodSpec, m, f"methods[{j}]") for j, m in enumerate(raw)]
        cfg = _from_dict(cls, {**data, **sub}, "config")
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self):
        self.objective.validate()
        if self.topology.n != self.objective.N:
            raise ConfigError("topology.n must equal objective.N (one component per agent)")
        if self.iterations < 0 or self.trials < 1:
            raise ConfigError("iterations must be >= 0 and trials >= 1")
        if not self.methods:
            raise ConfigError("at least one method is required")
        for m in self.methods:
            m.validate()
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ConfigError(f"method labels must be unique, got {names}")
        if self.drift_interval is not None and self.drift_interval < 1:
            raise ConfigError("drift_interval must be positive")
        if self.theta0 != "zeros":
            raise ConfigError("theta0 supports only 'zeros'")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def _parse_gamma(gamma):
    """Return ``("auto", None)``, ``("abs", value)`` or ``("per_L", c)``."""
    if isinstance(gamma, bool):
        raise ConfigError(f"invalid gamma {gamma!r}")
    if isinstance(gamma, (int, float)):
        if gamma < 0:
            raise ConfigError("gamma must be non-negative")
        return "abs", float(gamma)
    if gamma == "auto":
        return "auto", None
    if isinstance(gamma, str) and gamma.endswith("/L"):
        try:
            return "per_L", float(gamma[:-2])
        except ValueError:
            pass
    raise ConfigError(f"invalid gamma {gamma!r}; use a number, 'auto' or '<c>/L'")


# --- problem setup -------------------------------------------------------

def reference_solution(suite: ObjectiveSuite, tol: float = 1e-12, max_iter: int = 1000, theta0=None):
    """Minimiser of ``F`` by damped Newton with Armijo backtracking.

    Returns ``(theta_star, F_star)``; raises ``NumericalError`` if
    ``|grad F| <= tol`` is not reached within ``max_iter`` iterations.
    """
    theta = np.zeros(suite.d) if theta0 is None else np.array(theta0, dtype=float)
    value, grad = suite.full_eval(theta)
    for _ in range(max_iter):
        gnorm = np.linalg.norm(grad)
        if gnorm <= tol:
            return theta, value
        direction = -np.linalg.solve(suite.full_hessian(theta), grad)
        slope = grad @ direction
        t = 1.0
        while t >= 1e-12:
            cand = theta + t * direction
            cval, cgrad = suite.full_eval(cand)
            if cval <= value + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            # Armijo fails at round-off level; keep the full step only if it shrinks the gradient
            cand = theta + direction
            cval, cgrad = suite.full_eval(cand)
            if np.linalg.norm(cgrad) >= gnorm:
                break
        theta, value, grad = cand, cval, cgrad
    if np.linalg.norm(grad) <= tol:
        return theta, value
    raise NumericalError(f"Newton did not reach |grad F| <= {tol:g} (got {np.linalg.norm(grad):.3g})")


@dataclass
class Problem:
    suite: ObjectiveSuite
    graph: Graph
    graph_seed: int
    theta_star: np.ndarray
    F_star: float
    grad_norm: float
    constants: SmoothnessConstants
    theta0: np.ndarray

    @property
    def R0(self) -> float:
        diff = self.theta0 - self.theta_star
        return float(diff @ diff)


def build_suite(spec: ObjectiveSpec) -> ObjectiveSuite:
    if spec.kind == "logistic":
        ds, _ = generate_synthetic(spec.d, spec.N, spec.B, spec.seed)
        return LogisticSuite(ds)
    return random_quadratic(spec.d, spec.N, spec.kappa, spec.seed)


def build_problem(cfg: ExperimentConfig) -> Problem:
    suite = build_suite(cfg.objective)
    t = cfg.topology
    graph, used = connected_topology(t.kind, t.n, t.resolved_p(), t.seed)
    theta_star, F_star = reference_solution(suite, cfg.reference_tol)
    grad_norm = float(np.linalg.norm(suite.full_eval(theta_star)[1]))
    if grad_norm > cfg.reference_tol:
        raise NumericalError(f"reference certificate failed: |grad F| = {grad_norm:.3g}")
    return Problem(suite, graph, used, theta_star, F_star, grad_norm,
                   suite.smoothness_constants(), np.zeros(suite.d))


def stepsize_inputs(cfg: ExperimentConfig, problem: Problem) -> StepSizeInputs:
    c = problem.constants
    th = cfg.theory
    m0 = 2.0 * problem.suite.N if th.m0 is None else th.m0
    return StepSizeInputs(mu=c.mu, L=c.L, L_H_bar=c.L_H_bar, R0=problem.R0,
                          Delta=th.Delta, c0=th.c0, beta=th.beta, m0=m0)


def resolve_gamma(spec: MethodSpec, cfg: ExperimentConfig, problem: Problem) -> float:
    kind, val = _parse_gamma(spec.gamma)
    if kind == "abs":
        base = val
    elif kind == "per_L":
        base = val / problem.constants.L
    else:
        base = theorem1_stepsize(stepsize_inputs(cfg, problem))
    return base * spec.scale


# --- trials --------------------------------------------------------------

@dataclass
class TraceRecord:
    trial: int
    k: int
    method: str
    gap: float
    agent: int
    delay: int
    est_err: Optional[float] = None


@dataclass
class MethodTrace:
    """Columnar trace of one method in one trial (rows ``k = 0..K``).

    ``agent[k]``/``delay[k]`` describe the activation at iteration ``k``
    (the one producing ``theta^{k+1}``); both are -1 on the final row.
    ``est_err`` is NaN where not sampled.
    """

    trial: int
    method: str
    gap: np.ndarray
    agent: np.ndarray
    delay: np.ndarray
    est_err: np.ndarray

    def records(self) -> Iterator[TraceRecord]:
        for k in range(self.gap.size):
            e = self.est_err[k]
            yield TraceRecord(self.trial, k, self.method, float(self.gap[k]), int(self.agent[k]),
                              int(self.delay[k]), None if np.isnan(e) else float(e))


def trial_seed(cfg: ExperimentConfig, trial_index: int) -> int:
    return cfg.base_seed + trial_index


def activation_sequence(kind: str, problem: Problem, K: int, seed: int) -> np.ndarray:
    n = problem.suite.N
    if kind == "star_coordinator":
        # hub is node 0 of an (n+1)-node star; agents are leaves 1..n
        proc = ActivationProcess(kind, n + 1, seed=seed)
        return proc.take(K) - 1
    graph = problem.graph if kind == "random_walk" else None
    return ActivationProcess(kind, n, seed=seed, graph=graph).take(K)


def run_method(spec: MethodSpec, gamma: float, problem: Problem, agents: np.ndarray, cfg: ExperimentConfig,
               trial_index: int) -> MethodTrace:
    suite = problem.suite
    K = agents.size
    state = optim.OptimizerState.for_suite(spec.method, suite, gamma, problem.theta0, cfg.drift_interval)
    theta_star = problem.theta_star
    gap = np.empty(K + 1)
    est_err = np.full(K + 1, np.nan)
    diff = state.theta - theta_star
    gap[0] = diff @ diff
    every = cfg.estimator_error_every
    step = optim.step
    agent_list = agents.tolist()
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(K):
            i = agent_list[k]
            if every and k % every == 0:
                g, _, _ = optim.estimator(state, suite, i)
                est_err[k] = np.linalg.norm(g - suite.full_eval(state.theta)[1])
            step(state, suite, i)
            diff = state.theta - theta_star
            gap[k + 1] = diff @ diff
            if not np.isfinite(gap[k + 1]):
                log.warning("%s diverged at k=%d in trial %d", spec.name, k + 1, trial_index)
                gap[k + 1:] = np.inf
                break
    delays, _ = delay_trace(agents) if K else (np.empty(0, dtype=np.int64), None)
    agent_col = np.append(agents, -1).astype(np.int64)
    delay_col = np.append(delays, -1).astype(np.int64)
    return MethodTrace(trial_index, spec.name, gap, agent_col, delay_col, est_err)


def run_trial(cfg: ExperimentConfig, trial_index: int, problem: Optional[Problem] = None) -> list:
    """Run every configured method for one trial.

    Methods sharing a schedule kind see the same agent sequence, drawn
    from a process seeded with ``base_seed + trial_index``.
    """
    if problem is None:
        problem = build_problem(cfg)
    seed = trial_seed(cfg, trial_index)
    K = cfg.iterations
    sequences = {}
    out = []
    for spec in cfg.methods:
        if spec.schedule not in sequences:
            sequences[spec.schedule] = activation_sequence(spec.schedule, problem, K, seed)
        gamma = resolve_gamma(spec, cfg, problem)
        out.append(run_method(spec, gamma, problem, sequences[spec.schedule], cfg, trial_index))
    return out


def _run_trial_worker(args):
    cfg, trial_index, problem = args
    return run_trial(cfg, trial_index, problem)


def run_experiment(cfg: ExperimentConfig, problem: Optional[Problem] = None) -> list:
    """All trials; result ordered by ``(trial, method order in config)``."""
    if problem is None:
        problem = build_problem(cfg)
    jobs = [(cfg, t, problem) for t in range(cfg.trials)]
    if cfg.workers > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            per_trial = list(ex.map(_run_trial_worker, jobs))
    else:
        per_trial = [_run_trial_worker(j) for j in jobs]
    return [tr for trial in per_trial for tr in trial]


# --- summaries -----------------------------------------------------------

@dataclass
class SummaryRow:
    method: str
    k: np.ndarray
    gap_mean: np.ndarray
    gap_std: np.ndarray
    gap_min: np.ndarray
    gap_max: np.ndarray


def aggregate_trials(traces: Sequence[MethodTrace]) -> dict:
    """Per-method mean/std/min/max of the gap across trials, keyed by label."""
    if not traces:
        raise ValueError("need at least one trace")
    by_method: dict = {}
    for tr in traces:
        by_method.setdefault(tr.method, []).append(tr.gap)
    out = {}
    for name, gaps in by_method.items():
        if len({g.size for g in gaps}) != 1:
            raise ValueError(f"inconsistent trace lengths for {name}")
        G = np.vstack(gaps)
        with np.errstate(invalid="ignore"):
            out[name] = SummaryRow(name, np.arange(G.shape[1]), G.mean(axis=0), G.std(axis=0),
                                   G.min(axis=0), G.max(axis=0))
    return out


def fit_linear_rate(gaps, burn_in: int = 0) -> float:
    """Per-iteration contraction factor from a log-linear least-squares fit.

    Uses ``k >= burn_in``; gaps below ``1e-28`` (numerical floor) and
    non-finite values are left out.
    """
    gaps = np.asarray(gaps, dtype=float)
    k = np.arange(gaps.size)
    sel = (k >= burn_in) & np.isfinite(gaps) & (gaps >= GAP_FLOOR)
    if np.count_nonzero(sel) < 2:
        raise ValueError("fewer than two usable points in the fit window")
    if np.any(gaps[sel] <= 0):
        raise ValueError("gaps must be strictly positive")
    slope = np.polyfit(k[sel].astype(float), np.log(gaps[sel]), 1)[0]
    return float(math.exp(slope))


def first_hit(gaps, threshold: float) -> Optional[int]:
    """First iteration with gap <= threshold, or None."""
    idx = np.flatnonzero(np.asarray(gaps) <= threshold)
    return int(idx[0]) if idx.size else None


# --- I/O -----------------------------------------------------------------

def _fmt(x) -> str:
    return format(float(x), ".17g")


def _header_comments(problem: Problem, cfg: ExperimentConfig) -> list:
    return [
        f"# reference_grad_norm={_fmt(problem.grad_norm)} tol={_fmt(cfg.reference_tol)}",
        f"# F_star={_fmt(problem.F_star)} graph_seed={problem.graph_seed}",
    ]


def trace_csv(traces: Sequence[MethodTrace], comments: Sequence[str] = ()) -> str:
    lines = list(comments) + [",".join(TRACE_HEADER)]
    ordered = sorted(traces, key=lambda t: t.trial)  # stable: keeps method order
    for tr in ordered:
        pre = f"{tr.trial},"
        mid = f",{tr.method},"
        for k, (g, a, dl, e) in enumerate(zip(tr.gap.tolist(), tr.agent.tolist(), tr.delay.tolist(),
                                               tr.est_err.tolist())):
            agent = "" if a < 0 else str(a)
            delay = "" if a < 0 else str(dl)
            err = "" if e != e else format(e, ".17g")
            lines.append(f"{pre}{k}{mid}{format(g, '.17g')},{agent},{delay},{err}")
    return "\n".join(lines) + "\n"


def summary_csv(summary: dict, comments: Sequence[str] = ()) -> str:
    lines = list(comments) + [",".join(SUMMARY_HEADER)]
    for name, row in summary.items():
        for k in range(row.k.size):
            lines.append(",".join([name, str(k)] + [_fmt(v[k]) for v in
                                                    (row.gap_mean, row.gap_std, row.gap_min, row.gap_max)]))
    return "\n".join(lines) + "\n"


def write_outputs(traces, problem: Problem, cfg: ExperimentConfig, outdir) -> tuple:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    comments = _header_comments(problem, cfg)
    trace_path = outdir / "trace.csv"
    summary_path = outdir / "summary.csv"
    trace_path.write_text(trace_csv(traces, comments))
    summary_path.write_text(summary_csv(aggregate_trials(traces), comments))
    return trace_path, summary_path


def read_trace_csv(path) -> dict:
    """Gap series per ``(method, trial)`` from a trace file."""
    series: dict = {}
    with open(path) as fh:
        rows = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(rows)
        if header != TRACE_HEADER:
            raise ValueError(f"unexpected trace header {header}")
        for row in rows:
            series.setdefault((row[2], int(row[0])), []).append(float(row[3]))
    return {key: np.array(v) for key, v in series.items()}
