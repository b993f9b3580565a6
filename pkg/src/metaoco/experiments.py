"""Experiment harness: run method suites over task streams, collect
per-task metrics, aggregate across seeds, and serialize results.

Methods
  I-OGA       within-task gradient descent restarted at 0 with γ = 1/√n
  mean-OPMS   proximal meta-learning of the starting point ϑ (γ fixed)
  OPMS        proximal meta-learning of (ϑ, γ) jointly; the gradient
              bound Γ is picked by running one meta-learner per candidate
              and reporting the one with the lowest running cumulative
              within-task loss
  I-EWA       aggregation with a uniform prior and a fixed rate
  OGMS-eta    gradient meta-learning of the rate η
  OPMS-eta    proximal meta-learning of the rate η
  OPMS-prior  proximal meta-learning of the prior over a floored simplex

Per task t the record keeps the end-of-task mean loss (all n losses at
the final decision, divided by n) and the cumulative loss incurred while
learning.  Meta-learned arms additionally track the per-task criterion
value 𝓛_t(λ_t); it is reported in summaries but not serialized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ContractViolation
from .losses import Bounds, ExpertLoss, OgaParam, Task, batch_values
from .meta_loss import meta_loss_ewa_eta, meta_loss_ewa_prior
from .meta_strategy import (
    MetaState,
    alpha_eta,
    alpha_oga,
    alpha_prior,
    initial_eta_param,
    initial_prior_param,
    lipschitz_oga,
    ogms_eta_step,
    opms_step,
)
from .losses import EwaRate
from .generators import (
    ExpertStreamCfg,
    StreamCfg,
    gen_classification_stream,
    gen_expert_stream,
    gen_regression_stream,
)
from .within_task import TaskTrace, run_ewa, run_oga

__all__ = [
    "Method",
    "MethodSpec",
    "RunRecord",
    "AggregateRow",
    "mse_end_of_task",
    "regret_curve",
    "default_bounds",
    "default_gamma_grid",
    "default_methods",
    "run_stream",
    "aggregate",
    "summary_table",
    "write_csv",
    "read_csv",
    "CSV_HEADER",
]

CSV_HEADER = "method,r,seed,task,mse,cumloss"

OGA_MODES = ("regression", "classification")
EWA_MODES = ("ewa-eta", "ewa-prior")

# Γ candidates for OPMS, as fractions of the worst-case gradient bound.
# The squared-loss bound compounds several coarse inequalities, so the scan
# reaches deep below it; the hinge bound (unit subgradients) is attained,
# so only the top octaves are worth probing.
DEFAULT_GAMMA_FRACTIONS = (1 / 64, 1 / 32, 1 / 16, 1 / 8, 1 / 4, 1 / 2, 1.0)
HINGE_GAMMA_FRACTIONS = (1 / 8, 1 / 4, 1 / 2, 1.0)


class Method(str, Enum):
    I_OGA = "I-OGA"
    MEAN_OPMS = "mean-OPMS"
    OPMS = "OPMS"
    I_EWA = "I-EWA"
    OGMS_ETA = "OGMS-eta"
    OPMS_ETA = "OPMS-eta"
    OPMS_PRIOR = "OPMS-prior"


_OGA_METHODS = (Method.I_OGA, Method.MEAN_OPMS, Method.OPMS)
_EWA_METHODS = (Method.I_EWA, Method.OGMS_ETA, Method.OPMS_ETA, Method.OPMS_PRIOR)

# γ is a learned coordinate only for full OPMS.
_CANONICAL_GAMMA_RULE = {
    Method.I_OGA: "fixed",
    Method.MEAN_OPMS: "fixed",
    Method.OPMS: "learned",
}


@dataclass(frozen=True)
class MethodSpec:
    """One experiment arm.

    alpha_rule  "practical" (1/√T), "theory" (the tuned worst-case
                constants), or an explicit positive number; None means
                practical
    gamma_rule  "fixed" or "learned"; forced by the method
    gamma_grid  Γ candidates for OPMS; None uses the default grid
    """

    method: Method
    alpha_rule: str | float | None = None
    gamma_rule: str | None = None
    gamma_grid: tuple | None = None

    def __post_init__(self):
        method = Method(self.method)
        object.__setattr__(self, "method", method)
        rule = self.gamma_rule
        canon = _CANONICAL_GAMMA_RULE.get(method)
        if rule is None:
            rule = canon or "fixed"
        if rule not in ("fixed", "learned"):
            raise ContractViolation(f"unknown gamma_rule {rule!r}")
        if canon is not None and rule != canon:
            raise ContractViolation(f"{method.value} requires gamma_rule={canon!r}")
        object.__setattr__(self, "gamma_rule", rule)
        if self.gamma_grid is not None:
            if method is not Method.OPMS:
                raise ContractViolation("gamma_grid only applies to OPMS")
            grid = tuple(float(g) for g in self.gamma_grid)
            if not grid or any(g <= 0 for g in grid):
                raise ContractViolation("gamma_grid needs positive candidates")
            object.__setattr__(self, "gamma_grid", grid)
        if isinstance(self.alpha_rule, (int, float)) and not isinstance(self.alpha_rule, bool):
            if self.alpha_rule <= 0:
                raise ContractViolation("explicit alpha must be positive")
            object.__setattr__(self, "alpha_rule", float(self.alpha_rule))
        elif self.alpha_rule not in (None, "practical", "theory"):
            raise ContractViolation(f"unknown alpha_rule {self.alpha_rule!r}")


@dataclass
class RunRecord:
    """Per-task metrics of one (method, r, seed) run."""

    method: str
    r: float
    seed: int
    per_task_mse: np.ndarray
    per_task_cumloss: np.ndarray
    per_task_metaloss: np.ndarray | None = None


@dataclass
class AggregateRow:
    """Across-seed mean curve with a 1.96·sd/√runs confidence half-width."""

    method: str
    r: float
    runs: int
    mean: np.ndarray
    half_width: np.ndarray


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def mse_end_of_task(task: Task, trace: TaskTrace) -> float:
    """All n losses evaluated at the end-of-task decision, divided by n."""
    if task.kind is ExpertLoss:
        return float((task.tables @ trace.end_decision).mean())
    return float(batch_values(task, trace.end_decision).mean())


def regret_curve(per_task_sums, n: int) -> np.ndarray:
    """Running average R(t) = (1/(n·t)) Σ_{k ≤ t} s_k of per-task loss sums."""
    sums = np.asarray(per_task_sums, dtype=float)
    t = np.arange(1, sums.shape[0] + 1)
    return np.cumsum(sums) / (n * t)


# ---------------------------------------------------------------------------
# per-mode defaults
# ---------------------------------------------------------------------------

def default_bounds(cfg: StreamCfg, mode: str) -> Bounds:
    """Worst-case constants derived from the stream geometry.

    The decision ball covers every task parameter (C = ‖θ₀‖ + r + 1); the
    gradient bound is 1 for hinge losses on unit-sphere inputs and
    2c + 2C for squared losses, with c the largest attainable |y|.
    """
    center_norm = float(np.linalg.norm(cfg.center()))
    C = center_norm + cfg.r + 1.0
    if mode == "classification":
        # Hinge losses are piecewise linear: any positive step is stable,
        # but the classical subgradient step scale is n^(-1/2), so the
        # range floors there (the isolation default) rather than at 1/n.
        return Bounds(C=C, Gamma=1.0,
                      gamma_lo=1.0 / math.sqrt(cfg.n), gamma_hi=C * C)
    c = center_norm + cfg.r + cfg.sigma2
    Gamma = 2.0 * c + 2.0 * C
    # Squared losses on unit-norm inputs have per-round curvature 2, so steps
    # beyond 1/2 lose monotone contraction; capping γ there keeps every
    # within-task trajectory stable without touching the learned regime.
    return Bounds(C=C, Gamma=Gamma, gamma_lo=1.0 / cfg.n,
                  gamma_hi=min(C * C, 0.5))


def default_gamma_grid(cfg: StreamCfg, mode: str) -> tuple:
    """Γ candidates for OPMS, scanned downward from the worst-case bound.

    The bound is loose (cancellation keeps realized subgradient sums well
    under it), so parallel learners probe smaller values and the
    cumulative-loss race keeps whichever matches the stream."""
    worst = default_bounds(cfg, mode).Gamma
    fractions = (HINGE_GAMMA_FRACTIONS if mode == "classification"
                 else DEFAULT_GAMMA_FRACTIONS)
    return tuple(f * worst for f in fractions)


def default_methods(mode: str) -> list[MethodSpec]:
    if mode in OGA_MODES:
        return [MethodSpec(Method.I_OGA), MethodSpec(Method.MEAN_OPMS),
                MethodSpec(Method.OPMS)]
    if mode == "ewa-eta":
        return [MethodSpec(Method.I_EWA), MethodSpec(Method.OGMS_ETA),
                MethodSpec(Method.OPMS_ETA)]
    if mode == "ewa-prior":
        return [MethodSpec(Method.I_EWA), MethodSpec(Method.OPMS_PRIOR)]
    raise ContractViolation(f"unknown mode {mode!r}")


def _resolve_alpha(spec: MethodSpec, cfg, bounds: Bounds | None, mode: str) -> float:
    rule = spec.alpha_rule
    if rule is None:
        # worst-case step sizes are far too timid on streams of this length
        rule = "practical"
    if isinstance(rule, float):
        return rule
    if rule == "practical":
        return 1.0 / math.sqrt(cfg.T)
    if mode in OGA_MODES:
        L = lipschitz_oga(cfg.n, bounds.Gamma, bounds.C, bounds.gamma_lo)
        return alpha_oga(bounds.C, L, cfg.T)
    if mode == "ewa-eta":
        return alpha_eta(cfg.n, cfg.B, cfg.M, cfg.T)
    return alpha_prior(cfg.cexp, cfg.M, cfg.T)


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------

def _run_oga_arm(spec: MethodSpec, tasks: list[Task], cfg: StreamCfg,
                 mode: str, seed: int) -> RunRecord:
    d = cfg.d
    gamma_fixed = 1.0 / math.sqrt(cfg.n)
    bounds = default_bounds(cfg, mode)
    T = len(tasks)
    mse = np.empty(T)
    cum = np.empty(T)

    if spec.method is Method.I_OGA:
        lam = OgaParam(theta0=np.zeros(d), gamma=gamma_fixed)
        for t, task in enumerate(tasks):
            trace = run_oga(task, lam, bounds)
            mse[t] = mse_end_of_task(task, trace)
            cum[t] = trace.cumulative_loss

    elif spec.method is Method.MEAN_OPMS:
        alpha = _resolve_alpha(spec, cfg, bounds, mode)
        state = MetaState(lam=OgaParam(theta0=np.zeros(d), gamma=gamma_fixed),
                          alpha=alpha)
        for t, task in enumerate(tasks):
            trace = run_oga(task, state.lam, bounds)
            mse[t] = mse_end_of_task(task, trace)
            cum[t] = trace.cumulative_loss
            state = opms_step(state, task, bounds, learn_gamma=False)

    else:  # full OPMS: one learner per Γ candidate, report the race winner
        grid = spec.gamma_grid or default_gamma_grid(cfg, mode)
        cands = []
        for g in grid:
            b = replace(bounds, Gamma=g)
            alpha = _resolve_alpha(spec, cfg, b, mode)
            cands.append({
                "bounds": b,
                "state": MetaState(lam=OgaParam(theta0=np.zeros(d), gamma=gamma_fixed),
                                   alpha=alpha),
                "tally": 0.0,
                "mse": np.empty(T),
                "cum": np.empty(T),
            })
        for t, task in enumerate(tasks):
            for cand in cands:
                trace = run_oga(task, cand["state"].lam, cand["bounds"])
                cand["mse"][t] = mse_end_of_task(task, trace)
                cand["cum"][t] = trace.cumulative_loss
                # the race scores each learner by the loss the experiment
                # reports: the end-of-task loss summed over the task
                cand["tally"] += task.n * cand["mse"][t]
                cand["state"] = opms_step(cand["state"], task, cand["bounds"],
                                          learn_gamma=True)
        winner = min(cands, key=lambda cand: cand["tally"])
        mse, cum = winner["mse"], winner["cum"]

    return RunRecord(method=spec.method.value, r=cfg.r, seed=seed,
                     per_task_mse=mse, per_task_cumloss=cum)


def _expert_bounds(cfg: ExpertStreamCfg) -> Bounds:
    return Bounds(C=1.0, Gamma=1.0, gamma_lo=0.5, gamma_hi=1.0,
                  B=cfg.B, cexp=cfg.cexp)


def _run_ewa_arm(spec: MethodSpec, tasks: list[Task], cfg: ExpertStreamCfg,
                 mode: str, seed: int) -> RunRecord:
    m, n = cfg.M, cfg.n
    uniform = np.full(m, 1.0 / m)
    bounds = _expert_bounds(cfg)
    T = len(tasks)
    mse = np.empty(T)
    cum = np.empty(T)
    meta = np.empty(T)

    def record(t, task, trace):
        mse[t] = mse_end_of_task(task, trace)
        cum[t] = trace.cumulative_loss

    if spec.method is Method.I_EWA:
        if mode == "ewa-eta":
            eta = min(max((2.0 / cfg.B) * math.sqrt(2.0 * math.log(m) / n), 1.0 / n), 1.0)
            for t, task in enumerate(tasks):
                record(t, task, run_ewa(task, eta, uniform))
                meta[t] = meta_loss_ewa_eta(task, eta, m).value
        else:
            eta = 1.0 / cfg.cexp
            for t, task in enumerate(tasks):
                record(t, task, run_ewa(task, eta, uniform))
                meta[t] = meta_loss_ewa_prior(task, uniform, cfg.cexp).value

    elif spec.method in (Method.OGMS_ETA, Method.OPMS_ETA):
        alpha = _resolve_alpha(spec, cfg, None, "ewa-eta")
        state = MetaState(lam=initial_eta_param(), alpha=alpha)
        for t, task in enumerate(tasks):
            record(t, task, run_ewa(task, state.lam.eta, uniform))
            meta[t] = meta_loss_ewa_eta(task, state.lam.eta, m).value
            if spec.method is Method.OGMS_ETA:
                state = ogms_eta_step(state, task, m)
            else:
                state = opms_step(state, task, bounds)

    else:  # OPMS-prior
        alpha = _resolve_alpha(spec, cfg, None, "ewa-prior")
        state = MetaState(lam=initial_prior_param(m), alpha=alpha)
        eta = 1.0 / cfg.cexp
        for t, task in enumerate(tasks):
            record(t, task, run_ewa(task, eta, state.lam.pi))
            meta[t] = meta_loss_ewa_prior(task, state.lam.pi, cfg.cexp).value
            state = opms_step(state, task, bounds)

    return RunRecord(method=spec.method.value, r=0.0, seed=seed,
                     per_task_mse=mse, per_task_cumloss=cum,
                     per_task_metaloss=meta)


def run_stream(methods: list[MethodSpec], cfg, seeds, mode: str) -> list[RunRecord]:
    """Run every method over a freshly generated stream per seed.

    All arms of one seed see the same tasks, so across-method differences
    are paired.  Records are returned method-major, seeds in given order.
    """
    if mode in OGA_MODES:
        if not isinstance(cfg, StreamCfg):
            raise ContractViolation(f"{mode} mode needs a StreamCfg")
        gen = gen_regression_stream if mode == "regression" else gen_classification_stream
        runner = _run_oga_arm
        allowed = _OGA_METHODS
    elif mode in EWA_MODES:
        if not isinstance(cfg, ExpertStreamCfg):
            raise ContractViolation(f"{mode} mode needs an ExpertStreamCfg")
        gen = gen_expert_stream
        runner = _run_ewa_arm
        allowed = _EWA_METHODS
    else:
        raise ContractViolation(f"unknown mode {mode!r}")
    for spec in methods:
        if spec.method not in allowed:
            raise ContractViolation(f"{spec.method.value} does not run in {mode} mode")

    streams = {s: gen(replace(cfg, seed=int(s))) for s in seeds}
    records = []
    for spec in methods:
        for s in seeds:
            records.append(runner(spec, streams[s], cfg, mode, int(s)))
    return records


# ---------------------------------------------------------------------------
# aggregation and reporting
# ---------------------------------------------------------------------------

def _grouped(records: list[RunRecord]):
    order, groups = [], {}
    for rec in records:
        key = (rec.method, rec.r)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(rec)
    return [(key, groups[key]) for key in order]


def aggregate(records: list[RunRecord], field: str = "per_task_mse") -> list[AggregateRow]:
    """Mean curve over seeds with a normal-approximation half-width
    1.96·sd/√runs per (method, r); sd uses the n−1 normalization."""
    rows = []
    for (method, r), group in _grouped(records):
        data = np.vstack([getattr(rec, field) for rec in group])
        runs = data.shape[0]
        mean = data.mean(axis=0)
        if runs > 1:
            hw = 1.96 * data.std(axis=0, ddof=1) / math.sqrt(runs)
        else:
            hw = np.zeros_like(mean)
        rows.append(AggregateRow(method=method, r=r, runs=runs, mean=mean, half_width=hw))
    return rows


def _summary_value(group: list[RunRecord], mode: str) -> float:
    if mode == "regression":
        # steady-state: mean end-of-task loss over the last ⌈T/2⌉ tasks
        vals = []
        for rec in group:
            T = rec.per_task_mse.shape[0]
            vals.append(rec.per_task_mse[-math.ceil(T / 2):].mean())
        return float(np.mean(vals))
    if mode == "classification":
        # final value of the end-of-task regret average
        # R(t) = (1/(n·t)) Σ_{k ≤ t} Σ_i ℓ_{k,i}(end decision of task k)
        return float(np.mean([rec.per_task_mse.mean() for rec in group]))
    # aggregation modes: cumulative criterion value Σ_t 𝓛_t(λ_t)
    return float(np.mean([rec.per_task_metaloss.sum() for rec in group]))


_SUMMARY_LABEL = {
    "regression": "mean MSE, last half of the stream",
    "classification": "final regret average R(T)",
    "ewa-eta": "cumulative meta-criterion",
    "ewa-prior": "cumulative meta-criterion",
}


def summary_table(records: list[RunRecord], mode: str) -> str:
    """Plain-text summary: rows are methods, columns are r values (a
    single value column for aggregation modes)."""
    cells = {}
    methods, rvals = [], []
    for (method, r), group in _grouped(records):
        if method not in methods:
            methods.append(method)
        if r not in rvals:
            rvals.append(r)
        cells[(method, r)] = _summary_value(group, mode)
    rvals.sort()
    if mode in EWA_MODES:
        headers = ["total"]
    else:
        headers = [f"r={r:g}" for r in rvals]
    width = max(12, *(len(h) + 2 for h in headers))
    name_w = max(10, *(len(m) + 2 for m in methods))
    lines = [f"# {_SUMMARY_LABEL[mode]}"]
    lines.append("method".ljust(name_w) + "".join(h.rjust(width) for h in headers))
    for method in methods:
        row = method.ljust(name_w)
        for r in rvals:
            v = cells.get((method, r))
            row += ("-" if v is None else f"{v:.4f}").rjust(width)
        lines.append(row)
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def write_csv(records: list[RunRecord], path) -> None:
    """Fixed schema ``method,r,seed,task,mse,cumloss``; one row per task,
    floats rendered with the shortest round-tripping decimal."""
    lines = [CSV_HEADER]
    for rec in records:
        for t in range(rec.per_task_mse.shape[0]):
            lines.append(
                f"{rec.method},{float(rec.r)!r},{int(rec.seed)},{t + 1},"
                f"{float(rec.per_task_mse[t])!r},{float(rec.per_task_cumloss[t])!r}"
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_csv(path) -> list[RunRecord]:
    """Inverse of ``write_csv``; exact float round-trip."""
    text = Path(path).read_text(encoding="ascii").splitlines()
    if not text or text[0] != CSV_HEADER:
        raise ContractViolation(f"unexpected CSV header in {path}")
    records = []
    key, mse, cum = None, [], []

    def flush():
        if key is not None:
            records.append(RunRecord(method=key[0], r=key[1], seed=key[2],
                                     per_task_mse=np.array(mse),
                                     per_task_cumloss=np.array(cum)))

    for line in text[1:]:
        if not line:
            continue
        method, r, seed, task, m, c = line.split(",")
        k = (method, float(r), int(seed))
        if k != key:
            flush()
            key, mse, cum = k, [], []
        mse.append(float(m))
        cum.append(float(c))
    flush()
    return records
