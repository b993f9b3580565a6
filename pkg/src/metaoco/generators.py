"""Synthetic task streams for the experiments.

Every task draws its own random generator from a seed sequence keyed by
(stream seed, task index), so task t is identical no matter how many other
tasks are generated or in which order — reruns and partial runs agree
bit for bit.

Regression / classification tasks share the input model: features uniform
on the unit sphere, task parameter θ_t = θ₀ + r·u_t with u_t uniform on
the sphere, so r is the dispersion of the tasks around a common center.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .losses import ExpertLoss, HingeLoss, SquaredLoss, Task

__all__ = [
    "StreamCfg",
    "ExpertStreamCfg",
    "gen_regression_stream",
    "gen_classification_stream",
    "gen_expert_stream",
    "regression_lipschitz",
]


@dataclass(frozen=True)
class StreamCfg:
    """Geometry of a regression/classification stream.

    sigma2 is the half-width of the uniform observation noise
    U([−sigma2, sigma2]); theta0 may be a scalar (meaning a constant
    vector) or a length-d vector.
    """

    d: int = 20
    n: int = 30
    T: int = 200
    r: float = 0.0
    sigma2: float = 0.5
    theta0: float | tuple | np.ndarray = 5.0
    flip_frac: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.n < 1 or self.T < 1:
            raise ContractViolation("d, n, T must all be at least 1")
        if self.r < 0 or self.sigma2 < 0:
            raise ContractViolation("r and sigma2 must be nonnegative")
        if not 0.0 <= self.flip_frac < 1.0:
            raise ContractViolation("flip_frac must lie in [0, 1)")

    def center(self) -> np.ndarray:
        th = np.asarray(self.theta0, dtype=float)
        if th.ndim == 0:
            return np.full(self.d, float(th))
        if th.shape != (self.d,):
            raise ContractViolation(f"theta0 must be scalar or length {self.d}")
        return th


@dataclass(frozen=True)
class ExpertStreamCfg:
    """Geometry of an expert-loss stream: M experts, per-round losses in
    [0, B], each task's best expert drawn from ``support``."""

    M: int = 50
    n: int = 20
    T: int = 400
    support: tuple = (0, 1)
    B: float = 1.0
    cexp: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "support", tuple(int(k) for k in self.support))
        if self.M < 2:
            raise ContractViolation("need at least 2 experts")
        if not self.support:
            raise ContractViolation("support must not be empty")
        if any(k < 0 or k >= self.M for k in self.support):
            raise ContractViolation("support indices must lie in [0, M)")
        if self.B <= 0 or self.cexp <= 0:
            raise ContractViolation("B and cexp must be positive")


def _task_rng(seed: int, t: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), int(t))))


def _unit_sphere(rng: np.random.Generator, size: int, d: int) -> np.ndarray:
    z = rng.standard_normal((size, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _task_param(rng: np.random.Generator, cfg: StreamCfg) -> np.ndarray:
    u = _unit_sphere(rng, 1, cfg.d)[0]
    return cfg.r * u + cfg.center()


def gen_regression_stream(cfg: StreamCfg) -> list[Task]:
    """T tasks of n squared-error losses y = xᵀθ_t + ε, ε ~ U([−σ², σ²])."""
    tasks = []
    for t in range(cfg.T):
        rng = _task_rng(cfg.seed, t)
        theta_t = _task_param(rng, cfg)
        X = _unit_sphere(rng, cfg.n, cfg.d)
        eps = rng.uniform(-cfg.sigma2, cfg.sigma2, size=cfg.n)
        y = X @ theta_t + eps
        losses = tuple(SquaredLoss(x=X[i], y=y[i]) for i in range(cfg.n))
        tasks.append(Task(losses=losses, true_param=theta_t, task_id=t))
    return tasks


def gen_classification_stream(cfg: StreamCfg) -> list[Task]:
    """T tasks of n hinge losses with logistic labels and a fixed number
    ⌊flip_frac·n⌋ of labels flipped per task."""
    n_flip = int(cfg.flip_frac * cfg.n)
    tasks = []
    for t in range(cfg.T):
        rng = _task_rng(cfg.seed, t)
        theta_t = _task_param(rng, cfg)
        X = _unit_sphere(rng, cfg.n, cfg.d)
        p = 1.0 / (1.0 + np.exp(-(X @ theta_t)))
        y = np.where(rng.uniform(size=cfg.n) < p, 1.0, -1.0)
        if n_flip > 0:
            idx = rng.choice(cfg.n, size=n_flip, replace=False)
            y[idx] = -y[idx]
        losses = tuple(HingeLoss(x=X[i], y=y[i]) for i in range(cfg.n))
        tasks.append(Task(losses=losses, true_param=theta_t, task_id=t))
    return tasks


def gen_expert_stream(cfg: ExpertStreamCfg) -> list[Task]:
    """T expert tasks: per task one support expert is best, drawing losses
    from U([0, B/4]); every other expert draws from U([B/2, B])."""
    support = np.array(sorted(set(cfg.support)), dtype=int)
    tasks = []
    for t in range(cfg.T):
        rng = _task_rng(cfg.seed, t)
        best = int(support[rng.integers(len(support))])
        vals = rng.uniform(cfg.B / 2.0, cfg.B, size=(cfg.n, cfg.M))
        vals[:, best] = rng.uniform(0.0, cfg.B / 4.0, size=cfg.n)
        losses = tuple(ExpertLoss(values=vals[i]) for i in range(cfg.n))
        tasks.append(Task(losses=losses, task_id=t))
    return tasks


def regression_lipschitz(tasks, C: float, b: float = 1.0) -> float:
    """Gradient bound Γ = 2bc + 2b²C for squared-error losses with
    ‖x‖ ≤ b, |y| ≤ c over decisions ‖θ‖ ≤ C; c is read off the stream."""
    c = max(float(np.abs(task.targets).max()) for task in tasks)
    return 2.0 * b * c + 2.0 * b * b * C
