"""Core data model: per-round losses, tasks, tuning parameters, bounds.

A task is a finite sequence of convex losses over a common decision set.
Three loss families are supported:

  * squared error     ℓ(θ) = (y − xᵀθ)²          (regression)
  * hinge             ℓ(θ) = max(0, 1 − y·xᵀθ)   (classification, y ∈ {−1,+1})
  * expert table      ℓ(p) = Σ_k p_k v_k          (finite expert class,
                                                   decision = mixture weights)

All containers are frozen and hold read-only float64 arrays, so tasks and
parameters can be shared freely between learners.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np

from .errors import ContractViolation, UnsupportedOperation

__all__ = [
    "SquaredLoss",
    "HingeLoss",
    "ExpertLoss",
    "LossInstance",
    "Task",
    "OgaParam",
    "EwaRate",
    "EwaPrior",
    "TuningParam",
    "Bounds",
    "eval_loss",
    "grad_loss",
]


def _readonly(a, dtype=float) -> np.ndarray:
    """Copy to a contiguous read-only float64 array."""
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


def _check_finite(a, name: str) -> None:
    if not np.all(np.isfinite(a)):
        raise ContractViolation(f"{name} must be finite")


# ---------------------------------------------------------------------------
# loss instances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SquaredLoss:
    """ℓ(θ) = (y − xᵀθ)² with feature vector x and target y."""

    x: np.ndarray
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", _readonly(np.atleast_1d(self.x)))
        object.__setattr__(self, "y", float(self.y))
        _check_finite(self.x, "x")
        _check_finite(self.y, "y")


@dataclass(frozen=True)
class HingeLoss:
    """ℓ(θ) = max(0, 1 − y·xᵀθ) with label y ∈ {−1, +1}."""

    x: np.ndarray
    y: float

    def __post_init__(self):
        object.__setattr__(self, "x", _readonly(np.atleast_1d(self.x)))
        object.__setattr__(self, "y", float(self.y))
        _check_finite(self.x, "x")
        if self.y not in (-1.0, 1.0):
            raise ContractViolation(f"hinge label must be ±1, got {self.y}")


@dataclass(frozen=True)
class ExpertLoss:
    """One round of losses for M experts; evaluated at mixture weights."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(np.atleast_1d(self.values)))
        _check_finite(self.values, "values")


LossInstance = Union[SquaredLoss, HingeLoss, ExpertLoss]


def _loss_dim(loss: LossInstance) -> int:
    if isinstance(loss, ExpertLoss):
        return loss.values.shape[0]
    return loss.x.shape[0]


# ---------------------------------------------------------------------------
# tasks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Task:
    """A finite stream of same-kind losses presented one round at a time.

    ``true_param`` optionally records the generating parameter (for
    diagnostics only; learners never see it).
    """

    losses: tuple
    true_param: np.ndarray | None = None
    task_id: int = 0

    def __post_init__(self):
        losses = tuple(self.losses)
        if len(losses) == 0:
            raise ContractViolation("task needs at least one loss")
        kind = type(losses[0])
        if any(type(l) is not kind for l in losses):
            raise ContractViolation("all losses in a task must share one kind")
        dim = _loss_dim(losses[0])
        if any(_loss_dim(l) != dim for l in losses):
            raise ContractViolation("all losses in a task must share one dimension")
        object.__setattr__(self, "losses", losses)
        if self.true_param is not None:
            object.__setattr__(self, "true_param", _readonly(self.true_param))

    @property
    def n(self) -> int:
        return len(self.losses)

    @property
    def dim(self) -> int:
        return _loss_dim(self.losses[0])

    @property
    def kind(self) -> type:
        return type(self.losses[0])

    # dense views used by batch evaluation and the inner solvers ------------

    @cached_property
    def features(self) -> np.ndarray:
        """n×d matrix of feature vectors (squared/hinge tasks only)."""
        if self.kind is ExpertLoss:
            raise UnsupportedOperation("expert tasks have no feature matrix")
        return np.vstack([l.x for l in self.losses])

    @cached_property
    def targets(self) -> np.ndarray:
        """Length-n vector of targets/labels (squared/hinge tasks only)."""
        if self.kind is ExpertLoss:
            raise UnsupportedOperation("expert tasks have no target vector")
        return np.array([l.y for l in self.losses])

    @cached_property
    def tables(self) -> np.ndarray:
        """n×M matrix of expert losses (expert tasks only)."""
        if self.kind is not ExpertLoss:
            raise UnsupportedOperation("only expert tasks have loss tables")
        return np.vstack([l.values for l in self.losses])


# ---------------------------------------------------------------------------
# tuning parameters and bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OgaParam:
    """Starting point ϑ and gradient step γ for within-task gradient descent."""

    theta0: np.ndarray
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "theta0", _readonly(np.atleast_1d(self.theta0)))
        object.__setattr__(self, "gamma", float(self.gamma))
        _check_finite(self.theta0, "theta0")
        if not np.isfinite(self.gamma) or self.gamma <= 0:
            raise ContractViolation(f"gamma must be positive, got {self.gamma}")


@dataclass(frozen=True)
class EwaRate:
    """Learning rate η for exponentially weighted aggregation."""

    eta: float

    def __post_init__(self):
        object.__setattr__(self, "eta", float(self.eta))
        if not np.isfinite(self.eta) or self.eta <= 0:
            raise ContractViolation(f"eta must be positive, got {self.eta}")


@dataclass(frozen=True)
class EwaPrior:
    """Prior weights over a finite expert class."""

    pi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pi", _readonly(np.atleast_1d(self.pi)))
        _check_finite(self.pi, "pi")
        if np.any(self.pi < 0):
            raise ContractViolation("prior weights must be nonnegative")


TuningParam = Union[OgaParam, EwaRate, EwaPrior]


@dataclass(frozen=True)
class Bounds:
    """Problem-level constants shared by the learners.

    C        radius of the decision ball for gradient-descent learners
    Gamma    bound on per-round gradient norms over the decision ball
    gamma_lo, gamma_hi   admissible range for the within-task step γ
    B        range of a single expert loss (expert tasks)
    cexp     scale of the prior-penalty term for expert aggregation
    beta     exponent used when deriving gamma_lo = n**(-beta); informative
    """

    C: float
    Gamma: float
    gamma_lo: float
    gamma_hi: float
    B: float = 1.0
    cexp: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        for name in ("C", "Gamma", "gamma_lo", "gamma_hi", "B", "cexp", "beta"):
            v = float(getattr(self, name))
            object.__setattr__(self, name, v)
            if not np.isfinite(v) or v <= 0:
                raise ContractViolation(f"{name} must be positive, got {v}")
        if self.gamma_lo >= self.gamma_hi:
            raise ContractViolation(
                f"need gamma_lo < gamma_hi, got [{self.gamma_lo}, {self.gamma_hi}]"
            )

    @classmethod
    def theory(cls, n: int, C: float, Gamma: float, beta: float = 1.0, **kw) -> "Bounds":
        """Step range tuned to the horizon: γ ∈ [n**(-β), C²]."""
        return cls(C=C, Gamma=Gamma, gamma_lo=float(n) ** (-beta),
                   gamma_hi=C * C, beta=beta, **kw)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def eval_loss(loss: LossInstance, point: np.ndarray) -> float:
    """Value of one loss at a decision point (mixture weights for experts)."""
    point = np.atleast_1d(np.asarray(point, dtype=float))
    if point.shape[0] != _loss_dim(loss):
        raise ContractViolation(
            f"decision has dimension {point.shape[0]}, loss expects {_loss_dim(loss)}"
        )
    if isinstance(loss, SquaredLoss):
        r = loss.y - loss.x @ point
        return float(r * r)
    if isinstance(loss, HingeLoss):
        return float(max(0.0, 1.0 - loss.y * (loss.x @ point)))
    return float(loss.values @ point)


def grad_loss(loss: LossInstance, point: np.ndarray) -> np.ndarray:
    """(Sub)gradient of one loss at a decision point.

    The hinge subgradient is 0 at the kink (margin exactly 1).  Expert
    tables are aggregated by weighting, not by gradient steps.
    """
    point = np.atleast_1d(np.asarray(point, dtype=float))
    if isinstance(loss, ExpertLoss):
        raise UnsupportedOperation("expert-table losses have no gradient oracle")
    if point.shape[0] != _loss_dim(loss):
        raise ContractViolation(
            f"decision has dimension {point.shape[0]}, loss expects {_loss_dim(loss)}"
        )
    if isinstance(loss, SquaredLoss):
        return -2.0 * (loss.y - loss.x @ point) * loss.x
    margin = loss.y * (loss.x @ point)
    if margin < 1.0:
        return -loss.y * loss.x
    return np.zeros_like(loss.x)


# batch versions over a whole task; used by the inner solvers ---------------

def batch_values(task: Task, theta: np.ndarray) -> np.ndarray:
    """All n loss values of a squared/hinge task at one point."""
    z = task.features @ theta
    if task.kind is SquaredLoss:
        r = task.targets - z
        return r * r
    return np.maximum(0.0, 1.0 - task.targets * z)


def batch_grad_sum(task: Task, theta: np.ndarray) -> np.ndarray:
    """Gradient of Σᵢ ℓᵢ at one point for a squared/hinge task."""
    X, y = task.features, task.targets
    z = X @ theta
    if task.kind is SquaredLoss:
        return -2.0 * (X.T @ (y - z))
    active = (y * z) < 1.0
    return -((y * active) @ X)


def cumulative_expert_losses(task: Task) -> np.ndarray:
    """Per-expert totals Σᵢ vᵢ over an expert task."""
    return task.tables.sum(axis=0)
