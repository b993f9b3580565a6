"""Within-task online learners: projected gradient descent and
exponentially weighted aggregation.

Both learners follow a predict-then-update protocol: the decision for
round i is committed before the round-i loss is revealed, and the final
update (using the last loss) is kept as the end-of-task decision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, DegeneratePrior
from .losses import Bounds, ExpertLoss, OgaParam, Task, eval_loss, grad_loss
from .projections import project_ball

__all__ = ["TaskTrace", "run_oga", "ewa_weights", "run_ewa"]


@dataclass
class TaskTrace:
    """Record of one within-task run.

    decisions        one decision per round (vectors or mixture weights)
    round_losses     loss incurred at each round's decision
    cumulative_loss  Σ round_losses
    end_decision     decision after the final update; this is the
                     parameter the task is judged on afterwards
    mixed_decisions  optional per-round mixtures Σ_k p_k x_k when expert
                     points are supplied to the aggregator
    """

    decisions: list
    round_losses: np.ndarray
    cumulative_loss: float
    end_decision: np.ndarray
    mixed_decisions: list | None = None


def run_oga(task: Task, param: OgaParam, bounds: Bounds) -> TaskTrace:
    """Projected online gradient descent over one task.

    Starts at ϑ, then for each round i ≥ 2 moves against the previous
    round's (sub)gradient with step γ and projects back onto the C-ball:

        θ_1 = ϑ,   θ_i = Π_C[θ_{i−1} − γ ∇ℓ_{i−1}(θ_{i−1})].
    """
    if task.kind is ExpertLoss:
        raise ContractViolation("gradient descent needs squared or hinge losses")
    if task.dim != param.theta0.shape[0]:
        raise ContractViolation(
            f"task dimension {task.dim} != parameter dimension {param.theta0.shape[0]}"
        )
    if np.linalg.norm(param.theta0) > bounds.C * (1 + 1e-9):
        raise ContractViolation("theta0 lies outside the decision ball")
    if not (bounds.gamma_lo * (1 - 1e-9) <= param.gamma <= bounds.gamma_hi * (1 + 1e-9)):
        raise ContractViolation(
            f"gamma {param.gamma} outside [{bounds.gamma_lo}, {bounds.gamma_hi}]"
        )

    theta = np.asarray(param.theta0, dtype=float).copy()
    gamma = param.gamma
    decisions = []
    round_losses = np.empty(task.n)
    for i, loss in enumerate(task.losses):
        decisions.append(theta)
        round_losses[i] = eval_loss(loss, theta)
        theta = project_ball(theta - gamma * grad_loss(loss, theta), bounds.C)
    return TaskTrace(
        decisions=decisions,
        round_losses=round_losses,
        cumulative_loss=float(round_losses.sum()),
        end_decision=theta,
    )


def _weights_from_cumulative(cum: np.ndarray, eta: float, log_prior: np.ndarray) -> np.ndarray:
    """Normalized weights ∝ π_k exp(−η S_k), computed in the log domain."""
    logw = log_prior - eta * cum
    top = logw.max()
    if not np.isfinite(top):
        raise DegeneratePrior("no prior mass left on any expert")
    w = np.exp(logw - top)
    return w / w.sum()


def _log_prior(prior: np.ndarray, m: int) -> np.ndarray:
    prior = np.asarray(prior, dtype=float)
    if prior.shape[0] != m:
        raise ContractViolation(f"prior has {prior.shape[0]} entries, expected {m}")
    if np.any(prior < 0) or abs(float(prior.sum()) - 1.0) > 1e-8:
        raise ContractViolation("prior must be a probability vector")
    with np.errstate(divide="ignore"):
        return np.log(prior)


def ewa_weights(past_losses, eta: float, prior: np.ndarray) -> np.ndarray:
    """Aggregation weights after a sequence of expert-loss rounds.

    Weights are π_k exp(−η Σ_j v_{j,k}) normalized; the empty history
    returns the prior itself.  Stable for large η via log-sum-exp shift.
    """
    if eta <= 0 or not np.isfinite(eta):
        raise ContractViolation(f"eta must be positive, got {eta}")
    rows = [l.values if isinstance(l, ExpertLoss) else np.asarray(l, dtype=float)
            for l in past_losses]
    if not rows:
        prior = np.asarray(prior, dtype=float)
        total = float(prior.sum())
        if total <= 0:
            raise DegeneratePrior("prior has no mass")
        return prior / total
    cum = np.add.reduce(rows)
    return _weights_from_cumulative(cum, eta, _log_prior(prior, cum.shape[0]))


def run_ewa(task: Task, eta: float, prior: np.ndarray,
            expert_points: np.ndarray | None = None) -> TaskTrace:
    """Exponentially weighted aggregation over one expert task.

    Round i plays the weights built from rounds 1..i−1 and pays the
    mixture loss ⟨p_i, v_i⟩.  ``end_decision`` holds the weights after the
    final round.  When ``expert_points`` (M×d) is given, the per-round
    mixtures Σ_k p_k x_k are recorded as well.
    """
    if task.kind is not ExpertLoss:
        raise ContractViolation("aggregation needs expert-table losses")
    m = task.dim
    log_prior = _log_prior(prior, m)
    if expert_points is not None:
        expert_points = np.asarray(expert_points, dtype=float)
        if expert_points.shape[0] != m:
            raise ContractViolation("expert_points must have one row per expert")

    cum = np.zeros(m)
    decisions = []
    mixed = [] if expert_points is not None else None
    round_losses = np.empty(task.n)
    for i, loss in enumerate(task.losses):
        p = _weights_from_cumulative(cum, eta, log_prior)
        decisions.append(p)
        if mixed is not None:
            mixed.append(p @ expert_points)
        round_losses[i] = eval_loss(loss, p)
        cum = cum + loss.values
    end = _weights_from_cumulative(cum, eta, log_prior)
    return TaskTrace(
        decisions=decisions,
        round_losses=round_losses,
        cumulative_loss=float(round_losses.sum()),
        end_decision=end,
        mixed_decisions=mixed,
    )
