"""Per-task meta-criteria: the best end-of-task value a within-task
learner could certify, as a function of its tuning parameter.

For gradient descent with parameter λ = (ϑ, γ) the criterion is

    𝓛(λ) = min_{‖θ‖ ≤ C} [ Σᵢ ℓᵢ(θ) + γΓ²n/2 + ‖θ − ϑ‖²/(2γ) ],

i.e. cumulative loss of the best comparator plus the regret ceiling of the
learner launched at (ϑ, γ).  For aggregation over M experts the analogous
criteria trade the best expert's cumulative loss against either the
learning rate η (Hoeffding term η n b²/8 + log(M)/η) or the prior weight
(c · log(1/π_k)).

All criteria expose the (sub)gradients the meta-strategies descend on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConstraintActive, ContractViolation
from .losses import (
    Bounds,
    ExpertLoss,
    OgaParam,
    SquaredLoss,
    Task,
    batch_grad_sum,
    batch_values,
    cumulative_expert_losses,
)
from .projections import project_ball
from .solvers import HINGE_CFG, QUADRATIC_CFG, InnerSolverCfg, projected_descent

__all__ = [
    "MetaLossResult",
    "ridge_estimator",
    "meta_loss_oga_quadratic",
    "meta_loss_oga_general",
    "meta_loss_oga",
    "best_expert",
    "meta_loss_ewa_eta",
    "meta_loss_ewa_prior",
]


@dataclass
class MetaLossResult:
    """Value of a meta-criterion, its inner minimizer, and (when the
    criterion is differentiable there) its gradient in the tuning
    parameter."""

    value: float
    minimizer: np.ndarray | int
    gradient: np.ndarray | None = None


def ridge_estimator(X: np.ndarray, Y: np.ndarray, gamma: float,
                    theta0: np.ndarray) -> np.ndarray:
    """Solve (XᵀX + I/(2γ)) θ = XᵀY + ϑ/(2γ) by Cholesky factorization.

    This is the unconstrained minimizer of Σ(yᵢ − xᵢᵀθ)² + ‖θ−ϑ‖²/(2γ).
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    theta0 = np.asarray(theta0, dtype=float)
    if gamma <= 0 or not np.isfinite(gamma):
        raise ContractViolation(f"gamma must be positive, got {gamma}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y)) and np.all(np.isfinite(theta0))):
        raise ContractViolation("ridge inputs must be finite")
    d = X.shape[1]
    A = X.T @ X + np.eye(d) / (2.0 * gamma)
    rhs = X.T @ Y + theta0 / (2.0 * gamma)
    return cho_solve(cho_factor(A), rhs)


def _check_oga_inputs(task: Task, param: OgaParam) -> None:
    if task.kind is ExpertLoss:
        raise ContractViolation("gradient-descent criteria need squared or hinge losses")
    if task.dim != param.theta0.shape[0]:
        raise ContractViolation(
            f"task dimension {task.dim} != parameter dimension {param.theta0.shape[0]}"
        )


def meta_loss_oga_quadratic(task: Task, param: OgaParam, bounds: Bounds) -> MetaLossResult:
    """Closed-form criterion for squared-error tasks.

    Valid only while the ridge solution stays inside the decision ball;
    otherwise raises ``ConstraintActive`` and the caller must use
    ``meta_loss_oga_general``.  The gradient comes from differentiating at
    the (unique, interior) inner minimizer:

        ∂𝓛/∂ϑ = (ϑ − θ̂)/γ,   ∂𝓛/∂γ = Γ²n/2 − ‖θ̂ − ϑ‖²/(2γ²).
    """
    _check_oga_inputs(task, param)
    if task.kind is not SquaredLoss:
        raise ContractViolation("closed form requires squared-error losses")
    theta_hat = ridge_estimator(task.features, task.targets, param.gamma, param.theta0)
    nrm = float(np.linalg.norm(theta_hat))
    if nrm > bounds.C:
        raise ConstraintActive(nrm, bounds.C)
    gamma = param.gamma
    diff = theta_hat - param.theta0
    sq = float(diff @ diff)
    penalty = gamma * bounds.Gamma**2 * task.n / 2.0
    value = float(batch_values(task, theta_hat).sum()) + penalty + sq / (2.0 * gamma)
    grad = np.concatenate([
        (param.theta0 - theta_hat) / gamma,
        [bounds.Gamma**2 * task.n / 2.0 - sq / (2.0 * gamma**2)],
    ])
    return MetaLossResult(value=value, minimizer=theta_hat, gradient=grad)


def default_inner_cfg(task: Task) -> InnerSolverCfg:
    """Newton for quadratic families, semi-smooth Newton for hinge."""
    return QUADRATIC_CFG if task.kind is SquaredLoss else HINGE_CFG


def meta_loss_oga_general(task: Task, param: OgaParam, bounds: Bounds,
                          cfg: InnerSolverCfg | None = None) -> MetaLossResult:
    """Criterion value by constrained minimization over the decision ball.

    Runs projected descent on θ ↦ Σᵢ ℓᵢ(θ) + ‖θ−ϑ‖²/(2γ) and adds the
    γΓ²n/2 ceiling term.  No gradient in λ is reported (the minimizer may
    sit on the ball boundary, where the interior formula is invalid).
    """
    _check_oga_inputs(task, param)
    if cfg is None:
        cfg = default_inner_cfg(task)
    gamma = param.gamma
    theta0 = param.theta0

    def fun(th):
        d = th - theta0
        return float(batch_values(task, th).sum()) + float(d @ d) / (2.0 * gamma)

    def grad(th):
        return batch_grad_sum(task, th) + (th - theta0) / gamma

    if task.kind is SquaredLoss:
        H = 2.0 * (task.features.T @ task.features) + np.eye(task.dim) / gamma
    else:
        # the hinge sum is flat almost everywhere; the prox term's curvature
        # is the whole (generalized) Hessian
        H = np.eye(task.dim) / gamma

    def hess(_th, H=H):
        return H

    theta, base = projected_descent(
        fun, grad, lambda v: project_ball(v, bounds.C), theta0, cfg, hess=hess
    )
    penalty = gamma * bounds.Gamma**2 * task.n / 2.0
    return MetaLossResult(value=base + penalty, minimizer=theta, gradient=None)


def meta_loss_oga(task: Task, param: OgaParam, bounds: Bounds,
                  cfg: InnerSolverCfg | None = None) -> MetaLossResult:
    """Closed form when available and valid, constrained solver otherwise."""
    if task.kind is SquaredLoss:
        try:
            return meta_loss_oga_quadratic(task, param, bounds)
        except ConstraintActive:
            pass
    return meta_loss_oga_general(task, param, bounds, cfg)


# ---------------------------------------------------------------------------
# expert-class criteria
# ---------------------------------------------------------------------------

def best_expert(task: Task) -> tuple[int, float]:
    """Index and cumulative loss of the best expert (ties -> lowest index)."""
    if task.kind is not ExpertLoss:
        raise ContractViolation("best_expert needs an expert task")
    totals = cumulative_expert_losses(task)
    k = int(np.argmin(totals))
    return k, float(totals[k])


def meta_loss_ewa_eta(task: Task, eta: float, num_experts: int) -> MetaLossResult:
    """Learning-rate criterion for aggregation with a uniform prior:

        𝓛(η) = min_k S_k + η n b²/8 + log(M)/η,

    where b is the largest per-round loss magnitude realized in the task.
    The reported gradient is d𝓛/dη = n b²/8 − log(M)/η².
    """
    if task.kind is not ExpertLoss:
        raise ContractViolation("learning-rate criterion needs an expert task")
    if eta <= 0 or not np.isfinite(eta):
        raise ContractViolation(f"eta must be positive, got {eta}")
    if num_experts <= 1:
        raise ContractViolation(f"need at least 2 experts, got {num_experts}")
    tables = task.tables
    b = float(np.abs(tables).max())
    k, smin = best_expert(task)
    logm = np.log(num_experts)
    value = smin + eta * task.n * b**2 / 8.0 + logm / eta
    grad = task.n * b**2 / 8.0 - logm / eta**2
    return MetaLossResult(value=float(value), minimizer=k, gradient=np.array([grad]))


def meta_loss_ewa_prior(task: Task, pi: np.ndarray, cexp: float) -> MetaLossResult:
    """Prior criterion for aggregation at a fixed fast-rate scale:

        𝓛(π) = min_k [ S_k + c·log(1/π_k) ].

    The subgradient charges the active coordinate k* with −c/π_{k*}
    (lowest index on ties) and is zero elsewhere.
    """
    if task.kind is not ExpertLoss:
        raise ContractViolation("prior criterion needs an expert task")
    if cexp <= 0 or not np.isfinite(cexp):
        raise ContractViolation(f"cexp must be positive, got {cexp}")
    pi = np.asarray(pi, dtype=float)
    if pi.shape[0] != task.dim:
        raise ContractViolation(f"prior has {pi.shape[0]} entries, task has {task.dim}")
    if np.any(pi <= 0):
        raise ContractViolation("prior entries must be strictly positive")
    totals = cumulative_expert_losses(task)
    scores = totals - cexp * np.log(pi)
    k = int(np.argmin(scores))
    grad = np.zeros_like(pi)
    grad[k] = -cexp / pi[k]
    return MetaLossResult(value=float(scores[k]), minimizer=k, gradient=grad)
