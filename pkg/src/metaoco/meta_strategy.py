"""Across-task meta-strategies.

After each task the tuning parameter λ of the within-task learner is
revised using that task's meta-criterion 𝓛_t, by one of two updates:

  * gradient step     λ_{t} = Π_Λ[λ_{t−1} − α ∇𝓛_{t−1}(λ_{t−1})]
  * proximal step     λ_{t} = argmin_Λ 𝓛_{t−1}(λ) + ‖λ − λ_{t−1}‖²/(2α)

The proximal step is realized by jointly minimizing over the inner
decision and λ — for gradient-descent learners, over (θ, ϑ, γ) at once —
which keeps the subproblem convex instead of alternating between blocks.

The module also provides the tuned constants (Lipschitz bounds and meta
step sizes) under which the cumulative meta-criterion of either strategy
is within O(√T) of the best fixed λ in hindsight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractViolation
from .losses import (
    Bounds,
    EwaPrior,
    EwaRate,
    OgaParam,
    SquaredLoss,
    Task,
    TuningParam,
    batch_grad_sum,
    batch_values,
    cumulative_expert_losses,
)
from .meta_loss import meta_loss_ewa_eta, meta_loss_oga
from .projections import project_ball, project_interval, project_simplex_floor
from .solvers import HINGE_CFG, QUADRATIC_CFG, InnerSolverCfg, projected_descent

__all__ = [
    "MetaState",
    "lipschitz_oga",
    "lipschitz_eta",
    "alpha_oga",
    "alpha_eta",
    "alpha_prior",
    "param_to_vec",
    "vec_to_param",
    "ogms_step",
    "ogms_eta_step",
    "opms_step",
    "initial_oga_param",
    "initial_eta_param",
    "initial_prior_param",
]


# ---------------------------------------------------------------------------
# tuned constants
# ---------------------------------------------------------------------------

def lipschitz_oga(n: int, Gamma: float, C: float, gamma_lo: float) -> float:
    """Lipschitz bound of the gradient-descent criterion over Λ:

        L = sqrt(n²Γ⁴/4 + 4C²/γ_lo² + 4C⁴/γ_lo⁴).
    """
    return math.sqrt(
        n**2 * Gamma**4 / 4.0 + 4.0 * C**2 / gamma_lo**2 + 4.0 * C**4 / gamma_lo**4
    )


def lipschitz_eta(n: int, B: float, M: float) -> float:
    """Lipschitz bound of the learning-rate criterion: n²·log(M) + nB²/8."""
    return n**2 * math.log(M) + n * B**2 / 8.0


def alpha_oga(C: float, L: float, T: int) -> float:
    """Meta step tuned to the gradient-descent parameter set:
    α = (C/L)·sqrt((4 + C²)/T)."""
    return (C / L) * math.sqrt((4.0 + C**2) / T)


def alpha_eta(n: int, B: float, M: float, T: int) -> float:
    """Meta step tuned to the learning-rate interval: α = (1/L)·sqrt(2/T)."""
    return (1.0 / lipschitz_eta(n, B, M)) * math.sqrt(2.0 / T)


def alpha_prior(cexp: float, M: int, T: int) -> float:
    """Meta step tuned to the floored simplex: α = 1/(2·c·M·√T)."""
    return 1.0 / (2.0 * cexp * M * math.sqrt(T))


# ---------------------------------------------------------------------------
# state and parameter vectorization
# ---------------------------------------------------------------------------

@dataclass
class MetaState:
    """Current tuning parameter, meta step size, and position in the stream."""

    lam: TuningParam
    alpha: float
    task_index: int = 0
    history: list | None = None

    def advanced(self, lam: TuningParam) -> "MetaState":
        if self.history is not None:
            self.history.append(lam)
        return replace(self, lam=lam, task_index=self.task_index + 1)


def param_to_vec(lam: TuningParam) -> np.ndarray:
    """Flatten a tuning parameter; gradient-descent params order as (ϑ…, γ)."""
    if isinstance(lam, OgaParam):
        return np.concatenate([lam.theta0, [lam.gamma]])
    if isinstance(lam, EwaRate):
        return np.array([lam.eta])
    return np.asarray(lam.pi, dtype=float).copy()


def vec_to_param(template: TuningParam, vec: np.ndarray) -> TuningParam:
    """Rebuild a tuning parameter of the template's family from a flat vector."""
    vec = np.asarray(vec, dtype=float)
    if isinstance(template, OgaParam):
        return OgaParam(theta0=vec[:-1], gamma=float(vec[-1]))
    if isinstance(template, EwaRate):
        return EwaRate(eta=float(vec[0]))
    return EwaPrior(pi=vec)


def initial_oga_param(d: int, bounds: Bounds) -> OgaParam:
    """Default start for gradient-descent meta-learning: ϑ = 0, γ = γ_hi."""
    return OgaParam(theta0=np.zeros(d), gamma=bounds.gamma_hi)


def initial_eta_param() -> EwaRate:
    return EwaRate(eta=1.0)


def initial_prior_param(m: int) -> EwaPrior:
    return EwaPrior(pi=np.full(m, 1.0 / m))


# ---------------------------------------------------------------------------
# gradient meta-step
# ---------------------------------------------------------------------------

def ogms_step(state: MetaState, grad: np.ndarray, project) -> MetaState:
    """One projected gradient step on the previous task's criterion.

    ``grad`` is laid out like ``param_to_vec(state.lam)``; ``project`` maps a
    raw step vector back onto the admissible set Λ.  Projection runs before
    the parameter is rebuilt because the unprojected point can be infeasible
    (negative γ or η, weights off the simplex).
    """
    vec = param_to_vec(state.lam)
    grad = np.atleast_1d(np.asarray(grad, dtype=float))
    if grad.shape != vec.shape:
        raise ContractViolation(
            f"gradient shape {grad.shape} does not match parameter shape {vec.shape}"
        )
    if not np.all(np.isfinite(grad)):
        raise ContractViolation("meta-gradient must be finite")
    projected = np.atleast_1d(np.asarray(project(vec - state.alpha * grad), dtype=float))
    return state.advanced(vec_to_param(state.lam, projected))


def ogms_eta_step(state: MetaState, task: Task, num_experts: int,
                  n: int | None = None) -> MetaState:
    """Explicit learning-rate update

        η ← clip(η − α·(n b²/8 − log(M)/η²), [1/n, 1])

    with b the previous task's realized max loss; identical to feeding
    ``ogms_step`` the analytic d𝓛/dη and the interval projection.
    """
    if not isinstance(state.lam, EwaRate):
        raise ContractViolation("ogms_eta_step needs a learning-rate parameter")
    if n is None:
        n = task.n
    grad = meta_loss_ewa_eta(task, state.lam.eta, num_experts).gradient

    def proj(vec: np.ndarray) -> np.ndarray:
        return np.array([project_interval(float(vec[0]), 1.0 / n, 1.0)])

    return ogms_step(state, grad, proj)


# ---------------------------------------------------------------------------
# proximal meta-step
# ---------------------------------------------------------------------------

def _opms_oga(state: MetaState, task: Task, bounds: Bounds,
              cfg: InnerSolverCfg | None, learn_gamma: bool) -> MetaState:
    """Joint minimization of

        F(θ, ϑ, γ) = Σℓᵢ(θ) + γΓ²n/2 + ‖θ−ϑ‖²/(2γ)
                     + (‖ϑ−ϑ₀‖² + (γ−γ₀)²)/(2α)

    over the product of two C-balls and (when γ is learned) [γ_lo, γ_hi].
    F is jointly convex (quadratic-over-linear in (θ, ϑ, γ)), so one
    projected Newton or gradient descent reaches the proximal point.
    """
    lam0: OgaParam = state.lam
    if cfg is None:
        cfg = QUADRATIC_CFG if task.kind is SquaredLoss else HINGE_CFG
    d = task.dim
    alpha = state.alpha
    gamma0 = lam0.gamma
    theta00 = lam0.theta0
    half_gn = bounds.Gamma**2 * task.n / 2.0

    def split(z):
        if learn_gamma:
            return z[:d], z[d:2 * d], float(z[-1])
        return z[:d], z[d:2 * d], gamma0

    def fun(z):
        th, v, g = split(z)
        u = th - v
        val = float(batch_values(task, th).sum()) + g * half_gn \
            + float(u @ u) / (2.0 * g) \
            + float((v - theta00) @ (v - theta00)) / (2.0 * alpha)
        if learn_gamma:
            val += (g - gamma0) ** 2 / (2.0 * alpha)
        return val

    def grad(z):
        th, v, g = split(z)
        u = th - v
        gth = batch_grad_sum(task, th) + u / g
        gv = -u / g + (v - theta00) / alpha
        if not learn_gamma:
            return np.concatenate([gth, gv])
        gg = half_gn - float(u @ u) / (2.0 * g * g) + (g - gamma0) / alpha
        return np.concatenate([gth, gv, [gg]])

    # the hinge sum is flat almost everywhere, so its loss block vanishes
    # and the coupling curvature below is the exact (generalized) Hessian
    if task.kind is SquaredLoss:
        X = task.features
        loss_block = 2.0 * (X.T @ X)
    else:
        loss_block = np.zeros((d, d))
    eye = np.eye(d)

    def hess(z):
        th, v, g = split(z)
        u = th - v
        p = 2 * d + 1 if learn_gamma else 2 * d
        H = np.zeros((p, p))
        H[:d, :d] = loss_block + eye / g
        H[:d, d:2 * d] = -eye / g
        H[d:2 * d, :d] = -eye / g
        H[d:2 * d, d:2 * d] = eye / g + eye / alpha
        if learn_gamma:
            ug2 = -u / (g * g)
            H[:d, -1] = ug2
            H[-1, :d] = ug2
            H[d:2 * d, -1] = -ug2
            H[-1, d:2 * d] = -ug2
            H[-1, -1] = float(u @ u) / g**3 + 1.0 / alpha
        return H

    def project(z):
        th = project_ball(z[:d], bounds.C)
        v = project_ball(z[d:2 * d], bounds.C)
        if not learn_gamma:
            return np.concatenate([th, v])
        g = project_interval(z[-1], bounds.gamma_lo, bounds.gamma_hi)
        return np.concatenate([th, v, [g]])

    free_mask = None
    if learn_gamma:
        lo, hi = bounds.gamma_lo, bounds.gamma_hi

        def free_mask(z, gz):
            free = np.ones(z.shape[0], dtype=bool)
            pinned_lo = z[-1] <= lo * (1 + 1e-12) and gz[-1] > 0
            pinned_hi = z[-1] >= hi * (1 - 1e-12) and gz[-1] < 0
            free[-1] = not (pinned_lo or pinned_hi)
            return free

    # Start θ at the criterion's inner minimizer for the incoming λ so the
    # coupling term sees a realistic ‖θ−ϑ‖ from the first iterate; starting
    # at θ=ϑ makes the γ slope spuriously positive and strands γ low.
    theta_start = meta_loss_oga(task, lam0, bounds, cfg).minimizer
    start = [theta_start, theta00]
    if learn_gamma:
        start.append([gamma0])
    z, _ = projected_descent(fun, grad, project, np.concatenate(start), cfg,
                             hess=hess, free_mask=free_mask)
    _, v, g = split(z)
    return state.advanced(OgaParam(theta0=v, gamma=g))


def _opms_eta(state: MetaState, task: Task, cfg: InnerSolverCfg | None) -> MetaState:
    """Proximal update of the learning rate on [1/n, 1] by 1-D projected
    Newton on η ↦ η n b²/8 + log(M)/η + (η−η₀)²/(2α)."""
    lam0: EwaRate = state.lam
    if cfg is None:
        cfg = InnerSolverCfg(max_steps=30, tolerance=1e-14, method="newton")
    n = task.n
    m = task.dim
    b = float(np.abs(task.tables).max())
    logm = math.log(m)
    eta0 = lam0.eta
    alpha = state.alpha
    slope = n * b**2 / 8.0

    def fun(z):
        e = float(z[0])
        return slope * e + logm / e + (e - eta0) ** 2 / (2.0 * alpha)

    def grad(z):
        e = float(z[0])
        return np.array([slope - logm / e**2 + (e - eta0) / alpha])

    def hess(z):
        e = float(z[0])
        return np.array([[2.0 * logm / e**3 + 1.0 / alpha]])

    def project(z):
        return np.array([project_interval(float(z[0]), 1.0 / n, 1.0)])

    z, _ = projected_descent(fun, grad, project, np.array([eta0]), cfg, hess=hess)
    return state.advanced(EwaRate(eta=float(z[0])))


def _opms_prior(state: MetaState, task: Task, bounds: Bounds,
                cfg: InnerSolverCfg | None) -> MetaState:
    """Proximal update of the prior over the floored simplex
    {π : Σπ = 1, π_k ≥ 1/(2M)} by projected subgradient descent on

        min_k [S_k + c·log(1/π_k)] + ‖π − π₀‖²/(2α).
    """
    lam0: EwaPrior = state.lam
    if cfg is None:
        cfg = InnerSolverCfg(max_steps=50, step_size=None, tolerance=1e-12,
                             method="gradient")
    totals = cumulative_expert_losses(task)
    m = task.dim
    floor = 1.0 / (2.0 * m)
    cexp = bounds.cexp
    pi0 = np.asarray(lam0.pi, dtype=float)
    alpha = state.alpha

    def fun(z):
        scores = totals - cexp * np.log(z)
        diff = z - pi0
        return float(scores.min()) + float(diff @ diff) / (2.0 * alpha)

    def grad(z):
        scores = totals - cexp * np.log(z)
        k = int(np.argmin(scores))
        g = (z - pi0) / alpha
        g[k] -= cexp / z[k]
        return g

    def project(z):
        return project_simplex_floor(z, floor)

    z, _ = projected_descent(fun, grad, project, pi0, cfg)
    return state.advanced(EwaPrior(pi=z))


def opms_step(state: MetaState, prev_task: Task, bounds: Bounds,
              cfg: InnerSolverCfg | None = None,
              learn_gamma: bool = True) -> MetaState:
    """One proximal meta-step on the previous task's criterion.

    ``learn_gamma=False`` freezes the within-task step of a gradient-descent
    parameter and adapts only the starting point ϑ.
    """
    if state.alpha <= 0 or not np.isfinite(state.alpha):
        raise ContractViolation(f"alpha must be positive, got {state.alpha}")
    if isinstance(state.lam, OgaParam):
        return _opms_oga(state, prev_task, bounds, cfg, learn_gamma)
    if isinstance(state.lam, EwaRate):
        return _opms_eta(state, prev_task, cfg)
    return _opms_prior(state, prev_task, bounds, cfg)
