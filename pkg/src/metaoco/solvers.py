"""Small projected-descent engine shared by the meta-loss and the
proximal meta-update.

Handles two search directions (gradient / Newton) and two step rules
(fixed step / Armijo backtracking along the projected arc).  The engine
only assumes the feasible set is convex and that ``project`` is its
Euclidean projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError

__all__ = ["InnerSolverCfg", "projected_descent"]

_ARMIJO_C1 = 1e-4
_MAX_BACKTRACKS = 40


@dataclass(frozen=True)
class InnerSolverCfg:
    """How inner minimizations are carried out.

    method     "newton" (needs a Hessian callback) or "gradient"
    step_size  fixed step for gradient mode; None selects Armijo
               backtracking
    """

    max_steps: int = 10
    step_size: float | None = None
    tolerance: float = 1e-10
    method: str = "newton"


# defaults mirroring how the inner problems are solved in the experiments:
# exact-in-one-step Newton for quadratic families; for the piecewise-linear
# hinge the smooth coupling terms still carry an exact, positive-definite
# Hessian, so semi-smooth Newton applies — it just needs more iterations
# because the active margin set changes between steps.
QUADRATIC_CFG = InnerSolverCfg(max_steps=10, step_size=None, tolerance=1e-12, method="newton")
HINGE_CFG = InnerSolverCfg(max_steps=60, step_size=None, tolerance=1e-10, method="newton")


def _backtrack(fun, project, x, fx, g, direction, s):
    """Halve ``s`` along the projected arc until sufficient decrease.

    Returns ``(candidate, value, accepted step)``, with a ``None``
    candidate when every trial step fails."""
    for _ in range(_MAX_BACKTRACKS):
        cand = project(x + s * direction)
        f_c = float(fun(cand))
        gain = float(g @ (cand - x))
        if np.isfinite(f_c) and f_c <= fx + _ARMIJO_C1 * min(0.0, gain):
            return cand, f_c, s
        s *= 0.5
    return None, None, s


def projected_descent(fun, grad, project, x0, cfg: InnerSolverCfg, hess=None,
                      free_mask=None):
    """Minimize ``fun`` over a convex set starting from ``x0``.

    ``free_mask(x, g)`` may mark coordinates pinned at an active bound
    (with the gradient pointing outward); Newton systems are then solved
    on the free block only, the textbook treatment of box constraints.

    Returns ``(x, fun(x))`` for the final iterate.  Raises
    ``DivergenceError`` if values or gradients stop being finite.
    """
    x = project(np.array(x0, dtype=float))
    fx = float(fun(x))
    if not np.isfinite(fx):
        raise DivergenceError("objective not finite at the starting point")
    step_guess = 1.0
    for _ in range(cfg.max_steps):
        g = grad(x)
        if not np.all(np.isfinite(g)):
            raise DivergenceError("gradient not finite")
        if cfg.method == "newton":
            free = None if free_mask is None else free_mask(x, g)
            try:
                if free is None or free.all():
                    direction = -np.linalg.solve(hess(x), g)
                elif free.any():
                    sub = np.ix_(free, free)
                    direction = np.zeros_like(g)
                    direction[free] = -np.linalg.solve(hess(x)[sub], g[free])
                else:
                    break
            except np.linalg.LinAlgError:
                direction = -g
            if not np.all(np.isfinite(direction)):
                direction = -g
            s = 1.0
        else:
            direction = -g
            s = cfg.step_size if cfg.step_size is not None else step_guess

        if cfg.method == "gradient" and cfg.step_size is not None:
            x_new = project(x - cfg.step_size * g)
            f_new = float(fun(x_new))
        else:
            # backtrack until sufficient decrease along the projected arc
            x_new, f_new, s = _backtrack(fun, project, x, fx, g, direction, s)
            if x_new is None and cfg.method == "newton":
                # a kink can defeat the Newton direction; retry steepest descent
                x_new, f_new, s = _backtrack(fun, project, x, fx, g, -g, 1.0)
            if x_new is None:
                break
            if cfg.method == "gradient":
                step_guess = min(2.0 * s, 1e8)

        move = float(np.linalg.norm(x_new - x))
        x, fx = x_new, f_new
        if not np.isfinite(fx):
            raise DivergenceError("objective diverged")
        if move <= cfg.tolerance * (1.0 + float(np.linalg.norm(x))):
            break
    return x, fx
