"""Euclidean projections onto the constraint sets used by the learners.

  * ball of radius C (decision sets, meta-parameter ϑ)
  * closed interval (step size γ, learning rate η)
  * probability simplex with a uniform floor (priors bounded away from 0)

The floored simplex {x : Σx = 1, x_h ≥ floor} is handled by shifting out
the floor and projecting the remainder onto a scaled simplex with the usual
sort-and-threshold rule, which is exact in O(M log M).
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation, InfeasibleSet
from .losses import Bounds, OgaParam

__all__ = [
    "project_ball",
    "project_interval",
    "project_simplex_floor",
    "project_oga_param",
    "project_oga_vec",
]

# Relative slack under which a point already counts as inside; keeps the
# projection idempotent in floating point without hurting feasibility.
_REL_TOL = 1e-13


def project_ball(v: np.ndarray, radius: float) -> np.ndarray:
    """Nearest point of the centered Euclidean ball of the given radius."""
    if radius <= 0:
        raise ContractViolation(f"radius must be positive, got {radius}")
    v = np.asarray(v, dtype=float)
    nrm = float(np.linalg.norm(v))
    if not np.isfinite(nrm):
        raise ContractViolation("cannot project a non-finite vector")
    if nrm <= radius * (1.0 + _REL_TOL):
        return v
    return v * (radius / nrm)


def project_interval(x: float, lo: float, hi: float) -> float:
    """Clip a scalar to [lo, hi]."""
    if lo > hi:
        raise ContractViolation(f"empty interval [{lo}, {hi}]")
    return float(min(max(float(x), lo), hi))


def _project_simplex(w: np.ndarray, mass: float) -> np.ndarray:
    """Projection onto {x ≥ 0, Σx = mass} by sorting and thresholding."""
    if mass <= 0.0:
        return np.zeros_like(w)
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - mass
    idx = np.arange(1, w.shape[0] + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    tau = css[rho] / float(rho + 1)
    return np.maximum(w - tau, 0.0)


def project_simplex_floor(v: np.ndarray, floor: float) -> np.ndarray:
    """Nearest point of {x : Σ x = 1, x_h ≥ floor for all h}."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ContractViolation("cannot project a non-finite vector")
    if floor < 0:
        raise ContractViolation(f"floor must be nonnegative, got {floor}")
    m = v.shape[0]
    residual = 1.0 - m * floor
    if residual < 0:
        raise InfeasibleSet(f"simplex floor {floor} infeasible for M={m}")
    # already feasible -> exact fixed point
    if abs(float(v.sum()) - 1.0) <= 1e-12 and float(v.min()) >= floor:
        return v
    return _project_simplex(v - floor, residual) + floor


def project_oga_param(lam: OgaParam, bounds: Bounds) -> OgaParam:
    """Componentwise projection: ϑ onto the C-ball, γ onto [γ_lo, γ_hi]."""
    return OgaParam(
        theta0=project_ball(lam.theta0, bounds.C),
        gamma=project_interval(lam.gamma, bounds.gamma_lo, bounds.gamma_hi),
    )


def project_oga_vec(vec: np.ndarray, bounds: Bounds) -> np.ndarray:
    """Same projection on a raw (ϑ…, γ) vector, which may be infeasible
    (e.g. a gradient step can drive γ negative before projection)."""
    vec = np.asarray(vec, dtype=float)
    return np.concatenate([
        project_ball(vec[:-1], bounds.C),
        [project_interval(float(vec[-1]), bounds.gamma_lo, bounds.gamma_hi)],
    ])
