"""Self-contained invariant suite behind the ``verify`` CLI subcommand.

Each check re-derives a documented property on fresh random instances
(fixed seeds, reduced scale) and reports one pass/fail line.  The suite
returns the number of failed checks; the CLI turns that into exit code 1.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConstraintActive
from .losses import (
    Bounds,
    EwaRate,
    ExpertLoss,
    HingeLoss,
    OgaParam,
    SquaredLoss,
    Task,
    batch_values,
    eval_loss,
    grad_loss,
)
from .generators import (
    ExpertStreamCfg,
    StreamCfg,
    gen_expert_stream,
    gen_regression_stream,
)
from .meta_loss import (
    meta_loss_ewa_eta,
    meta_loss_ewa_prior,
    meta_loss_oga_general,
    meta_loss_oga_quadratic,
    ridge_estimator,
)
from .meta_strategy import (
    MetaState,
    alpha_eta,
    alpha_oga,
    alpha_prior,
    lipschitz_oga,
    ogms_eta_step,
    opms_step,
)
from .projections import project_ball, project_interval, project_simplex_floor
from .within_task import ewa_weights, run_ewa, run_oga

__all__ = ["run_all", "CHECKS"]


def _rand_quad_task(rng, d=3, n=8, scale=2.0) -> Task:
    X = rng.standard_normal((n, d))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    y = rng.uniform(-scale, scale, size=n)
    return Task(losses=tuple(SquaredLoss(x=X[i], y=y[i]) for i in range(n)))


def _fd_grad(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = h * max(1.0, abs(x[i]))
        g[i] = (f(x + e) - f(x - e)) / (2 * e[i])
    return g


def _with_gamma(bounds: Bounds, g: float) -> Bounds:
    from dataclasses import replace
    return replace(bounds, Gamma=g)


# --------------------------------------------------------------------------
# individual checks; each returns None on success or a failure description
# --------------------------------------------------------------------------

def check_loss_gradients():
    rng = np.random.default_rng(11)
    for _ in range(50):
        d = int(rng.integers(1, 5))
        x = rng.standard_normal(d)
        th = rng.standard_normal(d)
        sq = SquaredLoss(x=x, y=float(rng.standard_normal()))
        fd = _fd_grad(lambda t: eval_loss(sq, t), th)
        if np.linalg.norm(fd - grad_loss(sq, th)) > 1e-5 * (1 + np.linalg.norm(fd)):
            return "squared-loss gradient disagrees with finite differences"
        hg = HingeLoss(x=rng.standard_normal(d), y=float(rng.choice([-1.0, 1.0])))
        th2 = rng.standard_normal(d)
        if abs(1.0 - hg.y * (hg.x @ th2)) > 1e-3:  # stay off the kink
            fd = _fd_grad(lambda t: eval_loss(hg, t), th2)
            if np.linalg.norm(fd - grad_loss(hg, th2)) > 1e-5 * (1 + np.linalg.norm(fd)):
                return "hinge subgradient disagrees with finite differences"
    return None


def check_loss_convexity():
    rng = np.random.default_rng(12)
    for _ in range(100):
        d = int(rng.integers(1, 4))
        task = _rand_quad_task(rng, d=d, n=3)
        a, b = rng.standard_normal(d), rng.standard_normal(d)
        for loss in task.losses:
            mid = eval_loss(loss, (a + b) / 2)
            if mid > (eval_loss(loss, a) + eval_loss(loss, b)) / 2 + 1e-10:
                return "squared loss failed midpoint convexity"
    return None


def check_gradient_bound():
    rng = np.random.default_rng(13)
    C = 2.0
    for _ in range(200):
        d = int(rng.integers(1, 5))
        x = rng.standard_normal(d)
        x /= max(1.0, np.linalg.norm(x))
        y = float(rng.uniform(-1.5, 1.5))
        loss = SquaredLoss(x=x, y=y)
        th = project_ball(rng.standard_normal(d) * 3, C)
        gam = 2 * 1.0 * 1.5 + 2 * 1.0 * C
        if np.linalg.norm(grad_loss(loss, th)) > gam + 1e-12:
            return "squared-loss gradient exceeded 2bc + 2b^2 C"
    return None


def check_projection_idempotent():
    rng = np.random.default_rng(21)
    for _ in range(200):
        d = int(rng.integers(1, 8))
        v = rng.standard_normal(d) * rng.uniform(0.1, 10)
        radius = float(rng.uniform(0.5, 5))
        p = project_ball(v, radius)
        if not np.array_equal(project_ball(p, radius), p):
            return "ball projection not idempotent"
        x = float(rng.uniform(-5, 5))
        q = project_interval(x, -1.0, 1.0)
        if project_interval(q, -1.0, 1.0) != q:
            return "interval projection not idempotent"
        m = int(rng.integers(2, 7))
        floor = float(rng.uniform(0, 1.0 / (2 * m)))
        s = project_simplex_floor(rng.standard_normal(m), floor)
        if not np.array_equal(project_simplex_floor(s, floor), s):
            return "floored-simplex projection not idempotent"
    return None


def check_projection_properties():
    rng = np.random.default_rng(22)
    for _ in range(200):
        d = int(rng.integers(2, 7))
        u = rng.standard_normal(d) * 4
        v = rng.standard_normal(d) * 4
        radius = float(rng.uniform(0.5, 3))
        pu, pv = project_ball(u, radius), project_ball(v, radius)
        if np.linalg.norm(pu - pv) > np.linalg.norm(u - v) + 1e-12:
            return "ball projection expanded distances"
        m = int(rng.integers(2, 6))
        floor = float(rng.uniform(0, 0.9 / m))
        w = rng.standard_normal(m) * 2
        p = project_simplex_floor(w, floor)
        if abs(p.sum() - 1.0) > 1e-10 or p.min() < floor - 1e-10:
            return "floored-simplex projection infeasible"
        # optimality: no feasible point is closer
        q = project_simplex_floor(rng.standard_normal(m) * 2, floor)
        if np.linalg.norm(w - q) < np.linalg.norm(w - p) - 1e-10:
            return "floored-simplex projection not the nearest point"
    return None


def check_oga_trace():
    rng = np.random.default_rng(31)
    bounds = Bounds(C=2.0, Gamma=12.0, gamma_lo=0.01, gamma_hi=4.0)
    for _ in range(50):
        task = _rand_quad_task(rng, d=int(rng.integers(1, 4)), n=int(rng.integers(1, 10)))
        lam = OgaParam(theta0=project_ball(rng.standard_normal(task.dim), bounds.C),
                       gamma=float(rng.uniform(0.02, 1.0)))
        tr = run_oga(task, lam, bounds)
        if any(np.linalg.norm(thv) > bounds.C + 1e-12 for thv in tr.decisions):
            return "within-task decision left the ball"
        if np.linalg.norm(tr.end_decision) > bounds.C + 1e-12:
            return "end-of-task decision left the ball"
        if abs(tr.cumulative_loss - tr.round_losses.sum()) > 1e-9:
            return "cumulative loss out of sync with round losses"
        if not np.array_equal(tr.decisions[0], np.asarray(lam.theta0)):
            return "first decision must equal the starting point"
    return None


def check_oga_regret():
    rng = np.random.default_rng(32)
    C = 2.0
    bounds = Bounds(C=C, Gamma=1.0, gamma_lo=1e-3, gamma_hi=4.0)
    for _ in range(100):
        d = int(rng.integers(1, 4))
        n = int(rng.integers(2, 12))
        task = _rand_quad_task(rng, d=d, n=n, scale=1.5)
        b = max(float(np.linalg.norm(l.x)) for l in task.losses)
        c = max(abs(l.y) for l in task.losses)
        gam_bound = 2 * b * c + 2 * b * b * C
        lam = OgaParam(theta0=project_ball(rng.standard_normal(d), C),
                       gamma=float(rng.uniform(0.01, 1.0)))
        tr = run_oga(task, lam, _with_gamma(bounds, gam_bound))
        for _ in range(10):
            comp = project_ball(rng.standard_normal(d) * 2, C)
            ceiling = (float(batch_values(task, comp).sum())
                       + lam.gamma * gam_bound**2 * n / 2.0
                       + float(np.sum((comp - lam.theta0) ** 2)) / (2 * lam.gamma))
            if tr.cumulative_loss > ceiling + 1e-8:
                return "gradient-descent regret ceiling violated"
    return None


def check_ewa():
    rng = np.random.default_rng(33)
    for _ in range(100):
        m = int(rng.integers(2, 8))
        n = int(rng.integers(1, 12))
        B = float(rng.uniform(0.5, 3.0))
        vals = rng.uniform(0, B, size=(n, m))
        task = Task(losses=tuple(ExpertLoss(values=vals[i]) for i in range(n)))
        eta = float(rng.uniform(1.0 / n, 1.0))
        prior = np.full(m, 1.0 / m)
        tr = run_ewa(task, eta, prior)
        for p in tr.decisions + [tr.end_decision]:
            if abs(p.sum() - 1.0) > 1e-9 or p.min() < -1e-15:
                return "aggregation weights are not a distribution"
        totals = vals.sum(axis=0)
        ceiling = totals.min() + eta * n * B**2 / 8.0 + math.log(m) / eta
        if tr.cumulative_loss > ceiling + 1e-8:
            return "aggregation regret ceiling violated"
        i = int(rng.integers(0, n))
        w = ewa_weights(task.losses[:i], eta, prior)
        if np.linalg.norm(w - tr.decisions[i]) > 1e-10:
            return "per-round weights disagree with ewa_weights"
    return None


def check_ridge_and_metaloss():
    rng = np.random.default_rng(41)
    for _ in range(50):
        d = int(rng.integers(1, 5))
        task = _rand_quad_task(rng, d=d, n=int(rng.integers(1, 9)))
        gamma = float(rng.uniform(0.05, 2.0))
        th0 = rng.standard_normal(d) * 0.5
        th = ridge_estimator(task.features, task.targets, gamma, th0)
        A = task.features.T @ task.features + np.eye(d) / (2 * gamma)
        rhs = task.features.T @ task.targets + th0 / (2 * gamma)
        if np.linalg.norm(A @ th - rhs) > 1e-10 * (1 + np.linalg.norm(rhs)):
            return "ridge residual too large"
        bounds = Bounds(C=50.0, Gamma=3.0, gamma_lo=0.01, gamma_hi=4.0)
        lam = OgaParam(theta0=th0, gamma=gamma)
        try:
            quad = meta_loss_oga_quadratic(task, lam, bounds)
        except ConstraintActive:
            continue
        gen = meta_loss_oga_general(task, lam, bounds)
        if abs(quad.value - gen.value) > 1e-6 * (1 + abs(quad.value)):
            return "closed form and constrained solver disagree"
        fd = _fd_grad(lambda v: meta_loss_oga_quadratic(
            task, OgaParam(theta0=v[:-1], gamma=float(v[-1])), bounds).value,
            np.concatenate([th0, [gamma]]))
        if np.linalg.norm(fd - quad.gradient) > 1e-5 * (1 + np.linalg.norm(fd)):
            return "criterion gradient disagrees with finite differences"
    return None


def check_eta_criterion():
    rng = np.random.default_rng(42)
    cfg = ExpertStreamCfg(M=8, n=6, T=30, support=(0, 1), B=2.0, seed=5)
    tasks = gen_expert_stream(cfg)
    for task in tasks:
        eta = float(rng.uniform(1.0 / cfg.n, 1.0))
        res = meta_loss_ewa_eta(task, eta, cfg.M)
        fd = _fd_grad(lambda v: meta_loss_ewa_eta(task, float(v[0]), cfg.M).value,
                      np.array([eta]))
        if abs(fd[0] - res.gradient[0]) > 1e-5 * (1 + abs(fd[0])):
            return "d(criterion)/d(eta) disagrees with finite differences"
        pi = rng.uniform(0.1, 1.0, size=cfg.M)
        pi /= pi.sum()
        resp = meta_loss_ewa_prior(task, pi, 1.0)
        k = resp.minimizer
        if resp.gradient[k] != -1.0 / pi[k]:
            return "prior-criterion subgradient has the wrong active entry"
    return None


def check_meta_convexity():
    rng = np.random.default_rng(43)
    cfg = StreamCfg(d=2, n=6, T=20, r=1.0, theta0=0.5, seed=3)
    tasks = gen_regression_stream(cfg)
    bounds = Bounds(C=40.0, Gamma=2.0, gamma_lo=0.05, gamma_hi=2.0)
    for task in tasks:
        v1 = np.concatenate([rng.uniform(-1, 1, 2), [rng.uniform(0.05, 2.0)]])
        v2 = np.concatenate([rng.uniform(-1, 1, 2), [rng.uniform(0.05, 2.0)]])
        vals = []
        for v in (v1, v2, (v1 + v2) / 2):
            vals.append(meta_loss_oga_quadratic(
                task, OgaParam(theta0=v[:-1], gamma=float(v[-1])), bounds).value)
        if vals[2] > (vals[0] + vals[1]) / 2 + 1e-8:
            return "criterion failed midpoint convexity in the tuning parameter"
    return None


def check_strategy_steps():
    rng = np.random.default_rng(51)
    # explicit eta update vs generic gradient step
    cfg = ExpertStreamCfg(M=10, n=8, T=10, support=(0, 2), B=1.5, seed=9)
    tasks = gen_expert_stream(cfg)
    for task in tasks:
        eta = float(rng.uniform(1.0 / cfg.n, 1.0))
        st = MetaState(lam=EwaRate(eta=eta), alpha=0.05)
        a = ogms_eta_step(st, task, cfg.M).lam.eta
        g = meta_loss_ewa_eta(task, eta, cfg.M).gradient
        b = min(max(eta - 0.05 * float(g[0]), 1.0 / cfg.n), 1.0)
        if a != b:
            return "explicit eta update differs from the generic gradient step"
    # proximal step with tiny alpha stays put; with huge alpha minimizes
    task = _rand_quad_task(np.random.default_rng(52), d=2, n=6)
    bounds = Bounds(C=20.0, Gamma=2.0, gamma_lo=0.05, gamma_hi=2.0)
    lam0 = OgaParam(theta0=np.array([0.3, -0.2]), gamma=0.7)
    near = opms_step(MetaState(lam=lam0, alpha=1e-12), task, bounds).lam
    if np.linalg.norm(near.theta0 - lam0.theta0) > 1e-6 or abs(near.gamma - lam0.gamma) > 1e-6:
        return "proximal step with alpha→0 moved the parameter"
    far = opms_step(MetaState(lam=lam0, alpha=1e12), task, bounds).lam
    ref = _alternating_opms(task, bounds, lam0, 1e12)
    if np.linalg.norm(far.theta0 - ref.theta0) > 1e-4 or abs(far.gamma - ref.gamma) > 1e-4:
        return "proximal step with alpha→∞ missed the criterion minimizer"
    mid = opms_step(MetaState(lam=lam0, alpha=0.3), task, bounds).lam
    ref = _alternating_opms(task, bounds, lam0, 0.3)
    if np.linalg.norm(mid.theta0 - ref.theta0) > 1e-5 or abs(mid.gamma - ref.gamma) > 1e-5:
        return "proximal step disagrees with alternating exact minimization"
    return None


def _alternating_opms(task: Task, bounds: Bounds, lam0: OgaParam, alpha: float) -> OgaParam:
    """Reference proximal point by alternating exact block minimization."""
    X, Y = task.features, task.targets
    d = task.dim
    th0, g0 = np.asarray(lam0.theta0, dtype=float), lam0.gamma
    v, g = th0.copy(), g0
    theta = th0.copy()
    for _ in range(5000):
        theta_new = np.linalg.solve(2 * X.T @ X + np.eye(d) / g,
                                    2 * X.T @ Y + v / g)
        v_new = (theta_new / g + th0 / alpha) / (1.0 / g + 1.0 / alpha)
        s = float(np.sum((theta_new - v_new) ** 2))
        obj = lambda gg: (gg * bounds.Gamma**2 * task.n / 2.0 + s / (2 * gg)
                          + (gg - g0) ** 2 / (2 * alpha))
        g_new = float(minimize_scalar(obj, bounds=(bounds.gamma_lo, bounds.gamma_hi),
                                      method="bounded", options={"xatol": 1e-14}).x)
        if (np.linalg.norm(theta_new - theta) < 1e-13
                and np.linalg.norm(v_new - v) < 1e-13 and abs(g_new - g) < 1e-13):
            theta, v, g = theta_new, v_new, g_new
            break
        theta, v, g = theta_new, v_new, g_new
    return OgaParam(theta0=v, gamma=g)


def check_constants():
    if lipschitz_oga(2, 1.0, 1.0, 1.0) != 3.0:
        return "lipschitz_oga(2,1,1,1) != 3"
    if abs(alpha_oga(1.0, 3.0, 9) - (1.0 / 3.0) * math.sqrt(5.0 / 9.0)) > 1e-15:
        return "alpha_oga(1,3,9) is off"
    if alpha_eta(1, 0.0, math.e, 2) != 1.0:
        return "alpha_eta(1,0,e,2) != 1"
    if alpha_prior(1.0, 10, 100) != 0.005:
        return "alpha_prior(1,10,100) != 1/200"
    return None


def check_generators():
    cfg = StreamCfg(d=4, n=6, T=12, r=2.0, sigma2=0.3, theta0=1.0, seed=7)
    a = gen_regression_stream(cfg)
    b = gen_regression_stream(cfg)
    for ta, tb in zip(a, b):
        if not all(np.array_equal(x.x, y.x) and x.y == y.y
                   for x, y in zip(ta.losses, tb.losses)):
            return "regression stream is not reproducible"
    for task in a:
        for l in task.losses:
            if abs(np.linalg.norm(l.x) - 1.0) > 1e-9:
                return "features are not on the unit sphere"
            if abs(l.y - l.x @ task.true_param) > cfg.sigma2 + 1e-12:
                return "noise left the +-sigma2 band"
        if abs(np.linalg.norm(task.true_param - cfg.center()) - cfg.r) > 1e-9:
            return "task parameter is not at distance r from the center"
    ecfg = ExpertStreamCfg(M=6, n=5, T=10, support=(1, 3), B=2.0, seed=7)
    for task in gen_expert_stream(ecfg):
        vals = task.tables
        best = int(np.argmin(vals.sum(axis=0)))
        if best not in ecfg.support:
            return "best expert fell outside the support"
        if vals.min() < 0 or vals.max() > ecfg.B:
            return "expert losses left [0, B]"
    return None


def check_serialization():
    import tempfile
    from pathlib import Path

    from .experiments import MethodSpec, Method, read_csv, run_stream, write_csv

    cfg = StreamCfg(d=2, n=4, T=5, r=1.0, theta0=1.0, seed=1)
    recs = run_stream([MethodSpec(Method.I_OGA)], cfg, seeds=[1, 2], mode="regression")
    with tempfile.TemporaryDirectory() as td:
        p1, p2 = Path(td) / "a.csv", Path(td) / "b.csv"
        write_csv(recs, p1)
        back = read_csv(p1)
        for x, y in zip(recs, back):
            if not (np.array_equal(x.per_task_mse, y.per_task_mse)
                    and np.array_equal(x.per_task_cumloss, y.per_task_cumloss)
                    and (x.method, x.r, x.seed) == (y.method, y.r, y.seed)):
                return "CSV round trip altered the records"
        write_csv(back, p2)
        if p1.read_bytes() != p2.read_bytes():
            return "CSV serialization is not byte-stable"
    return None


CHECKS = [
    ("loss gradients vs finite differences", check_loss_gradients),
    ("loss convexity", check_loss_convexity),
    ("gradient norm bound", check_gradient_bound),
    ("projection idempotence", check_projection_idempotent),
    ("projection feasibility/optimality", check_projection_properties),
    ("within-task trace contracts", check_oga_trace),
    ("gradient-descent regret ceiling", check_oga_regret),
    ("aggregation weights and regret ceiling", check_ewa),
    ("ridge solve and criterion consistency", check_ridge_and_metaloss),
    ("expert criteria gradients", check_eta_criterion),
    ("criterion convexity in the parameter", check_meta_convexity),
    ("meta-strategy step laws", check_strategy_steps),
    ("tuned constants", check_constants),
    ("generator contracts", check_generators),
    ("serialization round trip", check_serialization),
]


def run_all(verbose: bool = True) -> int:
    """Run every check; return the number of failures."""
    failures = 0
    for name, fn in CHECKS:
        try:
            detail = fn()
        except Exception as exc:  # a crash is a failure, not an abort
            detail = f"raised {type(exc).__name__}: {exc}"
        if detail is None:
            if verbose:
                print(f"ok   {name}")
        else:
            failures += 1
            if verbose:
                print(f"FAIL {name}: {detail}")
    return failures
