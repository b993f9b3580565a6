"""End-to-end acceptance checks, one test per claim the package makes.

Run with ``pytest -v tests/test_acceptance.py`` to get one pass/fail line
per claim.  The two full-size stream reproductions (criteria 1 and 2)
dominate the runtime; together the file takes several minutes.
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from metaoco.cli import main
from metaoco.experiments import (
    Method,
    MethodSpec,
    read_csv,
    run_stream,
    write_csv,
)
from metaoco.generators import ExpertStreamCfg, StreamCfg, gen_expert_stream
from metaoco.losses import Bounds, EwaRate, ExpertLoss, OgaParam, SquaredLoss, Task
from metaoco.meta_loss import (
    meta_loss_ewa_eta,
    meta_loss_oga,
    meta_loss_oga_general,
    meta_loss_oga_quadratic,
)
from metaoco.meta_strategy import (
    MetaState,
    alpha_eta,
    alpha_oga,
    alpha_prior,
    initial_eta_param,
    initial_oga_param,
    lipschitz_eta,
    lipschitz_oga,
    ogms_eta_step,
    ogms_step,
    opms_step,
)
from metaoco.projections import project_ball, project_oga_vec, project_simplex_floor
from metaoco.within_task import run_ewa, run_oga

RADII = (0.0, 5.0, 10.0, 30.0)
OGA_ARMS = [MethodSpec(Method.I_OGA), MethodSpec(Method.MEAN_OPMS), MethodSpec(Method.OPMS)]


def seed_means(records, window):
    """Across-seed mean of the last-`window` per-task average losses."""
    out = {}
    for rec in records:
        out.setdefault(rec.method, []).append(rec.per_task_mse[-window:].mean())
    return {m: float(np.mean(v)) for m, v in out.items()}


def test_criterion_1_regression_table():
    cfg = StreamCfg(d=20, n=30, T=200)
    seeds = list(range(10))
    table = {}
    for r in RADII:
        recs = run_stream(OGA_ARMS, replace(cfg, r=r), seeds, "regression")
        table[r] = seed_means(recs, window=100)
    for r in RADII:
        assert table[r]["mean-OPMS"] < table[r]["I-OGA"], f"r={r}"
        assert table[r]["OPMS"] < table[r]["I-OGA"], f"r={r}"
    for r in (10.0, 30.0):
        assert table[r]["OPMS"] < table[r]["mean-OPMS"], f"r={r}"
    for r in (0.0, 5.0, 10.0):
        assert 4.0 <= table[r]["I-OGA"] <= 9.0, f"r={r}"
    assert 9.0 <= table[30.0]["I-OGA"] <= 20.0
    assert table[0.0]["mean-OPMS"] < 0.3


def test_criterion_2_classification_ordering():
    cfg = StreamCfg(d=10, n=100, T=500, r=2.0, flip_frac=0.1)
    recs = run_stream(OGA_ARMS, cfg, list(range(5)), "classification")
    final = seed_means(recs, window=cfg.T)  # R(T) = overall mean
    assert final["OPMS"] <= final["mean-OPMS"] <= final["I-OGA"]
    assert final["OPMS"] <= 0.8 * final["I-OGA"]


def lattice_comparators(rng, d, C):
    """Comparator points with 1e-2 coordinates inside the C-ball: the full
    lattice for d <= 2, a large random sample of lattice points above."""
    if d == 1:
        pts = np.round(np.arange(-C, C + 5e-3, 0.01), 2).reshape(-1, 1)
    elif d == 2:
        ax = np.round(np.arange(-C, C + 5e-3, 0.01), 2)
        g1, g2 = np.meshgrid(ax, ax)
        pts = np.column_stack([g1.ravel(), g2.ravel()])
    else:
        pts = np.round(rng.uniform(-C, C, size=(400, d)), 2)
    return pts[np.linalg.norm(pts, axis=1) <= C]


def test_criterion_3_within_task_regret_certificates():
    rng = np.random.default_rng(300)
    for _ in range(200):
        d = int(rng.integers(1, 6))
        n = int(rng.integers(2, 21))
        X = rng.normal(size=(n, d))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        y = rng.uniform(-2.0, 2.0, size=n)
        task = Task(losses=tuple(SquaredLoss(x=X[i], y=float(y[i])) for i in range(n)))
        C = 1.0
        Gamma = 2.0 * float(np.abs(y).max()) + 2.0 * C
        bounds = Bounds(C=C, Gamma=Gamma, gamma_lo=1e-3, gamma_hi=10.0)
        gamma = float(rng.uniform(0.02, 0.5))
        theta0 = project_ball(rng.normal(size=d), C)
        trace = run_oga(task, OgaParam(theta0=theta0, gamma=gamma), bounds)
        comps = lattice_comparators(rng, d, C)
        ref = ((comps @ X.T - y) ** 2).sum(axis=1)
        bound = ref + gamma * Gamma**2 * n / 2.0 \
            + ((comps - theta0) ** 2).sum(axis=1) / (2.0 * gamma)
        assert (trace.cumulative_loss <= bound + 1e-8).all()

    for _ in range(200):
        m = int(rng.integers(2, 9))
        n = int(rng.integers(1, 21))
        B = float(rng.uniform(0.5, 3.0))
        tables = rng.uniform(0, B, size=(n, m))
        task = Task(losses=tuple(ExpertLoss(values=tables[i]) for i in range(n)))
        eta = float(rng.uniform(1.0 / n, 1.0))
        trace = run_ewa(task, eta, np.full(m, 1.0 / m))
        bound = tables.sum(axis=0).min() + eta * n * B**2 / 8.0 + math.log(m) / eta
        assert trace.cumulative_loss <= bound + 1e-9


def quad_criterion_1d(tasks, Gamma):
    sums = [(float(t.features[:, 0] @ t.features[:, 0]),
             float(t.features[:, 0] @ t.targets),
             float(t.targets @ t.targets), t.n) for t in tasks]

    def value(theta0, gamma):
        total = 0.0
        for a, b, c, n in sums:
            th = (b + theta0 / (2.0 * gamma)) / (a + 1.0 / (2.0 * gamma))
            total = total + (c - 2.0 * b * th + a * th * th) \
                + gamma * Gamma**2 * n / 2.0 + (th - theta0) ** 2 / (2.0 * gamma)
        return total

    return value


def run_eta_stream(tasks, m, n, alpha, proximal):
    state = MetaState(lam=initial_eta_param(), alpha=alpha)
    total = 0.0
    bounds = Bounds(C=1.0, Gamma=1.0, gamma_lo=0.5, gamma_hi=1.0)
    for task in tasks:
        total += meta_loss_ewa_eta(task, state.lam.eta, m).value
        state = (opms_step(state, task, bounds) if proximal
                 else ogms_eta_step(state, task, m))
    return total


def run_oga_param_stream(tasks, bounds, alpha, proximal):
    state = MetaState(lam=initial_oga_param(1, bounds), alpha=alpha)
    total = 0.0
    for task in tasks:
        total += meta_loss_oga(task, state.lam, bounds).value
        if proximal:
            state = opms_step(state, task, bounds)
        else:
            grad = meta_loss_oga(task, state.lam, bounds).gradient
            state = ogms_step(state, grad, lambda v: project_oga_vec(v, bounds))
    return state, total


def test_criterion_4_meta_regret_certificates():
    T = 50
    for seed in range(20):
        rng = np.random.default_rng(400 + seed)

        # scalar learning-rate parameter
        m, n, B = 4, 6, 1.0
        tasks = [Task(losses=tuple(ExpertLoss(values=row)
                                   for row in rng.uniform(0, B, size=(n, m))))
                 for _ in range(T)]
        L = lipschitz_eta(n, B, m)
        alpha = alpha_eta(n, B, m, T)
        grid = np.linspace(1.0 / n, 1.0, 2001)
        grid_sum = np.zeros_like(grid)
        for task in tasks:
            totals = np.asarray(task.tables).sum(axis=0)
            b = float(np.abs(task.tables).max())
            grid_sum += totals.min() + grid * n * b * b / 8.0 + math.log(m) / grid
        rhs = float((grid_sum + alpha * T * L * L / 2.0
                     + (grid - 1.0) ** 2 / (2.0 * alpha)).min()) + 1e-6
        for proximal in (False, True):
            assert run_eta_stream(tasks, m, n, alpha, proximal) <= rhs

        # two-dimensional (start, step) parameter on scalar quadratic tasks
        n, C, Gamma, g_lo, g_hi = 5, 2.0, 5.0, 0.5, 2.0
        bounds = Bounds(C=C, Gamma=Gamma, gamma_lo=g_lo, gamma_hi=g_hi)
        tasks = []
        for _ in range(T):
            x = np.where(rng.random(n) < 0.5, -1.0, 1.0).reshape(n, 1)
            y = rng.uniform(-0.5, 0.5, size=n)
            tasks.append(Task(losses=tuple(
                SquaredLoss(x=x[i], y=float(y[i])) for i in range(n))))
        L = lipschitz_oga(n, Gamma, C, g_lo)
        alpha = alpha_oga(C, L, T)
        crit = quad_criterion_1d(tasks, Gamma)
        th_grid, g_grid = np.meshgrid(np.linspace(-C, C, 161),
                                      np.linspace(g_lo, g_hi, 121))
        lam1 = initial_oga_param(1, bounds)
        dist2 = (th_grid - lam1.theta0[0]) ** 2 + (g_grid - lam1.gamma) ** 2
        rhs = float((crit(th_grid, g_grid) + alpha * T * L * L / 2.0
                     + dist2 / (2.0 * alpha)).min()) + 1e-6
        for proximal in (False, True):
            _, total = run_oga_param_stream(tasks, bounds, alpha, proximal)
            assert total <= rhs


def grid_project_floor(v, floor, step):
    v = np.asarray(v, dtype=float)
    if v.shape[0] == 2:
        x1 = np.arange(floor, 1.0 - floor + step / 2, step)
        pts = np.column_stack([x1, 1.0 - x1])
    else:
        x1 = np.arange(floor, 1.0 - 2 * floor + step / 2, step)
        g1, g2 = np.meshgrid(x1, x1, indexing="ij")
        g3 = 1.0 - g1 - g2
        keep = g3 >= floor - 1e-12
        pts = np.column_stack([g1[keep], g2[keep], g3[keep]])
    return pts[int(np.argmin(((pts - v) ** 2).sum(axis=1)))]


def test_criterion_5_oracle_equivalences():
    rng = np.random.default_rng(500)
    bounds = Bounds(C=50.0, Gamma=2.0, gamma_lo=0.01, gamma_hi=10.0)

    # closed form vs iterative solve, constraint inactive
    for _ in range(100):
        d, n = int(rng.integers(1, 5)), int(rng.integers(2, 13))
        X = rng.normal(size=(n, d))
        y = rng.normal(size=n)
        task = Task(losses=tuple(SquaredLoss(x=X[i], y=float(y[i])) for i in range(n)))
        lam = OgaParam(theta0=rng.normal(size=d), gamma=float(rng.uniform(0.05, 2.0)))
        quad = meta_loss_oga_quadratic(task, lam, bounds)
        general = meta_loss_oga_general(task, lam, bounds)
        assert abs(quad.value - general.value) <= 1e-6

    # envelope gradient and learning-rate derivative vs central differences
    for _ in range(100):
        d, n = int(rng.integers(1, 4)), int(rng.integers(2, 9))
        X = rng.normal(size=(n, d))
        y = rng.normal(size=n)
        task = Task(losses=tuple(SquaredLoss(x=X[i], y=float(y[i])) for i in range(n)))
        lam = OgaParam(theta0=rng.normal(size=d), gamma=float(rng.uniform(0.1, 2.0)))
        grad = meta_loss_oga_quadratic(task, lam, bounds).gradient
        h = 1e-6
        fd = np.empty(d + 1)
        vec = np.concatenate([lam.theta0, [lam.gamma]])
        for j in range(d + 1):
            hi, lo = vec.copy(), vec.copy()
            hi[j] += h
            lo[j] -= h
            f_hi = meta_loss_oga_quadratic(task, OgaParam(theta0=hi[:d], gamma=hi[d]), bounds).value
            f_lo = meta_loss_oga_quadratic(task, OgaParam(theta0=lo[:d], gamma=lo[d]), bounds).value
            fd[j] = (f_hi - f_lo) / (2.0 * h)
        assert np.linalg.norm(grad - fd) <= 1e-5 * (1.0 + np.linalg.norm(fd))

    for _ in range(100):
        m, n = int(rng.integers(2, 7)), int(rng.integers(1, 9))
        task = Task(losses=tuple(ExpertLoss(values=row)
                                 for row in rng.uniform(0, 2, size=(n, m))))
        eta = float(rng.uniform(0.2, 0.9))
        grad = float(np.ravel(meta_loss_ewa_eta(task, eta, m).gradient)[0])
        h = 1e-6
        fd = (meta_loss_ewa_eta(task, eta + h, m).value
              - meta_loss_ewa_eta(task, eta - h, m).value) / (2.0 * h)
        assert abs(grad - fd) <= 1e-5 * (1.0 + abs(fd))

    # floored-simplex projection vs brute force
    for i in range(20):
        m = 2 if i % 2 == 0 else 3
        v = rng.uniform(-1.5, 1.5, size=m)
        floor = 1.0 / (2.0 * m)
        got = project_simplex_floor(v, floor)
        ref = grid_project_floor(v, floor, step=1e-4 if m == 2 else 1e-3)
        assert np.linalg.norm(got - ref) <= 1e-3


def test_criterion_6_prior_learning_bound():
    m_star = 2
    for seed in range(10):
        cfg = ExpertStreamCfg(M=50, n=20, T=400, support=(0, 1), B=1.0,
                              cexp=1.0, seed=seed)
        tasks = gen_expert_stream(cfg)
        rec, = run_stream([MethodSpec(Method.OPMS_PRIOR, alpha_rule="theory")],
                          cfg, [seed], "ewa-prior")
        realized = float(rec.per_task_metaloss.sum())
        best_total = sum(float(np.asarray(t.tables).sum(axis=0).min()) for t in tasks)
        rhs = cfg.T * math.log(2 * m_star) + 2 * cfg.M * math.sqrt(cfg.T) + best_total
        assert realized <= rhs + 1e-6
        uniform_isolation = best_total + cfg.T * math.log(cfg.M)
        assert realized < uniform_isolation


def test_criterion_7_constant_formulas():
    assert lipschitz_oga(2, 1.0, 1.0, 1.0) == pytest.approx(3.0, abs=1e-12)
    val = lipschitz_oga(30, 1.0, 1.0, 1.0 / 30.0)
    assert val == pytest.approx(math.sqrt(225.0 + 3600.0 + 3_240_000.0), rel=1e-12)
    assert val == pytest.approx(1801.06, abs=0.01)
    assert alpha_oga(1.0, 3.0, 9) == pytest.approx(math.sqrt(5.0) / 9.0, rel=1e-12)
    assert alpha_oga(2.0, 1.0, 1) == pytest.approx(2.0 * math.sqrt(8.0), rel=1e-12)
    assert lipschitz_eta(1, 0.0, math.e) == pytest.approx(1.0, rel=1e-12)
    assert alpha_eta(1, 0.0, math.e, 2) == pytest.approx(1.0, rel=1e-12)
    assert lipschitz_eta(10, 2.0, 100) == pytest.approx(100.0 * math.log(100.0) + 5.0,
                                                        rel=1e-12)
    assert alpha_eta(10, 2.0, 100, 50) == pytest.approx(4.296e-4, rel=1e-3)
    assert alpha_prior(1.0, 1, 1) == pytest.approx(0.5, abs=1e-15)
    assert alpha_prior(1.0, 10, 100) == pytest.approx(0.005, abs=1e-15)


def test_criterion_8_determinism_and_schema(tmp_path):
    args = ["regression", "--d", "3", "--n", "6", "--T", "10", "--r", "0.0,2.0",
            "--runs", "2", "--gamma", "learned", "--gamma-grid", "0.5,1.0",
            "--no-plot"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()

    lines = a.read_text(encoding="ascii").splitlines()
    assert lines[0] == "method,r,seed,task,mse,cumloss"
    assert len(lines) == 1 + 2 * 3 * 2 * 10  # radii x methods x runs x T

    back = read_csv(a)
    again = tmp_path / "round.csv"
    write_csv(back, again)
    assert again.read_bytes() == a.read_bytes()
