import numpy as np
import pytest

from metaoco.errors import ContractViolation
from metaoco.generators import (
    ExpertStreamCfg,
    StreamCfg,
    gen_classification_stream,
    gen_expert_stream,
    gen_regression_stream,
    regression_lipschitz,
)


def test_zero_dispersion_pins_tasks_to_center():
    cfg = StreamCfg(d=4, n=6, T=10, r=0.0, seed=1)
    for task in gen_regression_stream(cfg):
        assert np.array_equal(task.true_param, cfg.center())


def test_dispersion_radius_is_exact():
    cfg = StreamCfg(d=5, n=4, T=12, r=3.5, seed=2)
    center = cfg.center()
    for task in gen_regression_stream(cfg):
        assert np.linalg.norm(task.true_param - center) == pytest.approx(3.5, abs=1e-12)


def test_regression_rows_and_noise_bounds():
    cfg = StreamCfg(d=6, n=25, T=20, r=2.0, sigma2=0.3, seed=3)
    for task in gen_regression_stream(cfg):
        norms = np.linalg.norm(task.features, axis=1)
        assert np.allclose(norms, 1.0, atol=1e-12)
        eps = task.targets - task.features @ task.true_param
        assert np.abs(eps).max() <= cfg.sigma2
        cap = np.linalg.norm(task.true_param) + cfg.sigma2
        assert np.abs(task.targets).max() <= cap + 1e-12


def test_classification_labels_follow_logistic_limit():
    # with a huge parameter the logistic draw is effectively a sign read-out
    cfg = StreamCfg(d=4, n=50, T=50, r=0.0, theta0=100.0, flip_frac=0.0, seed=4)
    agree = total = 0
    for task in gen_classification_stream(cfg):
        signs = np.sign(task.features @ task.true_param)
        agree += int((task.targets == signs).sum())
        total += task.n
    assert agree / total >= 0.99
    for task in gen_classification_stream(cfg):
        assert set(np.unique(task.targets)) <= {-1.0, 1.0}


def test_flip_count_is_exact():
    base = StreamCfg(d=5, n=40, T=15, r=1.0, theta0=2.0, flip_frac=0.0, seed=5)
    flipped_cfg = StreamCfg(d=5, n=40, T=15, r=1.0, theta0=2.0, flip_frac=0.1, seed=5)
    clean = gen_classification_stream(base)
    flipped = gen_classification_stream(flipped_cfg)
    for a, b in zip(clean, flipped):
        assert np.array_equal(a.features, b.features)
        assert int((a.targets != b.targets).sum()) == 4


def test_streams_are_bit_identical_and_prefix_stable():
    cfg = StreamCfg(d=3, n=8, T=12, r=1.5, seed=6)
    one = gen_regression_stream(cfg)
    two = gen_regression_stream(cfg)
    for a, b in zip(one, two):
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.targets, b.targets)
    # task t only depends on (seed, t), so a shorter run is a prefix
    from dataclasses import replace

    short = gen_regression_stream(replace(cfg, T=5))
    for a, b in zip(short, one):
        assert np.array_equal(a.targets, b.targets)


def test_expert_stream_structure():
    cfg = ExpertStreamCfg(M=6, n=10, T=30, support=(1, 4), B=2.0, seed=7)
    for task in gen_expert_stream(cfg):
        tables = np.asarray(task.tables)
        assert tables.shape == (cfg.n, cfg.M)
        assert tables.min() >= 0.0 and tables.max() <= cfg.B
        best = int(tables.sum(axis=0).argmin())
        assert best in cfg.support
        others = np.delete(tables, best, axis=1)
        assert tables[:, best].max() <= cfg.B / 4.0
        assert others.min() >= cfg.B / 2.0


def test_expert_support_is_covered():
    cfg = ExpertStreamCfg(M=5, n=6, T=40, support=(0, 2), B=1.0, seed=8)
    bests = {int(np.asarray(t.tables).sum(axis=0).argmin()) for t in gen_expert_stream(cfg)}
    assert bests == {0, 2}


def test_regression_lipschitz_formula():
    cfg = StreamCfg(d=3, n=5, T=4, r=1.0, seed=9)
    tasks = gen_regression_stream(cfg)
    c = max(float(np.abs(t.targets).max()) for t in tasks)
    assert regression_lipschitz(tasks, C=2.0) == pytest.approx(2.0 * c + 4.0, rel=1e-12)
    assert regression_lipschitz(tasks, C=2.0, b=0.5) == pytest.approx(c + 1.0, rel=1e-12)


def test_cfg_validation():
    with pytest.raises(ContractViolation):
        StreamCfg(d=0)
    with pytest.raises(ContractViolation):
        StreamCfg(r=-1.0)
    with pytest.raises(ContractViolation):
        StreamCfg(flip_frac=1.0)
    with pytest.raises(ContractViolation):
        StreamCfg(d=3, theta0=(1.0, 2.0)).center()
    with pytest.raises(ContractViolation):
        ExpertStreamCfg(M=1)
    with pytest.raises(ContractViolation):
        ExpertStreamCfg(M=3, support=())
    with pytest.raises(ContractViolation):
        ExpertStreamCfg(M=3, support=(3,))
    with pytest.raises(ContractViolation):
        ExpertStreamCfg(B=0.0)


def test_task_ids_run_in_order():
    cfg = StreamCfg(d=2, n=3, T=7, seed=10)
    assert [t.task_id for t in gen_regression_stream(cfg)] == list(range(7))
