"""
Unit tests for AdamW, gradient clipping, plateau scheduling and early stopping.
"""
import numpy as np
import pytest

from autodiff.nn import Parameter
from autodiff.optim import (
    AdamW,
    EarlyStopping,
    PlateauScheduler,
    adamw_step,
    clip_grad_norm,
    global_grad_norm,
    scheduler_step,
)
from shared.errors import MissingGradient


def param(values, grad=None, name="w"):
    p = Parameter(np.asarray(values, dtype=np.float64), name=name)
    if grad is not None:
        p.grad = np.asarray(grad, dtype=np.float64)
    return p


class TestAdamW:
    """Tests for adamw_step and AdamW"""

    def test_zero_gradient_no_decay_is_noop(self):
        p = param([1.0, -2.0], grad=[0.0, 0.0])
        adamw_step([p], lr=0.1, weight_decay=0.0)
        assert p.data.tolist() == [1.0, -2.0]
        assert p.step == 1

    def test_decoupled_decay(self):
        p = param([1.0], grad=[0.0])
        for _ in range(3):
            adamw_step([p], lr=1.0, weight_decay=0.1)
        assert p.data[0] == pytest.approx(0.9 ** 3)

    def test_quadratic_decreases_every_step(self):
        """f(w) = (w - 2)^2 from w = 0"""
        p = param([0.0])
        opt = AdamW([p], lr=0.1, weight_decay=0.0)
        losses = []
        for _ in range(20):
            losses.append(float((p.data[0] - 2.0) ** 2))
            p.grad = 2.0 * (p.data - 2.0)
            opt.step()
        losses.append(float((p.data[0] - 2.0) ** 2))
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_first_step_moves_by_lr(self):
        """Bias correction makes the first step exactly lr * sign(g)"""
        p = param([0.0, 0.0], grad=[5.0, -0.001])
        adamw_step([p], lr=0.01)
        assert np.allclose(p.data, [-0.01, 0.01], atol=1e-6)

    def test_missing_gradient_names_parameter(self):
        with pytest.raises(MissingGradient) as exc:
            adamw_step([("layer.weight", param([1.0]))], lr=0.1)
        assert "layer.weight" in str(exc.value)

    def test_zero_grad(self):
        p = param([1.0], grad=[1.0])
        opt = AdamW([p])
        opt.zero_grad()
        assert p.grad is None


class TestClipGradNorm:
    """Tests for clip_grad_norm"""

    def test_scales_down(self):
        p = param([0.0, 0.0], grad=[6.0, 8.0])
        assert clip_grad_norm([p], 1.0) == pytest.approx(0.1)
        assert np.allclose(p.grad, [0.6, 0.8])

    def test_small_norm_untouched(self):
        p = param([0.0], grad=[0.5])
        assert clip_grad_norm([p], 1.0) == 1.0
        assert p.grad.tolist() == [0.5]

    def test_post_clip_norm_bounded(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            params = [param(np.zeros(s), grad=rng.normal(0, 10, size=s)) for s in (3, (2, 4), 5)]
            clip_grad_norm(params, 1.0)
            assert global_grad_norm(params) <= 1.0 + 1e-9

    def test_skips_missing_gradients(self):
        params = [param([0.0], grad=[3.0]), param([0.0]), param([0.0], grad=[4.0])]
        assert clip_grad_norm(params, 1.0) == pytest.approx(0.2)
        assert params[1].grad is None


class TestPlateauScheduler:
    """Tests for PlateauScheduler"""

    def test_flat_run_reduces_once_at_patience(self):
        sched = PlateauScheduler(1e-3, factor=0.7, patience=30)
        for _ in range(29):
            scheduler_step(sched, 1.0)
        assert sched.lr == 1e-3
        assert scheduler_step(sched, 1.0) == pytest.approx(7e-4)
        assert sched.num_reductions == 1

    def test_sixty_one_flat_epochs_reduce_twice(self):
        sched = PlateauScheduler(1.0, factor=0.7, patience=30)
        for _ in range(61):
            sched.step(0.5)
        assert sched.num_reductions == 2
        assert sched.lr == pytest.approx(0.49)

    def test_improving_metric_keeps_lr(self):
        sched = PlateauScheduler(1.0, patience=3)
        for epoch in range(50):
            sched.step(1.0 - 0.01 * epoch)
        assert sched.lr == 1.0

    def test_improvement_below_threshold_counts_as_flat(self):
        sched = PlateauScheduler(1.0, patience=3, threshold=1e-6)
        for metric in (1.0, 1.0 - 1e-7, 1.0 - 2e-7):
            sched.step(metric)
        assert sched.num_reductions == 1

    def test_patience_one_ignores_improving_epochs(self):
        sched = PlateauScheduler(1.0, factor=0.5, patience=1)
        for metric in (3.0, 2.0, 1.0):
            assert sched.step(metric) == 1.0
        assert sched.step(1.0) == pytest.approx(0.5)
        assert sched.num_reductions == 1

    def test_reduction_at_min_lr_is_not_counted(self):
        sched = PlateauScheduler(1.0, factor=0.5, patience=2, min_lr=0.5)
        for _ in range(10):
            sched.step(1.0)
        assert sched.lr == 0.5
        assert sched.num_reductions == 1

    def test_lr_never_increases_and_stays_positive(self):
        sched = PlateauScheduler(1e-2, patience=2)
        previous = sched.lr
        for metric in np.random.default_rng(1).uniform(size=200):
            lr = sched.step(float(metric))
            assert 0 < lr <= previous
            previous = lr

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            PlateauScheduler(0.0)
        with pytest.raises(ValueError):
            PlateauScheduler(1.0, factor=1.0)
        with pytest.raises(ValueError):
            PlateauScheduler(1.0).step(float("nan"))


class TestEarlyStopping:
    """Tests for EarlyStopping"""

    def test_stops_after_patience(self):
        stopper = EarlyStopping(patience=3)
        assert not stopper.update(1.0, 0)
        assert not stopper.update(2.0, 1)
        assert not stopper.update(2.0, 2)
        assert stopper.update(2.0, 3)
        assert stopper.improved_at == 0

    def test_improvement_resets(self):
        stopper = EarlyStopping(patience=2)
        stopper.update(1.0, 0)
        stopper.update(1.5, 1)
        assert not stopper.update(0.5, 2)
        assert not stopper.update(0.6, 3)
        assert stopper.improved_at == 2
