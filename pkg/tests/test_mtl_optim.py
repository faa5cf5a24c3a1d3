import numpy as np
import pytest
import torch

from tritask3d.mtl_optim import (
    GradSnapshot,
    TaskWeights,
    grad_norms,
    gradnorm_loss,
    gradnorm_step,
    mgda_minnorm,
    minnorm_objective,
    training_rates,
)


def _simplex_grid_search(task_grads, resolution=1000):
    """Exhaustive min over the 3-simplex at the given resolution."""
    gram = np.array(
        [[float(np.dot(a.ravel(), b.ravel())) for b in task_grads] for a in task_grads]
    )
    i, j = np.meshgrid(np.arange(resolution + 1), np.arange(resolution + 1), indexing="ij")
    keep = (i + j) <= resolution
    c1 = i[keep] / resolution
    c2 = j[keep] / resolution
    c3 = 1.0 - c1 - c2
    coeffs = np.stack([c1, c2, c3], axis=1)
    values = np.einsum("ni,ij,nj->n", coeffs, gram, coeffs)
    k = int(np.argmin(values))
    return coeffs[k], float(values[k])


class TestGradNorms:
    def test_constant_loss_gives_zero_norm(self):
        w = torch.ones(2, requires_grad=True)
        shared = [torch.randn(3, 3, requires_grad=True)]
        active = (shared[0] ** 2).sum()
        constant = torch.tensor(5.0, requires_grad=True) * 1.0
        norms = grad_norms([active, constant], w, shared)
        assert norms[1].item() == 0.0
        assert norms[0].item() > 0.0

    def test_doubling_weight_doubles_norm(self):
        shared = [torch.randn(4, requires_grad=True)]
        loss = (shared[0] ** 2).sum()
        w1 = torch.tensor([1.0, 1.0], requires_grad=True)
        w2 = torch.tensor([2.0, 1.0], requires_grad=True)
        n1 = grad_norms([loss, loss], w1, shared)
        n2 = grad_norms([loss, loss], w2, shared)
        assert n2[0].item() == pytest.approx(2 * n1[0].item(), rel=1e-6)

    def test_quadratic_toy_matches_analytic(self):
        torch.manual_seed(0)
        W = torch.randn(3, 4, requires_grad=True)
        x = torch.randn(4)
        y = torch.randn(3)
        loss = ((W @ x - y) ** 2).sum()
        w = torch.tensor([1.7], requires_grad=True)
        norms = grad_norms([loss], w, [W])
        # grad_W ||Wx - y||^2 = 2 (Wx - y) x^T, scaled by the task weight
        analytic = 1.7 * torch.linalg.norm(torch.outer(2 * (W @ x - y), x).detach())
        assert norms[0].item() == pytest.approx(analytic.item(), rel=1e-5)

    def test_norms_differentiable_wrt_weights(self):
        shared = [torch.randn(4, requires_grad=True)]
        loss = (shared[0] ** 2).sum()
        w = torch.tensor([1.5], requires_grad=True)
        norms = grad_norms([loss], w, shared)
        (dw,) = torch.autograd.grad(norms.sum(), w)
        # d/dw (w * ||g||) = ||g||
        assert dw.item() == pytest.approx(norms[0].item() / 1.5, rel=1e-5)


class TestTrainingRates:
    def test_uniform_progress(self):
        losses = torch.tensor([0.5, 0.25, 0.1])
        initial = torch.tensor([1.0, 0.5, 0.2])
        rtilde, r = training_rates(losses, initial)
        torch.testing.assert_close(rtilde, torch.tensor([0.5, 0.5, 0.5]))
        torch.testing.assert_close(r, torch.tensor([1.0, 1.0, 1.0]))

    def test_lagging_task_has_high_rate(self):
        rtilde, r = training_rates(torch.tensor([1.0, 0.5, 0.5]), torch.ones(3))
        torch.testing.assert_close(rtilde, torch.tensor([1.0, 0.5, 0.5]))
        torch.testing.assert_close(r, torch.tensor([1.5, 0.75, 0.75]))

    def test_mean_rate_is_one(self, rng):
        for _ in range(20):
            losses = torch.from_numpy(rng.uniform(0.01, 5.0, 3))
            initial = torch.from_numpy(rng.uniform(0.01, 5.0, 3))
            _, r = training_rates(losses, initial)
            assert r.mean().item() == pytest.approx(1.0, abs=1e-6)

    def test_zero_initial_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            training_rates(torch.ones(3), torch.tensor([1.0, 0.0, 1.0]))


class TestGradnormLoss:
    def test_zero_at_target(self):
        norms = torch.tensor([2.0, 1.0, 3.0])
        mean = norms.mean()
        rates = norms / mean  # targets == norms when alpha == 1
        assert gradnorm_loss(norms, mean, rates, alpha=1.0).item() == pytest.approx(0.0, abs=1e-7)

    def test_alpha_zero_targets_mean(self):
        norms = torch.tensor([2.0, 1.0, 3.0])
        mean = norms.mean()
        rates = torch.tensor([1.4, 0.9, 0.7])
        loss = gradnorm_loss(norms, mean, rates, alpha=0.0)
        expected = (norms - mean).abs().sum()
        assert loss.item() == pytest.approx(expected.item(), rel=1e-6)

    def test_random_snapshot_matches_hand_formula(self, rng):
        for _ in range(10):
            norms = torch.from_numpy(rng.uniform(0.1, 4.0, 3))
            rates = torch.from_numpy(rng.uniform(0.5, 2.0, 3))
            rates = rates / rates.mean()
            alpha = float(rng.uniform(0.0, 3.0))
            mean = norms.mean()
            expected = float(np.abs(norms.numpy() - mean.item() * rates.numpy() ** alpha).sum())
            assert gradnorm_loss(norms, mean, rates, alpha).item() == pytest.approx(expected, rel=1e-6)


def _toy_setup(scale_second=1.0):
    """Two quadratic tasks sharing one parameter vector."""
    shared = [torch.nn.Parameter(torch.tensor([1.0, 2.0, -1.0]))]
    x1 = torch.tensor([1.0, 0.0, 1.0])
    x2 = torch.tensor([0.0, 1.0, -1.0]) * scale_second
    loss1 = ((shared[0] * x1).sum() - 3.0) ** 2
    loss2 = ((shared[0] * x2).sum() + 1.0) ** 2
    return shared, [loss1, loss2]


class TestGradnormStep:
    def test_balanced_tasks_leave_weights_unchanged(self):
        shared, losses = _toy_setup()
        weights = TaskWeights(num_tasks=2, alpha=1.0)
        # identical losses and gradients: duplicate task 1
        losses = [losses[0], losses[0]]
        initial = float(losses[0].detach())
        weights.set_initial([initial, initial])
        gradnorm_step(weights, losses, shared, lr_w=0.1)
        torch.testing.assert_close(weights.w, torch.ones(2))

    def test_lagging_underpowered_task_gains_weight(self):
        shared, losses = _toy_setup()
        weights = TaskWeights(num_tasks=2, alpha=1.0)
        # task 0 lags (loss unchanged from init) and task 1 has progressed 4x;
        # construct initials so r_0 > 1 while G_0 < target.
        weights.set_initial([float(losses[0].detach()), 4.0 * float(losses[1].detach())])
        before = weights.values()
        snap = gradnorm_step(weights, losses, shared, lr_w=0.05)
        after = weights.values()
        assert isinstance(snap, GradSnapshot)
        assert snap.relative_rates[0] > 1.0
        assert snap.norms[0] < snap.mean_norm * snap.relative_rates[0]
        assert after[0] > before[0]
        assert after[1] < before[1]

    @pytest.mark.filterwarnings("ignore:task weight clamped")
    def test_weight_sum_preserved(self, rng):
        shared, losses = _toy_setup(scale_second=2.0)
        weights = TaskWeights(num_tasks=2, alpha=1.5)
        weights.set_initial([2.0, 1.0])
        for _ in range(5):
            shared, losses = _toy_setup(scale_second=2.0)
            gradnorm_step(weights, losses, shared, lr_w=0.1)
            assert sum(weights.values()) == pytest.approx(2.0, abs=1e-6)

    def test_requires_initial_losses(self):
        shared, losses = _toy_setup()
        weights = TaskWeights(num_tasks=2)
        with pytest.raises(RuntimeError, match="initial losses"):
            gradnorm_step(weights, losses, shared, lr_w=0.1)

    def test_clamp_warns_on_tiny_weight(self):
        weights = TaskWeights(num_tasks=2)
        with torch.no_grad():
            weights.w.copy_(torch.tensor([1.99999, 1e-5]))
        with pytest.warns(UserWarning, match="clamped"):
            weights.renormalize()
        assert all(v > 0 for v in weights.values())


class TestTaskWeights:
    def test_positive_invariant(self):
        with pytest.raises(ValueError):
            TaskWeights(w=torch.tensor([1.0, -0.5, 1.0]))

    def test_state_roundtrip(self):
        a = TaskWeights(alpha=2.0)
        a.set_initial([1.0, 2.0, 3.0])
        a.step = 7
        b = TaskWeights()
        b.load_state_dict(a.state_dict())
        assert b.step == 7 and b.alpha == 2.0
        torch.testing.assert_close(b.initial_losses, a.initial_losses)


class TestMGDA:
    def test_antipodal_pair(self):
        g = np.array([1.0, -2.0, 0.5])
        coeffs = mgda_minnorm([g, -g])
        np.testing.assert_allclose(coeffs, [0.5, 0.5], atol=1e-9)
        assert minnorm_objective(coeffs, [g, -g]) == pytest.approx(0.0, abs=1e-12)

    def test_identical_gradients(self):
        g = np.array([1.0, 2.0, 3.0])
        coeffs = mgda_minnorm([g, g, g])
        assert coeffs.sum() == pytest.approx(1.0)
        combined_norm = np.sqrt(minnorm_objective(coeffs, [g, g, g]))
        assert combined_norm == pytest.approx(np.linalg.norm(g), rel=1e-9)

    def test_simplex_constraints(self, rng):
        for _ in range(20):
            grads = [rng.standard_normal(10) for _ in range(3)]
            coeffs = mgda_minnorm(grads)
            assert coeffs.sum() == pytest.approx(1.0, abs=1e-9)
            assert (coeffs >= -1e-12).all()

    def test_within_tolerance_of_grid_search(self, rng):
        for _ in range(10):
            grads = [rng.standard_normal(10) for _ in range(3)]
            coeffs = mgda_minnorm(grads)
            _, grid_best = _simplex_grid_search(grads)
            fw = minnorm_objective(coeffs, grads)
            assert fw <= grid_best + 1e-3

    def test_objective_monotone_non_increasing(self, rng):
        for _ in range(5):
            grads = [rng.standard_normal(8) for _ in range(3)]
            trace: list[float] = []
            mgda_minnorm(grads, trace=trace)
            diffs = np.diff(trace)
            assert (diffs <= 1e-12).all()

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError, match="zero"):
            mgda_minnorm([np.zeros(4), np.zeros(4)])

    def test_single_task_rejected(self):
        with pytest.raises(ValueError, match="two tasks"):
            mgda_minnorm([np.ones(4)])
