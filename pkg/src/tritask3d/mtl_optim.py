"""Multi-task loss-weight balancing.

Two schemes:

* Gradient-norm balancing: per-task gradient norms G_i = ||grad_W(w_i L_i)||
  over a designated shared parameter subset W are driven toward the targets
  Gbar * r_i**alpha, where r_i is the relative inverse training rate
  L_i(t)/L_i(0) normalized to mean 1. The balancing loss is the L1 gap
  sum_i |G_i - target_i|, differentiated with respect to the weights only
  (targets are constants), followed by a renormalization to sum(w) = T.

* Min-norm (MGDA) balancing: the convex combination of task gradients with
  the smallest norm, found by Frank-Wolfe iterations with the exact
  two-point line search; the resulting simplex coefficients are used as the
  task weights for the step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import torch

_MIN_WEIGHT = 1e-4


@dataclass
class TaskWeights:
    """Learnable loss weights plus balancing bookkeeping."""

    num_tasks: int = 3
    alpha: float = 1.5
    w: torch.Tensor = None  # type: ignore[assignment]
    initial_losses: torch.Tensor | None = None
    step: int = 0

    def __post_init__(self):
        if self.w is None:
            self.w = torch.ones(self.num_tasks, requires_grad=True)
        if (self.w <= 0).any():
            raise ValueError("task weights must be positive")

    @property
    def total(self) -> float:
        return float(self.num_tasks)

    def set_initial(self, losses: torch.Tensor | list[float]) -> None:
        init = torch.as_tensor(losses, dtype=torch.float32).detach().clone()
        if (init <= 0).any():
            raise ValueError(f"initial losses must be positive, got {init.tolist()}")
        self.initial_losses = init

    def renormalize(self) -> None:
        with torch.no_grad():
            if (self.w < _MIN_WEIGHT).any():
                warnings.warn("task weight clamped to minimum after update")
                self.w.clamp_(min=_MIN_WEIGHT)
            self.w.mul_(self.total / self.w.sum())

    def values(self) -> tuple[float, ...]:
        return tuple(float(v) for v in self.w.detach())

    def state_dict(self) -> dict:
        return {
            "w": self.w.detach().clone(),
            "initial_losses": None if self.initial_losses is None else self.initial_losses.clone(),
            "step": self.step,
            "alpha": self.alpha,
            "num_tasks": self.num_tasks,
        }

    def load_state_dict(self, state: dict) -> None:
        with torch.no_grad():
            self.w.copy_(state["w"])
        self.initial_losses = state["initial_losses"]
        self.step = state["step"]
        self.alpha = state["alpha"]
        self.num_tasks = state["num_tasks"]


@dataclass
class GradSnapshot:
    """Per-task gradient norms and training rates at one step."""

    norms: tuple[float, ...]
    mean_norm: float
    inverse_rates: tuple[float, ...]
    relative_rates: tuple[float, ...]
    balance_loss: float = 0.0


def grad_norms(
    losses: list[torch.Tensor], w: torch.Tensor, shared_params: list[torch.Tensor]
) -> torch.Tensor:
    """G_i = L2 norm of grad_W(w_i * L_i) over the shared parameter subset.

    Built with create_graph so the norms stay differentiable w.r.t. w.
    """
    norms = []
    for i, loss in enumerate(losses):
        grads = torch.autograd.grad(
            w[i] * loss, shared_params, retain_graph=True, create_graph=True, allow_unused=True
        )
        parts = [g.pow(2).sum() for g in grads if g is not None]
        norm = torch.stack(parts).sum().sqrt() if parts else w[i] * 0.0
        if not torch.isfinite(norm):
            raise FloatingPointError(f"non-finite gradient norm for task {i}")
        norms.append(norm)
    return torch.stack(norms)


def training_rates(
    losses: torch.Tensor, initial_losses: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Inverse training rates L_i(t)/L_i(0) and their mean-1 normalization."""
    if (initial_losses <= 0).any():
        raise ValueError("initial losses must be positive")
    rtilde = losses.detach() / initial_losses
    return rtilde, rtilde / rtilde.mean()


def gradnorm_loss(
    norms: torch.Tensor, mean_norm: torch.Tensor, relative_rates: torch.Tensor, alpha: float
) -> torch.Tensor:
    """L1 gap between actual and target gradient norms; targets are constants."""
    target = (mean_norm * relative_rates.pow(alpha)).detach()
    return (norms - target).abs().sum()


def gradnorm_step(
    weights: TaskWeights,
    losses: list[torch.Tensor],
    shared_params: list[torch.Tensor],
    lr_w: float = 0.025,
) -> GradSnapshot:
    """One balancing update: gradient step on the balance loss w.r.t. w, then
    renormalize to sum(w) = T. Returns the snapshot for logging."""
    if weights.initial_losses is None:
        raise RuntimeError("initial losses not captured; call set_initial first")

    norms = grad_norms(losses, weights.w, shared_params)
    detached = torch.stack([l.detach() for l in losses])
    rtilde, rates = training_rates(detached, weights.initial_losses)
    balance = gradnorm_loss(norms, norms.mean().detach(), rates, weights.alpha)

    (grad_w,) = torch.autograd.grad(balance, weights.w, retain_graph=True)
    with torch.no_grad():
        weights.w.sub_(lr_w * grad_w)
    weights.renormalize()
    weights.step += 1

    return GradSnapshot(
        norms=tuple(float(n) for n in norms.detach()),
        mean_norm=float(norms.detach().mean()),
        inverse_rates=tuple(float(v) for v in rtilde),
        relative_rates=tuple(float(v) for v in rates),
        balance_loss=float(balance.detach()),
    )


def mgda_minnorm(
    task_grads: list[np.ndarray] | list[torch.Tensor],
    tol: float = 1e-6,
    max_iter: int = 250,
    trace: list[float] | None = None,
) -> np.ndarray:
    """Convex coefficients approximately minimizing ||sum_i c_i g_i||^2.

    Pairwise Frank-Wolfe over the probability simplex, run on the Gram
    matrix only: each iteration moves weight from the worst active vertex
    toward the best one, with the exact two-point line search
    gamma* = clip(-(d . gbar) / ||d||^2, 0, c_away) along the pairwise
    direction d = g_v - g_a. The pairwise variant converges linearly where
    the plain toward-vertex step zigzags on face-constrained optima and
    cannot reach the tolerance within the iteration budget. Pass a list as
    ``trace`` to record the objective at every iterate.
    """
    vecs = [np.asarray(g.detach().cpu().numpy() if isinstance(g, torch.Tensor) else g, dtype=np.float64).ravel() for g in task_grads]
    n = len(vecs)
    if n < 2:
        raise ValueError("min-norm balancing needs at least two tasks")
    gram = np.array([[float(np.dot(a, b)) for b in vecs] for a in vecs])
    if np.allclose(np.diag(gram), 0.0):
        raise ValueError("all task gradients are zero")

    c = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        mc = gram @ c
        if trace is not None:
            trace.append(float(c @ mc))
        v = int(np.argmin(mc))
        active = np.flatnonzero(c > 0)
        a = int(active[np.argmax(mc[active])])
        # gamma* = (mc_a - mc_v) / ||g_v - g_a||^2, capped by the mass at a
        numer = float(mc[a] - mc[v])
        denom = float(gram[v, v] - 2 * gram[v, a] + gram[a, a])
        if numer <= 0 or denom <= 0:
            break
        gamma = min(numer / denom, float(c[a]))
        if gamma < tol:
            break
        c = c.copy()
        c[v] += gamma
        c[a] -= gamma
    if trace is not None:
        trace.append(float(c @ gram @ c))
    return c


def minnorm_objective(coeffs: np.ndarray, task_grads: list[np.ndarray]) -> float:
    combined = sum(float(w) * np.asarray(g, dtype=np.float64).ravel() for w, g in zip(coeffs, task_grads))
    return float(np.dot(combined, combined))
