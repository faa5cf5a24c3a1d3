"""Task losses and their weighted combination.

Segmentation uses soft Dice, grading uses focal loss, detection pairs a
smooth-L1 box regression term over positive anchors with a focal objectness
term (weighted 1:1). The total is the weighted sum w1*Lseg + w2*Lcls +
w3*Ldet with weights owned by the balancing module.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import torch
import torch.nn.functional as F


@dataclass
class LossBundle:
    seg: torch.Tensor
    cls: torch.Tensor
    det: torch.Tensor
    total: torch.Tensor

    def values(self) -> tuple[float, float, float, float]:
        return tuple(float(t.detach()) for t in (self.seg, self.cls, self.det, self.total))


def dice_loss(probs: torch.Tensor, target: torch.Tensor, smooth: float = 1e-5) -> torch.Tensor:
    """Mean over channels of 1 - (2*sum(p*g)+s) / (sum(p)+sum(g)+s).

    Accepts (C, ...) or (B, C, ...); batch entries are averaged.
    """
    if probs.shape != target.shape:
        raise ValueError(f"shape mismatch {tuple(probs.shape)} vs {tuple(target.shape)}")
    if probs.ndim == 4:
        probs, target = probs.unsqueeze(0), target.unsqueeze(0)
    dims = tuple(range(2, probs.ndim))
    inter = (probs * target).sum(dims)
    denom = probs.sum(dims) + target.sum(dims)
    dice = (2 * inter + smooth) / (denom + smooth)
    return (1 - dice).mean()


def focal_loss(
    logits: torch.Tensor,
    target: torch.Tensor,
    gamma: float = 2.0,
    alpha: float = 0.25,
) -> torch.Tensor:
    """Two-class focal loss; alpha weights the positive (HGG, index 1) class.

    -alpha_t * (1 - p_t)**gamma * log(p_t), averaged over the batch.
    """
    if logits.ndim == 1:
        logits = logits.unsqueeze(0)
    target = target.reshape(-1)
    log_p = F.log_softmax(logits, dim=-1)
    log_pt = log_p.gather(1, target.unsqueeze(1)).squeeze(1)
    pt = log_pt.exp()
    alpha_t = torch.where(target == 1, logits.new_tensor(alpha), logits.new_tensor(1 - alpha))
    return (-alpha_t * (1 - pt).pow(gamma) * log_pt).mean()


def binary_focal_loss(
    logits: torch.Tensor,
    targets: torch.Tensor,
    gamma: float = 2.0,
    alpha: float = 0.25,
    normalizer: float | None = None,
) -> torch.Tensor:
    """Per-anchor binary focal loss, summed then divided by the normalizer
    (number of positives by convention; defaults to the element count)."""
    p = torch.sigmoid(logits)
    pt = torch.where(targets > 0.5, p, 1 - p)
    alpha_t = torch.where(targets > 0.5, logits.new_tensor(alpha), logits.new_tensor(1 - alpha))
    ce = F.binary_cross_entropy_with_logits(logits, targets.to(logits.dtype), reduction="none")
    loss = (alpha_t * (1 - pt).pow(gamma) * ce).sum()
    if normalizer is None:
        normalizer = max(logits.numel(), 1)
    return loss / max(float(normalizer), 1.0)


def smooth_l1(pred: torch.Tensor, target: torch.Tensor, beta: float = 1.0) -> torch.Tensor:
    """Element-wise 0.5 x^2 / beta for |x| < beta else |x| - 0.5 beta, averaged."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {tuple(pred.shape)} vs {tuple(target.shape)}")
    if pred.numel() == 0:
        warnings.warn("smooth_l1 over an empty positive set; returning 0")
        return pred.new_zeros(())
    diff = (pred - target).abs()
    loss = torch.where(diff < beta, 0.5 * diff.pow(2) / beta, diff - 0.5 * beta)
    return loss.mean()


def detection_loss(
    obj_logits: torch.Tensor,
    deltas: torch.Tensor,
    anchor_labels: torch.Tensor,
    target_deltas: torch.Tensor,
    gamma: float = 2.0,
    alpha: float = 0.25,
    beta: float = 1.0,
) -> torch.Tensor:
    """Smooth-L1 over positive anchors plus focal objectness, weighted 1:1.

    anchor_labels: 1 positive, 0 negative, -1 ignored (excluded from the
    objectness term). target_deltas are the encoded ground-truth offsets
    aligned with the anchor ordering.
    """
    pos = anchor_labels == 1
    considered = anchor_labels >= 0
    n_pos = int(pos.sum())
    box_term = smooth_l1(deltas[pos], target_deltas[pos], beta=beta) if n_pos else deltas.new_zeros(())
    obj_term = binary_focal_loss(
        obj_logits[considered],
        (anchor_labels[considered] == 1).to(obj_logits.dtype),
        gamma=gamma,
        alpha=alpha,
        normalizer=max(n_pos, 1),
    )
    return box_term + obj_term


def total_loss(seg: torch.Tensor, cls: torch.Tensor, det: torch.Tensor, w: torch.Tensor) -> LossBundle:
    """Weighted sum of the three task losses under the current weights.

    Zero weights are allowed (they switch a task off); negative ones are not.
    """
    if (w < 0).any():
        raise ValueError(f"task weights must be non-negative, got {w.detach().tolist()}")
    total = w[0] * seg + w[1] * cls + w[2] * det
    return LossBundle(seg=seg, cls=cls, det=det, total=total)
