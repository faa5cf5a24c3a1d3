"""Training orchestration: balancing, per-group learning rates, checkpoints.

Every step runs all active heads on the same sample, combines the task
losses under the current weights, applies the configured balancing scheme
(gradient-norm update, min-norm coefficients, or fixed weights), and steps
AdamW with cosine-annealed per-group learning rates. The best checkpoint is
selected by the unweighted mean of (average Dice, accuracy, mAP sweep) on
the validation cases.
"""

from __future__ import annotations

import json
import random
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ..dataio import augment, center_crop, list_cases, load_case, normalize
from ..datamodel import Grade, VolumeSample
from ..decoders.detection import encode_boxes, match_anchors
from ..losses import LossBundle, detection_loss, dice_loss, focal_loss, total_loss
from ..metrics import weight_manifest
from ..mtl_optim import TaskWeights, gradnorm_step, mgda_minnorm
from .config import RunConfig
from .evaluate import evaluate_cases
from .model import MultiTaskModel, build_model, shared_parameter_subset
from .splits import five_fold_split

LOG_COLUMNS = ("step", "epoch", "loss_seg", "loss_cls", "loss_det", "w1", "w2", "w3", "loss_grad", "lr")


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def _normalized(sample: VolumeSample) -> VolumeSample:
    return VolumeSample(
        sample.case_id, normalize(sample.image), sample.mask, sample.grade, sample.box
    )


def prepare_sample(sample: VolumeSample, cfg: RunConfig) -> VolumeSample:
    if cfg.data.normalize and cfg.data.normalize_before_crop:
        sample = _normalized(sample)
    crop = tuple(cfg.data.crop_size)
    if crop != sample.extent:
        sample = center_crop(sample, crop)
    if cfg.data.normalize and not cfg.data.normalize_before_crop:
        sample = _normalized(sample)
    return sample


def load_dataset(cfg: RunConfig) -> list[VolumeSample]:
    cases = list_cases(cfg.data.root)
    if not cases:
        raise FileNotFoundError(f"no cases found under {cfg.data.root}")
    return [load_case(case_dir, case_id) for case_dir, case_id in cases]


def split_dataset(samples: list[VolumeSample], cfg: RunConfig) -> tuple[list, list]:
    grades = [(s.case_id, s.grade) for s in samples]
    try:
        splits = five_fold_split(grades, seed=cfg.seed)
    except ValueError:
        # too few cases per grade for folds (desk-scale overfit runs)
        return samples, samples
    train_ids, val_ids = splits[cfg.fold]
    by_id = {s.case_id: s for s in samples}
    return [by_id[c] for c in train_ids], [by_id[c] for c in val_ids]


@dataclass
class StepLosses:
    seg: torch.Tensor
    cls: torch.Tensor
    det: torch.Tensor

    def as_list(self) -> list[torch.Tensor]:
        return [self.seg, self.cls, self.det]


def compute_losses(
    model: MultiTaskModel, sample: VolumeSample, device: str, cls_alpha: float = 0.25
) -> StepLosses:
    image = torch.from_numpy(np.ascontiguousarray(sample.image)).unsqueeze(0).to(device)
    out = model(image)
    zero = image.new_zeros(())

    seg = zero
    if out.seg_logits is not None and model.cfg.variant != "cls_only":
        mask = torch.from_numpy(sample.mask.astype(np.float32)).unsqueeze(0).to(device)
        seg = dice_loss(torch.sigmoid(out.seg_logits), mask)

    cls = zero
    if out.grade_logits is not None:
        target = torch.tensor([1 if sample.grade is Grade.HGG else 0], device=device)
        cls = focal_loss(out.grade_logits, target, alpha=cls_alpha)

    det = zero
    if out.obj_logits is not None:
        if sample.box is None:
            warnings.warn(f"{sample.case_id}: empty WT, skipping detection loss")
        else:
            labels = match_anchors(out.anchors, sample.box, model.cfg.det)
            targets = encode_boxes(sample.box, out.anchors)
            det = detection_loss(
                out.obj_logits[0],
                out.box_deltas[0],
                torch.from_numpy(labels).to(device),
                torch.from_numpy(targets.astype(np.float32)).to(device),
                gamma=model.cfg.det.focal_gamma,
                alpha=model.cfg.det.focal_alpha,
            )
    return StepLosses(seg, cls, det)


def build_optimizer(model: MultiTaskModel, cfg: RunConfig) -> torch.optim.AdamW:
    groups = [{"params": list(model.encoder.parameters()), "lr": cfg.optim.lr_encoder}]
    if model.seg_decoder is not None:
        groups.append({"params": list(model.seg_decoder.parameters()), "lr": cfg.optim.lr_seg})
    if model.det_head is not None:
        groups.append({"params": list(model.det_head.parameters()), "lr": cfg.optim.lr_det})
    if model.classifier is not None:
        groups.append({"params": list(model.classifier.parameters()), "lr": cfg.optim.lr_cls})
    return torch.optim.AdamW(groups, weight_decay=cfg.optim.weight_decay)


def save_checkpoint(
    path: Path,
    model: MultiTaskModel,
    weights: TaskWeights,
    optimizer,
    scheduler,
    cfg: RunConfig,
    step: int,
    epoch: int,
) -> None:
    torch.save(
        {
            "model": model.state_dict(),
            "weights": weights.state_dict(),
            "optimizer": optimizer.state_dict(),
            "scheduler": scheduler.state_dict(),
            "step": step,
            "epoch": epoch,
            "config": cfg.to_dict(),
            "config_hash": cfg.config_hash(),
            "manifest": weight_manifest(model),
            "torch_rng": torch.get_rng_state(),
        },
        path,
    )


def train(cfg: RunConfig, stop_check=None) -> Path:
    """Run training per the config; returns the best checkpoint path.

    ``stop_check(model, train_samples, step)`` may return True to stop early
    (used by smoke tests that only need target metrics reached).
    """
    seed_everything(cfg.seed)
    device = cfg.device
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.save(out_dir / "config.yaml")

    raw = load_dataset(cfg)
    raw = [prepare_sample(s, cfg) for s in raw]
    train_samples, val_samples = split_dataset(raw, cfg)
    train_samples = [s for s in train_samples if s.usable]
    if not train_samples:
        raise RuntimeError("no usable training samples (crop removed every tumor)")

    model = build_model(cfg.model).to(device)
    model.train()
    optimizer = build_optimizer(model, cfg)
    steps_per_epoch = max(len(train_samples) // cfg.optim.batch_size, 1)
    total_steps = cfg.optim.epochs * steps_per_epoch
    if cfg.optim.max_steps is not None:
        total_steps = min(total_steps, cfg.optim.max_steps)
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
        optimizer, T_max=total_steps, eta_min=cfg.optim.min_lr
    )

    cls_alpha = cfg.optim.cls_focal_alpha
    if cfg.optim.cls_focal_alpha_from_freq:
        hgg_share = sum(s.grade is Grade.HGG for s in train_samples) / len(train_samples)
        cls_alpha = 1.0 - hgg_share  # rarer positives get more weight

    multi = cfg.model.variant == "multi"
    weights = TaskWeights(num_tasks=3, alpha=cfg.balance.alpha)
    if cfg.balance.method == "fixed" or not multi:
        with torch.no_grad():
            weights.w.copy_(torch.tensor(cfg.balance.fixed_weights, dtype=torch.float32))
    balancing = cfg.balance.method if multi else "fixed"
    shared = shared_parameter_subset(model, cfg.balance.shared_subset) if multi else []
    warmup_losses: list[torch.Tensor] = []

    log_path = out_dir / "training_log.csv"
    log_file = log_path.open("w")
    log_file.write(",".join(LOG_COLUMNS) + "\n")

    order_rng = np.random.default_rng([cfg.seed, 0xD41A])
    best_score = -np.inf
    best_path = out_dir / "best.pt"
    step = 0
    epoch = 0
    stop = False

    eval_every = cfg.eval_every or steps_per_epoch

    while step < total_steps and not stop:
        indices = order_rng.permutation(len(train_samples))
        for idx in indices:
            if step >= total_steps:
                break
            sample = train_samples[int(idx)]
            if cfg.data.augment_enabled:
                sample = augment(sample, cfg.data.augment, np.random.default_rng([cfg.seed, step]))
                if not sample.usable:
                    sample = train_samples[int(idx)]

            losses = compute_losses(model, sample, device, cls_alpha=cls_alpha)
            grad_loss_value = ""
            w_log = weights.values()

            if balancing == "mgda":
                task_grads = []
                for loss in losses.as_list():
                    grads = torch.autograd.grad(
                        loss, shared, retain_graph=True, allow_unused=True
                    )
                    flat = torch.cat(
                        [
                            (g if g is not None else torch.zeros_like(p)).reshape(-1)
                            for g, p in zip(grads, shared)
                        ]
                    )
                    task_grads.append(flat.detach().cpu().numpy())
                coeffs = mgda_minnorm(task_grads)
                w_step = torch.tensor(coeffs, dtype=torch.float32, device=device)
                bundle = total_loss(losses.seg, losses.cls, losses.det, w_step)
                w_log = tuple(float(c) for c in coeffs)
                _check_finite(bundle, out_dir, step)
                optimizer.zero_grad()
                bundle.total.backward()
                optimizer.step()
            elif balancing == "gradnorm" and weights.initial_losses is not None:
                bundle = total_loss(losses.seg, losses.cls, losses.det, weights.w.to(device))
                _check_finite(bundle, out_dir, step)
                optimizer.zero_grad()
                bundle.total.backward(retain_graph=True)
                snapshot = gradnorm_step(weights, losses.as_list(), shared, cfg.balance.lr_weights)
                optimizer.step()
                grad_loss_value = f"{snapshot.balance_loss:.6f}"
                w_log = weights.values()
            else:
                bundle = total_loss(losses.seg, losses.cls, losses.det, weights.w.to(device))
                _check_finite(bundle, out_dir, step)
                optimizer.zero_grad()
                bundle.total.backward()
                optimizer.step()
                if balancing == "gradnorm":
                    warmup_losses.append(torch.stack([l.detach() for l in losses.as_list()]))
                    if len(warmup_losses) >= cfg.balance.initial_window:
                        initial = torch.stack(warmup_losses).mean(dim=0).clamp(min=1e-8)
                        weights.set_initial(initial)

            scheduler.step()
            lr = optimizer.param_groups[0]["lr"]
            seg_v, cls_v, det_v = (float(l.detach()) for l in losses.as_list())
            log_file.write(
                f"{step},{epoch},{seg_v:.6f},{cls_v:.6f},{det_v:.6f},"
                f"{w_log[0]:.6f},{w_log[1]:.6f},{w_log[2]:.6f},"
                f"{grad_loss_value},{lr:.8f}\n"
            )
            step += 1

            if step % eval_every == 0 or step >= total_steps:
                score = _validation_score(model, val_samples, cfg)
                if score >= best_score:
                    best_score = score
                    save_checkpoint(best_path, model, weights, optimizer, scheduler, cfg, step, epoch)
                model.train()
            if stop_check is not None and step % 50 == 0:
                if stop_check(model, train_samples, step):
                    stop = True
                    break
        epoch += 1

    log_file.close()
    save_checkpoint(out_dir / "last.pt", model, weights, optimizer, scheduler, cfg, step, epoch)
    if not best_path.exists():
        save_checkpoint(best_path, model, weights, optimizer, scheduler, cfg, step, epoch)
    return best_path


def _check_finite(bundle: LossBundle, out_dir: Path, step: int) -> None:
    if torch.isfinite(bundle.total):
        return
    seg, cls, det, total = bundle.values()
    dump = {
        "step": step,
        "loss_seg": seg,
        "loss_cls": cls,
        "loss_det": det,
        "loss_total": total,
    }
    (out_dir / "diagnostic_dump.json").write_text(json.dumps(dump, indent=2))
    raise RuntimeError(f"non-finite loss at step {step}: {dump}")


def _validation_score(model: MultiTaskModel, samples: list[VolumeSample], cfg: RunConfig) -> float:
    if not samples:
        return 0.0
    report = evaluate_cases(model, samples, cfg)
    parts = []
    if report.dice.get("avg") is not None:
        parts.append(report.dice["avg"])
    if report.accuracy is not None:
        parts.append(report.accuracy)
    if report.map_sweep is not None:
        parts.append(report.map_sweep)
    return float(np.mean(parts)) if parts else 0.0


def load_checkpoint(path: str | Path, device: str = "cpu") -> tuple[MultiTaskModel, RunConfig, dict]:
    payload = torch.load(path, map_location=device, weights_only=False)
    from .config import _build  # deferred to avoid cycle at import time

    cfg = _build(RunConfig, payload["config"])
    model = build_model(cfg.model).to(device)
    model.load_state_dict(payload["model"])
    model.eval()
    return model, cfg, payload
