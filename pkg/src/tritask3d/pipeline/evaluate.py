"""Evaluation and inference over trained checkpoints."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from ..dataio import ungroup_labels, write_nifti
from ..datamodel import BoundingBox3D, Detection, Grade, GradePrediction, VolumeSample
from ..decoders.detection import postprocess_detections
from ..metrics import MetricsReport, classification_metrics, dice_metric, hausdorff, map_sweep
from .model import MultiTaskModel

REGION_NAMES = ("wt", "tc", "et")


@torch.no_grad()
def run_case(model: MultiTaskModel, sample: VolumeSample, device: str = "cpu"):
    """Forward one preprocessed case; returns (seg_probs, detections, grade_pred)."""
    model.eval()
    image = torch.from_numpy(np.ascontiguousarray(sample.image)).unsqueeze(0).to(device)
    out = model(image)

    seg_probs = None
    if out.seg_logits is not None:
        seg_probs = torch.sigmoid(out.seg_logits)[0].cpu().numpy()

    detections: list[Detection] = []
    if out.obj_logits is not None:
        detections = postprocess_detections(
            out.obj_logits[0], out.box_deltas[0], out.anchors, model.cfg.det, sample.extent
        )

    grade_pred = None
    if out.grade_logits is not None:
        logits = out.grade_logits[0].cpu()
        prob_hgg = torch.softmax(logits, dim=-1)[1].item()
        grade_pred = GradePrediction((float(logits[0]), float(logits[1])), prob_hgg)

    return seg_probs, detections, grade_pred


def evaluate_cases(
    model: MultiTaskModel,
    samples: list[VolumeSample],
    cfg,
    hd_percentile: float = 95.0,
    device: str = "cpu",
) -> MetricsReport:
    """MetricsReport over already-preprocessed samples."""
    if not samples:
        raise ValueError("no cases to evaluate")
    dice_acc: dict[str, list[float]] = {r: [] for r in REGION_NAMES}
    hd_acc: dict[str, list[float]] = {r: [] for r in REGION_NAMES}
    preds: list[GradePrediction] = []
    grades: list[Grade] = []
    dets_per_case: list[list[Detection]] = []
    gts_per_case: list[list[BoundingBox3D]] = []

    for sample in samples:
        seg_probs, detections, grade_pred = run_case(model, sample, device)
        if seg_probs is not None:
            for c, region in enumerate(REGION_NAMES):
                pred_mask = seg_probs[c] >= 0.5
                dice_acc[region].append(dice_metric(pred_mask, sample.mask[c]))
                hd = hausdorff(pred_mask, sample.mask[c], percentile=hd_percentile)
                if hd is not None:
                    hd_acc[region].append(hd)
        if grade_pred is not None:
            preds.append(grade_pred)
            grades.append(sample.grade)
        if model.det_head is not None:
            dets_per_case.append(detections)
            gts_per_case.append([sample.box] if sample.box is not None else [])

    report = MetricsReport(num_cases=len(samples), hausdorff_percentile=hd_percentile)
    if any(dice_acc[r] for r in REGION_NAMES):
        report.dice = {r: float(np.mean(dice_acc[r])) for r in REGION_NAMES}
        report.dice["avg"] = float(np.mean([report.dice[r] for r in REGION_NAMES]))
        report.hausdorff = {
            r: (float(np.mean(hd_acc[r])) if hd_acc[r] else None) for r in REGION_NAMES
        }
    if preds:
        acc, sen, spe = classification_metrics(preds, grades)
        report.accuracy, report.sensitivity, report.specificity = acc, sen, spe
    if dets_per_case:
        report.__dict__.update(map_sweep(dets_per_case, gts_per_case))
    return report


def evaluate_checkpoint(
    checkpoint: str | Path,
    data_root: str | Path | None = None,
    split: str = "val",
    out_path: str | Path | None = None,
    hd_percentile: float = 95.0,
    device: str = "cpu",
) -> MetricsReport:
    from .train import load_checkpoint, load_dataset, prepare_sample, split_dataset

    model, cfg, _ = load_checkpoint(checkpoint, device)
    if data_root is not None:
        cfg.data.root = str(data_root)
    samples = [prepare_sample(s, cfg) for s in load_dataset(cfg)]
    train_samples, val_samples = split_dataset(samples, cfg)
    chosen = {"train": train_samples, "val": val_samples, "all": samples}[split]
    report = evaluate_cases(model, chosen, cfg, hd_percentile=hd_percentile, device=device)
    if out_path is not None:
        report.save(out_path)
    return report


def infer(
    checkpoint: str | Path,
    case_dir: str | Path,
    case_id: str,
    out_dir: str | Path,
    device: str = "cpu",
) -> dict:
    """Run one case end to end; writes the mask volume and a detections record."""
    from ..dataio import load_case
    from .train import load_checkpoint, prepare_sample

    model, cfg, _ = load_checkpoint(checkpoint, device)
    sample = prepare_sample(load_case(case_dir, case_id), cfg)
    seg_probs, detections, grade_pred = run_case(model, sample, device)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    record: dict = {"case_id": case_id}

    if seg_probs is not None:
        labels = ungroup_labels((seg_probs >= 0.5).astype(np.uint8))
        write_nifti(out / f"{case_id}_pred_seg.nii.gz", labels.transpose(2, 1, 0).copy())
        record["segmentation"] = f"{case_id}_pred_seg.nii.gz"
    if grade_pred is not None:
        record["grade"] = grade_pred.grade.value
        record["grade_probability_hgg"] = grade_pred.probability
    record["detections"] = [
        {
            "box": [list(d.box.min_corner), list(d.box.max_corner)],
            "score": d.score,
        }
        for d in detections
    ]
    (out / f"{case_id}_outputs.json").write_text(json.dumps(record, indent=2) + "\n")
    return record
