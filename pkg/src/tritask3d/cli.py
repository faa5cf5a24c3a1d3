"""Command-line entry points: data synthesis, training, evaluation, profiling."""

from __future__ import annotations

import json
from pathlib import Path

import click

from .dataio import PhantomSpec, list_cases, load_case, make_dataset
from .metrics import profile as profile_model
from .metrics import write_macs_table
from .pipeline import (
    build_model,
    evaluate_checkpoint,
    five_fold_split,
    infer as run_infer,
    load_config,
    save_splits,
    train as run_train,
)


def _parse_overrides(pairs: tuple[str, ...]) -> dict:
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise click.BadParameter(f"override {pair!r} is not key=value")
        key, raw = pair.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        overrides[key] = value
    return overrides


@click.group()
def main():
    """Multi-task 3D tumor analysis toolkit."""


@main.command("synth-data")
@click.option("--out", required=True, type=click.Path(), help="dataset root to create")
@click.option("--cases", default=8, show_default=True)
@click.option("--extent", default=64, show_default=True, help="cubic volume edge in voxels")
@click.option("--seed", default=0, show_default=True)
@click.option("--balance/--no-balance", default=True, show_default=True)
def synth_data(out, cases, extent, seed, balance):
    """Generate a phantom dataset in BraTS layout plus a manifest."""
    wt_hi = max(extent * 0.22, 6.0)
    spec = PhantomSpec(extent=(extent,) * 3, wt_radius_range=(wt_hi * 0.6, wt_hi))
    samples = make_dataset(spec, cases, out, seed=seed, balance=balance)
    click.echo(f"wrote {len(samples)} cases to {out}")
    for s in samples:
        click.echo(f"  {s.case_id}: grade={s.grade.value} box={s.box.min_corner}->{s.box.max_corner}")


@main.command()
@click.option("--data", "data_root", required=True, type=click.Path(exists=True))
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default="folds.json", show_default=True, type=click.Path())
def split(data_root, seed, out):
    """Write the grade-stratified five-fold case splits."""
    cases = [(cid, load_case(cdir, cid).grade) for cdir, cid in list_cases(data_root)]
    save_splits(five_fold_split(cases, seed=seed), out)
    click.echo(f"wrote 5 folds over {len(cases)} cases to {out}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--fold", type=int, default=None)
@click.option("--device", type=str, default=None)
@click.option("--set", "overrides", multiple=True, help="dotted override, e.g. model.det.neck=fpn")
def train(config_path, seed, fold, device, overrides):
    """Train per the config; prints the best checkpoint path."""
    extra = _parse_overrides(overrides)
    if seed is not None:
        extra["seed"] = seed
    if fold is not None:
        extra["fold"] = fold
    if device is not None:
        extra["device"] = device
    cfg = load_config(config_path, extra)
    best = run_train(cfg)
    click.echo(f"best checkpoint: {best}")


@main.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--data", "data_root", type=click.Path(exists=True), default=None)
@click.option("--split", "split_name", default="val", type=click.Choice(["train", "val", "all"]))
@click.option("--out", default="report.json", show_default=True, type=click.Path())
@click.option("--hd-percentile", default=95.0, show_default=True)
def evaluate(checkpoint, data_root, split_name, out, hd_percentile):
    """Evaluate a checkpoint and write the metrics report JSON."""
    report = evaluate_checkpoint(checkpoint, data_root, split_name, out, hd_percentile)
    click.echo(json.dumps(report.to_dict(), indent=2))


@main.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--case-dir", required=True, type=click.Path(exists=True))
@click.option("--case-id", required=True)
@click.option("--out", required=True, type=click.Path())
def infer(checkpoint, case_dir, case_id, out):
    """Run one case: segmentation volume, detections JSON, grade."""
    record = run_infer(checkpoint, case_dir, case_id, out)
    click.echo(json.dumps(record, indent=2))


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--variant", default="multi", type=click.Choice(["multi", "seg_only", "det_only", "cls_only"]))
@click.option("--extent", default=96, show_default=True)
@click.option("--repeats", default=50, show_default=True)
@click.option("--device", default="cpu", show_default=True)
@click.option("--macs-csv", type=click.Path(), default=None, help="write the per-layer MACs table")
@click.option("--no-latency", is_flag=True, default=False)
def profile(config_path, variant, extent, repeats, device, macs_csv, no_latency):
    """Construct a model and report params / MACs / FLOPs / latency / size."""
    cfg = load_config(config_path, {"model.variant": variant})
    model = build_model(cfg.model)
    record, table = profile_model(
        model,
        (extent,) * 3,
        in_channels=cfg.model.encoder.in_channels,
        device=device,
        repeats=repeats,
        measure_time=not no_latency,
    )
    enc_params = sum(p.numel() for p in model.encoder.parameters())
    click.echo(f"variant:        {variant}")
    click.echo(f"encoder params: {enc_params:,}")
    click.echo(f"total params:   {record.params:,}")
    click.echo(f"MACs:           {record.macs:,}")
    click.echo(f"FLOPs:          {record.flops:,}")
    click.echo(f"latency (s):    {record.latency_s:.4f}")
    click.echo(f"size (MB):      {record.size_mb:.2f}")
    if macs_csv:
        write_macs_table(table, macs_csv)
        click.echo(f"per-layer MACs written to {macs_csv}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", default="ablation", show_default=True, type=click.Path())
@click.option("--set", "overrides", multiple=True)
def ablate(config_path, out, overrides):
    """Run the neck x balancer grid; one report per combination."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = {}
    for neck in ("panet", "fpn"):
        for balancer in ("gradnorm", "mgda"):
            name = f"{neck}_{balancer}"
            extra = _parse_overrides(overrides)
            extra.update(
                {
                    "model.det.neck": neck,
                    "balance.method": balancer,
                    "out_dir": str(out_dir / name),
                }
            )
            cfg = load_config(config_path, extra)
            best = run_train(cfg)
            report = evaluate_checkpoint(best, split="train", out_path=out_dir / f"{name}.json")
            results[name] = report.to_dict()
            click.echo(f"{name}: done -> {out_dir / f'{name}.json'}")
    (out_dir / "summary.json").write_text(json.dumps(results, indent=2) + "\n")
    click.echo(f"ablation grid complete; summary at {out_dir / 'summary.json'}")


if __name__ == "__main__":
    main()
