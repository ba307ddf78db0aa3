"""Batch entry points: feature extraction, compression inspection, training,
evaluation, click simulation, and serving.

Every subcommand is deterministic given its flags and seed. Exit codes:
0 success, 1 runtime failure, 2 usage error. Config files are TOML (JSON
accepted as a fallback); command-line flags override file values.
"""

from __future__ import annotations

import json
import os
import sys

import click
import numpy as np

from .clicks import clicks_to_json, simulate_clicks
from .features import load_backbone, tile_grid, toy_backbone, backbone_tap_features, stack_tiles
from .pngio import load_image_png, load_mask_png
from .tensors import load_tensor, resize2d, save_tensor
from .training import TrainConfig, evaluate, train
from .tucker import CompressionPlan, depth_tucker, halving_plan, reconstruct
from . import tessellate_extract


def _load_config_file(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read()
    if str(path).endswith(".json"):
        return json.loads(raw.decode("utf-8"))
    try:
        import tomllib  # Python 3.11+
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        return tomllib.loads(raw.decode("utf-8"))
    except tomllib.TOMLDecodeError:
        return json.loads(raw.decode("utf-8"))


def _resolve_backbone(spec: str, input_size: int, depths, downsamples):
    if os.path.isdir(spec):
        return load_backbone(spec)
    if spec.startswith("toy"):
        seed = int(spec.split(":", 1)[1]) if ":" in spec else 0
        return toy_backbone(seed=seed, input_size=input_size,
                            stage_depths=depths, downsamples=downsamples)
    raise click.UsageError(f"backbone {spec!r} is neither a directory nor toy[:seed]")


def _parse_ints(text: str):
    return tuple(int(v) for v in text.split(",") if v)


@click.group()
def main():
    """Interactive video segmentation toolkit."""


@main.command("extract")
@click.option("--image", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(), required=True, help="Feature container output path.")
@click.option("--backbone", "backbone_spec", default="toy:0", show_default=True,
              help="Backbone weights directory, or toy[:seed].")
@click.option("--input-size", default=32, show_default=True)
@click.option("--depths", default="8,24", show_default=True, help="Toy backbone stage depths.")
@click.option("--downsamples", default="1,2", show_default=True)
@click.option("--ranks", default="", help="Per-layer ranks; defaults to halving each depth.")
@click.option("--save-layers", type=click.Path(), default=None,
              help="Also dump raw per-tile tap tensors for compress-report.")
def cmd_extract(image, out, backbone_spec, input_size, depths, downsamples, ranks, save_layers):
    """Tessellated feature extraction to a tensor container plus manifest."""
    b = _resolve_backbone(backbone_spec, input_size, _parse_ints(depths), _parse_ints(downsamples))
    img = load_image_png(image)
    w, h = img.shape[1:]
    grid = tile_grid(w, h, b.input_width, b.input_height)
    click.echo(f"{grid.tile_count} tiles ({grid.cols}x{grid.rows}), padded {grid.padded_w}x{grid.padded_h}")
    layer_pairs = list(zip(b.tap_layer_ids, b.tap_depths))
    if ranks:
        rank_list = _parse_ints(ranks)
        if len(rank_list) != len(layer_pairs):
            raise click.UsageError(f"{len(rank_list)} ranks given for {len(layer_pairs)} tap layers")
        plan = CompressionPlan(tuple((lid, r) for (lid, _), r in zip(layer_pairs, rank_list)))
    else:
        plan = halving_plan(layer_pairs)
    stack = tessellate_extract(img, b, plan)
    save_tensor(out, stack.features)
    manifest = {
        "image": os.path.abspath(image),
        "width": w,
        "height": h,
        "depth": stack.depth,
        "tiles": grid.tile_count,
        "backbone": b.backbone_id,
        "plan": [list(p) for p in plan.per_layer_ranks],
    }
    with open(f"{out}.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    click.echo(f"wrote {stack.depth}x{w}x{h} features to {out}")
    if save_layers:
        os.makedirs(save_layers, exist_ok=True)
        padded = resize2d(img, grid.padded_w, grid.padded_h, method="bilinear")
        tiles = stack_tiles(padded, grid)
        files = []
        for t in range(grid.tile_count):
            for lid, tap in zip(b.tap_layer_ids, backbone_tap_features(tiles[t], b)):
                name = f"tile{t:03d}_{lid}.hseg"
                save_tensor(os.path.join(save_layers, name), tap)
                files.append({"tile": t, "layer": lid, "file": name})
        with open(os.path.join(save_layers, "layers.json"), "w", encoding="utf-8") as fh:
            json.dump({"tiles": grid.tile_count, "layers": list(b.tap_layer_ids), "files": files}, fh, indent=2)
        click.echo(f"dumped {len(files)} raw layer tensors to {save_layers}")


@main.command("compress-report")
@click.option("--layers", "layers_dir", type=click.Path(exists=True, file_okay=False), required=True,
              help="Raw layer dump from `extract --save-layers`.")
@click.option("--ranks", default="", help="Per-layer ranks; defaults to halving each depth.")
@click.option("--out", type=click.Path(), default=None, help="Write the JSON report here.")
def cmd_compress_report(layers_dir, ranks, out):
    """Per-layer depth-compression error and retained energy at given ranks."""
    with open(os.path.join(layers_dir, "layers.json"), encoding="utf-8") as fh:
        meta = json.load(fh)
    layer_ids = meta["layers"]
    rank_list = _parse_ints(ranks) if ranks else None
    if rank_list is not None and len(rank_list) != len(layer_ids):
        raise click.UsageError(f"{len(rank_list)} ranks given for {len(layer_ids)} layers")
    report = []
    for i, lid in enumerate(layer_ids):
        files = [e["file"] for e in meta["files"] if e["layer"] == lid]
        err2 = 0.0
        total2 = 0.0
        depth = None
        rank = None
        for name in files:
            tensor = load_tensor(os.path.join(layers_dir, name))
            depth = tensor.shape[0]
            rank = rank_list[i] if rank_list else (depth + 1) // 2
            core, factor = depth_tucker(tensor, rank, source_layer=lid)
            err2 += float(np.sum((tensor - reconstruct(core, factor)) ** 2))
            total2 += float(np.sum(tensor**2))
        energy = 1.0 if total2 == 0.0 else max(0.0, 1.0 - err2 / total2)
        report.append(
            {
                "layer": lid,
                "depth": depth,
                "rank": rank,
                "reconstruction_error": float(np.sqrt(err2)),
                "energy_retained": energy,
            }
        )
    payload = json.dumps({"per_layer": report}, indent=2)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(payload)
    click.echo(payload)


@main.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=None, help="Overrides the config seed.")
@click.option("--steps", type=int, default=None, help="Overrides the config step count.")
def cmd_train(config_path, out_dir, seed, steps):
    """Desk-scale training run; writes a checkpoint and the loss curve."""
    raw = _load_config_file(config_path) if config_path else {}
    if seed is not None:
        raw["seed"] = seed
    if steps is not None:
        raw["steps"] = steps
    try:
        config = TrainConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise click.UsageError(f"bad training config: {exc}")
    result = train(config, out_dir=out_dir)
    click.echo(
        f"trained {config.steps} steps: loss {result.losses[0]:.4f} -> {result.losses[-1]:.4f}; "
        f"checkpoint at {out_dir}"
    )


@main.command("eval")
@click.option("--checkpoint", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--data", "data_root", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--clicks", "clicks_per_image", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--head", type=int, default=1, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def cmd_eval(checkpoint, data_root, clicks_per_image, seed, head, out):
    """Evaluate a checkpoint on a dataset directory; emits metrics JSON."""
    report = evaluate(checkpoint, data_root, clicks_per_image=clicks_per_image,
                      seed=seed, head=head)
    payload = json.dumps(report, indent=2)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(payload)
    click.echo(payload)


@main.command("simulate-clicks")
@click.option("--gt", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--seed", type=int, required=True)
@click.option("--pos", type=int, required=True)
@click.option("--neg", type=int, required=True)
@click.option("--out", type=click.Path(), default=None)
def cmd_simulate_clicks(gt, seed, pos, neg, out):
    """Simulate clicks against a ground-truth mask PNG; emits clicks JSON."""
    mask = load_mask_png(gt)
    try:
        state = simulate_clicks(mask, seed, pos, neg)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    payload = clicks_to_json(state)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(payload)
    click.echo(payload)


@main.command("serve")
@click.option("--checkpoint", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--store", type=click.Path(), required=True)
@click.option("--budget", type=int, default=512 * 1024 * 1024, show_default=True,
              help="Session store byte budget (LRU eviction).")
@click.option("--ui", "ui_dir", type=click.Path(file_okay=False), default=None,
              help="Static frontend directory to serve at /.")
def cmd_serve(checkpoint, port, host, store, budget, ui_dir):
    """Run the interactive session service."""
    from .service import run_server

    run_server(checkpoint, store, port=port, host=host, byte_budget=budget, ui_dir=ui_dir)


def entrypoint(argv=None) -> int:
    try:
        main.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 2
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        return 130
    except Exception as exc:  # runtime failure
        click.echo(f"error: {exc}", err=True)
        return 1


if __name__ == "__main__":
    sys.exit(entrypoint())
