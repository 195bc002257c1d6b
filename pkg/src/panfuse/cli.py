"""Batch command-line front end.

Subcommands wire the library into reproducible experiments:

  simulate   degrade a full-resolution scene and cut training patches
  train      fit a network on a simulated patch directory
  sharpen    fuse one MS/PAN pair with a trained model or a baseline
  evaluate   score fused rasters (full-reference or no-reference)
  compare    sharpen + evaluate a list of algorithms in one go

Every command writes its fully-resolved configuration (defaults filled
in) into the output directory, so a run can be reproduced from its own
artifacts. Exit codes: 0 success, 2 validation error, 3 numerical
divergence.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import asdict

import numpy as np

from . import baselines, metrics, network, raster, trainer
from .network import NetworkSpec
from .raster import RasterStack
from .trainer import DivergenceError, TrainConfig

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DIVERGENCE = 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# experiment config


_DATA_DEFAULTS = {"ms": None, "pan": None, "ratio": 4, "patch": 41, "stride": 41}
_NETWORK_DEFAULTS = {"preset": "msdcnn-default", "spec": None}
_EVAL_DEFAULTS = {"window": metrics.DEFAULT_WINDOW}
_TRAIN_DEFAULTS = asdict(TrainConfig())
del _TRAIN_DEFAULTS["seed"]  # the experiment-level seed feeds training too


def _merge_section(name: str, given: dict | None, defaults: dict) -> dict:
    given = dict(given or {})
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"config section {name!r}: unknown keys {sorted(unknown)}")
    merged = dict(defaults)
    merged.update(given)
    return merged


def resolve_config(doc: dict) -> dict:
    """Validate an experiment config document and fill every default."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - {"seed", "data", "network", "train", "eval"}
    if unknown:
        raise ConfigError(f"config: unknown top-level keys {sorted(unknown)}")
    resolved = {
        "seed": int(doc.get("seed", 0)),
        "data": _merge_section("data", doc.get("data"), _DATA_DEFAULTS),
        "network": _merge_section("network", doc.get("network"), _NETWORK_DEFAULTS),
        "train": _merge_section("train", doc.get("train"), _TRAIN_DEFAULTS),
        "eval": _merge_section("eval", doc.get("eval"), _EVAL_DEFAULTS),
    }
    if resolved["network"]["spec"] is not None:
        # validate the inline spec eagerly so bad configs fail before work starts
        network.spec_from_dict(resolved["network"]["spec"])
    return resolved


def load_config(path: str | None) -> dict:
    if path is None:
        return resolve_config({})
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})") from None
    return resolve_config(doc)


def network_spec_from_config(cfg: dict, bands: int) -> NetworkSpec:
    net = cfg["network"]
    if net["spec"] is not None:
        spec = network.spec_from_dict(net["spec"])
        if spec.bands != bands:
            raise ConfigError(f"inline network spec has {spec.bands} bands, data has {bands}")
        return spec
    return network.preset_spec(net["preset"], bands)


def train_config_from(cfg: dict) -> TrainConfig:
    try:
        return TrainConfig(seed=cfg["seed"], **cfg["train"])
    except (TypeError, ValueError) as e:
        raise ConfigError(f"train config: {e}") from None


def write_resolved_config(cfg: dict, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.resolved.json"), "w") as f:
        json.dump(cfg, f, indent=2, sort_keys=True)
        f.write("\n")


def write_resolved_args(args, path: str) -> None:
    """Echo the fully-resolved command arguments next to the outputs so a
    run can be reproduced from its own artifacts."""
    doc = {k: v for k, v in vars(args).items() if k != "func"}
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def _apply_determinism() -> None:
    """Pin numerical libraries to one thread for bit-reproducible runs."""
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(limits=1)
    except ImportError:
        pass


# ---------------------------------------------------------------------------
# simulate


def _crop_to_multiple(stack: RasterStack, ratio: int) -> RasterStack:
    h = (stack.height // ratio) * ratio
    w = (stack.width // ratio) * ratio
    if h < ratio or w < ratio:
        raise ConfigError(f"scene {stack.height}x{stack.width} too small for ratio {ratio}")
    if (h, w) == (stack.height, stack.width):
        return stack
    return stack.with_data(stack.data[:h, :w])


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    data = cfg["data"]
    ms_path = args.ms or data["ms"]
    pan_path = args.pan or data["pan"]
    if not ms_path or not pan_path:
        raise ConfigError("simulate needs MS and PAN paths (config data.ms/data.pan or flags)")
    for p in (ms_path, pan_path):
        if not os.path.exists(p):
            raise ConfigError(f"input raster not found: {p}")
    ratio = int(data["ratio"])
    patch = int(data["patch"])
    stride = int(data["stride"])

    ms_truth = _crop_to_multiple(raster.load_raster(ms_path), ratio)
    pan_full = raster.load_raster(pan_path)
    pan_full = pan_full.with_data(
        pan_full.data[: ms_truth.height * ratio, : ms_truth.width * ratio]
    )
    ms_up, pan_sim, truth = raster.wald_simulate(ms_truth, pan_full, ratio)
    ms_low = raster.decimate(truth, ratio)
    pairs = raster.extract_patches(ms_up, pan_sim, truth, patch=patch, stride=stride)

    out = args.out
    os.makedirs(os.path.join(out, "patches"), exist_ok=True)
    os.makedirs(os.path.join(out, "scene"), exist_ok=True)
    sha = hashlib.sha256()
    patch_files = []
    for i, pair in enumerate(pairs):
        for role, stack in (("input", pair.input), ("target", pair.target)):
            rel = os.path.join("patches", f"pair_{i:05d}.{role}.psr")
            raster.save_raster(stack, os.path.join(out, rel))
            patch_files.append(rel)
            with open(os.path.join(out, rel), "rb") as f:
                sha.update(f.read())
    for name, stack in (
        ("ms_up", ms_up), ("pan_sim", pan_sim), ("truth", truth), ("ms_low", ms_low),
    ):
        raster.save_raster(stack, os.path.join(out, "scene", name + ".psr"))

    manifest = {
        "seed": cfg["seed"],
        "ratio": ratio,
        "patch": patch,
        "stride": stride,
        "count": len(pairs),
        "bands": truth.bands,
        "geometry": {
            "truth": [truth.height, truth.width, truth.bands],
            "ms_low": [ms_low.height, ms_low.width, ms_low.bands],
            "pan_sim": [pan_sim.height, pan_sim.width, pan_sim.bands],
        },
        "patch_files": patch_files,
        "content_sha256": sha.hexdigest(),
    }
    with open(os.path.join(out, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    write_resolved_config(cfg, out)
    print(f"simulate: {len(pairs)} patch pairs ({patch}x{patch}, stride {stride}) -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def load_dataset(data_dir: str) -> list[raster.PatchPair]:
    manifest_path = os.path.join(data_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise ConfigError(f"no manifest.json in {data_dir}")
    with open(manifest_path) as f:
        manifest = json.load(f)
    pairs = []
    n = manifest["count"]
    for i in range(n):
        inp = raster.load_raster(os.path.join(data_dir, "patches", f"pair_{i:05d}.input.psr"))
        tgt = raster.load_raster(os.path.join(data_dir, "patches", f"pair_{i:05d}.target.psr"))
        pairs.append(raster.PatchPair(input=inp, target=tgt))
    return pairs


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.grad_mode:
        cfg["train"]["grad_mode"] = args.grad_mode
    if args.exact_eq17:
        cfg["train"]["exact_eq17"] = True
    if args.epochs is not None:
        cfg["train"]["epochs"] = args.epochs
    if args.deterministic:
        _apply_determinism()

    dataset = load_dataset(args.data)
    bands = dataset[0].target.bands
    spec = network_spec_from_config(cfg, bands)
    tconf = train_config_from(cfg)

    out = args.out
    os.makedirs(out, exist_ok=True)
    write_resolved_config(cfg, out)
    ckpt_dir = os.path.join(out, "checkpoints")

    state = None
    if args.resume:
        loaded_spec, state = trainer.load_train_state(ckpt_dir, args.resume)
        if network.spec_hash(loaded_spec) != network.spec_hash(spec):
            raise ConfigError("resume checkpoint was trained with a different network spec")

    state = trainer.train(
        dataset,
        spec,
        tconf,
        state=state,
        log_path=os.path.join(out, "loss_log.csv"),
        checkpoint_dir=ckpt_dir,
    )
    network.save_checkpoint(os.path.join(out, "model.msdp"), spec, state.params)

    shallow_k, deep_k = network.split_kernels(spec, state.params)
    report = {
        "param_count": network.param_count(spec),
        "shallow_params": sum(k.size for k in shallow_k),
        "deep_params": sum(k.size for k in deep_k),
        "iterations": state.iteration,
        "planned_iterations": trainer.planned_iterations(len(dataset), tconf),
        "epochs": state.epoch,
        "final_loss": state.loss_history[-1] if state.loss_history else None,
        "initial_loss": state.loss_history[0] if state.loss_history else None,
    }
    with open(os.path.join(out, "train_report.json"), "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    print(
        f"train: {state.epoch} epochs, {state.iteration} iterations, "
        f"loss {report['initial_loss']} -> {report['final_loss']}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# sharpen


def _forward_tiled(G: np.ndarray, spec: NetworkSpec, params, tile: int) -> np.ndarray:
    """Tile the forward pass with a receptive-field halo; only tile
    interiors are written, and the crop-invariant convolution order makes
    the stitched result bit-identical to a whole-image pass."""
    h, w = G.shape[:2]
    radius = network.receptive_radius(spec)
    out = np.zeros((h, w, spec.bands), dtype=G.dtype)
    for y0 in range(0, h, tile):
        for x0 in range(0, w, tile):
            y1 = min(y0 + tile, h)
            x1 = min(x0 + tile, w)
            ey0, ex0 = max(0, y0 - radius), max(0, x0 - radius)
            ey1, ex1 = min(h, y1 + radius), min(w, x1 + radius)
            block = network.forward(
                np.ascontiguousarray(G[ey0:ey1, ex0:ex1]), spec, params, stable=True
            )
            out[y0:y1, x0:x1] = block[y0 - ey0 : y1 - ey0, x0 - ex0 : x1 - ex0]
    return out


AUTO_TILE_PIXELS = 512 * 512
AUTO_TILE_SIZE = 256


def sharpen_with_network(
    ms_low: RasterStack,
    pan: RasterStack,
    spec: NetworkSpec,
    params,
    tile: int = 0,
) -> RasterStack:
    """Upsample MS to the PAN grid, stack PAN, run the network.

    tile=0 chooses automatically (whole image below the memory budget),
    tile>0 forces that tile size, tile<0 forces a whole-image pass.
    """
    if ms_low.bands != spec.bands:
        raise ConfigError(
            f"checkpoint expects {spec.bands} bands, MS image has {ms_low.bands}"
        )
    if pan.bands != 1:
        raise ConfigError("pan must be single-band")
    if pan.height % ms_low.height or pan.width % ms_low.width:
        raise ConfigError(
            f"pan {pan.height}x{pan.width} is not an integer multiple of "
            f"ms {ms_low.height}x{ms_low.width}"
        )
    if pan.height // ms_low.height != pan.width // ms_low.width:
        raise ConfigError("pan/ms ratios differ between axes")
    ms_up = raster.bicubic_resize(ms_low, pan.height, pan.width)
    G = np.concatenate([ms_up.data, pan.data], axis=2)
    if tile == 0 and G.shape[0] * G.shape[1] > AUTO_TILE_PIXELS:
        tile = AUTO_TILE_SIZE
    if tile > 0:
        fused = _forward_tiled(G, spec, params, tile)
    else:
        fused = network.forward(G, spec, params, stable=True)
    return RasterStack(
        np.clip(fused, 0.0, 1.0).astype(np.float32),
        bit_depth=ms_low.bit_depth,
        sensor_tag=ms_low.sensor_tag,
    )


def cmd_sharpen(args) -> int:
    ms_low = raster.load_raster(args.ms)
    pan = raster.load_raster(args.pan)
    if args.algorithm == "msdcnn":
        if not args.checkpoint:
            raise ConfigError("algorithm msdcnn needs --checkpoint")
        spec, params = network.load_checkpoint(args.checkpoint)
        fused = sharpen_with_network(ms_low, pan, spec, params, tile=args.tile)
    elif args.algorithm == "bicubic":
        ratio = pan.height // ms_low.height
        fused = baselines.bicubic_baseline(ms_low, ratio)
    elif args.algorithm == "sfim":
        ms_up = raster.bicubic_resize(ms_low, pan.height, pan.width)
        ratio = pan.height // ms_low.height
        side = args.smooth_side if args.smooth_side else 2 * ratio - 1
        fused = baselines.sfim(ms_up, pan, smooth_side=side)
    else:
        raise ConfigError(f"unknown algorithm {args.algorithm!r}")
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    raster.save_raster(fused, args.out)
    write_resolved_args(args, args.out + ".args.json")
    if args.png:
        # true-color band picks: (5,3,2) for 8-band imagery, (3,2,1) otherwise
        png_bands = (4, 2, 1) if fused.bands >= 8 else tuple(range(min(3, fused.bands)))[::-1]
        raster.export_png(fused, args.out + ".png", bands=png_bands)
    print(f"sharpen[{args.algorithm}]: {fused.height}x{fused.width}x{fused.bands} -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate


def _collect_pairs(fused: str, reference: str) -> list[tuple[str, str, str]]:
    """(image_id, fused_path, reference_path) for files or directories."""
    if os.path.isdir(fused):
        if not os.path.isdir(reference):
            raise ConfigError("when --fused is a directory the reference must be one too")
        f_names = sorted(n for n in os.listdir(fused) if n.endswith(".psr"))
        r_names = sorted(n for n in os.listdir(reference) if n.endswith(".psr"))
        missing = sorted(set(f_names) ^ set(r_names))
        if missing:
            raise ConfigError(f"unmatched file pairs: {missing}")
        if not f_names:
            raise ConfigError("no .psr files to evaluate")
        return [
            (os.path.splitext(n)[0], os.path.join(fused, n), os.path.join(reference, n))
            for n in f_names
        ]
    return [(os.path.splitext(os.path.basename(fused))[0], fused, reference)]


def _mean_of(rows: list[dict], key: str) -> float:
    return sum(r[key] for r in rows) / len(rows)


def cmd_evaluate(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    window = args.window
    rows = []
    if args.mode == "full_ref":
        pairs = _collect_pairs(args.fused, args.truth)
        for image_id, fpath, tpath in pairs:
            f = raster.load_raster(fpath)
            t = raster.load_raster(tpath)
            rep = metrics.full_reference(f, t, ratio=args.ratio, window=window)
            rows.append({"image_id": image_id, "algorithm": args.algorithm, **rep.as_dict()})
        fields = ["image_id", "algorithm", "psnr", "q", "ergas", "sam", "q2n"]
        mean_row = {
            "image_id": "mean",
            "algorithm": args.algorithm,
            "psnr": "infinite"
            if any(r["psnr"] == "infinite" for r in rows)
            else _mean_of(rows, "psnr"),
            "q": _mean_of(rows, "q"),
            "ergas": _mean_of(rows, "ergas"),
            "sam": _mean_of(rows, "sam"),
            "q2n": _mean_of(rows, "q2n"),
        }
    elif args.mode == "no_ref":
        if not args.ms_low or not args.pan:
            raise ConfigError("no_ref mode needs --ms-low and --pan")
        pairs = _collect_pairs(args.fused, args.ms_low)
        pan = raster.load_raster(args.pan)
        if args.pan_low:
            pan_low = raster.load_raster(args.pan_low)
        else:
            pan_low = raster.decimate(pan, args.ratio)
        for image_id, fpath, mpath in pairs:
            f = raster.load_raster(fpath)
            m = raster.load_raster(mpath)
            rep = metrics.no_reference(f, m, pan, pan_low, window=window)
            rows.append({"image_id": image_id, "algorithm": args.algorithm, **rep.as_dict()})
        fields = ["image_id", "algorithm", "qnr", "d_lambda", "d_s"]
        mean_row = {
            "image_id": "mean",
            "algorithm": args.algorithm,
            "qnr": _mean_of(rows, "qnr"),
            "d_lambda": _mean_of(rows, "d_lambda"),
            "d_s": _mean_of(rows, "d_s"),
        }
    else:
        raise ConfigError(f"unknown mode {args.mode!r}")

    write_resolved_args(args, os.path.join(args.out, "args.resolved.json"))
    csv_path = os.path.join(args.out, "metrics.csv")
    with open(csv_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        for r in rows:
            writer.writerow(r)
        writer.writerow(mean_row)
    with open(os.path.join(args.out, "metrics.json"), "w") as f:
        json.dump(
            {
                "mode": args.mode,
                "algorithm": args.algorithm,
                "ratio": args.ratio,
                "conventions": metrics.conventions(window),
                "rows": rows,
                "mean": mean_row,
            },
            f,
            indent=2,
            sort_keys=True,
        )
        f.write("\n")
    print(f"evaluate[{args.mode}]: {len(rows)} images -> {csv_path}")
    for key in fields[2:]:
        print(f"  mean {key}: {mean_row[key]}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare


def cmd_compare(args) -> int:
    algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    if not algorithms:
        raise ConfigError("no algorithms given")
    all_rows = []
    for algo in algorithms:
        fused_path = os.path.join(args.out, f"fused_{algo}.psr")
        s_args = argparse.Namespace(
            ms=args.ms, pan=args.pan, checkpoint=args.checkpoint, algorithm=algo,
            out=fused_path, tile=0, smooth_side=0, png=False,
        )
        cmd_sharpen(s_args)
        e_args = argparse.Namespace(
            mode="full_ref", fused=fused_path, truth=args.truth, ratio=args.ratio,
            window=args.window, algorithm=algo, out=os.path.join(args.out, f"eval_{algo}"),
            ms_low=None, pan=None, pan_low=None,
        )
        cmd_evaluate(e_args)
        with open(os.path.join(args.out, f"eval_{algo}", "metrics.json")) as f:
            all_rows.extend(json.load(f)["rows"])
    write_resolved_args(args, os.path.join(args.out, "args.resolved.json"))
    fields = ["image_id", "algorithm", "psnr", "q", "ergas", "sam", "q2n"]
    with open(os.path.join(args.out, "compare.csv"), "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        for r in all_rows:
            writer.writerow(r)
    print(f"compare: {len(algorithms)} algorithms -> {os.path.join(args.out, 'compare.csv')}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="panfuse", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="build a reduced-scale training dataset")
    sim.add_argument("--config", help="experiment config JSON")
    sim.add_argument("--ms", help="full-resolution MS raster (overrides config)")
    sim.add_argument("--pan", help="full-resolution PAN raster (overrides config)")
    sim.add_argument("--out", required=True, help="output dataset directory")
    sim.add_argument("--seed", type=int, default=None)
    sim.set_defaults(func=cmd_simulate)

    tr = sub.add_parser("train", help="train a network on a simulated dataset")
    tr.add_argument("--config", help="experiment config JSON")
    tr.add_argument("--data", required=True, help="dataset directory from `simulate`")
    tr.add_argument("--out", required=True, help="run output directory")
    tr.add_argument("--seed", type=int, default=None)
    tr.add_argument("--epochs", type=int, default=None, help="override config epoch count")
    tr.add_argument("--grad-mode", choices=("batch_mean", "single_sample"), default=None)
    tr.add_argument("--exact-eq17", action="store_true",
                    help="unconditional gradient rescaling instead of capped clipping")
    tr.add_argument("--deterministic", action="store_true",
                    help="single-threaded numerics for bit-reproducible runs")
    tr.add_argument("--resume", help="checkpoint tag in <out>/checkpoints to resume from")
    tr.set_defaults(func=cmd_train)

    sh = sub.add_parser("sharpen", help="fuse an MS/PAN pair")
    sh.add_argument("--checkpoint", help="trained model (.msdp), required for msdcnn")
    sh.add_argument("--ms", required=True)
    sh.add_argument("--pan", required=True)
    sh.add_argument("--out", required=True, help="output .psr path")
    sh.add_argument("--algorithm", choices=("msdcnn", "bicubic", "sfim"), default="msdcnn")
    sh.add_argument("--tile", type=int, default=0,
                    help="tile size for tiled inference (0 auto, -1 whole image)")
    sh.add_argument("--smooth-side", type=int, default=0,
                    help="SFIM box filter side (default 2*ratio-1)")
    sh.add_argument("--png", action="store_true", help="also write an RGB preview PNG")
    sh.set_defaults(func=cmd_sharpen)

    ev = sub.add_parser("evaluate", help="score fused rasters")
    ev.add_argument("--mode", choices=("full_ref", "no_ref"), required=True)
    ev.add_argument("--fused", required=True, help=".psr file or directory")
    ev.add_argument("--truth", help="reference truth (full_ref mode)")
    ev.add_argument("--ms-low", dest="ms_low", help="low-resolution MS (no_ref mode)")
    ev.add_argument("--pan", help="full-resolution PAN (no_ref mode)")
    ev.add_argument("--pan-low", dest="pan_low", help="degraded PAN (computed if omitted)")
    ev.add_argument("--ratio", type=int, default=4)
    ev.add_argument("--window", type=int, default=metrics.DEFAULT_WINDOW)
    ev.add_argument("--algorithm", default="unknown", help="label for the report rows")
    ev.add_argument("--out", required=True, help="report output directory")
    ev.set_defaults(func=cmd_evaluate)

    cp = sub.add_parser("compare", help="sharpen + full-reference evaluate several algorithms")
    cp.add_argument("--checkpoint")
    cp.add_argument("--ms", required=True)
    cp.add_argument("--pan", required=True)
    cp.add_argument("--truth", required=True)
    cp.add_argument("--ratio", type=int, default=4)
    cp.add_argument("--window", type=int, default=metrics.DEFAULT_WINDOW)
    cp.add_argument("--algorithms", default="msdcnn,bicubic,sfim")
    cp.add_argument("--out", required=True)
    cp.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as e:
        print(f"panfuse: divergence: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ConfigError, ValueError, OSError, KeyError) as e:
        print(f"panfuse: error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
