"""Command-line front end.

Subcommands
    train        fit preprocessing + quantizer on a PGM directory, write .rrqm
    compress     encode PGM images against a model into a .rrq bitstream
    decompress   reconstruct PGM images from a .rrq bitstream
    eval-dr      train on a split, write distortion-rate CSV + figure
    denoise      noisy-reconstruction experiment, write CSV + figure
    synth        generate the synthetic PGM corpus

Every artifact gets a JSON manifest sidecar recording the resolved config,
the seeds, and the model hash, so runs can be reproduced byte-for-byte.

Exit codes: 0 success, 2 usage or input error, 3 integrity failure.
"""

import argparse
import json
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__, codec, evaluation, figures, pgm, preprocess, quantizer, rng


class UsageError(ValueError):
    pass


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _load_corpus(directory) -> tuple[list[str], list[np.ndarray]]:
    root = Path(directory)
    if not root.is_dir():
        raise UsageError(f"not a directory: {root}")
    paths = sorted(root.glob("*.pgm"))
    if not paths:
        raise UsageError(f"no .pgm files in {root}")
    images = [pgm.read_pgm(p) for p in paths]
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise UsageError(f"images disagree on geometry: {sorted(shapes)}")
    return [p.name for p in paths], images


def split_corpus(names, fraction: float, seed: int,
                 subject_regex: str | None = None) -> tuple[list[int], list[int]]:
    """Deterministic train/test split over image indices.

    With a subject regex the split is stratified per subject (first capture
    group, else whole match, else own filename); otherwise it is a plain
    random split over images. Singleton groups land in the training set.
    """
    if not (0.0 < fraction < 1.0):
        raise UsageError(f"split fraction must be in (0,1), got {fraction}")
    gen = np.random.default_rng(seed)
    groups: dict[str, list[int]] = {}
    if subject_regex:
        pat = re.compile(subject_regex)
        for i, nm in enumerate(names):
            m = pat.search(nm)
            key = nm if m is None else (m.group(1) if m.groups() else m.group(0))
            groups.setdefault(key, []).append(i)
    else:
        groups[""] = list(range(len(names)))
    train_idx: list[int] = []
    test_idx: list[int] = []
    for key in sorted(groups):
        members = groups[key]
        if len(members) == 1:
            train_idx.extend(members)
            continue
        perm = gen.permutation(len(members))
        n_tr = int(round(fraction * len(members)))
        n_tr = max(1, min(len(members) - 1, n_tr))
        train_idx.extend(members[i] for i in perm[:n_tr])
        test_idx.extend(members[i] for i in perm[n_tr:])
    return sorted(train_idx), sorted(test_idx)


def _write_manifest(path, command: str, config: dict, outputs: list[str],
                    model_digest: bytes | None = None) -> None:
    doc = {
        "tool": "rrq",
        "version": __version__,
        "command": command,
        "generator_id": rng.GENERATOR_ID,
        "config": config,
        "outputs": outputs,
    }
    if model_digest is not None:
        doc["model_sha256"] = model_digest.hex()
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _train_model(images, subbands: int, layers: int, codewords,
                 model_seed: int):
    stack = np.asarray(images)
    pre = preprocess.fit(stack, subbands)
    vecs = preprocess.forward_batch(stack, pre)
    model, report = quantizer.train(
        vecs, layers=layers, codewords=codewords, model_seed=model_seed,
        preprocess_hash=codec.preprocess_identity(pre))
    return pre, model, report


def _summary_rows(report) -> list[int]:
    depth = len(report.mean_sq_residual)
    if depth <= 16:
        return list(range(1, depth + 1))
    return evaluation.geometric_grid(depth)


def cmd_train(args) -> int:
    names, images = _load_corpus(args.input)
    codewords = _parse_int_list(args.codewords)
    if len(codewords) == 1:
        codewords = codewords[0]
    pre, model, report = _train_model(images, args.subbands, args.layers,
                                      codewords, args.model_seed)
    digest = codec.save_model(args.output, pre, model)
    print(f"trained on {len(names)} images, n={model.dim}, "
          f"depth={model.depth}, model sha256 {digest.hex()[:16]}")
    for l in _summary_rows(report):
        print(f"  layer {l:5d}  mean sq residual {report.mean_sq_residual[l - 1]:.6e}")
    manifest = Path(str(args.output) + ".manifest.json")
    _write_manifest(manifest, "train", {
        "input": str(args.input), "output": str(args.output),
        "subbands": args.subbands, "layers": args.layers,
        "codewords": args.codewords, "model_seed": args.model_seed,
    }, [str(args.output)], digest)
    return 0


def cmd_compress(args) -> int:
    pre, model, digest = codec.load_model(args.model)
    names, images = _load_corpus(args.input)
    if images[0].shape != (pre.height, pre.width):
        raise UsageError(f"model expects {pre.height}x{pre.width} images, "
                         f"corpus is {images[0].shape[0]}x{images[0].shape[1]}")
    layers_used = args.layers_used if args.layers_used is not None else model.depth
    stream = codec.compress(images, pre, model, layers_used)
    blob = codec.write_stream(args.output, stream, model)
    bpp = codec.bits_per_pixel(model, layers_used, pre.height, pre.width)
    print(f"compressed {len(names)} images at {layers_used} layers, "
          f"{bpp:.6f} bpp payload, {len(blob)} bytes written")
    _write_manifest(Path(str(args.output) + ".manifest.json"), "compress", {
        "model": str(args.model), "input": str(args.input),
        "output": str(args.output), "layers_used": layers_used,
    }, [str(args.output)], digest)
    return 0


def cmd_decompress(args) -> int:
    pre, model, digest = codec.load_model(args.model)
    stream = codec.read_stream(args.input, model,
                               expected_hash=codec.model_hash(pre, model))
    images = codec.decompress(stream, pre, model)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i, img in enumerate(images):
        path = out / f"{args.prefix}{i:05d}.pgm"
        pgm.write_pgm(path, img, maxval=args.maxval)
        written.append(str(path))
    print(f"decompressed {len(images)} images into {out}")
    _write_manifest(out / "manifest.json", "decompress", {
        "model": str(args.model), "input": str(args.input),
        "output": str(args.output), "maxval": args.maxval,
    }, written, digest)
    return 0


def _resolve_grid(args, depth: int) -> list[int]:
    if args.layer_grid is not None:
        grid = _parse_int_list(args.layer_grid)
        if grid != sorted(grid) or (grid and not (0 <= grid[0] and grid[-1] <= depth)):
            raise UsageError(f"layer grid must be ascending within [0, {depth}]")
        return grid
    if args.dense_grid:
        return list(range(1, depth + 1))
    return evaluation.geometric_grid(depth)


def _sample_indices(pool: list[int], count: int, gen) -> list[int]:
    if count >= len(pool):
        return list(pool)
    picks = gen.choice(len(pool), size=count, replace=False)
    return [pool[i] for i in sorted(picks)]


def cmd_eval_dr(args) -> int:
    names, images = _load_corpus(args.input)
    train_idx, test_idx = split_corpus(names, args.split_fraction,
                                       args.split_seed, args.subject_regex)
    if len(train_idx) < 2 or not test_idx:
        raise UsageError("split left too few images on one side")
    codewords = _parse_int_list(args.codewords)
    if len(codewords) == 1:
        codewords = codewords[0]
    pre, model, _ = _train_model([images[i] for i in train_idx], args.subbands,
                                 args.layers, codewords, args.model_seed)
    grid = _resolve_grid(args, model.depth)

    gen = np.random.default_rng(args.split_seed)
    sample = _sample_indices(test_idx, args.sample, gen)
    splits = {
        "train": [images[i] for i in train_idx],
        "test": [images[i] for i in sample],
    }
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    curves = {}
    rows = []
    for split, members in splits.items():
        points = evaluation.dr_sweep(members, pre, model, grid, threads=args.threads)
        curves[split] = points
        rows.extend((split, p) for p in points)
        tail = points[-1]
        print(f"{split}: {len(members)} images, final layer mse {tail.mse:.6e} "
              f"({tail.psnr_db:.2f} dB at {tail.bits_per_pixel:.4f} bpp)")
    csv_path = out / "dr_curve.csv"
    evaluation.write_dr_csv(csv_path, rows)
    fig_path = out / "dr_curve.png"
    figures.render_dr_curve(fig_path, curves)
    model_path = out / "model.rrqm"
    digest = codec.save_model(model_path, pre, model)
    _write_manifest(out / "dr_curve.manifest.json", "eval-dr", {
        "input": str(args.input), "output_dir": str(args.output_dir),
        "subbands": args.subbands, "layers": args.layers,
        "codewords": args.codewords, "model_seed": args.model_seed,
        "split_fraction": args.split_fraction, "split_seed": args.split_seed,
        "subject_regex": args.subject_regex, "sample": args.sample,
        "layer_grid": grid, "threads": args.threads,
    }, [str(csv_path), str(fig_path), str(model_path)], digest)
    return 0


def cmd_denoise(args) -> int:
    names, images = _load_corpus(args.input)
    train_idx, test_idx = split_corpus(names, args.split_fraction,
                                       args.split_seed, args.subject_regex)
    if len(train_idx) < 2 or not test_idx:
        raise UsageError("split left too few images on one side")
    codewords = _parse_int_list(args.codewords)
    if len(codewords) == 1:
        codewords = codewords[0]
    pre, model, _ = _train_model([images[i] for i in train_idx], args.subbands,
                                 args.layers, codewords, args.model_seed)
    grid = _resolve_grid(args, model.depth)
    sigmas = args.sigma2 if args.sigma2 else [0.3, 0.15]

    gen = np.random.default_rng(args.split_seed)
    sample = _sample_indices(test_idx, args.sample, gen)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    mean_results = []
    for sigma2 in sigmas:
        per_layer = np.zeros(len(grid))
        best_layers = []
        heur_layers = []
        for j, idx in enumerate(sample):
            clean = images[idx]
            noisy = evaluation.add_noise(clean, sigma2, args.noise_seed + j)
            res = evaluation.denoise(noisy, pre, model, clean_ref=clean,
                                     sigma2_hint=sigma2, layer_grid=grid)
            per_layer += np.asarray(res.psnr_db)
            best_layers.append(res.best_layer)
            heur_layers.append(res.heuristic_layer)
        per_layer /= len(sample)
        best_pos = int(np.argmax(per_layer))
        heur = int(np.median(heur_layers))
        mean_results.append(evaluation.DenoiseResult(
            noise_variance=sigma2, layer_grid=grid, psnr_db=list(per_layer),
            best_layer=grid[best_pos], best_psnr_db=float(per_layer[best_pos]),
            heuristic_layer=heur, heuristic_psnr_db=None))
        for pos, l in enumerate(grid):
            rows.append((sigma2, l, per_layer[pos], pos == best_pos, l == heur))
        print(f"sigma2={sigma2:g}: mean best layer {grid[best_pos]} "
              f"({per_layer[best_pos]:.2f} dB over {len(sample)} images), "
              f"heuristic layer {heur}")
    csv_path = out / "denoise.csv"
    evaluation.write_denoise_csv(csv_path, rows)
    fig_path = out / "denoise.png"
    figures.render_denoise_curves(fig_path, mean_results)
    _write_manifest(out / "denoise.manifest.json", "denoise", {
        "input": str(args.input), "output_dir": str(args.output_dir),
        "subbands": args.subbands, "layers": args.layers,
        "codewords": args.codewords, "model_seed": args.model_seed,
        "split_fraction": args.split_fraction, "split_seed": args.split_seed,
        "subject_regex": args.subject_regex, "sample": args.sample,
        "sigma2": sigmas, "noise_seed": args.noise_seed, "layer_grid": grid,
    }, [str(csv_path), str(fig_path)], codec.model_hash(pre, model))
    return 0


def cmd_synth(args) -> int:
    train_imgs, test_imgs = evaluation.synth_corpus(
        args.train, args.test, args.height, args.width, args.decay_alpha,
        args.seed, pixel_sd=args.pixel_sd, scale_spread=args.scale_spread)
    out = Path(args.output_dir)
    written = []
    for split, members in (("train", train_imgs), ("test", test_imgs)):
        d = out / split
        d.mkdir(parents=True, exist_ok=True)
        for i, img in enumerate(members):
            path = d / f"{split}_{i:05d}.pgm"
            pgm.write_pgm(path, img, maxval=65535)
            written.append(str(path))
    print(f"wrote {len(train_imgs)} train / {len(test_imgs)} test images "
          f"({args.height}x{args.width}) to {out}")
    _write_manifest(out / "manifest.json", "synth", {
        "output_dir": str(args.output_dir), "train": args.train,
        "test": args.test, "height": args.height, "width": args.width,
        "decay_alpha": args.decay_alpha, "seed": args.seed,
        "pixel_sd": args.pixel_sd, "scale_spread": args.scale_spread,
    }, written)
    return 0


def _add_train_flags(p) -> None:
    p.add_argument("--subbands", "-M", type=int, default=16,
                   help="sub-band count, must divide H*W (default 16)")
    p.add_argument("--layers", "-L", type=int, required=True)
    p.add_argument("--codewords", "-K", required=True,
                   help="codewords per layer: one integer or a comma list")
    p.add_argument("--model-seed", type=int, default=0)


def _add_split_flags(p) -> None:
    p.add_argument("--split-fraction", type=float, default=0.5)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--subject-regex", default=None,
                   help="group filenames by this pattern's first capture group "
                        "and split within each group")
    p.add_argument("--sample", type=int, default=20,
                   help="test images evaluated (default 20)")


def _add_grid_flags(p) -> None:
    p.add_argument("--layer-grid", default=None,
                   help="comma list of layer prefixes (default geometric 1,2,4,...)")
    p.add_argument("--dense-grid", action="store_true",
                   help="evaluate every layer prefix 1..L")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rrq",
        description="Residual quantization codec with water-filling regularized codebooks")
    parser.add_argument("--version", action="version", version=f"rrq {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("train", help="fit a model on a directory of PGM images")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="model file (.rrqm)")
    _add_train_flags(p)
    p.set_defaults(run=cmd_train)

    p = sub.add_parser("compress", help="encode PGM images into a bitstream")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="bitstream file (.rrq)")
    p.add_argument("--layers-used", type=int, default=None,
                   help="truncate codes to this many layers (default: model depth)")
    p.set_defaults(run=cmd_compress)

    p = sub.add_parser("decompress", help="reconstruct PGM images from a bitstream")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--prefix", default="img_")
    p.add_argument("--maxval", type=int, choices=(255, 65535), default=255)
    p.set_defaults(run=cmd_decompress)

    p = sub.add_parser("eval-dr", help="train on a split and sweep the D-R curve")
    p.add_argument("--input", required=True)
    p.add_argument("--output-dir", required=True)
    _add_train_flags(p)
    _add_split_flags(p)
    _add_grid_flags(p)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(run=cmd_eval_dr)

    p = sub.add_parser("denoise", help="noisy-input reconstruction experiment")
    p.add_argument("--input", required=True)
    p.add_argument("--output-dir", required=True)
    _add_train_flags(p)
    _add_split_flags(p)
    _add_grid_flags(p)
    p.add_argument("--sigma2", type=float, action="append", default=None,
                   help="noise variance, repeatable (default 0.3 and 0.15)")
    p.add_argument("--noise-seed", type=int, default=0)
    p.set_defaults(run=cmd_denoise)

    p = sub.add_parser("synth", help="generate the synthetic PGM corpus")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--train", type=int, default=200)
    p.add_argument("--test", type=int, default=200)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--decay-alpha", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pixel-sd", type=float, default=0.3,
                   help="nominal per-pixel standard deviation before clamping")
    p.add_argument("--scale-spread", type=float, default=1.0,
                   help="log-sd of the per-image lognormal brightness gain")
    p.set_defaults(run=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.run(args)
    except codec.IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return 3
    except (UsageError, codec.CodecError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
