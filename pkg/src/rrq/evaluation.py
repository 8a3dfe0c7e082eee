"""Experiment harness: quality metrics, noise, sweeps, denoising, synthesis.

Distortion-rate sweeps truncate the layer prefix of one trained model, so a
whole curve costs one encode plus incremental decodes. Denoising feeds a
noisy image through the clean-trained model and picks the truncation depth:
an oracle choice (max PSNR against the clean reference) and a heuristic one
(deepest layer whose training residual energy still exceeds the noise
energy) are reported side by side. The heuristic needs no clean image but
trusts the caller's noise estimate; it is labeled in CSV output so the two
are never conflated.
"""

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import codec, preprocess, quantizer


def mse(a, b) -> float:
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {y.shape}")
    return float(np.mean((x - y) ** 2))


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for unit-peak images; inf when equal."""
    err = mse(a, b)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / err)


def add_noise(image, sigma2: float, seed: int) -> np.ndarray:
    """Add i.i.d. zero-mean Gaussian pixel noise, then clamp to [0, 1].

    Clamping (rather than re-normalizing) matches how noisy inputs are
    displayed and fed to the codec; it biases the effective noise variance
    downward at high sigma2.
    """
    if sigma2 < 0:
        raise ValueError(f"noise variance must be non-negative, got {sigma2}")
    img = np.asarray(image, dtype=np.float64)
    if sigma2 == 0.0:
        return img.copy()
    noise = np.random.default_rng(seed).normal(0.0, math.sqrt(sigma2), size=img.shape)
    return np.clip(img + noise, 0.0, 1.0)


@dataclass(frozen=True)
class RateDistortionPoint:
    layers_used: int
    bits_per_pixel: float
    mse: float
    psnr_db: float


def geometric_grid(depth: int) -> list[int]:
    """Layer prefixes {1, 2, 4, ...} up to and including the model depth."""
    grid = []
    p = 1
    while p < depth:
        grid.append(p)
        p *= 2
    grid.append(depth)
    return grid


def _prefix_reconstructions(images, pre, model, grid, threads: int = 1):
    """Yield (layers_used, reconstructed image stack) for each grid entry."""
    stack = np.asarray([np.asarray(im, dtype=np.float64) for im in images])
    if sorted(grid) != list(grid):
        raise ValueError("layer grid must be sorted ascending")
    if grid and grid[-1] > model.depth:
        raise ValueError(f"grid entry {grid[-1]} exceeds model depth {model.depth}")
    vecs = preprocess.forward_batch(stack, pre)
    codes = quantizer.encode_batch(vecs, model, grid[-1] if grid else 0)
    acc = np.zeros_like(vecs)
    grid_pos = 0
    for l in range(0, (grid[-1] if grid else 0) + 1):
        if l > 0:
            book = model.layer_codebook(l)
            acc[:, book.active_idx] += book.values[codes[:, l - 1]]
        while grid_pos < len(grid) and grid[grid_pos] == l:
            if threads > 1:
                with ThreadPoolExecutor(threads) as pool:
                    rows = list(pool.map(lambda v: preprocess.inverse(v, pre), acc))
                recon = np.asarray(rows)
            else:
                recon = preprocess.inverse_batch(acc, pre)
            yield l, recon
            grid_pos += 1


def dr_sweep(images, pre, model, layer_grid, threads: int = 1) -> list[RateDistortionPoint]:
    """One rate-distortion point per grid entry, MSE averaged over images.

    Distortion is measured in the pixel domain against the original images
    after the full inverse transform.
    """
    stack = np.asarray([np.asarray(im, dtype=np.float64) for im in images])
    grid = list(layer_grid)
    points = []
    for layers_used, recon in _prefix_reconstructions(stack, pre, model, grid, threads):
        err = float(np.mean((recon - stack) ** 2))
        h, w = stack.shape[1:]
        bpp = codec.payload_bits(model, layers_used) / float(h * w)
        points.append(RateDistortionPoint(
            layers_used=layers_used, bits_per_pixel=bpp, mse=err,
            psnr_db=math.inf if err == 0.0 else 10.0 * math.log10(1.0 / err)))
    return points


@dataclass(frozen=True)
class DenoiseResult:
    noise_variance: float
    layer_grid: list
    psnr_db: list  # vs clean reference, one entry per grid layer; empty without a reference
    best_layer: int | None
    best_psnr_db: float | None
    heuristic_layer: int | None
    heuristic_psnr_db: float | None


def heuristic_layer(model, sigma2: float) -> int:
    """Deepest layer whose training residual energy exceeds the noise energy.

    Layer l sees residual variance totals from training; once that total
    falls below n * sigma2, deeper layers mostly chase noise. Returns 0 when
    even the first layer is below the noise floor.
    """
    best = 0
    for spec in model.layers:
        if spec.train_variance_total > model.dim * sigma2:
            best = spec.index
    return best


def denoise(noisy_image, pre, model, clean_ref=None, sigma2_hint: float | None = None,
            layer_grid=None) -> DenoiseResult:
    """Reconstruct a noisy image at several depths and pick the best one."""
    grid = list(layer_grid) if layer_grid is not None else geometric_grid(model.depth)
    psnrs = []
    best_l = best_p = None
    heur_l = heur_p = None
    if sigma2_hint is not None:
        heur_l = heuristic_layer(model, sigma2_hint)

    clean = None if clean_ref is None else np.asarray(clean_ref, dtype=np.float64)
    eval_grid = sorted(set(grid) | ({heur_l} if heur_l not in (None, 0) else set()))
    recons = {}
    for layers_used, recon in _prefix_reconstructions([noisy_image], pre, model, eval_grid):
        recons[layers_used] = recon[0]
    if clean is not None:
        psnrs = [psnr(recons[l], clean) for l in grid]
        best_pos = int(np.argmax(psnrs))
        best_l, best_p = grid[best_pos], psnrs[best_pos]
        if heur_l is not None:
            heur_p = psnr(recons[heur_l], clean) if heur_l > 0 else psnr(
                preprocess.inverse(np.zeros(model.dim), pre), clean)
    return DenoiseResult(
        noise_variance=float(sigma2_hint) if sigma2_hint is not None else math.nan,
        layer_grid=grid, psnr_db=psnrs,
        best_layer=best_l, best_psnr_db=best_p,
        heuristic_layer=heur_l, heuristic_psnr_db=heur_p)


def synth_profile(n: int, decay_alpha: float) -> np.ndarray:
    """Variance profile sigma_j^2 proportional to j^-alpha, j = 1..n."""
    j = np.arange(1, n + 1, dtype=np.float64)
    return j ** (-decay_alpha)


def synth_corpus(n_train: int, n_test: int, height: int, width: int,
                 decay_alpha: float, seed: int, pixel_sd: float = 0.3,
                 scale_spread: float = 1.0) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Synthetic grayscale corpus with shared cross-image structure.

    Spectral coefficients are drawn per image from a decaying variance
    profile sigma_j^2 proportional to j^-decay_alpha and pushed through one
    fixed random block-orthonormal basis (blocks of up to 16 coefficients),
    inverse zig-zag, and inverse DCT - so train and test share exactly the
    kind of sub-band covariance the transform learner is built to find.

    Each image also gets a mean-one lognormal brightness gain with log-sd
    scale_spread, mimicking per-exposure illumination swings, and is then
    clamped to [0, 1] around a mid-gray 0.5.  The profile is scaled so the
    nominal per-pixel standard deviation is pixel_sd before the gain and
    the clamp; both shrink the realized variance, so treat pixel_sd as a
    knob, not a promise.
    """
    if min(n_train, n_test, height, width) < 1:
        raise ValueError("corpus sizes and geometry must be positive")
    if scale_spread < 0:
        raise ValueError("scale_spread must be non-negative")
    n = height * width
    profile = synth_profile(n, decay_alpha)
    profile *= n * pixel_sd**2 / profile.sum()
    sigma = np.sqrt(profile)

    gen = np.random.default_rng(seed)
    blk = next(b for b in (16, 8, 4, 2, 1) if n % b == 0)
    blocks = n // blk
    bases = [np.linalg.qr(gen.standard_normal((blk, blk)))[0] for _ in range(blocks)]

    def make(count):
        z = gen.standard_normal((count, n))
        gain = gen.lognormal(0.0, scale_spread, size=(count, 1))
        coeffs = z * (gain / math.sqrt(math.exp(scale_spread**2))) * sigma
        spec = np.empty_like(coeffs)
        for b in range(blocks):
            seg = coeffs[:, b * blk:(b + 1) * blk]
            spec[:, b * blk:(b + 1) * blk] = seg @ bases[b].T
        images = []
        for row in spec:
            img = preprocess.dct2_inverse(preprocess.inverse_zigzag(row, height, width))
            images.append(np.clip(img + 0.5, 0.0, 1.0))
        return images

    return make(n_train), make(n_test)


# ---------------------------------------------------------------------------
# CSV emission


def write_dr_csv(path, rows) -> None:
    """rows: iterables of (split, RateDistortionPoint)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["split", "layers", "bpp", "mse", "psnr_db"])
        for split, pt in rows:
            writer.writerow([split, pt.layers_used, f"{pt.bits_per_pixel:.10g}",
                             f"{pt.mse:.10g}", f"{pt.psnr_db:.6f}"])


def write_denoise_csv(path, rows) -> None:
    """rows: (sigma2, layers, psnr_db, is_best, is_heuristic) tuples."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sigma2", "layers", "psnr_db", "is_best", "is_heuristic"])
        for sigma2, layers, value, is_best, is_heur in rows:
            writer.writerow([f"{sigma2:g}", layers, f"{value:.6f}",
                             int(is_best), int(is_heur)])
