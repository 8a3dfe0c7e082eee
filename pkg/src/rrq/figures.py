"""Render report figures next to the CSV files the CLI writes.

Uses the Agg backend unconditionally: the CLI runs headless and figures go
straight to PNG files.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def render_dr_curve(path, curves) -> None:
    """Distortion-rate curves, one line per split.

    curves: mapping split name -> list[RateDistortionPoint].
    """
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for split, points in curves.items():
        bpp = [p.bits_per_pixel for p in points]
        err = [p.mse for p in points]
        ax.plot(bpp, err, marker="o", markersize=3.5, label=split)
    ax.set_yscale("log")
    ax.set_xlabel("rate (bits per pixel)")
    ax.set_ylabel("MSE")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_denoise_curves(path, results) -> None:
    """PSNR against truncation depth, one line per noise level.

    results: list of DenoiseResult with populated psnr_db lists.
    """
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for res in results:
        label = f"sigma2={res.noise_variance:g}"
        ax.plot(res.layer_grid, res.psnr_db, marker="o", markersize=3.5, label=label)
        if res.best_layer is not None:
            ax.scatter([res.best_layer], [res.best_psnr_db], marker="*", s=90,
                       zorder=5, color="black")
    ax.set_xlabel("layers used")
    ax.set_ylabel("PSNR (dB)")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
