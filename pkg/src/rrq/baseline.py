"""Unregularized residual quantization baseline (per-layer k-means).

Same layered encode/decode interface as the regularized quantizer, but
each layer's codebook is learned with Lloyd's algorithm (k-means++ start)
on the training residuals and stored densely. Serves as the comparison
point for generalization experiments: it fits the training set much more
tightly and transfers correspondingly worse.
"""

from dataclasses import dataclass

import numpy as np

from . import quantizer


@dataclass
class KmeansRqModel:
    dim: int
    seed: int
    codebooks: list  # dense (K, n) arrays, layer order

    @property
    def depth(self) -> int:
        return len(self.codebooks)

    def layer_codebook(self, layer_index: int) -> quantizer.Codebook:
        values = self.codebooks[layer_index - 1]
        return quantizer.Codebook(
            active_idx=np.arange(self.dim, dtype=np.uint32),
            values=values,
            norms=np.einsum("kj,kj->k", values, values),
        )

    @property
    def layers(self):
        return [_DenseLayer(values.shape[0]) for values in self.codebooks]


@dataclass(frozen=True)
class _DenseLayer:
    codewords: int


def _kmeans_pp_init(x: np.ndarray, k: int, gen: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[gen.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[i:] = x[gen.integers(n, size=k - i)]
            break
        centers[i] = x[gen.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((x - centers[i]) ** 2, axis=1))
    return centers


def _assign(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    norms = np.einsum("kj,kj->k", centers, centers)
    return np.argmin(norms[None, :] - 2.0 * (x @ centers.T), axis=1)


def lloyd(x: np.ndarray, k: int, gen: np.random.Generator,
          max_iters: int = 50, rel_tol: float = 1e-6) -> tuple[np.ndarray, int]:
    """Lloyd iterations until the relative distortion change drops below rel_tol.

    An emptied cluster is re-seeded to the point currently farthest from its
    assigned center. Returns the centers and the number of re-seeds taken.
    """
    centers = _kmeans_pp_init(x, k, gen)
    prev = np.inf
    reseeds = 0
    for _ in range(max_iters):
        labels = _assign(x, centers)
        resid = x - centers[labels]
        distortion = float(np.einsum("ij,ij->", resid, resid))
        for c in range(k):
            mask = labels == c
            if np.any(mask):
                centers[c] = x[mask].mean(axis=0)
            else:
                far = np.argmax(np.sum(resid ** 2, axis=1))
                centers[c] = x[far]
                resid[far] = 0.0
                reseeds += 1
        if prev - distortion <= rel_tol * max(distortion, 1e-300):
            break
        prev = distortion
    return centers, reseeds


def train(x, layers: int, codewords, seed: int, max_iters: int = 50):
    """Layered k-means residual quantizer; mirrors the regularized trainer."""
    vecs = np.asarray(x, dtype=np.float64)
    if vecs.ndim != 2:
        raise ValueError(f"expected an (N, n) training matrix, got shape {vecs.shape}")
    if vecs.shape[0] < 2:
        raise ValueError(f"need at least 2 training vectors, got {vecs.shape[0]}")
    per_layer_k = [int(codewords)] * layers if np.isscalar(codewords) else [int(k) for k in codewords]
    if len(per_layer_k) != layers:
        raise ValueError(f"expected {layers} per-layer codeword counts, got {len(per_layer_k)}")

    gen = np.random.default_rng(seed)
    model = KmeansRqModel(dim=vecs.shape[1], seed=int(seed), codebooks=[])
    resid = vecs.copy()
    mean_sq = []
    for l in range(layers):
        k = min(per_layer_k[l], resid.shape[0])
        centers, _ = lloyd(resid, k, gen, max_iters=max_iters)
        model.codebooks.append(centers)
        labels = _assign(resid, centers)
        resid = resid - centers[labels]
        mean_sq.append(float(np.mean(np.sum(resid ** 2, axis=1))))
    return model, np.asarray(mean_sq)
