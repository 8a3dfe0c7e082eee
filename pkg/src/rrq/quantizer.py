"""Multi-layer regularized residual quantization.

Each layer measures the per-dimension variance of the current residuals,
water-fills that profile for a rate budget of log2(K) bits, and draws K
random codewords from a zero-mean Gaussian whose diagonal covariance is
the resulting soft-thresholded variance vector. Residuals are encoded
greedily (nearest codeword per layer) and the quantization error is passed
to the next layer. Because the codeword distribution is learned from the
variance profile rather than the training points themselves, the codebooks
generalize to unseen vectors instead of memorizing the training cloud.

Codebooks are never stored. A layer keeps only (K, gamma, sparse variance
vector, seed) and regenerates its codewords on demand; layers below a
configurable depth are cached. Regeneration is bit-exact across runs, see
rng.GENERATOR_ID.

Residual bookkeeping: layer-p residuals are always computed as
x - (c_1 + ... + c_p) with the codeword sum accumulated layer by layer in
one buffer. decode() performs the identical accumulation, so
x - decode(prefix) reproduces the encoder's residual bit-for-bit.
"""

import threading
from dataclasses import dataclass, field

import numpy as np

from . import rng, waterfill

DEGENERATE_VARIANCE = 1e-15
DEFAULT_CACHE_LAYERS = 64


@dataclass(frozen=True)
class LayerSpec:
    """Everything needed to regenerate one layer's codebook."""

    index: int  # 1-based
    codewords: int  # K
    gamma: float
    active_idx: np.ndarray  # strictly increasing dimension indices
    codeword_variances: np.ndarray  # variances at active_idx, all > 0
    seed: int  # rng.mix(model_seed, index)
    train_variance_total: float  # sum of the residual variance profile this layer was fit on


@dataclass(frozen=True)
class Codebook:
    """One layer's codewords restricted to their active dimensions."""

    active_idx: np.ndarray
    values: np.ndarray  # (K, len(active_idx))
    norms: np.ndarray  # (K,) squared euclidean norms


@dataclass
class RrqModel:
    dim: int
    model_seed: int
    layers: list[LayerSpec]
    preprocess_hash: bytes = b""
    generator_id: str = rng.GENERATOR_ID
    cache_layers: int = DEFAULT_CACHE_LAYERS
    _cache: dict = field(default_factory=dict, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    @property
    def depth(self) -> int:
        return len(self.layers)

    def layer_codebook(self, layer_index: int) -> Codebook:
        """Codebook for a 1-based layer, regenerated or served from cache."""
        cached = self._cache.get(layer_index)
        if cached is not None:
            return cached
        spec = self.layers[layer_index - 1]
        book = _build_codebook(spec)
        if layer_index <= self.cache_layers:
            with self._lock:
                self._cache.setdefault(layer_index, book)
        return book


def _build_codebook(spec: LayerSpec) -> Codebook:
    nnz = spec.active_idx.size
    if nnz == 0:
        values = np.zeros((spec.codewords, 0))
    else:
        seeds = rng.mix_array(spec.seed, np.arange(spec.codewords))
        sigma = np.sqrt(spec.codeword_variances)
        values = rng.normal_matrix(seeds, nnz) * sigma
    norms = np.einsum("kj,kj->k", values, values)
    return Codebook(active_idx=spec.active_idx, values=values, norms=norms)


def generate_codebook(spec: LayerSpec, dim: int) -> np.ndarray:
    """Dense (K, dim) codeword matrix; inactive dimensions are exactly zero."""
    book = _build_codebook(spec)
    dense = np.zeros((spec.codewords, dim))
    dense[:, book.active_idx] = book.values
    return dense


def _check_vectors(x, dim: int) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(f"expected vectors of dimension {dim}, got shape {arr.shape}")
    return arr


def _nearest(residuals_active: np.ndarray, book: Codebook) -> np.ndarray:
    # ||r - c||^2 = ||r||^2 - 2<r,c> + ||c||^2; the ||r||^2 term is constant
    # per row so argmin over norms - 2*scores matches, with ties resolved to
    # the lowest codeword index by argmin's first-occurrence rule.
    if book.active_idx.size == 0:
        return np.zeros(residuals_active.shape[0], dtype=np.int64)
    scores = residuals_active @ book.values.T
    return np.argmin(book.norms[None, :] - 2.0 * scores, axis=1)


def encode_batch(x, model, layers_used: int | None = None) -> np.ndarray:
    """Greedy per-layer nearest-codeword indices, one row per input vector."""
    if layers_used is None:
        layers_used = model.depth
    if not (0 <= layers_used <= model.depth):
        raise ValueError(f"layers_used={layers_used} outside [0, {model.depth}]")
    vecs = _check_vectors(x, model.dim)
    indices = np.zeros((vecs.shape[0], layers_used), dtype=np.int64)
    acc = np.zeros_like(vecs)
    for l in range(1, layers_used + 1):
        book = model.layer_codebook(l)
        resid = vecs[:, book.active_idx] - acc[:, book.active_idx]
        picks = _nearest(resid, book)
        indices[:, l - 1] = picks
        acc[:, book.active_idx] += book.values[picks]
    return indices


def encode(x, model, layers_used: int | None = None) -> np.ndarray:
    """Index code for a single vector (its length-p prefixes are valid codes)."""
    vec = np.asarray(x, dtype=np.float64)
    return encode_batch(vec[None, :], model, layers_used)[0]


def decode_batch(indices, model) -> np.ndarray:
    codes = np.asarray(indices, dtype=np.int64)
    if codes.ndim != 2:
        raise ValueError(f"expected an index matrix, got shape {codes.shape}")
    if codes.shape[1] > model.depth:
        raise ValueError(f"code has {codes.shape[1]} layers, model has {model.depth}")
    acc = np.zeros((codes.shape[0], model.dim))
    for l in range(1, codes.shape[1] + 1):
        book = model.layer_codebook(l)
        col = codes[:, l - 1]
        k = model.layers[l - 1].codewords
        if np.any((col < 0) | (col >= k)):
            raise ValueError(f"layer {l} index out of range [0, {k})")
        acc[:, book.active_idx] += book.values[col]
    return acc


def decode(indices, model) -> np.ndarray:
    """Sum of the indexed codewords over a (possibly truncated) layer prefix."""
    codes = np.asarray(indices, dtype=np.int64)
    return decode_batch(codes[None, :], model)[0]


@dataclass(frozen=True)
class TrainingReport:
    """Per-layer training telemetry (layer l entries are at position l-1)."""

    variance_totals: np.ndarray  # profile total seen by each layer
    mean_sq_residual: np.ndarray  # mean ||residual||^2 after each layer
    truncated: bool


def train(x, layers: int, codewords, model_seed: int,
          preprocess_hash: bytes = b"",
          cache_layers: int = DEFAULT_CACHE_LAYERS) -> tuple[RrqModel, TrainingReport]:
    """Fit an RrqModel on decorrelated training vectors.

    codewords may be an int (constant K) or a length-`layers` sequence.
    Training stops early with a truncated model if the residual variance
    profile drops to (numerical) zero before the requested depth.
    """
    vecs = np.asarray(x, dtype=np.float64)
    if vecs.ndim != 2:
        raise ValueError(f"expected an (N, n) training matrix, got shape {vecs.shape}")
    n_vec, dim = vecs.shape
    if n_vec < 2:
        raise ValueError(f"need at least 2 training vectors, got {n_vec}")
    if layers < 1:
        raise ValueError(f"layer count must be >= 1, got {layers}")
    per_layer_k = [int(codewords)] * layers if np.isscalar(codewords) else [int(k) for k in codewords]
    if len(per_layer_k) != layers:
        raise ValueError(f"expected {layers} per-layer codeword counts, got {len(per_layer_k)}")
    if any(k < 2 for k in per_layer_k):
        raise ValueError("every layer needs at least 2 codewords")

    model = RrqModel(dim=dim, model_seed=int(model_seed), layers=[],
                     preprocess_hash=preprocess_hash, cache_layers=cache_layers)
    acc = np.zeros_like(vecs)
    totals, mean_sq = [], []
    truncated = False
    for l in range(1, layers + 1):
        resid = vecs - acc
        profile = resid.var(axis=0)
        total = float(profile.sum())
        if not np.any(profile > DEGENERATE_VARIANCE):
            truncated = True
            break
        sol = waterfill.solve_for_rate(profile, float(np.log2(per_layer_k[l - 1])))
        active = np.flatnonzero(sol.codeword_variances > 0)
        spec = LayerSpec(
            index=l,
            codewords=per_layer_k[l - 1],
            gamma=sol.gamma,
            active_idx=active.astype(np.uint32),
            codeword_variances=sol.codeword_variances[active],
            seed=rng.mix(model_seed, l),
            train_variance_total=total,
        )
        model.layers.append(spec)
        book = model.layer_codebook(l)
        picks = _nearest(resid[:, book.active_idx], book)
        acc[:, book.active_idx] += book.values[picks]
        totals.append(total)
        mean_sq.append(float(np.mean(np.sum((vecs - acc) ** 2, axis=1))))
    report = TrainingReport(variance_totals=np.asarray(totals),
                            mean_sq_residual=np.asarray(mean_sq),
                            truncated=truncated)
    return model, report
