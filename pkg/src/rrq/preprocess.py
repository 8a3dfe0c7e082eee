"""Whole-image decorrelating transform: 2D-DCT, zig-zag, sub-band PCA.

Images are mapped to length-n vectors (n = H*W) whose dimensions are
approximately uncorrelated with strongly decaying variance: an orthonormal
2D-DCT concentrates energy at low frequencies, the zig-zag scan orders
coefficients by frequency, and the vector is split into M equal contiguous
sub-bands that each get their own full-rank PCA rotation learned from the
training set. Fitting M small rotations instead of one n x n rotation
keeps the parameter count at M*(n/M)^2, which is what lets the transform
generalize from train to test.

Every stage is orthonormal, so the forward map preserves energy and the
inverse map is exact up to rounding. All transforms are pure functions of
an immutable PreprocessModel.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=32)
def _dct_matrix(size: int) -> np.ndarray:
    # orthonormal DCT-II basis; row k is the k-th basis vector
    k = np.arange(size).reshape(-1, 1)
    x = np.arange(size).reshape(1, -1)
    mat = np.cos(np.pi * (2 * x + 1) * k / (2 * size)) * np.sqrt(2.0 / size)
    mat[0, :] /= np.sqrt(2.0)
    return mat


def dct2_forward(image: np.ndarray) -> np.ndarray:
    """Separable orthonormal 2D DCT-II of an H x W array."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    h, w = img.shape
    return _dct_matrix(h) @ img @ _dct_matrix(w).T


def dct2_inverse(coeffs: np.ndarray) -> np.ndarray:
    """Exact inverse of dct2_forward. Output is not clamped."""
    c = np.asarray(coeffs, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError(f"expected a 2-D coefficient array, got shape {c.shape}")
    h, w = c.shape
    return _dct_matrix(h).T @ c @ _dct_matrix(w)


@lru_cache(maxsize=32)
def _zigzag_perm(h: int, w: int) -> np.ndarray:
    """Flat indices (row-major) in zig-zag traversal order.

    Anti-diagonal d runs 0..h+w-2. Even diagonals are walked from the
    lower-left cell up-right, odd ones from the upper-right cell down-left
    (the JPEG 8x8 convention extended to rectangles).
    """
    order = np.empty(h * w, dtype=np.int64)
    pos = 0
    for d in range(h + w - 1):
        if d % 2 == 0:
            r = min(d, h - 1)
            c = d - r
            while r >= 0 and c < w:
                order[pos] = r * w + c
                pos += 1
                r -= 1
                c += 1
        else:
            c = min(d, w - 1)
            r = d - c
            while c >= 0 and r < h:
                order[pos] = r * w + c
                pos += 1
                r += 1
                c -= 1
    return order


def zigzag(matrix: np.ndarray) -> np.ndarray:
    m = np.asarray(matrix)
    h, w = m.shape
    return m.reshape(-1)[_zigzag_perm(h, w)]


def inverse_zigzag(vector: np.ndarray, h: int, w: int) -> np.ndarray:
    v = np.asarray(vector)
    if v.shape != (h * w,):
        raise ValueError(f"vector length {v.shape} does not match {h}x{w}")
    out = np.empty(h * w, dtype=v.dtype)
    out[_zigzag_perm(h, w)] = v
    return out.reshape(h, w)


@dataclass(frozen=True)
class PreprocessModel:
    """Learned decorrelating transform for one image geometry.

    means[m] is the training mean of sub-band m and rotations[m] its PCA
    eigenvector matrix (columns sorted by descending eigenvalue, each
    column's largest-magnitude entry made positive, lowest index on ties
    so refits are bit-reproducible).
    """

    height: int
    width: int
    subbands: int
    means: list  # M arrays of length n/M
    rotations: list  # M orthonormal (n/M, n/M) arrays

    @property
    def dim(self) -> int:
        return self.height * self.width

    @property
    def subband_length(self) -> int:
        return self.dim // self.subbands


def _check_image(image: np.ndarray, model: PreprocessModel | None = None) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    if model is not None and img.shape != (model.height, model.width):
        raise ValueError(
            f"image shape {img.shape} does not match model geometry "
            f"({model.height}, {model.width})")
    return img


def _spectra(images: np.ndarray) -> np.ndarray:
    """Stack of zig-zag DCT vectors, one row per image."""
    n_img, h, w = images.shape
    bh, bw = _dct_matrix(h), _dct_matrix(w)
    coeffs = np.einsum("hi,nij,wj->nhw", bh, images, bw, optimize=True)
    return coeffs.reshape(n_img, h * w)[:, _zigzag_perm(h, w)]


def fit(images, subbands: int) -> PreprocessModel:
    """Learn per-sub-band means and PCA rotations from a training set.

    Covariances are population-normalized (divide by N). Eigenvectors come
    from a symmetric eigendecomposition; if the resulting matrix fails the
    1e-8 orthonormality check it is re-orthonormalized by a QR pass.
    """
    arrays = [np.asarray(im, dtype=np.float64) for im in images]
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1 or arrays[0].ndim != 2:
        raise ValueError(f"training images must share one 2-D geometry, saw {sorted(shapes)}")
    stack = np.asarray(arrays)
    n_img, h, w = stack.shape
    if n_img < 2:
        raise ValueError(f"need at least 2 training images, got {n_img}")
    n = h * w
    if subbands < 1 or n % subbands != 0:
        raise ValueError(f"subband count {subbands} does not divide n={n}")

    x = _spectra(stack)
    blk = n // subbands
    means, rotations = [], []
    for m in range(subbands):
        seg = x[:, m * blk:(m + 1) * blk]
        mu = seg.mean(axis=0)
        centered = seg - mu
        cov = centered.T @ centered / n_img
        eigvals, eigvecs = np.linalg.eigh(cov)
        order = np.argsort(-eigvals, kind="stable")
        rot = eigvecs[:, order]
        # sign convention: largest-magnitude entry of each column positive
        anchor = np.argmax(np.abs(rot), axis=0)
        flip = rot[anchor, np.arange(blk)] < 0
        rot[:, flip] *= -1.0
        if np.max(np.abs(rot.T @ rot - np.eye(blk))) > 1e-8:
            rot, _ = np.linalg.qr(rot)
        means.append(mu)
        rotations.append(rot)
    return PreprocessModel(height=h, width=w, subbands=subbands,
                           means=means, rotations=rotations)


def forward(image, model: PreprocessModel) -> np.ndarray:
    """Image -> decorrelated length-n vector."""
    img = _check_image(image, model)
    return forward_batch(img[None, :, :], model)[0]


def forward_batch(images: np.ndarray, model: PreprocessModel) -> np.ndarray:
    stack = np.asarray(images, dtype=np.float64)
    if stack.ndim != 3 or stack.shape[1:] != (model.height, model.width):
        raise ValueError(
            f"image stack shape {stack.shape} does not match model geometry")
    x = _spectra(stack)
    blk = model.subband_length
    out = np.empty_like(x)
    for m in range(model.subbands):
        seg = x[:, m * blk:(m + 1) * blk] - model.means[m]
        out[:, m * blk:(m + 1) * blk] = seg @ model.rotations[m]
    return out


def inverse(vector, model: PreprocessModel) -> np.ndarray:
    """Decorrelated vector -> image, clamped to [0, 1]."""
    v = np.asarray(vector, dtype=np.float64)
    if v.shape != (model.dim,):
        raise ValueError(f"vector length {v.shape} does not match n={model.dim}")
    return inverse_batch(v[None, :], model)[0]


def inverse_batch(vectors: np.ndarray, model: PreprocessModel) -> np.ndarray:
    vs = np.asarray(vectors, dtype=np.float64)
    if vs.ndim != 2 or vs.shape[1] != model.dim:
        raise ValueError(f"vector stack shape {vs.shape} does not match n={model.dim}")
    blk = model.subband_length
    spec = np.empty_like(vs)
    for m in range(model.subbands):
        seg = vs[:, m * blk:(m + 1) * blk] @ model.rotations[m].T
        spec[:, m * blk:(m + 1) * blk] = seg + model.means[m]
    h, w = model.height, model.width
    flat = np.empty_like(spec)
    flat[:, _zigzag_perm(h, w)] = spec
    coeffs = flat.reshape(-1, h, w)
    bh, bw = _dct_matrix(h), _dct_matrix(w)
    images = np.einsum("ih,nij,jw->nhw", bh, coeffs, bw, optimize=True)
    return np.clip(images, 0.0, 1.0)
