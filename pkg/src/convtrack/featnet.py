"""Simple-cell feature maps, the stacked complex-cell vector and its sparsification.

Convolution here means valid-mode cross-correlation (no filter flip)::

    out[r, c] = sum_{u,v} filt[u, v] * img[r + u, c + v]

A complex-cell vector stacks ``d`` maps of side ``n - w + 1`` map-major:
all of map 0 in raster order, then map 1, and so on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sp_fft

from .filterbank import FilterBank
from .imagecore import NORM_EPS, DimensionError, normalize_rows, patch_matrix


FLAT_RTOL = 1e-6


class InvalidThresholdError(ValueError):
    pass


@dataclass
class ComplexRep:
    values: np.ndarray
    sparse: bool = False

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ComplexRep):
            return NotImplemented
        return self.sparse == other.sparse and np.array_equal(self.values, other.values)


def _check_pair(img, filt):
    img = np.asarray(img, dtype=np.float64)
    filt = np.asarray(filt, dtype=np.float64)
    if img.ndim != 2 or filt.ndim != 2:
        raise DimensionError(f"expected 2D image and filter, got {img.shape} and {filt.shape}")
    if filt.shape[0] > img.shape[0] or filt.shape[1] > img.shape[1]:
        raise DimensionError(f"filter {filt.shape} larger than image {img.shape}")
    return img, filt


def convolve_valid(img, filt) -> np.ndarray:
    """Direct valid-mode cross-correlation."""
    img, filt = _check_pair(img, filt)
    fh, fw = filt.shape
    out_h, out_w = img.shape[0] - fh + 1, img.shape[1] - fw + 1
    out = np.zeros((out_h, out_w))
    for u in range(fh):
        for v in range(fw):
            out += filt[u, v] * img[u:u + out_h, v:v + out_w]
    return out


def convolve_valid_fast(img, filt) -> np.ndarray:
    """Valid-mode cross-correlation through a zero-padded real FFT product."""
    img, filt = _check_pair(img, filt)
    fh, fw = filt.shape
    shape = (img.shape[0] + fh - 1, img.shape[1] + fw - 1)
    shape = tuple(sp_fft.next_fast_len(s, real=True) for s in shape)
    # correlation == convolution with the flipped kernel
    prod = sp_fft.rfft2(img, shape) * sp_fft.rfft2(filt[::-1, ::-1], shape)
    full = sp_fft.irfft2(prod, shape)
    return full[fh - 1:img.shape[0], fw - 1:img.shape[1]].copy()


def simple_maps(img, bank: FilterBank, fast: bool = False) -> list[np.ndarray]:
    """Feature maps ``(F_o - F_b) * img`` for every filter index."""
    img = np.asarray(img, dtype=np.float64)
    if bank.w > min(img.shape):
        raise DimensionError(f"filters of side {bank.w} do not fit image {img.shape}")
    conv = convolve_valid_fast if fast else convolve_valid
    return [conv(img, f) for f in bank.difference_filters()]


def local_norm_map(img, w: int) -> np.ndarray:
    """l2 norm of every mean-subtracted ``w x w`` window, from box sums.

    For a zero-mean filter ``f`` the response on the normalized patch at
    ``(r, c)`` is ``conv(img, f)[r, c] / local_norm_map(img, w)[r, c]``.
    """
    img = np.asarray(img, dtype=np.float64)
    box = np.ones((w, w))
    sums = convolve_valid(img, box)
    sq = convolve_valid(img * img, box)
    return np.sqrt(np.maximum(sq - sums * sums / (w * w), 0.0))


def stack_complex(maps) -> ComplexRep:
    maps = [np.asarray(m, dtype=np.float64) for m in maps]
    if not maps:
        raise DimensionError("no maps to stack")
    side = maps[0].shape
    if any(m.shape != side for m in maps) or len(side) != 2 or side[0] != side[1]:
        raise DimensionError(f"maps must share one square shape, got {[m.shape for m in maps]}")
    return ComplexRep(np.concatenate([m.ravel() for m in maps]), sparse=False)


def adaptive_lambda(rep: ComplexRep | np.ndarray, signed: bool = False) -> float:
    """Shrinkage threshold: the lower median of ``|values|``.

    ``signed=True`` takes the lower median of the raw values instead and
    clamps it at zero, since a negative threshold is not a shrinkage.
    """
    values = rep.values if isinstance(rep, ComplexRep) else np.asarray(rep, dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot take the median of an empty vector")
    src = values if signed else np.abs(values)
    k = (src.size - 1) // 2
    lam = float(np.partition(src, k)[k])
    return max(lam, 0.0)


def soft_shrink(rep: ComplexRep | np.ndarray, lam: float) -> ComplexRep:
    """``sign(v) * max(0, |v| - lam)``, the minimizer of ``lam*|c|_1 + |c - v|^2 / 2``."""
    if lam < 0:
        raise InvalidThresholdError(f"threshold must be non-negative, got {lam}")
    values = rep.values if isinstance(rep, ComplexRep) else np.asarray(rep, dtype=np.float64)
    shrunk = np.sign(values) * np.maximum(0.0, np.abs(values) - lam)
    return ComplexRep(shrunk, sparse=True)


def candidate_rep(raw: ComplexRep, template: ComplexRep) -> ComplexRep:
    """Mask ``raw`` to the support of ``template``; values are not shrunk."""
    if raw.dim != template.dim:
        raise DimensionError(f"candidate dim {raw.dim} != template dim {template.dim}")
    return ComplexRep(np.where(template.values != 0, raw.values, 0.0), sparse=raw.sparse)


def normalized_maps(img, bank: FilterBank) -> np.ndarray:
    """Responses of the difference filters on every normalized patch of ``img``.

    Returns an ``(l, d)`` array, ``l = (n - w + 1)**2`` in raster order.
    """
    return batch_normalized_maps(np.asarray(img)[None], bank.difference_filters())[0]


def batch_normalized_maps(imgs: np.ndarray, diff_filters: np.ndarray) -> np.ndarray:
    """:func:`normalized_maps` for a ``(K, n, n)`` stack, result ``(K, l, d)``.

    The difference filters must be zero-mean (true for normalized filters
    and their averages), which lets the raw window responses be divided by
    the window norm instead of normalizing each patch explicitly.
    """
    k, w = diff_filters.shape[0], diff_filters.shape[1]
    flat = diff_filters.reshape(k, w * w)
    patches = patch_matrix(imgs, w)
    resp = patches @ flat.T
    sums = patches.sum(axis=-1)
    sq = np.einsum("kli,kli->kl", patches, patches)
    norms = np.sqrt(np.maximum(sq - sums * sums / (w * w), 0.0))
    # box-sum cancellation leaves ~1e-8 relative residue on constant windows
    flat_win = (norms < NORM_EPS) | (norms <= FLAT_RTOL * np.sqrt(sq))
    scale = np.where(flat_win, 0.0, 1.0 / np.where(flat_win, 1.0, norms))
    return resp * scale[..., None]


def maps_to_rep(maps_ld: np.ndarray) -> ComplexRep:
    """Stack an ``(l, d)`` map array in map-major order."""
    return ComplexRep(np.ascontiguousarray(maps_ld.T).ravel(), sparse=False)


def complex_rep(img, bank: FilterBank) -> ComplexRep:
    """Raw (unshrunk) complex-cell vector of a warped image."""
    return maps_to_rep(normalized_maps(img, bank))


def explicit_normalized_maps(img, bank: FilterBank) -> np.ndarray:
    """Slow reference for :func:`normalized_maps`: normalize each patch, then dot."""
    patches = normalize_rows(patch_matrix(img, bank.w)[0])
    return patches @ bank.difference_filters().reshape(bank.d, -1).T
