"""Local wavelet spectral matrix estimation.

Pipeline: raw wavelet periodogram (rank-one outer products of NDWT
coefficient vectors), Daniell smoothing over time, bias correction by the
inverted scale inner-product matrix, and eigenvalue-floor regularization.

Correction follows smoothing; even smoothing widths are rounded up to the
next odd integer because the window is centered, and the effective width
is recorded in the estimate metadata.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .wavelet import (AutocorrWavelet, InnerProductMatrix, WaveletSystem,
                      autocorr, build_system, inner_product_matrix, ndwt)


class WidthTooLarge(ValueError):
    """Smoothing window wider than the series."""


@dataclass(frozen=True)
class SpectralEstimate:
    """A (J, T, N, N) spectral tensor plus pipeline metadata."""

    data: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def levels(self) -> int:
        return self.data.shape[0]


def raw_periodogram(x: np.ndarray, system: WaveletSystem,
                    levels: int | None = None) -> SpectralEstimate:
    """I_jt = d_j[t] d_j[t]': symmetric PSD, rank <= 1 per slice."""
    d = ndwt(x, system, levels=levels)
    data = np.einsum("jtn,jtm->jtnm", d, d)
    meta = {"family": system.family, "levels": int(data.shape[0]),
            "width": None, "corrected": False, "floor": None}
    return SpectralEstimate(data=data, meta=meta)


def effective_width(width: int) -> int:
    """Centered windows need odd length; even widths round up."""
    width = int(width)
    if width < 1:
        raise ValueError("width must be >= 1")
    return width if width % 2 == 1 else width + 1


def smooth(est: SpectralEstimate, width: int) -> SpectralEstimate:
    """Centered circular moving average along time, entrywise."""
    w = effective_width(width)
    T = est.data.shape[1]
    if w > T:
        raise WidthTooLarge(f"width {w} exceeds series length {T}")
    if w == 1:
        return replace(est, meta={**est.meta, "width": 1})
    half = w // 2
    idx = (np.arange(T)[:, None] + np.arange(-half, half + 1)[None, :]) % T
    data = est.data[:, idx].mean(axis=2)
    return SpectralEstimate(data=data, meta={**est.meta, "width": w})


def bias_correct(est: SpectralEstimate, ipm: InnerProductMatrix) -> SpectralEstimate:
    """Left-multiply the across-scale vector of every (t, n, m) by A^(-1)."""
    J = est.levels
    if ipm.matrix.shape != (J, J):
        raise ValueError(
            f"inner-product matrix is {ipm.matrix.shape}, estimate has {J} levels")
    data = np.einsum("jk,ktnm->jtnm", ipm.inverse, est.data)
    return SpectralEstimate(data=data, meta={**est.meta, "corrected": True})


def regularize_pd(est: SpectralEstimate, floor: float = 1e-6) -> SpectralEstimate:
    """Clamp per-slice eigenvalues at `floor` and reconstruct."""
    sym = 0.5 * (est.data + np.swapaxes(est.data, -1, -2))
    vals, vecs = np.linalg.eigh(sym)
    vals = np.maximum(vals, floor)
    data = np.einsum("...ij,...j,...kj->...ik", vecs, vals, vecs)
    data = 0.5 * (data + np.swapaxes(data, -1, -2))
    return SpectralEstimate(data=data, meta={**est.meta, "floor": float(floor)})


def estimate_spectrum(x: np.ndarray, family: str = "d8",
                      levels: int | None = None, width: int = 23,
                      floor: float = 1e-6) -> SpectralEstimate:
    """Full estimation pipeline on an N x T series (T a power of two)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    T = x.shape[1]
    max_levels = int(np.log2(T))
    if levels is None:
        levels = max_levels
    system = build_system(family, levels)
    est = raw_periodogram(x, system, levels=levels)
    est = smooth(est, width)
    ipm = inner_product_matrix(autocorr(system), levels)
    est = bias_correct(est, ipm)
    return regularize_pd(est, floor=floor)


def cross_spectrum_report(est: SpectralEstimate, threshold: float = 0.1) -> list:
    """Magnitude-threshold heuristic over (scale, n, m) cells.

    Reports the time-median of |S| per cell and whether it clears the
    threshold. This stands in for formal cross-spectrum significance
    testing, which is out of scope.
    """
    J, _, N, _ = est.data.shape
    rows = []
    for j in range(J):
        for n in range(N):
            for m in range(n, N):
                med = float(np.median(np.abs(est.data[j, :, n, m])))
                rows.append({"scale": j + 1, "row": n, "col": m,
                             "median_abs": med,
                             "significant": bool(med > threshold)})
    return rows
