"""Time-series synthesis from a mixing tensor, plus descriptive statistics.

The synthesis sum

    X[t] = sum_j sum_k M_j[k] z_{j,k} psi_j[(t - k) mod T]

is realized circularly over k = 0..T-1, which is exact for compactly
supported filters. When the mixing tensor is constant across scales and
time the sum factorizes to M @ Ztilde with Ztilde built from identity
mixing; generate() takes that branch (drawing noise in the same order), so
the stationary simplification holds bit-exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .wavelet import WaveletSystem, circular_convolve


def _draw_noise(j: int, t: int, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((j, t, n))


def generate_with_noise(mixing: np.ndarray, system: WaveletSystem,
                        z: np.ndarray) -> np.ndarray:
    """Deterministic synthesis from given innovations z of shape (J, T, N)."""
    M = np.asarray(mixing, dtype=np.float64)
    j, t, n, _ = M.shape
    if z.shape != (j, t, n):
        raise ValueError(f"noise shape {z.shape} does not match mixing {M.shape}")
    if j > system.max_scale:
        raise ValueError("mixing tensor has more scales than the wavelet system")
    if np.all(M == M[0, 0]):
        acc = np.zeros((n, t))
        for jj in range(j):
            acc += circular_convolve(z[jj].T, system.filters[jj])
        return np.ascontiguousarray(M[0, 0] @ acc)
    x = np.zeros((n, t))
    for jj in range(j):
        y = np.einsum("tnm,tm->nt", M[jj], z[jj])
        x += circular_convolve(y, system.filters[jj])
    return x


def generate(mixing: np.ndarray, system: WaveletSystem,
             rng: np.random.Generator) -> np.ndarray:
    """Draw one N x T dataset obeying the mixing tensor."""
    j, t, n, _ = np.asarray(mixing).shape
    return generate_with_noise(mixing, system, _draw_noise(j, t, n, rng))


# ---------------------------------------------------------------------------
# descriptive statistics


@dataclass(frozen=True)
class StatsReport:
    """Per-series moments, Jarque-Bera and (absolute-value) autocorrelations."""

    skewness: np.ndarray        # (N,)
    kurtosis: np.ndarray        # (N,), raw (normal -> 3)
    excess_kurtosis: np.ndarray
    jarque_bera: np.ndarray
    jb_pvalue: np.ndarray
    acf: np.ndarray             # (N, lags + 1), acf[:, 0] = 1
    abs_acf: np.ndarray
    band: float                 # +-1.96 / sqrt(T)

    def to_dict(self) -> dict:
        return {
            "skewness": self.skewness.tolist(),
            "kurtosis": self.kurtosis.tolist(),
            "excess_kurtosis": self.excess_kurtosis.tolist(),
            "jarque_bera": self.jarque_bera.tolist(),
            "jb_pvalue": self.jb_pvalue.tolist(),
            "acf": self.acf.tolist(),
            "abs_acf": self.abs_acf.tolist(),
            "band": self.band,
        }


def _acf(x: np.ndarray, lags: int) -> np.ndarray:
    xc = x - x.mean()
    denom = float(xc @ xc)
    if denom == 0.0:
        out = np.zeros(lags + 1)
        out[0] = 1.0
        return out
    out = np.empty(lags + 1)
    for l in range(lags + 1):
        out[l] = float(xc[: len(xc) - l] @ xc[l:]) / denom
    return out


def stats(values: np.ndarray, lags: int = 40) -> StatsReport:
    """Skewness, kurtosis, JB (p via the chi2(2) closed form) and ACFs."""
    x = np.atleast_2d(np.asarray(values, dtype=np.float64))
    n, t = x.shape
    if t < 8:
        raise ValueError("need at least 8 samples")
    lags = min(lags, t - 1)
    xc = x - x.mean(axis=1, keepdims=True)
    m2 = np.mean(xc ** 2, axis=1)
    m3 = np.mean(xc ** 3, axis=1)
    m4 = np.mean(xc ** 4, axis=1)
    safe = np.where(m2 > 0, m2, 1.0)
    skew = np.where(m2 > 0, m3 / safe ** 1.5, 0.0)
    kurt = np.where(m2 > 0, m4 / safe ** 2, 0.0)
    jb = t / 6.0 * (skew ** 2 + (kurt - 3.0) ** 2 / 4.0)
    pval = np.exp(-jb / 2.0)
    acf = np.stack([_acf(row, lags) for row in x])
    abs_acf = np.stack([_acf(np.abs(row), lags) for row in x])
    return StatsReport(skewness=skew, kurtosis=kurt, excess_kurtosis=kurt - 3.0,
                       jarque_bera=jb, jb_pvalue=pval, acf=acf, abs_acf=abs_acf,
                       band=1.96 / np.sqrt(t))
