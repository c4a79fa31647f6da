"""Non-decimated wavelet systems and their lag-domain machinery.

A system holds one unit-norm filter per scale level, grown by the cascade
(a trous) refinement: the scale-j detail filter is the level-(j-1) smooth
filter convolved with the wavelet filter upsampled by 2^(j-1). Support at
scale j is (2^j - 1)(F - 1) + 1 taps for filter length F.

Boundary handling is circular everywhere: the analysis transform and the
synthesis sum both wrap modulo T, which keeps the k-sums finite and exact
and matches the convention of the spectral estimators downstream.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UnsupportedFamily(ValueError):
    """Unknown wavelet family or filter length."""


class BadLength(ValueError):
    """Series length is not a power of two."""


class SingularMatrix(RuntimeError):
    """Inner-product matrix too ill-conditioned to invert."""


# Orthonormal scaling coefficients, unit l2 norm, sum sqrt(2). The Haar pair
# is exact; Daubechies values are the standard extremal-phase coefficients
# for filter lengths 4, 6 and 8, validated at build time by the norm, sum,
# shift-orthogonality and vanishing-moment identities.
_SCALING = {
    "haar": np.array([1.0, 1.0]) / np.sqrt(2.0),
    "d4": np.array([
        0.4829629131445341, 0.8365163037378077,
        0.2241438680420134, -0.1294095225512603,
    ]),
    "d6": np.array([
        0.3326705529500825, 0.8068915093110924, 0.4598775021184914,
        -0.1350110200102546, -0.0854412738820267, 0.0352262918857095,
    ]),
    "d8": np.array([
        0.2303778133088964, 0.7148465705529154, 0.6308807679298587,
        -0.0279837694168599, -0.1870348117190931, 0.0308413818355607,
        0.0328830116668852, -0.0105974017850690,
    ]),
}

_FAMILY_ALIASES = {
    "haar": "haar", "d2": "haar",
    "d4": "d4", "daubechies4": "d4",
    "d6": "d6", "daubechies6": "d6",
    "d8": "d8", "daubechies8": "d8",
}


def _validate_scaling(name, h):
    F = len(h)
    assert abs(np.sum(h) - np.sqrt(2.0)) < 1e-12, name
    assert abs(np.sum(h * h) - 1.0) < 1e-12, name
    for m in range(1, F // 2):
        assert abs(np.dot(h[: F - 2 * m], h[2 * m:])) < 1e-10, (name, m)


def _wavelet_filter(h):
    """Quadrature-mirror wavelet filter g_k = (-1)^k h_{F-1-k}."""
    F = len(h)
    return np.array([(-1) ** k * h[F - 1 - k] for k in range(F)])


def _upsample(f, factor):
    out = np.zeros((len(f) - 1) * factor + 1)
    out[::factor] = f
    return out


@dataclass(frozen=True)
class WaveletSystem:
    """Per-scale non-decimated filters psi_j, unit l2 norm each."""

    family: str
    max_scale: int
    filters: tuple  # tuple of 1-d arrays, index j-1 -> psi_j

    @property
    def filter_length(self) -> int:
        return len(_SCALING[self.family])


def build_system(family: str, levels: int) -> WaveletSystem:
    """Build the cascade filters for scales 1..levels."""
    key = _FAMILY_ALIASES.get(str(family).lower())
    if key is None:
        raise UnsupportedFamily(f"unsupported wavelet family: {family!r}")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    h = _SCALING[key]
    _validate_scaling(key, h)
    g = _wavelet_filter(h)
    filters = []
    smooth = np.array([1.0])  # level-0 smooth filter (identity)
    for j in range(1, levels + 1):
        psi = np.convolve(_upsample(g, 2 ** (j - 1)), smooth)
        psi = psi / np.linalg.norm(psi)
        filters.append(psi)
        smooth = np.convolve(_upsample(h, 2 ** (j - 1)), smooth)
    return WaveletSystem(family=key, max_scale=levels, filters=tuple(filters))


@dataclass(frozen=True)
class AutocorrWavelet:
    """Lag-domain self-convolutions Psi_j[l] = sum_k psi_j[k] psi_j[k-l].

    `sequences[j-1]` covers lags -(P-1)..(P-1) for support P; index
    `radius[j-1]` is lag zero.
    """

    sequences: tuple
    radius: tuple

    def value(self, scale: int, lag: int) -> float:
        seq = self.sequences[scale - 1]
        r = self.radius[scale - 1]
        k = r + lag
        if k < 0 or k >= len(seq):
            return 0.0
        return float(seq[k])


def autocorr(system: WaveletSystem) -> AutocorrWavelet:
    seqs = []
    radii = []
    for psi in system.filters:
        seq = np.correlate(psi, psi, mode="full")
        seqs.append(seq)
        radii.append(len(psi) - 1)
    return AutocorrWavelet(sequences=tuple(seqs), radius=tuple(radii))


@dataclass(frozen=True)
class InnerProductMatrix:
    """A_jk = sum_l Psi_j[l] Psi_k[l], with its inverse precomputed."""

    matrix: np.ndarray
    inverse: np.ndarray


def inner_product_matrix(ac: AutocorrWavelet, levels: int) -> InnerProductMatrix:
    if levels < 1 or levels > len(ac.sequences):
        raise ValueError(f"levels must be in 1..{len(ac.sequences)}")
    A = np.empty((levels, levels))
    for j in range(levels):
        for k in range(j, levels):
            rj, rk = ac.radius[j], ac.radius[k]
            lo = -min(rj, rk)
            hi = min(rj, rk)
            sj = ac.sequences[j][rj + lo: rj + hi + 1]
            sk = ac.sequences[k][rk + lo: rk + hi + 1]
            A[j, k] = A[k, j] = float(np.dot(sj, sk))
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularMatrix(
            f"inner-product matrix condition number {cond:.3e} exceeds 1e12")
    return InnerProductMatrix(matrix=A, inverse=np.linalg.inv(A))


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _padded_fft(psi, T):
    pad = np.zeros(T)
    reps = psi
    if len(psi) > T:
        # filter wraps: fold it onto the circle
        for i, v in enumerate(psi):
            pad[i % T] += v
    else:
        pad[: len(psi)] = reps
    return np.fft.rfft(pad)


def ndwt(x: np.ndarray, system: WaveletSystem, levels: int | None = None) -> np.ndarray:
    """Non-decimated transform of an N x T series, circular boundaries.

    Returns coefficients with shape (levels, T, N), where
    d_j[t] = sum_u x[u] psi_j[(u - t) mod T].
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    N, T = x.shape
    if not _is_power_of_two(T):
        raise BadLength(f"series length {T} is not a power of two")
    if levels is None:
        levels = system.max_scale
    if levels > system.max_scale:
        raise ValueError("levels exceeds the system's max scale")
    if levels > int(np.log2(T)):
        raise ValueError(f"levels {levels} exceeds log2(T) = {int(np.log2(T))}")
    X = np.fft.rfft(x, axis=1)
    out = np.empty((levels, T, N))
    for j in range(levels):
        H = _padded_fft(system.filters[j], T)
        out[j] = np.fft.irfft(X * np.conj(H)[None, :], n=T, axis=1).T
    return out


def circular_convolve(y: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """sum_k y[..., k] psi[(t - k) mod T] along the last axis of y."""
    T = y.shape[-1]
    H = _padded_fft(psi, T)
    return np.fft.irfft(np.fft.rfft(y, axis=-1) * H, n=T, axis=-1)
