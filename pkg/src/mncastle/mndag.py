"""Sampling of multiscale non-stationary DAGs and their tensor algebra.

The pipeline draws, in order: the number of scale pages J, a global causal
ordering from a Plackett-Luce law, a per-scale Bernoulli edge mask over the
strictly lower triangle (rank space), and a weight tensor

    W = W0 + Wmu + tau * Wtau

with a constant page, a per-scale page and batched GP paths along time.
The causal tensor is C = P' (mask o W) P, whose slices are nilpotent by
construction, so the mixing tensor (I - C)^(-1) is the finite power sum
I + C + ... + C^(N-1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import stochastic
from .stochastic import pl_sample, substream


class NotNilpotent(RuntimeError):
    """C^N is not numerically zero: the causal tensor is corrupted."""


DEFAULT_AXIS_SCALE = 10.0


@dataclass(frozen=True)
class GenConfig:
    """User-facing sampling knobs.

    `axis_scale` fixes the GP time axis: rescaled time t/T is mapped onto
    [0, axis_scale) before the kernel lengthscale 1/tau applies. It is
    recorded in dataset manifests so inference uses the same axis.
    """

    n: int
    t: int
    mu: float
    tau: float
    delta: float
    kernel: object | None = None
    seed: int = 0
    axis_scale: float = DEFAULT_AXIS_SCALE
    wavelet: str = "haar"

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.t < 4:
            raise ValueError("t must be >= 4")
        for name in ("mu", "tau", "delta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.tau > 0 and self.kernel is None:
            raise ValueError("a kernel is required when tau > 0")

    def kernel_expr(self) -> str | None:
        return None if self.kernel is None else self.kernel.expr()


def time_axis(t: int, axis_scale: float = DEFAULT_AXIS_SCALE) -> np.ndarray:
    """GP input grid: rescaled time t/T stretched to [0, axis_scale)."""
    return axis_scale * np.arange(t, dtype=np.float64) / t


def sample_scales(t: int, mu: float, rng: np.random.Generator) -> int:
    """J = 1 + Binomial(floor(log2 t) - 1, mu)."""
    trials = int(math.floor(math.log2(t))) - 1
    return 1 + int(rng.binomial(trials, mu)) if trials > 0 else 1


def ordering_ranks(ordering: np.ndarray) -> np.ndarray:
    """rank[node] = position of the node within the ordering."""
    order = np.asarray(ordering, dtype=np.intp)
    ranks = np.empty_like(order)
    ranks[order] = np.arange(order.size)
    return ranks


def permutation_matrix(ordering: np.ndarray) -> np.ndarray:
    """P with p[n, n'] = 1 iff node n occupies position n' in the ordering."""
    order = np.asarray(ordering, dtype=np.intp)
    n = order.size
    P = np.zeros((n, n))
    P[order, np.arange(n)] = 1.0
    return P


def permutation_tensor(ordering: np.ndarray, j: int, t: int) -> np.ndarray:
    """The N x N permutation matrix tiled along scales and time (a view)."""
    P = permutation_matrix(ordering)
    return np.broadcast_to(P, (j, t) + P.shape)


def sample_mask(j: int, n: int, delta: float, rng: np.random.Generator) -> np.ndarray:
    """Per-scale strictly lower-triangular Bernoulli(delta) masks, (J, N, N)."""
    draws = rng.uniform(size=(j, n, n)) < delta
    return (draws & (np.tri(n, k=-1, dtype=bool)[None, :, :])).astype(np.float64)


@dataclass(frozen=True)
class WeightTensor:
    """W = w0 + wmu + tau * wtau, components kept separately for testing."""

    w0: np.ndarray    # (J, T, N, N), constant along (j, t)
    wmu: np.ndarray   # (J, T, N, N), constant along t
    wtau: np.ndarray  # (J, T, N, N)
    tau: float

    @property
    def total(self) -> np.ndarray:
        return self.w0 + self.wmu + self.tau * self.wtau


def sample_weights(j: int, t: int, n: int, mu: float, tau: float, kernel,
                   rng_w0: np.random.Generator,
                   rng_wmu: np.random.Generator,
                   rng_wtau: np.random.Generator,
                   axis_scale: float = DEFAULT_AXIS_SCALE) -> WeightTensor:
    """Draw the three weight components.

    Variance-0 cases (mu = 0, tau = 0) produce exact zeros rather than
    degenerate normal draws; with tau = 0 the kernel is never evaluated.
    """
    w0 = np.broadcast_to(rng_w0.standard_normal((n, n)), (j, t, n, n)).copy()
    if mu > 0:
        wmu = np.broadcast_to(
            math.sqrt(mu) * rng_wmu.standard_normal((j, 1, n, n)), (j, t, n, n)).copy()
    else:
        wmu = np.zeros((j, t, n, n))
    if tau > 0:
        times = time_axis(t, axis_scale)
        paths = stochastic.gp_sample_batched(kernel, times, (j, n, n), rng_wtau)
        wtau = np.moveaxis(paths, -1, 1)  # (J, N, N, T) -> (J, T, N, N)
    else:
        wtau = np.zeros((j, t, n, n))
    return WeightTensor(w0=w0, wmu=wmu, wtau=wtau, tau=tau)


def assemble_causal(weights: WeightTensor, mask: np.ndarray,
                    ordering: np.ndarray) -> np.ndarray:
    """C = P' (mask o W) P, slices nilpotent by construction.

    `mask` is (J, N, N) strictly lower triangular in rank space; the
    conjugation maps rank-space slots back to node indices.
    """
    if np.any(np.triu(np.ones(mask.shape[-2:]))[None] * mask):
        raise ValueError("mask slices must be strictly lower triangular")
    c_hat = mask[:, None, :, :] * weights.total
    ranks = ordering_ranks(ordering)
    return np.ascontiguousarray(c_hat[..., ranks[:, None], ranks[None, :]])


def mixing(causal: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """(I - C)^(-1) as the finite power sum I + C + ... + C^(N-1)."""
    C = np.asarray(causal, dtype=np.float64)
    n = C.shape[-1]
    M = np.broadcast_to(np.eye(n), C.shape).copy()
    power = C.copy()
    for _ in range(n - 1):
        M += power
        power = power @ C
    scale = max(1.0, float(np.max(np.abs(C)))) ** n
    if np.max(np.abs(power)) > tol * scale:
        raise NotNilpotent(
            f"C^{n} has max entry {np.max(np.abs(power)):.3e}; "
            "causal tensor is not nilpotent")
    return M


def ground_truth_spectrum(mixing_tensor: np.ndarray) -> np.ndarray:
    """S = M M' per (scale, time) slice; symmetric positive definite."""
    M = np.asarray(mixing_tensor, dtype=np.float64)
    S = M @ np.swapaxes(M, -1, -2)
    return 0.5 * (S + np.swapaxes(S, -1, -2))


@dataclass(frozen=True)
class MNDag:
    """One sampled graph plus every derived tensor."""

    config: GenConfig
    scales: int
    theta: np.ndarray
    ordering: np.ndarray
    mask: np.ndarray          # (J, N, N), rank space
    weights: WeightTensor
    causal: np.ndarray        # (J, T, N, N)
    mixing: np.ndarray        # (J, T, N, N)
    spectrum: np.ndarray      # (J, T, N, N)
    edges: dict = field(repr=False, default_factory=dict)


def true_edges(causal: np.ndarray) -> dict:
    """Directed ground-truth edge sets per scale: {j: {(parent, child)}}."""
    C = np.asarray(causal)
    out = {}
    for j in range(C.shape[0]):
        present = np.any(C[j] != 0.0, axis=0)
        out[j] = {(int(m), int(n)) for n, m in zip(*np.nonzero(present))}
    return out


def sample_mndag(config: GenConfig) -> MNDag:
    """Full sampling pipeline; every step pulls its own labeled stream."""
    seed = config.seed
    j = sample_scales(config.t, config.mu, substream(seed, "scales"))
    theta = substream(seed, "theta").uniform(0.0, config.n, size=config.n)
    ordering = pl_sample(theta, substream(seed, "ordering"))
    mask = sample_mask(j, config.n, config.delta, substream(seed, "mask"))
    weights = sample_weights(
        j, config.t, config.n, config.mu, config.tau, config.kernel,
        substream(seed, "w0"), substream(seed, "wmu"), substream(seed, "wtau"),
        axis_scale=config.axis_scale)
    causal = assemble_causal(weights, mask, ordering)
    M = mixing(causal)
    S = ground_truth_spectrum(M)
    return MNDag(config=config, scales=j, theta=theta, ordering=ordering,
                 mask=mask, weights=weights, causal=causal, mixing=M,
                 spectrum=S, edges=true_edges(causal))
