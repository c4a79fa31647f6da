"""Random-variate machinery: seeded streams, Plackett-Luce, GP kernels.

Streams are counter-based (Philox) and keyed by (master seed, label), so
any consumer can pull an independent, reproducible stream regardless of
thread or process scheduling. Identical (seed, label, call sequence)
yields bit-identical draws on any platform.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

import numpy as np

from .tensorcore import cholesky_with_retries

_CLAMP = np.finfo(np.float64).tiny


def stream(seed: int, label: str) -> np.random.Generator:
    """Independent generator for (seed, label)."""
    digest = hashlib.sha256(f"{int(seed)}:{label}".encode()).digest()
    key = int.from_bytes(digest[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))


def substream(rng_seed: int, *labels) -> np.random.Generator:
    return stream(rng_seed, "/".join(str(x) for x in labels))


# ---------------------------------------------------------------------------
# Plackett-Luce


def pl_sample(theta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One ordering: argsort-descending of theta plus Gumbel noise."""
    theta = np.asarray(theta, dtype=np.float64)
    v = np.clip(rng.uniform(size=theta.shape), _CLAMP, 1.0 - np.finfo(np.float64).epsneg)
    z = theta - np.log(-np.log(v))
    return np.argsort(-z, kind="stable")


def pl_sample_batch(theta: np.ndarray, draws: int,
                    rng: np.random.Generator) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    v = np.clip(rng.uniform(size=(draws, theta.size)),
                _CLAMP, 1.0 - np.finfo(np.float64).epsneg)
    z = theta[None, :] - np.log(-np.log(v))
    return np.argsort(-z, axis=1, kind="stable")


def pl_log_prob(theta: np.ndarray, ordering) -> float:
    """log prod_i exp(theta_{b_i}) / sum_{u>=i} exp(theta_{b_u})."""
    theta = np.asarray(theta, dtype=np.float64)
    order = np.asarray(ordering, dtype=np.intp)
    if order.shape != theta.shape or not np.array_equal(
            np.sort(order), np.arange(theta.size)):
        raise ValueError("ordering must be a permutation of 0..N-1")
    s = theta[order]
    total = 0.0
    for i in range(s.size):
        tail = s[i:]
        m = tail.max()
        total += s[i] - (m + np.log(np.sum(np.exp(tail - m))))
    return float(total)


def pl_mode(theta: np.ndarray) -> np.ndarray:
    """Descending-score ordering; ties broken by lower index."""
    theta = np.asarray(theta, dtype=np.float64)
    return np.argsort(-theta, kind="stable")


# ---------------------------------------------------------------------------
# kernels


@dataclass(frozen=True)
class RBF:
    sigma: float
    lam: float

    def gram(self, s, t):
        d = s[:, None] - t[None, :]
        return self.sigma * np.exp(-0.5 * (d / self.lam) ** 2)

    def expr(self):
        return f"rbf({_fmt(self.sigma)},{_fmt(self.lam)})"


@dataclass(frozen=True)
class Periodic:
    sigma: float
    lam: float
    rho: float

    def gram(self, s, t):
        d = s[:, None] - t[None, :]
        return self.sigma * np.exp(-2.0 * np.sin(np.pi * d / self.rho) ** 2
                                   / self.lam ** 2)

    def expr(self):
        return f"periodic({_fmt(self.sigma)},{_fmt(self.lam)},{_fmt(self.rho)})"


@dataclass(frozen=True)
class Linear:
    sigma: float

    def gram(self, s, t):
        return self.sigma * s[:, None] * t[None, :]

    def expr(self):
        return f"linear({_fmt(self.sigma)})"


@dataclass(frozen=True)
class Matern32:
    sigma: float
    lam: float

    def gram(self, s, t):
        r = np.sqrt(3.0) * np.abs(s[:, None] - t[None, :]) / self.lam
        return self.sigma * (1.0 + r) * np.exp(-r)

    def expr(self):
        return f"matern32({_fmt(self.sigma)},{_fmt(self.lam)})"


@dataclass(frozen=True)
class SumKernel:
    parts: tuple

    def gram(self, s, t):
        return sum(p.gram(s, t) for p in self.parts)

    def expr(self):
        return "+".join(p.expr() for p in self.parts)


@dataclass(frozen=True)
class ProductKernel:
    parts: tuple

    def gram(self, s, t):
        out = self.parts[0].gram(s, t)
        for p in self.parts[1:]:
            out = out * p.gram(s, t)
        return out

    def expr(self):
        return "*".join(p.expr() for p in self.parts)


def _fmt(x: float) -> str:
    return repr(float(x))


_PRIMITIVES = {
    "rbf": (RBF, 2),
    "periodic": (Periodic, 3),
    "linear": (Linear, 1),
    "matern32": (Matern32, 2),
}

_CALL_RE = re.compile(r"^([a-z0-9_]+)\(([^()]*)\)$")


def parse_kernel(expr: str):
    """Parse 'periodic(1,2,2)+linear(1)*matern32(1,2)' style expressions.

    Grammar: sum of products of primitive calls; no nested parentheses.
    """
    text = expr.replace(" ", "").lower()
    if not text:
        raise ValueError("empty kernel expression")
    terms = []
    for term in text.split("+"):
        factors = []
        for factor in term.split("*"):
            m = _CALL_RE.match(factor)
            if not m:
                raise ValueError(f"cannot parse kernel factor: {factor!r}")
            name, argstr = m.groups()
            if name not in _PRIMITIVES:
                raise ValueError(f"unknown kernel primitive: {name!r}")
            cls, arity = _PRIMITIVES[name]
            args = [float(a) for a in argstr.split(",") if a != ""]
            if len(args) != arity:
                raise ValueError(f"{name} expects {arity} parameters, got {len(args)}")
            if any(a <= 0 for a in args):
                raise ValueError(f"{name} parameters must be positive")
            factors.append(cls(*args))
        terms.append(factors[0] if len(factors) == 1 else ProductKernel(tuple(factors)))
    return terms[0] if len(terms) == 1 else SumKernel(tuple(terms))


def gram(kernel, times: np.ndarray) -> np.ndarray:
    """Symmetric Gram matrix K(t, t') on a time grid."""
    t = np.asarray(times, dtype=np.float64)
    K = kernel.gram(t, t)
    return 0.5 * (K + K.T)


def gp_sample_batched(kernel, times, batch_shape, rng: np.random.Generator,
                      jitter: float = 1e-6) -> np.ndarray:
    """Independent GP(0, K) paths, one per batch index, shape batch + (T,)."""
    t = np.asarray(times, dtype=np.float64)
    if t.size > 1 and np.any(np.diff(t) <= 0):
        raise ValueError("times must be strictly increasing")
    K = gram(kernel, t)
    L, _ = cholesky_with_retries(K, jitter=jitter)
    eps = rng.standard_normal(tuple(batch_shape) + (t.size,))
    return eps @ L.T
