"""Float64 tensors and a minimal reverse-mode differentiation tape.

All numeric state lives in numpy float64 arrays. A :class:`Tape` records one
define-by-run computation as an append-only list of nodes; :func:`grad`
replays it in strict reverse insertion order, so identical tapes produce
bit-identical adjoints. Tapes are cheap and rebuilt per loss evaluation,
never shared between threads.

numpy/LAPACK supply the dense kernels (Cholesky, triangular solves, matmul,
reductions); every vector-Jacobian rule here is hand-written and validated
against central finite differences in the test suite.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular as _scipy_solve_triangular

LOG_2PI = float(np.log(2.0 * np.pi))


class ShapeMismatch(ValueError):
    """Operands have incompatible extents."""


class NotPositiveDefinite(RuntimeError):
    """Cholesky factorization hit a nonpositive pivot (after jitter)."""


class DisconnectedInput(RuntimeError):
    """A requested gradient input does not influence the output."""


def as_value(x) -> np.ndarray:
    """Coerce to a float64 ndarray (scalars become 0-d arrays)."""
    return np.asarray(x, dtype=np.float64)


class Node:
    """One tape entry: cached primal value plus the local backward rule."""

    __slots__ = ("tape", "id", "op", "value", "parents", "_vjp")

    def __init__(self, tape, nid, op, value, parents, vjp):
        self.tape = tape
        self.id = nid
        self.op = op
        self.value = value
        self.parents = parents
        self._vjp = vjp

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    def __repr__(self):
        return f"Node(id={self.id}, op={self.op!r}, shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(self.tape, other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_lift(self.tape, other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Append-only, topologically ordered record of one computation."""

    def __init__(self, check_finite: bool = False):
        self.nodes: list[Node] = []
        self.check_finite = check_finite

    def leaf(self, value) -> Node:
        return self._push("leaf", as_value(value), (), None)

    def _push(self, op, value, parents, vjp) -> Node:
        if self.check_finite and not np.all(np.isfinite(value)):
            raise FloatingPointError(f"non-finite value produced by op {op!r}")
        node = Node(self, len(self.nodes), op, value, parents, vjp)
        self.nodes.append(node)
        return node


def _lift(tape: Tape, x) -> Node:
    if isinstance(x, Node):
        if x.tape is not tape:
            raise ValueError("operands belong to different tapes")
        return x
    return tape.leaf(x)


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Node):
            return x.tape
    raise TypeError("at least one operand must be a tape Node")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcasted adjoint back to the operand's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary(op, a, b, fwd, vjp_pair):
    tape = _tape_of(a, b)
    a = _lift(tape, a)
    b = _lift(tape, b)
    try:
        out = fwd(a.value, b.value)
    except ValueError as exc:
        raise ShapeMismatch(f"{op}: {a.shape} vs {b.shape}") from exc
    ash, bsh = a.shape, b.shape

    def vjp(g):
        ga, gb = vjp_pair(g, a.value, b.value, out)
        return ((a.id, _unbroadcast(ga, ash)), (b.id, _unbroadcast(gb, bsh)))

    return tape._push(op, out, (a.id, b.id), vjp)


def _unary(op, x, fwd, vjp_fn):
    tape = _tape_of(x)
    x = _lift(tape, x)
    out = fwd(x.value)

    def vjp(g):
        return ((x.id, vjp_fn(g, x.value, out)),)

    return tape._push(op, out, (x.id,), vjp)


# ---------------------------------------------------------------------------
# elementwise and structural ops


def add(a, b):
    return _binary("add", a, b, np.add, lambda g, x, y, o: (g, g))


def sub(a, b):
    return _binary("sub", a, b, np.subtract, lambda g, x, y, o: (g, -g))


def mul(a, b):
    return _binary("mul", a, b, np.multiply, lambda g, x, y, o: (g * y, g * x))


def div(a, b):
    return _binary("div", a, b, np.divide,
                   lambda g, x, y, o: (g / y, -g * x / (y * y)))


def neg(x):
    return _unary("neg", x, np.negative, lambda g, x, o: -g)


def exp(x):
    return _unary("exp", x, np.exp, lambda g, x, o: g * o)


def log(x):
    return _unary("log", x, np.log, lambda g, x, o: g / x)


def sqrt(x):
    return _unary("sqrt", x, np.sqrt, lambda g, x, o: 0.5 * g / o)


def square(x):
    return _unary("square", x, np.square, lambda g, x, o: 2.0 * g * x)


def softplus(x):
    """log(1 + exp(x)), overflow-safe; derivative is the logistic sigmoid."""
    return _unary("softplus", x,
                  lambda v: np.logaddexp(0.0, v),
                  lambda g, x, o: g / (1.0 + np.exp(-x)))


def reshape(x, shape):
    tape = _tape_of(x)
    x = _lift(tape, x)
    old = x.shape
    out = np.reshape(x.value, shape)

    def vjp(g):
        return ((x.id, np.reshape(g, old)),)

    return tape._push("reshape", out, (x.id,), vjp)


def moveaxis(x, source, destination):
    tape = _tape_of(x)
    x = _lift(tape, x)
    out = np.moveaxis(x.value, source, destination)

    def vjp(g):
        return ((x.id, np.moveaxis(g, destination, source)),)

    return tape._push("moveaxis", out, (x.id,), vjp)


def swap_last2(x):
    """Transpose the two trailing axes (matrix transpose on batched input)."""
    tape = _tape_of(x)
    x = _lift(tape, x)
    if x.value.ndim < 2:
        raise ShapeMismatch("swap_last2 needs at least 2 dimensions")
    out = np.swapaxes(x.value, -1, -2)

    def vjp(g):
        return ((x.id, np.swapaxes(g, -1, -2)),)

    return tape._push("swap_last2", out, (x.id,), vjp)


def take(x, indices, axis=-1):
    """Select entries along an axis by static integer indices."""
    tape = _tape_of(x)
    x = _lift(tape, x)
    idx = np.asarray(indices, dtype=np.intp)
    out = np.take(x.value, idx, axis=axis)
    in_shape = x.shape

    def vjp(g):
        gx = np.zeros(in_shape)
        gm = np.moveaxis(gx, axis, 0)
        np.add.at(gm, idx, np.moveaxis(g, axis, 0))
        return ((x.id, gx),)

    return tape._push("take", out, (x.id,), vjp)


def diag_part(x):
    """Diagonal of the two trailing axes, shape (..., n)."""
    tape = _tape_of(x)
    x = _lift(tape, x)
    if x.value.ndim < 2 or x.shape[-1] != x.shape[-2]:
        raise ShapeMismatch(f"diag_part needs square trailing axes, got {x.shape}")
    out = np.ascontiguousarray(np.diagonal(x.value, axis1=-2, axis2=-1))
    n = x.shape[-1]
    in_shape = x.shape

    def vjp(g):
        gx = np.zeros(in_shape)
        ii = np.arange(n)
        gx[..., ii, ii] = g
        return ((x.id, gx),)

    return tape._push("diag_part", out, (x.id,), vjp)


def diag_embed(x):
    """Place (..., n) values on the diagonal of (..., n, n) zeros."""
    tape = _tape_of(x)
    x = _lift(tape, x)
    n = x.shape[-1]
    out = np.zeros(x.shape + (n,))
    ii = np.arange(n)
    out[..., ii, ii] = x.value

    def vjp(g):
        return ((x.id, np.ascontiguousarray(np.diagonal(g, axis1=-2, axis2=-1))),)

    return tape._push("diag_embed", out, (x.id,), vjp)


# ---------------------------------------------------------------------------
# reductions


def reduce_sum(x, axis=None, keepdims=False):
    tape = _tape_of(x)
    x = _lift(tape, x)
    out = np.sum(x.value, axis=axis, keepdims=keepdims)
    in_shape = x.shape

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return ((x.id, np.broadcast_to(g, in_shape).copy()),)

    return tape._push("sum", out, (x.id,), vjp)


def reduce_mean(x, axis=None, keepdims=False):
    tape = _tape_of(x)
    x = _lift(tape, x)
    out = np.mean(x.value, axis=axis, keepdims=keepdims)
    in_shape = x.shape
    count = x.value.size if axis is None else np.prod(
        [in_shape[a] for a in np.atleast_1d(axis)])

    def vjp(g):
        g = np.asarray(g) / count
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return ((x.id, np.broadcast_to(g, in_shape).copy()),)

    return tape._push("mean", out, (x.id,), vjp)


def logsumexp(x, axis=None):
    """Max-shifted log-sum-exp; stable for large inputs."""
    tape = _tape_of(x)
    x = _lift(tape, x)
    v = x.value
    m = np.max(v, axis=axis, keepdims=True)
    base = np.squeeze(m, axis=axis) if axis is not None else m.reshape(())
    out = base + np.log(np.sum(np.exp(v - m), axis=axis))
    if axis is None:
        out = np.asarray(out).reshape(())

    def vjp(g):
        o = out if axis is None else np.expand_dims(out, axis)
        w = np.exp(v - o)
        gg = np.asarray(g) if axis is None else np.expand_dims(np.asarray(g), axis)
        return ((x.id, gg * w),)

    return tape._push("logsumexp", out, (x.id,), vjp)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b):
    tape = _tape_of(a, b)
    a = _lift(tape, a)
    b = _lift(tape, b)
    if a.value.ndim < 2 or b.value.ndim < 2:
        raise ShapeMismatch("matmul operands need at least 2 dimensions")
    try:
        out = np.matmul(a.value, b.value)
    except ValueError as exc:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}") from exc
    ash, bsh = a.shape, b.shape

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(b.value, -1, -2))
        gb = np.matmul(np.swapaxes(a.value, -1, -2), g)
        return ((a.id, _unbroadcast(ga, ash)), (b.id, _unbroadcast(gb, bsh)))

    return tape._push("matmul", out, (a.id, b.id), vjp)


def _solve_tri_np(L, B, trans=False):
    """Lower-triangular solve with broadcasting over batch dims of B.

    Batched L (matching B's batch) falls back to a per-slice loop; the hot
    paths always use an unbatched L.
    """
    L = np.asarray(L)
    B = np.asarray(B)
    tchar = "T" if trans else "N"
    if L.ndim == 2:
        if B.ndim == 2:
            return _scipy_solve_triangular(L, B, lower=True, trans=tchar)
        n = L.shape[0]
        batch = B.shape[:-2]
        m = B.shape[-1]
        flat = np.moveaxis(B, -2, 0).reshape(n, -1)
        X = _scipy_solve_triangular(L, flat, lower=True, trans=tchar)
        return np.moveaxis(X.reshape((n,) + batch + (m,)), 0, -2)
    batch = np.broadcast_shapes(L.shape[:-2], B.shape[:-2])
    Lb = np.broadcast_to(L, batch + L.shape[-2:])
    Bb = np.broadcast_to(B, batch + B.shape[-2:])
    out = np.empty(batch + B.shape[-2:])
    for ix in np.ndindex(*batch):
        out[ix] = _scipy_solve_triangular(Lb[ix], Bb[ix], lower=True, trans=tchar)
    return out


def triangular_solve(L, b, trans=False):
    """Solve L x = b (or L' x = b when trans) for lower-triangular L."""
    tape = _tape_of(L, b)
    L = _lift(tape, L)
    b = _lift(tape, b)
    if L.shape[-1] != L.shape[-2] or b.value.ndim < 2 or b.shape[-2] != L.shape[-1]:
        raise ShapeMismatch(f"triangular_solve: {L.shape} vs {b.shape}")
    out = _solve_tri_np(L.value, b.value, trans=trans)
    lsh, bsh = L.shape, b.shape
    tril = np.tril(np.ones(L.shape[-2:]))

    def vjp(g):
        gb = _solve_tri_np(L.value, g, trans=not trans)
        if trans:
            gL = -np.matmul(out, np.swapaxes(gb, -1, -2))
        else:
            gL = -np.matmul(gb, np.swapaxes(out, -1, -2))
        gL = gL * tril
        return ((L.id, _unbroadcast(gL, lsh)), (b.id, _unbroadcast(gb, bsh)))

    return tape._push("triangular_solve", out, (L.id, b.id), vjp)


def _check_symmetric(A):
    # Tolerance is loose enough to admit finite-difference probes of single
    # entries (step ~1e-5); the factorization symmetrizes internally anyway.
    dev = np.max(np.abs(A - np.swapaxes(A, -1, -2))) if A.size else 0.0
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if dev > 1e-4 * scale:
        raise ValueError(f"matrix is not symmetric (max deviation {dev:.3e})")


def cholesky_np(A, jitter=0.0):
    """Lower Cholesky factor of sym(A) + jitter*I; plain-numpy version."""
    A = as_value(A)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ShapeMismatch(f"cholesky needs square trailing axes, got {A.shape}")
    if jitter < 0:
        raise ValueError("jitter must be nonnegative")
    _check_symmetric(A)
    As = 0.5 * (A + np.swapaxes(A, -1, -2)) + jitter * np.eye(A.shape[-1])
    try:
        return np.linalg.cholesky(As)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc


def cholesky_with_retries(A, jitter=1e-6, retries=3):
    """Jitter ladder for GP covariances: double up to `retries` times.

    Returns (L, jitter_used).
    """
    j = jitter
    for attempt in range(retries + 1):
        try:
            return cholesky_np(A, jitter=j), j
        except NotPositiveDefinite:
            if attempt == retries:
                raise
            j *= 2.0
    raise AssertionError("unreachable")


def cholesky(A, jitter=0.0):
    """Differentiable lower Cholesky factor of sym(A) + jitter*I."""
    tape = _tape_of(A)
    A = _lift(tape, A)
    out = cholesky_np(A.value, jitter=jitter)
    n = out.shape[-1]
    phi_mask = np.tril(np.ones((n, n))) - 0.5 * np.eye(n)
    ash = A.shape

    def vjp(g):
        mid = phi_mask * np.matmul(np.swapaxes(out, -1, -2), g)
        tmp = _solve_tri_np(out, mid, trans=True)
        S = np.swapaxes(_solve_tri_np(out, np.swapaxes(tmp, -1, -2), trans=True),
                        -1, -2)
        gA = 0.5 * (S + np.swapaxes(S, -1, -2))
        return ((A.id, _unbroadcast(gA, ash)),)

    return tape._push("cholesky", out, (A.id,), vjp)


# ---------------------------------------------------------------------------
# backward driver


def grad(output: Node, inputs, strict: bool = False):
    """Adjoints of a scalar output with respect to `inputs`.

    Inputs that do not influence the output get zero adjoints, or raise
    DisconnectedInput when strict is set.
    """
    if not isinstance(output, Node):
        raise TypeError("output must be a tape Node")
    if output.value.size != 1:
        raise ShapeMismatch("grad output must be scalar")
    inputs = list(inputs)
    tape = output.tape
    adjoints: dict[int, np.ndarray] = {output.id: np.ones_like(output.value)}
    wanted = {node.id: i for i, node in enumerate(inputs)}
    results: list[np.ndarray | None] = [None] * len(inputs)
    for node in reversed(tape.nodes[: output.id + 1]):
        g = adjoints.pop(node.id, None)
        if g is None:
            continue
        if node.id in wanted:
            i = wanted[node.id]
            results[i] = g if results[i] is None else results[i] + g
        if node._vjp is None:
            continue
        for pid, pg in node._vjp(g):
            acc = adjoints.get(pid)
            adjoints[pid] = pg if acc is None else acc + pg
    for i, node in enumerate(inputs):
        if results[i] is None:
            if strict:
                raise DisconnectedInput(
                    f"input node {node.id} does not influence the output")
            results[i] = np.zeros_like(node.value)
    return results
