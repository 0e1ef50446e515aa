"""Markov kernels and signed kernels on finite spaces.

A MarkovKernel from X to Y assigns each point of X a probability
measure on Y; on finite spaces that is a row-stochastic matrix. The
SignedKernel relaxation allows arbitrary finite signed rows.

The calculus implemented here: pushforward of measures, pullback of
functions, composition, joints, graphs, graph pushforwards, and the
disintegration of a joint probability measure into its marginal and a
conditional kernel (the unique kernel, up to marginal-null rows, whose
graph pushforward reproduces the joint). The embedded operator norm
measures how much a kernel's graph pushforward can stretch differences
of probability measures between two embedding geometries.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.linalg import cho_factor, cho_solve, eigh, eigvalsh

from ._tol import INVARIANT_ATOL
from .kernels import GramMatrix
from .spaces import (
    FiniteSpace,
    ProbMeasure,
    ProductSpace,
    SignedMeasure,
    SpaceMismatchError,
)

# direct generalized eigensolve up to this source size, power iteration above
_DENSE_EIG_LIMIT = 64


class SignedKernel:
    """A kernel with one finite signed measure on `target` per source point."""

    markov = False

    def __init__(self, source: FiniteSpace, target: FiniteSpace, rows):
        m = np.asarray(rows, dtype=float)
        if m.shape != (source.size, target.size):
            raise ValueError(
                f"row matrix shape {m.shape}, expected {(source.size, target.size)}"
            )
        if not np.all(np.isfinite(m)):
            raise ValueError("kernel rows must be finite")
        m = m.copy()
        m.flags.writeable = False
        self.source = source
        self.target = target
        self.matrix = m

    def row(self, x) -> SignedMeasure:
        return SignedMeasure(self.target, self.matrix[self.source.index(x)])

    def __add__(self, other: "SignedKernel") -> "SignedKernel":
        if self.source != other.source or self.target != other.target:
            raise SpaceMismatchError("kernel sum needs matching source and target")
        return SignedKernel(self.source, self.target, self.matrix + other.matrix)

    def __mul__(self, scalar: float) -> "SignedKernel":
        return SignedKernel(self.source, self.target, self.matrix * float(scalar))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        kind = "MarkovKernel" if self.markov else "SignedKernel"
        return f"{kind}({self.source.size} -> {self.target.size})"


class MarkovKernel(SignedKernel):
    """A row-stochastic kernel: nonnegative rows, each summing to 1.

    Row sums may deviate from 1 by at most 1e-12; tiny negative dust
    above -1e-12 is clamped to zero. Larger violations are rejected.
    """

    markov = True

    def __init__(self, source: FiniteSpace, target: FiniteSpace, rows):
        m = np.asarray(rows, dtype=float)
        if m.shape == (source.size, target.size) and np.all(np.isfinite(m)):
            if np.any(m < -INVARIANT_ATOL):
                bad = float(m.min())
                raise ValueError(f"negative entry {bad:.3e} in a Markov kernel row")
            m = np.clip(m, 0.0, None)
            sums = m.sum(axis=1)
            off = np.abs(sums - 1.0)
            if np.any(off > INVARIANT_ATOL):
                i = int(np.argmax(off))
                raise ValueError(
                    f"row at {source.labels[i]!r} sums to {sums[i]!r}, not 1"
                )
        super().__init__(source, target, m)

    def row(self, x) -> ProbMeasure:
        return ProbMeasure(self.target, self.matrix[self.source.index(x)])


def deterministic(source: FiniteSpace, target: FiniteSpace, mapping) -> MarkovKernel:
    """The kernel of a point map: row x is the Dirac at mapping(x)."""
    get = mapping.__getitem__ if isinstance(mapping, dict) else mapping
    m = np.zeros((source.size, target.size))
    for i, x in enumerate(source.labels):
        y = get(x)
        if y not in target:
            raise KeyError(f"map sends {x!r} to {y!r}, which is not in the target")
        m[i, target.index(y)] = 1.0
    return MarkovKernel(source, target, m)


def identity_kernel(space: FiniteSpace) -> MarkovKernel:
    return MarkovKernel(space, space, np.eye(space.size))


def projection_kernel(space: ProductSpace, axis: str) -> MarkovKernel:
    """The deterministic projection of a product space onto one factor."""
    if axis == "left":
        return deterministic(space, space.left, lambda p: p[0])
    if axis == "right":
        return deterministic(space, space.right, lambda p: p[1])
    raise ValueError(f"axis must be 'left' or 'right', got {axis!r}")


def _wrap(source, target, matrix, markov: bool):
    return (MarkovKernel if markov else SignedKernel)(source, target, matrix)


def pushforward(T: SignedKernel, mu: SignedMeasure) -> SignedMeasure:
    """The image measure: nu(y) = sum_x mu(x) T(y|x).

    Linear in mu; for a Markov kernel and a probability input the
    result is again a probability measure with the same total mass.
    """
    if mu.space != T.source:
        raise SpaceMismatchError("measure does not live on the kernel's source")
    w = mu.weights @ T.matrix
    if T.markov and isinstance(mu, ProbMeasure):
        return ProbMeasure(T.target, w)
    return SignedMeasure(T.target, w)


def pullback(T: SignedKernel, f) -> np.ndarray:
    """Average a function on the target along each row: (T*f)(x) = sum_y T(y|x) f(y)."""
    v = np.asarray(f, dtype=float).reshape(-1)
    if v.shape[0] != T.target.size:
        raise ValueError(f"{v.shape[0]} function values for {T.target.size} points")
    return T.matrix @ v


def compose(T2: SignedKernel, T1: SignedKernel) -> SignedKernel:
    """(T2 after T1): row x is the pushforward of T1's row x through T2."""
    if T1.target != T2.source:
        raise SpaceMismatchError("inner target and outer source do not match")
    return _wrap(T1.source, T2.target, T1.matrix @ T2.matrix, T1.markov and T2.markov)


def joint(T1: SignedKernel, T2: SignedKernel) -> SignedKernel:
    """Rowwise product kernel into the product target.

    Row x of the result is the product measure of T1's and T2's rows
    at x, laid out row-major over (target1, target2).
    """
    if T1.source != T2.source:
        raise SpaceMismatchError("joint needs a shared source")
    target = ProductSpace(T1.target, T2.target)
    m = np.einsum("xi,xj->xij", T1.matrix, T2.matrix).reshape(
        T1.source.size, target.size
    )
    return _wrap(T1.source, target, m, T1.markov and T2.markov)


def graph(T: SignedKernel) -> SignedKernel:
    """The joint of the identity with T: row x is delta_x (x) T-row x."""
    return joint(identity_kernel(T.source), T)


def graph_pushforward(T: SignedKernel, mu_x: SignedMeasure) -> SignedMeasure:
    """The joint measure with weight(x, y) = mu_x(x) T(y|x).

    For a Markov kernel its left marginal is mu_x itself.
    """
    if mu_x.space != T.source:
        raise SpaceMismatchError("measure does not live on the kernel's source")
    space = ProductSpace(T.source, T.target)
    w = (mu_x.weights[:, None] * T.matrix).reshape(-1)
    if T.markov and isinstance(mu_x, ProbMeasure):
        return ProbMeasure(space, w)
    return SignedMeasure(space, w)


def disintegrate(mu: ProbMeasure, zero_row_policy: str = "uniform"):
    """Factor a joint probability measure into (marginal, conditional).

    Returns (mu_x, cond) with mu_x the left marginal and
    cond(y|x) = mu(x, y) / mu_x(x) wherever mu_x(x) > 0. Points with
    zero marginal mass get a uniform row under the default policy or
    raise under policy "error"; any choice there leaves the defining
    identity graph_pushforward(cond, mu_x) = mu intact.
    """
    if zero_row_policy not in ("uniform", "error"):
        raise ValueError(f"unknown zero_row_policy {zero_row_policy!r}")
    space = mu.space
    if not isinstance(space, ProductSpace) or not isinstance(mu, ProbMeasure):
        raise SpaceMismatchError("disintegrate needs a ProbMeasure on a ProductSpace")
    nx, ny = space.left.size, space.right.size
    w = mu.weights.reshape(nx, ny)
    mass = w.sum(axis=1)
    dead = mass <= 0.0
    if np.any(dead):
        if zero_row_policy == "error":
            labels = [space.left.labels[i] for i in np.flatnonzero(dead)]
            raise ValueError(f"marginal mass is zero at {labels!r}")
        rows = np.full((nx, ny), 1.0 / ny)
    else:
        rows = np.empty((nx, ny))
    alive = ~dead
    rows[alive] = w[alive] / mass[alive, None]
    return ProbMeasure(space.left, mass), MarkovKernel(space.left, space.right, rows)


def sup_tv_norm(T: SignedKernel) -> float:
    """The largest total variation norm among the rows; 1 for Markov kernels."""
    return float(np.max(np.abs(T.matrix).sum(axis=1))) if T.source.size else 0.0


def _sum_zero_basis(n: int) -> np.ndarray:
    """An orthonormal basis of the weight vectors summing to zero."""
    seed = np.column_stack([np.ones(n), np.eye(n)[:, : n - 1]])
    q, _ = np.linalg.qr(seed)
    return q[:, 1:]


def embedded_operator_norm(T: MarkovKernel, gX: GramMatrix, gXY: GramMatrix) -> float:
    """How much the graph pushforward stretches differences of probabilities.

    sup over distinct probability measures A, B on the source of
    ||graph_pushforward(T, A - B)||_gXY / ||A - B||_gX. Differences of
    probability measures are exactly the sum-zero weight vectors and
    the quotient is scale invariant, so the value is the square root of
    the top generalized eigenvalue of the two induced quadratic forms
    on that subspace. gX must be nondegenerate there.
    """
    if gX.points != T.source:
        raise SpaceMismatchError("gX must live on the kernel's source")
    if gXY.points != ProductSpace(T.source, T.target):
        raise SpaceMismatchError("gXY must live on the source x target product")
    n = T.source.size
    if n == 1:
        return 0.0
    rows = graph(T).matrix
    big = rows @ gXY.values @ rows.T
    b = _sum_zero_basis(n)
    a = b.T @ big @ b
    c = b.T @ gX.values @ b
    a = (a + a.T) / 2.0
    c = (c + c.T) / 2.0
    if float(eigvalsh(c)[0]) <= 1e-9:
        raise ValueError("source Gram matrix is singular on the sum-zero subspace")
    if n <= _DENSE_EIG_LIMIT:
        top = float(eigh(a, c, eigvals_only=True)[-1])
    else:
        top = _power_top_eig(a, c)
    return math.sqrt(max(top, 0.0))


def _power_top_eig(a: np.ndarray, c: np.ndarray, iters: int = 10000) -> float:
    """Top generalized eigenvalue of (a, c) by power iteration on c^-1 a."""
    factor = cho_factor(c)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(a.shape[0])
    v /= np.linalg.norm(v)
    prev = 0.0
    # shift keeps the iteration matrix positive so the top eigenvalue dominates
    shift = abs(float(np.trace(a))) + 1.0
    for _ in range(iters):
        w = cho_solve(factor, a @ v + shift * (c @ v))
        w /= np.linalg.norm(w)
        val = float(w @ a @ w) / float(w @ c @ w)
        if abs(val - prev) <= 1e-13 * max(1.0, abs(val)):
            v = w
            prev = val
            break
        v, prev = w, val
    return prev
