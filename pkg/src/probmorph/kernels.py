"""Positive-definite symmetric kernels and kernel mean embeddings.

Supported kernel families on a finite point set:

  gaussian(sigma):  scale * exp(-sigma * ||y - y'||_2^2)
  laplacian(sigma): scale * exp(-sigma * ||y - y'||_1)
  linear:           scale * <y, y'>
  delta:            scale * 1[y = y']

The mean embedding of a measure mu is M(mu) = sum_i mu_i K_{y_i}; all
embedding inner products reduce to weight-vector quadratic forms with
the Gram matrix, which is what GramMatrix caches. The constant
C_K = max_y sqrt(|K(y, y)|) bounds every embedded probability measure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigvalsh
from scipy.spatial.distance import cdist

from ._tol import INVARIANT_ATOL, PSD_ATOL
from .spaces import FiniteSpace, SignedMeasure, SpaceMismatchError

_VARIANTS = ("gaussian", "laplacian", "linear", "delta")


class NotPSDError(ValueError):
    """Raised when a Gram matrix fails the positive-semidefiniteness check."""


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family plus its parameters.

    sigma is required (strictly positive) for gaussian and laplacian,
    ignored otherwise. scale multiplies all kernel values.
    """

    variant: str
    sigma: float | None = None
    scale: float = 1.0

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown kernel variant {self.variant!r}")
        if self.variant in ("gaussian", "laplacian"):
            if self.sigma is None or not self.sigma > 0:
                raise ValueError(f"{self.variant} kernel needs sigma > 0")
        if not self.scale > 0:
            raise ValueError("scale must be strictly positive")

    @property
    def needs_coords(self) -> bool:
        return self.variant in ("gaussian", "laplacian", "linear")


class GramMatrix:
    """Pairwise kernel values on a point set, symmetrized and PSD-checked.

    The matrix is symmetrized as (G + G') / 2 before validation; the
    minimum eigenvalue must not fall below -PSD_ATOL.
    """

    def __init__(self, points: FiniteSpace, entries):
        g = np.asarray(entries, dtype=float)
        if g.shape != (points.size, points.size):
            raise ValueError(f"Gram matrix shape {g.shape} for {points.size} points")
        g = (g + g.T) / 2.0
        self.min_eigenvalue = float(eigvalsh(g)[0]) if points.size > 0 else 0.0
        if self.min_eigenvalue < -PSD_ATOL:
            raise NotPSDError(
                f"minimum eigenvalue {self.min_eigenvalue:.3e} below -{PSD_ATOL}"
            )
        g.flags.writeable = False
        self.points = points
        self.values = g

    @property
    def size(self) -> int:
        return self.points.size

    def __repr__(self) -> str:
        return f"GramMatrix({self.size} points, min eig {self.min_eigenvalue:.3e})"


def _coord_rows(spec: KernelSpec, space: FiniteSpace) -> np.ndarray:
    if space.coords is None:
        raise ValueError(f"{spec.variant} kernel needs coordinates on the space")
    return space.coords


def kernel_eval(spec: KernelSpec, y, y_prime, space: FiniteSpace | None = None) -> float:
    """Evaluate K(y, y') on two points.

    Points may be given as labels of `space` or as raw coordinate
    vectors (the delta variant then compares the vectors themselves).
    """

    def resolve(p):
        if space is not None and p in space:
            idx = space.index(p)
            vec = None if space.coords is None else space.coords[idx]
            return p, vec
        return None, np.asarray(p, dtype=float).reshape(-1)

    label_a, vec_a = resolve(y)
    label_b, vec_b = resolve(y_prime)
    if spec.variant == "delta":
        if label_a is not None and label_b is not None:
            same = label_a == label_b
        elif vec_a is not None and vec_b is not None:
            same = vec_a.shape == vec_b.shape and bool(np.all(vec_a == vec_b))
        else:
            same = False
        return spec.scale * (1.0 if same else 0.0)
    if vec_a is None or vec_b is None:
        raise ValueError(f"{spec.variant} kernel needs coordinates")
    if spec.variant == "gaussian":
        return spec.scale * math.exp(-spec.sigma * float(np.sum((vec_a - vec_b) ** 2)))
    if spec.variant == "laplacian":
        return spec.scale * math.exp(-spec.sigma * float(np.sum(np.abs(vec_a - vec_b))))
    return spec.scale * float(np.dot(vec_a, vec_b))


def gram(spec: KernelSpec, space: FiniteSpace) -> GramMatrix:
    """The Gram matrix G[i][j] = K(y_i, y_j) over a whole space."""
    if spec.variant == "delta":
        # labels are distinct by the space invariant
        g = spec.scale * np.eye(space.size)
    else:
        c = _coord_rows(spec, space)
        if spec.variant == "gaussian":
            g = spec.scale * np.exp(-spec.sigma * cdist(c, c, "sqeuclidean"))
        elif spec.variant == "laplacian":
            g = spec.scale * np.exp(-spec.sigma * cdist(c, c, "cityblock"))
        else:
            g = spec.scale * (c @ c.T)
    return GramMatrix(space, g)


def embed_inner(g: GramMatrix, mu: SignedMeasure, nu: SignedMeasure) -> float:
    """<M(mu), M(nu)> in the kernel's Hilbert space: mu' G nu."""
    if mu.space != g.points or nu.space != g.points:
        raise SpaceMismatchError("measures do not live on the Gram matrix's space")
    return float(mu.weights @ g.values @ nu.weights)


def mmd(g: GramMatrix, mu: SignedMeasure, nu: SignedMeasure) -> float:
    """Maximum mean discrepancy: the embedding norm of mu - nu.

    The squared norm is clamped to 0 when it sits in [-1e-12, 0), which
    absorbs roundoff; a radicand below -1e-12 means the Gram matrix is
    not PSD and raises.
    """
    if mu.space != g.points or nu.space != g.points:
        raise SpaceMismatchError("measures do not live on the Gram matrix's space")
    d = mu.weights - nu.weights
    q = float(d @ g.values @ d)
    if q < -INVARIANT_ATOL:
        raise NotPSDError(f"negative squared MMD {q:.3e}: Gram matrix is not PSD")
    return math.sqrt(max(q, 0.0))


def c_k(spec: KernelSpec, space: FiniteSpace) -> float:
    """C_K = max over points of sqrt(|K(y, y)|)."""
    if spec.variant in ("gaussian", "laplacian", "delta"):
        diag = np.full(space.size, spec.scale)
    else:
        c = _coord_rows(spec, space)
        diag = spec.scale * np.sum(c * c, axis=1)
    return math.sqrt(float(np.max(np.abs(diag))))


def embedding_injective(g: GramMatrix, tol: float = PSD_ATOL) -> bool:
    """Whether the mean embedding is injective on signed measures.

    On a finite space this is exactly nonsingularity of the Gram
    matrix: true iff its minimum eigenvalue exceeds tol.
    """
    return g.min_eigenvalue > tol
