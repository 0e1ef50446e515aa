"""Hypothesis classes and estimators for conditional probability kernels.

Hypotheses are Markov kernels on fixed finite grids. Three class
shapes are supported: an explicit finite list, a parametric family
where each row is the normalized exponential (softmax) of a logit
vector, and the parametric family with a Lipschitz budget attached for
coordinate-carrying sources.

Estimators:

  * cerm: empirical risk minimization with a certified optimality gap
    (exact by enumeration on finite classes, multi-start gradient
    descent on logits otherwise).
  * regularized_estimate: minimizes  fidelity^2 + gamma * W  where the
    fidelity is the embedded distance between the hypothesis' graph
    pushforward and the empirical joint measure, and W is a squared
    sum of a sup term, a Lipschitz term, and an embedded operator
    norm.

The Newton interpolant turns finitely many (abscissa, measure) nodes
into a polynomial curve of signed measures that passes through the
nodes exactly and whose components always sum to one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import eigh, eigvalsh

from .kernels import GramMatrix, KernelSpec, gram
from .morphisms import MarkovKernel, _sum_zero_basis
from .spaces import Dataset, FiniteSpace, ProbMeasure, ProductSpace, SignedMeasure

_MAX_NEWTON_NODES = 12
_OPNORM_DEFAULT_LIMIT = 32  # operator-norm term default cutoff on |X|


# ---------------------------------------------------------------------------
# hypothesis classes
# ---------------------------------------------------------------------------
class FiniteClass:
    """An explicit nonempty list of Markov kernels on shared grids."""

    def __init__(self, kernels: Sequence[MarkovKernel]):
        kernels = list(kernels)
        if not kernels:
            raise ValueError("a finite hypothesis class needs at least one kernel")
        first = kernels[0]
        for k in kernels[1:]:
            if k.source != first.source or k.target != first.target:
                raise ValueError("all kernels in a class must share source and target")
        self.kernels = kernels
        self.source = first.source
        self.target = first.target

    def __len__(self) -> int:
        return len(self.kernels)

    def __iter__(self):
        return iter(self.kernels)


class ParametricClass:
    """All Markov kernels on fixed grids, reached through rowwise softmax."""

    def __init__(self, source: FiniteSpace, target: FiniteSpace):
        self.source = source
        self.target = target

    def realize(self, logits) -> MarkovKernel:
        z = np.asarray(logits, dtype=float)
        if z.shape != (self.source.size, self.target.size):
            raise ValueError(f"logit shape {z.shape} does not match the grids")
        if not np.all(np.isfinite(z)):
            raise ValueError("logits must be finite")
        return MarkovKernel(self.source, self.target, _softmax_rows(z))

    def init_logits(self, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
        return scale * rng.standard_normal((self.source.size, self.target.size))


class LipschitzGrid(ParametricClass):
    """Parametric class with an advisory Lipschitz budget over source coords."""

    def __init__(self, source: FiniteSpace, target: FiniteSpace, budget: float):
        if source.coords is None:
            raise ValueError("a Lipschitz budget needs source coordinates")
        if not budget > 0:
            raise ValueError("the Lipschitz budget must be positive")
        super().__init__(source, target)
        self.budget = budget


def gamma_schedule(n: int) -> float:
    """Default regularization weight: n^(-1/2)."""
    if n < 1:
        raise ValueError("sample size must be at least 1")
    return float(n) ** -0.5


@dataclass
class LearnerConfig:
    """Optimizer and schedule knobs shared by the estimators.

    c_schedule must be nonincreasing and nonnegative when given; the
    gamma schedule must be positive. Every random choice is driven by
    `seed` plus a restart counter, so runs are reproducible.
    """

    c_schedule: Sequence[float] | None = None
    gamma_schedule: Callable[[int], float] = gamma_schedule
    restarts: int = 8
    max_iters: int = 500
    step_size: float = 1.0
    tol: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if self.c_schedule is not None:
            cs = tuple(float(c) for c in self.c_schedule)
            if any(c < 0 for c in cs):
                raise ValueError("c_schedule entries must be nonnegative")
            if any(a < b for a, b in zip(cs, cs[1:])):
                raise ValueError("c_schedule must be nonincreasing")
            self.c_schedule = cs
        if self.restarts < 1:
            raise ValueError("restarts must be a positive integer")

    def c_at(self, n: int) -> float:
        if not self.c_schedule:
            return 0.0
        return self.c_schedule[min(n, len(self.c_schedule)) - 1]


# ---------------------------------------------------------------------------
# risks for cerm
# ---------------------------------------------------------------------------
def _pair_counts(source: FiniteSpace, target: FiniteSpace, S: Dataset) -> np.ndarray:
    c = np.zeros((source.size, target.size))
    for x, y in S.pairs:
        c[source.index(x), target.index(y)] += 1.0
    return c


class EmbeddingRisk:
    """Mean embedded quadratic loss of a hypothesis against dataset labels."""

    def __init__(self, gY: GramMatrix):
        self.gY = gY

    def counts(self, source: FiniteSpace, target: FiniteSpace, S: Dataset) -> np.ndarray:
        return _pair_counts(source, target, S)

    def value_rows(self, rows: np.ndarray, counts: np.ndarray) -> float:
        g = self.gY.values
        n = counts.sum()
        gr = rows @ g
        quad = np.einsum("xi,xi->x", gr, rows)
        fixed = float(np.sum(counts.sum(axis=0) * np.diag(g)))
        cross = float(np.sum(gr * counts))
        return (float(quad @ counts.sum(axis=1)) + fixed - 2.0 * cross) / n

    def grad_rows(self, rows: np.ndarray, counts: np.ndarray) -> np.ndarray:
        g = self.gY.values
        n = counts.sum()
        per_x = counts.sum(axis=1)
        return (2.0 * per_x[:, None] * (rows @ g) - 2.0 * (counts @ g)) / n

    def value(self, h: MarkovKernel, S: Dataset) -> float:
        counts = self.counts(h.source, h.target, S)
        return self.value_rows(h.matrix, counts)


# ---------------------------------------------------------------------------
# gradient descent on logits
# ---------------------------------------------------------------------------
def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _chain_to_logits(rows: np.ndarray, grad_rows: np.ndarray) -> np.ndarray:
    # Jacobian of rowwise softmax: diag(r) - r r'
    inner = np.sum(grad_rows * rows, axis=1, keepdims=True)
    return rows * (grad_rows - inner)


def _descend(fun_grad, z0: np.ndarray, config: LearnerConfig):
    """Armijo-backtracked gradient descent; the trace never increases."""
    z = np.array(z0, dtype=float)
    f, g = fun_grad(z)
    if not math.isfinite(f):
        raise ArithmeticError(f"non-finite objective {f!r} at the starting point")
    trace = [f]
    step = config.step_size
    for _ in range(config.max_iters):
        gn2 = float(np.sum(g * g))
        if math.sqrt(gn2) <= config.tol:
            break
        moved = False
        for _ in range(60):
            z_try = z - step * g
            f_try, g_try = fun_grad(z_try)
            if math.isfinite(f_try) and f_try <= f - 1e-4 * step * gn2:
                z, f, g = z_try, f_try, g_try
                moved = True
                break
            step *= 0.5
        if not moved:
            break
        trace.append(f)
        step = min(step * 2.0, 1e6)
    if not math.isfinite(f):
        raise ArithmeticError(f"optimizer diverged, trace tail {trace[-3:]!r}")
    return z, f, trace


# ---------------------------------------------------------------------------
# cerm
# ---------------------------------------------------------------------------
@dataclass
class CermResult:
    h: MarkovKernel
    certified_gap: float
    risk: float
    trace: list[float] = field(default_factory=list)


def cerm(
    cls, S: Dataset, risk: EmbeddingRisk, config: LearnerConfig | None = None
) -> CermResult:
    """Empirical risk minimization with a reported optimality gap.

    Finite classes are enumerated exactly (gap 0). Parametric classes
    run `config.restarts` seeded gradient-descent starts plus warm
    starts at the uniform kernel and the empirical section; the gap is
    measured against an independent coarse probe ensemble and is not a
    global-optimality certificate.
    """
    if len(S) == 0:
        raise ValueError("cerm needs a nonempty dataset")
    config = config or LearnerConfig()
    if isinstance(risk, GramMatrix):
        risk = EmbeddingRisk(risk)
    if isinstance(cls, FiniteClass):
        values = [risk.value(h, S) for h in cls]
        best = int(np.argmin(values))
        return CermResult(h=cls.kernels[best], certified_gap=0.0, risk=values[best])

    counts = risk.counts(cls.source, cls.target, S)

    def fun_grad(z):
        rows = _softmax_rows(z)
        return risk.value_rows(rows, counts), _chain_to_logits(
            rows, risk.grad_rows(rows, counts)
        )

    finals = _multistart(cls, fun_grad, config, counts)
    best_val, best_z, best_trace = finals
    rows = _softmax_rows(best_z)
    probe_best = min(
        risk.value_rows(r, counts) for r in _probe_rows(cls, counts, config)
    )
    gap = max(0.0, best_val - probe_best)
    return CermResult(
        h=MarkovKernel(cls.source, cls.target, rows),
        certified_gap=gap,
        risk=best_val,
        trace=best_trace,
    )


def _warm_starts(cls: ParametricClass, counts: np.ndarray) -> list[np.ndarray]:
    nx, ny = cls.source.size, cls.target.size
    sect = _section_rows(counts)
    return [np.zeros((nx, ny)), np.log(np.clip(sect, 1e-12, None))]


def _multistart(cls, fun_grad, config: LearnerConfig, counts: np.ndarray):
    starts = _warm_starts(cls, counts)
    for r in range(config.restarts):
        rng = np.random.default_rng((config.seed, r))
        starts.append(cls.init_logits(rng))
    best = None
    for z0 in starts:
        z, f, trace = _descend(fun_grad, z0, config)
        if best is None or f < best[0]:
            best = (f, z, trace)
    return best


def _probe_rows(cls, counts: np.ndarray, config: LearnerConfig) -> list[np.ndarray]:
    """Coarse candidates, evaluated without descent."""
    nx, ny = cls.source.size, cls.target.size
    rows = [np.full((nx, ny), 1.0 / ny), _section_rows(counts)]
    for r in range(16):
        # 104729 tags the probe stream apart from the restart stream
        rng = np.random.default_rng((config.seed, 104729, r))
        rows.append(_softmax_rows(2.0 * rng.standard_normal((nx, ny))))
    return rows


def _section_rows(counts: np.ndarray) -> np.ndarray:
    """Empirical conditional rows; uniform where x was never observed."""
    ny = counts.shape[1]
    totals = counts.sum(axis=1)
    rows = np.full(counts.shape, 1.0 / ny)
    seen = totals > 0
    rows[seen] = counts[seen] / totals[seen, None]
    return rows


def empirical_section(S: Dataset) -> MarkovKernel:
    """The empirical conditional kernel of a dataset.

    Rows at observed inputs are the conditional frequencies, rows at
    unobserved inputs are uniform; pushing the empirical input
    marginal through the graph reproduces the empirical joint measure.
    """
    if len(S) == 0:
        raise ValueError("cannot build an empirical section from no samples")
    left, right = S.space.left, S.space.right
    counts = _pair_counts(left, right, S)
    return MarkovKernel(left, right, _section_rows(counts))


# ---------------------------------------------------------------------------
# W functional
# ---------------------------------------------------------------------------
@dataclass
class WFunctionalSpec:
    """Which terms of the regularizer to enable, and their geometries.

    gram_xy embeds joint measures, gram_y embeds rows, gram_x embeds
    input measures (used by the operator-norm term). At least one term
    must be enabled.
    """

    gram_xy: GramMatrix
    gram_y: GramMatrix
    gram_x: GramMatrix
    include_sup: bool = True
    include_lipschitz: bool = True
    include_operator_norm: bool = False

    def __post_init__(self):
        if not (self.include_sup or self.include_lipschitz or self.include_operator_norm):
            raise ValueError("at least one W term must be enabled")
        expected = ProductSpace(self.gram_x.points, self.gram_y.points)
        if self.gram_xy.points != expected:
            raise ValueError("gram_xy must live on the product of gram_x and gram_y points")

    @classmethod
    def from_kernel(
        cls,
        k: KernelSpec,
        x_space: FiniteSpace,
        y_space: FiniteSpace,
        include_sup: bool = True,
        include_lipschitz: bool = True,
        include_operator_norm: bool | None = None,
    ) -> "WFunctionalSpec":
        if include_operator_norm is None:
            include_operator_norm = x_space.size <= _OPNORM_DEFAULT_LIMIT
        return cls(
            gram_xy=gram(k, ProductSpace(x_space, y_space)),
            gram_y=gram(k, y_space),
            gram_x=gram(k, x_space),
            include_sup=include_sup,
            include_lipschitz=include_lipschitz,
            include_operator_norm=include_operator_norm,
        )


class _WEval:
    """Value and row-gradient of W(h) = (sup + lipschitz + opnorm)^2."""

    # all-pairs Lipschitz below this source size, nearest neighbors above
    ALL_PAIRS_LIMIT = 256

    def __init__(self, spec: WFunctionalSpec):
        self.spec = spec
        x_space = spec.gram_x.points
        y_space = spec.gram_y.points
        nx, ny = x_space.size, y_space.size
        self.nx, self.ny = nx, ny
        self.g2 = spec.gram_y.values
        self.g1 = spec.gram_xy.values
        self.g1_blocks = self.g1.reshape(nx, ny, nx, ny)
        # diagonal blocks give the embedded norm of a graph row
        self.diag_blocks = np.stack([self.g1_blocks[i, :, i, :] for i in range(nx)])
        self.pairs, self.dists = self._lipschitz_pairs(x_space)
        if spec.include_operator_norm and nx > 1:
            b = _sum_zero_basis(nx)
            c = b.T @ spec.gram_x.values @ b
            c = (c + c.T) / 2.0
            if float(eigvalsh(c)[0]) <= 1e-9:
                raise ValueError("input Gram matrix is singular on the sum-zero subspace")
            self.basis = b
            self.c = c
        else:
            self.basis = None
            self.c = None

    def _lipschitz_pairs(self, x_space: FiniteSpace):
        if not self.spec.include_lipschitz or x_space.size < 2:
            return np.zeros((0, 2), dtype=int), np.zeros(0)
        if x_space.coords is None:
            raise ValueError("the Lipschitz term needs coordinates on the source")
        c = x_space.coords
        n = x_space.size
        if n <= self.ALL_PAIRS_LIMIT:
            idx = [(i, j) for i in range(n) for j in range(i + 1, n)]
        else:
            # nearest-neighbor pairs only: a documented lower bound
            d2 = np.sum((c[:, None, :] - c[None, :, :]) ** 2, axis=2)
            np.fill_diagonal(d2, np.inf)
            idx = sorted({(min(i, j), max(i, j)) for i, j in enumerate(np.argmin(d2, axis=1))})
        pairs = np.array(idx, dtype=int)
        dists = np.linalg.norm(c[pairs[:, 0]] - c[pairs[:, 1]], axis=1)
        return pairs, dists

    def value_grad(self, rows: np.ndarray, want_grad: bool = True):
        s, gs = self._sup_term(rows, want_grad)
        l, gl = self._lipschitz_term(rows, want_grad)
        o, go = self._opnorm_term(rows, want_grad)
        total = s + l + o
        value = total * total
        if not want_grad:
            return value, None
        return value, 2.0 * total * (gs + gl + go)

    def _sup_term(self, rows, want_grad):
        zero = np.zeros_like(rows)
        if not self.spec.include_sup:
            return 0.0, zero
        qy = np.einsum("xi,ij,xj->x", rows, self.g2, rows)
        qg = np.einsum("xy,xyz,xz->x", rows, self.diag_blocks, rows)
        ny_norm = np.sqrt(np.clip(qy, 0.0, None))
        ng_norm = np.sqrt(np.clip(qg, 0.0, None))
        phi = ny_norm + ng_norm
        i = int(np.argmax(phi))
        if not want_grad:
            return float(phi[i]), zero
        grad = zero
        r = rows[i]
        if ny_norm[i] > 0:
            grad[i] += (self.g2 @ r) / ny_norm[i]
        if ng_norm[i] > 0:
            grad[i] += (self.diag_blocks[i] @ r) / ng_norm[i]
        return float(phi[i]), grad

    def _lipschitz_term(self, rows, want_grad):
        zero = np.zeros_like(rows)
        if not self.spec.include_lipschitz or len(self.pairs) == 0:
            return 0.0, zero
        diffs = rows[self.pairs[:, 0]] - rows[self.pairs[:, 1]]
        q = np.einsum("pi,ij,pj->p", diffs, self.g2, diffs)
        q = np.clip(q, 0.0, None)
        degenerate = self.dists == 0.0
        if np.any(degenerate & (q > 1e-20)):
            raise ValueError("duplicate source coordinates with differing rows")
        ratios = np.where(degenerate, 0.0, np.sqrt(q) / np.where(degenerate, 1.0, self.dists))
        p = int(np.argmax(ratios))
        val = float(ratios[p])
        if not want_grad or val == 0.0:
            return val, zero
        i, j = self.pairs[p]
        grad = zero
        step = (self.g2 @ diffs[p]) / (math.sqrt(q[p]) * self.dists[p])
        grad[i] += step
        grad[j] -= step
        return val, grad

    def _opnorm_term(self, rows, want_grad):
        zero = np.zeros_like(rows)
        if not self.spec.include_operator_norm or self.basis is None:
            return 0.0, zero
        m = np.einsum("iy,iyjz,jz->ij", rows, self.g1_blocks, rows)
        a = self.basis.T @ m @ self.basis
        a = (a + a.T) / 2.0
        vals, vecs = eigh(a, self.c)
        lam = float(vals[-1])
        if lam <= 0.0:
            return 0.0, zero
        o = math.sqrt(lam)
        if not want_grad:
            return o, zero
        u = self.basis @ vecs[:, -1]  # normalized so u' G_x u = 1
        t = np.einsum("j,kyjz,jz->ky", u, self.g1_blocks, rows)
        grad = (u[:, None] * t) / o
        return o, grad


def w_functional(h: MarkovKernel, spec: WFunctionalSpec) -> float:
    """The regularizer (sup + lipschitz + opnorm)^2 of a hypothesis."""
    if h.source != spec.gram_x.points or h.target != spec.gram_y.points:
        raise ValueError("hypothesis grids do not match the W geometry")
    value, _ = _WEval(spec).value_grad(h.matrix, want_grad=False)
    return value


# ---------------------------------------------------------------------------
# regularized estimation
# ---------------------------------------------------------------------------
@dataclass
class RegularizedFit:
    h: MarkovKernel
    objective: float
    eps_certificate: float
    trace: list[float] = field(default_factory=list)


def regularized_estimate(
    S: Dataset,
    gamma: float,
    gXY: GramMatrix,
    spec: WFunctionalSpec,
    config: LearnerConfig | None = None,
) -> RegularizedFit:
    """Minimize embedded-fidelity^2 + gamma * W over all kernels on the grids.

    The fidelity compares the hypothesis' graph pushforward of the
    empirical input marginal against the empirical joint, in the
    geometry of gXY. Multi-start descent as in cerm; eps_certificate
    is the margin (clamped at 0) by which an independent coarse probe
    ensemble failed to beat the returned optimum. Callers expecting a
    gamma^2-minimizer should check eps_certificate <= gamma^2.
    """
    if len(S) == 0:
        raise ValueError("regularized_estimate needs a nonempty dataset")
    if not gamma > 0:
        raise ValueError("gamma must be strictly positive")
    config = config or LearnerConfig()
    left, right = S.space.left, S.space.right
    if gXY.points != S.space:
        raise ValueError("gXY must live on the dataset's product space")
    if spec.gram_x.points != left or spec.gram_y.points != right:
        raise ValueError("W geometry does not match the dataset grids")
    cls = ParametricClass(left, right)
    counts = _pair_counts(left, right, S)
    n = counts.sum()
    mu_x = counts.sum(axis=1) / n
    target = (counts / n).reshape(-1)
    g1 = gXY.values
    weval = _WEval(spec)

    def objective_rows(rows, want_grad=True):
        push = (mu_x[:, None] * rows).reshape(-1)
        d = push - target
        g1d = g1 @ d
        fid = float(d @ g1d)
        wval, wgrad = weval.value_grad(rows, want_grad)
        value = fid + gamma * wval
        if not want_grad:
            return value, None
        grad = 2.0 * mu_x[:, None] * g1d.reshape(rows.shape) + gamma * wgrad
        return value, grad

    def fun_grad(z):
        rows = _softmax_rows(z)
        value, grad_rows = objective_rows(rows)
        return value, _chain_to_logits(rows, grad_rows)

    best_val, best_z, best_trace = _multistart(cls, fun_grad, config, counts)
    probe_best = min(
        objective_rows(r, want_grad=False)[0] for r in _probe_rows(cls, counts, config)
    )
    fit_rows = _softmax_rows(best_z)
    return RegularizedFit(
        h=MarkovKernel(left, right, fit_rows),
        objective=best_val,
        eps_certificate=max(0.0, best_val - probe_best),
        trace=best_trace,
    )


# ---------------------------------------------------------------------------
# Newton interpolation of measure-valued nodes
# ---------------------------------------------------------------------------
class NewtonInterpolant:
    """Componentwise divided-difference polynomial through measure nodes.

    Evaluation returns a SignedMeasure whose weights sum to 1 (the
    interpolant of constant data is that constant); between nodes the
    weights may leave the simplex, and `project=True` maps the queried
    value onto the simplex without touching node values.
    """

    def __init__(self, nodes: Sequence[tuple[float, ProbMeasure]]):
        nodes = list(nodes)
        if not nodes:
            raise ValueError("at least one node is required")
        if len(nodes) > _MAX_NEWTON_NODES:
            raise ValueError(
                f"{len(nodes)} nodes exceed the conditioning guard of "
                f"{_MAX_NEWTON_NODES}; split the node set"
            )
        xs = np.array([float(x) for x, _ in nodes])
        if len(set(xs.tolist())) != len(xs):
            raise ValueError("node abscissas must be distinct")
        space = nodes[0][1].space
        for _, m in nodes[1:]:
            if m.space != space:
                raise ValueError("all node measures must share one space")
        table = np.stack([m.weights for _, m in nodes]).astype(float)
        k = len(nodes)
        coeffs = [table[0].copy()]
        for order in range(1, k):
            table = (table[1:] - table[:-1]) / (xs[order:] - xs[:-order])[:, None]
            coeffs.append(table[0].copy())
        self.space = space
        self.xs = xs
        self.coeffs = np.stack(coeffs)

    def __call__(self, x: float, project: bool = False) -> SignedMeasure:
        acc = self.coeffs[-1].copy()
        for order in range(len(self.xs) - 2, -1, -1):
            acc = acc * (x - self.xs[order]) + self.coeffs[order]
        if project:
            return ProbMeasure(self.space, _project_simplex(acc))
        return SignedMeasure(self.space, acc)


def newton_interpolant(nodes: Sequence[tuple[float, ProbMeasure]]) -> NewtonInterpolant:
    """Build the divided-difference interpolant through the given nodes."""
    return NewtonInterpolant(nodes)


def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort method)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u * np.arange(1, len(v) + 1) > css)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)
