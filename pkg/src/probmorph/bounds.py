"""Closed-form generalization bounds and a Monte Carlo verification harness.

The closed forms: a Hoeffding tail for the deviation of an empirical
risk from its expectation, its uniform version over a hypothesis class
paid for by a covering number, and a concentration bound for the
embedded distance between an empirical measure and its source.

The harness draws i.i.d. datasets from an explicit finite ground
truth, evaluates each bound's failure event exactly, and reports the
empirical failure rate with a 95% Wilson interval. On finite sample
spaces every event is measurable, so the probability of the event is
the exact object the bounds control. Trials use per-trial counter
seeds, so reports are identical regardless of scheduling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .kernels import GramMatrix, mmd
from .learning import FiniteClass
from .losses import _loss_grid, empirical_risk, expected_risk
from .morphisms import MarkovKernel
from .spaces import ProbMeasure, SignedMeasure

_WILSON_Z = 1.959963984540054  # 97.5% normal quantile


@dataclass
class BoundReport:
    """Outcome of a Monte Carlo check of one bound."""

    bound_name: str
    parameters: dict
    theoretical_bound: float
    empirical_failure_rate: float
    trials: int
    seed: int
    wilson_low: float = 0.0
    wilson_high: float = 1.0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not 0.0 <= self.empirical_failure_rate <= 1.0:
            raise ValueError("empirical failure rate must lie in [0, 1]")

    def to_json(self) -> dict:
        return {
            "bound_name": self.bound_name,
            "parameters": self.parameters,
            "theoretical_bound": self.theoretical_bound,
            "empirical_failure_rate": self.empirical_failure_rate,
            "trials": self.trials,
            "seed": self.seed,
            "wilson_low": self.wilson_low,
            "wilson_high": self.wilson_high,
        }


def hoeffding_bound(m: int, eps: float, c_k: float) -> float:
    """Failure probability bound 2 exp(-m eps^2 / (4 c_k^2)), clamped to [0, 1]."""
    if m < 1:
        raise ValueError("m must be at least 1")
    if not eps > 0 or not c_k > 0:
        raise ValueError("eps and c_k must be strictly positive")
    return min(1.0, 2.0 * math.exp(-m * eps * eps / (4.0 * c_k * c_k)))


def hoeffding_general(m: int, eps: float, value_range: float) -> float:
    """Two-sided Hoeffding failure bound 2 exp(-2 m eps^2 / range^2)."""
    if m < 1:
        raise ValueError("m must be at least 1")
    if not eps > 0 or not value_range > 0:
        raise ValueError("eps and the value range must be strictly positive")
    return min(1.0, 2.0 * math.exp(-2.0 * m * eps * eps / (value_range * value_range)))


def covering_bound(n_cover: int, m: int, eps: float, c_k: float) -> float:
    """Uniform failure bound 4 N exp(-m eps^2 / (4 c_k^2)), clamped to [0, 1].

    The caller supplies n_cover = covering_number(class, eps / (8 c_k)).
    """
    if n_cover < 1:
        raise ValueError("the covering number must be at least 1")
    return min(1.0, 2.0 * n_cover * hoeffding_bound(m, eps, c_k))


def _pairwise_sup_row_mmd(cls: FiniteClass, gY: GramMatrix) -> np.ndarray:
    n = len(cls)
    d = np.zeros((n, n))
    g = gY.values
    for i in range(n):
        for j in range(i + 1, n):
            diff = cls.kernels[i].matrix - cls.kernels[j].matrix
            q = np.einsum("xi,ij,xj->x", diff, g, diff)
            d[i, j] = d[j, i] = math.sqrt(max(float(np.max(q)), 0.0))
    return d


def covering_number(cls: FiniteClass, s: float, gY: GramMatrix) -> int:
    """Size of a greedy radius-s cover of the class, centers in class order.

    The metric is the sup over inputs of the row MMD. Greedy covers are
    valid but possibly larger than the minimal covering number, so
    bounds computed from them stay valid.
    """
    if not s > 0:
        raise ValueError("the covering radius must be strictly positive")
    d = _pairwise_sup_row_mmd(cls, gY)
    uncovered = list(range(len(cls)))
    centers = 0
    while uncovered:
        c = uncovered[0]
        centers += 1
        uncovered = [i for i in uncovered if d[c, i] > s]
    return centers


def covering_number_exact(cls: FiniteClass, s: float, gY: GramMatrix) -> int:
    """Minimal cover with centers drawn from the class; exhaustive, size <= 12."""
    if not s > 0:
        raise ValueError("the covering radius must be strictly positive")
    n = len(cls)
    if n > 12:
        raise ValueError("exact covers are only searched for class size <= 12")
    d = _pairwise_sup_row_mmd(cls, gY)
    for k in range(1, n + 1):
        for centers in combinations(range(n), k):
            if np.all(np.min(d[list(centers)], axis=0) <= s):
                return k
    return n


def mmd_concentration_bound(n: int, delta: float, k_diag_mean: float) -> float:
    """Deviation bound 2 sqrt(k_diag_mean / n) + sqrt(2 ln(1/delta) / n).

    Valid for kernels scaled so the unit ball of the embedding space
    is sup-bounded by 1 (sup K(y, y) <= 1); the caller rescales.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie strictly between 0 and 1")
    if k_diag_mean < 0:
        raise ValueError("the mean kernel diagonal cannot be negative")
    return 2.0 * math.sqrt(k_diag_mean / n) + math.sqrt(2.0 * math.log(1.0 / delta) / n)


def lipschitz_deviation_check(
    f: MarkovKernel,
    g: MarkovKernel,
    mu: ProbMeasure,
    S,
    c_k: float,
    gY: GramMatrix,
) -> bool:
    """Whether two hypotheses' risk deviations differ by at most 8 c_k d_inf(f, g).

    The left side is |(R_mu(f) - Rhat_S(f)) - (R_mu(g) - Rhat_S(g))|;
    d_inf is the sup over inputs of the row MMD between f and g. A
    1e-10 additive slack absorbs roundoff.
    """
    lhs = abs(
        (expected_risk(f, mu, gY).value - empirical_risk(f, S, gY).value)
        - (expected_risk(g, mu, gY).value - empirical_risk(g, S, gY).value)
    )
    diff = f.matrix - g.matrix
    q = np.einsum("xi,ij,xj->x", diff, gY.values, diff)
    d_inf = math.sqrt(max(float(np.max(q)), 0.0))
    return lhs <= 8.0 * c_k * d_inf + 1e-10


def wilson_interval(failures: int, trials: int) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    z2 = _WILSON_Z * _WILSON_Z
    p = failures / trials
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2.0 * trials)) / denom
    half = (
        _WILSON_Z
        * math.sqrt(p * (1.0 - p) / trials + z2 / (4.0 * trials * trials))
        / denom
    )
    return max(0.0, center - half), min(1.0, center + half)


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng((seed, trial))


def _sample_indices(rng, cumulative: np.ndarray, n: int) -> np.ndarray:
    """Inverse-CDF sampling of n category indices."""
    idx = np.searchsorted(cumulative, rng.random(n), side="right")
    # the final cumulative value can round below 1, clamp the overflow cell
    return np.minimum(idx, cumulative.size - 1)


def monte_carlo_verify(
    bound_name: str,
    ground_truth,
    subject,
    n: int,
    trials: int,
    seed: int,
    **params,
) -> BoundReport:
    """Empirically test a bound's failure event on seeded i.i.d. draws.

    bound_name selects the experiment:

      "hoeffding":          ground_truth is a joint ProbMeasure, subject a
                            MarkovKernel; params gY and eps. The event is
                            |empirical risk - expected risk| > eps.
      "covering":           subject is a FiniteClass; params gY, eps and
                            optional c_m. The event is the sup over the
                            class of the risk deviation exceeding eps;
                            the excess-risk implication (sup deviation
                            <= eps and gap <= c_m force excess risk
                            <= 2 eps + c_m) is also checked every trial
                            and counted in the report parameters.
      "mmd_concentration":  ground_truth is a ProbMeasure, subject its
                            GramMatrix (diagonal at most 1); param
                            delta. The event is the embedded distance
                            between the empirical measure of n draws
                            and the truth exceeding the deviation bound.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if n < 1:
        raise ValueError("n must be at least 1")
    if bound_name == "hoeffding":
        report = _verify_hoeffding(ground_truth, subject, n, trials, seed, **params)
    elif bound_name == "covering":
        report = _verify_covering(ground_truth, subject, n, trials, seed, **params)
    elif bound_name == "mmd_concentration":
        report = _verify_mmd(ground_truth, subject, n, trials, seed, **params)
    else:
        raise ValueError(f"unknown bound name {bound_name!r}")
    return report


def _finish(bound_name, params, theoretical, failures, trials, seed) -> BoundReport:
    low, high = wilson_interval(failures, trials)
    return BoundReport(
        bound_name=bound_name,
        parameters=params,
        theoretical_bound=theoretical,
        empirical_failure_rate=failures / trials,
        trials=trials,
        seed=seed,
        wilson_low=low,
        wilson_high=high,
    )


def _verify_hoeffding(mu: ProbMeasure, h: MarkovKernel, n, trials, seed, *, gY, eps):
    ck = math.sqrt(float(np.max(np.abs(np.diag(gY.values)))))
    grid = _loss_grid(h, gY).reshape(-1)
    true_risk = expected_risk(h, mu, gY).value
    cum = np.cumsum(mu.weights)
    cells = mu.weights.size
    failures = 0
    for t in range(trials):
        idx = _sample_indices(_trial_rng(seed, t), cum, n)
        counts = np.bincount(idx, minlength=cells)
        emp_risk = float(counts @ grid) / n
        if abs(emp_risk - true_risk) > eps:
            failures += 1
    theoretical = hoeffding_bound(n, eps, ck)
    params = {"m": n, "eps": eps, "c_k": ck}
    return _finish("hoeffding", params, theoretical, failures, trials, seed)


def _verify_covering(mu: ProbMeasure, cls: FiniteClass, n, trials, seed, *, gY, eps, c_m=0.0):
    ck = math.sqrt(float(np.max(np.abs(np.diag(gY.values)))))
    grids = np.stack([_loss_grid(h, gY).reshape(-1) for h in cls])
    true_risks = np.array([expected_risk(h, mu, gY).value for h in cls])
    best_true = float(np.min(true_risks))
    cum = np.cumsum(mu.weights)
    cells = mu.weights.size
    failures = 0
    implication_violations = 0
    for t in range(trials):
        idx = _sample_indices(_trial_rng(seed, t), cum, n)
        counts = np.bincount(idx, minlength=cells)
        emp_risks = grids @ counts / n
        sup_dev = float(np.max(np.abs(emp_risks - true_risks)))
        if sup_dev > eps:
            failures += 1
        else:
            # exact ERM on a finite class has gap 0 <= c_m
            chosen = int(np.argmin(emp_risks))
            excess = float(true_risks[chosen]) - best_true
            if excess > 2.0 * eps + c_m + 1e-12:
                implication_violations += 1
    n_cover = covering_number(cls, eps / (8.0 * ck), gY)
    theoretical = covering_bound(n_cover, n, eps, ck)
    params = {
        "m": n,
        "eps": eps,
        "c_k": ck,
        "N": n_cover,
        "c_m": c_m,
        "implication_violations": implication_violations,
    }
    return _finish("covering", params, theoretical, failures, trials, seed)


def _verify_mmd(mu: ProbMeasure, g: GramMatrix, n, trials, seed, *, delta):
    diag = np.diag(g.values)
    if float(np.max(diag)) > 1.0 + 1e-12:
        raise ValueError("rescale the kernel so its diagonal is at most 1")
    if mu.space != g.points:
        raise ValueError("ground truth does not live on the Gram matrix's space")
    k_diag_mean = float(mu.weights @ diag)
    dev_bound = mmd_concentration_bound(n, delta, k_diag_mean)
    cum = np.cumsum(mu.weights)
    cells = mu.weights.size
    failures = 0
    for t in range(trials):
        idx = _sample_indices(_trial_rng(seed, t), cum, n)
        counts = np.bincount(idx, minlength=cells)
        emp = SignedMeasure(mu.space, counts / n)
        if mmd(g, emp, mu) > dev_bound:
            failures += 1
    params = {"n": n, "delta": delta, "k_diag_mean": k_diag_mean, "deviation_bound": dev_bound}
    return _finish("mmd_concentration", params, delta, failures, trials, seed)
