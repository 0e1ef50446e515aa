"""Command-line front end.

Subcommands:

  laws      run the structural-law suite on seeded random instances
  estimate  fit a conditional kernel to a CSV dataset
  bounds    Monte Carlo verification of a concentration bound
  embed     embedded distance between two empirical samples

Exit codes: 0 success, 2 invariant failure, 64 usage error, 65 data
error. Every subcommand is deterministic given its config and seed;
output JSON is written with sorted keys so reruns are byte-identical.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import bounds as bounds_mod
from .kernels import KernelSpec, gram, mmd
from .learning import (
    FiniteClass,
    LearnerConfig,
    WFunctionalSpec,
    gamma_schedule,
    regularized_estimate,
)
from .morphisms import (
    disintegrate,
    compose,
    graph,
    graph_pushforward,
    identity_kernel,
    projection_kernel,
    pullback,
    pushforward,
)
from .serialize import (
    ConfigError,
    DataFormatError,
    dataset_from_csv,
    kernel_from_json,
    kernel_to_json,
    labels_from_csv,
    parse_config,
    space_from_config,
)
from .spaces import (
    FiniteSpace,
    ProbMeasure,
    ProductSpace,
    SpaceMismatchError,
    empirical,
    marginal,
)

EXIT_OK = 0
EXIT_INVARIANT = 2
EXIT_USAGE = 64
EXIT_DATA = 65

_LAW_TOL = 1e-10


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _build_parser() -> _Parser:
    parser = _Parser(prog="probmorph", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    laws = sub.add_parser("laws", help="verify structural laws on random instances")
    laws.add_argument("--config", default=None)
    laws.add_argument("--seed", type=int, required=True)
    laws.add_argument("--trials", type=_positive_int, default=200)
    laws.add_argument("--out", default=None)
    laws.set_defaults(func=cmd_laws)

    est = sub.add_parser("estimate", help="fit a conditional kernel to samples")
    est.add_argument("--config", required=True)
    est.add_argument("--seed", type=int, required=True)
    est.add_argument("--out", required=True)
    est.add_argument("--gamma", type=float, default=None)
    est.add_argument("--kernel", default=None)
    est.add_argument("data", help="CSV file with header x,y")
    est.set_defaults(func=cmd_estimate)

    bnd = sub.add_parser("bounds", help="Monte Carlo check of a bound")
    bnd.add_argument("--config", required=True)
    bnd.add_argument("--seed", type=int, required=True)
    bnd.add_argument("--trials", type=_positive_int, default=2000)
    bnd.add_argument("--n", type=_positive_int, default=200)
    bnd.add_argument("--out", required=True)
    bnd.set_defaults(func=cmd_bounds)

    emb = sub.add_parser("embed", help="MMD between two empirical samples")
    emb.add_argument("--config", required=True)
    emb.add_argument("--seed", type=int, default=0)
    emb.add_argument("--kernel", default=None)
    emb.add_argument("--out", default=None)
    emb.add_argument("sample_a", help="CSV file with header y")
    emb.add_argument("sample_b", help="CSV file with header y")
    emb.set_defaults(func=cmd_embed)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, SpaceMismatchError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entry() -> None:
    sys.exit(main())


# ---------------------------------------------------------------------------
# shared config plumbing
# ---------------------------------------------------------------------------
def _load_config(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file {path!r} does not exist")
    return parse_config(p.read_text())


def _read_data_file(path: str) -> str:
    p = Path(path)
    if not p.is_file():
        raise DataFormatError(f"data file {path!r} does not exist")
    return p.read_text()


def _load_json(path: str):
    try:
        return json.loads(_read_data_file(path))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def _kernel_spec(cfg: dict[str, str], override: str | None) -> KernelSpec:
    variant = override or cfg.get("kernel", "delta")
    sigma = float(cfg["sigma"]) if "sigma" in cfg else None
    scale = float(cfg.get("scale", "1.0"))
    if variant in ("gaussian", "laplacian") and sigma is None:
        sigma = 1.0
    try:
        return KernelSpec(variant, sigma=sigma, scale=scale)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _joint_from_weights(prod: ProductSpace, weights) -> ProbMeasure:
    try:
        return ProbMeasure(prod, weights)
    except ValueError as exc:
        raise DataFormatError(f"bad joint measure: {exc}") from exc


# ---------------------------------------------------------------------------
# laws
# ---------------------------------------------------------------------------
def _random_space(rng, tag: str, lo: int = 2, hi: int = 6) -> FiniteSpace:
    n = int(rng.integers(lo, hi + 1))
    return FiniteSpace([f"{tag}{i}" for i in range(n)])


def _random_stochastic(rng, source: FiniteSpace, target: FiniteSpace):
    from .morphisms import MarkovKernel

    m = rng.random((source.size, target.size)) + 1e-3
    return MarkovKernel(source, target, m / m.sum(axis=1, keepdims=True))


def _random_prob(rng, space: FiniteSpace) -> ProbMeasure:
    w = rng.random(space.size) + 1e-3
    return ProbMeasure(space, w / w.sum())


def _law_suite(seed: int, trials: int) -> dict[str, float]:
    """Max observed violation per structural law over seeded random instances."""
    worst = {
        "compose_associative": 0.0,
        "identity_units": 0.0,
        "pushforward_functorial": 0.0,
        "graph_projection_recovers_kernel": 0.0,
        "graph_pushforward_left_marginal": 0.0,
        "pullback_pushforward_adjoint": 0.0,
        "disintegration_round_trip": 0.0,
    }
    for t in range(trials):
        rng = np.random.default_rng((seed, t))
        xs = _random_space(rng, "x")
        ys = _random_space(rng, "y")
        zs = _random_space(rng, "z")
        ws = _random_space(rng, "w")
        t1 = _random_stochastic(rng, xs, ys)
        t2 = _random_stochastic(rng, ys, zs)
        t3 = _random_stochastic(rng, zs, ws)
        mu = _random_prob(rng, xs)

        a = compose(t3, compose(t2, t1)).matrix
        b = compose(compose(t3, t2), t1).matrix
        worst["compose_associative"] = max(
            worst["compose_associative"], float(np.max(np.abs(a - b)))
        )
        lu = compose(t1, identity_kernel(xs)).matrix
        ru = compose(identity_kernel(ys), t1).matrix
        worst["identity_units"] = max(
            worst["identity_units"],
            float(np.max(np.abs(lu - t1.matrix))),
            float(np.max(np.abs(ru - t1.matrix))),
        )
        lhs = pushforward(compose(t2, t1), mu).weights
        rhs = pushforward(t2, pushforward(t1, mu)).weights
        worst["pushforward_functorial"] = max(
            worst["pushforward_functorial"], float(np.max(np.abs(lhs - rhs)))
        )
        gt = graph(t1)
        proj = projection_kernel(ProductSpace(xs, ys), "right")
        worst["graph_projection_recovers_kernel"] = max(
            worst["graph_projection_recovers_kernel"],
            float(np.max(np.abs(compose(proj, gt).matrix - t1.matrix))),
        )
        joint_mu = graph_pushforward(t1, mu)
        worst["graph_pushforward_left_marginal"] = max(
            worst["graph_pushforward_left_marginal"],
            float(np.max(np.abs(marginal(joint_mu, "left").weights - mu.weights))),
        )
        f = rng.standard_normal(ys.size)
        lhs_adj = float(pushforward(t1, mu).weights @ f)
        rhs_adj = float(mu.weights @ pullback(t1, f))
        worst["pullback_pushforward_adjoint"] = max(
            worst["pullback_pushforward_adjoint"], abs(lhs_adj - rhs_adj)
        )
        joint_raw = _random_prob(rng, ProductSpace(xs, ys))
        mu_x, cond = disintegrate(joint_raw)
        back = graph_pushforward(cond, mu_x)
        worst["disintegration_round_trip"] = max(
            worst["disintegration_round_trip"],
            float(np.max(np.abs(back.weights - joint_raw.weights))),
        )
    return worst


def _check_kernel_fixture(path: str) -> str | None:
    """Validate a kernel JSON file; return the violated invariant, if any."""
    doc = _load_json(path)
    for key in ("source", "target", "rows"):
        if key not in doc:
            raise DataFormatError(f"kernel document lacks {key!r}")
    rows = np.asarray(doc["rows"], dtype=float)
    if not np.all(np.isfinite(rows)):
        return "finite entries"
    if np.any(rows < -1e-12):
        return "row nonnegativity"
    if np.any(np.abs(rows.sum(axis=1) - 1.0) > 1e-12):
        return "row-stochasticity (rows must sum to 1)"
    return None


def cmd_laws(args) -> int:
    cfg = _load_config(args.config)
    report = {
        "seed": args.seed,
        "trials": args.trials,
        "tolerance": _LAW_TOL,
        "laws": _law_suite(args.seed, args.trials),
    }
    failed = [name for name, v in report["laws"].items() if not v < _LAW_TOL]
    if "kernel_file" in cfg:
        violated = _check_kernel_fixture(cfg["kernel_file"])
        report["kernel_file"] = cfg["kernel_file"]
        if violated is not None:
            report["fixture_violation"] = violated
            failed.append(f"kernel fixture: {violated}")
    report["failed"] = failed
    if args.out:
        _write_json(Path(args.out), report)
    print(json.dumps(report, indent=2, sort_keys=True))
    if failed:
        print(f"invariant failure: {failed}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------
def cmd_estimate(args) -> int:
    cfg = _load_config(args.config)
    x_space = space_from_config(cfg, "x")
    y_space = space_from_config(cfg, "y")
    prod = ProductSpace(x_space, y_space)
    spec_kernel = _kernel_spec(cfg, args.kernel)
    data = dataset_from_csv(_read_data_file(args.data), prod)
    gamma = args.gamma
    if gamma is None:
        gamma = float(cfg["gamma"]) if "gamma" in cfg else gamma_schedule(len(data))
    if not gamma > 0:
        raise _UsageError("gamma must be strictly positive")
    config = LearnerConfig(
        restarts=int(cfg.get("restarts", "8")),
        max_iters=int(cfg.get("max_iters", "500")),
        step_size=float(cfg.get("step_size", "1.0")),
        tol=float(cfg.get("tol", "1e-9")),
        seed=args.seed,
    )
    opnorm = cfg.get("operator_norm")
    include_opnorm = None if opnorm is None else opnorm.lower() in ("on", "true", "1")
    wspec = WFunctionalSpec.from_kernel(
        spec_kernel, x_space, y_space, include_operator_norm=include_opnorm
    )
    fit = regularized_estimate(data, gamma, wspec.gram_xy, wspec, config)
    out = Path(args.out)
    _write_json(out / "estimate.json", kernel_to_json(fit.h))
    _write_json(out / "trace.json", {"objective": fit.trace})
    summary = {
        "n": len(data),
        "gamma": gamma,
        "objective": fit.objective,
        "eps_certificate": fit.eps_certificate,
        "seed": args.seed,
    }
    if "truth_kernel" in cfg:
        truth = kernel_from_json(_load_json(cfg["truth_kernel"]))
        if truth.source != x_space or truth.target != y_space:
            raise DataFormatError("truth kernel grids do not match the config spaces")
        g_y = wspec.gram_y
        err = max(
            mmd(g_y, fit.h.row(x), truth.row(x)) for x in x_space.labels
        )
        summary["sup_mmd_error_to_truth"] = err
    _write_json(out / "report.json", summary)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------
def cmd_bounds(args) -> int:
    cfg = _load_config(args.config)
    name = cfg.get("bound")
    if name is None:
        raise _UsageError("config must set 'bound'")
    if name not in ("hoeffding", "covering", "mmd_concentration"):
        raise _UsageError(f"unknown bound name {name!r}")
    kernel = _kernel_spec(cfg, None)
    if name == "mmd_concentration":
        y_space = space_from_config(cfg, "y")
        g = gram(kernel, y_space)
        truth = _truth_measure(cfg, y_space)
        report = bounds_mod.monte_carlo_verify(
            name, truth, g, args.n, args.trials, args.seed,
            delta=float(cfg.get("delta", "0.05")),
        )
    else:
        x_space = space_from_config(cfg, "x")
        y_space = space_from_config(cfg, "y")
        prod = ProductSpace(x_space, y_space)
        g_y = gram(kernel, y_space)
        truth = _truth_measure(cfg, prod)
        eps = float(cfg.get("eps", "0.2"))
        if name == "hoeffding":
            if "hypothesis" not in cfg:
                raise _UsageError("hoeffding needs a 'hypothesis' kernel file")
            h = kernel_from_json(_load_json(cfg["hypothesis"]))
            report = bounds_mod.monte_carlo_verify(
                name, truth, h, args.n, args.trials, args.seed, gY=g_y, eps=eps
            )
        else:
            if "class" not in cfg:
                raise _UsageError("covering needs a 'class' list of kernel files")
            paths = [p.strip() for p in cfg["class"].split(";") if p.strip()]
            cls = FiniteClass([kernel_from_json(_load_json(p)) for p in paths])
            report = bounds_mod.monte_carlo_verify(
                name, truth, cls, args.n, args.trials, args.seed,
                gY=g_y, eps=eps, c_m=float(cfg.get("c_m", "0.0")),
            )
    out = Path(args.out)
    _write_json(out / "report.json", report.to_json())
    table = (
        "n,theoretical_bound,empirical_failure_rate,wilson_low,wilson_high\n"
        f"{args.n},{report.theoretical_bound!r},{report.empirical_failure_rate!r},"
        f"{report.wilson_low!r},{report.wilson_high!r}\n"
    )
    out.mkdir(parents=True, exist_ok=True)
    (out / "table.csv").write_text(table)
    print(json.dumps(report.to_json(), indent=2, sort_keys=True))
    return EXIT_OK


def _truth_measure(cfg: dict[str, str], space: FiniteSpace) -> ProbMeasure:
    if "truth_measure" in cfg:
        doc = _load_json(cfg["truth_measure"])
        if "weights" not in doc:
            raise DataFormatError("truth measure document lacks weights")
        weights = doc["weights"]
    else:
        weights = np.full(space.size, 1.0 / space.size)
    return _joint_from_weights(space, weights) if isinstance(space, ProductSpace) else ProbMeasure(space, weights)


# ---------------------------------------------------------------------------
# embed
# ---------------------------------------------------------------------------
def cmd_embed(args) -> int:
    cfg = _load_config(args.config)
    y_space = space_from_config(cfg, "y")
    kernel = _kernel_spec(cfg, args.kernel)
    delta = float(cfg.get("delta", "0.05"))
    labels_a = labels_from_csv(_read_data_file(args.sample_a), y_space)
    labels_b = labels_from_csv(_read_data_file(args.sample_b), y_space)
    g = gram(kernel, y_space)
    mu_a = empirical(labels_a, y_space)
    mu_b = empirical(labels_b, y_space)
    value = mmd(g, mu_a, mu_b)
    diag = np.diag(g.values)
    scale = max(1.0, float(np.max(diag)))
    pooled = empirical(labels_a + labels_b, y_space)
    k_diag_mean = float(pooled.weights @ (diag / scale))
    # two-sample triangle bound: each empirical within its own radius of the source
    bound = math.sqrt(scale) * (
        bounds_mod.mmd_concentration_bound(len(labels_a), delta, k_diag_mean)
        + bounds_mod.mmd_concentration_bound(len(labels_b), delta, k_diag_mean)
    )
    result = {
        "mmd": value,
        "delta": delta,
        "two_sample_bound": bound,
        "n_a": len(labels_a),
        "n_b": len(labels_b),
    }
    if args.out:
        _write_json(Path(args.out), result)
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    entry()
