"""Command-line surface: solving, figure emission, simulation, and audits.

Subcommands: solve-simple, solve-composite, gaussian-figure, sequential-sim,
convert, audit.  Inputs arrive as JSON (--in is a path, "-" for stdin, or an
inline JSON literal); outputs are JSON documents or CSV files written to
--out (stdout by default).  Every random operation requires an explicit
--seed; there are no wall-clock defaults, so identical (input, seed) pairs
produce byte-identical outputs.  Exit codes: 0 success, 1 input error,
2 mathematical infeasibility, 3 non-convergence.  ETEST_LOG only changes
logging verbosity, never numeric output.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from typing import Optional

import numpy as np

from . import bridge, composite_opt, gaussian, sequential, simple_opt
from .errors import (
    EtestError,
    ExistenceFailureError,
    FrameworkViolationError,
    InvalidInputError,
    NonConvergenceError,
)
from .evidence import check_validity_exact, check_validity_mc, test_from_json, test_to_json
from .measure import FiniteDistribution, GaussianLocation
from .utility import Utility

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_NO_CONVERGENCE = 3

log = logging.getLogger("etest")

FIGURE_DEFAULTS = {
    "mu": 1.0,
    "sigma": 1.0,
    "x_min": 0.0,
    "x_max": 10.0,
    "n_points": 501,
}
FIGURE_DEFAULT_H = (-2.0, -1.0, 0.0, 0.5, 0.9)


def _fmt(x: float) -> str:
    """17 significant digits, '.' decimal, locale-independent."""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(float(x), ".17g")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return [None if math.isnan(v) else ("inf" if math.isinf(v) else float(v)) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not serializable: {obj!r}")


def _encode_float(v: float):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _dump(payload: dict, out_path: Optional[str]) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2, default=_json_default) + "\n"
    if out_path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _load_input(raw: Optional[str]) -> dict:
    if raw in (None, "-"):
        text = sys.stdin.read()
    elif raw.lstrip().startswith("{"):
        text = raw
    else:
        try:
            with open(raw, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise InvalidInputError(f"cannot read input: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"input is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise InvalidInputError("input document must be a JSON object")
    return obj


def _need(obj: dict, key: str):
    if key not in obj:
        raise InvalidInputError(f'missing required field "{key}"')
    return obj[key]


def _values_list(values: np.ndarray) -> list:
    return [_encode_float(float(v)) for v in values]


def cmd_solve_simple(args) -> int:
    spec = _load_input(args.input)
    p = FiniteDistribution.from_json(_need(spec, "p"))
    q = FiniteDistribution.from_json(_need(spec, "q"))
    alpha = float(_need(spec, "alpha"))
    u = Utility.from_json(_need(spec, "utility"))
    sol = simple_opt.optimal_simple(p, q, u, alpha, tol=args.tol or simple_opt.LAMBDA_TOL)
    payload = {
        "lambda_star": sol.lambda_star,
        "objective": _encode_float(sol.objective),
        "power": _encode_float(sol.power),
        "null_mean": _encode_float(sol.null_mean),
        "test": test_to_json(sol.test),
    }
    if sol.critical_value is not None:
        payload["critical_value"] = sol.critical_value
        payload["boundary_value"] = sol.boundary_value
    _dump(payload, args.out)
    return EXIT_OK


def cmd_solve_composite(args) -> int:
    spec = _load_input(args.input)
    members = [FiniteDistribution.from_json(m) for m in _need(spec, "H")]
    q = FiniteDistribution.from_json(_need(spec, "q"))
    alpha = float(_need(spec, "alpha"))
    u = Utility.from_json(_need(spec, "utility"))
    prob = composite_opt.CompositeProblem(members, q, alpha, u)
    sol = composite_opt.solve_composite(
        prob, tol=args.tol or composite_opt.FOC_DEFAULT_TOL, seed=args.seed or 0
    )
    payload = {
        "values": _values_list(sol.values),
        "objective": _encode_float(sol.objective),
        "duals": [float(d) for d in sol.duals],
        "foc_slack": sol.foc_slack,
        "restarts_spread": sol.restarts_spread,
        "test": test_to_json(sol.test),
    }
    if sol.ripr is not None:
        payload["ripr"] = {
            "outcomes": list(sol.ripr.outcomes),
            "masses": [float(v) for v in sol.ripr.masses],
            "total_mass": sol.ripr.total_mass,
        }
    _dump(payload, args.out)
    return EXIT_OK


def _write_figure_csv(rows, path: str) -> None:
    lines = ["x,h,value"]
    lines.extend(f"{_fmt(x)},{_fmt(h)},{_fmt(v)}" for x, h, v in rows)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _figure_for_alpha(spec: dict, alpha: float, out_path: str) -> None:
    mu = float(spec.get("mu", FIGURE_DEFAULTS["mu"]))
    sigma = float(spec.get("sigma", FIGURE_DEFAULTS["sigma"]))
    x_min = float(spec.get("x_min", FIGURE_DEFAULTS["x_min"]))
    x_max = float(spec.get("x_max", FIGURE_DEFAULTS["x_max"]))
    n_points = int(spec.get("n_points", FIGURE_DEFAULTS["n_points"]))
    if n_points < 2:
        raise InvalidInputError("n_points must be at least 2")
    h_list = spec.get("h_list")
    if h_list is None:
        h_list = list(FIGURE_DEFAULT_H) + ([1.0] if alpha > 0.0 else [])
    grid = np.linspace(x_min, x_max, n_points)
    rows = gaussian.figure_data(mu, sigma, alpha, [float(h) for h in h_list], grid)
    _write_figure_csv(rows, out_path)
    log.info("wrote %d rows to %s", len(rows), out_path)


def cmd_figure(args) -> int:
    spec = _load_input(args.input) if args.input else {}
    if "alpha" in spec:
        out_path = spec.get("out_path") or args.out
        if not out_path or out_path == "-":
            raise InvalidInputError("gaussian-figure requires an output path")
        _figure_for_alpha(spec, float(spec["alpha"]), out_path)
        return EXIT_OK
    # no level given: emit both standard figures into the output directory
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    _figure_for_alpha(spec, 0.0, os.path.join(out_dir, "figure_level0.csv"))
    _figure_for_alpha(spec, 0.05, os.path.join(out_dir, "figure_level005.csv"))
    return EXIT_OK


def _require_seed(args) -> int:
    if args.seed is None:
        raise InvalidInputError("this command draws randomness: --seed is required")
    return args.seed


def cmd_sequential(args) -> int:
    spec = _load_input(args.input)
    null = FiniteDistribution.from_json(_need(spec, "null"))
    alt = FiniteDistribution.from_json(_need(spec, "alt"))
    stream = sequential.StreamModel(null, alt)
    kind = spec.get("kind", "simulate")
    if kind == "optional_stopping":
        strategy = _strategy_from_spec(spec, stream)
        value = sequential.optional_stopping_audit(
            stream, strategy, int(_need(spec, "horizon"))
        )
        _dump({"max_stopped_mean": value}, args.out)
        return EXIT_OK
    if kind != "simulate":
        raise InvalidInputError(f"unknown sequential kind {kind!r}")
    seed = _require_seed(args)
    strategy = _strategy_from_spec(spec, stream)
    summary = sequential.simulate(
        stream,
        strategy,
        n_paths=int(spec.get("n_paths", 1000)),
        horizon=int(_need(spec, "horizon")),
        under=spec.get("under", "null"),
        seed=seed,
        target_alpha=spec.get("alpha"),
    )
    _dump(summary.to_json(), args.out)
    return EXIT_OK


def _strategy_from_spec(spec: dict, stream: sequential.StreamModel):
    name = spec.get("strategy", "fischer")
    if name == "fischer":
        u = Utility.from_json(spec["utility"]) if "utility" in spec else None
        return sequential.FischerStrategy(stream, float(_need(spec, "alpha")), u)
    if name == "likelihood_ratio":
        return sequential.likelihood_ratio_strategy(stream)
    if name == "fixed":
        return sequential.FixedFactorStrategy(_need(spec, "factors"))
    raise InvalidInputError(f"unknown strategy {name!r}")


def cmd_convert(args) -> int:
    spec = _load_input(args.input)
    alpha = float(_need(spec, "alpha"))
    e = float(_need(spec, "e"))
    continuous = bridge.e_to_continuous(e, alpha)
    binary = bridge.e_to_binary(e, alpha)
    chain = bridge.markov_chain_values(e, alpha)
    payload = {
        "e": _encode_float(e),
        "alpha": alpha,
        "continuous": _encode_float(continuous),
        "binary": "reject" if binary > 0.0 else "no_reject",
        "binary_value": _encode_float(binary),
        "strong_p": _encode_float(bridge.strong_p(e)),
        "markov_chain": list(chain.as_tuple()),
    }
    _dump(payload, args.out)
    return EXIT_OK


def cmd_audit(args) -> int:
    spec = _load_input(args.input)
    kind = _need(spec, "kind")
    if kind == "validity_exact":
        test = test_from_json(_need(spec, "test"))
        members = [FiniteDistribution.from_json(m) for m in _need(spec, "H")]
        report = check_validity_exact(test, members)
        violations = sum(1 for e in report.expectations if e > 1.0 + 1e-9)
        _dump(
            {
                "max_expectation": _encode_float(report.max_expectation),
                "valid": report.valid,
                "violations": violations,
                "expectations": [_encode_float(e) for e in report.expectations],
            },
            args.out,
        )
        return EXIT_OK
    if kind == "validity_mc":
        seed = _require_seed(args)
        test = test_from_json(_need(spec, "test"))
        null = _null_model_from_spec(spec)
        report = check_validity_mc(test, null, int(spec.get("n", 100_000)), seed)
        flagged = report.estimate > 1.0 + 3.0 * report.standard_error
        _dump(
            {
                "estimate": report.estimate,
                "standard_error": report.standard_error,
                "violations": int(flagged),
            },
            args.out,
        )
        return EXIT_OK
    if kind == "cross_level":
        seed = _require_seed(args)
        test = test_from_json(_need(spec, "test"))
        null = _null_model_from_spec(spec)
        report = bridge.cross_level_audit(test, null, int(spec.get("n", 100_000)), seed)
        _dump(
            {
                "raw_estimate": report.raw_estimate,
                "raw_se": report.raw_se,
                "reduced_estimate": report.reduced_estimate,
                "reduced_se": report.reduced_se,
                "violations": int(report.flagged),
            },
            args.out,
        )
        return EXIT_OK
    if kind == "weak_p":
        seed = _require_seed(args)
        scale = float(spec.get("uniform_scale", 1.0))
        if not (0.0 < scale <= 1.0):
            raise InvalidInputError("uniform_scale must lie in (0, 1]")
        grid = [float(a) for a in spec.get("alpha_grid", (0.01, 0.05, 0.1, 0.25, 0.5))]
        rows = bridge.weak_p_audit(
            lambda rng, n: scale * rng.random(n), grid, int(spec.get("n", 100_000)), seed
        )
        _dump(
            {
                "rows": [
                    {
                        "alpha": r.alpha,
                        "frequency": r.frequency,
                        "standard_error": r.standard_error,
                        "flagged": r.flagged,
                    }
                    for r in rows
                ],
                "violations": sum(1 for r in rows if r.flagged),
            },
            args.out,
        )
        return EXIT_OK
    raise InvalidInputError(f"unknown audit kind {kind!r}")


def _null_model_from_spec(spec: dict):
    null = _need(spec, "null")
    if "sigma" in null:
        return GaussianLocation.from_json(null)
    return FiniteDistribution.from_json(null)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="etest",
        description="Construct, optimize, combine, convert, and audit evidence-scale tests.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "solve-simple": cmd_solve_simple,
        "solve-composite": cmd_solve_composite,
        "gaussian-figure": cmd_figure,
        "sequential-sim": cmd_sequential,
        "convert": cmd_convert,
        "audit": cmd_audit,
    }
    for name, handler in specs.items():
        p = sub.add_parser(name)
        p.add_argument("--in", dest="input", default=None, help="path, '-' for stdin, or inline JSON")
        p.add_argument("--out", dest="out", default=None, help="output path ('-' = stdout)")
        p.add_argument("--seed", dest="seed", type=int, default=None)
        p.add_argument("--tol", dest="tol", type=float, default=None)
        p.set_defaults(handler=handler)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("ETEST_LOG", "WARNING").upper())
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    try:
        return args.handler(args)
    except (ExistenceFailureError, FrameworkViolationError) as exc:
        log.error("infeasible: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NonConvergenceError as exc:
        log.error("non-convergence: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (InvalidInputError, ValueError) as exc:
        log.error("input error: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except EtestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
