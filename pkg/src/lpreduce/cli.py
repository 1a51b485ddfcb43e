"""Command-line driver: ``lpreduce {lewis,embed,psumming,hypercube,validate}``.

Every output embeds the resolved run configuration: JSON outputs under a
``config`` key, CSV outputs as a leading ``# config: {...}`` comment line.
Exit status is 0 on success, 2 for invalid input and 3 for algorithmic
failure, with a JSON error document on stdout.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .empirics import (
    DEFAULT_SAMPLES,
    DEFAULT_TRIALS,
    dudley_bound,
    entropy_curve,
    fit_scaling,
    rademacher_sup,
)
from .hypercube import growth_experiment, walsh_space
from .lewis import DEFAULT_MAX_ITER, DEFAULT_TOL, LewisConvergenceError, lewis_change, lewis_density
from .measure import (
    EuclideanBall,
    InvalidInput,
    Subspace,
    SupOnPoints,
    WeightedSpace,
    _parse_p,
    instance_from_dict,
)
from .sparsify import DEFAULT_PROBES, HalvingError, measured_distortion, reduce
from .summing import DEFAULT_RESTARTS, DEFAULT_STEPS, FiniteRankOperator, saturation_curve

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_ALGORITHM = 3


class AlgorithmFailure(RuntimeError):
    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details or {}


# -- helpers ----------------------------------------------------------------------

def _read_json(path: str) -> tuple[dict, str]:
    raw = Path(path).read_bytes()
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path}: not valid JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise InvalidInput(f"{path}: expected a JSON object")
    return data, hashlib.sha256(raw).hexdigest()


def _load_subspace(args) -> tuple[Subspace, float, dict]:
    data, digest = _read_json(args.input)
    sub, file_p = instance_from_dict(data)
    p = args.p if args.p is not None else file_p
    if p is None:
        raise InvalidInput("p is given neither on the command line nor in the input")
    return sub, p, {"input_sha256": digest, "p": p}


def _p_value(p: float):
    return "inf" if math.isinf(p) else p


def _config(args, extra: dict | None = None) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "out", "csv")}
    cfg.update(extra or {})
    if "p" in cfg and cfg["p"] is not None:
        cfg["p"] = _p_value(cfg["p"])
    cfg["version"] = __version__
    return cfg


def _dump_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _csv_text(config: dict, header: list, rows: list, notes: dict | None = None) -> str:
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
    for key, value in (notes or {}).items():
        buf.write(f"# {key}: {json.dumps(value)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _emit(text: str, path: str | None):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _parse_ks(text: str) -> list[int]:
    try:
        ks = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad k list {text!r}") from None
    if not ks or ks[0] < 1 or any(b <= a for a, b in zip(ks, ks[1:])):
        raise argparse.ArgumentTypeError("ks must be strictly increasing positive integers")
    return ks


def _parse_p_arg(text: str) -> float:
    try:
        return _parse_p(text)
    except (InvalidInput, ValueError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


# -- subcommands ------------------------------------------------------------------

def cmd_lewis(args) -> int:
    sub, p, extra = _load_subspace(args)
    try:
        res = lewis_density(sub, p, tol=args.tol, max_iter=args.max_iter, seed=args.seed)
    except LewisConvergenceError as exc:
        raise AlgorithmFailure(str(exc), {"best_residual": exc.best_residual,
                                          "iterations": exc.iterations}) from None
    doc = {
        "config": _config(args, extra),
        "beta": res.beta.values.tolist(),
        "residual": res.residual,
        "iterations": res.iterations,
    }
    _emit(_dump_json(doc), args.out)
    return EXIT_OK


def cmd_embed(args) -> int:
    sub, p, extra = _load_subspace(args)
    if not (1 < p < math.inf) or p == 2:
        raise InvalidInput("embed needs 1 < p < 2 or 2 < p < inf")
    config = _config(args, extra)
    try:
        trace = reduce(sub, p, args.target_m, seed=args.seed, epsilon=args.epsilon,
                       retry_budget=args.retry_budget, probes=args.probes)
    except HalvingError as exc:
        partial = exc.trace.to_dict() if exc.trace is not None else None
        raise AlgorithmFailure(str(exc), {"best_theta": exc.best_theta,
                                          "partial_trace": partial}) from None
    except LewisConvergenceError as exc:
        raise AlgorithmFailure(str(exc), {"best_residual": exc.best_residual}) from None
    doc = trace.to_dict()
    doc["config"] = config
    doc["measured_distortion"] = measured_distortion(sub, trace, p, samples=args.samples,
                                                     seed=args.seed)
    _emit(_dump_json(doc), args.out)
    rows = [[i, s.size_after, s.partition_ratio, s.retries, s.distortion]
            for i, s in enumerate(trace.stages)]
    text = _csv_text(config, ["stage", "size", "theta", "retries", "distortion"], rows)
    if args.csv is not None:
        Path(args.csv).write_text(text)
    elif args.out is not None:
        Path(args.out).with_suffix(".stages.csv").write_text(text)
    return EXIT_OK


def load_operator(data: dict) -> FiniteRankOperator:
    """Operator JSON: ``matrix`` (target_size x d rows), optional ``domain``,
    ``target_weights`` or ``target_measure`` and ``target_p``.

    ``domain`` is ``"euclidean"`` (default) or ``{"type": "sup", "basis": rows,
    "weights": [...]}``.  Without ``target_weights`` the target is the counting
    measure (``target_measure: "counting"``, the default) or the uniform
    probability (``"uniform"``).  ``target_p`` defaults to 2.
    """
    try:
        M = np.atleast_2d(np.asarray(data["matrix"], dtype=np.float64))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInput(f"bad operator: {exc}") from None
    rows = M.shape[0]
    target_p = _parse_p(data.get("target_p", 2))
    dom_spec = data.get("domain", "euclidean")
    if dom_spec == "euclidean":
        domain = EuclideanBall(M.shape[1])
    elif isinstance(dom_spec, dict) and dom_spec.get("type") == "sup":
        emb = np.atleast_2d(np.asarray(dom_spec["basis"], dtype=np.float64))
        w = dom_spec.get("weights")
        carrier = WeightedSpace.uniform(emb.shape[0]) if w is None else WeightedSpace.from_masses(w)
        domain = SupOnPoints(carrier, emb)
    else:
        raise InvalidInput(f"unknown domain {dom_spec!r}")
    if "target_weights" in data:
        target = WeightedSpace.from_masses(data["target_weights"])
    else:
        measure = data.get("target_measure", "counting")
        if measure not in ("counting", "uniform"):
            raise InvalidInput(f"unknown target_measure {measure!r}")
        target = WeightedSpace.uniform(rows)
        if measure == "counting" and not math.isinf(target_p):
            # l_q^m is L_q of the uniform probability scaled by m^(1/q)
            M = M * rows ** (1.0 / target_p)
    return FiniteRankOperator(M, domain, target, target_p)


def cmd_psumming(args) -> int:
    data, digest = _read_json(args.input)
    u = load_operator(data)
    config = _config(args, {"input_sha256": digest})
    curve = saturation_curve(u, args.ks, args.p, seed=args.seed, restarts=args.restarts,
                             steps=args.steps)
    rows = [[c.k, repr(c.value), c.restarts, repr(c.spread)] for c in curve]
    _emit(_csv_text(config, ["k", "value", "restarts", "spread"], rows), args.out)
    return EXIT_OK


def cmd_hypercube(args) -> int:
    ws = walsh_space(args.n, args.m)
    config = _config(args, {"dim": ws.dim})
    curve = growth_experiment(args.n, args.m, args.p, args.ks, seed=args.seed,
                              restarts=args.restarts, steps=args.steps)
    rows = [[c.k, repr(c.value), c.restarts, repr(c.spread)] for c in curve]
    _emit(_csv_text(config, ["k", "value", "restarts", "spread"], rows), args.out)
    return EXIT_OK


def cmd_validate(args) -> int:
    sub, p, extra = _load_subspace(args)
    config = _config(args, extra)
    if args.check == "rademacher":
        mean, se = rademacher_sup(sub, p, trials=args.trials, probes=args.probes,
                                  seed=args.seed, gaussian=args.gaussian)
        text = _csv_text(config, ["mean", "std_error", "trials"],
                         [[repr(mean), repr(se), args.trials]])
    else:
        if 1 < p < math.inf:
            sub = lewis_change(sub, p)[0]
        metric = "sup" if args.check == "entropy" else "delta"
        curve = entropy_curve(sub, p, samples=args.samples, seed=args.seed, metric=metric)
        notes = {}
        if args.check == "entropy":
            notes["fit_scaling"] = fit_scaling(curve)
        else:
            integral = dudley_bound(curve)
            mean, se = rademacher_sup(sub, p, trials=args.trials, probes=args.probes,
                                      seed=args.seed, gaussian=True)
            notes["dudley_integral"] = integral
            notes["gaussian_sup_mean"] = mean
            notes["gaussian_sup_std_error"] = se
            notes["fitted_constant"] = mean / integral if integral > 0 else None
        rows = [[repr(r), c] for r, c in zip(curve.radii, curve.counts)]
        text = _csv_text(config, ["radius", "count"], rows, notes)
    _emit(text, args.out)
    return EXIT_OK


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lpreduce", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, needs_input=True, p_required=False):
        if needs_input:
            sp.add_argument("--input", required=True, help="instance JSON")
        sp.add_argument("--p", type=_parse_p_arg, required=p_required, default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None, help="output path (stdout if omitted)")

    sp = sub.add_parser("lewis", help="Lewis density of a subspace")
    common(sp)
    sp.add_argument("--tol", type=float, default=DEFAULT_TOL)
    sp.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    sp.set_defaults(func=cmd_lewis)

    sp = sub.add_parser("embed", help="iterated halving of the measure space")
    common(sp)
    sp.add_argument("--target-m", type=int, required=True)
    sp.add_argument("--epsilon", type=float, default=0.5)
    sp.add_argument("--retry-budget", type=int, default=50)
    sp.add_argument("--probes", type=int, default=DEFAULT_PROBES)
    sp.add_argument("--samples", type=int, default=1000,
                    help="directions for the measured distortion")
    sp.add_argument("--csv", default=None, help="per-stage CSV (default: next to --out)")
    sp.set_defaults(func=cmd_embed)

    sp = sub.add_parser("psumming", help="k-vector p-summing saturation curve")
    common(sp, p_required=True)
    sp.add_argument("--ks", type=_parse_ks, required=True)
    sp.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS)
    sp.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    sp.set_defaults(func=cmd_psumming)

    sp = sub.add_parser("hypercube", help="growth curve of the Walsh-tail identity")
    common(sp, needs_input=False, p_required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--ks", type=_parse_ks, required=True)
    sp.add_argument("--restarts", type=int, default=8)
    sp.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    sp.set_defaults(func=cmd_hypercube)

    sp = sub.add_parser("validate", help="empirical process and entropy checks")
    common(sp)
    sp.add_argument("--check", choices=("rademacher", "entropy", "dudley"), required=True)
    sp.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    sp.add_argument("--probes", type=int, default=DEFAULT_PROBES)
    sp.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    sp.add_argument("--gaussian", action="store_true", help="Gaussian instead of sign weights")
    sp.set_defaults(func=cmd_validate)
    return parser


def _finite(obj):
    """Replace non-finite floats by None so the document is strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _error(kind: str, message: str, code: int, details: dict | None = None) -> int:
    doc = {"error": {"type": kind, "message": message, "exit_code": code}}
    if details:
        doc["error"]["details"] = _finite(details)
    sys.stdout.write(json.dumps(doc, sort_keys=True, allow_nan=False) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return EXIT_OK
        return _error("usage", "invalid command line", EXIT_INVALID)
    try:
        return args.func(args)
    except (InvalidInput, OSError, KeyError, TypeError, ValueError) as exc:
        return _error("invalid_input", str(exc), EXIT_INVALID)
    except AlgorithmFailure as exc:
        return _error("algorithm_failure", str(exc), EXIT_ALGORITHM, exc.details)
    except (HalvingError, LewisConvergenceError) as exc:
        return _error("algorithm_failure", str(exc), EXIT_ALGORITHM)


if __name__ == "__main__":
    sys.exit(main())
