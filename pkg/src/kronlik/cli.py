"""``kronlik`` command line.

Subcommands: simulate, estimate, diagnose, probability, family.

Exit codes: 0 success, 1 usage or IO error, 2 numerical failure,
3 existence or uniqueness refusal.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, core, diagonal, flipflop, io, uniqueness
from .core import KroneckerCovariance, MatrixDataset, Status
from .errors import KronlikError, WrongShape
from .rng import master_rng, resolve_seed

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_REFUSED = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _matrix_lines(name: str, m: np.ndarray) -> list[str]:
    return [f"{name}:"] + ["  " + line for line in io.format_matrix(m).splitlines()]


def _emit(out, lines: Sequence[str]) -> None:
    out.write("\n".join(lines) + "\n")


def _write_manifest(args, command: str, config: dict, inputs: dict, primary: Optional[str]) -> None:
    manifest = {
        "command": command,
        "argv": list(args._argv),
        "seed": config.get("seed"),
        "config": config,
        "tool_version": __version__,
        "input_digest": inputs,
    }
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    target = args.manifest or (primary + ".manifest.json" if primary else None)
    if target:
        Path(target).write_text(text)
    else:
        sys.stderr.write("manifest: " + json.dumps(manifest, sort_keys=True) + "\n")


# simulate


def cmd_simulate(args, out) -> int:
    seed = resolve_seed(args.seed)
    gamma = io.read_matrix(args.gamma)
    psi = io.read_matrix(args.psi)
    if gamma.shape != (args.p, args.p) or psi.shape != (args.q, args.q):
        raise WrongShape(f"gamma must be {args.p}x{args.p} and psi {args.q}x{args.q}")
    mean = np.zeros((args.p, args.q)) if args.mean is None else io.read_matrix(args.mean)
    if mean.shape != (args.p, args.q):
        raise WrongShape(f"mean must be {args.p}x{args.q}")
    cov = KroneckerCovariance(gamma, psi)
    x = core.sample_matrix_normal(mean, cov, args.n, master_rng(seed))
    text = io.format_dataset(MatrixDataset(x))
    if args.out:
        Path(args.out).write_text(text)
    else:
        out.write(text)
    _write_manifest(
        args,
        "simulate",
        {"seed": seed, "n": args.n, "p": args.p, "q": args.q},
        {"gamma": io.file_digest(args.gamma), "psi": io.file_digest(args.psi), "mean": io.file_digest(args.mean)},
        args.out,
    )
    return EXIT_OK


# estimate


def _uniqueness_warnings(data: MatrixDataset) -> list[str]:
    if data.known_mean is not None:
        return []
    if data.n == 2 and data.p == data.q:
        return ["warning: maximizer is not unique for n=2, p=q; the estimate depends on --init-psi"]
    if (data.n, data.p, data.q) == (3, 2, 2):
        try:
            rep = uniqueness.diagnose(data)
        except KronlikError:
            return ["warning: uniqueness could not be decided for this n=3, p=q=2 dataset"]
        if rep.classification is uniqueness.Classification.NON_UNIQUE:
            return ["warning: maximizer is not unique (disc(W) > 0); the estimate depends on --init-psi"]
    elif flipflop.existence_gate(data.n, data.p, data.q).zone is flipflop.Zone.UNKNOWN:
        return ["warning: n <= p*q, existence and uniqueness are not guaranteed"]
    return []


def cmd_estimate(args, out) -> int:
    data = io.read_dataset(args.input)
    init_psi = None if args.init_psi is None else io.read_matrix(args.init_psi)
    warnings: list[str] = []
    if args.model == "diagonal":
        kwargs = {}
        if args.max_iter is not None:
            kwargs["max_iterations"] = args.max_iter
        if args.tol is not None:
            kwargs["tol"] = args.tol
        if init_psi is not None:
            kwargs["init_psi"] = np.diag(init_psi) if init_psi.shape[0] == init_psi.shape[1] else init_psi.ravel()
        est = diagonal.diagonal_mle(data, **kwargs)
        report = core.EstimateReport(
            covariance=est.covariance,
            log_likelihood=est.log_likelihood,
            iterations=est.iterations,
            status=est.status,
            residual=est.residual,
            model="diagonal",
        )
    else:
        cfg = flipflop.FlipFlopConfig(init_psi=init_psi)
        if args.max_iter is not None:
            cfg.max_iterations = args.max_iter
        if args.tol is not None:
            cfg.product_tol = args.tol
        if args.model == "general":
            report = flipflop.flip_flop(data, cfg)
            warnings = _uniqueness_warnings(data)
        else:
            report = diagonal.one_diag_mle(data, cfg)
            if data.p >= 3:
                warnings = ["warning: uniqueness is only established for p = 2 in this model"]
    if args.json:
        payload = io.estimate_to_dict(report)
        payload["warnings"] = warnings
        out.write(io.dumps(payload) + "\n")
    else:
        lines = [
            f"model: {report.model}",
            f"status: {report.status.value}",
            f"existence_zone: {report.zone or 'n/a'}",
            f"log_likelihood: {report.log_likelihood!r}",
            f"iterations: {report.iterations}",
            f"residual: {report.residual:.3e}",
        ]
        lines += _matrix_lines("gamma", report.covariance.gamma)
        lines += _matrix_lines("psi", report.covariance.psi)
        lines += warnings
        _emit(out, lines)
    if args.out:
        Path(args.out).write_text(io.dumps(io.estimate_to_dict(report)) + "\n")
    _write_manifest(
        args,
        "estimate",
        {"model": args.model, "tol": args.tol, "max_iter": args.max_iter},
        {"input": io.file_digest(args.input), "init_psi": io.file_digest(args.init_psi)},
        args.out,
    )
    return EXIT_OK if report.status is Status.CONVERGED else EXIT_NUMERIC


# diagnose


def cmd_diagnose(args, out) -> int:
    data = io.read_dataset(args.input)
    rep = uniqueness.diagnose(data, args.eps)
    if args.curves:
        if args.b_min is not None and args.b_max is not None:
            lo, hi = args.b_min, args.b_max
        elif rep.interval is not None:
            a, b = rep.interval
            pad = max(b - a, 1.0)
            lo, hi = a - pad, b + pad
        else:
            centre = -rep.w.v1 / 2
            lo, hi = centre - 2.0, centre + 2.0
        grid = np.linspace(lo, hi, args.b_points)
        grid = grid[np.abs(grid + rep.w.v3) > 1e-9 * max(1.0, abs(rep.w.v3))]
        uniqueness_table = uniqueness.curves(rep.w, grid)
        io.write_curves(uniqueness_table, args.curves)
    if args.json:
        out.write(io.dumps(io.uniqueness_to_dict(rep)) + "\n")
    else:
        lines = [
            f"classification: {rep.classification.value}",
            f"discriminant: {rep.w.discriminant!r}",
            f"V1: {rep.w.v1!r}",
            f"V2: {rep.w.v2!r}",
            f"V3: {rep.w.v3!r}",
        ]
        if rep.interval is not None:
            lines.append(f"interval: {rep.interval[0]!r} {rep.interval[1]!r}")
        if rep.unique_point is not None:
            lines.append(f"unique_point: a={rep.unique_point[0]!r} b={rep.unique_point[1]!r}")
        if rep.family_loglik is not None:
            lines.append(f"max_log_likelihood: {rep.family_loglik!r}")
        if args.curves:
            lines.append(f"curves: {args.curves}")
        _emit(out, lines)
    _write_manifest(
        args,
        "diagnose",
        {"eps": args.eps, "b_min": args.b_min, "b_max": args.b_max, "b_points": args.b_points},
        {"input": io.file_digest(args.input)},
        args.curves,
    )
    return EXIT_REFUSED if rep.classification is uniqueness.Classification.BORDERLINE else EXIT_OK


# probability


def cmd_probability(args, out) -> int:
    seed = resolve_seed(args.seed)
    gamma = io.read_matrix(args.gamma)
    psi = io.read_matrix(args.psi)
    if gamma.shape != (2, 2) or psi.shape != (2, 2):
        raise WrongShape("probability needs 2x2 gamma and psi")
    start = time.perf_counter()
    res = uniqueness.nonuniqueness_probability(gamma, psi, args.reps, seed, args.parallelism)
    elapsed = time.perf_counter() - start
    if args.json:
        out.write(io.dumps({**res.__dict__, "seed": seed, "runtime_s": elapsed}) + "\n")
    else:
        _emit(
            out,
            [
                f"fraction: {res.fraction!r}",
                f"ci95: {res.ci_low!r} {res.ci_high!r}",
                f"ci_width: {res.ci_high - res.ci_low:.4f}",
                f"non_unique: {res.non_unique} / {res.replications}",
                f"borderline: {res.borderline}",
                f"seed: {seed}",
                f"runtime_s: {elapsed:.3f}",
            ],
        )
    _write_manifest(
        args,
        "probability",
        {"seed": seed, "reps": args.reps, "parallelism": args.parallelism},
        {"gamma": io.file_digest(args.gamma), "psi": io.file_digest(args.psi)},
        None,
    )
    return EXIT_OK


# family


def cmd_family(args, out) -> int:
    data = io.read_dataset(args.input)
    rep = uniqueness.diagnose(data)
    if rep.classification is not uniqueness.Classification.NON_UNIQUE:
        sys.stderr.write(f"family: classification is {rep.classification.value}; no maximizer family\n")
        return EXIT_REFUSED
    b_values = args.b if args.b else uniqueness.interior_points(rep, args.count)
    members = uniqueness.family(data, rep, b_values)
    stats = core.compute_stats(data)
    rows = []
    for b, cov in zip(b_values, members):
        rows.append(
            {
                "b": float(b),
                "covariance": io.covariance_to_dict(cov),
                "log_likelihood": core.log_likelihood(data, stats.m_hat, cov),
                "residual": core.likelihood_equation_residual(stats, cov),
            }
        )
    payload = {"interval": list(rep.interval), "members": rows}
    if args.json or args.out:
        text = io.dumps(payload) + "\n"
        if args.out:
            Path(args.out).write_text(text)
        if args.json:
            out.write(text)
    if not args.json:
        lines = [f"interval: {rep.interval[0]!r} {rep.interval[1]!r}"]
        for row in rows:
            lines.append(f"member b={row['b']!r} log_likelihood={row['log_likelihood']!r} residual={row['residual']:.2e}")
            lines += ["  " + s for s in _matrix_lines("gamma", np.array(row["covariance"]["gamma"]))]
            lines += ["  " + s for s in _matrix_lines("psi", np.array(row["covariance"]["psi"]))]
        _emit(out, lines)
    _write_manifest(
        args,
        "family",
        {"b": list(map(float, b_values))},
        {"input": io.file_digest(args.input)},
        args.out,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kronlik", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"kronlik {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--manifest", help="where to write the run manifest (JSON)")
        p.add_argument("--json", action="store_true", help="structured JSON output")

    p = sub.add_parser("simulate", help="draw matrix-normal observations")
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--gamma", required=True, help="p x p matrix file")
    p.add_argument("--psi", required=True, help="q x q matrix file")
    p.add_argument("--mean", help="p x q matrix file (default zero)")
    p.add_argument("--seed", type=int, help="default: $KRONLIK_SEED, else 0")
    p.add_argument("--out", help="dataset file (default stdout)")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="maximum likelihood estimate")
    p.add_argument("input")
    p.add_argument("--model", choices=["general", "diagonal", "one-diag"], default="general")
    p.add_argument("--init-psi", help="starting psi matrix file")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--out", help="also write the report as JSON")
    common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("diagnose", help="uniqueness test for n=3, p=q=2")
    p.add_argument("input")
    p.add_argument("--curves", help="write the g/h1/h2 table (CSV) here")
    p.add_argument("--b-min", type=float)
    p.add_argument("--b-max", type=float)
    p.add_argument("--b-points", type=int, default=401)
    p.add_argument("--eps", type=float, default=uniqueness.BORDERLINE_EPS)
    common(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("probability", help="Monte Carlo probability of non-uniqueness")
    p.add_argument("--gamma", required=True)
    p.add_argument("--psi", required=True)
    p.add_argument("--reps", type=int, default=10_000)
    p.add_argument("--seed", type=int)
    p.add_argument("--parallelism", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_probability)

    p = sub.add_parser("family", help="members of a non-unique maximizer family")
    p.add_argument("input")
    p.add_argument("--b", type=float, nargs="+", help="b values inside the interval")
    p.add_argument("--count", type=int, default=5, help="evenly spaced interior members")
    p.add_argument("--out", help="write members as JSON")
    common(p)
    p.set_defaults(func=cmd_family)
    return parser


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args._argv = argv
    try:
        return args.func(args, out)
    except KronlikError as exc:
        sys.stderr.write(f"kronlik {args.command}: {type(exc).__name__}: {exc}\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(f"kronlik {args.command}: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
