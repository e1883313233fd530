"""Command-line front end: ``markovids {bound,sweep,simulate,stability}``.

Exit codes: 0 success, 2 invalid configuration, 3 infeasible parameters,
4 enumeration guard exceeded, 5 inequality certificate failed, 6 capacity
solver did not converge.  Results go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import jsonschema
import numpy as np

from . import __version__
from .capacity_bounds import (
    BoundConfig,
    channel_upper_bound,
    estimate_cost,
    genie_upper_bound,
    joint_upper_bound,
    reference_sweep,
    sweep,
)
from .channel_model import (
    MarkovIDSChannel,
    expected_output_length,
    iid_deletion_channel,
    load_channel_json,
    make_rng,
    simulate,
    word_to_str,
)
from .errors import (
    CertificateError,
    ConvergenceError,
    GuardError,
    InfeasibleParametersError,
    InputDependentSideInfoError,
    NotErgodicError,
    ValidationError,
)
from .exact_enum import LAW_GUARD
from .stability_lab import appendixB_certificates, concentration_curve, rho_independence, write_json

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_GUARD, EXIT_CERT, EXIT_CONVERGENCE = 0, 2, 3, 4, 5, 6
LARGE_K = 13


class UsageError(ValidationError):
    pass


# --------------------------------------------------------------------------
# config files

_NUM = {"type": "number"}
_NUMS = {"type": "array", "items": _NUM, "minItems": 1}
_COMMON = {
    "iid": {"type": "boolean"},
    "delta": _NUM,
    "ratio": _NUM,
    "alpha": _NUM,
    "alpha_over_beta": _NUM,
    "channel_json": {"type": "string"},
    "rho": {"type": "string"},
    "threads": {"type": "integer", "minimum": 1},
}
CONFIG_SCHEMAS: dict[str, dict[str, Any]] = {
    "bound": {
        **_COMMON,
        "k": {"type": "integer", "minimum": 1},
        "ba_tolerance": {"type": "number", "exclusiveMinimum": 0},
        "fold_complement": {"type": "boolean"},
        "joint": {"type": "boolean"},
        "large": {"type": "boolean"},
        "out": {"type": "string"},
    },
    "sweep": {
        "delta": _NUMS,
        "ratio": _NUMS,
        "alpha": _NUMS,
        "alpha_over_beta": _NUMS,
        "paper_grid": {"type": "boolean"},
        "baseline": {"type": "boolean"},
        "k": {"type": "integer", "minimum": 1},
        "ba_tolerance": {"type": "number", "exclusiveMinimum": 0},
        "fold_complement": {"type": "boolean"},
        "large": {"type": "boolean"},
        "threads": {"type": "integer", "minimum": 1},
        "out": {"type": "string"},
    },
    "simulate": {
        **_COMMON,
        "n": {"type": "integer", "minimum": 1},
        "trials": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "out": {"type": "string"},
        "summary": {"type": "string"},
    },
    "stability": {
        **_COMMON,
        "n_min": {"type": "integer", "minimum": 1},
        "n_max": {"type": "integer", "minimum": 1},
        "band": {"type": "number", "exclusiveMinimum": 0},
        "policy": {"enum": ["uniform", "ba"]},
        "ba_tolerance": {"type": "number", "exclusiveMinimum": 0},
        "out": {"type": "string"},
    },
}


def config_schema(command: str) -> dict[str, Any]:
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": f"markovids {command} configuration",
        "type": "object",
        "additionalProperties": False,
        "properties": CONFIG_SCHEMAS[command],
    }


def load_config(command: str, path: str) -> dict[str, Any]:
    try:
        doc = json.loads(Path(path).read_text())
        jsonschema.validate(doc, config_schema(command))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except jsonschema.ValidationError as exc:
        raise UsageError(f"config {path}: {exc.message}") from None
    return doc


# --------------------------------------------------------------------------
# argument parsing


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _channel_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("channel")
    g.add_argument("--iid", action="store_true", help="memoryless deletion channel with probability --delta")
    g.add_argument("--delta", type=float, help="average deletion probability")
    g.add_argument("--ratio", type=float, help="D/d, high over low deletion probability")
    g.add_argument("--alpha", type=float, help="transition probability from the low to the high state")
    g.add_argument("--alpha-over-beta", type=float, help="alpha/beta")
    g.add_argument("--channel-json", help="channel document (see docs/channel.schema.json)")
    g.add_argument("--rho", default="stationary", help="'stationary' or comma-separated initial state law")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="markovids", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"markovids {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bound", help="genie-aided upper bound for one configuration")
    _channel_flags(b)
    b.add_argument("--k", type=int, default=1, help="block length")
    b.add_argument("--ba-tolerance", type=float, default=1e-9)
    b.add_argument("--fold-complement", action="store_true", help="solve binary DMCs on half the inputs")
    b.add_argument("--joint", action="store_true", help="undecomposed bound, valid for any IDS states")
    b.add_argument("--large", action="store_true", help=f"allow k >= {LARGE_K}")
    b.add_argument("--threads", type=int, default=1)
    b.add_argument("--out", help="write OUT.json and OUT.csv")
    b.add_argument("--config", help="JSON file with option defaults")

    s = sub.add_parser("sweep", help="bounds over a parameter grid, as CSV")
    s.add_argument("--paper-grid", action="store_true", help="the 3x3x4x3 grid plus i.i.d. rows")
    s.add_argument("--delta", type=_floats)
    s.add_argument("--ratio", type=_floats)
    s.add_argument("--alpha", type=_floats)
    s.add_argument("--alpha-over-beta", type=_floats)
    s.add_argument("--baseline", action="store_true", help="add one i.i.d. row per delta")
    s.add_argument("--k", type=int, default=6)
    s.add_argument("--ba-tolerance", type=float, default=1e-9)
    s.add_argument("--fold-complement", action="store_true")
    s.add_argument("--large", action="store_true", help=f"allow k >= {LARGE_K}")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--out", help="CSV path (default stdout)")
    s.add_argument("--config", help="JSON file with option defaults")

    m = sub.add_parser("simulate", help="Monte Carlo transmissions")
    _channel_flags(m)
    m.add_argument("--n", type=int, default=100, help="input length")
    m.add_argument("--trials", type=int, default=1)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", help="trace CSV path (default stdout)")
    m.add_argument("--summary", help="also write the summary JSON here")
    m.add_argument("--threads", type=int, default=1)
    m.add_argument("--config", help="JSON file with option defaults")

    t = sub.add_parser("stability", help="exact concentration, rho-dependence and inequality certificates")
    _channel_flags(t)
    t.add_argument("--n-min", type=int, default=1)
    t.add_argument("--n-max", type=int, default=6)
    t.add_argument("--band", type=float, default=0.1, help="deviation band for tail masses (bits/symbol)")
    t.add_argument("--policy", choices=("uniform", "ba"), default="uniform")
    t.add_argument("--ba-tolerance", type=float, default=1e-9)
    t.add_argument("--out", help="certificate JSON path (default stdout)")
    t.add_argument("--threads", type=int, default=1)
    t.add_argument("--config", help="JSON file with option defaults")
    return parser


def parse_args(argv: Sequence[str] | None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        cfg = load_config(args.command, args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]  # type: ignore[union-attr]
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


# --------------------------------------------------------------------------
# channel construction


def _rho(text: str, s: int) -> np.ndarray | None:
    if text == "stationary":
        return None
    vals = np.array(_floats(text))
    if vals.shape != (s,):
        raise UsageError(f"--rho needs {s} values, got {len(vals)}")
    return vals


def bound_config(args: argparse.Namespace, k: int) -> BoundConfig:
    rho: str | tuple[float, ...] = "stationary"
    if args.rho != "stationary":
        rho = tuple(_floats(args.rho))
    if args.delta is None:
        raise UsageError("--delta is required")
    if args.iid:
        return BoundConfig(args.delta, k=k, ba_tolerance=getattr(args, "ba_tolerance", 1e-9), rho=rho,
                           fold_complement=getattr(args, "fold_complement", False))
    missing = [n for n in ("ratio", "alpha", "alpha_over_beta") if getattr(args, n) is None]
    if missing:
        raise UsageError("two-state channel needs --" + ", --".join(n.replace("_", "-") for n in missing) + " (or --iid)")
    return BoundConfig(args.delta, args.ratio, args.alpha, args.alpha_over_beta, k,
                       getattr(args, "ba_tolerance", 1e-9), rho, getattr(args, "fold_complement", False))


def build_channel(args: argparse.Namespace) -> MarkovIDSChannel:
    if args.channel_json:
        ch = load_channel_json(args.channel_json)
        rho = _rho(args.rho, ch.s)
        return ch if rho is None else ch.with_initial(rho)
    if args.iid:
        if args.delta is None:
            raise UsageError("--delta is required")
        ch = iid_deletion_channel(args.delta)
        rho = _rho(args.rho, 1)
        return ch if rho is None else ch.with_initial(rho)
    return bound_config(args, 1).channel()


def _has_channel(args: argparse.Namespace) -> bool:
    return bool(args.channel_json or args.iid or args.delta is not None)


# --------------------------------------------------------------------------
# commands


def _large_gate(k: int, large: bool, n_configs: int) -> None:
    if k >= LARGE_K:
        est = estimate_cost(k, n_configs)
        print(f"estimate: {json.dumps(est)}", file=sys.stderr)
        if not large:
            raise GuardError(f"k={k} needs --large (estimate printed above)", int(est["pattern_entries_per_config"]), None)


def cmd_bound(args: argparse.Namespace) -> int:
    _large_gate(args.k, args.large, 1)
    if args.channel_json:
        ch = build_channel(args)
        if args.joint:
            rep = joint_upper_bound(ch, args.k, args.ba_tolerance)
        else:
            rep = channel_upper_bound(ch, args.k, args.ba_tolerance, args.fold_complement, args.threads)
    else:
        cfg = bound_config(args, args.k)
        if args.joint:
            rep = joint_upper_bound(cfg.channel(), args.k, args.ba_tolerance)
        else:
            rep = genie_upper_bound(cfg, threads=args.threads)
    if args.out:
        Path(args.out + ".json").write_text(rep.to_json() + "\n")
        Path(args.out + ".csv").write_text(rep.per_dmc_csv())
    print(f"{rep.bound_bits_per_symbol:.9f}")
    print(f"ba_budget {rep.ba_budget:.3e} dropped_mass {rep.dropped_weight_mass:.3e}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    def progress(row: Any) -> None:
        print(f"delta={row.delta:g} ratio={row.ratio:g} alpha={row.alpha:g} "
              f"alpha/beta={row.alpha_over_beta:g}: {row.bound_bits:.9f}", file=sys.stderr)

    if args.paper_grid:
        _large_gate(args.k, args.large, 111)
        table = reference_sweep(args.k, args.ba_tolerance, args.fold_complement, args.threads, progress)
    else:
        if not args.delta or not args.ratio:
            raise UsageError("sweep needs --paper-grid or at least --delta and --ratio")
        markov = [r for r in args.ratio if r != 1.0]
        if markov and (not args.alpha or not args.alpha_over_beta):
            raise UsageError("ratios other than 1 need --alpha and --alpha-over-beta")
        n_cfg = len(args.delta) * (len(markov) * len(args.alpha or [1]) * len(args.alpha_over_beta or [1]) + 1)
        _large_gate(args.k, args.large, n_cfg)
        table = sweep(args.delta, args.ratio, args.alpha or [], args.alpha_over_beta or [], args.k,
                      args.ba_tolerance, args.baseline, args.fold_complement, args.threads, progress)
    text = table.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def trace_csv(batch: Any) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("trial", "input", "output", "states"))
    for t in range(batch.inputs.shape[0]):
        w.writerow((t, word_to_str(batch.inputs[t]), word_to_str(batch.glued(t)), word_to_str(batch.states[t])))
    return buf.getvalue()


def simulation_summary(channel: MarkovIDSChannel, batch: Any, seed: int) -> dict[str, Any]:
    lengths = batch.output_lengths
    T, n = batch.inputs.shape
    per_state = {}
    d = channel.deletion_probs
    for a in range(channel.s):
        sel = batch.states == a
        visits = int(sel.sum())
        entry: dict[str, Any] = {"visits": visits}
        if d is not None:
            deleted = int((batch.out_len[sel] == 0).sum())
            freq = deleted / visits if visits else math.nan
            entry.update(deletions=deleted, frequency=freq, expected=float(d[a]),
                         sigma=math.sqrt(d[a] * (1 - d[a]) / visits) if visits else math.nan)
        per_state[str(a)] = entry
    return {
        "trials": T,
        "n": n,
        "seed": seed,
        "mean_output_length": float(lengths.mean()),
        "std_output_length": float(lengths.std(ddof=1)) if T > 1 else 0.0,
        "expected_output_length": expected_output_length(channel, n),
        "per_state": per_state,
    }


def cmd_simulate(args: argparse.Namespace) -> int:
    ch = build_channel(args)
    gen = make_rng(args.seed)
    inputs = gen.integers(0, ch.input_alphabet_size, size=(args.trials, args.n))
    batch = simulate(ch, inputs, gen)
    text = trace_csv(batch)
    summary = simulation_summary(ch, batch, args.seed)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.summary:
        write_json(summary, args.summary)
    print(json.dumps(summary, sort_keys=True), file=sys.stderr)
    return EXIT_OK


def _law_guard_n(q: int) -> int:
    n = 1
    while q ** (n + 1) * min(2 ** (n + 1), sum(q**l for l in range(n + 2))) <= LAW_GUARD:
        n += 1
    return n


def cmd_stability(args: argparse.Namespace) -> int:
    q = 2
    if args.channel_json:
        q = load_channel_json(args.channel_json).input_alphabet_size
    limit = _law_guard_n(q)
    if args.n_max > limit:
        raise GuardError(f"--n-max {args.n_max} exceeds the exact-law guard (n <= {limit} here)", args.n_max, limit)
    if not _has_channel(args):
        raise UsageError("stability needs a channel (--iid, two-state flags or --channel-json)")
    if args.n_min > args.n_max:
        raise UsageError("--n-min must not exceed --n-max")
    ch = build_channel(args)
    conc = concentration_curve(ch, args.n_max, args.band, args.policy, n_min=args.n_min)
    conc.rho_gaps = rho_independence(ch, args.n_max, args.ba_tolerance, n_min=args.n_min)
    certs = appendixB_certificates(ch, range(max(args.n_min, 1), args.n_max + 1), ba_tolerance=args.ba_tolerance)
    report = {"concentration": conc.to_dict(), "certificates": certs.to_dict()}
    text = json.dumps(report, indent=2, sort_keys=True, default=float) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if not certs.passed:
        bad = certs.to_dict()["checks"]
        print("certificate failure: " + json.dumps([c for c in bad if not c["passed"]]), file=sys.stderr)
        return EXIT_CERT
    return EXIT_OK


COMMANDS = {"bound": cmd_bound, "sweep": cmd_sweep, "simulate": cmd_simulate, "stability": cmd_stability}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except InfeasibleParametersError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except GuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except CertificateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CERT
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ValidationError, NotErgodicError, InputDependentSideInfoError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
