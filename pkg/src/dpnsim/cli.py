"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 model or data validation failure.
Data goes to stdout (or ``--out``), diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import sys
from pathlib import Path

from . import experiments as exps
from .exact import ImpossibleEvidenceError, exact_marginals
from .gauss2d import (
    TRACK_ALGORITHMS,
    Gauss2dModel,
    kalman_oracle,
    particle_track_2d,
    simulate_truth_2d,
    write_snapshots_csv,
    write_track_csv,
)
from .network import (
    STATE,
    ModelError,
    generate_truth_and_evidence,
    load_model,
    load_sequence,
    sequence_to_records,
)
from .reversal import UnsupportedStructureError, reversed_model_dict
from .samplers import ALGORITHMS, run_monitor
from .seeding import derive_seed, make_rng


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


@contextlib.contextmanager
def _output(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _fmt(x) -> str:
    return format(float(x), ".9g")


def _cmd_validate(args) -> int:
    load_model(args.model)
    print(f"{args.model}: ok")
    return 0


def _cmd_exact(args) -> int:
    model = load_model(args.model)
    evidence = load_sequence(model, args.evidence)
    with _output(args.out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "variable", "value", "probability"])
        for t, marginals in enumerate(exact_marginals(model, evidence)):
            for x, dist in zip(model.state_ids, marginals):
                for value, p in enumerate(dist):
                    writer.writerow([t, model.variables[x].name, value, _fmt(p)])
    return 0


def _cmd_run(args) -> int:
    model = load_model(args.model)
    evidence = load_sequence(model, args.evidence)
    estimates = run_monitor(args.algorithm, model, evidence, args.samples, args.seed)
    with _output(args.out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "variable", "value", "estimate", "extinct"])
        for t, est in enumerate(estimates):
            for k, x in enumerate(model.state_ids):
                for value in range(model.cards[x]):
                    p = "" if est.extinct else _fmt(est.marginals[k][value])
                    writer.writerow([t, model.variables[x].name, value, p, int(est.extinct)])
    return 0


def _cmd_simulate(args) -> int:
    model = load_model(args.model)
    truth, evidence = generate_truth_and_evidence(model, args.steps, make_rng(args.seed, 0))
    with _output(args.out) as fh:
        json.dump(sequence_to_records(model, evidence), fh)
        fh.write("\n")
    if args.truth_out:
        Path(args.truth_out).write_text(json.dumps(sequence_to_records(model, truth, STATE)) + "\n", encoding="utf-8")
    return 0


def _load_config(args) -> exps.ExperimentConfig:
    raw = {}
    base = Path(".")
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ModelError(f"{args.config}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ModelError(f"{args.config}: expected an object")
        base = Path(args.config).parent
    unknown = set(raw) - {"model", "algorithms", "sample_counts", "T", "runs", "master_seed"}
    if unknown:
        raise ModelError(f"{args.config}: unknown key(s) {', '.join(sorted(unknown))}")
    model_ref = raw.get("model", "R1")
    if not isinstance(model_ref, str):
        raise ModelError(f"{args.config}.model: expected a path or 'R1'")
    if model_ref.upper() == "R1":
        model = exps.reference_network()
    else:
        model = load_model(base / model_ref)
    seed = args.seed if args.seed is not None else raw.get("master_seed")
    if seed is None:
        raise UsageError("experiment needs --seed (or master_seed in the config)")
    counts = args.samples or raw.get("sample_counts") or list(exps.DEFAULT_SAMPLE_COUNTS)
    if args.full_grid and 10000 not in counts:
        counts = list(counts) + [10000]
    try:
        return exps.ExperimentConfig(
            model=model,
            algorithms=tuple(args.algorithms or raw.get("algorithms") or ALGORITHMS),
            sample_counts=tuple(int(n) for n in counts),
            T=int(args.steps if args.steps is not None else raw.get("T", 50)),
            runs=int(args.runs if args.runs is not None else raw.get("runs", 50)),
            master_seed=int(seed),
            threads=args.threads,
        )
    except ValueError as exc:
        raise ModelError(f"config: {exc}") from None


def _cmd_experiment(args) -> int:
    config = _load_config(args)
    with _output(args.out) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(exps.SERIES_HEADER)

        def flush(series, algorithm, n):
            writer.writerows(exps.series_rows(series, algorithm, n))
            fh.flush()

        series = exps.run_experiment(config, on_result=flush)
    if args.final_out:
        with open(args.final_out, "w", encoding="utf-8", newline="") as fh:
            exps.write_final_csv(series, fh)
    return 0


def _cmd_reverse_dump(args) -> int:
    model = load_model(args.model)
    with _output(args.out) as fh:
        json.dump(reversed_model_dict(model), fh, indent=2)
        fh.write("\n")
    return 0


def _cmd_track2d(args) -> int:
    try:
        model = Gauss2dModel(transition_std=args.q, sensor_std=args.r, disc_radius=args.radius)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    positions, observations = simulate_truth_2d(model, args.steps, make_rng(args.seed, 0))
    track = particle_track_2d(
        args.algorithm, model, observations, args.samples, derive_seed(args.seed, 1), bool(args.snapshots)
    )
    kalman_means, _ = kalman_oracle(model, observations)
    with _output(args.out) as fh:
        write_track_csv(fh, positions, observations, track, kalman_means)
    if args.snapshots:
        with open(args.snapshots, "w", encoding="utf-8", newline="") as fh:
            write_snapshots_csv(fh, track)
    return 0


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonnegative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="dpnsim", description="Stochastic simulation for dynamic probabilistic networks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help):
        p = sub.add_parser(name, help=help, description=help, formatter_class=fmt)
        p.set_defaults(func=func)
        return p

    def seeded(p):
        p.add_argument("--seed", type=_nonnegative_int, required=True, help="master random seed")
        p.add_argument("--threads", type=_positive_int, default=1, help="maximum worker threads")

    p = add("validate", _cmd_validate, "check a network file")
    p.add_argument("--model", required=True, help="network JSON file")

    p = add("exact", _cmd_exact, "exact filtered marginals as CSV")
    p.add_argument("--model", required=True, help="network JSON file")
    p.add_argument("--evidence", required=True, help="evidence JSON file")
    p.add_argument("--out", default=None, help="output CSV (default stdout)")

    p = add("run", _cmd_run, "run one monitoring algorithm, marginal estimates as CSV")
    p.add_argument("--algorithm", type=str.upper, choices=ALGORITHMS, required=True, help="sampler")
    p.add_argument("--model", required=True, help="network JSON file")
    p.add_argument("--evidence", required=True, help="evidence JSON file")
    p.add_argument("--samples", type=_positive_int, default=100, help="number of particles N")
    p.add_argument("--out", default=None, help="output CSV (default stdout)")
    seeded(p)

    p = add("simulate", _cmd_simulate, "forward-sample an evidence sequence (and truth) from a network")
    p.add_argument("--model", required=True, help="network JSON file")
    p.add_argument("--steps", type=_nonnegative_int, default=50, help="horizon T (slices 0..T)")
    p.add_argument("--out", default=None, help="evidence JSON output (default stdout)")
    p.add_argument("--truth-out", default=None, help="optional state-trajectory JSON output")
    seeded(p)

    p = add("experiment", _cmd_experiment, "error-vs-time experiment grid as CSV")
    p.add_argument("--config", default=None, help="experiment JSON (keys: model, algorithms, sample_counts, T, runs, master_seed)")
    p.add_argument("--out", default=None, help="per-t CSV output (default stdout)")
    p.add_argument("--final-out", default=None, help="optional CSV of the t = T cross-section by N")
    p.add_argument("--algorithms", nargs="+", type=str.upper, choices=ALGORITHMS, default=None, help="override algorithms (config default: all four)")
    p.add_argument("--samples", nargs="+", type=_positive_int, default=None, help="override sample counts (config default: 25 100 1000)")
    p.add_argument("--steps", type=_positive_int, default=None, help="override horizon T (config default: 50)")
    p.add_argument("--runs", type=_positive_int, default=None, help="override number of evidence sets (config default: 50)")
    p.add_argument("--full-grid", action="store_true", help="also run N = 10000")
    p.add_argument("--seed", type=_nonnegative_int, default=None, help="master seed; required unless the config sets master_seed")
    p.add_argument("--threads", type=_positive_int, default=1, help="maximum worker threads")

    p = add("reverse-dump", _cmd_reverse_dump, "print the evidence-reversed slice templates as a network document")
    p.add_argument("--model", required=True, help="network JSON file")
    p.add_argument("--out", default=None, help="output JSON (default stdout)")

    p = add("track2d", _cmd_track2d, "2-D random-walk tracking demo as CSV")
    p.add_argument("--algorithm", type=str.upper, choices=TRACK_ALGORITHMS, default="ERSOF", help="sampler")
    p.add_argument("--q", type=float, default=1.0, help="random-walk step standard deviation")
    p.add_argument("--r", type=float, default=0.05, help="sensor noise standard deviation")
    p.add_argument("--radius", type=float, default=10.0, help="disc radius (reporting only)")
    p.add_argument("--samples", type=_positive_int, default=100, help="number of particles N")
    p.add_argument("--steps", type=_nonnegative_int, default=20, help="horizon T (slices 0..T)")
    p.add_argument("--out", default=None, help="output CSV (default stdout)")
    p.add_argument("--snapshots", default=None, help="optional per-t particle cloud CSV")
    seeded(p)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"dpnsim {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (ModelError, UnsupportedStructureError, ImpossibleEvidenceError) as exc:
        problems = getattr(exc, "problems", [str(exc)])
        for problem in problems:
            print(f"{args.command}: {problem}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
