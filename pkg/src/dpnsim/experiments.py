"""Reference network, error metric and the error-vs-time trial protocol.

Trial ``i`` of an experiment draws its evidence from the stream
``(master_seed, i)`` only, so every algorithm and sample count is scored on
the same evidence sequences (a paired design).
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exact import exact_marginals
from .network import EVIDENCE, PREV, SAME, STATE, DpnModel, Variable, generate_truth_and_evidence, make_cpt
from .reversal import ReversedTemplates, reverse_model
from .samplers import ALGORITHMS, ER, ERSOF, MarginalEstimate, run_monitor
from .seeding import derive_seed, make_rng

DEFAULT_SAMPLE_COUNTS = (25, 100, 1000)
FULL_SAMPLE_COUNTS = (25, 100, 1000, 10000)


def reference_network(self_prob: float = 0.7, hit_prob: float = 0.6) -> DpnModel:
    """R1: one 4-valued state, one 4-valued sensor.

    The sensor reports the true state with probability ``hit_prob``, can never
    report ``(state + 1) % 4``, and splits the rest evenly over the other two
    values.  The state keeps its value with probability ``self_prob`` and
    otherwise moves uniformly to one of the other three.  Uniform prior.
    """
    k = 4
    variables = (Variable(0, "X", STATE, k), Variable(1, "E", EVIDENCE, k))
    cards = [k, k]
    sensor = np.full((k, k), (1.0 - hit_prob) / 2)
    for i in range(k):
        sensor[i, i] = hit_prob
        sensor[i, (i + 1) % k] = 0.0
    move = np.full((k, k), (1.0 - self_prob) / (k - 1))
    np.fill_diagonal(move, self_prob)
    prior = (
        make_cpt(0, [], cards, np.full(k, 1.0 / k)),
        make_cpt(1, [(0, SAME)], cards, sensor),
    )
    transition = (
        make_cpt(0, [(0, PREV)], cards, move),
        make_cpt(1, [(0, SAME)], cards, sensor),
    )
    return DpnModel(variables, prior, transition)


def average_abs_error(estimate: MarginalEstimate, exact: Sequence[np.ndarray]) -> float:
    """Mean of |estimated - exact| over all (state variable, value) pairs; 1.0 if extinct."""
    if estimate.extinct:
        return 1.0
    if len(estimate.marginals) != len(exact):
        raise ValueError("estimate and exact cover different variables")
    diffs = []
    for est, ref in zip(estimate.marginals, exact):
        if np.shape(est) != np.shape(ref):
            raise ValueError(f"cardinality mismatch {np.shape(est)} vs {np.shape(ref)}")
        diffs.append(np.abs(np.asarray(est) - np.asarray(ref)))
    return float(np.concatenate(diffs).mean())


@dataclass(frozen=True)
class TrialResult:
    errors: np.ndarray
    extinct: np.ndarray


@dataclass(frozen=True)
class _Case:
    evidence: np.ndarray
    exact: list


def _case(model: DpnModel, T: int, trial_seed: int) -> _Case:
    _, evidence = generate_truth_and_evidence(model, T, make_rng(trial_seed, 0))
    return _Case(evidence, exact_marginals(model, evidence))


def _score(algorithm, model, templates, n, case: _Case, trial_seed: int) -> TrialResult:
    estimates = run_monitor(algorithm, model, case.evidence, n, derive_seed(trial_seed, 1), templates)
    errors = np.array([average_abs_error(e, x) for e, x in zip(estimates, case.exact)])
    return TrialResult(errors, np.array([e.extinct for e in estimates]))


def run_trial(algorithm: str, model: DpnModel, n: int, T: int, trial_seed: int) -> TrialResult:
    """Errors at t = 0..T of one algorithm on one model-generated evidence sequence."""
    templates = reverse_model(model) if algorithm.upper() in (ER, ERSOF) else None
    return _score(algorithm.upper(), model, templates, n, _case(model, T, trial_seed), trial_seed)


def derive_trial_seed(master_seed: int, index: int) -> int:
    return derive_seed(master_seed, index)


@dataclass
class ExperimentConfig:
    model: DpnModel = field(default_factory=reference_network)
    algorithms: tuple[str, ...] = ALGORITHMS
    sample_counts: tuple[int, ...] = DEFAULT_SAMPLE_COUNTS
    T: int = 50
    runs: int = 50
    master_seed: int = 0
    threads: int = 1

    def __post_init__(self):
        self.algorithms = tuple(a.upper() for a in self.algorithms)
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ValueError(f"unknown algorithm(s) {unknown}")
        if self.runs < 1 or self.T < 1 or any(n < 1 for n in self.sample_counts) or self.threads < 1:
            raise ValueError("runs, T, threads and every sample count must be >= 1")


@dataclass
class ErrorSeries:
    """Per-trial error matrices keyed by ``(algorithm, n)``; rows are trials, columns t."""

    T: int
    errors: dict[tuple[str, int], np.ndarray] = field(default_factory=dict)
    extinct: dict[tuple[str, int], np.ndarray] = field(default_factory=dict)

    def mean(self, algorithm: str, n: int) -> np.ndarray:
        return self.errors[algorithm, n].mean(axis=0)

    def stderr(self, algorithm: str, n: int) -> np.ndarray:
        e = self.errors[algorithm, n]
        if e.shape[0] < 2:
            return np.zeros(e.shape[1])
        return e.std(axis=0, ddof=1) / np.sqrt(e.shape[0])

    def extinct_fraction(self, algorithm: str, n: int) -> np.ndarray:
        return self.extinct[algorithm, n].mean(axis=0)

    def extinction_times(self, algorithm: str, n: int) -> np.ndarray:
        """First extinct slice per trial; ``T + 1`` when a trial never went extinct."""
        flags = self.extinct[algorithm, n]
        return np.where(flags.any(axis=1), flags.argmax(axis=1), self.T + 1)

    def final_rows(self):
        for (algorithm, n) in self.errors:
            yield algorithm, n, self.mean(algorithm, n)[-1], self.stderr(algorithm, n)[-1]


SERIES_HEADER = ["algorithm", "n_samples", "t", "mean_abs_error", "stderr", "extinct_fraction"]
FINAL_HEADER = ["algorithm", "n_samples", "mean_abs_error_at_T", "stderr"]


def fmt(x: float) -> str:
    return format(float(x), ".9g")


def series_rows(series: ErrorSeries, algorithm: str, n: int) -> list[list[str]]:
    mean, se, frac = series.mean(algorithm, n), series.stderr(algorithm, n), series.extinct_fraction(algorithm, n)
    return [[algorithm, str(n), str(t), fmt(mean[t]), fmt(se[t]), fmt(frac[t])] for t in range(series.T + 1)]


def write_series_csv(series: ErrorSeries, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(SERIES_HEADER)
    for algorithm, n in series.errors:
        writer.writerows(series_rows(series, algorithm, n))


def write_final_csv(series: ErrorSeries, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(FINAL_HEADER)
    for algorithm, n, mean, se in series.final_rows():
        writer.writerow([algorithm, str(n), fmt(mean), fmt(se)])


def run_experiment(
    config: ExperimentConfig,
    on_result: Callable[[ErrorSeries, str, int], None] | None = None,
) -> ErrorSeries:
    """Run every (algorithm, n) over ``config.runs`` paired trials.

    ``on_result`` is called after each (algorithm, n) block completes, so
    callers can flush partial output.  Results do not depend on ``threads``.
    """
    model = config.model
    seeds = [derive_trial_seed(config.master_seed, i) for i in range(config.runs)]
    templates: ReversedTemplates | None = None
    if any(a in (ER, ERSOF) for a in config.algorithms):
        templates = reverse_model(model)
    series = ErrorSeries(config.T)
    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        cases = list(pool.map(lambda s: _case(model, config.T, s), seeds))
        for algorithm in config.algorithms:
            for n in config.sample_counts:
                results = list(
                    pool.map(lambda i: _score(algorithm, model, templates, n, cases[i], seeds[i]), range(config.runs))
                )
                series.errors[algorithm, n] = np.stack([r.errors for r in results])
                series.extinct[algorithm, n] = np.stack([r.extinct for r in results])
                if on_result is not None:
                    on_result(series, algorithm, n)
    return series
