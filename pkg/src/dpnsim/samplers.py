"""Monitoring by stochastic simulation: LW, ER, SOF and the ER/SOF hybrid.

A :class:`SampleSet` stores the whole population as arrays: ``states`` is
``(N, V)`` (evidence columns hold the observed values of the current slice)
and weights are kept as logs, so a weight is zero only when some evidence
entry was structurally impossible, never by underflow.  ``t == -1`` marks a
fresh population that has not absorbed slice 0 yet.

Step functions are pure: they return a new SampleSet and the marginal
estimate for the slice they just processed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import DpnModel, log_likelihood, sample_variables, topological_order
from .reversal import ReversedTemplates, reverse_model
from .seeding import make_rng

LW = "LW"
ER = "ER"
SOF = "SOF"
ERSOF = "ERSOF"
ALGORITHMS = (LW, ER, SOF, ERSOF)


@dataclass
class SampleSet:
    states: np.ndarray
    log_weights: np.ndarray
    t: int = -1
    algorithm: str | None = None

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def extinct(self) -> bool:
        return not np.any(np.isfinite(self.log_weights))


@dataclass(frozen=True)
class MarginalEstimate:
    """One distribution per state variable (model order), or an extinct flag."""

    marginals: tuple[np.ndarray, ...] = field(default=())
    extinct: bool = False


def init_samples(model: DpnModel, n: int, algorithm: str | None = None) -> SampleSet:
    """``n`` empty particles, each with weight 1."""
    if n < 1:
        raise ValueError("need at least one particle")
    return SampleSet(np.full((n, model.n_vars), -1, dtype=np.int64), np.zeros(n), -1, algorithm)


def _normalized(log_weights: np.ndarray) -> np.ndarray | None:
    top = np.max(log_weights)
    if not np.isfinite(top):
        return None
    w = np.exp(log_weights - top)
    return w / w.sum()


def estimate_marginals(model: DpnModel, samples: SampleSet) -> MarginalEstimate:
    """Weight-normalized score of each state value over the population."""
    w = _normalized(samples.log_weights)
    if w is None:
        return MarginalEstimate(extinct=True)
    marginals = []
    for x in model.state_ids:
        m = np.bincount(samples.states[:, x], weights=w, minlength=model.cards[x])
        marginals.append(m / m.sum())
    return MarginalEstimate(tuple(marginals))


def resample(weights: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` independent draws of indices with probability proportional to ``weights``."""
    weights = np.asarray(weights, dtype=float)
    cum = np.cumsum(weights)
    total = cum[-1]
    if not total > 0.0:
        raise ValueError("resample needs at least one positive weight")
    idx = np.searchsorted(cum, rng.random(n) * total, side="right")
    return np.minimum(idx, np.flatnonzero(weights > 0)[-1])


def _fresh_slice(model: DpnModel, n: int, evidence: np.ndarray) -> np.ndarray:
    cur = np.full((n, model.n_vars), -1, dtype=np.int64)
    ev = model.evidence_ids
    evidence = np.asarray(evidence)
    if np.any(evidence[ev] < 0):
        raise ValueError("evidence must assign every evidence variable")
    cur[:, ev] = evidence[ev]
    return cur


def _forward(model: DpnModel, samples: SampleSet, evidence: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray]:
    """Extend each particle into the next slice by ancestral sampling of its state.

    Returns the new slice population and each particle's log evidence likelihood.
    """
    kind = "prior" if samples.t < 0 else "transition"
    prev = None if samples.t < 0 else samples.states
    cpts = model.cpts(kind)
    cur = _fresh_slice(model, samples.n, evidence)
    states = [v for v in topological_order(model, kind) if v in set(model.state_ids)]
    sample_variables(cpts, states, cur, prev, rng)
    return cur, log_likelihood(cpts, model.evidence_ids, cur, prev)


def _uniform_indices(n: int, rng) -> np.ndarray:
    return rng.integers(0, n, size=n)


def lw_step(model: DpnModel, samples: SampleSet, evidence: np.ndarray, rng) -> tuple[SampleSet, MarginalEstimate]:
    """Likelihood weighting: forward-sample, multiply weights by the evidence likelihood."""
    cur, loglik = _forward(model, samples, evidence, rng)
    out = SampleSet(cur, samples.log_weights + loglik, samples.t + 1, LW)
    return out, estimate_marginals(model, out)


def er_step(
    model: DpnModel, templates: ReversedTemplates, samples: SampleSet, evidence: np.ndarray, rng
) -> tuple[SampleSet, MarginalEstimate]:
    """Evidence reversal.

    Weights absorb P(e_t | x_{t-1}) from the reversed evidence CPTs, then the
    state is drawn from the reversed state CPTs with e_t clamped.
    """
    rev = templates.for_slice(samples.t + 1)
    prev = None if samples.t < 0 else samples.states
    cur = _fresh_slice(model, samples.n, evidence)
    log_weights = samples.log_weights + log_likelihood(rev.cpts, rev.evidence_order, cur, prev)
    sample_variables(rev.cpts, rev.state_order, cur, prev, rng)
    out = SampleSet(cur, log_weights, samples.t + 1, ER)
    return out, estimate_marginals(model, out)


def sof_step(model: DpnModel, samples: SampleSet, evidence: np.ndarray, rng) -> tuple[SampleSet, MarginalEstimate]:
    """Survival of the fittest.

    Weights are set (not multiplied) to the current slice's likelihood, the
    estimate is read off, then the population is resampled to weight 1.  If
    every weight is zero the population is kept by uniform resampling and the
    estimate is flagged extinct.
    """
    cur, loglik = _forward(model, samples, evidence, rng)
    weighted = SampleSet(cur, loglik, samples.t + 1, SOF)
    estimate = estimate_marginals(model, weighted)
    w = _normalized(loglik)
    idx = _uniform_indices(samples.n, rng) if w is None else resample(w, samples.n, rng)
    return SampleSet(cur[idx], np.zeros(samples.n), samples.t + 1, SOF), estimate


def er_sof_step(
    model: DpnModel, templates: ReversedTemplates, samples: SampleSet, evidence: np.ndarray, rng
) -> tuple[SampleSet, MarginalEstimate]:
    """ER/SOF hybrid.

    The slice t-1 population is resampled by P(e_t | x_{t-1}) and then
    propagated through the reversed state CPTs; the propagated population,
    uniformly weighted, is the slice-t estimate.
    """
    rev = templates.for_slice(samples.t + 1)
    n = samples.n
    cur = _fresh_slice(model, n, evidence)
    extinct = False
    if samples.t < 0:
        prev = None
    else:
        loglik = log_likelihood(rev.cpts, rev.evidence_order, cur, samples.states)
        w = _normalized(loglik)
        extinct = w is None
        idx = _uniform_indices(n, rng) if extinct else resample(w, n, rng)
        prev = samples.states[idx]
    sample_variables(rev.cpts, rev.state_order, cur, prev, rng)
    out = SampleSet(cur, np.zeros(n), samples.t + 1, ERSOF)
    estimate = MarginalEstimate(extinct=True) if extinct else estimate_marginals(model, out)
    return out, estimate


def step(algorithm: str, model: DpnModel, templates: ReversedTemplates | None, samples, evidence, rng):
    """Dispatch one slice of ``algorithm``."""
    if algorithm == LW:
        return lw_step(model, samples, evidence, rng)
    if algorithm == SOF:
        return sof_step(model, samples, evidence, rng)
    if algorithm == ER:
        return er_step(model, templates, samples, evidence, rng)
    if algorithm == ERSOF:
        return er_sof_step(model, templates, samples, evidence, rng)
    raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {', '.join(ALGORITHMS)}")


def run_monitor(
    algorithm: str,
    model: DpnModel,
    evidence: np.ndarray,
    n: int,
    seed: int,
    templates: ReversedTemplates | None = None,
) -> list[MarginalEstimate]:
    """Estimates for slices ``0..T``; slice t draws from the stream ``(seed, t)``."""
    algorithm = algorithm.upper()
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {', '.join(ALGORITHMS)}")
    if templates is None and algorithm in (ER, ERSOF):
        templates = reverse_model(model)
    samples = init_samples(model, n, algorithm)
    estimates = []
    for t in range(len(evidence)):
        samples, estimate = step(algorithm, model, templates, samples, evidence[t], make_rng(seed, t))
        estimates.append(estimate)
    return estimates
