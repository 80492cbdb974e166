"""Exact recursive filtering over the joint state space of a slice.

The belief is a dense vector over joint state assignments in mixed radix,
most significant digit = lowest state-variable id.  Each step contracts the
slice's CPT factors (evidence axes fixed to the observed values) against the
previous belief with ``numpy.einsum``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import EVIDENCE, PREV, SAME, DpnModel

DEFAULT_CAP = 10**6


class ImpossibleEvidenceError(ValueError):
    """The evidence has probability zero under the model."""


@dataclass(frozen=True, eq=False)
class BeliefState:
    probabilities: np.ndarray
    state_ids: tuple[int, ...]
    cards: tuple[int, ...]

    def as_tensor(self) -> np.ndarray:
        return self.probabilities.reshape(self.cards)


def joint_state_size(model: DpnModel) -> int:
    return int(np.prod([model.cards[x] for x in model.state_ids], dtype=np.int64))


def _contract(model: DpnModel, kind: str, evidence: np.ndarray, belief: BeliefState | None, cap: int) -> BeliefState:
    size = joint_state_size(model)
    if size > cap:
        raise ValueError(f"joint state space {size} exceeds oracle cap {cap}")
    evidence = np.asarray(evidence)
    roles = {v.id: v.role for v in model.variables}
    label: dict[tuple[int, int], int] = {}

    def lab(node):
        return label.setdefault(node, len(label))

    operands = []
    for cpt in model.cpts(kind):
        factor = cpt.factor()
        nodes = list(cpt.parents) + [(cpt.child, SAME)]
        # fix observed evidence axes, highest axis first so indices stay valid
        for axis in range(len(nodes) - 1, -1, -1):
            var, lag = nodes[axis]
            if lag == SAME and roles[var] == EVIDENCE:
                if evidence[var] < 0:
                    raise ValueError(f"evidence variable '{model.variables[var].name}' is unassigned")
                factor = np.take(factor, evidence[var], axis=axis)
                del nodes[axis]
        operands += [factor, [lab(n) for n in nodes]]
    if belief is not None:
        operands += [belief.as_tensor(), [lab((x, PREV)) for x in model.state_ids]]
    out = [lab((x, SAME)) for x in model.state_ids]
    joint = np.einsum(*operands, out, optimize="greedy") if out else np.einsum(*operands, [])
    flat = np.asarray(joint, dtype=float).reshape(-1)
    total = flat.sum()
    if not total > 0.0:
        raise ImpossibleEvidenceError("evidence has probability zero")
    cards = tuple(model.cards[x] for x in model.state_ids)
    return BeliefState(flat / total, tuple(model.state_ids), cards)


def exact_prior(model: DpnModel, evidence_0: np.ndarray, cap: int = DEFAULT_CAP) -> BeliefState:
    """P(X_0 | E_0 = evidence_0)."""
    return _contract(model, "prior", evidence_0, None, cap)


def exact_filter_step(
    model: DpnModel, belief: BeliefState, evidence: np.ndarray, cap: int = DEFAULT_CAP
) -> BeliefState:
    """Advance P(X_{t-1} | e_{0:t-1}) to P(X_t | e_{0:t})."""
    return _contract(model, "transition", evidence, belief, cap)


def exact_marginal(belief: BeliefState, var: int) -> np.ndarray:
    """Distribution of state variable ``var`` under ``belief``."""
    axis = belief.state_ids.index(var)
    tensor = belief.as_tensor()
    return tensor.sum(axis=tuple(a for a in range(tensor.ndim) if a != axis))


def exact_filter(model: DpnModel, evidence: np.ndarray, cap: int = DEFAULT_CAP) -> list[BeliefState]:
    """Filtered beliefs for every slice of an evidence sequence."""
    beliefs = [exact_prior(model, evidence[0], cap)]
    for t in range(1, len(evidence)):
        beliefs.append(exact_filter_step(model, beliefs[-1], evidence[t], cap))
    return beliefs


def exact_marginals(model: DpnModel, evidence: np.ndarray, cap: int = DEFAULT_CAP) -> list[list[np.ndarray]]:
    """Per-slice, per-state-variable exact marginals."""
    return [[exact_marginal(b, x) for x in model.state_ids] for b in exact_filter(model, evidence, cap)]
