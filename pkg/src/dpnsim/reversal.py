"""Shachter arc reversal and the evidence-reversed slice template.

Reversal works on a CPT collection for one slice, keyed by child variable id.
Nodes are ``(variable id, lag)`` pairs; previous-slice nodes are fixed
context and never reversed.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .network import EVIDENCE, PREV, SAME, STATE, Cpt, DpnModel, _topological, cpt_to_dict, topological_order


class ReversalCycleError(ValueError):
    """Reversing the arc would create a directed cycle."""


class UnsupportedStructureError(ValueError):
    """The slice cannot be evidence-reversed by single-slice arc reversals."""


def _node_order(node: tuple[int, int]) -> tuple[int, int]:
    var, lag = node
    return (0 if lag == PREV else 1, var)


def _cards(cpts: Mapping[int, Cpt]) -> dict[int, int]:
    cards = {}
    for cpt in cpts.values():
        cards[cpt.child] = cpt.table.shape[1]
        for (v, _), c in zip(cpt.parents, cpt.parent_cards):
            cards[v] = c
    return cards


def _has_alternate_path(cpts: Mapping[int, Cpt], frm: int, to: int) -> bool:
    children: dict[int, list[int]] = {v: [] for v in cpts}
    for cpt in cpts.values():
        for v, lag in cpt.parents:
            if lag == SAME:
                children.setdefault(v, []).append(cpt.child)
    stack = [c for c in children.get(frm, []) if c != to]
    seen = set(stack)
    while stack:
        v = stack.pop()
        if v == to:
            return True
        for c in children.get(v, []):
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return False


def _build_cpt(child: int, parents: list[tuple[int, int]], cards: dict[int, int], table: np.ndarray, unreachable=None) -> Cpt:
    table = np.ascontiguousarray(table.reshape(-1, cards[child]))
    table.setflags(write=False)
    return Cpt(child, tuple(parents), tuple(cards[v] for v, _ in parents), table, unreachable)


def reverse_arc(cpts: Mapping[int, Cpt], frm: int, to: int) -> dict[int, Cpt]:
    """Reverse the same-slice arc ``frm -> to``, preserving the joint.

    Both endpoints end up with the union of their former parents; ``frm``
    additionally gains ``to``.  Rows of the new P(frm | to, ...) whose context
    has probability zero are set uniform and flagged in ``Cpt.unreachable``.
    """
    src, dst = (frm, SAME), (to, SAME)
    if src not in cpts[to].parents:
        raise ValueError(f"no arc {frm} -> {to}")
    if _has_alternate_path(cpts, frm, to):
        raise ReversalCycleError(f"reversing {frm} -> {to} would create a cycle")
    cards = _cards(cpts)
    context = set(cpts[frm].parents) | (set(cpts[to].parents) - {src})
    context = sorted(context, key=_node_order)

    letters = iter(string.ascii_letters)
    label = {node: next(letters) for node in context + [src, dst]}
    to_axes = "".join(label[n] for n in cpts[to].parents) + label[dst]
    frm_axes = "".join(label[n] for n in cpts[frm].parents) + label[src]
    ctx_axes = "".join(label[n] for n in context)
    joint = np.einsum(
        f"{to_axes},{frm_axes}->{ctx_axes}{label[src]}{label[dst]}", cpts[to].factor(), cpts[frm].factor()
    )
    p_to = joint.sum(axis=-2)

    # P'(frm | context, to) laid out with `to` placed among same-slice parents by id.
    frm_parents = sorted(context + [dst], key=_node_order)
    cond = np.moveaxis(joint, -1, -2)  # context..., to, frm
    denom = p_to[..., None]
    zero = denom == 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = np.where(zero, 1.0 / cards[frm], cond / np.where(zero, 1.0, denom))
    current = context + [dst]
    perm = [current.index(n) for n in frm_parents] + [len(current)]
    cond = np.transpose(cond, perm)
    unreachable = np.transpose(zero[..., 0], perm[:-1])

    out = dict(cpts)
    out[to] = _build_cpt(to, context, cards, p_to)
    flags = unreachable.reshape(-1).copy()
    out[frm] = _build_cpt(frm, frm_parents, cards, cond, flags if flags.any() else None)
    return out


@dataclass(frozen=True, eq=False)
class ReversedSliceModel:
    """One slice with every evidence variable re-rooted above the state.

    ``cpts`` is indexed by variable id; ``order`` is a topological order of
    the reversed slice with ties broken by ascending id.
    """

    cpts: tuple[Cpt, ...]
    order: tuple[int, ...]
    evidence_ids: tuple[int, ...]
    state_ids: tuple[int, ...]

    @property
    def evidence_cpts(self) -> dict[int, Cpt]:
        return {e: self.cpts[e] for e in self.evidence_ids}

    @property
    def state_cpts(self) -> dict[int, Cpt]:
        return {x: self.cpts[x] for x in self.state_ids}

    @property
    def evidence_order(self) -> list[int]:
        return [v for v in self.order if v in self.evidence_ids]

    @property
    def state_order(self) -> list[int]:
        return [v for v in self.order if v in self.state_ids]


def build_reversed_slice(model: DpnModel, kind: str = "transition") -> ReversedSliceModel:
    """Reverse state->evidence arcs so no evidence variable has a current-state parent.

    Evidence variables are detached one at a time in reverse topological
    order; each reversal takes the evidence variable's latest state parent.
    """
    roles = {v.id: v.role for v in model.variables}
    cpts = dict(enumerate(model.cpts(kind)))
    original_order = topological_order(model, kind)
    for e in [v for v in reversed(original_order) if roles[v] == EVIDENCE]:
        while True:
            state_parents = [v for v, lag in cpts[e].parents if lag == SAME and roles[v] == STATE]
            if not state_parents:
                break
            order = _topological({c.child: [v for v, lag in c.parents if lag == SAME] for c in cpts.values()})
            x = max(state_parents, key=order.index)
            try:
                cpts = reverse_arc(cpts, x, e)
            except ReversalCycleError as exc:
                raise UnsupportedStructureError(
                    f"cannot detach evidence '{model.variables[e].name}' from "
                    f"'{model.variables[x].name}': {exc}"
                ) from None
    order = _topological({c.child: [v for v, lag in c.parents if lag == SAME] for c in cpts.values()})
    return ReversedSliceModel(
        cpts=tuple(cpts[v] for v in range(model.n_vars)),
        order=tuple(order),
        evidence_ids=tuple(model.evidence_ids),
        state_ids=tuple(model.state_ids),
    )


def reversed_model_dict(model: DpnModel) -> dict:
    """Network-format document whose slices are the evidence-reversed templates."""
    templates = reverse_model(model)
    return {
        "variables": [{"name": v.name, "role": v.role, "cardinality": v.cardinality} for v in model.variables],
        "prior": [cpt_to_dict(model, c) for c in templates.prior.cpts],
        "transition": [cpt_to_dict(model, c) for c in templates.transition.cpts],
    }


@dataclass(frozen=True, eq=False)
class ReversedTemplates:
    """Evidence-reversed prior and transition slices of one model."""

    prior: ReversedSliceModel
    transition: ReversedSliceModel

    def for_slice(self, t: int) -> ReversedSliceModel:
        return self.prior if t == 0 else self.transition


def reverse_model(model: DpnModel) -> ReversedTemplates:
    """Precompute both reversed templates; stationarity makes this a one-off."""
    return ReversedTemplates(build_reversed_slice(model, "prior"), build_reversed_slice(model, "transition"))
