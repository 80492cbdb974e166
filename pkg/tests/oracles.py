"""Brute-force reference computations, independent of the package's fast paths."""

import itertools

import numpy as np

SAME, PREV = 0, 1


def entry(cpt, child_value, cur, prev):
    """CPT entry by explicit row-major row arithmetic."""
    row = 0
    for (var, lag), card in zip(cpt.parents, cpt.parent_cards):
        value = cur[var] if lag == SAME else prev[var]
        row = row * card + value
    return cpt.table[row, child_value]


def slice_product(cpts, cur, prev):
    p = 1.0
    for cpt in cpts:
        p *= entry(cpt, cur[cpt.child], cur, prev)
    return p


def all_assignments(cards, ids):
    for values in itertools.product(*[range(cards[v]) for v in ids]):
        out = [-1] * len(cards)
        for v, x in zip(ids, values):
            out[v] = x
        yield out


def slice_joint_table(cpts, cards, state_ids):
    """{(prev_state_values, cur_values): product of CPT entries} over every assignment."""
    table = {}
    prev_iter = list(all_assignments(cards, state_ids))
    for prev in prev_iter:
        for cur in all_assignments(cards, range(len(cards))):
            table[tuple(prev), tuple(cur)] = slice_product(cpts, cur, prev)
    return table


def unrolled_marginals(model, evidence):
    """P(X_t = x | e_{0:t}) for every t by enumerating whole state trajectories."""
    cards = model.cards
    states = model.state_ids
    T = len(evidence) - 1
    out = []
    for horizon in range(T + 1):
        marg = [np.zeros(cards[x]) for x in states]
        per_slice = list(all_assignments(cards, states))
        for path in itertools.product(per_slice, repeat=horizon + 1):
            p = 1.0
            prev = None
            for t, s in enumerate(path):
                cur = list(s)
                for e in model.evidence_ids:
                    cur[e] = int(evidence[t][e])
                cpts = model.prior if t == 0 else model.transition
                p *= slice_product(cpts, cur, prev)
                if p == 0.0:
                    break
                prev = cur
            if p == 0.0:
                continue
            for k, x in enumerate(states):
                marg[k][path[-1][x]] += p
        total = marg[0].sum()
        out.append([m / total for m in marg])
    return out
