"""Discrete dynamic probabilistic networks as stationary two-slice templates.

A :class:`DpnModel` holds one CPT per variable for the prior slice (t = 0) and
one per variable for the transition slice (t >= 1).  Transition CPTs may read
state variables of slice t-1 (``lag == PREV``) and any variable of slice t
(``lag == SAME``).

Slice assignments are integer arrays of length ``V`` indexed by variable id,
with ``-1`` marking an unassigned variable.  Populations of particles are the
same thing stacked into an ``(N, V)`` array.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

STATE = "state"
EVIDENCE = "evidence"
SAME = 0
PREV = 1
ROW_TOLERANCE = 1e-12

_SLICE_TAGS = {"t": SAME, "t-1": PREV}
_LAG_TAGS = {SAME: "t", PREV: "t-1"}


class ModelError(ValueError):
    """Raised when a network document cannot be parsed or fails validation."""

    def __init__(self, problems: Sequence[str] | str):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class Variable:
    id: int
    name: str
    role: str
    cardinality: int


@dataclass(frozen=True, eq=False)
class Cpt:
    """P(child | parents) as a row-stochastic matrix.

    Rows are indexed row-major over ``parents`` in declared order: the last
    parent varies fastest.  ``parents`` holds ``(variable id, lag)`` pairs.
    ``unreachable`` optionally flags rows whose conditioning context has
    probability zero (produced by arc reversal).
    """

    child: int
    parents: tuple[tuple[int, int], ...]
    parent_cards: tuple[int, ...]
    table: np.ndarray
    unreachable: np.ndarray | None = None

    @property
    def strides(self) -> np.ndarray:
        strides = np.ones(len(self.parents), dtype=np.int64)
        for k in range(len(self.parents) - 2, -1, -1):
            strides[k] = strides[k + 1] * self.parent_cards[k + 1]
        return strides

    def row_index(self, cur: np.ndarray, prev: np.ndarray | None) -> np.ndarray:
        """Row numbers for a population ``cur`` (N, V) with previous slice ``prev``."""
        rows = np.zeros(cur.shape[0], dtype=np.int64)
        for (var, lag), stride in zip(self.parents, self.strides):
            source = cur if lag == SAME else prev
            rows += source[:, var].astype(np.int64) * stride
        return rows

    def factor(self) -> np.ndarray:
        """The table reshaped to one axis per parent followed by the child axis."""
        return self.table.reshape(self.parent_cards + (self.table.shape[1],))


@dataclass(frozen=True, eq=False)
class DpnModel:
    variables: tuple[Variable, ...]
    prior: tuple[Cpt, ...]
    transition: tuple[Cpt, ...]

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def cards(self) -> tuple[int, ...]:
        return tuple(v.cardinality for v in self.variables)

    @property
    def state_ids(self) -> list[int]:
        return [v.id for v in self.variables if v.role == STATE]

    @property
    def evidence_ids(self) -> list[int]:
        return [v.id for v in self.variables if v.role == EVIDENCE]

    def index(self, name: str) -> int:
        for v in self.variables:
            if v.name == name:
                return v.id
        raise KeyError(name)

    def cpts(self, kind: str) -> tuple[Cpt, ...]:
        if kind == "prior":
            return self.prior
        if kind == "transition":
            return self.transition
        raise ValueError(f"unknown slice kind {kind!r}")

    def assignment(self, **values: int) -> np.ndarray:
        """Build a slice assignment from ``name=value`` keywords."""
        out = np.full(self.n_vars, -1, dtype=np.int64)
        for name, value in values.items():
            out[self.index(name)] = value
        return out


def make_cpt(child: int, parents: Sequence[tuple[int, int]], cards: Sequence[int], table) -> Cpt:
    """Construct a read-only Cpt, deriving parent cardinalities from ``cards``."""
    table = np.array(table, dtype=float)
    if table.ndim == 1:
        table = table[None, :]
    table.setflags(write=False)
    parents = tuple((int(v), int(lag)) for v, lag in parents)
    return Cpt(child, parents, tuple(int(cards[v]) for v, _ in parents), table)


def _check_cpt(model: DpnModel, kind: str, position: int, cpt: Cpt) -> list[str]:
    where = f"{kind}[{position}]"
    n = model.n_vars
    problems = []
    if cpt.child != position:
        problems.append(f"{where}.child: expected variable {position}, got {cpt.child}")
        return problems
    name = model.variables[cpt.child].name
    seen = set()
    for k, (var, lag) in enumerate(cpt.parents):
        ref = f"{where}.parents[{k}]"
        if not 0 <= var < n:
            problems.append(f"{ref}: unknown variable id {var}")
            continue
        if (var, lag) in seen:
            problems.append(f"{ref}: duplicate parent '{model.variables[var].name}'")
        seen.add((var, lag))
        if lag == SAME and var == cpt.child:
            problems.append(f"{ref}: variable '{name}' is its own parent")
        if lag == PREV:
            if kind == "prior":
                problems.append(f"{ref}: prior-slice CPT of '{name}' has a previous-slice parent")
            elif model.variables[var].role != STATE:
                problems.append(
                    f"{ref}: previous-slice parent '{model.variables[var].name}' of '{name}' is not a state variable"
                )
        elif lag != SAME:
            problems.append(f"{ref}: invalid slice tag {lag!r}")
    if problems:
        return problems
    card = model.variables[cpt.child].cardinality
    expected_rows = int(np.prod([model.cards[v] for v, _ in cpt.parents], dtype=np.int64))
    if cpt.table.shape != (expected_rows, card):
        problems.append(
            f"{where}.table: shape {cpt.table.shape} for '{name}', expected ({expected_rows}, {card})"
        )
        return problems
    for r, row in enumerate(cpt.table):
        if not np.all(np.isfinite(row)) or np.any(row < 0.0) or np.any(row > 1.0):
            problems.append(f"{where}.table[{r}]: entries of '{name}' outside [0, 1]")
        elif abs(row.sum() - 1.0) > ROW_TOLERANCE:
            problems.append(f"{where}.table[{r}]: row of '{name}' sums to {row.sum():.15g}, not 1")
    return problems


def _intra_slice_parents(cpts: Sequence[Cpt]) -> dict[int, list[int]]:
    return {c.child: sorted({v for v, lag in c.parents if lag == SAME}) for c in cpts}


def _topological(parents: dict[int, list[int]]) -> list[int] | None:
    children: dict[int, list[int]] = {v: [] for v in parents}
    indegree = {v: 0 for v in parents}
    for v, ps in parents.items():
        for p in ps:
            if p in children:
                children[p].append(v)
                indegree[v] += 1
    ready = [v for v, d in indegree.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        v = heapq.heappop(ready)
        order.append(v)
        for c in children[v]:
            indegree[c] -= 1
            if indegree[c] == 0:
                heapq.heappush(ready, c)
    return order if len(order) == len(parents) else None


def validate_model(model: DpnModel) -> list[str]:
    """Return a list of human-readable invariant violations (empty if valid)."""
    problems = []
    for i, v in enumerate(model.variables):
        if v.id != i:
            problems.append(f"variables[{i}]: id {v.id} is not its position")
        if v.role not in (STATE, EVIDENCE):
            problems.append(f"variables[{i}].role: '{v.role}' is not 'state' or 'evidence'")
        if v.cardinality < 2:
            problems.append(f"variables[{i}].cardinality: '{v.name}' has cardinality {v.cardinality} < 2")
    if problems:
        return problems
    for kind in ("prior", "transition"):
        cpts = model.cpts(kind)
        if len(cpts) != model.n_vars:
            problems.append(f"{kind}: {len(cpts)} CPTs for {model.n_vars} variables")
            continue
        cpt_problems = []
        for i, cpt in enumerate(cpts):
            cpt_problems += _check_cpt(model, kind, i, cpt)
            if model.variables[i].role == EVIDENCE and not cpt.parents:
                cpt_problems.append(f"{kind}[{i}].parents: evidence variable '{model.variables[i].name}' has no parent")
        problems += cpt_problems
        if not cpt_problems and _topological(_intra_slice_parents(cpts)) is None:
            problems.append(f"{kind}: intra-slice arcs contain a directed cycle")
    return problems


def topological_order(model: DpnModel, slice_kind: str) -> list[int]:
    """Variable ids with every variable after its same-slice parents.

    Ties are broken by ascending id.
    """
    order = _topological(_intra_slice_parents(model.cpts(slice_kind)))
    if order is None:
        raise ModelError(f"{slice_kind}: intra-slice arcs contain a directed cycle")
    return order


def categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw per row of ``probs`` (N, K); rows need not be normalized."""
    cum = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cum[:, -1]
    draws = (cum <= u[:, None]).sum(axis=1)
    return np.minimum(draws, probs.shape[1] - 1)


def sample_variables(
    cpts: Sequence[Cpt], order: Sequence[int], cur: np.ndarray, prev: np.ndarray | None, rng: np.random.Generator
) -> np.ndarray:
    """Fill columns ``order`` of the population ``cur`` in place, in that order."""
    for v in order:
        cpt = cpts[v]
        cur[:, v] = categorical(cpt.table[cpt.row_index(cur, prev)], rng)
    return cur


def log_likelihood(
    cpts: Sequence[Cpt], evidence_ids: Sequence[int], cur: np.ndarray, prev: np.ndarray | None
) -> np.ndarray:
    """Per-particle log of the product of evidence CPT entries (``-inf`` for zeros)."""
    total = np.zeros(cur.shape[0])
    with np.errstate(divide="ignore"):
        for e in evidence_ids:
            cpt = cpts[e]
            total += np.log(cpt.table[cpt.row_index(cur, prev), cur[:, e]])
    return total


def ancestral_sample(model: DpnModel, prev_state: np.ndarray | None, rng: np.random.Generator) -> np.ndarray:
    """Sample every variable of one slice, root first.

    ``prev_state`` is ``None`` for the prior slice, else the previous slice's
    assignment (its state variables must be set).
    """
    kind = "prior" if prev_state is None else "transition"
    cur = np.full((1, model.n_vars), -1, dtype=np.int64)
    prev = None if prev_state is None else np.asarray(prev_state, dtype=np.int64)[None, :]
    if prev is not None and np.any(prev[0, model.state_ids] < 0):
        raise ValueError("prev_state must assign every state variable")
    sample_variables(model.cpts(kind), topological_order(model, kind), cur, prev, rng)
    return cur[0]


def likelihood(
    model: DpnModel, evidence: np.ndarray, sample: np.ndarray, prev: np.ndarray | None = None
) -> float:
    """Product over evidence variables of P(observed value | parents).

    Parent values come from ``sample`` (same slice) and ``prev`` (previous
    slice); observed evidence values override ``sample``.  ``prev=None``
    selects the prior-slice CPTs.
    """
    kind = "prior" if prev is None else "transition"
    cpts = model.cpts(kind)
    cur = np.asarray(sample, dtype=np.int64).copy()
    evidence = np.asarray(evidence, dtype=np.int64)
    for e in model.evidence_ids:
        if evidence[e] < 0:
            raise ValueError(f"evidence variable '{model.variables[e].name}' is unassigned")
        cur[e] = evidence[e]
    prev_arr = None if prev is None else np.asarray(prev, dtype=np.int64)
    for e in model.evidence_ids:
        for var, lag in cpts[e].parents:
            source = cur if lag == SAME else prev_arr
            if source[var] < 0:
                raise ValueError(
                    f"parent '{model.variables[var].name}' of '{model.variables[e].name}' is unassigned"
                )
    prev_pop = None if prev_arr is None else prev_arr[None, :]
    return float(np.exp(log_likelihood(cpts, model.evidence_ids, cur[None, :], prev_pop)[0]))


def generate_truth_and_evidence(model: DpnModel, T: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Forward-sample slices ``0..T``.

    Returns ``(truth, evidence)``, two ``(T + 1, V)`` arrays: the state
    trajectory with evidence columns unassigned, and the evidence sequence
    with state columns unassigned.
    """
    if T < 0:
        raise ValueError("T must be >= 0")
    slices = np.empty((T + 1, model.n_vars), dtype=np.int64)
    prev = None
    for t in range(T + 1):
        prev = ancestral_sample(model, prev, rng)
        slices[t] = prev
    truth = slices.copy()
    evidence = slices.copy()
    truth[:, model.evidence_ids] = -1
    evidence[:, model.state_ids] = -1
    return truth, evidence


def random_model(
    rng: np.random.Generator,
    n_state: int = 2,
    n_evidence: int = 1,
    max_card: int = 3,
    zero_prob: float = 0.0,
) -> DpnModel:
    """A random valid model for property tests.

    State variables form a random DAG in id order and each reads its own
    previous value.  Evidence variables read one or two current state
    variables and, sometimes, a previous-slice state variable.  With
    ``zero_prob > 0`` individual CPT entries are zeroed (never a whole row).
    """
    variables = []
    for i in range(n_state):
        variables.append(Variable(i, f"X{i}", STATE, int(rng.integers(2, max_card + 1))))
    for j in range(n_evidence):
        i = n_state + j
        variables.append(Variable(i, f"E{j}", EVIDENCE, int(rng.integers(2, max_card + 1))))
    cards = [v.cardinality for v in variables]

    def table(child, parents):
        rows = int(np.prod([cards[v] for v, _ in parents], dtype=np.int64))
        t = rng.dirichlet(np.ones(cards[child]), size=rows)
        if zero_prob > 0:
            mask = rng.random(t.shape) < zero_prob
            mask[np.arange(rows), rng.integers(0, cards[child], size=rows)] = False
            t[mask] = 0.0
            t /= t.sum(axis=1, keepdims=True)
        return t

    prior, transition = [], []
    for v in variables:
        if v.role == STATE:
            same = [(p, SAME) for p in range(v.id) if rng.random() < 0.5]
            prev = [(v.id, PREV)] + [(p, PREV) for p in range(n_state) if p != v.id and rng.random() < 0.3]
        else:
            k = min(n_state, int(rng.integers(1, 3)))
            same = [(int(p), SAME) for p in sorted(rng.choice(n_state, size=k, replace=False))]
            prev = [(int(rng.integers(n_state)), PREV)] if rng.random() < 0.25 else []
        prior.append(make_cpt(v.id, same, cards, table(v.id, same)))
        parents = prev + same
        transition.append(make_cpt(v.id, parents, cards, table(v.id, parents)))
    return DpnModel(tuple(variables), tuple(prior), tuple(transition))


# --- JSON network format -------------------------------------------------


def _require(doc, key, where, kind):
    if not isinstance(doc, dict) or key not in doc:
        raise ModelError(f"{where}: missing key '{key}'")
    value = doc[key]
    if not isinstance(value, kind) or isinstance(value, bool):
        raise ModelError(f"{where}.{key}: expected {kind.__name__ if isinstance(kind, type) else 'value'}")
    return value


def parse_model(doc: dict) -> DpnModel:
    """Build a model from a parsed network document without validating it."""
    if not isinstance(doc, dict):
        raise ModelError("$: expected an object")
    raw_vars = _require(doc, "variables", "$", list)
    variables = []
    names: dict[str, int] = {}
    for i, rv in enumerate(raw_vars):
        where = f"variables[{i}]"
        name = _require(rv, "name", where, str)
        role = _require(rv, "role", where, str)
        card = _require(rv, "cardinality", where, int)
        if name in names:
            raise ModelError(f"{where}.name: duplicate variable name '{name}'")
        names[name] = i
        variables.append(Variable(i, name, role, card))
    cards = [v.cardinality for v in variables]

    def parse_slice(kind):
        raw = _require(doc, kind, "$", list)
        by_child: dict[int, Cpt] = {}
        for k, rc in enumerate(raw):
            where = f"{kind}[{k}]"
            child_name = _require(rc, "child", where, str)
            if child_name not in names:
                raise ModelError(f"{where}.child: unknown variable '{child_name}'")
            child = names[child_name]
            if child in by_child:
                raise ModelError(f"{where}.child: second CPT for '{child_name}'")
            parents = []
            for j, rp in enumerate(_require(rc, "parents", where, list)):
                pw = f"{where}.parents[{j}]"
                pname = _require(rp, "name", pw, str)
                tag = _require(rp, "slice", pw, str)
                if pname not in names:
                    raise ModelError(f"{pw}.name: unknown variable '{pname}'")
                if tag not in _SLICE_TAGS:
                    raise ModelError(f"{pw}.slice: expected 't' or 't-1', got '{tag}'")
                parents.append((names[pname], _SLICE_TAGS[tag]))
            rows = _require(rc, "table", where, list)
            try:
                table = np.array(rows, dtype=float)
            except (TypeError, ValueError):
                raise ModelError(f"{where}.table: rows must be equal-length numeric lists") from None
            if table.ndim != 2:
                raise ModelError(f"{where}.table: expected a list of rows")
            by_child[child] = make_cpt(child, parents, cards, table)
        missing = [variables[i].name for i in range(len(variables)) if i not in by_child]
        if missing:
            raise ModelError(f"{kind}: no CPT for {', '.join(missing)}")
        return tuple(by_child[i] for i in range(len(variables)))

    return DpnModel(tuple(variables), parse_slice("prior"), parse_slice("transition"))


def load_model(path: str | Path) -> DpnModel:
    """Read and validate a network file; raises :class:`ModelError`."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid JSON ({exc})") from None
    model = parse_model(doc)
    problems = validate_model(model)
    if problems:
        raise ModelError(problems)
    return model


def cpt_to_dict(model: DpnModel, cpt: Cpt) -> dict:
    out = {
        "child": model.variables[cpt.child].name,
        "parents": [{"name": model.variables[v].name, "slice": _LAG_TAGS[lag]} for v, lag in cpt.parents],
        "table": cpt.table.tolist(),
    }
    if cpt.unreachable is not None and cpt.unreachable.any():
        out["unreachable_rows"] = np.flatnonzero(cpt.unreachable).tolist()
    return out


def model_to_dict(model: DpnModel) -> dict:
    return {
        "variables": [{"name": v.name, "role": v.role, "cardinality": v.cardinality} for v in model.variables],
        "prior": [cpt_to_dict(model, c) for c in model.prior],
        "transition": [cpt_to_dict(model, c) for c in model.transition],
    }


def load_sequence(model: DpnModel, path: str | Path, role: str = EVIDENCE) -> np.ndarray:
    """Read a list of per-slice ``{name: value}`` objects into a (T + 1, V) array.

    Every variable of ``role`` must be assigned in every slice.
    """
    try:
        records = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(records, list) or not records:
        raise ModelError("$: expected a non-empty list of slice records")
    wanted = [v.id for v in model.variables if v.role == role]
    out = np.full((len(records), model.n_vars), -1, dtype=np.int64)
    for t, rec in enumerate(records):
        if not isinstance(rec, dict):
            raise ModelError(f"[{t}]: expected an object")
        for name, value in rec.items():
            try:
                v = model.index(name)
            except KeyError:
                raise ModelError(f"[{t}].{name}: unknown variable") from None
            if model.variables[v].role != role:
                raise ModelError(f"[{t}].{name}: not a {role} variable")
            if not isinstance(value, int) or isinstance(value, bool) or not 0 <= value < model.cards[v]:
                raise ModelError(f"[{t}].{name}: value {value!r} out of range 0..{model.cards[v] - 1}")
            out[t, v] = value
        missing = [model.variables[v].name for v in wanted if out[t, v] < 0]
        if missing:
            raise ModelError(f"[{t}]: unassigned {role} variable(s) {', '.join(missing)}")
    return out


def sequence_to_records(model: DpnModel, seq: np.ndarray, role: str = EVIDENCE) -> list[dict]:
    ids = [v.id for v in model.variables if v.role == role]
    return [{model.variables[v].name: int(row[v]) for v in ids} for row in seq]
