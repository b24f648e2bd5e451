"""Ground discrete graphical models: weighted features over finite-domain
variables, exact enumeration, evidence handling, and benchmark generators.

A model is a list of weighted features. A feature is an OR or AND of
equality/inequality literals; the unnormalized log weight of a state is
``log_offset + sum(w_j for every satisfied feature j)``.
"""

from __future__ import annotations

import math
import os
import random
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np

State = Sequence[int]
Evidence = Mapping[int, int]

DEFAULT_STATE_CAP = 2 ** 24
STATE_CAP_ENV = "BVMC_STATE_CAP"


class ModelError(ValueError):
    """Malformed model, state, or evidence."""


class StateSpaceError(ModelError):
    """Joint state space exceeds the enumeration cap."""


def state_cap(override: int | None = None) -> int:
    if override is not None:
        return override
    env = os.environ.get(STATE_CAP_ENV)
    return int(env) if env else DEFAULT_STATE_CAP


@dataclass(frozen=True)
class Variable:
    id: int
    name: str
    domain_size: int

    def __post_init__(self):
        if self.domain_size < 2:
            raise ModelError(f"variable {self.name!r}: domain size must be >= 2")
        if not self.name or any(c.isspace() for c in self.name) or "=" in self.name:
            raise ModelError(f"invalid variable name {self.name!r}")


@dataclass(frozen=True)
class Literal:
    """Test on a single variable: var == value, or var != value if negated."""

    var: int
    value: int
    negated: bool = False

    def holds(self, value: int) -> bool:
        return (value != self.value) if self.negated else (value == self.value)


@dataclass(frozen=True)
class Feature:
    connective: str  # "OR" | "AND"
    literals: tuple[Literal, ...]
    weight: float

    def __post_init__(self):
        if self.connective not in ("OR", "AND"):
            raise ModelError(f"unknown connective {self.connective!r}")
        if not self.literals:
            raise ModelError("feature with no literals")
        if len(set(self.literals)) != len(self.literals):
            raise ModelError("duplicate literal in feature")
        if not math.isfinite(self.weight):
            raise ModelError("feature weight must be finite")

    def variables(self) -> tuple[int, ...]:
        seen: dict[int, None] = {}
        for lit in self.literals:
            seen[lit.var] = None
        return tuple(seen)

    def satisfied(self, state: State) -> bool:
        if self.connective == "OR":
            return any(lit.holds(state[lit.var]) for lit in self.literals)
        return all(lit.holds(state[lit.var]) for lit in self.literals)


@dataclass(frozen=True)
class GraphicalModel:
    variables: tuple[Variable, ...]
    features: tuple[Feature, ...]
    log_offset: float = 0.0

    def __post_init__(self):
        names = set()
        for i, v in enumerate(self.variables):
            if v.id != i:
                raise ModelError(f"variable ids must be contiguous, got {v.id} at {i}")
            if v.name in names:
                raise ModelError(f"duplicate variable name {v.name!r}")
            names.add(v.name)
        for f in self.features:
            for lit in f.literals:
                if not 0 <= lit.var < len(self.variables):
                    raise ModelError(f"literal references unknown variable {lit.var}")
                if not 0 <= lit.value < self.variables[lit.var].domain_size:
                    raise ModelError(
                        f"literal value {lit.value} out of domain for "
                        f"{self.variables[lit.var].name!r}"
                    )
        if not math.isfinite(self.log_offset):
            raise ModelError("log_offset must be finite")

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    def domain_sizes(self) -> tuple[int, ...]:
        return tuple(v.domain_size for v in self.variables)

    def n_states(self) -> int:
        return math.prod(self.domain_sizes()) if self.variables else 1

    def var_id(self, name: str) -> int:
        try:
            return self._name_index()[name]
        except KeyError:
            raise ModelError(f"unknown variable {name!r}") from None

    def _name_index(self) -> dict[str, int]:
        idx = self.__dict__.get("_names")
        if idx is None:
            idx = {v.name: v.id for v in self.variables}
            object.__setattr__(self, "_names", idx)
        return idx

    def check_state(self, state: State) -> None:
        if len(state) != len(self.variables):
            raise ModelError(
                f"state has {len(state)} entries, model has {len(self.variables)}"
            )
        for v, value in zip(self.variables, state):
            if not 0 <= value < v.domain_size:
                raise ModelError(f"value {value} out of domain for {v.name!r}")


def log_weight(model: GraphicalModel, state: State) -> float:
    """Unnormalized log weight of a full assignment."""
    total = model.log_offset
    for feat in model.features:
        if feat.satisfied(state):
            total += feat.weight
    return total


def negate(literal: Literal, domain_size: int) -> Literal:
    """Logical negation; for binary domains an inequality folds back to equality."""
    if domain_size == 2:
        if literal.negated:
            return Literal(literal.var, literal.value)
        return Literal(literal.var, 1 - literal.value)
    return Literal(literal.var, literal.value, not literal.negated)


def normalize_to_clauses(model: GraphicalModel) -> GraphicalModel:
    """Rewrite every AND feature as a weight-negated OR over negated literals.

    (L1 & ... & Lk, w) contributes w * 1[all hold] = w - w * 1[any negation
    holds], so the clause (!L1 | ... | !Lk) gets weight -w and the constant w
    moves into log_offset. The unnormalized distribution is unchanged.
    """
    clauses = []
    offset = model.log_offset
    sizes = model.domain_sizes()
    for feat in model.features:
        if feat.connective == "OR":
            clauses.append(feat)
            continue
        flipped = tuple(negate(l, sizes[l.var]) for l in feat.literals)
        clauses.append(Feature("OR", flipped, -feat.weight))
        offset += feat.weight
    return GraphicalModel(model.variables, tuple(clauses), offset)


def is_clausal(model: GraphicalModel) -> bool:
    return all(f.connective == "OR" for f in model.features)


def condition(model: GraphicalModel, evidence: Mapping[int, int]) -> GraphicalModel:
    """Absorb evidence, returning a model over the remaining variables whose
    distribution is the conditional of the original.

    OR features: a satisfied literal makes the clause constant (weight folded
    into log_offset); falsified literals are dropped; a clause left empty is
    constant false and removed. AND features dually.
    """
    check_evidence(model, evidence)
    keep = [v for v in model.variables if v.id not in evidence]
    remap = {v.id: i for i, v in enumerate(keep)}
    new_vars = tuple(
        Variable(i, v.name, v.domain_size) for i, v in enumerate(keep)
    )
    offset = model.log_offset
    feats = []
    for feat in model.features:
        is_or = feat.connective == "OR"
        decided = None
        residual = []
        for lit in feat.literals:
            if lit.var in evidence:
                holds = lit.holds(evidence[lit.var])
                if is_or and holds:
                    decided = True
                    break
                if not is_or and not holds:
                    decided = False
                    break
            else:
                residual.append(Literal(remap[lit.var], lit.value, lit.negated))
        if decided is None and not residual:
            # all literals consumed without deciding: OR is false, AND is true
            decided = not is_or
        if decided is True:
            offset += feat.weight
        elif decided is None:
            feats.append(Feature(feat.connective, tuple(residual), feat.weight))
    return GraphicalModel(new_vars, tuple(feats), offset)


def check_evidence(model: GraphicalModel, evidence: Mapping[int, int]) -> None:
    for var, value in evidence.items():
        if not 0 <= var < len(model.variables):
            raise ModelError(f"evidence references unknown variable id {var}")
        if not 0 <= value < model.variables[var].domain_size:
            raise ModelError(
                f"evidence value {value} out of domain for "
                f"{model.variables[var].name!r}"
            )


# ---------------------------------------------------------------------------
# Marginals


@dataclass(frozen=True)
class MarginalEstimate:
    """Per-variable categorical marginals, by variable name."""

    names: tuple[str, ...]
    probs: tuple[tuple[float, ...], ...]
    sample_count: int = 0

    def __post_init__(self):
        if len(self.names) != len(self.probs):
            raise ModelError("marginal names/probs length mismatch")

    def row(self, name: str) -> tuple[float, ...]:
        return self.probs[self.names.index(name)]

    def max_abs_error(self, other: "MarginalEstimate") -> float:
        if self.names != other.names:
            raise ModelError("marginal estimates cover different variables")
        worst = 0.0
        for p, q in zip(self.probs, other.probs):
            worst = max(worst, max(abs(a - b) for a, b in zip(p, q)))
        return worst

    def serialize(self) -> str:
        lines = []
        for name, row in zip(self.names, self.probs):
            lines.append(name + " " + " ".join(repr(p) for p in row))
        return "\n".join(lines) + "\n"


def parse_marginals(text: str) -> MarginalEstimate:
    names, probs = [], []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        names.append(parts[0])
        probs.append(tuple(float(p) for p in parts[1:]))
    return MarginalEstimate(tuple(names), tuple(probs))


_CHUNK = 1 << 16


def _enumerate_chunks(sizes: Sequence[int]):
    """Yield (value_matrix, start) chunks covering the joint space row-major."""
    total = math.prod(sizes) if sizes else 1
    n = len(sizes)
    strides = np.ones(n, dtype=np.int64)
    for i in range(n - 2, -1, -1):
        strides[i] = strides[i + 1] * sizes[i + 1]
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        vals = (idx[:, None] // strides[None, :]) % np.asarray(sizes, dtype=np.int64)
        yield vals, start


def _chunk_log_weights(model: GraphicalModel, vals: np.ndarray) -> np.ndarray:
    logw = np.full(vals.shape[0], model.log_offset, dtype=np.float64)
    for feat in model.features:
        if feat.connective == "OR":
            sat = np.zeros(vals.shape[0], dtype=bool)
            for lit in feat.literals:
                col = vals[:, lit.var]
                sat |= (col != lit.value) if lit.negated else (col == lit.value)
        else:
            sat = np.ones(vals.shape[0], dtype=bool)
            for lit in feat.literals:
                col = vals[:, lit.var]
                sat &= (col != lit.value) if lit.negated else (col == lit.value)
        logw += feat.weight * sat
    return logw


def log_partition(model: GraphicalModel, cap: int | None = None) -> float:
    """log sum over all states of exp(log_weight); brute-force enumeration."""
    total = model.n_states()
    if total > state_cap(cap):
        raise StateSpaceError(f"{total} joint states exceed enumeration cap")
    best = -math.inf
    acc: list[tuple[float, float]] = []
    for vals, _ in _enumerate_chunks(model.domain_sizes()):
        logw = _chunk_log_weights(model, vals)
        m = float(logw.max())
        acc.append((m, float(np.exp(logw - m).sum())))
        best = max(best, m)
    return best + math.log(sum(s * math.exp(m - best) for m, s in acc))


def exact_marginals(
    model: GraphicalModel,
    evidence: Mapping[int, int] | None = None,
    cap: int | None = None,
) -> MarginalEstimate:
    """Exact per-variable marginals of the (conditioned) distribution.

    Evidence variables get degenerate rows. Enumerates the free joint space,
    so it requires the conditioned state count to stay under the cap.
    """
    evidence = dict(evidence or {})
    reduced = condition(model, evidence) if evidence else model
    total = reduced.n_states()
    if total > state_cap(cap):
        raise StateSpaceError(f"{total} joint states exceed enumeration cap")

    sizes = reduced.domain_sizes()
    logz = log_partition(reduced, cap)
    if not math.isfinite(logz):
        raise ModelError("distribution has zero total mass")
    sums = [np.zeros(d, dtype=np.float64) for d in sizes]
    for vals, _ in _enumerate_chunks(sizes):
        p = np.exp(_chunk_log_weights(reduced, vals) - logz)
        for i, d in enumerate(sizes):
            sums[i] += np.bincount(vals[:, i], weights=p, minlength=d)
    reduced_rows = {
        v.name: tuple(float(x) for x in (s / s.sum()))
        for v, s in zip(reduced.variables, sums)
    }

    names, rows = [], []
    for v in model.variables:
        names.append(v.name)
        if v.id in evidence:
            row = [0.0] * v.domain_size
            row[evidence[v.id]] = 1.0
            rows.append(tuple(row))
        else:
            rows.append(reduced_rows[v.name])
    return MarginalEstimate(tuple(names), tuple(rows))


# ---------------------------------------------------------------------------
# Text formats


def parse_model(text: str) -> GraphicalModel:
    """Parse the line-based model format.

    var <name> <domain_size>
    feature <OR|AND> <weight> <lit> [<lit> ...]    lit: [!]<name>=<value>
    offset <real>

    '#' starts a comment; statements may appear in any order but literals may
    only reference variables declared earlier.
    """
    variables: list[Variable] = []
    index: dict[str, int] = {}
    features: list[Feature] = []
    offset = 0.0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0]
        try:
            if kind == "var":
                if len(parts) != 3:
                    raise ModelError("expected: var <name> <domain_size>")
                name, size = parts[1], int(parts[2])
                if name in index:
                    raise ModelError(f"duplicate variable declaration {name!r}")
                index[name] = len(variables)
                variables.append(Variable(len(variables), name, size))
            elif kind == "feature":
                if len(parts) < 4:
                    raise ModelError("expected: feature <OR|AND> <weight> <lit>...")
                lits = tuple(_parse_literal(tok, index, variables) for tok in parts[3:])
                features.append(Feature(parts[1], lits, float(parts[2])))
            elif kind == "offset":
                offset += float(parts[1])
            else:
                raise ModelError(f"unknown statement {kind!r}")
        except ModelError as exc:
            raise ModelError(f"line {lineno}: {exc}") from None
        except (ValueError, IndexError) as exc:
            raise ModelError(f"line {lineno}: {exc}") from None
    return GraphicalModel(tuple(variables), tuple(features), offset)


def _parse_literal(token: str, index: dict[str, int], variables: list[Variable]) -> Literal:
    negated = token.startswith("!")
    body = token[1:] if negated else token
    if "=" not in body:
        raise ModelError(f"malformed literal {token!r}")
    name, value_str = body.rsplit("=", 1)
    if name not in index:
        raise ModelError(f"unknown variable {name!r}")
    var = index[name]
    value = int(value_str)
    if not 0 <= value < variables[var].domain_size:
        raise ModelError(f"value {value} out of domain for {name!r}")
    return Literal(var, value, negated)


def serialize_model(model: GraphicalModel) -> str:
    """Inverse of parse_model; weights use shortest round-trip decimals."""
    lines = [f"var {v.name} {v.domain_size}" for v in model.variables]
    for feat in model.features:
        lits = " ".join(
            ("!" if lit.negated else "")
            + f"{model.variables[lit.var].name}={lit.value}"
            for lit in feat.literals
        )
        lines.append(f"feature {feat.connective} {feat.weight!r} {lits}")
    if model.log_offset != 0.0:
        lines.append(f"offset {model.log_offset!r}")
    return "\n".join(lines) + "\n"


def parse_evidence(text: str, model: GraphicalModel) -> dict[int, int]:
    """Parse lines of <name>=<value> into an id-keyed evidence map."""
    evidence: dict[int, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ModelError(f"line {lineno}: malformed evidence {line!r}")
        name, value_str = line.rsplit("=", 1)
        var = model.var_id(name.strip())
        if var in evidence:
            raise ModelError(f"line {lineno}: variable {name!r} appears twice")
        evidence[var] = int(value_str)
    check_evidence(model, evidence)
    return evidence


def serialize_evidence(model: GraphicalModel, evidence: Mapping[int, int]) -> str:
    return "".join(
        f"{model.variables[var].name}={value}\n" for var, value in sorted(evidence.items())
    )


# ---------------------------------------------------------------------------
# Benchmark generators


def gen_job_search(
    n_people: int,
    edge_prob: float,
    weight_low: float,
    weight_high: float,
    w3: float,
    seed: int,
) -> GraphicalModel:
    """Social job-search domain.

    Per person x: binary TakesML(x), GetsJob(x) and two conjunctive features
    (TakesML & GetsJob, w1x), (!TakesML & GetsJob, w2x) with per-person
    weights drawn uniformly from [weight_low, weight_high]. Each unordered
    pair is linked with probability edge_prob; a linked pair adds a binary
    Connected(x,y) variable and both directed implications
    Connected & TakesML(x) => TakesML(y), as single clauses with weight w3.
    """
    if n_people < 1:
        raise ModelError("need at least one person")
    if not 0.0 <= edge_prob <= 1.0:
        raise ModelError("edge_prob must be in [0, 1]")
    rng = random.Random(seed)
    variables: list[Variable] = []
    features: list[Feature] = []

    takes, gets = [], []
    for x in range(n_people):
        takes.append(len(variables))
        variables.append(Variable(len(variables), f"TakesML(p{x})", 2))
        gets.append(len(variables))
        variables.append(Variable(len(variables), f"GetsJob(p{x})", 2))
    for x in range(n_people):
        w1 = rng.uniform(weight_low, weight_high)
        w2 = rng.uniform(weight_low, weight_high)
        features.append(
            Feature("AND", (Literal(takes[x], 1), Literal(gets[x], 1)), w1)
        )
        features.append(
            Feature("AND", (Literal(takes[x], 0), Literal(gets[x], 1)), w2)
        )
    for x, y in combinations(range(n_people), 2):
        if rng.random() >= edge_prob:
            continue
        conn = len(variables)
        variables.append(Variable(conn, f"Connected(p{x},p{y})", 2))
        for a, b in ((x, y), (y, x)):
            features.append(
                Feature(
                    "OR",
                    (Literal(conn, 0), Literal(takes[a], 0), Literal(takes[b], 1)),
                    w3,
                )
            )
    return GraphicalModel(tuple(variables), tuple(features))


def gen_student_curriculum(
    n_students: int,
    friend_prob: float,
    weight_pool: Sequence[float],
    w: float,
    seed: int,
) -> GraphicalModel:
    """Course-selection domain.

    Per student x: binary Maths(x), CS(x) and a full potential table over the
    pair, realized as four conjunctive features whose weights are a random
    arrangement of four entries of weight_pool. Friendships are a static
    structure sampled pairwise with friend_prob; a friendship (x, y) adds the
    implications Maths(x) => Maths(y) and CS(x) => CS(y), both with weight w.
    """
    if n_students < 1:
        raise ModelError("need at least one student")
    if len(weight_pool) < 4:
        raise ModelError("weight_pool needs at least 4 entries")
    rng = random.Random(seed)
    variables: list[Variable] = []
    features: list[Feature] = []

    maths, cs = [], []
    for x in range(n_students):
        maths.append(len(variables))
        variables.append(Variable(len(variables), f"Maths(s{x})", 2))
        cs.append(len(variables))
        variables.append(Variable(len(variables), f"CS(s{x})", 2))
    rows = ((1, 1), (1, 0), (0, 1), (0, 0))
    for x in range(n_students):
        arranged = rng.sample(list(weight_pool), 4)
        for (m_val, c_val), wx in zip(rows, arranged):
            features.append(
                Feature("AND", (Literal(maths[x], m_val), Literal(cs[x], c_val)), wx)
            )
    for x, y in combinations(range(n_students), 2):
        if rng.random() >= friend_prob:
            continue
        features.append(Feature("OR", (Literal(maths[x], 0), Literal(maths[y], 1)), w))
        features.append(Feature("OR", (Literal(cs[x], 0), Literal(cs[y], 1)), w))
    return GraphicalModel(tuple(variables), tuple(features))


def random_model(
    n_vars: int,
    n_features: int,
    seed: int,
    weight_pool: Sequence[float] | None = None,
    max_arity: int = 3,
    domain_size: int = 2,
) -> GraphicalModel:
    """Random test model; a small weight pool makes repeated weights (and
    hence symmetries) likely, None draws fresh uniform weights."""
    rng = random.Random(seed)
    variables = tuple(Variable(i, f"X{i}", domain_size) for i in range(n_vars))
    features = []
    for _ in range(n_features):
        arity = rng.randint(1, min(max_arity, n_vars))
        vars_ = rng.sample(range(n_vars), arity)
        lits = tuple(
            Literal(v, rng.randrange(domain_size), rng.random() < 0.2) for v in vars_
        )
        weight = (
            rng.choice(list(weight_pool))
            if weight_pool is not None
            else rng.uniform(-1.5, 1.5)
        )
        features.append(Feature(rng.choice(("OR", "AND")), lits, weight))
    return GraphicalModel(variables, tuple(features), 0.0)


def all_states(model: GraphicalModel) -> Iterable[tuple[int, ...]]:
    """Row-major enumeration of the full joint space; test-scale only."""
    sizes = model.domain_sizes()
    total = model.n_states()
    state = [0] * len(sizes)
    for _ in range(total):
        yield tuple(state)
        for i in range(len(sizes) - 1, -1, -1):
            state[i] += 1
            if state[i] < sizes[i]:
                break
            state[i] = 0
