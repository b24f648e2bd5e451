"""Markov chains: random-scan Gibbs, the symmetry-exploiting orbital variant
with move probability alpha, and the aggregate chain that picks one of K
orbital sub-chains uniformly at each step.

Randomness is split into independent streams per chain (variable scans,
orbital decisions, sub-chain selection, pad evolution) so that the alpha=0
chain is bit-identical to plain Gibbs under a shared seed.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass
from typing import Iterator, Sequence

from .model import GraphicalModel, MarginalEstimate, ModelError, State
from .partition import BlockPartition, BlockValueSet, generate_block_partitions, normalize_if_needed, singleton_partition
from .group import OrbitSampler, SymmetryGroup, pra_init
from .symmetry import build_bv_graph, extract_bv_symmetries, find_automorphism_generators

CHAIN_KINDS = ("vanilla", "bv", "vv", "aggregate")


@dataclass(frozen=True)
class ChainConfig:
    kind: str = "vanilla"
    alpha: float = 1.0
    steps: int = 10000
    burn_in: int = 0
    seed: int = 0
    orbit_mode: str = "pra"
    report_every: int | None = None
    thin: int = 1
    n_chains: int = 3  # aggregate sub-chain count when partitions are implicit
    max_block: int = 2  # heuristic block size when partitions are implicit
    orbit_cap: int = 1 << 16

    def __post_init__(self):
        if self.kind not in CHAIN_KINDS:
            raise ModelError(f"unknown chain kind {self.kind!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ModelError("alpha must be in [0, 1]")
        if self.kind == "aggregate" and self.n_chains < 1:
            raise ModelError("aggregate chain needs at least one sub-chain")
        if self.thin < 1 or self.steps < 1 or self.burn_in < 0:
            raise ModelError("bad step configuration")


# ---------------------------------------------------------------------------
# Gibbs kernel


class GibbsKernel:
    """Random-scan single-site Gibbs with per-variable precomputation.

    For each feature touching a variable, the literals on that variable are
    folded into a per-value truth table; the remaining literals are evaluated
    against the current state once per step.
    """

    def __init__(self, model: GraphicalModel):
        self.model = model
        self.sizes = model.domain_sizes()
        self.entries: list[list[tuple]] = [[] for _ in model.variables]
        for feat in model.features:
            is_or = feat.connective == "OR"
            for v in set(feat.variables()):
                on = [lit for lit in feat.literals if lit.var == v]
                off = tuple(
                    (lit.var, lit.value, lit.negated)
                    for lit in feat.literals
                    if lit.var != v
                )
                if is_or:
                    on_true = tuple(
                        any(l.holds(x) for l in on) for x in range(self.sizes[v])
                    )
                else:
                    on_true = tuple(
                        all(l.holds(x) for l in on) for x in range(self.sizes[v])
                    )
                self.entries[v].append((feat.weight, is_or, off, on_true))

    def conditional(self, state: State, v: int) -> list[float]:
        """Full conditional of variable v given the rest of the state."""
        d = self.sizes[v]
        scores = [0.0] * d
        for weight, is_or, off, on_true in self.entries[v]:
            if is_or:
                hit = False
                for u, value, negated in off:
                    x = state[u]
                    if (x != value) if negated else (x == value):
                        hit = True
                        break
                if hit:
                    for k in range(d):
                        scores[k] += weight
                else:
                    for k in range(d):
                        if on_true[k]:
                            scores[k] += weight
            else:
                ok = True
                for u, value, negated in off:
                    x = state[u]
                    if (x == value) if negated else (x != value):
                        ok = False
                        break
                if ok:
                    for k in range(d):
                        if on_true[k]:
                            scores[k] += weight
        top = max(scores)
        probs = [math.exp(s - top) for s in scores]
        total = sum(probs)
        return [p / total for p in probs]

    def step(self, state: list[int], rng: random.Random) -> int:
        """Resample one uniformly chosen variable in place; returns its id."""
        v = rng.randrange(len(state))
        probs = self.conditional(state, v)
        r = rng.random()
        acc = 0.0
        for k, p in enumerate(probs):
            acc += p
            if r < acc:
                state[v] = k
                return v
        state[v] = len(probs) - 1
        return v


def _kernel(model: GraphicalModel) -> GibbsKernel:
    kernel = model.__dict__.get("_gibbs_kernel")
    if kernel is None:
        kernel = GibbsKernel(model)
        object.__setattr__(model, "_gibbs_kernel", kernel)
    return kernel


def gibbs_step(model: GraphicalModel, state: State, rng: random.Random) -> tuple[int, ...]:
    """One random-scan Gibbs transition; returns the new state."""
    work = list(state)
    _kernel(model).step(work, rng)
    return tuple(work)


def bv_mcmc_step(
    model: GraphicalModel,
    state: State,
    group_sampler: OrbitSampler | None,
    alpha: float,
    rng: random.Random,
    decision_rng: random.Random | None = None,
) -> tuple[int, ...]:
    """Gibbs transition followed, with probability alpha, by a uniform jump
    within the block-value orbit of the intermediate state. alpha = 0 never
    touches the group and consumes exactly the draws of a plain Gibbs step."""
    decision_rng = decision_rng or rng
    nxt = gibbs_step(model, state, rng)
    if alpha <= 0.0 or group_sampler is None:
        return nxt
    if alpha >= 1.0 or decision_rng.random() < alpha:
        return group_sampler.sample(nxt, decision_rng)
    return nxt


def aggregate_step(
    model: GraphicalModel,
    state: State,
    sub_chains: Sequence[tuple[float, OrbitSampler | None]],
    rng: random.Random,
    select_rng: random.Random | None = None,
    decision_rng: random.Random | None = None,
) -> tuple[int, ...]:
    """Pick one (alpha, sampler) sub-chain uniformly and take its transition."""
    select_rng = select_rng or rng
    k = select_rng.randrange(len(sub_chains))
    alpha, sampler = sub_chains[k]
    return bv_mcmc_step(model, state, sampler, alpha, rng, decision_rng)


# ---------------------------------------------------------------------------
# Marginal accumulation


class MarginalAccumulator:
    """Counts every recorded state once per variable; value changes are
    booked lazily as intervals so a step costs O(changed variables)."""

    def __init__(self, model: GraphicalModel):
        self.model = model
        self.counts = [[0] * d for d in model.domain_sizes()]
        self.current: list[int] | None = None
        self.last_flush: list[int] = []
        self.tick = 0

    def start(self, state: Sequence[int]) -> None:
        self.current = list(state)
        self.last_flush = [0] * len(state)
        self.tick = 0

    def advance(self, new_state: Sequence[int]) -> None:
        """Record one step ending in new_state."""
        self.tick += 1
        cur = self.current
        for v, x in enumerate(new_state):
            if cur[v] != x:
                # the old value held from last_flush up to the previous tick
                self.counts[v][cur[v]] += (self.tick - 1) - self.last_flush[v]
                self.counts[v][x] += 1
                self.last_flush[v] = self.tick
                cur[v] = x

    def flush(self) -> None:
        cur = self.current
        for v in range(len(cur)):
            self.counts[v][cur[v]] += self.tick - self.last_flush[v]
            self.last_flush[v] = self.tick

    def estimate(self) -> MarginalEstimate:
        self.flush()
        if self.tick == 0:
            raise ModelError("no samples accumulated yet")
        names = tuple(v.name for v in self.model.variables)
        probs = tuple(
            tuple(c / self.tick for c in row) for row in self.counts
        )
        return MarginalEstimate(names, probs, sample_count=self.tick)


# ---------------------------------------------------------------------------
# Chain runtime


@dataclass
class Snapshot:
    step: int
    elapsed_ms: float
    estimate: MarginalEstimate


def build_groups(
    model: GraphicalModel,
    partitions: Sequence[BlockPartition],
    max_expansions: int | None = None,
) -> list[SymmetryGroup]:
    """Full symmetry pipeline per partition: normalize, build the colored
    graph, search automorphisms, extract block-value generators."""
    clausal = normalize_if_needed(model)
    groups = []
    for partition in partitions:
        bvs = BlockValueSet(model, partition)
        g = build_bv_graph(clausal, partition)
        gens = find_automorphism_generators(g, max_expansions)
        groups.append(SymmetryGroup(bvs, extract_bv_symmetries(g, gens, bvs)))
    return groups


class Chain:
    """Owns the state, the random streams, and the per-partition samplers of
    one running chain. Not thread-safe; one chain per thread of execution."""

    def __init__(
        self,
        model: GraphicalModel,
        config: ChainConfig,
        partitions: Sequence[BlockPartition] | None = None,
        groups: Sequence[SymmetryGroup] | None = None,
    ):
        started = time.perf_counter()
        self.model = model
        self.config = config
        kind = config.kind
        self.rng_gibbs = random.Random(f"{config.seed}:gibbs")
        self.rng_decision = random.Random(f"{config.seed}:decision")
        self.rng_select = random.Random(f"{config.seed}:select")

        if kind == "vanilla":
            self.subs: list[tuple[float, OrbitSampler | None]] = [(0.0, None)]
        else:
            if kind == "vv":
                partitions = [singleton_partition(model)]
                alpha = 1.0
            else:
                alpha = config.alpha
            if partitions is None:
                count = config.n_chains if kind == "aggregate" else 1
                partitions = generate_block_partitions(
                    model, config.max_block, count, seed=config.seed
                )
            if kind != "aggregate":
                # one partition per plain orbital chain; extras are candidates
                partitions = list(partitions)[:1]
                groups = list(groups)[:1] if groups is not None else None
            if groups is None:
                groups = build_groups(model, partitions)
            self.subs = []
            for k, grp in enumerate(groups):
                sampler = self._make_sampler(grp, k)
                self.subs.append((alpha, sampler))
        self.selection_counts = [0] * len(self.subs)
        self.partitions = list(partitions or [])
        self.state = [
            self.rng_gibbs.randrange(d) for d in model.domain_sizes()
        ]
        self.preprocessing_s = time.perf_counter() - started

    def _make_sampler(self, grp: SymmetryGroup, k: int) -> OrbitSampler | None:
        if grp.is_trivial():
            return OrbitSampler(grp, "exact", cap=self.config.orbit_cap)
        if self.config.orbit_mode == "pra":
            pad = pra_init(grp, seed=f"{self.config.seed}:pad:{k}")
            return OrbitSampler(grp, "pra", pad, cap=self.config.orbit_cap)
        return OrbitSampler(grp, "exact", cap=self.config.orbit_cap)

    def step(self) -> None:
        if len(self.subs) == 1:
            k = 0
        else:
            k = self.rng_select.randrange(len(self.subs))
        self.selection_counts[k] += 1
        alpha, sampler = self.subs[k]
        self.state = list(
            bv_mcmc_step(
                self.model, self.state, sampler, alpha, self.rng_gibbs, self.rng_decision
            )
        )

    def run(self, elapsed_offset_s: float = 0.0) -> Iterator[Snapshot]:
        """Burn in, then accumulate marginal counts each post-burn-in step,
        emitting a snapshot every report_every steps (and at the end).
        Elapsed time includes symmetry preprocessing and any offset supplied
        for stages the caller timed separately."""
        config = self.config
        report_every = config.report_every or config.steps
        started = time.perf_counter()
        offset = elapsed_offset_s + self.preprocessing_s

        for _ in range(config.burn_in):
            self.step()
        acc = MarginalAccumulator(self.model)
        acc.start(self.state)
        for t in range(1, config.steps + 1):
            self.step()
            if t % config.thin == 0:
                acc.advance(self.state)
            if t % report_every == 0 or t == config.steps:
                elapsed_ms = (time.perf_counter() - started + offset) * 1e3
                yield Snapshot(t, elapsed_ms, acc.estimate())
                if t == config.steps:
                    return


def run_chain(
    model: GraphicalModel,
    config: ChainConfig,
    partitions: Sequence[BlockPartition] | None = None,
    groups: Sequence[SymmetryGroup] | None = None,
    elapsed_offset_s: float = 0.0,
) -> Iterator[Snapshot]:
    """Stream of (step, elapsed_ms, marginal snapshot) for one chain.
    Symmetries are computed inline when not supplied; that time is charged
    to the elapsed clock. The sample path is deterministic per seed."""
    chain = Chain(model, config, partitions, groups)
    yield from chain.run(elapsed_offset_s)
