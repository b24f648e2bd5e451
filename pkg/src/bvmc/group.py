"""Group machinery over a block-value set: state action, composition,
product-replacement random elements, and exact orbit enumeration.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

from .model import State
from .partition import BlockValueSet
from .symmetry import BVSymmetry, check_bv_validity, identity_symmetry


class GroupError(ValueError):
    pass


class OrbitCapExceeded(RuntimeError):
    def __init__(self, message: str, partial: set):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class SymmetryGroup:
    """A block-value set together with generating symmetries. Identity
    generators are discarded at construction."""

    bvs: BlockValueSet
    generators: tuple[BVSymmetry, ...]

    def __init__(self, bvs: BlockValueSet, generators: Sequence[BVSymmetry]):
        kept = []
        for gen in generators:
            if len(gen) != bvs.size:
                raise GroupError("generator size does not match block-value set")
            check_bv_validity(bvs, gen.mapping)
            if not gen.is_identity():
                kept.append(gen)
        object.__setattr__(self, "bvs", bvs)
        object.__setattr__(self, "generators", tuple(kept))

    def is_trivial(self) -> bool:
        return not self.generators


def apply(sym: BVSymmetry, bvs: BlockValueSet, state: State) -> tuple[int, ...]:
    """Act on a state: each block's consistent value pair is mapped and the
    image pair written at its target block. Validity guarantees every
    variable is written exactly once."""
    out = [0] * len(state)
    mapping = sym.mapping
    partition = bvs.partition
    for l in range(len(partition)):
        target, values = bvs.decode(mapping[bvs.index_of_state(l, state)])
        for v, x in zip(partition.blocks[target].vars, values):
            out[v] = x
    return tuple(out)


def compose(a: BVSymmetry, b: BVSymmetry) -> BVSymmetry:
    """a after b: apply(compose(a, b), s) == apply(a, apply(b, s))."""
    if len(a) != len(b):
        raise GroupError("mismatched block-value sets")
    bm = b.mapping
    am = a.mapping
    return BVSymmetry(tuple(am[bm[i]] for i in range(len(bm))))


def inverse(a: BVSymmetry) -> BVSymmetry:
    out = [0] * len(a)
    for i, j in enumerate(a.mapping):
        out[j] = i
    return BVSymmetry(tuple(out))


DEFAULT_BURN_IN = 60
DEFAULT_STEPS_PER_SAMPLE = 2


class PRASampler:
    """Rattle-style product replacement: a pad of group elements evolves by
    random right-multiplications and an accumulator collects the walk,
    yielding approximately uniform group elements."""

    def __init__(
        self,
        group: SymmetryGroup,
        pad_size: int | None = None,
        burn_in: int = DEFAULT_BURN_IN,
        seed: int = 0,
        steps_per_sample: int = DEFAULT_STEPS_PER_SAMPLE,
    ):
        gens = group.generators
        if not gens:
            raise GroupError("product replacement needs at least one generator")
        min_pad = max(10, 2 * len(gens) + 1)
        self.pad_size = min_pad if pad_size is None else max(pad_size, min_pad)
        self.group = group
        self.steps_per_sample = steps_per_sample
        self.rng = random.Random(seed)
        self.pad = [gens[i % len(gens)] for i in range(self.pad_size)]
        self.accumulator = identity_symmetry(group.bvs.size)
        for _ in range(burn_in):
            self._step()
        self.burn_in_done = True

    def _step(self) -> None:
        i = self.rng.randrange(self.pad_size)
        j = self.rng.randrange(self.pad_size - 1)
        if j >= i:
            j += 1
        factor = self.pad[j]
        if self.rng.random() < 0.5:
            factor = inverse(factor)
        self.pad[i] = compose(self.pad[i], factor)
        self.accumulator = compose(self.accumulator, self.pad[i])

    def sample(self) -> BVSymmetry:
        for _ in range(self.steps_per_sample):
            self._step()
        return self.accumulator


def pra_init(
    group: SymmetryGroup,
    pad_size: int | None = None,
    burn_in: int = DEFAULT_BURN_IN,
    seed: int = 0,
) -> PRASampler:
    return PRASampler(group, pad_size, burn_in, seed)


def pra_sample(sampler: PRASampler) -> BVSymmetry:
    return sampler.sample()


def orbit_enumerate(
    group: SymmetryGroup, state: State, cap: int = 1 << 16
) -> set[tuple[int, ...]]:
    """Closure of the state under the generators, by breadth-first search.
    Exceeding the cap raises OrbitCapExceeded carrying the partial set."""
    if cap < 1:
        raise GroupError("orbit cap must be >= 1")
    start = tuple(state)
    orbit = {start}
    frontier = [start]
    bvs = group.bvs
    while frontier:
        s = frontier.pop()
        for gen in group.generators:
            t = apply(gen, bvs, s)
            if t not in orbit:
                if len(orbit) >= cap:
                    raise OrbitCapExceeded(
                        f"orbit exceeds cap {cap}", orbit
                    )
                orbit.add(t)
                frontier.append(t)
    return orbit


class OrbitSampler:
    """Uniform draws from the orbit of a state, either exactly (enumerate,
    then choose uniformly; orbits are cached) or through product replacement.
    Draw randomness comes from the rng passed per call, so chains can keep
    their decision stream separate from pad evolution."""

    def __init__(
        self,
        group: SymmetryGroup,
        mode: str = "pra",
        pra: PRASampler | None = None,
        cap: int = 1 << 16,
        cache_limit: int = 1 << 16,
    ):
        if mode not in ("pra", "exact"):
            raise GroupError(f"unknown orbit mode {mode!r}")
        if mode == "pra" and pra is None and not group.is_trivial():
            raise GroupError("pra mode needs an initialized sampler")
        self.group = group
        self.mode = mode
        self.pra = pra
        self.cap = cap
        self._cache: dict[tuple[int, ...], tuple[tuple[int, ...], ...]] = {}
        self._cache_limit = cache_limit

    def sample(self, state: State, rng: random.Random) -> tuple[int, ...]:
        if self.group.is_trivial():
            return tuple(state)
        if self.mode == "pra":
            return apply(self.pra.sample(), self.group.bvs, state)
        key = tuple(state)
        orbit = self._cache.get(key)
        if orbit is None:
            orbit = tuple(sorted(orbit_enumerate(self.group, key, self.cap)))
            if len(self._cache) < self._cache_limit:
                for member in orbit:
                    self._cache[member] = orbit
        return orbit[rng.randrange(len(orbit))]


def orbit_sample(
    group_or_sampler,
    state: State,
    mode: str = "exact",
    rng: random.Random | None = None,
    cap: int = 1 << 16,
) -> tuple[int, ...]:
    """One uniform draw from the orbit of a state. Accepts a SymmetryGroup
    (exact mode, or builds a throwaway pad for pra mode) or a prepared
    OrbitSampler."""
    rng = rng or random.Random()
    if isinstance(group_or_sampler, OrbitSampler):
        return group_or_sampler.sample(state, rng)
    group = group_or_sampler
    if group.is_trivial():
        return tuple(state)
    if mode == "exact":
        orbit = sorted(orbit_enumerate(group, state, cap))
        return orbit[rng.randrange(len(orbit))]
    sampler = OrbitSampler(group, "pra", pra_init(group, seed=rng.randrange(1 << 30)))
    return sampler.sample(state, rng)
