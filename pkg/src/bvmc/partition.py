"""Block partitions of the variable set, block-value pair indexing, the
transformed block-level model, and the heuristic that proposes candidate
partitions by bucketing block values on weight signatures.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass
from itertools import combinations, product
from typing import Iterable, Sequence

from .model import GraphicalModel, ModelError, State, is_clausal

DEFAULT_JOINT_CAP = 2 ** 20


class PartitionError(ValueError):
    """Invalid block structure."""


@dataclass(frozen=True)
class Block:
    vars: tuple[int, ...]

    def __post_init__(self):
        if not self.vars:
            raise PartitionError("empty block")
        if list(self.vars) != sorted(set(self.vars)):
            raise PartitionError(f"block variables must be strictly sorted: {self.vars}")

    def __len__(self) -> int:
        return len(self.vars)


@dataclass(frozen=True)
class BVPair:
    """A block together with one full assignment to it, aligned per variable."""

    block: Block
    values: tuple[int, ...]

    def __post_init__(self):
        if len(self.values) != len(self.block.vars):
            raise PartitionError("value tuple length does not match block")


def consistent(bv: BVPair, state: State) -> bool:
    """True iff the state agrees with the pair on every block variable."""
    return all(state[v] == x for v, x in zip(bv.block.vars, bv.values))


@dataclass(frozen=True)
class BlockPartition:
    blocks: tuple[Block, ...]

    def __len__(self) -> int:
        return len(self.blocks)

    def block_of(self, var: int) -> int:
        for i, b in enumerate(self.blocks):
            if var in b.vars:
                return i
        raise PartitionError(f"variable {var} not covered")


def validate_partition(model: GraphicalModel, partition: BlockPartition) -> None:
    """Raise unless the blocks are a disjoint exact cover of the variables."""
    seen: dict[int, int] = {}
    for i, block in enumerate(partition.blocks):
        for v in block.vars:
            if not 0 <= v < model.n_vars:
                raise PartitionError(f"block {i} references unknown variable {v}")
            if v in seen:
                raise PartitionError(
                    f"variable {model.variables[v].name!r} appears in blocks "
                    f"{seen[v]} and {i}"
                )
            seen[v] = i
    for v in model.variables:
        if v.id not in seen:
            raise PartitionError(f"variable {v.name!r} missing from partition")


def singleton_partition(model: GraphicalModel) -> BlockPartition:
    return BlockPartition(tuple(Block((v.id,)) for v in model.variables))


class BlockValueSet:
    """Dense indexing of every (block, assignment) pair of a partition.

    Index layout: blocks in partition order, assignments within a block in
    row-major order over the block's variables (last variable fastest).
    """

    def __init__(self, model: GraphicalModel, partition: BlockPartition):
        validate_partition(model, partition)
        self.model = model
        self.partition = partition
        sizes = model.domain_sizes()
        self.offsets: list[int] = []
        self.block_sizes: list[int] = []
        self.strides: list[tuple[int, ...]] = []
        self.value_tables: list[tuple[tuple[int, ...], ...]] = []
        total = 0
        for block in partition.blocks:
            dims = [sizes[v] for v in block.vars]
            stride = [0] * len(dims)
            acc = 1
            for i in range(len(dims) - 1, -1, -1):
                stride[i] = acc
                acc *= dims[i]
            self.offsets.append(total)
            self.block_sizes.append(acc)
            self.strides.append(tuple(stride))
            self.value_tables.append(tuple(product(*(range(d) for d in dims))))
            total += acc
        self.size = total
        self.block_of_index: list[int] = []
        for l, count in enumerate(self.block_sizes):
            self.block_of_index.extend([l] * count)

    def index(self, block_id: int, values: Sequence[int]) -> int:
        stride = self.strides[block_id]
        return self.offsets[block_id] + sum(v * s for v, s in zip(values, stride))

    def index_of_state(self, block_id: int, state: State) -> int:
        stride = self.strides[block_id]
        block = self.partition.blocks[block_id]
        return self.offsets[block_id] + sum(
            state[v] * s for v, s in zip(block.vars, stride)
        )

    def decode(self, index: int) -> tuple[int, tuple[int, ...]]:
        block_id = self.block_of_index[index]
        return block_id, self.value_tables[block_id][index - self.offsets[block_id]]

    def pair(self, index: int) -> BVPair:
        block_id, values = self.decode(index)
        return BVPair(self.partition.blocks[block_id], values)

    def pairs(self) -> Iterable[BVPair]:
        for i in range(self.size):
            yield self.pair(i)


# ---------------------------------------------------------------------------
# Transformed block-level model


@dataclass(frozen=True)
class BlockFeature:
    """A feature rewritten over whole blocks: the blocks it touches and the
    set of joint local-value indices that satisfy it."""

    block_ids: tuple[int, ...]
    satisfying: frozenset[tuple[int, ...]]
    weight: float


@dataclass(frozen=True)
class BlockModel:
    """Model over one multi-valued variable per block, equivalent state by
    state to the base model."""

    base: GraphicalModel
    bvs: BlockValueSet
    features: tuple[BlockFeature, ...]
    log_offset: float

    def map_state(self, state: State) -> tuple[int, ...]:
        """Base assignment -> per-block local value indices."""
        bvs = self.bvs
        return tuple(
            bvs.index_of_state(l, state) - bvs.offsets[l]
            for l in range(len(bvs.partition))
        )

    def inverse_map(self, block_state: Sequence[int]) -> tuple[int, ...]:
        out = [0] * self.base.n_vars
        for l, local in enumerate(block_state):
            block = self.bvs.partition.blocks[l]
            for v, x in zip(block.vars, self.bvs.value_tables[l][local]):
                out[v] = x
        return tuple(out)

    def log_weight(self, block_state: Sequence[int]) -> float:
        total = self.log_offset
        for feat in self.features:
            key = tuple(block_state[l] for l in feat.block_ids)
            if key in feat.satisfying:
                total += feat.weight
        return total


def build_block_model(
    model: GraphicalModel,
    partition: BlockPartition,
    joint_cap: int = DEFAULT_JOINT_CAP,
) -> BlockModel:
    """Rewrite each clause over the blocks that intersect it.

    Every touched block enters the rewritten feature wholesale; the feature
    is stored as the set of satisfying joint block assignments, which keeps
    it logically identical to the original clause.
    """
    if not is_clausal(model):
        raise ModelError("block model requires a clause-normalized model")
    bvs = BlockValueSet(model, partition)
    var_block = {}
    for l, block in enumerate(partition.blocks):
        for v in block.vars:
            var_block[v] = l

    feats = []
    for feat in model.features:
        block_ids = tuple(sorted({var_block[lit.var] for lit in feat.literals}))
        space = math.prod(bvs.block_sizes[l] for l in block_ids)
        if space > joint_cap:
            raise PartitionError(
                f"transformed feature spans {space} joint assignments, cap {joint_cap}"
            )
        satisfying = set()
        for combo in product(*(range(bvs.block_sizes[l]) for l in block_ids)):
            assign: dict[int, int] = {}
            for l, local in zip(block_ids, combo):
                block = partition.blocks[l]
                for v, x in zip(block.vars, bvs.value_tables[l][local]):
                    assign[v] = x
            if any(lit.holds(assign[lit.var]) for lit in feat.literals):
                satisfying.add(combo)
        feats.append(BlockFeature(block_ids, frozenset(satisfying), feat.weight))
    return BlockModel(model, bvs, tuple(feats), model.log_offset)


# ---------------------------------------------------------------------------
# Candidate partition heuristic


def get_useful_blocks(model: GraphicalModel, r: int) -> set[Block]:
    """All non-empty variable subsets of size <= r drawn from within a single
    feature's variable set; variables never co-occurring yield no joint block."""
    if r < 1:
        raise PartitionError("max block size must be >= 1")
    blocks: set[Block] = set()
    for feat in model.features:
        fvars = sorted(set(feat.variables()))
        for k in range(1, min(r, len(fvars)) + 1):
            for combo in combinations(fvars, k):
                blocks.add(Block(combo))
    return blocks


WeightSignature = tuple[float, ...]


def get_weight_sign(model: GraphicalModel, bv: BVPair) -> WeightSignature:
    """Multiset (as a sorted tuple) of weights of blanket clauses that the
    partial assignment satisfies."""
    if not is_clausal(model):
        raise ModelError("weight signatures require a clause-normalized model")
    assign = dict(zip(bv.block.vars, bv.values))
    sig = []
    for feat in model.features:
        touches = False
        sat = False
        for lit in feat.literals:
            if lit.var in assign:
                touches = True
                if lit.holds(assign[lit.var]):
                    sat = True
                    break
        if touches and sat:
            sig.append(feat.weight)
    return tuple(sorted(sig))


def generate_block_partitions(
    model: GraphicalModel,
    r: int,
    k_partitions: int,
    seed: int,
    max_rejections: int | None = None,
) -> list[BlockPartition]:
    """Sample candidate partitions by bucketed block-value signatures.

    Block values of useful blocks are bucketed by (block size, weight
    signature); each draw picks a bucket with probability proportional to its
    entry count, then one entry uniformly, accepting the block when it is
    variable-disjoint from the partition built so far. A block contributes
    one bucket entry per value assignment, so value-rich blocks are drawn
    more often. After max_rejections consecutive conflicts the remaining
    variables are covered by singleton blocks.
    """
    if k_partitions < 1:
        raise PartitionError("k_partitions must be >= 1")
    clausal = normalize_if_needed(model)
    rng = random.Random(seed)
    if max_rejections is None:
        max_rejections = 50 * max(1, model.n_vars)

    buckets: dict[tuple[int, WeightSignature], list[Block]] = {}
    for block in sorted(get_useful_blocks(clausal, r), key=lambda b: b.vars):
        sizes = [model.variables[v].domain_size for v in block.vars]
        for values in product(*(range(d) for d in sizes)):
            sig = get_weight_sign(clausal, BVPair(block, values))
            buckets.setdefault((len(block), sig), []).append(block)
    keys = sorted(buckets, key=lambda k: (k[0], k[1]))
    weights = [len(buckets[k]) for k in keys]

    partitions = []
    for _ in range(k_partitions):
        chosen: list[Block] = []
        covered: set[int] = set()
        rejections = 0
        while len(covered) < model.n_vars and keys:
            if rejections >= max_rejections:
                break
            key = rng.choices(keys, weights=weights)[0]
            block = rng.choice(buckets[key])
            if covered.isdisjoint(block.vars):
                chosen.append(block)
                covered.update(block.vars)
                rejections = 0
            else:
                rejections += 1
        for v in model.variables:
            if v.id not in covered:
                chosen.append(Block((v.id,)))
        chosen.sort(key=lambda b: b.vars)
        partitions.append(BlockPartition(tuple(chosen)))
    return partitions


def normalize_if_needed(model: GraphicalModel) -> GraphicalModel:
    from .model import normalize_to_clauses

    return model if is_clausal(model) else normalize_to_clauses(model)


# ---------------------------------------------------------------------------
# Text format


def serialize_partition(model: GraphicalModel, partition: BlockPartition) -> str:
    lines = []
    for block in partition.blocks:
        lines.append("block " + " ".join(model.variables[v].name for v in block.vars))
    return "\n".join(lines) + "\n"


def parse_partition(text: str, model: GraphicalModel) -> BlockPartition:
    blocks = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] != "block":
            raise PartitionError(f"line {lineno}: expected 'block', got {parts[0]!r}")
        ids = tuple(sorted(model.var_id(name) for name in parts[1:]))
        blocks.append(Block(ids))
    partition = BlockPartition(tuple(blocks))
    validate_partition(model, partition)
    return partition


def serialize_partition_set(
    model: GraphicalModel, partitions: Sequence[BlockPartition]
) -> str:
    return "---\n".join(serialize_partition(model, p) for p in partitions)


def parse_partition_set(text: str, model: GraphicalModel) -> list[BlockPartition]:
    return [
        parse_partition(chunk, model)
        for chunk in text.split("---")
        if chunk.strip()
    ]


def partition_hash(model: GraphicalModel, partition: BlockPartition) -> str:
    """Stable 12-hex digest over the canonical block listing."""
    canonical = "\n".join(
        " ".join(model.variables[v].name for v in block.vars)
        for block in sorted(partition.blocks, key=lambda b: b.vars)
    )
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]
