"""Colored symmetry graph for a model plus block partition, an exact
automorphism-group search by individualization and refinement, and the
extraction of block-value symmetries from graph generators.

Graph layout for a partition with L blocks and a model with m clauses:
node ids [0, L) are block hubs, [L, L + |block value set|) are block-value
nodes in dense block-value order, and the last m ids are feature nodes.
All hubs share one color, all block-value nodes share a second color, and
feature nodes are colored by exact weight equality. A block-value node is
adjacent to its hub and to every clause it satisfies through at least one
literal.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .model import GraphicalModel, ModelError, is_clausal
from .partition import BlockPartition, BlockValueSet

HUB = "hub"
BV = "bv"
FEATURE = "feature"
NODE = "node"


class SymmetryError(RuntimeError):
    """Extraction produced a structurally invalid permutation."""


class SearchBudgetExceeded(RuntimeError):
    """The automorphism search hit its node-expansion budget."""


@dataclass(frozen=True)
class ColoredGraph:
    """Undirected vertex-colored graph. Equality and hashing are structural
    (colors and edges); node kinds are bookkeeping for graph construction and
    are not serialized."""

    colors: tuple[int, ...]
    edges: frozenset[frozenset[int]]
    kinds: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        n = len(self.colors)
        for e in self.edges:
            if len(e) != 2:
                raise ValueError(f"self-loop or malformed edge {set(e)}")
            if any(not 0 <= v < n for v in e):
                raise ValueError(f"edge {set(e)} out of range")
        if not self.kinds:
            object.__setattr__(self, "kinds", (NODE,) * n)

    @property
    def num_nodes(self) -> int:
        return len(self.colors)

    def adjacency(self) -> list[list[int]]:
        adj = self.__dict__.get("_adj")
        if adj is None:
            adj = [[] for _ in range(self.num_nodes)]
            for e in self.edges:
                u, v = tuple(e)
                adj[u].append(v)
                adj[v].append(u)
            for row in adj:
                row.sort()
            object.__setattr__(self, "_adj", adj)
        return adj


def graph(colors: Sequence[int], edges: Iterable[tuple[int, int]], kinds=()) -> ColoredGraph:
    return ColoredGraph(
        tuple(colors), frozenset(frozenset(e) for e in edges), tuple(kinds)
    )


@dataclass(frozen=True)
class GraphAutomorphism:
    """Color- and edge-preserving node permutation, one-line notation."""

    mapping: tuple[int, ...]

    def __getitem__(self, v: int) -> int:
        return self.mapping[v]


def is_automorphism(g: ColoredGraph, mapping: Sequence[int]) -> bool:
    n = g.num_nodes
    if sorted(mapping) != list(range(n)):
        return False
    if any(g.colors[mapping[v]] != g.colors[v] for v in range(n)):
        return False
    for e in g.edges:
        u, v = tuple(e)
        if frozenset((mapping[u], mapping[v])) not in g.edges:
            return False
    return True


@dataclass(frozen=True)
class BVSymmetry:
    """Bijection over the dense block-value indices of one partition, in
    one-line notation. Valid by construction: every block's assignments map
    onto the assignments of one fixed target block."""

    mapping: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.mapping)

    def is_identity(self) -> bool:
        return all(i == j for i, j in enumerate(self.mapping))


def identity_symmetry(size: int) -> BVSymmetry:
    return BVSymmetry(tuple(range(size)))


def check_bv_validity(bvs: BlockValueSet, mapping: Sequence[int]) -> None:
    """Reject mappings that split a block's assignments across targets or
    fail to be bijective on them."""
    if sorted(mapping) != list(range(bvs.size)):
        raise SymmetryError("block-value mapping is not a bijection")
    for l in range(len(bvs.partition)):
        lo = bvs.offsets[l]
        images = {bvs.block_of_index[mapping[lo + j]] for j in range(bvs.block_sizes[l])}
        if len(images) != 1:
            raise SymmetryError(f"block {l} maps to multiple blocks {sorted(images)}")
        target = images.pop()
        if bvs.block_sizes[target] != bvs.block_sizes[l]:
            raise SymmetryError(f"block {l} maps onto block {target} of different size")


# ---------------------------------------------------------------------------
# Graph construction


def build_bv_graph(model: GraphicalModel, partition: BlockPartition) -> ColoredGraph:
    """Colored graph whose automorphisms are exactly the block-value
    symmetries of the model under the given partition."""
    if not is_clausal(model):
        raise ModelError("symmetry graph requires a clause-normalized model")
    bvs = BlockValueSet(model, partition)
    n_blocks = len(partition)
    bv_base = n_blocks
    feat_base = bv_base + bvs.size

    colors = [0] * n_blocks + [1] * bvs.size
    weight_color: dict[float, int] = {}
    for feat in model.features:
        if feat.weight not in weight_color:
            weight_color[feat.weight] = 2 + len(weight_color)
        colors.append(weight_color[feat.weight])

    kinds = (HUB,) * n_blocks + (BV,) * bvs.size + (FEATURE,) * len(model.features)

    edges = set()
    for idx in range(bvs.size):
        edges.add((bvs.block_of_index[idx], bv_base + idx))

    lits_by_var: dict[int, list[tuple[int, int, bool]]] = {}
    for j, feat in enumerate(model.features):
        for lit in feat.literals:
            lits_by_var.setdefault(lit.var, []).append((j, lit.value, lit.negated))
    for idx in range(bvs.size):
        block_id, values = bvs.decode(idx)
        block = partition.blocks[block_id]
        hit = set()
        for v, x in zip(block.vars, values):
            for j, value, negated in lits_by_var.get(v, ()):
                if (x != value) if negated else (x == value):
                    hit.add(j)
        for j in hit:
            edges.add((bv_base + idx, feat_base + j))
    return graph(colors, edges, kinds)


# ---------------------------------------------------------------------------
# Equitable refinement and automorphism search


def _refine(colors: list[int], adj: list[list[int]]) -> list[int]:
    """Iterate color splitting until equitable: two nodes share a color only
    if they had equal colors and equal multisets of neighbor colors. New
    color ids are assigned by sorted signature, so the procedure commutes
    with any color- and edge-preserving permutation."""
    n = len(colors)
    while True:
        sigs = []
        for v in range(n):
            counts = Counter(colors[u] for u in adj[v])
            sigs.append((colors[v], tuple(sorted(counts.items()))))
        order = {sig: i for i, sig in enumerate(sorted(set(sigs)))}
        new_colors = [order[sig] for sig in sigs]
        if len(order) == len(set(colors)):
            return new_colors
        colors = new_colors


def _classes(colors: Sequence[int]) -> dict[int, list[int]]:
    out: dict[int, list[int]] = {}
    for v, c in enumerate(colors):
        out.setdefault(c, []).append(v)
    return out


def _profile(colors: Sequence[int]) -> tuple[tuple[int, int], ...]:
    return tuple(sorted(Counter(colors).items()))


def _individualize(colors: Sequence[int], v: int) -> list[int]:
    out = list(colors)
    out[v] = max(colors) + 1
    return out


def _first_split_color(colors: Sequence[int]) -> int | None:
    counts = Counter(colors)
    for c in sorted(counts):
        if counts[c] > 1:
            return c
    return None


def find_automorphism_generators(
    g: ColoredGraph, max_expansions: int | None = None
) -> list[GraphAutomorphism]:
    """Generators of the full automorphism group of a colored graph.

    Classic individualization-refinement search: walk a leftmost path of
    individualizations to a discrete coloring, then, deepest level first,
    look for an automorphism sending the path vertex to each other member of
    its color class. Siblings already reachable from the path vertex under
    generators fixing the shallower path vertices are pruned, which keeps
    the output a generating set rather than the whole group. Every candidate
    is verified color- and edge-preserving before it is returned.

    max_expansions bounds the number of refine calls (the search is
    exponential in the worst case); exceeding it raises SearchBudgetExceeded.
    """
    n = g.num_nodes
    if n == 0:
        return []
    adj = g.adjacency()
    base_colors = g.colors
    spent = [0]

    def refine(colors: list[int]) -> list[int]:
        spent[0] += 1
        if max_expansions is not None and spent[0] > max_expansions:
            raise SearchBudgetExceeded(
                f"automorphism search exceeded {max_expansions} refinement steps"
            )
        return _refine(colors, adj)

    # Leftmost path: (coloring, class members, chosen vertex) per level, plus
    # the refined coloring after each individualization.
    path: list[tuple[list[int], list[int], int]] = []
    sigma_seq: list[list[int]] = [refine(list(base_colors))]
    while True:
        col = sigma_seq[-1]
        split = _first_split_color(col)
        if split is None:
            break
        members = sorted(_classes(col)[split])
        v = members[0]
        path.append((col, members, v))
        sigma_seq.append(refine(_individualize(col, v)))

    leaf_order = _discrete_order(sigma_seq[-1])
    position = {v: k for k, v in enumerate(leaf_order)}

    def perm_from_leaf(tau_col: Sequence[int]) -> list[int]:
        tau_order = _discrete_order(tau_col)
        mapping = [0] * n
        for v in range(n):
            mapping[v] = tau_order[position[v]]
        return mapping

    def search_branch(tau_col: list[int], depth: int) -> list[int] | None:
        """Explore the subtree of tau against the fixed leftmost sigma path,
        returning the first verified automorphism found."""
        if _profile(tau_col) != _profile(sigma_seq[depth]):
            return None
        if depth == len(sigma_seq) - 1:
            mapping = perm_from_leaf(tau_col)
            return mapping if is_automorphism(g, mapping) else None
        split = _first_split_color(sigma_seq[depth])
        for u in sorted(_classes(tau_col)[split]):
            res = search_branch(refine(_individualize(tau_col, u)), depth + 1)
            if res is not None:
                return res
        return None

    gens: list[list[int]] = []

    def orbit_of(v: int, fixed: Sequence[int]) -> set[int]:
        usable = [p for p in gens if all(p[w] == w for w in fixed)]
        orbit = {v}
        frontier = [v]
        while frontier:
            x = frontier.pop()
            for p in usable:
                y = p[x]
                if y not in orbit:
                    orbit.add(y)
                    frontier.append(y)
        return orbit

    for k in range(len(path) - 1, -1, -1):
        col_k, members, v_k = path[k]
        fixed = [path[i][2] for i in range(k)]
        for u in members:
            if u == v_k or u in orbit_of(v_k, fixed):
                continue
            found = search_branch(refine(_individualize(col_k, u)), k + 1)
            if found is not None:
                gens.append(found)
    return [GraphAutomorphism(tuple(p)) for p in gens]


def _discrete_order(colors: Sequence[int]) -> list[int]:
    order = [0] * len(colors)
    for v, c in enumerate(colors):
        order[c] = v
    return order


# ---------------------------------------------------------------------------
# Extraction


def extract_bv_symmetries(
    g: ColoredGraph,
    generators: Sequence[GraphAutomorphism],
    bvs: BlockValueSet,
) -> list[BVSymmetry]:
    """Restrict graph generators to the block-value nodes and re-index over
    the dense block-value set. Hub structure forces validity; it is checked
    anyway and a violation is a construction bug, not a recoverable state.
    Identity restrictions are dropped."""
    n_blocks = len(bvs.partition)
    bv_base = n_blocks
    out = []
    for gen in generators:
        mapping = []
        for i in range(bvs.size):
            img = gen[bv_base + i]
            if not bv_base <= img < bv_base + bvs.size:
                raise SymmetryError("generator moves a block-value node off its kind")
            mapping.append(img - bv_base)
        for l in range(n_blocks):
            hub_img = gen[l]
            if not 0 <= hub_img < n_blocks:
                raise SymmetryError("generator moves a hub off the hub set")
            sample = mapping[bvs.offsets[l]]
            if bvs.block_of_index[sample] != hub_img:
                raise SymmetryError("hub image disagrees with its value nodes")
        check_bv_validity(bvs, mapping)
        sym = BVSymmetry(tuple(mapping))
        if not sym.is_identity():
            out.append(sym)
    return out


# ---------------------------------------------------------------------------
# Text formats


def export_colored_graph(g: ColoredGraph) -> str:
    """Deterministic line format: `p <n> <m>`, one `c <node> <color>` per
    node, and `e <u> <v>` with u < v sorted. Node kinds are not serialized."""
    lines = [f"p {g.num_nodes} {len(g.edges)}"]
    for v in range(g.num_nodes):
        lines.append(f"c {v} {g.colors[v]}")
    for u, v in sorted(tuple(sorted(e)) for e in g.edges):
        lines.append(f"e {u} {v}")
    return "\n".join(lines) + "\n"


def parse_colored_graph(text: str) -> ColoredGraph:
    n = m = None
    colors: dict[int, int] = {}
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "p":
            n, m = int(parts[1]), int(parts[2])
        elif parts[0] == "c":
            colors[int(parts[1])] = int(parts[2])
        elif parts[0] == "e":
            edges.append((int(parts[1]), int(parts[2])))
        else:
            raise ValueError(f"line {lineno}: unknown record {parts[0]!r}")
    if n is None:
        raise ValueError("missing 'p' header")
    if len(colors) != n or len(edges) != m:
        raise ValueError("node or edge count disagrees with header")
    return graph([colors[v] for v in range(n)], edges)


def serialize_symmetries(
    partition_digest: str, generators: Sequence[BVSymmetry]
) -> str:
    """One section: `bvsym <hash>` then one generator per line in cycle
    notation over block-value indices."""
    lines = [f"bvsym {partition_digest}"]
    for gen in generators:
        lines.append(cycle_notation(gen.mapping))
    return "\n".join(lines) + "\n"


def cycle_notation(mapping: Sequence[int]) -> str:
    seen = [False] * len(mapping)
    parts = []
    for start in range(len(mapping)):
        if seen[start] or mapping[start] == start:
            seen[start] = True
            continue
        cyc = [start]
        seen[start] = True
        nxt = mapping[start]
        while nxt != start:
            cyc.append(nxt)
            seen[nxt] = True
            nxt = mapping[nxt]
        parts.append("(" + " ".join(map(str, cyc)) + ")")
    return "".join(parts) if parts else "()"


def parse_cycles(text: str, size: int) -> BVSymmetry:
    mapping = list(range(size))
    body = text.strip()
    if body in ("", "()"):
        return BVSymmetry(tuple(mapping))
    if not body.startswith("(") or not body.endswith(")"):
        raise ValueError(f"malformed cycle string {text!r}")
    for chunk in body[1:-1].split(")("):
        cyc = [int(tok) for tok in chunk.replace(",", " ").split()]
        if len(cyc) != len(set(cyc)):
            raise ValueError(f"repeated element in cycle {chunk!r}")
        for a, b in zip(cyc, cyc[1:] + cyc[:1]):
            if not 0 <= a < size:
                raise ValueError(f"cycle element {a} out of range")
            mapping[a] = b
    return BVSymmetry(tuple(mapping))


def parse_symmetry_sections(text: str, sizes: Sequence[int]) -> list[tuple[str, list[BVSymmetry]]]:
    """Parse one or more `bvsym` sections; sizes gives the block-value set
    size for each section in order."""
    sections: list[tuple[str, list[str]]] = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("bvsym"):
            parts = line.split()
            if len(parts) != 2:
                raise ValueError("malformed bvsym header")
            sections.append((parts[1], []))
        else:
            if not sections:
                raise ValueError("generator line before bvsym header")
            sections[-1][1].append(line)
    if len(sections) != len(sizes):
        raise ValueError(
            f"expected {len(sizes)} symmetry sections, found {len(sections)}"
        )
    out = []
    for (digest, lines), size in zip(sections, sizes):
        out.append((digest, [parse_cycles(line, size) for line in lines]))
    return out
