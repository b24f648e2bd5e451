"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines as they complete.
"""

import math
import random
import time
from collections import Counter

import pytest
from scipy import stats

from bvmc.group import (
    OrbitSampler,
    SymmetryGroup,
    apply,
    compose,
    inverse,
    orbit_enumerate,
    pra_init,
)
from bvmc.harness import ChainSpec, ExperimentSpec, run_experiment
from bvmc.mcmc import Chain, ChainConfig, build_groups
from bvmc.model import (
    all_states,
    exact_marginals,
    gen_job_search,
    log_weight,
    normalize_to_clauses,
    parse_model,
    random_model,
)
from bvmc.partition import (
    Block,
    BlockPartition,
    BlockValueSet,
    build_block_model,
    generate_block_partitions,
    serialize_partition_set,
    singleton_partition,
    validate_partition,
)
from bvmc.symmetry import (
    build_bv_graph,
    extract_bv_symmetries,
    find_automorphism_generators,
    graph,
)
from oracles import (
    brute_force_automorphisms,
    brute_force_log_partition,
    build_vv_graph,
    bv_state_orbits,
    permutation_closure,
    vv_state_orbits,
)

SYMMETRY_POOL = (0.5, 1.0, -0.7)


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {criterion}: {detail}"


def random_pairing(model, seed):
    rng = random.Random(seed)
    ids = list(range(model.n_vars))
    rng.shuffle(ids)
    blocks = []
    while ids:
        if len(ids) >= 2 and rng.random() < 0.7:
            blocks.append(Block(tuple(sorted((ids.pop(), ids.pop())))))
        else:
            blocks.append(Block((ids.pop(),)))
    return BlockPartition(tuple(sorted(blocks, key=lambda b: b.vars)))


def model_suite():
    """20 random binary models (4 to 10 variables) with pooled weights and a
    random partition of blocks of size at most 2 each."""
    suite = []
    for i in range(20):
        n = 4 + i % 7
        m = random_model(n, n + 2, seed=100 + i, weight_pool=SYMMETRY_POOL)
        suite.append((m, random_pairing(m, seed=i)))
    return suite


def extract_group(model, partition):
    clausal = normalize_to_clauses(model)
    bvs = BlockValueSet(model, partition)
    g = build_bv_graph(clausal, partition)
    gens = find_automorphism_generators(g, max_expansions=500_000)
    return SymmetryGroup(bvs, extract_bv_symmetries(g, gens, bvs))


def person_partition(n):
    return BlockPartition(tuple(Block((2 * i, 2 * i + 1)) for i in range(n)))


def test_criterion_1_probability_preservation():
    started = time.perf_counter()
    rng = random.Random(1)
    worst = 0.0
    for m, partition in model_suite():
        group = extract_group(m, partition)
        elements = list(group.generators)
        if group.generators:
            for _ in range(100):
                elem = rng.choice(group.generators)
                for _ in range(rng.randint(1, 3)):
                    factor = rng.choice(group.generators)
                    if rng.random() < 0.5:
                        factor = inverse(factor)
                    elem = compose(elem, factor)
                elements.append(elem)
        sizes = m.domain_sizes()
        for elem in elements:
            for _ in range(100):
                s = tuple(rng.randrange(d) for d in sizes)
                delta = abs(log_weight(m, apply(elem, group.bvs, s)) - log_weight(m, s))
                worst = max(worst, delta)
    elapsed = time.perf_counter() - started
    ok = worst <= 1e-9 and elapsed < 30
    report(1, ok, f"max |dlogw| {worst:.2e}, {elapsed:.1f}s")


def test_criterion_2_transformed_model_equivalence():
    started = time.perf_counter()
    worst = 0.0
    for m, partition in model_suite():
        clausal = normalize_to_clauses(m)
        bm = build_block_model(clausal, partition)
        log_z = brute_force_log_partition(m)
        block_weights = []
        for s in all_states(m):
            block_weights.append(bm.log_weight(bm.map_state(s)))
        top = max(block_weights)
        log_z_hat = top + math.log(sum(math.exp(w - top) for w in block_weights))
        for s, lw_hat in zip(all_states(m), block_weights):
            p = math.exp(log_weight(m, s) - log_z)
            p_hat = math.exp(lw_hat - log_z_hat)
            worst = max(worst, abs(p - p_hat) / p)
    elapsed = time.perf_counter() - started
    ok = worst <= 1e-10 and elapsed < 30
    report(2, ok, f"max relative prob error {worst:.2e}, {elapsed:.1f}s")


def test_criterion_3_vv_subsumption():
    checked = 0
    for seed in range(10):
        n = 5 + seed % 3
        m = random_model(n, n + 2, seed=200 + seed, weight_pool=SYMMETRY_POOL)
        clausal = normalize_to_clauses(m)
        group = extract_group(m, singleton_partition(m))

        vv_graph, pair_index = build_vv_graph(clausal)
        vv_gens = find_automorphism_generators(vv_graph)
        n_vars = m.n_vars
        restrictions = [
            tuple(gen[n_vars + k] - n_vars for k in range(len(pair_index)))
            for gen in vv_gens
        ]
        restrictions = [r for r in restrictions if r != tuple(range(len(pair_index)))]

        bv_orbits = bv_state_orbits(m, group)
        vv_orbits = vv_state_orbits(m, restrictions, pair_index)
        assert bv_orbits == vv_orbits, f"orbit partitions differ on model {seed}"
        checked += 1
    report(3, checked >= 10, f"{checked} models, orbit partitions identical")


def test_criterion_4_paper_micro_examples():
    # (a) every person block of a generated 5-person instance admits the
    # within-block swap of values (0,0) and (1,0)
    m = gen_job_search(5, 0.0, 0.5, 2.5, 0.8, seed=2)
    group = extract_group(m, person_partition(5))
    bvs = group.bvs
    recovered = 0
    for person in range(5):
        src = bvs.index(person, (0, 0))
        dst = bvs.index(person, (1, 0))
        reach = {src}
        frontier = [src]
        while frontier:
            i = frontier.pop()
            for gen in group.generators:
                j = gen.mapping[i]
                if j not in reach:
                    reach.add(j)
                    frontier.append(j)
        if dst in reach:
            recovered += 1
    ok_a = recovered == 5

    # (b) a 4-variable model whose enumeration merges (0,0,0,0) and
    # (0,1,1,1): the extracted symmetry's orbit joins them
    m4 = parse_model(
        "var X1 2\nvar X2 2\nvar X3 2\nvar X4 2\n"
        "feature AND 0.5 X1=0 X2=0\n"
        "feature AND 1.1 X1=0 X2=1\n"
        "feature AND -0.4 X1=1 X2=0\n"
        "feature AND 0.9 X1=1 X2=1\n"
        "feature AND 1.1 X3=0 X4=0\n"
        "feature AND -0.4 X3=0 X4=1\n"
        "feature AND 0.9 X3=1 X4=0\n"
        "feature AND 0.5 X3=1 X4=1\n"
    )
    log_z = brute_force_log_partition(m4)
    p_a = math.exp(log_weight(m4, (0, 0, 0, 0)) - log_z)
    p_b = math.exp(log_weight(m4, (0, 1, 1, 1)) - log_z)
    assert p_a == pytest.approx(p_b, rel=1e-12), "states not equiprobable"
    group4 = extract_group(m4, BlockPartition((Block((0, 1)), Block((2, 3)))))
    orbit = orbit_enumerate(group4, (0, 0, 0, 0))
    ok_b = (0, 1, 1, 1) in orbit
    report(4, ok_a and ok_b, f"swap recovered for {recovered}/5 blocks; orbit merge {ok_b}")


def test_criterion_5_chain_exactness():
    started = time.perf_counter()
    m = gen_job_search(4, 0.0, 0.5, 2.5, 0.8, seed=11)  # 256 states
    ref = exact_marginals(m)
    part = person_partition(4)
    groups = build_groups(m, [part])
    setups = (
        ("vanilla", 0.0, None, None),
        ("bv", 0.0, [part], groups),
        ("bv", 0.5, [part], groups),
        ("bv", 1.0, [part], groups),
        ("aggregate", 0.5, None, None),  # three heuristic partitions
    )
    results = []
    for kind, alpha, partitions, grp in setups:
        errs = []
        for seed in range(5):
            config = ChainConfig(
                kind=kind,
                alpha=alpha,
                steps=200_000,
                burn_in=2_000,
                seed=f"c5:{seed}",
                orbit_mode="exact",
                n_chains=3,
            )
            chain = Chain(m, config, partitions, grp)
            for snap in chain.run():
                pass
            errs.append(snap.estimate.max_abs_error(ref))
        results.append((kind, alpha, sum(errs) / len(errs)))
    elapsed = time.perf_counter() - started
    worst = max(err for _, _, err in results)
    ok = worst <= 0.01 and elapsed < 300
    detail = ", ".join(f"{k}({a})={e:.4f}" for k, a, e in results)
    report(5, ok, f"{detail}; {elapsed:.0f}s")


def test_criterion_6_orbit_sampling_uniformity():
    m = gen_job_search(5, 0.0, 0.5, 2.5, 0.8, seed=3)
    group = extract_group(m, person_partition(5))
    m3 = parse_model("var A 3\n")
    group3 = extract_group(m3, singleton_partition(m3))
    cases = [
        (group3, (0,), 3),
        (group, (0, 0, 1, 0, 0, 1, 1, 1, 0, 1), 4),  # persons 0,1 free
        (group, (0, 0, 1, 0, 0, 0, 1, 1, 0, 1), 8),
        (group, (0, 0, 1, 0, 0, 0, 1, 0, 0, 1), 16),
    ]
    n_draws = 10_000
    worst_p, worst_tv = 1.0, 0.0
    for grp, state, expect_size in cases:
        orbit = sorted(orbit_enumerate(grp, state))
        assert len(orbit) == expect_size <= 24
        rng = random.Random(f"c6:{expect_size}")
        exact = OrbitSampler(grp, "exact")
        counts = Counter(exact.sample(state, rng) for _ in range(n_draws))
        _, p_value = stats.chisquare([counts.get(s, 0) for s in orbit])
        worst_p = min(worst_p, p_value)

        pra = OrbitSampler(grp, "pra", pra_init(grp, seed=f"c6p:{expect_size}"))
        counts_pra = Counter(pra.sample(state, rng) for _ in range(n_draws))
        tv = 0.5 * sum(
            abs(counts.get(s, 0) / n_draws - counts_pra.get(s, 0) / n_draws)
            for s in set(counts) | set(counts_pra)
        )
        worst_tv = max(worst_tv, tv)
    ok = worst_p >= 0.01 and worst_tv <= 0.05
    report(6, ok, f"min chi2 p {worst_p:.3f}, max TV {worst_tv:.3f}")


def test_criterion_7_mixing_improvement(tmp_path):
    started = time.perf_counter()
    m = gen_job_search(10, 0.0, -4.0, -2.0, 0.8, seed=7)
    part_file = tmp_path / "parts.txt"
    part_file.write_text(serialize_partition_set(m, [person_partition(10)]))
    spec = ExperimentSpec(
        model="job-search",
        n=10,
        edge_prob=0.0,
        weight_low=-4.0,
        weight_high=-2.0,
        w3=0.8,
        partitions=str(part_file),
        configs=(
            ChainSpec("vanilla", "vanilla"),
            ChainSpec("bv-1.0", "bv", alpha=1.0, orbit_mode="pra"),
        ),
        n_repeats=20,
        seed=7,
        steps=20_000,
        burn_in=1_000,
        checkpoints=(1_000, 2_000, 5_000, 10_000, 20_000),
    )
    result = run_experiment(spec)
    vanilla = result.curves["vanilla"].points
    bv = result.curves["bv-1.0"].points
    strictly_below = all(b.mean_kl < v.mean_kl for b, v in zip(bv[-2:], vanilla[-2:]))
    separated = bv[-1].ci_hi < vanilla[-1].ci_lo
    elapsed = time.perf_counter() - started
    ok = strictly_below and separated and elapsed < 600
    report(
        7,
        ok,
        f"final KL bv {bv[-1].mean_kl:.5f} [{bv[-1].ci_lo:.5f},{bv[-1].ci_hi:.5f}] "
        f"vs vanilla {vanilla[-1].mean_kl:.5f} "
        f"[{vanilla[-1].ci_lo:.5f},{vanilla[-1].ci_hi:.5f}]; {elapsed:.0f}s",
    )


def test_criterion_8_heuristic_sanity():
    m = gen_job_search(5, 0.0, 0.5, 2.5, 0.8, seed=1)
    parts_a = generate_block_partitions(m, 2, 5, seed=42)
    parts_b = generate_block_partitions(m, 2, 5, seed=42)
    deterministic = parts_a == parts_b
    for p in parts_a:
        validate_partition(m, p)
    nontrivial = 0
    for p in parts_a:
        group = extract_group(m, p)
        if group.generators:
            nontrivial += 1
    ok = deterministic and nontrivial >= 1
    report(8, ok, f"5 valid partitions, {nontrivial} with nontrivial groups")


GRAPH_LIBRARY = [
    # (colors, edges) with automorphism group order at most 48 on <= 8 nodes
    ([0, 0, 0], [(0, 1), (1, 2), (0, 2)]),          # K3: 6
    ([0, 0, 0], [(0, 1), (1, 2)]),                  # P3: 2
    ([0, 0, 0, 0], [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]),  # K4: 24
    ([0, 0, 0, 0], [(0, 1), (1, 2), (2, 3), (0, 3)]),                  # C4: 8
    ([0] * 5, [(i, (i + 1) % 5) for i in range(5)]),                   # C5: 10
    ([0] * 6, [(i, (i + 1) % 6) for i in range(6)]),                   # C6: 12
    ([0] * 7, [(i, (i + 1) % 7) for i in range(7)]),                   # C7: 14
    ([0] * 8, [(i, (i + 1) % 8) for i in range(8)]),                   # C8: 16
    ([0] * 8, [(0, 1), (1, 2), (2, 3), (0, 3), (4, 5), (5, 6), (6, 7), (4, 7),
               (0, 4), (1, 5), (2, 6), (3, 7)]),                       # cube: 48
    ([0, 0, 0, 0], [(0, 1), (0, 2), (0, 3), (1, 2)]),                  # K4 - edge: 4
    ([0, 0, 0, 0], [(0, 1), (0, 2), (0, 3)]),                          # star: 6
    ([0, 0, 0, 0, 0], [(0, 1), (0, 2), (0, 3), (0, 4)]),               # star: 24
    ([0, 0, 0, 0], [(0, 1), (2, 3)]),                                  # 2K2: 8
    ([0, 0, 0], [(0, 1)]),                                             # K2+K1: 2
    ([0, 0, 0, 0], []),                                                # 4K1: 24
    ([0, 0, 0], []),                                                   # 3K1: 6
    ([0, 0, 1], [(0, 1), (1, 2), (0, 2)]),          # K3, one odd vertex: 2
    ([0, 0, 0, 0], [(0, 1), (1, 2), (2, 3)]),       # P4: 2
    ([0] * 5, [(0, 2), (0, 3), (0, 4), (1, 2), (1, 3), (1, 4)]),       # K2,3: 12
    ([0, 0, 0, 0], [(0, 1), (1, 2), (0, 2), (2, 3)]),                  # paw: 2
    ([0] * 5, [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (2, 4)]),       # bowtie: 8
    ([0, 1, 0, 1], [(0, 1), (1, 2), (2, 3), (0, 3)]),                  # C4 2-colored: 4
    ([0, 1, 0, 1, 0, 1], [(i, (i + 1) % 6) for i in range(6)]),        # C6 2-colored: 6
    ([0] * 5, [(0, 1), (1, 2), (2, 3), (3, 4)]),                       # P5: 2
    ([0] * 5, [(0, 1), (1, 2), (0, 2), (3, 4)]),                       # K3+K2: 12
    ([0, 0, 1, 1], [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]),  # K4 2-colored: 4
    ([0] * 6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (0, 3), (1, 4), (2, 5)]),  # prism: 12
    ([0] * 6, [(0, 3), (1, 4), (2, 5)]),                               # 3K2: 48
    ([1, 0, 0, 0, 0], [(0, 1), (0, 2), (0, 3), (0, 4)]),               # star, odd hub: 24
    ([0] * 7, [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 6), (6, 3)]),  # K3 tail C4... 2
]


def test_criterion_9_automorphism_engine():
    assert len(GRAPH_LIBRARY) == 30
    orders = []
    for colors, edges in GRAPH_LIBRARY:
        g = graph(colors, edges)
        want = brute_force_automorphisms(g)
        assert len(want) <= 48, f"library graph exceeds order bound: {len(want)}"
        gens = find_automorphism_generators(g)
        got = permutation_closure([p.mapping for p in gens], g.num_nodes)
        assert got == want, f"group mismatch: {len(got)} vs {len(want)}"
        orders.append(len(want))
    report(9, True, f"30 graphs, orders {min(orders)}..{max(orders)} all matched")
