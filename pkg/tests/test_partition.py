import math

import pytest

from bvmc.model import (
    all_states,
    log_weight,
    normalize_to_clauses,
    parse_model,
    random_model,
)
from bvmc.partition import (
    Block,
    BlockPartition,
    BlockValueSet,
    BVPair,
    PartitionError,
    build_block_model,
    consistent,
    generate_block_partitions,
    get_useful_blocks,
    get_weight_sign,
    parse_partition,
    parse_partition_set,
    partition_hash,
    serialize_partition,
    serialize_partition_set,
    singleton_partition,
    validate_partition,
)
from oracles import brute_force_log_partition


def pairing_partition(n_vars):
    """Adjacent variables paired into 2-blocks, trailing singleton if odd."""
    blocks = [Block((i, i + 1)) for i in range(0, n_vars - 1, 2)]
    if n_vars % 2:
        blocks.append(Block((n_vars - 1,)))
    return BlockPartition(tuple(blocks))


class TestValidation:
    def test_valid(self):
        m = random_model(3, 2, seed=0)
        validate_partition(m, BlockPartition((Block((0, 1)), Block((2,)))))

    def test_overlap(self):
        m = random_model(3, 2, seed=0)
        with pytest.raises(PartitionError, match="appears in blocks"):
            validate_partition(m, BlockPartition((Block((0, 1)), Block((1, 2)))))

    def test_missing(self):
        m = random_model(2, 2, seed=0)
        with pytest.raises(PartitionError, match="missing"):
            validate_partition(m, BlockPartition((Block((0,)),)))

    def test_block_invariants(self):
        with pytest.raises(PartitionError):
            Block(())
        with pytest.raises(PartitionError):
            Block((2, 1))
        with pytest.raises(PartitionError):
            Block((1, 1))

    def test_singleton_partition(self):
        m = random_model(3, 2, seed=0)
        p = singleton_partition(m)
        assert len(p) == 3
        assert all(len(b) == 1 for b in p.blocks)
        validate_partition(m, p)

    def test_singleton_partition_no_features(self):
        m = parse_model("var A 2\nvar B 2\n")
        validate_partition(m, singleton_partition(m))


class TestConsistency:
    def test_consistent_examples(self):
        bv = BVPair(Block((0, 1)), (0, 1))
        assert consistent(bv, (0, 1, 1))
        assert not consistent(bv, (0, 0, 1))

    def test_exactly_one_pair_per_block(self):
        m = random_model(4, 3, seed=1)
        bvs = BlockValueSet(m, pairing_partition(4))
        for s in all_states(m):
            for l, block in enumerate(bvs.partition.blocks):
                hits = [
                    i
                    for i in range(bvs.offsets[l], bvs.offsets[l] + bvs.block_sizes[l])
                    if consistent(bvs.pair(i), s)
                ]
                assert len(hits) == 1
                assert hits[0] == bvs.index_of_state(l, s)


class TestBlockValueSet:
    def test_index_layout(self):
        m = parse_model("var A 2\nvar B 3\nvar C 2\n")
        bvs = BlockValueSet(m, BlockPartition((Block((0, 1)), Block((2,)))))
        assert bvs.size == 6 + 2
        assert bvs.decode(0) == (0, (0, 0))
        assert bvs.decode(5) == (0, (1, 2))
        assert bvs.decode(6) == (1, (0,))
        assert bvs.index(0, (1, 2)) == 5
        assert bvs.index_of_state(1, (0, 0, 1)) == 7


class TestBlockModel:
    def test_worked_example(self):
        # single feature testing X2=1, block {X1, X2}
        m = parse_model("var X1 2\nvar X2 2\nfeature OR 1.0 X2=1\n")
        bm = build_block_model(m, BlockPartition((Block((0, 1)),)))
        feat = bm.features[0]
        assert feat.block_ids == (0,)
        sats = {bm.bvs.value_tables[0][local[0]] for local in feat.satisfying}
        assert sats == {(0, 1), (1, 1)}

    def test_singleton_partition_isomorphic(self):
        m = normalize_to_clauses(random_model(4, 5, seed=2))
        bm = build_block_model(m, singleton_partition(m))
        for s in all_states(m):
            mapped = bm.map_state(s)
            assert mapped == tuple(s)
            assert bm.log_weight(mapped) == pytest.approx(log_weight(m, s), abs=1e-12)

    def test_probability_preserving_random_models(self):
        for seed in range(6):
            m = normalize_to_clauses(random_model(6, 7, seed=seed))
            bm = build_block_model(m, pairing_partition(6))
            z = brute_force_log_partition(m)
            spread = set()
            for s in all_states(m):
                lw = log_weight(m, s)
                lw_hat = bm.log_weight(bm.map_state(s))
                p = math.exp(lw - z)
                assert math.exp(lw_hat - z) == pytest.approx(p, rel=1e-12)
                spread.add(round(lw - lw_hat, 12))
            assert len(spread) == 1  # constant shift (here zero)

    def test_state_round_trip(self):
        m = normalize_to_clauses(random_model(5, 6, seed=4, domain_size=3))
        bm = build_block_model(m, pairing_partition(5))
        for s in all_states(m):
            assert bm.inverse_map(bm.map_state(s)) == s

    def test_joint_cap(self):
        m = normalize_to_clauses(random_model(6, 1, seed=0, max_arity=6))
        with pytest.raises(PartitionError, match="cap"):
            build_block_model(m, pairing_partition(6), joint_cap=4)


class TestUsefulBlocks:
    def test_three_var_feature(self):
        m = parse_model("var X1 2\nvar X2 2\nvar X3 2\nfeature OR 1.0 X1=1 X2=1 X3=1\n")
        blocks = get_useful_blocks(m, 2)
        assert blocks == {
            Block((0,)),
            Block((1,)),
            Block((2,)),
            Block((0, 1)),
            Block((0, 2)),
            Block((1, 2)),
        }

    def test_r1_singletons_only(self):
        m = parse_model("var A 2\nvar B 2\nvar C 2\nfeature OR 1.0 A=1 B=1\n")
        assert get_useful_blocks(m, 1) == {Block((0,)), Block((1,))}

    def test_no_cross_feature_blocks(self):
        m = parse_model(
            "var A 2\nvar B 2\nvar C 2\nvar D 2\n"
            "feature OR 1.0 A=1 B=1\nfeature OR 2.0 C=1 D=1\n"
        )
        blocks = get_useful_blocks(m, 2)
        assert Block((0, 2)) not in blocks
        assert Block((0, 1)) in blocks and Block((2, 3)) in blocks

    def test_size_bound_and_subset_invariant(self):
        m = random_model(6, 5, seed=3)
        blocks = get_useful_blocks(m, 2)
        bound = sum(2 ** len(set(f.variables())) - 1 for f in m.features)
        assert len(blocks) <= bound
        feature_sets = [set(f.variables()) for f in m.features]
        for b in blocks:
            assert any(set(b.vars) <= fs for fs in feature_sets)


class TestWeightSignature:
    MODEL = "var X1 2\nvar X2 2\nfeature OR 1.0 X1=1 X2=1\nfeature OR 2.0 X1=0\n"

    def test_hand_computed(self):
        m = parse_model(self.MODEL)
        block = Block((0, 1))
        assert get_weight_sign(m, BVPair(block, (1, 0))) == (1.0,)
        assert get_weight_sign(m, BVPair(block, (0, 0))) == (2.0,)
        assert get_weight_sign(m, BVPair(block, (0, 1))) == (1.0, 2.0)

    def test_empty_blanket(self):
        m = parse_model("var A 2\nvar B 2\nfeature OR 1.0 A=1\n")
        assert get_weight_sign(m, BVPair(Block((1,)), (0,))) == ()

    def test_clause_order_invariant(self):
        m = parse_model(self.MODEL)
        reordered = parse_model(
            "var X1 2\nvar X2 2\nfeature OR 2.0 X1=0\nfeature OR 1.0 X1=1 X2=1\n"
        )
        bv = BVPair(Block((0, 1)), (0, 1))
        assert get_weight_sign(m, bv) == get_weight_sign(reordered, bv)

    def test_multiset_keeps_duplicates(self):
        m = parse_model(
            "var X1 2\nfeature OR 1.0 X1=1\nfeature OR 1.0 X1=1\n"
        )
        assert get_weight_sign(m, BVPair(Block((0,)), (1,))) == (1.0, 1.0)


class TestGeneratePartitions:
    def test_all_valid(self):
        m = random_model(8, 8, seed=5)
        for p in generate_block_partitions(m, 2, 5, seed=1):
            validate_partition(m, p)

    def test_r1_gives_singletons(self):
        m = random_model(5, 5, seed=2)
        for p in generate_block_partitions(m, 1, 3, seed=1):
            assert all(len(b) == 1 for b in p.blocks)

    def test_deterministic(self):
        m = random_model(8, 8, seed=5)
        a = generate_block_partitions(m, 2, 4, seed=9)
        b = generate_block_partitions(m, 2, 4, seed=9)
        assert a == b
        assert a != generate_block_partitions(m, 2, 4, seed=10)

    def test_job_search_person_block_found(self):
        from bvmc.model import gen_job_search

        m = gen_job_search(5, 0.0, 0.5, 2.5, 0.8, seed=1)
        parts = generate_block_partitions(m, 2, 5, seed=1)
        person_blocks = {Block((2 * i, 2 * i + 1)) for i in range(5)}
        assert any(person_blocks & set(p.blocks) for p in parts)

    def test_non_singletons_are_useful(self):
        m = random_model(7, 6, seed=8)
        useful = get_useful_blocks(m, 2)
        for p in generate_block_partitions(m, 2, 4, seed=3):
            for b in p.blocks:
                if len(b) > 1:
                    assert b in useful


class TestFiles:
    def test_partition_round_trip(self):
        m = random_model(5, 4, seed=1)
        p = pairing_partition(5)
        assert parse_partition(serialize_partition(m, p), m) == p

    def test_partition_set_round_trip(self):
        m = random_model(6, 6, seed=1)
        parts = generate_block_partitions(m, 2, 3, seed=4)
        text = serialize_partition_set(m, parts)
        assert parse_partition_set(text, m) == parts

    def test_invalid_partition_file(self):
        m = random_model(3, 2, seed=0)
        with pytest.raises(PartitionError):
            parse_partition("block X0\nblock X1\n", m)  # X2 missing

    def test_hash_stable_and_order_free(self):
        m = random_model(4, 3, seed=0)
        p1 = BlockPartition((Block((0, 1)), Block((2, 3))))
        p2 = BlockPartition((Block((2, 3)), Block((0, 1))))
        assert partition_hash(m, p1) == partition_hash(m, p2)
        assert len(partition_hash(m, p1)) == 12
