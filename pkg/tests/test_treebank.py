"""Tree container, sentence/tree generators, and dataset file format tests."""

import math

import numpy as np
import pytest

from treegrad import treebank as tb
from treegrad.numerics import make_rng


def catalan(n: int) -> int:
    return math.comb(2 * n, n) // (n + 1)


class TestLabelRule:
    def test_hundreds_digit(self):
        assert tb.label_of_keyword(607) == 6
        assert tb.label_of_keyword(0) == 0
        assert tb.label_of_keyword(99) == 0
        assert tb.label_of_keyword(100) == 1
        assert tb.label_of_keyword(999) == 9

    def test_non_keyword_rejected(self):
        with pytest.raises(ValueError):
            tb.label_of_keyword(1000)
        with pytest.raises(ValueError):
            tb.label_of_keyword(-1)


class TestTreeBasics:
    def test_leaf_token_bounds(self):
        tb.Leaf(0)
        tb.Leaf(10000)
        with pytest.raises(ValueError):
            tb.Leaf(10001)
        with pytest.raises(ValueError):
            tb.Leaf(-1)

    def test_frontier_order_and_counts(self):
        tree = tb.Internal(tb.Internal(tb.Leaf(5000), tb.Leaf(607)), tb.Leaf(3000))
        assert tb.leaf_tokens(tree) == [5000, 607, 3000]
        assert tb.leaf_count(tree) == 3
        assert tb.node_count(tree) == 5

    def test_keyword_depth_counts_edges(self):
        assert tb.keyword_depth(tb.Leaf(607)) == 0
        tree = tb.Internal(tb.Internal(tb.Leaf(5000), tb.Leaf(607)), tb.Leaf(3000))
        assert tb.keyword_depth(tree) == 2
        deeper = tb.Internal(tree, tb.Leaf(4000))
        assert tb.keyword_depth(deeper) == 3

    def test_keyword_must_be_unique(self):
        with pytest.raises(ValueError, match="keyword"):
            tb.keyword_depth(tb.Internal(tb.Leaf(5000), tb.Leaf(3000)))
        with pytest.raises(ValueError, match="keyword"):
            tb.keyword_depth(tb.Internal(tb.Leaf(500), tb.Leaf(300)))

    def test_make_example_fields(self):
        tree = tb.Internal(tb.Leaf(607), tb.Leaf(3000))
        ex = tb.make_example(tree)
        assert ex.label == 6
        assert ex.keyword_value == 607
        assert ex.keyword_depth == 1
        assert ex.tree is tree


class TestGenSentence:
    def test_exactly_one_keyword_and_ranges(self):
        rng = make_rng(1)
        for _ in range(200):
            length = int(rng.integers(1, 40))
            toks = tb.gen_sentence(length, rng)
            assert len(toks) == length
            keywords = [t for t in toks if t < tb.KEYWORD_LIMIT]
            assert len(keywords) == 1
            assert all(0 <= t <= tb.TOKEN_MAX for t in toks)

    def test_keyword_position_varies(self):
        rng = make_rng(2)
        positions = {
            tuple(t < tb.KEYWORD_LIMIT for t in tb.gen_sentence(5, rng)).index(True)
            for _ in range(300)
        }
        assert positions == {0, 1, 2, 3, 4}

    def test_label_distribution_roughly_uniform(self):
        rng = make_rng(3)
        counts = np.zeros(10, dtype=int)
        for _ in range(5000):
            kw = next(t for t in tb.gen_sentence(3, rng) if t < tb.KEYWORD_LIMIT)
            counts[kw // 100] += 1
        # expected 500 per class, sd ~21; this bound is ~7 sd
        assert counts.min() > 350 and counts.max() < 650

    def test_zero_length_rejected(self):
        with pytest.raises(ValueError):
            tb.gen_sentence(0, make_rng(0))


class TestGenRandomTree:
    def test_preserves_frontier(self):
        rng = make_rng(4)
        for _ in range(100):
            toks = tb.gen_sentence(int(rng.integers(1, 30)), rng)
            tree = tb.gen_random_tree(toks, rng)
            assert tb.leaf_tokens(tree) == toks

    def test_all_shapes_reachable(self):
        # 5 distinct shapes over 4 leaves; all should appear quickly.
        rng = make_rng(5)
        toks = [607, 2000, 3000, 4000]
        seen = {tb.format_tree(tb.gen_random_tree(toks, rng)) for _ in range(2000)}
        assert len(seen) == catalan(3)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            tb.gen_random_tree([], make_rng(0))


class TestConstrainedTree:
    def test_exact_depth_and_token_multiset(self):
        rng = make_rng(6)
        nonkeys = [int(t) for t in rng.integers(1000, 10001, size=29)]
        for depth in range(1, 12):
            tree = tb._constrained_tree(607, nonkeys, depth, rng)
            assert tb.keyword_depth(tree) == depth
            assert sorted(tb.leaf_tokens(tree)) == sorted(nonkeys + [607])

    def test_depth_no_deeper_than_leaves_allow(self):
        with pytest.raises(ValueError):
            tb._constrained_tree(607, [2000, 3000], 3, make_rng(0))
        with pytest.raises(ValueError):
            tb._constrained_tree(607, [2000], 0, make_rng(0))


def check_examples(examples, length_lo, length_hi, depths=None):
    for ex in examples:
        toks = tb.leaf_tokens(ex.tree)
        assert length_lo <= len(toks) <= length_hi
        keywords = [t for t in toks if t < tb.KEYWORD_LIMIT]
        assert len(keywords) == 1
        assert ex.keyword_value == keywords[0]
        assert ex.label == keywords[0] // 100
        assert ex.keyword_depth == tb.keyword_depth(ex.tree)
        if depths is not None:
            assert ex.keyword_depth in depths


class TestLengthBandedDatasets:
    def test_sizes_and_invariants(self):
        ds = tb.gen_dataset_exp1(2, sizes=(60, 25, 25), seed=11)
        assert (len(ds.train), len(ds.dev), len(ds.test)) == (60, 25, 25)
        for name in tb.SPLIT_NAMES:
            check_examples(ds.split(name), 11, 20)
        assert ds.provenance == tb.Provenance(1, 2, (60, 25, 25), 11)

    def test_band_edges(self):
        ds = tb.gen_dataset_exp1(1, sizes=(80, 5, 5), seed=0)
        lengths = {tb.leaf_count(ex.tree) for ex in ds.train}
        assert lengths == set(range(1, 11))

    def test_deterministic_and_seed_sensitive(self):
        a = tb.gen_dataset_exp1(3, sizes=(20, 5, 5), seed=7)
        b = tb.gen_dataset_exp1(3, sizes=(20, 5, 5), seed=7)
        c = tb.gen_dataset_exp1(3, sizes=(20, 5, 5), seed=8)
        assert a == b
        assert a.train != c.train

    def test_examples_independent_of_split_sizes(self):
        small = tb.gen_dataset_exp1(2, sizes=(10, 4, 4), seed=5)
        large = tb.gen_dataset_exp1(2, sizes=(30, 9, 9), seed=5)
        assert large.train[:10] == small.train
        assert large.dev[:4] == small.dev

    def test_splits_do_not_repeat_each_other(self):
        ds = tb.gen_dataset_exp1(2, sizes=(20, 20, 20), seed=9)
        assert ds.train != ds.dev
        assert ds.dev != ds.test

    def test_bad_index_rejected(self):
        with pytest.raises(ValueError):
            tb.gen_dataset_exp1(0)
        with pytest.raises(ValueError):
            tb.gen_dataset_exp1(11)


class TestDepthBandedDatasets:
    def test_depth_band_and_lengths(self):
        for i in (2, 5, 9):
            ds = tb.gen_dataset_exp2(i, sizes=(40, 10, 10), seed=13)
            for name in tb.SPLIT_NAMES:
                check_examples(ds.split(name), 21, 30, depths={i, i + 1})

    def test_both_depths_occur(self):
        ds = tb.gen_dataset_exp2(4, sizes=(120, 5, 5), seed=1)
        depths = {ex.keyword_depth for ex in ds.train}
        assert depths == {4, 5}

    def test_deterministic(self):
        a = tb.gen_dataset_exp2(6, sizes=(15, 5, 5), seed=3)
        b = tb.gen_dataset_exp2(6, sizes=(15, 5, 5), seed=3)
        assert a == b

    def test_rejection_matches_unconstrained_tree_draw(self):
        # When the first draw is already in band, the tree must be exactly
        # what gen_random_tree would have produced from the same stream.
        hits = 0
        for idx in range(200):
            rng = make_rng(17, 2, 5, 0, idx)
            state = rng.bit_generator.state
            length = int(rng.integers(21, 31))
            toks = tb.gen_sentence(length, rng)
            tree = tb.gen_random_tree(toks, rng)
            if tb.keyword_depth(tree) in (5, 6):
                rng.bit_generator.state = state
                ex, fell_back = tb._gen_depth_banded_example(5, rng)
                assert not fell_back
                assert ex.tree == tree
                hits += 1
        assert hits > 20

    def test_fallback_path_keeps_invariants(self, monkeypatch):
        original = tb._gen_depth_banded_example
        monkeypatch.setattr(
            tb,
            "_gen_depth_banded_example",
            lambda i, rng, cap=1: original(i, rng, cap=cap),
        )
        ds = tb.gen_dataset_exp2(1, sizes=(40, 8, 8), seed=2)
        fallback_train = ds.provenance.fallback_indices[0]
        assert len(fallback_train) > 0
        check_examples(ds.train, 21, 30, depths={1, 2})

    def test_cap_not_hit_at_band_extremes(self):
        for i in (1, 10):
            ds = tb.gen_dataset_exp2(i, sizes=(30, 5, 5), seed=21)
            assert ds.provenance.fallback_indices == ((), (), ())


class TestTreeText:
    def test_format_reference(self):
        tree = tb.Internal(tb.Internal(tb.Leaf(5000), tb.Leaf(607)), tb.Leaf(3000))
        assert tb.format_tree(tree) == "((5000 607) 3000)"
        assert tb.format_example_line(tb.make_example(tree)) == "6 ((5000 607) 3000)"

    def test_parse_reference(self):
        tree = tb.parse_tree("((5000 607) 3000)")
        assert tree == tb.Internal(
            tb.Internal(tb.Leaf(5000), tb.Leaf(607)), tb.Leaf(3000)
        )
        assert tb.parse_tree("607") == tb.Leaf(607)

    def test_round_trip_random_trees(self):
        rng = make_rng(8)
        for _ in range(200):
            toks = tb.gen_sentence(int(rng.integers(1, 40)), rng)
            tree = tb.gen_random_tree(toks, rng)
            assert tb.parse_tree(tb.format_tree(tree)) == tree

    @pytest.mark.parametrize(
        "text",
        [
            "(607 3000",
            "(607)",
            "607 3000",
            "((607 3000)",
            "(607 3000))",
            "(607  3000)",
            "(abc 3000)",
            "",
            "(20000 607)",
        ],
    )
    def test_malformed_trees_rejected(self, text):
        with pytest.raises(tb.ParseError):
            tb.parse_tree(text)

    def test_parse_error_position(self):
        with pytest.raises(tb.ParseError) as info:
            tb.parse_tree("(607 x)", line_no=3)
        assert info.value.line == 3
        assert info.value.column == 6

    def test_example_line_label_checked(self):
        with pytest.raises(tb.ParseError, match="label"):
            tb.parse_example_line("5 (607 3000)")
        with pytest.raises(tb.ParseError, match="label"):
            tb.parse_example_line("12 (607 3000)")
        with pytest.raises(tb.ParseError):
            tb.parse_example_line("(607 3000)")


class TestDatasetFiles:
    def test_round_trip(self, tmp_path):
        ds = tb.gen_dataset_exp2(3, sizes=(25, 10, 10), seed=19)
        path = tb.write_dataset(ds, tmp_path / "ds")
        assert tb.read_dataset(path) == ds

    def test_written_files_have_headers(self, tmp_path):
        ds = tb.gen_dataset_exp1(1, sizes=(5, 5, 5), seed=1)
        path = tb.write_dataset(ds, tmp_path / "ds")
        for name in tb.SPLIT_NAMES:
            first = (path / f"{name}.txt").read_text().splitlines()[0]
            assert first.startswith("# ")
            assert f'"split": "{name}"' in first

    def test_rewrite_is_byte_identical(self, tmp_path):
        ds = tb.gen_dataset_exp1(2, sizes=(12, 6, 6), seed=23)
        a = tb.write_dataset(ds, tmp_path / "a")
        b = tb.write_dataset(tb.gen_dataset_exp1(2, sizes=(12, 6, 6), seed=23), tmp_path / "b")
        for f in ("train.txt", "dev.txt", "test.txt", "meta"):
            assert (a / f).read_bytes() == (b / f).read_bytes()

    def test_size_mismatch_detected(self, tmp_path):
        ds = tb.gen_dataset_exp1(1, sizes=(6, 3, 3), seed=2)
        path = tb.write_dataset(ds, tmp_path / "ds")
        lines = (path / "train.txt").read_text().splitlines()
        (path / "train.txt").write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(ValueError, match="meta"):
            tb.read_dataset(path)

    def test_missing_meta_detected(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            tb.read_dataset(tmp_path / "nowhere")

    def test_bad_line_reports_position(self, tmp_path):
        ds = tb.gen_dataset_exp1(1, sizes=(4, 2, 2), seed=3)
        path = tb.write_dataset(ds, tmp_path / "ds")
        text = (path / "dev.txt").read_text().splitlines()
        text[2] = text[2][:-1]  # drop a closing paren
        (path / "dev.txt").write_text("\n".join(text) + "\n")
        with pytest.raises(tb.ParseError) as info:
            tb.read_dataset(path)
        assert info.value.line == 3
