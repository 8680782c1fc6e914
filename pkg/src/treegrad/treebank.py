"""Synthetic keyword treebanks: sentences, binary trees, labels, and files.

A sentence is a list of integer tokens in [0, 10000]. Exactly one token per
sentence is a *keyword* (value < 1000); the sentence's class label is the
keyword's hundreds digit (keyword // 100, so 10 classes). Sentences are
parsed by randomly generated binary trees whose leaves carry the tokens in
left-to-right order.

Two dataset families are generated here:

* length-banded: dataset ``i`` holds sentences of lengths ``10*i - 9 .. 10*i``
  with unconstrained random trees (``gen_dataset_exp1``);
* depth-banded: sentence lengths 21..30, but only trees whose keyword sits
  at depth ``i`` or ``i + 1`` from the root (``gen_dataset_exp2``).

Datasets serialize to a directory of line-based text files (`train.txt`,
`dev.txt`, `test.txt`) plus a JSON `meta` file. One example per line:
``<label> <tree>`` where a tree is either a bare integer (leaf) or
``(<tree> <tree>)``, single-space separated. Lines starting with ``#`` are
provenance headers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence, Union

from .numerics import SeededRng, make_rng

TOKEN_MAX = 10000
KEYWORD_LIMIT = 1000
NUM_CLASSES = 10

# Tree redraws allowed per example before the constructive sampler takes over.
DEPTH_REJECTION_CAP = 10000

# Stream tags for per-example rng derivation (seed, experiment, i, split, index).
SPLIT_CODES = {"train": 0, "dev": 1, "test": 2}
SPLIT_NAMES = ("train", "dev", "test")


class ParseError(ValueError):
    """Malformed dataset text; carries 1-based line and column."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


def is_keyword(token: int) -> bool:
    return token < KEYWORD_LIMIT


def check_token(token: int) -> int:
    if not isinstance(token, (int,)) or isinstance(token, bool):
        raise ValueError(f"token must be an integer, got {token!r}")
    if not 0 <= token <= TOKEN_MAX:
        raise ValueError(f"token {token} outside [0, {TOKEN_MAX}]")
    return token


@dataclass(frozen=True)
class Leaf:
    token: int

    def __post_init__(self):
        check_token(self.token)


@dataclass(frozen=True)
class Internal:
    left: "BinaryTree"
    right: "BinaryTree"


BinaryTree = Union[Leaf, Internal]


def leaf_tokens(tree: BinaryTree) -> list[int]:
    """Frontier of the tree, left to right (the sentence)."""
    out: list[int] = []
    stack = [tree]
    while stack:
        node = stack.pop()
        if isinstance(node, Leaf):
            out.append(node.token)
        else:
            stack.append(node.right)
            stack.append(node.left)
    return out


def leaf_count(tree: BinaryTree) -> int:
    return len(leaf_tokens(tree))


def node_count(tree: BinaryTree) -> int:
    return 2 * leaf_count(tree) - 1


def keyword_depth(tree: BinaryTree) -> int:
    """Edges from the root to the unique keyword leaf."""
    depths = []
    stack = [(tree, 0)]
    while stack:
        node, d = stack.pop()
        if isinstance(node, Leaf):
            if is_keyword(node.token):
                depths.append(d)
        else:
            stack.append((node.left, d + 1))
            stack.append((node.right, d + 1))
    if len(depths) != 1:
        raise ValueError(f"tree has {len(depths)} keyword leaves, expected exactly 1")
    return depths[0]


def label_of_keyword(keyword: int) -> int:
    """Class label: the keyword's hundreds digit."""
    check_token(keyword)
    if not is_keyword(keyword):
        raise ValueError(f"{keyword} is not a keyword (must be < {KEYWORD_LIMIT})")
    return keyword // 100


@dataclass(frozen=True)
class LabeledExample:
    tree: BinaryTree
    label: int
    keyword_value: int
    keyword_depth: int


def make_example(tree: BinaryTree) -> LabeledExample:
    """Label a tree from its unique keyword; errors if the keyword is not unique."""
    depth = keyword_depth(tree)
    keyword = next(t for t in leaf_tokens(tree) if is_keyword(t))
    return LabeledExample(
        tree=tree,
        label=label_of_keyword(keyword),
        keyword_value=keyword,
        keyword_depth=depth,
    )


def gen_sentence(length: int, rng: SeededRng) -> list[int]:
    """One keyword uniform on [0, 999], length-1 non-keywords uniform on
    [1000, 10000], uniformly shuffled."""
    if length < 1:
        raise ValueError(f"sentence length must be >= 1, got {length}")
    keyword = int(rng.integers(0, KEYWORD_LIMIT))
    tokens = [keyword] + [
        int(t) for t in rng.integers(KEYWORD_LIMIT, TOKEN_MAX + 1, size=length - 1)
    ]
    rng.shuffle(tokens)
    return tokens


def gen_random_tree(tokens: Sequence[int], rng: SeededRng) -> BinaryTree:
    """Random binary tree over the tokens, preserving their left-to-right order.

    Structure is drawn by recursive uniform split: a span of l leaves is cut
    at a point uniform on {1, .., l-1} and both sides recurse (left first).
    """
    if len(tokens) == 0:
        raise ValueError("cannot build a tree over zero tokens")

    def build(lo: int, hi: int) -> BinaryTree:
        span = hi - lo
        if span == 1:
            return Leaf(int(tokens[lo]))
        cut = lo + int(rng.integers(1, span))
        left = build(lo, cut)
        right = build(cut, hi)
        return Internal(left, right)

    return build(0, len(tokens))


def _draw_splits(length: int, keyword_pos: int, rng: SeededRng) -> tuple[int, list[int]]:
    """Draw gen_random_tree's split sequence without building nodes.

    Consumes exactly the draws gen_random_tree would, in the same order, and
    returns the keyword leaf's depth plus the cut sequence so an accepted
    tree can be rebuilt without touching the generator again.
    """
    depth = 0
    cuts: list[int] = []
    stack = [(0, length, True)]
    while stack:
        lo, hi, on_path = stack.pop()
        span = hi - lo
        if span == 1:
            continue
        cut = lo + int(rng.integers(1, span))
        cuts.append(cut)
        if on_path:
            depth += 1
        # Match gen_random_tree's draw order: left subtree fully, then right.
        stack.append((cut, hi, on_path and keyword_pos >= cut))
        stack.append((lo, cut, on_path and keyword_pos < cut))
    return depth, cuts


def _build_from_cuts(tokens: Sequence[int], cuts: Sequence[int]) -> BinaryTree:
    """Rebuild the tree a recorded split sequence describes."""
    it = iter(cuts)

    def build(lo: int, hi: int) -> BinaryTree:
        if hi - lo == 1:
            return Leaf(int(tokens[lo]))
        cut = next(it)
        left = build(lo, cut)
        right = build(cut, hi)
        return Internal(left, right)

    tree = build(0, len(tokens))
    leftover = sum(1 for _ in it)
    if leftover:
        raise ValueError(f"{leftover} unused cuts for {len(tokens)} tokens")
    return tree


def _constrained_tree(
    keyword: int, nonkeys: Sequence[int], depth: int, rng: SeededRng
) -> BinaryTree:
    """Tree whose keyword leaf sits at exactly `depth`, all leaves used.

    Builds the root-to-keyword path directly: the off-path subtree at each
    of the `depth` path nodes gets a uniformly drawn share of the remaining
    leaves and a random internal structure; left/right orientation of the
    path is drawn per node.
    """
    m = len(nonkeys)
    if depth < 1 or m < depth:
        raise ValueError(f"cannot place keyword at depth {depth} with {m} other leaves")
    if depth == 1:
        cuts: list[int] = []
    else:
        cuts = sorted(int(c) for c in rng.choice(m - 1, size=depth - 1, replace=False) + 1)
    bounds = [0, *cuts, m]
    node: BinaryTree = Leaf(keyword)
    for j in range(depth):
        chunk = nonkeys[bounds[j] : bounds[j + 1]]
        off = gen_random_tree(chunk, rng)
        if int(rng.integers(2)) == 0:
            node = Internal(off, node)
        else:
            node = Internal(node, off)
    return node


@dataclass(frozen=True)
class Provenance:
    experiment: int
    index: int
    sizes: tuple[int, int, int]
    seed: int
    # Per-split indices of examples produced by the constructive sampler
    # instead of rejection (empty for the length-banded family).
    fallback_indices: tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]] = (
        (),
        (),
        (),
    )


@dataclass
class Dataset:
    train: list[LabeledExample]
    dev: list[LabeledExample]
    test: list[LabeledExample]
    provenance: Provenance

    def split(self, name: str) -> list[LabeledExample]:
        if name not in SPLIT_NAMES:
            raise ValueError(f"unknown split {name!r}, expected one of {SPLIT_NAMES}")
        return getattr(self, name)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.train == other.train
            and self.dev == other.dev
            and self.test == other.test
            and self.provenance == other.provenance
        )


def _check_dataset_params(i: int, sizes: Sequence[int]) -> tuple[int, int, int]:
    if not 1 <= i <= 10:
        raise ValueError(f"dataset index must be in 1..10, got {i}")
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) != 3 or any(s < 1 for s in sizes):
        raise ValueError(f"sizes must be three positive counts, got {sizes}")
    return sizes


def gen_dataset_exp1(
    i: int, sizes: Sequence[int] = (10000, 1000, 1000), seed: int = 0
) -> Dataset:
    """Length-banded dataset: lengths uniform on [10i-9, 10i], random trees.

    Every example draws its own generator from (seed, 1, i, split, index), so
    generation is deterministic and order-independent.
    """
    sizes = _check_dataset_params(i, sizes)
    lo, hi = 10 * i - 9, 10 * i
    splits = []
    for name, size in zip(SPLIT_NAMES, sizes):
        code = SPLIT_CODES[name]
        examples = []
        for idx in range(size):
            rng = make_rng(seed, 1, i, code, idx)
            length = int(rng.integers(lo, hi + 1))
            tokens = gen_sentence(length, rng)
            tree = gen_random_tree(tokens, rng)
            examples.append(make_example(tree))
        splits.append(examples)
    prov = Provenance(experiment=1, index=i, sizes=sizes, seed=seed)
    return Dataset(*splits, provenance=prov)


def _gen_depth_banded_example(
    i: int, rng: SeededRng, cap: int = DEPTH_REJECTION_CAP
) -> tuple[LabeledExample, bool]:
    """One example with keyword depth in {i, i+1}: rejection, then fallback."""
    length = int(rng.integers(21, 31))
    tokens = gen_sentence(length, rng)
    keyword_pos = next(p for p, t in enumerate(tokens) if is_keyword(t))
    for _ in range(cap):
        depth, cuts = _draw_splits(length, keyword_pos, rng)
        if depth == i or depth == i + 1:
            return make_example(_build_from_cuts(tokens, cuts)), False
    keyword = tokens[keyword_pos]
    nonkeys = [t for t in tokens if not is_keyword(t)]
    depth = i + int(rng.integers(2))
    tree = _constrained_tree(keyword, nonkeys, depth, rng)
    return make_example(tree), True


def gen_dataset_exp2(
    i: int, sizes: Sequence[int] = (10000, 1000, 1000), seed: int = 0
) -> Dataset:
    """Depth-banded dataset: lengths 21..30, keyword depth in {i, i+1}.

    Trees are rejection-sampled from gen_random_tree (capped per example);
    on cap the constructive sampler builds the keyword path directly, and
    provenance records which examples took that path.
    """
    sizes = _check_dataset_params(i, sizes)
    splits = []
    fallbacks: list[tuple[int, ...]] = []
    for name, size in zip(SPLIT_NAMES, sizes):
        code = SPLIT_CODES[name]
        examples = []
        fell_back = []
        for idx in range(size):
            rng = make_rng(seed, 2, i, code, idx)
            example, used_fallback = _gen_depth_banded_example(i, rng)
            examples.append(example)
            if used_fallback:
                fell_back.append(idx)
        splits.append(examples)
        fallbacks.append(tuple(fell_back))
    prov = Provenance(
        experiment=2, index=i, sizes=sizes, seed=seed, fallback_indices=tuple(fallbacks)
    )
    return Dataset(*splits, provenance=prov)


# ---------------------------------------------------------------------------
# Text serialization
# ---------------------------------------------------------------------------


def format_tree(tree: BinaryTree) -> str:
    parts: list[str] = []

    def emit(node: BinaryTree) -> None:
        if isinstance(node, Leaf):
            parts.append(str(node.token))
        else:
            parts.append("(")
            emit(node.left)
            parts.append(" ")
            emit(node.right)
            parts.append(")")

    emit(tree)
    return "".join(parts)


def format_example_line(example: LabeledExample) -> str:
    return f"{example.label} {format_tree(example.tree)}"


def parse_tree(text: str, line_no: int = 1, offset: int = 0) -> BinaryTree:
    tree, end = _parse_tree_at(text, 0, line_no, offset)
    if end != len(text):
        raise ParseError("trailing characters after tree", line_no, offset + end + 1)
    return tree


def _parse_tree_at(
    text: str, pos: int, line_no: int, offset: int
) -> tuple[BinaryTree, int]:
    def fail(message: str, at: int):
        raise ParseError(message, line_no, offset + at + 1)

    if pos >= len(text):
        fail("expected a tree, found end of line", pos)
    ch = text[pos]
    if ch == "(":
        left, pos = _parse_tree_at(text, pos + 1, line_no, offset)
        if pos >= len(text) or text[pos] != " ":
            fail("expected ' ' between subtrees", pos)
        right, pos = _parse_tree_at(text, pos + 1, line_no, offset)
        if pos >= len(text) or text[pos] != ")":
            fail("expected ')'", pos)
        return Internal(left, right), pos + 1
    if ch.isdigit():
        end = pos
        while end < len(text) and text[end].isdigit():
            end += 1
        token = int(text[pos:end])
        try:
            return Leaf(token), end
        except ValueError as exc:
            fail(str(exc), pos)
    fail(f"unexpected character {ch!r}", pos)
    raise AssertionError("unreachable")


def parse_example_line(line: str, line_no: int = 1) -> LabeledExample:
    head, sep, rest = line.partition(" ")
    if not sep or not head.isdigit():
        raise ParseError("expected '<label> <tree>'", line_no, 1)
    label = int(head)
    if not 0 <= label < NUM_CLASSES:
        raise ParseError(f"label {label} outside 0..{NUM_CLASSES - 1}", line_no, 1)
    tree = parse_tree(rest, line_no, offset=len(head) + 1)
    example = make_example(tree)
    if example.label != label:
        raise ParseError(
            f"label {label} does not match keyword {example.keyword_value}",
            line_no,
            1,
        )
    return example


def _split_stats(examples: Sequence[LabeledExample]) -> dict:
    lengths = [leaf_count(ex.tree) for ex in examples]
    histogram: dict[int, int] = {}
    for ex in examples:
        histogram[ex.keyword_depth] = histogram.get(ex.keyword_depth, 0) + 1
    return {
        "size": len(examples),
        "length_min": min(lengths),
        "length_max": max(lengths),
        "depth_histogram": {str(d): histogram[d] for d in sorted(histogram)},
    }


def write_dataset(dataset: Dataset, path: str | Path) -> Path:
    """Write train/dev/test text files plus the JSON `meta` file."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    prov = dataset.provenance
    for name in SPLIT_NAMES:
        examples = dataset.split(name)
        header = json.dumps(
            {
                "experiment": prov.experiment,
                "index": prov.index,
                "seed": prov.seed,
                "split": name,
                "size": len(examples),
            },
            sort_keys=True,
        )
        lines = [f"# {header}"]
        lines.extend(format_example_line(ex) for ex in examples)
        (path / f"{name}.txt").write_text("\n".join(lines) + "\n")
    meta = {
        "experiment": prov.experiment,
        "index": prov.index,
        "sizes": list(prov.sizes),
        "seed": prov.seed,
        "fallback_indices": {
            name: list(idxs) for name, idxs in zip(SPLIT_NAMES, prov.fallback_indices)
        },
        "stats": {name: _split_stats(dataset.split(name)) for name in SPLIT_NAMES},
    }
    (path / "meta").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return path


def read_examples(path: str | Path) -> list[LabeledExample]:
    """Parse one split file; `#` lines are headers and skipped."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such dataset file: {path}")
    examples = []
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            examples.append(parse_example_line(line, line_no))
    return examples


def read_dataset(path: str | Path) -> Dataset:
    """Read a dataset directory written by write_dataset."""
    path = Path(path)
    meta_path = path / "meta"
    if not meta_path.exists():
        raise FileNotFoundError(f"no meta file in dataset directory: {path}")
    meta = json.loads(meta_path.read_text())
    prov = Provenance(
        experiment=int(meta["experiment"]),
        index=int(meta["index"]),
        sizes=tuple(int(s) for s in meta["sizes"]),
        seed=int(meta["seed"]),
        fallback_indices=tuple(
            tuple(int(i) for i in meta.get("fallback_indices", {}).get(name, []))
            for name in SPLIT_NAMES
        ),
    )
    splits = {name: read_examples(path / f"{name}.txt") for name in SPLIT_NAMES}
    for name, expected in zip(SPLIT_NAMES, prov.sizes):
        if len(splits[name]) != expected:
            raise ValueError(
                f"{path / (name + '.txt')}: {len(splits[name])} examples, "
                f"meta says {expected}"
            )
    return Dataset(splits["train"], splits["dev"], splits["test"], provenance=prov)
