"""Recursive classifiers over binary trees: plain tanh composition and a
tree LSTM with one input, two forget, and one output gate per node.

Both models embed each leaf token as a row of a shared embedding table and
compose child states bottom-up; a softmax layer on the root representation
assigns one of 10 classes. States are (rep, mem) pairs: the plain model
keeps mem identically zero, the LSTM carries its cell vector there. Word
vectors at leaves enter the LSTM as representations only; leaf cells are
zero.

The backward pass is written out by hand (no autograd) and exposes the
per-node error vectors it propagates, so gradient flow through the tree can
be inspected after the fact. All parameters, including embeddings and the
classifier, initialize from U(-0.0001, 0.0001); biases start at zero.

Checkpoints are a single file: one JSON header line followed by the raw
little-endian float64 bytes of each parameter block in header order. The
encoding has no timestamps, so identical models save to identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional, Union

import numpy as np

from .numerics import Matrix, Vector, make_rng, sigmoid_map, softmax, uniform_init
from .treebank import NUM_CLASSES, TOKEN_MAX, BinaryTree, Leaf

EMBED_ROWS = TOKEN_MAX + 1
INIT_LO = -0.0001
INIT_HI = 0.0001
MODEL_KINDS = ("rnn", "rlstm")

# Row blocks of the fused tree-LSTM weight matrices, in order: input gate,
# left forget gate, right forget gate, output gate, candidate update.
GATE_ORDER = ("i", "f1", "f2", "o", "u")

# Stream tags under the model seed for parameter initialization.
_EMBED_STREAM = 1
_COMPOSER_STREAM = 2
_CLASSIFIER_STREAM = 3

_FORMAT_NAME = "treegrad-model"
_FORMAT_VERSION = 1


class NodeState(NamedTuple):
    rep: Vector
    mem: Vector


@dataclass
class RnnComposer:
    W: Matrix  # (n, 2n): left child columns first
    b: Vector  # (n,)


@dataclass
class RlstmComposer:
    WL: Matrix  # (5n, n), gate blocks in GATE_ORDER, applied to left rep
    WR: Matrix  # (5n, n), applied to right rep
    b: Vector  # (5n,)

    def gate_rows(self, name: str) -> slice:
        k = GATE_ORDER.index(name)
        n = self.WL.shape[1]
        return slice(k * n, (k + 1) * n)


Composer = Union[RnnComposer, RlstmComposer]


@dataclass
class Classifier:
    W: Matrix  # (NUM_CLASSES, n)
    b: Vector  # (NUM_CLASSES,)


@dataclass
class Model:
    kind: str
    n: int
    embeddings: Matrix  # (EMBED_ROWS, n)
    composer: Composer
    classifier: Classifier
    seed: Optional[int] = None  # None for hand-assembled parameters

    def dense_blocks(self) -> list[tuple[str, np.ndarray]]:
        """Named non-embedding parameter arrays, in checkpoint order."""
        if self.kind == "rnn":
            comp = [("composer.W", self.composer.W), ("composer.b", self.composer.b)]
        else:
            comp = [
                ("composer.WL", self.composer.WL),
                ("composer.WR", self.composer.WR),
                ("composer.b", self.composer.b),
            ]
        return comp + [
            ("classifier.W", self.classifier.W),
            ("classifier.b", self.classifier.b),
        ]


def check_kind(kind: str) -> str:
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}, expected one of {MODEL_KINDS}")
    return kind


def init_model(kind: str, n: int, seed: int) -> Model:
    """Fresh model; every weight matrix U(-0.0001, 0.0001), biases zero.

    Each parameter group draws from its own stream under `seed`, so the
    embedding table, composer, and classifier are independently seeded.
    """
    check_kind(kind)
    if n < 1:
        raise ValueError(f"state size must be >= 1, got {n}")
    embeddings = uniform_init(EMBED_ROWS, n, INIT_LO, INIT_HI, make_rng(seed, _EMBED_STREAM))
    comp_rng = make_rng(seed, _COMPOSER_STREAM)
    if kind == "rnn":
        composer: Composer = RnnComposer(
            W=uniform_init(n, 2 * n, INIT_LO, INIT_HI, comp_rng),
            b=np.zeros(n),
        )
    else:
        composer = RlstmComposer(
            WL=uniform_init(5 * n, n, INIT_LO, INIT_HI, comp_rng),
            WR=uniform_init(5 * n, n, INIT_LO, INIT_HI, comp_rng),
            b=np.zeros(5 * n),
        )
    classifier = Classifier(
        W=uniform_init(NUM_CLASSES, n, INIT_LO, INIT_HI, make_rng(seed, _CLASSIFIER_STREAM)),
        b=np.zeros(NUM_CLASSES),
    )
    return Model(kind=kind, n=n, embeddings=embeddings, composer=composer,
                 classifier=classifier, seed=seed)


def rnn_compose(left: NodeState, right: NodeState, params: RnnComposer) -> NodeState:
    """rep = tanh(W [left.rep; right.rep] + b); mem stays zero."""
    x = np.concatenate([left.rep, right.rep])
    return NodeState(rep=np.tanh(params.W @ x + params.b), mem=np.zeros_like(left.rep))


def rlstm_compose(left: NodeState, right: NodeState, params: RlstmComposer) -> NodeState:
    """Gated composition; children's reps drive all gates, mems carry cells."""
    pre = params.WL @ left.rep + params.WR @ right.rep + params.b
    i = sigmoid_map(pre[params.gate_rows("i")])
    f1 = sigmoid_map(pre[params.gate_rows("f1")])
    f2 = sigmoid_map(pre[params.gate_rows("f2")])
    o = sigmoid_map(pre[params.gate_rows("o")])
    u = np.tanh(pre[params.gate_rows("u")])
    c = f1 * left.mem + f2 * right.mem + i * u
    return NodeState(rep=o * np.tanh(c), mem=c)


def leaf_state(model: Model, token: int) -> NodeState:
    if not 0 <= token <= TOKEN_MAX:
        raise ValueError(f"token {token} outside [0, {TOKEN_MAX}]")
    return NodeState(rep=model.embeddings[token].copy(), mem=np.zeros(model.n))


# ---------------------------------------------------------------------------
# Compiled trees and the forward/backward passes
# ---------------------------------------------------------------------------


@dataclass
class TreeSchedule:
    """Post-order node arrays: children precede parents, root is last.

    tokens[k] >= 0 marks a leaf; internal nodes have tokens[k] == -1 and
    child indices in lefts/rights. keyword_node is the unique keyword
    leaf's index, or -1 when there is not exactly one. internal_nodes and
    the gathered child index arrays are precomputed for the hot loops.
    """

    tokens: np.ndarray
    lefts: np.ndarray
    rights: np.ndarray
    keyword_node: int
    internal_nodes: np.ndarray
    internal_lefts: np.ndarray
    internal_rights: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.tokens.shape[0]

    @property
    def root(self) -> int:
        return self.tokens.shape[0] - 1


def compile_tree(tree: BinaryTree) -> TreeSchedule:
    tokens: list[int] = []
    lefts: list[int] = []
    rights: list[int] = []
    keyword_nodes: list[int] = []

    def visit(node: BinaryTree) -> int:
        if isinstance(node, Leaf):
            tokens.append(node.token)
            lefts.append(-1)
            rights.append(-1)
            if node.token < 1000:
                keyword_nodes.append(len(tokens) - 1)
            return len(tokens) - 1
        left = visit(node.left)
        right = visit(node.right)
        tokens.append(-1)
        lefts.append(left)
        rights.append(right)
        return len(tokens) - 1

    visit(tree)
    keyword_node = keyword_nodes[0] if len(keyword_nodes) == 1 else -1
    tokens_arr = np.asarray(tokens, dtype=np.int64)
    lefts_arr = np.asarray(lefts, dtype=np.int64)
    rights_arr = np.asarray(rights, dtype=np.int64)
    internal = np.nonzero(tokens_arr < 0)[0]
    return TreeSchedule(
        tokens=tokens_arr,
        lefts=lefts_arr,
        rights=rights_arr,
        keyword_node=keyword_node,
        internal_nodes=internal,
        internal_lefts=lefts_arr[internal],
        internal_rights=rights_arr[internal],
    )


@dataclass
class ForwardTrace:
    """Everything the forward pass computed, per post-order node.

    After backward() runs, err_rep/err_mem hold the loss gradients with
    respect to each node's rep and mem vectors.
    """

    schedule: TreeSchedule
    reps: Matrix  # (num_nodes, n)
    mems: Matrix  # (num_nodes, n)
    probs: Vector
    label: Optional[int]
    loss: Optional[float]
    # tree-LSTM caches; None for the plain model
    sig_gates: Optional[Matrix] = None  # (num_nodes, 4n): i, f1, f2, o
    u_gates: Optional[Matrix] = None  # (num_nodes, n)
    tanh_c: Optional[Matrix] = None  # (num_nodes, n)
    err_rep: Optional[Matrix] = None
    err_mem: Optional[Matrix] = None


def forward(item: Union[BinaryTree, TreeSchedule], model: Model,
            label: Optional[int] = None) -> ForwardTrace:
    """Bottom-up pass over one tree; probs always, loss only with a label."""
    sched = item if isinstance(item, TreeSchedule) else compile_tree(item)
    if label is not None and not 0 <= label < NUM_CLASSES:
        raise ValueError(f"label {label} outside 0..{NUM_CLASSES - 1}")
    n = model.n
    N = sched.num_nodes
    if np.any(sched.tokens > TOKEN_MAX):
        raise ValueError("schedule contains tokens outside the embedding table")
    emb = model.embeddings
    reps = np.empty((N, n))
    mems = np.zeros((N, n))
    tokens, lefts, rights = sched.tokens, sched.lefts, sched.rights

    sig = u_g = tc_all = None
    if model.kind == "rnn":
        comp: RnnComposer = model.composer
        W1 = comp.W[:, :n]
        W2 = comp.W[:, n:]
        b = comp.b
        for k in range(N):
            t = tokens[k]
            if t >= 0:
                reps[k] = emb[t]
            else:
                reps[k] = np.tanh(W1 @ reps[lefts[k]] + W2 @ reps[rights[k]] + b)
    else:
        lcomp: RlstmComposer = model.composer
        WL, WR, cb = lcomp.WL, lcomp.WR, lcomp.b
        sig = np.zeros((N, 4 * n))
        u_g = np.zeros((N, n))
        tc_all = np.zeros((N, n))
        for k in range(N):
            t = tokens[k]
            if t >= 0:
                reps[k] = emb[t]
            else:
                l, r = lefts[k], rights[k]
                pre = WL @ reps[l] + WR @ reps[r] + cb
                g = sigmoid_map(pre[: 4 * n])
                u = np.tanh(pre[4 * n :])
                c = g[n : 2 * n] * mems[l] + g[2 * n : 3 * n] * mems[r] + g[:n] * u
                tc = np.tanh(c)
                sig[k] = g
                u_g[k] = u
                tc_all[k] = tc
                mems[k] = c
                reps[k] = g[3 * n :] * tc

    logits = model.classifier.W @ reps[N - 1] + model.classifier.b
    probs = softmax(logits)
    loss = None if label is None else float(-np.log(probs[label]))
    return ForwardTrace(schedule=sched, reps=reps, mems=mems, probs=probs,
                        label=label, loss=loss, sig_gates=sig, u_gates=u_g,
                        tanh_c=tc_all)


def predict(trace: ForwardTrace) -> int:
    """Most probable class; ties break to the lowest index."""
    return int(np.argmax(trace.probs))


@dataclass
class Gradients:
    """Loss gradients matching a model's parameters.

    Embedding gradients are sparse: token -> summed row gradient. Dense
    blocks reuse the composer/classifier containers with gradient arrays.
    """

    kind: str
    embed_rows: dict[int, Vector]
    composer: Composer
    classifier: Classifier

    @staticmethod
    def zeros(model: Model) -> "Gradients":
        if model.kind == "rnn":
            comp: Composer = RnnComposer(
                W=np.zeros_like(model.composer.W), b=np.zeros_like(model.composer.b)
            )
        else:
            comp = RlstmComposer(
                WL=np.zeros_like(model.composer.WL),
                WR=np.zeros_like(model.composer.WR),
                b=np.zeros_like(model.composer.b),
            )
        clf = Classifier(
            W=np.zeros_like(model.classifier.W), b=np.zeros_like(model.classifier.b)
        )
        return Gradients(kind=model.kind, embed_rows={}, composer=comp, classifier=clf)

    def dense_blocks(self) -> list[tuple[str, np.ndarray]]:
        if self.kind == "rnn":
            comp = [("composer.W", self.composer.W), ("composer.b", self.composer.b)]
        else:
            comp = [
                ("composer.WL", self.composer.WL),
                ("composer.WR", self.composer.WR),
                ("composer.b", self.composer.b),
            ]
        return comp + [
            ("classifier.W", self.classifier.W),
            ("classifier.b", self.classifier.b),
        ]

    def add_embed_row(self, token: int, grad: Vector) -> None:
        row = self.embed_rows.get(token)
        if row is None:
            self.embed_rows[token] = grad.copy()
        else:
            row += grad


def backward(trace: ForwardTrace, model: Model,
             grads: Optional[Gradients] = None) -> Gradients:
    """Hand-derived reverse pass; accumulates into `grads` when given.

    Fills trace.err_rep and trace.err_mem with the per-node loss gradients
    (root first, children after their parent). The root's mem never feeds
    the loss, so its error row stays exactly zero.
    """
    if trace.label is None:
        raise ValueError("cannot run backward on a trace computed without a label")
    if grads is None:
        grads = Gradients.zeros(model)
    if grads.kind != model.kind:
        raise ValueError(f"gradient container is for {grads.kind!r}, model is {model.kind!r}")
    sched = trace.schedule
    n = model.n
    N = sched.num_nodes
    reps, mems = trace.reps, trace.mems
    tokens, lefts, rights = sched.tokens, sched.lefts, sched.rights

    err_rep = np.zeros((N, n))
    err_mem = np.zeros((N, n))

    dlogits = trace.probs.copy()
    dlogits[trace.label] -= 1.0
    grads.classifier.W += np.multiply.outer(dlogits, reps[N - 1])
    grads.classifier.b += dlogits
    err_rep[N - 1] = model.classifier.W.T @ dlogits

    # Per-node pre-activation gradients buffer up so the weight gradients
    # reduce to two matrix products per example instead of two outer
    # products per node; the error recursion itself stays sequential.
    if model.kind == "rnn":
        comp: RnnComposer = model.composer
        W1T = comp.W[:, :n].T
        W2T = comp.W[:, n:].T
        dpre_all = np.zeros((N, n))
        for k in range(N - 1, -1, -1):
            t = tokens[k]
            if t >= 0:
                grads.add_embed_row(int(t), err_rep[k])
                continue
            l, r = lefts[k], rights[k]
            dpre = dpre_all[k]
            np.multiply(err_rep[k], 1.0 - reps[k] ** 2, out=dpre)
            err_rep[l] += W1T @ dpre
            err_rep[r] += W2T @ dpre
        dp = dpre_all[sched.internal_nodes]
        grads.composer.W[:, :n] += dp.T @ reps[sched.internal_lefts]
        grads.composer.W[:, n:] += dp.T @ reps[sched.internal_rights]
        grads.composer.b += dp.sum(axis=0)
    else:
        lcomp: RlstmComposer = model.composer
        WLT, WRT = lcomp.WL.T, lcomp.WR.T
        sig, u_g, tc_all = trace.sig_gates, trace.u_gates, trace.tanh_c
        dpre_all = np.zeros((N, 5 * n))
        for k in range(N - 1, -1, -1):
            t = tokens[k]
            if t >= 0:
                grads.add_embed_row(int(t), err_rep[k])
                continue
            l, r = lefts[k], rights[k]
            g = sig[k]
            i = g[:n]
            f1 = g[n : 2 * n]
            f2 = g[2 * n : 3 * n]
            o = g[3 * n :]
            u = u_g[k]
            tc = tc_all[k]
            do = err_rep[k] * tc
            dc = err_mem[k] + err_rep[k] * o * (1.0 - tc**2)
            err_mem[l] += dc * f1
            err_mem[r] += dc * f2
            dpre = dpre_all[k]
            dpre[:n] = (dc * u) * i * (1.0 - i)
            dpre[n : 2 * n] = (dc * mems[l]) * f1 * (1.0 - f1)
            dpre[2 * n : 3 * n] = (dc * mems[r]) * f2 * (1.0 - f2)
            dpre[3 * n : 4 * n] = do * o * (1.0 - o)
            dpre[4 * n :] = (dc * i) * (1.0 - u**2)
            err_rep[l] += WLT @ dpre
            err_rep[r] += WRT @ dpre
        dp = dpre_all[sched.internal_nodes]
        grads.composer.WL += dp.T @ reps[sched.internal_lefts]
        grads.composer.WR += dp.T @ reps[sched.internal_rights]
        grads.composer.b += dp.sum(axis=0)

    trace.err_rep = err_rep
    trace.err_mem = err_mem
    return grads


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_model(model: Model, path: Union[str, Path]) -> Path:
    """One JSON header line, then each block's raw <f8 bytes in order."""
    path = Path(path)
    blocks = [("embeddings", model.embeddings)] + model.dense_blocks()
    header = {
        "format": _FORMAT_NAME,
        "version": _FORMAT_VERSION,
        "kind": model.kind,
        "n": model.n,
        "seed": model.seed,
        "blocks": [[name, list(arr.shape)] for name, arr in blocks],
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("ascii"))
        for _, arr in blocks:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return path


def load_model(path: Union[str, Path]) -> Model:
    path = Path(path)
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not a model checkpoint ({exc})") from None
        if header.get("format") != _FORMAT_NAME:
            raise ValueError(f"{path}: not a model checkpoint")
        if header.get("version") != _FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
        kind = check_kind(header["kind"])
        n = int(header["n"])
        arrays = {}
        for name, shape in header["blocks"]:
            shape = tuple(int(s) for s in shape)
            count = int(np.prod(shape))
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError(f"{path}: truncated block {name!r}")
            arrays[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after final block")

    def grab(name: str, shape: tuple) -> np.ndarray:
        if name not in arrays:
            raise ValueError(f"{path}: missing block {name!r}")
        if arrays[name].shape != shape:
            raise ValueError(
                f"{path}: block {name!r} has shape {arrays[name].shape}, expected {shape}"
            )
        return arrays[name]

    embeddings = grab("embeddings", (EMBED_ROWS, n))
    if kind == "rnn":
        composer: Composer = RnnComposer(
            W=grab("composer.W", (n, 2 * n)), b=grab("composer.b", (n,))
        )
    else:
        composer = RlstmComposer(
            WL=grab("composer.WL", (5 * n, n)),
            WR=grab("composer.WR", (5 * n, n)),
            b=grab("composer.b", (5 * n,)),
        )
    classifier = Classifier(
        W=grab("classifier.W", (NUM_CLASSES, n)), b=grab("classifier.b", (NUM_CLASSES,))
    )
    seed = header.get("seed")
    return Model(kind=kind, n=n, embeddings=embeddings, composer=composer,
                 classifier=classifier, seed=None if seed is None else int(seed))


def clone_model(model: Model) -> Model:
    """Deep copy of all parameter arrays (used for best-epoch snapshots)."""
    if model.kind == "rnn":
        composer: Composer = RnnComposer(W=model.composer.W.copy(), b=model.composer.b.copy())
    else:
        composer = RlstmComposer(
            WL=model.composer.WL.copy(),
            WR=model.composer.WR.copy(),
            b=model.composer.b.copy(),
        )
    return Model(
        kind=model.kind,
        n=model.n,
        embeddings=model.embeddings.copy(),
        composer=composer,
        classifier=Classifier(W=model.classifier.W.copy(), b=model.classifier.b.copy()),
        seed=model.seed,
    )


def models_equal(a: Model, b: Model) -> bool:
    if a.kind != b.kind or a.n != b.n:
        return False
    if not np.array_equal(a.embeddings, b.embeddings):
        return False
    for (name_a, arr_a), (name_b, arr_b) in zip(a.dense_blocks(), b.dense_blocks()):
        if name_a != name_b or not np.array_equal(arr_a, arr_b):
            return False
    return True
