"""CART decision trees on binary multi-hot features, and SVM -> tree transfer.

Splits test feature presence: absent goes left, present goes right.  The
split with the largest Gini decrease wins, ties to the lowest feature index.
An impure node is always split while some feature separates its samples, so
a fully grown tree fits any training set without contradictory duplicates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import EmptyData, SingleClass, ValidationError
from .features import EncodedExample, Vocabulary
from .metrics import confusion
from .seeding import derive_seed
from .svm import Hyperparams, Packed, SvmModel, as_packed, predict_many, train_centralized

_GAIN_TIE = 1e-12


@dataclass
class Node:
    feature_index: int = -1
    left: int = -1
    right: int = -1
    label: int = -1
    support: int = 0
    positives: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.feature_index < 0


@dataclass
class TreeParams:
    max_depth: int | None = None
    min_samples_leaf: int = 1

    def validate(self) -> None:
        if self.max_depth is not None and self.max_depth < 0:
            raise ValidationError("tree.max_depth must be >= 0")
        if self.min_samples_leaf < 1:
            raise ValidationError("tree.min_samples_leaf must be >= 1")


@dataclass
class DecisionTree:
    nodes: list[Node]
    root: int = 0
    params: TreeParams = field(default_factory=TreeParams)
    n_features: int = 0

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def depth(self) -> int:
        deepest, stack = 0, [(self.root, 0)]
        while stack:
            i, d = stack.pop()
            n = self.nodes[i]
            if n.is_leaf:
                deepest = max(deepest, d)
            else:
                stack += [(n.left, d + 1), (n.right, d + 1)]
        return deepest

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "n_features": self.n_features,
            "params": {"max_depth": self.params.max_depth, "min_samples_leaf": self.params.min_samples_leaf},
            "nodes": [
                {"feature": n.feature_index, "left": n.left, "right": n.right}
                if not n.is_leaf else {"label": n.label, "support": n.support}
                for n in self.nodes
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        nodes = [Node(feature_index=n["feature"], left=n["left"], right=n["right"]) if "feature" in n
                 else Node(label=n["label"], support=n["support"]) for n in d["nodes"]]
        p = d.get("params", {})
        return cls(nodes, d["root"], TreeParams(p.get("max_depth"), p.get("min_samples_leaf", 1)),
                   d.get("n_features", 0))

    def to_dot(self, vocab: Vocabulary | None = None, name: str = "tree") -> str:
        """Graphviz rendering; edges are labeled by feature absence/presence."""
        lines = [f"digraph {name} {{", "  node [shape=box, fontname=\"Helvetica\"];"]
        for i, n in enumerate(self.nodes):
            if n.is_leaf:
                lines.append(f'  n{i} [label="label={n.label:+d}\\nsamples={n.support}", style=rounded];')
            else:
                feat = str(vocab.features[n.feature_index]) if vocab is not None else f"f{n.feature_index}"
                feat = feat.replace("\\", "\\\\").replace('"', '\\"')
                lines.append(f'  n{i} [label="{feat}"];')
                lines.append(f'  n{i} -> n{n.left} [label="absent"];')
                lines.append(f'  n{i} -> n{n.right} [label="present"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _dense(X: Packed, dim: int) -> np.ndarray:
    m = sp.csr_matrix((np.ones(X.indices.shape[0], dtype=np.int32), X.indices, X.indptr), shape=(X.n, dim))
    return m.toarray().astype(bool)


def _leaf(y: np.ndarray) -> Node:
    pos = int(np.sum(y == 1))
    neg = int(y.shape[0] - pos)
    # majority vote, ties to -1
    return Node(label=1 if pos > neg else -1, support=int(y.shape[0]), positives=pos)


def _best_split(sub: np.ndarray, yr: np.ndarray, depth: int, params: TreeParams) -> int | None:
    n = yr.shape[0]
    pos = int(np.sum(yr == 1))
    if pos in (0, n):
        return None
    if params.max_depth is not None and depth >= params.max_depth:
        return None
    if n < 2 * params.min_samples_leaf:
        return None
    n_r = sub.sum(axis=0).astype(np.float64)
    p_r = sub[yr == 1].sum(axis=0).astype(np.float64)
    n_l = n - n_r
    p_l = pos - p_r
    valid = (n_l >= params.min_samples_leaf) & (n_r >= params.min_samples_leaf)
    if not valid.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        # weighted child impurity: sum over children of 2 p q / n
        imp_l = np.where(n_l > 0, 2.0 * p_l * (n_l - p_l) / n_l, 0.0)
        imp_r = np.where(n_r > 0, 2.0 * p_r * (n_r - p_r) / n_r, 0.0)
    parent = 2.0 * pos * (n - pos) / n
    gain = np.where(valid, (parent - imp_l - imp_r) / n, -np.inf)
    return int(np.flatnonzero(gain >= gain.max() - _GAIN_TIE)[0])


def train_tree(examples, params: TreeParams | None = None, seed: int = 0,
               n_features: int | None = None, labels: Sequence[int] | None = None) -> DecisionTree:
    """Greedy Gini induction.  ``labels`` overrides the examples' own labels.

    The result does not depend on ``seed`` (ties are broken by feature index);
    the argument is accepted for interface symmetry with the other trainers.
    """
    params = params or TreeParams()
    params.validate()
    X = as_packed(examples)
    if X.n == 0:
        raise EmptyData("cannot grow a tree on no examples")
    dim = n_features if n_features is not None else X.max_index() + 1
    y = X.labels.astype(int) if labels is None else np.asarray(labels, dtype=int)
    if y.shape[0] != X.n:
        raise ValidationError("labels length differs from example count")
    M = _dense(X, max(dim, 1))
    nodes: list[Node] = []
    # preorder construction; (rows, depth, parent, side)
    stack = [(np.arange(X.n), 0, -1, "")]
    while stack:
        rows, depth, parent, side = stack.pop()
        me = len(nodes)
        if parent >= 0:
            setattr(nodes[parent], side, me)
        yr = y[rows]
        node = _leaf(yr)
        nodes.append(node)
        f = _best_split(M[rows], yr, depth, params)
        if f is None:
            continue
        mask = M[rows, f]
        nodes[me] = Node(feature_index=f, label=node.label, support=node.support, positives=node.positives)
        stack.append((rows[mask], depth + 1, me, "right"))
        stack.append((rows[~mask], depth + 1, me, "left"))
    return DecisionTree(nodes, 0, params, dim)


def predict_tree(tree: DecisionTree, example) -> int:
    present = set(example.indices if isinstance(example, EncodedExample) else example)
    node = tree.nodes[tree.root]
    while not node.is_leaf:
        node = tree.nodes[node.right if node.feature_index in present else node.left]
    return node.label


def predict_tree_many(tree: DecisionTree, examples) -> np.ndarray:
    if isinstance(examples, Packed):
        rows = [examples.indices[examples.indptr[i]:examples.indptr[i + 1]] for i in range(examples.n)]
        return np.array([predict_tree(tree, r.tolist()) for r in rows], dtype=int)
    return np.array([predict_tree(tree, e) for e in examples], dtype=int)


@dataclass
class TransferReport:
    teacher_f1: float
    student_f1: float
    fidelity: float
    student_train_fidelity: float
    direct_f1: float
    student_nodes: int
    direct_nodes: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def knowledge_transfer(examples: Sequence[EncodedExample], svm_hyper: Hyperparams, passes: int,
                       dim: int, tree_params: TreeParams | None = None, seed: int = 0,
                       teacher: SvmModel | None = None):
    """Teacher SVM on 40%, student tree on another 40% relabeled by the teacher.

    Both are scored on the last 20% with true labels; ``fidelity`` is the
    teacher/student agreement rate there.  A tree grown directly on the
    student slice's true labels is included for size comparison.  Pass
    ``teacher`` to skip training it.
    """
    if not examples:
        raise EmptyData("knowledge transfer needs examples")
    if len(examples) < 10:
        raise EmptyData("knowledge transfer needs at least 10 examples")
    if len({e.label for e in examples}) < 2:
        raise SingleClass("knowledge transfer needs both labels")
    order = np.random.default_rng(derive_seed(seed, "transfer")).permutation(len(examples))
    n = len(examples)
    a, b = int(0.4 * n + 0.5), int(0.8 * n + 0.5)
    slice_a = [examples[i] for i in order[:a]]
    slice_b = [examples[i] for i in order[a:b]]
    slice_c = [examples[i] for i in order[b:]]
    if teacher is None:
        teacher = train_centralized(slice_a, svm_hyper, passes, dim)
    Xb, Xc = Packed(slice_b), Packed(slice_c)
    relabel = predict_many(teacher, Xb)
    student = train_tree(Xb, tree_params, seed, n_features=dim, labels=relabel)
    direct = train_tree(Xb, tree_params, seed, n_features=dim)
    truth = Xc.labels.astype(int)
    t_pred = predict_many(teacher, Xc)
    s_pred = predict_tree_many(student, Xc)
    report = TransferReport(
        teacher_f1=confusion(t_pred, truth).f1,
        student_f1=confusion(s_pred, truth).f1,
        fidelity=float(np.mean(t_pred == s_pred)) if Xc.n else 1.0,
        student_train_fidelity=float(np.mean(predict_tree_many(student, Xb) == relabel)),
        direct_f1=confusion(predict_tree_many(direct, Xc), truth).f1,
        student_nodes=student.node_count,
        direct_nodes=direct.node_count,
    )
    return teacher, student, report


__all__ = ["Node", "TreeParams", "DecisionTree", "train_tree", "predict_tree", "predict_tree_many",
           "TransferReport", "knowledge_transfer"]
