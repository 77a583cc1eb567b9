"""Linear SVM on multi-hot features, trained with minibatch hinge-loss SGD.

The model has no bias term.  One SGD step on batch ``b`` is::

    w <- w + (eta / |b|) * sum_{i in b, y_i (w . x_i) < 1} y_i x_i
    w <- (1 - 2 eta lambda) w          # only when lambda > 0

i.e. a descent step on the hinge loss with subgradient -y x on margin
violations, followed by an optional shrink for the L2 term.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, EmptyData, ValidationError
from .features import EncodedExample, Vocabulary

MODEL_MAGIC = b"FEDPKT-SVM/1\n"


@dataclass(frozen=True)
class Hyperparams:
    eta: float = 0.1
    lam: float = 0.0
    batch_size: int | None = 10  # None means B = infinity (one batch)
    epochs: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.eta > 0:
            raise ValidationError("eta must be > 0")
        if not self.lam >= 0:
            raise ValidationError("lambda must be >= 0")
        if self.batch_size is not None:
            if isinstance(self.batch_size, float) and math.isinf(self.batch_size):
                object.__setattr__(self, "batch_size", None)
            elif int(self.batch_size) < 1:
                raise ValidationError("batch_size must be a positive integer or infinity")
            else:
                object.__setattr__(self, "batch_size", int(self.batch_size))
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")


@dataclass(frozen=True, eq=False)
class SvmModel:
    weights: np.ndarray
    vocab_fingerprint: str = ""
    trained_rounds: int = 0

    @classmethod
    def zeros(cls, dim: int, vocab_fingerprint: str = "") -> "SvmModel":
        return cls(np.zeros(dim, dtype=np.float64), vocab_fingerprint)

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    def __eq__(self, other) -> bool:
        return (isinstance(other, SvmModel) and self.vocab_fingerprint == other.vocab_fingerprint
                and self.trained_rounds == other.trained_rounds
                and np.array_equal(self.weights, other.weights))


class Packed:
    """CSR view of a list of encoded examples plus their labels."""

    __slots__ = ("indptr", "indices", "lengths", "labels", "n")

    def __init__(self, examples: Sequence[EncodedExample]):
        lengths = np.fromiter((len(e.indices) for e in examples), dtype=np.int64, count=len(examples))
        self.lengths = lengths
        self.indptr = np.zeros(len(examples) + 1, dtype=np.int64)
        np.cumsum(lengths, out=self.indptr[1:])
        self.indices = np.fromiter((i for e in examples for i in e.indices), dtype=np.int64,
                                   count=int(self.indptr[-1]))
        self.labels = np.fromiter((e.label for e in examples), dtype=np.float64, count=len(examples))
        self.n = len(examples)

    def max_index(self) -> int:
        return int(self.indices.max()) if self.indices.size else -1

    def gather(self, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Flattened feature indices of ``rows`` and the batch-local row of each entry."""
        lens = self.lengths[rows]
        total = int(lens.sum())
        row_of = np.repeat(np.arange(rows.shape[0]), lens)
        offsets = np.arange(total) - np.repeat(np.cumsum(lens) - lens, lens)
        flat = self.indices[np.repeat(self.indptr[rows], lens) + offsets]
        return flat, row_of

    def matrix(self, dim: int) -> sp.csr_matrix:
        data = np.ones(self.indices.shape[0], dtype=np.float64)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, dim))


def as_packed(examples) -> Packed:
    return examples if isinstance(examples, Packed) else Packed(examples)


def _check_dim(model: SvmModel, indices) -> None:
    if len(indices) and max(indices) >= model.dim:
        raise DimensionMismatch(f"feature index {max(indices)} outside model dimension {model.dim}")


def margin(model: SvmModel, example: EncodedExample) -> float:
    _check_dim(model, example.indices)
    return float(example.label * model.weights[list(example.indices)].sum())


def hinge_loss(model: SvmModel, example: EncodedExample) -> float:
    return max(0.0, 1.0 - margin(model, example))


def subgradient(model: SvmModel, example: EncodedExample) -> dict[int, float]:
    """Hinge subgradient as a sparse {index: value} map (no L2 term)."""
    if margin(model, example) < 1.0:
        return {i: -float(example.label) for i in example.indices}
    return {}


def objective(model: SvmModel, examples: Sequence[EncodedExample], lam: float = 0.0) -> float:
    X = as_packed(examples)
    m = decision_values(model, X) * X.labels
    return float(np.maximum(0.0, 1.0 - m).sum() + lam * model.weights @ model.weights)


def _sgd_step(w: np.ndarray, X: Packed, rows: np.ndarray, eta: float) -> None:
    flat, row_of = X.gather(rows)
    y = X.labels[rows]
    margins = y * np.bincount(row_of, weights=w[flat], minlength=rows.shape[0])
    viol = margins < 1.0
    if not viol.any():
        return
    # integer label sums per coordinate are exact, so the step is a single rounding
    total = np.bincount(flat, weights=(y * viol)[row_of], minlength=w.shape[0])
    hit = np.flatnonzero(total)
    w[hit] += (eta / rows.shape[0]) * total[hit]


def client_update(model: SvmModel, examples, hyper: Hyperparams) -> SvmModel:
    """Run ``hyper.epochs`` passes of minibatch SGD from ``model``.

    Each epoch reshuffles with the ``hyper.seed`` stream and cuts batches of
    ``batch_size`` (the last may be short).  With a single batch per epoch no
    shuffle is drawn.  The input model is left untouched.
    """
    X = as_packed(examples)
    if X.n == 0:
        raise EmptyData("client_update needs at least one example")
    if X.max_index() >= model.dim:
        raise DimensionMismatch(f"feature index {X.max_index()} outside model dimension {model.dim}")
    w = model.weights.copy()
    rng = np.random.default_rng(hyper.seed)
    bs = X.n if hyper.batch_size is None else min(hyper.batch_size, X.n)
    shrink = 1.0 - 2.0 * hyper.eta * hyper.lam
    for _ in range(hyper.epochs):
        order = np.arange(X.n) if bs >= X.n else rng.permutation(X.n)
        for start in range(0, X.n, bs):
            _sgd_step(w, X, order[start:start + bs], hyper.eta)
            if hyper.lam > 0:
                w *= shrink
    if not np.all(np.isfinite(w)):
        raise ValidationError("SGD diverged (non-finite weights); lower eta")
    return SvmModel(w, model.vocab_fingerprint, model.trained_rounds + 1)


def train_centralized(examples, hyper: Hyperparams, passes: int, dim: int,
                      vocab_fingerprint: str = "") -> SvmModel:
    """Zero-initialized model trained with ``passes`` epochs over pooled data."""
    X = as_packed(examples)
    if X.n == 0:
        raise EmptyData("cannot train on an empty example list")
    zero = SvmModel.zeros(dim, vocab_fingerprint)
    if passes == 0:
        return zero
    return client_update(zero, X, replace(hyper, epochs=passes))


def decision_values(model: SvmModel, examples) -> np.ndarray:
    X = as_packed(examples)
    if X.max_index() >= model.dim:
        raise DimensionMismatch(f"feature index {X.max_index()} outside model dimension {model.dim}")
    return X.matrix(model.dim) @ model.weights


def predict(model: SvmModel, example) -> int:
    """+1 if w.x > 0 else -1; accepts an EncodedExample or a sequence of indices."""
    indices = example.indices if isinstance(example, EncodedExample) else tuple(example)
    _check_dim(model, indices)
    return 1 if model.weights[list(indices)].sum() > 0 else -1


def predict_many(model: SvmModel, examples) -> np.ndarray:
    return np.where(decision_values(model, examples) > 0, 1, -1)


def top_coefficients(model: SvmModel, vocab: Vocabulary, k: int):
    """The ``k`` largest weights (descending) and ``k`` smallest (ascending).

    Ties are broken by vocabulary order.
    """
    if len(vocab) != model.dim:
        raise DimensionMismatch("vocabulary and model sizes differ")
    k = min(k, model.dim)
    idx = np.arange(model.dim)
    desc = np.lexsort((idx, -model.weights))[:k]
    asc = np.lexsort((idx, model.weights))[:k]
    pos = [(vocab.features[i], float(model.weights[i])) for i in desc]
    neg = [(vocab.features[i], float(model.weights[i])) for i in asc]
    return pos, neg


def coefficients_csv(model: SvmModel, vocab: Vocabulary, k: int) -> str:
    pos, neg = top_coefficients(model, vocab, k)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["side", "rank", "kind", "token", "weight"])
    for side, rows in (("positive", pos), ("negative", neg)):
        for rank, (f, wt) in enumerate(rows, 1):
            wr.writerow([side, rank, f.kind, f.token, repr(wt)])
    return buf.getvalue()


def dump_model(model: SvmModel, hyper: Hyperparams | None = None) -> bytes:
    header = {
        "vocab_fingerprint": model.vocab_fingerprint,
        "dimension": model.dim,
        "trained_rounds": model.trained_rounds,
        "hyperparams": asdict(hyper) if hyper else None,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8") + b"\n"
    return MODEL_MAGIC + head + model.weights.astype("<f8").tobytes()


def load_model(blob: bytes) -> tuple[SvmModel, Hyperparams | None]:
    if not blob.startswith(MODEL_MAGIC):
        raise ValidationError("not a fedpkt model file")
    rest = blob[len(MODEL_MAGIC):]
    head, _, body = rest.partition(b"\n")
    meta = json.loads(head)
    dim = meta["dimension"]
    if len(body) != 8 * dim:
        raise ValidationError(f"model body has {len(body)} bytes, expected {8 * dim}")
    w = np.frombuffer(body, dtype="<f8").astype(np.float64)
    hyper = Hyperparams(**meta["hyperparams"]) if meta.get("hyperparams") else None
    return SvmModel(w, meta["vocab_fingerprint"], meta["trained_rounds"]), hyper


__all__ = [
    "Hyperparams", "SvmModel", "Packed", "as_packed", "hinge_loss", "subgradient", "margin",
    "objective", "client_update", "train_centralized", "decision_values", "predict",
    "predict_many", "top_coefficients", "coefficients_csv", "dump_model", "load_model",
]
