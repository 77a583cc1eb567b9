"""Confusion counts and positive-class F1."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyData, LengthMismatch


@dataclass(frozen=True)
class EvalReport:
    """Counts plus derived metrics; every zero denominator yields 0."""

    tp: int
    fp: int
    fn: int
    tn: int
    eval_set_name: str = ""
    runs: int = 1

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else 0.0

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(precision=self.precision, recall=self.recall, f1=self.f1)
        return d


def confusion(predictions: Sequence[int], truths: Sequence[int], eval_set_name: str = "") -> EvalReport:
    p = np.asarray(predictions)
    t = np.asarray(truths)
    if p.shape != t.shape:
        raise LengthMismatch(f"{p.shape[0] if p.ndim else 0} predictions vs {t.shape[0] if t.ndim else 0} truths")
    if p.size == 0:
        raise EmptyData("cannot score an empty prediction list")
    pp, tp_ = p == 1, t == 1
    return EvalReport(
        tp=int(np.sum(pp & tp_)),
        fp=int(np.sum(pp & ~tp_)),
        fn=int(np.sum(~pp & tp_)),
        tn=int(np.sum(~pp & ~tp_)),
        eval_set_name=eval_set_name,
    )


def f1_score(predictions, truths) -> float:
    return confusion(predictions, truths).f1
