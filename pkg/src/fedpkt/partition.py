"""Seeded balancing, train/test splits and synthetic-client partitions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, TypeVar

import numpy as np

from .errors import EmptyData, InfeasibleSpec, SingleClass, TooManyClients, ValidationError
from .features import EncodedExample
from .seeding import derive_seed

T = TypeVar("T")


@dataclass
class SplitSpec:
    k: int = 1
    mode: str = "even"
    min_frac: float = 0.3
    seed: int = 0
    train_frac: float = 0.8
    balance: bool = True
    balance_test: bool = False

    def validate(self) -> None:
        if self.k < 1:
            raise ValidationError("split.k must be >= 1")
        if self.mode not in ("even", "uneven"):
            raise ValidationError(f"split.mode must be 'even' or 'uneven', got {self.mode!r}")
        if not 0.0 <= self.min_frac <= 1.0:
            raise ValidationError("split.min_frac must lie in [0, 1]")
        if not 0.0 < self.train_frac < 1.0:
            raise ValidationError("split.train_frac must lie in (0, 1)")


@dataclass
class ClientDataset:
    client_id: int
    train: list[EncodedExample]
    test: list[EncodedExample] = field(default_factory=list)

    @property
    def n_k(self) -> int:
        return len(self.train)


def _take(items: Sequence[T], order) -> list[T]:
    return [items[i] for i in order]


def balance(examples: Sequence[EncodedExample], seed: int) -> list[EncodedExample]:
    """Undersample the majority class to the minority size, then shuffle."""
    pos = [i for i, e in enumerate(examples) if e.label == 1]
    neg = [i for i, e in enumerate(examples) if e.label == -1]
    if not pos or not neg:
        raise SingleClass("balancing needs both labels present")
    rng = np.random.default_rng(seed)
    n = min(len(pos), len(neg))
    if len(pos) > n:
        pos = sorted(rng.choice(pos, size=n, replace=False).tolist())
    if len(neg) > n:
        neg = sorted(rng.choice(neg, size=n, replace=False).tolist())
    keep = np.array(pos + neg)
    return _take(examples, keep[rng.permutation(len(keep))])


def train_test_split(examples: Sequence[T], train_frac: float = 0.8, seed: int = 0) -> tuple[list[T], list[T]]:
    if not examples:
        raise EmptyData("cannot split an empty example list")
    if not 0.0 < train_frac < 1.0:
        raise ValidationError("train_frac must lie in (0, 1)")
    order = np.random.default_rng(seed).permutation(len(examples))
    n_train = math.floor(train_frac * len(examples) + 0.5)
    return _take(examples, order[:n_train]), _take(examples, order[n_train:])


def split_even(examples: Sequence[T], k: int, seed: int = 0) -> list[list[T]]:
    """Shuffle, then deal round-robin into ``k`` buckets."""
    if k < 1:
        raise ValidationError("k must be >= 1")
    if k > len(examples):
        raise TooManyClients(f"{k} clients for {len(examples)} examples")
    order = np.random.default_rng(seed).permutation(len(examples))
    return [_take(examples, order[i::k]) for i in range(k)]


def uneven_sizes(n: int, k: int, min_frac: float, rng: np.random.Generator) -> list[int]:
    """Random bucket sizes summing to ``n``, each at least ``min_frac * n / k``.

    Floors are allocated first; the remainder is spread by normalized uniform
    draws with largest-remainder rounding.
    """
    if not 0.0 <= min_frac <= 1.0:
        raise InfeasibleSpec(f"min_frac={min_frac} outside [0, 1]")
    if k > n:
        raise TooManyClients(f"{k} clients for {n} examples")
    floor = max(1, math.floor(min_frac * n / k + 1e-9))
    rest = n - floor * k
    if rest < 0:
        raise InfeasibleSpec(f"floor of {floor} per client exceeds {n} examples")
    u = rng.uniform(size=k)
    if min_frac >= 1.0:
        # all floors bind: the n mod k leftovers go one each, like round-robin dealing
        return [floor + (i < rest) for i in range(k)]
    share = rest * u / u.sum()
    extra = np.floor(share).astype(int)
    short = rest - int(extra.sum())
    # largest remainders get the leftover units; ties go to lower ids
    order = sorted(range(k), key=lambda i: (-(share[i] - extra[i]), i))
    for i in order[:short]:
        extra[i] += 1
    return [floor + int(e) for e in extra]


def split_uneven(examples: Sequence[T], k: int, seed: int = 0, min_frac: float = 0.3) -> list[list[T]]:
    rng = np.random.default_rng(seed)
    sizes = uneven_sizes(len(examples), k, min_frac, rng)
    order = rng.permutation(len(examples))
    out, start = [], 0
    for s in sizes:
        out.append(_take(examples, order[start:start + s]))
        start += s
    return out


def make_clients(examples: Sequence[EncodedExample], spec: SplitSpec) -> list[ClientDataset]:
    """Split into ``spec.k`` clients, then 80/20 per client, balancing each train set.

    A client whose train split holds a single label is left unbalanced.
    """
    spec.validate()
    if spec.mode == "even":
        buckets = split_even(examples, spec.k, spec.seed)
    else:
        buckets = split_uneven(examples, spec.k, spec.seed, spec.min_frac)
    clients = []
    for cid, bucket in enumerate(buckets):
        train, test = train_test_split(bucket, spec.train_frac, seed=derive_seed(spec.seed, "split", cid))
        if spec.balance:
            train = _try_balance(train, derive_seed(spec.seed, "balance", cid))
        if spec.balance_test:
            test = _try_balance(test, derive_seed(spec.seed, "balance-test", cid))
        clients.append(ClientDataset(cid, train, test))
    return clients


def _try_balance(examples, seed):
    try:
        return balance(examples, seed)
    except SingleClass:
        return list(examples)


def manifest(clients: Sequence[ClientDataset]) -> dict:
    """client_id -> packet ids, for replaying a realized split."""
    return {
        str(c.client_id): {
            "train": [e.origin_packet_id for e in c.train],
            "test": [e.origin_packet_id for e in c.test],
        }
        for c in clients
    }
