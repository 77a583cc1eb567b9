"""Federated Averaging of linear SVMs across simulated clients.

Round ``t``: sample ``m = max(floor(C*K), 1)`` clients, run
:func:`fedpkt.svm.client_update` on each from the current global model, then
average the returned weights with weights ``n_k / sum(n_k)`` over the
participants.  Per-client SGD streams are seeded by
``derive_seed(seed, round, client_id)`` so results do not depend on how many
worker threads run the updates.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import ClientTooSmall, DimensionMismatch, EmptyUpdateSet, ValidationError, VocabMismatch
from .metrics import confusion
from .partition import ClientDataset
from .seeding import derive_seed, rng_for
from .svm import Hyperparams, Packed, SvmModel, client_update, predict_many

EVAL_SETS = ("union_test", "per_client_test", "both")
AGGREGATIONS = ("participants", "all_clients")


@dataclass
class FedConfig:
    K: int = 5
    C: float = 1.0
    B: int | None = 10
    E: int = 1
    R_max: int = 800
    eta: float = 0.1
    lam: float = 0.0
    seed: int = 0
    target_f1: float | None = None
    eval_set: str = "union_test"
    aggregation: str = "participants"
    workers: int = 1

    def validate(self) -> None:
        if self.K < 1:
            raise ValidationError("federated.K must be >= 1")
        if not 0.0 < self.C <= 1.0:
            raise ValidationError(f"federated.C must lie in (0, 1], got {self.C}")
        if self.B is not None and (isinstance(self.B, float) and math.isinf(self.B)):
            self.B = None
        if self.B is not None and self.B < 1:
            raise ValidationError("federated.B must be a positive integer or infinity")
        if self.E < 1:
            raise ValidationError("federated.E must be >= 1")
        if self.R_max < 1:
            raise ValidationError("federated.R_max must be >= 1")
        if not self.eta > 0:
            raise ValidationError("federated.eta must be > 0")
        if self.lam < 0:
            raise ValidationError("federated.lambda must be >= 0")
        if self.target_f1 is not None and not 0.0 <= self.target_f1 <= 1.0:
            raise ValidationError("federated.target_f1 must lie in [0, 1]")
        if self.eval_set not in EVAL_SETS:
            raise ValidationError(f"federated.eval_set must be one of {EVAL_SETS}")
        if self.aggregation not in AGGREGATIONS:
            raise ValidationError(f"federated.aggregation must be one of {AGGREGATIONS}")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")

    @property
    def m(self) -> int:
        return max(math.floor(self.C * self.K + 1e-9), 1)

    def hyper(self, seed: int) -> Hyperparams:
        return Hyperparams(eta=self.eta, lam=self.lam, batch_size=self.B, epochs=self.E, seed=seed)


@dataclass
class RoundLog:
    round: int
    selected_clients: list[int]
    global_f1_union: float | None
    per_client_f1: dict[int, float] | None = None
    wall_time_ms: int = 0

    def to_record(self, timing: bool = False) -> dict:
        rec = {"round": self.round, "selected_clients": self.selected_clients,
               "global_f1_union": self.global_f1_union}
        if self.per_client_f1 is not None:
            rec["per_client_f1"] = {str(k): v for k, v in sorted(self.per_client_f1.items())}
        if timing:
            rec["wall_time_ms"] = self.wall_time_ms
        return rec


@dataclass
class RunResult:
    final_model: SvmModel
    logs: list[RoundLog] = field(default_factory=list)
    rounds_to_target: int | None = None
    reached_target: bool = False

    def rounds_for(self, target: float) -> int | None:
        """First logged round whose union F1 reaches ``target``."""
        for log in self.logs:
            if log.global_f1_union is not None and log.global_f1_union >= target:
                return log.round
        return None


def sample_clients(K: int, C: float, rng: np.random.Generator) -> list[int]:
    m = max(math.floor(C * K + 1e-9), 1)
    return sorted(int(i) for i in rng.choice(K, size=m, replace=False))


def aggregate(updates: Sequence[tuple[SvmModel, int]]) -> SvmModel:
    """Data-size weighted average of model weights.

    Updates are put in a canonical order and averaged as offsets from the
    first, so the result is exactly permutation invariant and averaging
    identical models returns them bit for bit.
    """
    if not updates:
        raise EmptyUpdateSet("no client updates to aggregate")
    dims = {m.dim for m, _ in updates}
    if len(dims) != 1:
        raise DimensionMismatch(f"updates have dimensions {sorted(dims)}")
    if any(n < 1 for _, n in updates):
        raise ClientTooSmall("every update needs n_k >= 1")
    ordered = sorted(updates, key=lambda u: (u[1], u[0].weights.tobytes()))
    total = float(sum(n for _, n in ordered))
    ref = ordered[0][0].weights
    acc = np.zeros_like(ref)
    for model, n in ordered:
        acc += (n / total) * (model.weights - ref)
    first = ordered[0][0]
    return SvmModel(ref + acc, first.vocab_fingerprint, max(m.trained_rounds for m, _ in ordered))


class _Evaluator:
    def __init__(self, clients: Sequence[ClientDataset], eval_set: str):
        self.eval_set = eval_set
        tests = [e for c in clients for e in c.test]
        self.union = Packed(tests) if tests else None
        self.per_client = {c.client_id: Packed(c.test) for c in clients if c.test} \
            if eval_set in ("per_client_test", "both") else {}

    @staticmethod
    def f1(model: SvmModel, X: Packed) -> float:
        return confusion(predict_many(model, X), X.labels.astype(int)).f1

    def __call__(self, model: SvmModel) -> tuple[float | None, dict[int, float] | None]:
        union = self.f1(model, self.union) if self.union is not None else None
        per = {cid: self.f1(model, X) for cid, X in self.per_client.items()} if self.per_client else None
        return union, per


def run_federated(clients: Sequence[ClientDataset], config: FedConfig, dim: int,
                  vocab_fingerprint: str = "",
                  client_fingerprints: Sequence[str] | None = None,
                  on_round: Callable[[RoundLog, SvmModel], None] | None = None) -> RunResult:
    """Simulate Federated SVM training; deterministic in (clients, config).

    Training stops at ``R_max`` or, when ``target_f1`` is set, at the first
    round whose union-test F1 reaches it (mean per-client F1 instead when
    ``eval_set == "per_client_test"``).
    """
    config = replace(config)
    config.validate()
    if len(clients) != config.K:
        raise ValidationError(f"federated.K={config.K} but {len(clients)} clients supplied")
    if client_fingerprints is not None and len(set(client_fingerprints) | {vocab_fingerprint}) > 1:
        raise VocabMismatch("clients were encoded against different vocabularies")
    for c in clients:
        if c.n_k == 0:
            raise ClientTooSmall(f"client {c.client_id} has no training data")
    packed = [Packed(c.train) for c in clients]
    for X in packed:
        if X.max_index() >= dim:
            raise DimensionMismatch(f"client feature index {X.max_index()} outside dimension {dim}")
    sizes = [c.n_k for c in clients]
    evaluate = _Evaluator(clients, config.eval_set)

    w = SvmModel.zeros(dim, vocab_fingerprint)
    result = RunResult(final_model=w)
    pool = ThreadPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for t in range(1, config.R_max + 1):
            t0 = time.perf_counter()
            selected = sample_clients(config.K, config.C, rng_for(config.seed, "sample", t))

            def work(k, w=w, t=t):
                return client_update(w, packed[k], config.hyper(derive_seed(config.seed, t, k)))

            if pool is not None:
                new_models = list(pool.map(work, selected))
            else:
                new_models = [work(k) for k in selected]
            updates = [(m, sizes[k]) for m, k in zip(new_models, selected)]
            if config.aggregation == "all_clients":
                chosen = set(selected)
                updates += [(w, sizes[k]) for k in range(config.K) if k not in chosen]
            agg = aggregate(updates)
            w = SvmModel(agg.weights, vocab_fingerprint, t)

            union_f1, per_f1 = evaluate(w)
            log = RoundLog(t, selected, union_f1, per_f1, int((time.perf_counter() - t0) * 1000))
            result.logs.append(log)
            if on_round is not None:
                on_round(log, w)
            score = union_f1
            if config.eval_set == "per_client_test" and per_f1:
                score = float(np.mean([per_f1[k] for k in sorted(per_f1)]))
            if config.target_f1 is not None and score is not None and score >= config.target_f1:
                result.rounds_to_target = t
                result.reached_target = True
                break
    finally:
        if pool is not None:
            pool.shutdown()
    result.final_model = w
    return result


def round_log_lines(logs: Sequence[RoundLog], timing: bool = False) -> str:
    """Line-delimited JSON, one record per round; timing is opt-in to keep logs reproducible."""
    return "".join(json.dumps(l.to_record(timing), sort_keys=True) + "\n" for l in logs)


@dataclass
class SweepRow:
    C: float
    B: int | None
    E: int
    rounds: list[int | None]

    @property
    def reached(self) -> list[int]:
        return [r for r in self.rounds if r is not None]

    @property
    def censored_runs(self) -> int:
        return sum(r is None for r in self.rounds)

    @property
    def mean_rounds(self) -> float | None:
        ok = self.reached
        return sum(ok) / len(ok) if ok else None

    @property
    def min_rounds(self) -> int | None:
        return min(self.reached) if self.reached else None

    @property
    def max_rounds(self) -> int | None:
        return max(self.reached) if self.reached else None


def rounds_to_target_sweep(clients: Sequence[ClientDataset], base: FedConfig, dim: int,
                           grid: Sequence[tuple[float, int | None, int]], runs: int = 5,
                           vocab_fingerprint: str = "") -> list[SweepRow]:
    """Rounds-to-target statistics for every (C, B, E) grid point.

    Run ``r`` of every grid point uses seed ``derive_seed(base.seed, "sweep", r)``;
    runs that never reach the target within ``R_max`` are censored.
    """
    if not grid:
        raise ValidationError("sweep grid is empty")
    if base.target_f1 is None:
        raise ValidationError("sweep needs federated.target_f1")
    rows = []
    for C, B, E in grid:
        rounds = []
        for r in range(runs):
            cfg = replace(base, C=C, B=B, E=E, seed=derive_seed(base.seed, "sweep", r))
            rounds.append(run_federated(clients, cfg, dim, vocab_fingerprint).rounds_to_target)
        rows.append(SweepRow(C, B, E, rounds))
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["C", "B", "E", "mean_rounds", "min_rounds", "max_rounds", "censored_runs"])
    for r in rows:
        mean = "" if r.mean_rounds is None else f"{r.mean_rounds:.6g}"
        wr.writerow([f"{r.C:g}", "inf" if r.B is None else r.B, r.E, mean,
                     "" if r.min_rounds is None else r.min_rounds,
                     "" if r.max_rounds is None else r.max_rounds, r.censored_runs])
    return buf.getvalue()


@dataclass
class CrowdPoint:
    k: int
    f1_subset: float
    f1_all: float


def crowdsourcing_curve(clients: Sequence[ClientDataset], config: FedConfig, dim: int,
                        runs: int = 5, vocab_fingerprint: str = "") -> list[CrowdPoint]:
    """Federate over the first k clients (C=1) for k = 1..K.

    ``clients`` must be sorted by ascending training size.  Per-round F1 is
    averaged over ``runs`` seeded runs on the k clients' test union and on
    the test union of all clients; each point reports the best such average.
    """
    sizes = [c.n_k for c in clients]
    if sizes != sorted(sizes):
        raise ValidationError("clients must be sorted by ascending training size")
    everyone = Packed([e for c in clients for e in c.test])
    points = []
    for k in range(1, len(clients) + 1):
        subset = [replace(c, client_id=i) for i, c in enumerate(clients[:k])]
        sub_curves, all_curves = [], []
        for r in range(runs):
            cfg = replace(config, K=k, C=1.0, target_f1=None, eval_set="union_test",
                          seed=derive_seed(config.seed, "crowd", r))
            f1_all: list[float] = []
            res = run_federated(subset, cfg, dim, vocab_fingerprint,
                                on_round=lambda log, model: f1_all.append(_Evaluator.f1(model, everyone)))
            sub_curves.append([l.global_f1_union for l in res.logs])
            all_curves.append(f1_all)
        points.append(CrowdPoint(k, float(np.mean(sub_curves, axis=0).max()),
                                 float(np.mean(all_curves, axis=0).max())))
    return points
