"""End-to-end experiments and their reports.

An experiment is ingest -> featurize -> split -> train -> evaluate, repeated
``runs`` times.  Run ``r`` uses seed ``derive_seed(master_seed, r)``, so
adding runs never changes earlier ones.

Report JSON carries ``"schema": "fedpkt-report/1"``.  The CSV export has the
fixed column order in :data:`CSV_COLUMNS`.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .errors import ConfigInvalid, SingleClass
from .features import Featurizer, encode_corpus, load_standard_headers
from .federated import FedConfig, run_federated
from .metrics import EvalReport, confusion
from .partition import SplitSpec, balance, make_clients, train_test_split
from .seeding import derive_seed
from .svm import Hyperparams, Packed, predict_many, train_centralized
from .trace import HttpPacket, TASKS, parse_trace
from .tree import TreeParams, knowledge_transfer, predict_tree_many, train_tree

SCHEMA = "fedpkt-report/1"
FAMILIES = ("local", "centralized", "federated", "dtree", "knowledge_transfer")
CSV_COLUMNS = ["trained_on", "tested_on", "runs", "f1_mean", "f1_min", "f1_max",
               "precision_mean", "recall_mean", "f1_runs"]


@dataclass
class ExperimentSpec:
    dataset: str = ""
    task: str = "pii"
    mode: str = "http_keys"
    file_request: bool = True
    standard_headers: str | None = None
    strictness: str = "strict"
    family: str = "centralized"
    split: SplitSpec = field(default_factory=SplitSpec)
    svm: Hyperparams = field(default_factory=Hyperparams)
    passes: int = 5
    fed: FedConfig = field(default_factory=FedConfig)
    tree: TreeParams = field(default_factory=TreeParams)
    runs: int = 5
    seed: int = 0
    name: str = "experiment"

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigInvalid("data.task", f"must be one of {TASKS}")
        if self.family not in FAMILIES:
            raise ConfigInvalid("experiment.family", f"must be one of {FAMILIES}")
        if self.runs < 1:
            raise ConfigInvalid("experiment.runs", "must be >= 1")
        if self.passes < 0:
            raise ConfigInvalid("svm.passes", "must be >= 0")
        self.split.validate()
        self.tree.validate()
        if self.family == "federated":
            self.fed.validate()
            if self.fed.K != self.split.k:
                raise ConfigInvalid("federated.K", f"must equal split.k ({self.split.k})")


@dataclass
class ReportRow:
    trained_on: str
    tested_on: str
    f1_runs: list[float] = field(default_factory=list)
    precision_runs: list[float] = field(default_factory=list)
    recall_runs: list[float] = field(default_factory=list)

    def add(self, ev: EvalReport) -> None:
        self.f1_runs.append(ev.f1)
        self.precision_runs.append(ev.precision)
        self.recall_runs.append(ev.recall)

    @property
    def f1_mean(self) -> float:
        return statistics.fmean(self.f1_runs) if self.f1_runs else 0.0

    def to_dict(self) -> dict:
        return {"trained_on": self.trained_on, "tested_on": self.tested_on,
                "f1_runs": self.f1_runs, "precision_runs": self.precision_runs,
                "recall_runs": self.recall_runs, "f1_mean": self.f1_mean}


@dataclass
class ExperimentReport:
    name: str
    task: str
    family: str
    feature_mode: str
    n_features: int
    n_examples: int
    runs: int
    seed: int
    rows: list[ReportRow] = field(default_factory=list)
    rounds: dict | None = None
    extra: dict = field(default_factory=dict)

    def row(self, trained_on: str, tested_on: str) -> ReportRow:
        for r in self.rows:
            if r.trained_on == trained_on and r.tested_on == tested_on:
                return r
        r = ReportRow(trained_on, tested_on)
        self.rows.append(r)
        return r

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA, "name": self.name, "task": self.task, "family": self.family,
            "feature_mode": self.feature_mode, "n_features": self.n_features,
            "n_examples": self.n_examples, "runs": self.runs, "seed": self.seed,
            "rows": [r.to_dict() for r in self.rows], "rounds": self.rounds, "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        if d.get("schema") != SCHEMA:
            raise ConfigInvalid("report.schema", f"expected {SCHEMA!r}, got {d.get('schema')!r}")
        rows = [ReportRow(r["trained_on"], r["tested_on"], list(r["f1_runs"]),
                          list(r["precision_runs"]), list(r["recall_runs"])) for r in d["rows"]]
        return cls(d["name"], d["task"], d["family"], d["feature_mode"], d["n_features"],
                   d["n_examples"], d["runs"], d["seed"], rows, d.get("rounds"), d.get("extra") or {})

    def __eq__(self, other) -> bool:
        return isinstance(other, ExperimentReport) and self.to_dict() == other.to_dict()


def emit_report(report: ExperimentReport, fmt: str = "json") -> bytes:
    if fmt == "json":
        return (json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n").encode("utf-8")
    if fmt == "csv":
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(CSV_COLUMNS)
        for r in report.rows:
            f1s = r.f1_runs or [0.0]
            wr.writerow([r.trained_on, r.tested_on, len(r.f1_runs), repr(r.f1_mean), repr(min(f1s)),
                         repr(max(f1s)), repr(_mean(r.precision_runs)), repr(_mean(r.recall_runs)),
                         ";".join(repr(x) for x in r.f1_runs)])
        return buf.getvalue().encode("utf-8")
    if fmt in ("markdown", "markdown_table"):
        out = [f"**{report.name}**: task={report.task}, family={report.family}, "
               f"features={report.feature_mode} ({report.n_features}), runs={report.runs}", "",
               "| Trained on | Tested on | F1 |", "|---|---|---|"]
        out += [f"| {r.trained_on} | {r.tested_on} | {r.f1_mean:.3f} |" for r in report.rows]
        if report.rounds:
            rd = report.rounds
            mean = "n/a" if rd.get("mean") is None else f"{rd['mean']:.1f}"
            out += ["", f"Rounds to target F1 {rd.get('target')}: mean {mean}, "
                    f"min {rd.get('min')}, max {rd.get('max')}, censored {rd.get('censored', 0)}"]
        return ("\n".join(out) + "\n").encode("utf-8")
    raise ConfigInvalid("report.format", f"unknown format {fmt!r}")


def _mean(xs: Sequence[float]) -> float:
    return statistics.fmean(xs) if xs else 0.0


def load_packets(spec: ExperimentSpec, base_dir: Path | None = None) -> list[HttpPacket]:
    path = Path(spec.dataset)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    packets, _ = parse_trace(path, spec.strictness)
    return packets


def featurize(spec: ExperimentSpec, packets: Sequence[HttpPacket]):
    headers = load_standard_headers(spec.standard_headers)
    fz = Featurizer(mode=spec.mode, standard_headers=headers, file_request=spec.file_request).fit(packets)
    usable = [p for p in packets if p.label(spec.task) is not None]
    vocab = fz.build_vocabulary(usable)
    return fz, vocab, encode_corpus(usable, fz, vocab, spec.task)


def _score(pred, X: Packed, name: str) -> EvalReport:
    return confusion(pred, X.labels.astype(int), name)


def _maybe_balance(examples, seed, on: bool):
    if not on:
        return list(examples)
    try:
        return balance(examples, seed)
    except SingleClass:
        return list(examples)


def run_experiment(spec: ExperimentSpec, packets: Sequence[HttpPacket] | None = None,
                   base_dir: Path | None = None, round_logs: list | None = None,
                   artifacts: dict | None = None) -> ExperimentReport:
    """Run the configured pipeline ``spec.runs`` times and aggregate F1 per row.

    ``round_logs`` (federated only) collects ``(run, RoundLog)`` pairs.
    ``artifacts`` receives the vocabulary and the models trained in run 0.
    """
    spec.validate()
    if packets is None:
        packets = load_packets(spec, base_dir)
    if not any(p.label(spec.task) is not None for p in packets):
        raise ConfigInvalid("data.task", f"dataset has no {spec.task!r} labels")
    fz, vocab, examples = featurize(spec, packets)
    if not examples:
        raise ConfigInvalid("data.dataset", "no usable (labeled, non-keyless) packets")
    report = ExperimentReport(spec.name, spec.task, spec.family, spec.mode, len(vocab),
                              len(examples), spec.runs, spec.seed)
    rounds: list[int | None] = []
    keep = artifacts if artifacts is not None else {}
    keep["vocab"] = vocab
    for r in range(spec.runs):
        first = r == 0
        seed = derive_seed(spec.seed, r)
        hyper = replace(spec.svm, seed=derive_seed(seed, "svm"))
        if spec.family in ("centralized", "dtree"):
            train, test = train_test_split(examples, spec.split.train_frac, derive_seed(seed, "split"))
            train = _maybe_balance(train, derive_seed(seed, "balance"), spec.split.balance)
            test = _maybe_balance(test, derive_seed(seed, "balance-test"), spec.split.balance_test)
            Xt = Packed(test)
            if spec.family == "centralized":
                model = train_centralized(train, hyper, spec.passes, len(vocab), vocab.fingerprint)
                report.row("Centralized", "union test").add(_score(predict_many(model, Xt), Xt, "union"))
                if first:
                    keep["model"] = model
            else:
                tree = train_tree(train, spec.tree, seed, n_features=len(vocab))
                report.row("Decision Tree", "union test").add(_score(predict_tree_many(tree, Xt), Xt, "union"))
                report.extra.setdefault("tree_nodes_runs", []).append(tree.node_count)
                if first:
                    keep["tree"] = tree
        elif spec.family in ("local", "federated"):
            clients = make_clients(examples, replace(spec.split, seed=derive_seed(seed, "clients")))
            if first:
                keep["clients"] = clients
            if spec.family == "local":
                for c in clients:
                    model = train_centralized(c.train, hyper, spec.passes, len(vocab), vocab.fingerprint)
                    Xt = Packed(c.test)
                    report.row(f"Local user {c.client_id}", f"user {c.client_id} test").add(
                        _score(predict_many(model, Xt), Xt, f"user {c.client_id}"))
            else:
                cfg = replace(spec.fed, seed=derive_seed(seed, "fed"))
                res = run_federated(clients, cfg, len(vocab), vocab.fingerprint)
                if round_logs is not None:
                    round_logs.extend((r, log) for log in res.logs)
                rounds.append(res.rounds_to_target)
                if first:
                    keep["model"] = res.final_model
                for c in clients:
                    Xt = Packed(c.test)
                    report.row("Federated", f"user {c.client_id} test").add(
                        _score(predict_many(res.final_model, Xt), Xt, f"user {c.client_id}"))
                Xu = Packed([e for c in clients for e in c.test])
                report.row("Federated", "union test").add(_score(predict_many(res.final_model, Xu), Xu, "union"))
        else:
            pool = _maybe_balance(examples, derive_seed(seed, "balance"), spec.split.balance)
            teacher, student, tr = knowledge_transfer(pool, hyper, spec.passes, len(vocab), spec.tree, seed)
            if first:
                keep["model"], keep["tree"] = teacher, student
            for key, val in tr.to_dict().items():
                report.extra.setdefault(f"{key}_runs", []).append(val)
            # scored on the same held-out slice inside knowledge_transfer
            report.row("SVM teacher", "transfer test").f1_runs.append(tr.teacher_f1)
            report.row("DT student", "transfer test").f1_runs.append(tr.student_f1)
            report.row("DT direct", "transfer test").f1_runs.append(tr.direct_f1)
    if spec.family == "federated":
        ok = [x for x in rounds if x is not None]
        report.rounds = {
            "target": spec.fed.target_f1, "per_run": rounds,
            "mean": statistics.fmean(ok) if ok else None,
            "min": min(ok) if ok else None, "max": max(ok) if ok else None,
            "censored": len(rounds) - len(ok),
        }
    return report


def client_datasets(spec: ExperimentSpec, examples, run: int = 0):
    """Clients exactly as run ``run`` of a local/federated experiment builds them."""
    seed = derive_seed(spec.seed, run)
    return make_clients(examples, replace(spec.split, seed=derive_seed(seed, "clients")))


__all__ = ["ExperimentSpec", "ExperimentReport", "ReportRow", "run_experiment", "emit_report",
           "load_packets", "featurize", "client_datasets", "SCHEMA", "CSV_COLUMNS", "FAMILIES"]
