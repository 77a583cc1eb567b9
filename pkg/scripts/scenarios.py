"""Run the standard scenario set on a generated corpus and print markdown tables.

    python scripts/scenarios.py --n 5000 --noise 0.05 --runs 5 --out scenarios-out

Use ``--trace`` to point at a canonical JSONL trace instead of the planted corpus.
"""
import argparse
import json
import logging
from dataclasses import replace
from pathlib import Path
from statistics import fmean as mean

from fedpkt.experiment import ExperimentSpec, client_datasets, emit_report, featurize, run_experiment
from fedpkt.federated import FedConfig, crowdsourcing_curve, rounds_to_target_sweep, sweep_csv
from fedpkt.partition import SplitSpec
from fedpkt.svm import Hyperparams, coefficients_csv, top_coefficients
from fedpkt.synth import planted_corpus
from fedpkt.trace import parse_trace, summarize

log = logging.getLogger("scenarios")


def table(rows, head):
    out = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    out += ["| " + " | ".join(str(c) for c in r) + " |" for r in rows]
    return "\n".join(out)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trace", type=Path)
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--noise", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--tasks", default="pii,ad")
    ap.add_argument("--out", type=Path, default=Path("scenarios-out"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args.out.mkdir(parents=True, exist_ok=True)

    if args.trace:
        packets, _ = parse_trace(args.trace, "skip_invalid")
    else:
        packets = planted_corpus(n=args.n, seed=args.seed, noise=args.noise)
    s = summarize(packets)
    print("## Corpus\n")
    print(table([[s.packet_count, f"{s.positive_ad}/{s.positive_pii}", s.uri_key_count, s.cookie_key_count,
                  s.custom_header_count, s.distinct_domains, s.app_count]],
                ["packets", "ads/pii", "uri keys", "cookie keys", "custom headers", "domains", "apps"]))

    for task in args.tasks.split(","):
        base = ExperimentSpec(task=task, runs=args.runs, seed=args.seed, name=task)
        print(f"\n## Task: {task}\n")

        log.info("[%s] centralized SVM vs decision tree", task)
        keep: dict = {}
        rows = []
        for fam in ("centralized", "dtree"):
            rep = run_experiment(replace(base, family=fam), packets, artifacts=keep)
            (args.out / f"{task}-{fam}.json").write_bytes(emit_report(rep, "json"))
            rows += [[r.trained_on, f"{r.f1_mean:.3f}", f"{mean(r.precision_runs):.3f}", f"{mean(r.recall_runs):.3f}"]
                     for r in rep.rows]
        print(table(rows, ["model", "F1", "precision", "recall"]))

        vocab = keep["vocab"]
        pos, neg = top_coefficients(keep["model"], vocab, 10)
        (args.out / f"{task}-coefficients.csv").write_text(coefficients_csv(keep["model"], vocab, 10))
        print("\nTop coefficients:\n")
        print(table([[str(p[0]), f"{p[1]:.3f}", str(q[0]), f"{q[1]:.3f}"] for p, q in zip(pos, neg)],
                    ["positive", "w", "negative", "w"]))

        log.info("[%s] local vs federated", task)
        for mode in ("even", "uneven"):
            split = SplitSpec(k=5, mode=mode)
            fed = FedConfig(K=5, C=1.0, B=10, E=5, R_max=50)
            rows = []
            for fam in ("local", "federated"):
                rep = run_experiment(replace(base, family=fam, split=split, fed=fed), packets)
                (args.out / f"{task}-{fam}-{mode}.json").write_bytes(emit_report(rep, "json"))
                rows += [[r.trained_on, r.tested_on, f"{r.f1_mean:.3f}"] for r in rep.rows]
            print(f"\nLocal vs federated ({mode} split):\n")
            print(table(rows, ["trained on", "tested on", "F1"]))

        log.info("[%s] rounds-to-target sweep", task)
        _, vocab, examples = featurize(base, packets)
        spec20 = replace(base, split=SplitSpec(k=20))
        clients = client_datasets(spec20, examples)
        grid = [(C, B, E) for C in (1.0, 0.2, 0.05) for B in (10, None) for E in (1, 5)]
        sweep = rounds_to_target_sweep(clients, FedConfig(K=20, R_max=400, target_f1=0.9, seed=args.seed),
                                       len(vocab), grid, runs=args.runs, vocab_fingerprint=vocab.fingerprint)
        (args.out / f"{task}-sweep.csv").write_text(sweep_csv(sweep))
        print("\nRounds to F1 0.9 (K=20):\n")
        print(table([[f"{r.C:g}", "inf" if r.B is None else r.B, r.E,
                      "-" if r.mean_rounds is None else f"{r.mean_rounds:.1f}", r.censored_runs] for r in sweep],
                    ["C", "B", "E", "mean rounds", "censored"]))

        log.info("[%s] crowdsourcing curve", task)
        crowd = sorted(client_datasets(replace(base, split=SplitSpec(k=10, mode="uneven")), examples),
                       key=lambda c: (c.n_k, c.client_id))
        pts = crowdsourcing_curve(crowd, FedConfig(K=10, B=10, E=5, R_max=20, seed=args.seed), len(vocab),
                                  runs=args.runs, vocab_fingerprint=vocab.fingerprint)
        print("\nCrowdsourcing (clients added smallest first):\n")
        print(table([[p.k, crowd[p.k - 1].n_k, f"{p.f1_subset:.3f}", f"{p.f1_all:.3f}"] for p in pts],
                    ["k", "n_k of newest", "F1 on their tests", "F1 on all tests"]))

        log.info("[%s] knowledge transfer", task)
        rep = run_experiment(replace(base, family="knowledge_transfer"), packets)
        (args.out / f"{task}-transfer.json").write_bytes(emit_report(rep, "json"))
        print("\nKnowledge transfer:\n")
        print(table([[r.trained_on, f"{r.f1_mean:.3f}"] for r in rep.rows], ["model", "F1"]))
        print("\n" + json.dumps({k: v for k, v in rep.extra.items() if k.endswith("_runs")}))


if __name__ == "__main__":
    main()
