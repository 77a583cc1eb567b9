"""``fedpkt`` command line.

Every subcommand reads one TOML config (see :mod:`fedpkt.config`) and writes
its artifacts into ``experiment.output``.  Exit status is 0 on success, 1 on
a validation error and 2 on a data error; failures print one line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import Config, load_config, sweep_grid
from .convert import convert
from .errors import ConfigInvalid, DataError, FedpktError, ValidationError
from .experiment import (ExperimentSpec, ExperimentReport, client_datasets, emit_report, featurize,
                         load_packets, run_experiment)
from .features import extract_http_keys, load_standard_headers
from .federated import crowdsourcing_curve, rounds_to_target_sweep, sweep_csv
from .partition import manifest
from .svm import coefficients_csv, dump_model
from .trace import emit_trace, summarize

log = logging.getLogger("fedpkt")

SUBCOMMANDS = ("convert", "summarize", "featurize", "split", "train", "federate", "sweep",
               "crowdsource", "transfer", "report")
REPORT_EXT = {"json": "json", "csv": "csv", "markdown": "md", "markdown_table": "md"}


class Sink:
    """Collects artifacts; writes each atomically unless in dry-run mode."""

    def __init__(self, root: Path, dry_run: bool = False):
        self.root = root
        self.dry_run = dry_run
        self.planned: list[Path] = []

    def write(self, name, data: bytes | str) -> Path:
        path = Path(name) if Path(name).is_absolute() else self.root / name
        if isinstance(data, str):
            data = data.encode("utf-8")
        self.planned.append(path)
        if self.dry_run:
            return path
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        log.info("wrote %s (%d bytes)", path, len(data))
        return path


def _spec(cfg: Config, family: str | None = None) -> ExperimentSpec:
    spec = cfg.experiment_spec()
    if family is not None and spec.family != family:
        spec = replace(spec, family=family)
        spec.validate()
    return spec


def _need_dataset(spec: ExperimentSpec) -> None:
    if not spec.dataset:
        raise ConfigInvalid("data.path", "no dataset configured")


def _packets(spec: ExperimentSpec):
    _need_dataset(spec)
    return load_packets(spec)


def _write_report(sink: Sink, report: ExperimentReport) -> None:
    for fmt in ("json", "csv", "markdown_table"):
        sink.write(f"report.{REPORT_EXT[fmt]}", emit_report(report, fmt))


def cmd_convert(cfg: Config, sink: Sink) -> None:
    c = cfg["convert"]
    src = cfg.path("convert", "input")
    if sink.dry_run:
        sink.planned.append(cfg.path("convert", "output"))
        return
    packets, warnings = convert(c["format"], src, n=int(c["n"]), noise=float(c["noise"]),
                                seed=int(c["seed"]), strictness=cfg["data"]["strictness"])
    for w in warnings:
        log.warning("%s", w)
    sink.write(cfg.path("convert", "output"), emit_trace(packets))
    print(f"converted {len(packets)} packets ({len(warnings)} skipped)")


def cmd_summarize(cfg: Config, sink: Sink) -> None:
    spec = _spec(cfg)
    if sink.dry_run:
        sink.planned.append(sink.root / "summary.json")
        return
    packets = _packets(spec)
    headers = load_standard_headers(spec.standard_headers)
    s = summarize(packets, lambda p: extract_http_keys(p, headers, spec.file_request), word_counts=True)
    sink.write("summary.json", json.dumps(s.to_dict(), sort_keys=True, indent=2) + "\n")
    print(s.to_table(spec.name), end="")


def cmd_featurize(cfg: Config, sink: Sink) -> None:
    spec = _spec(cfg)
    if sink.dry_run:
        sink.planned += [sink.root / "vocab.tsv", sink.root / "features.json"]
        return
    packets = _packets(spec)
    _, vocab, examples = featurize(spec, packets)
    stats = {"mode": spec.mode, "task": spec.task, "n_features": len(vocab),
             "fingerprint": vocab.fingerprint, "n_packets": len(packets), "n_examples": len(examples),
             "n_positive": sum(e.label == 1 for e in examples)}
    sink.write("vocab.tsv", vocab.dumps())
    sink.write("features.json", json.dumps(stats, sort_keys=True, indent=2) + "\n")
    print(f"{len(vocab)} features, {len(examples)} usable examples of {len(packets)} packets")


def cmd_split(cfg: Config, sink: Sink) -> None:
    spec = _spec(cfg)
    if sink.dry_run:
        sink.planned.append(sink.root / "split_manifest.json")
        return
    _, _, examples = featurize(spec, _packets(spec))
    clients = client_datasets(spec, examples)
    sink.write("split_manifest.json", json.dumps(manifest(clients), sort_keys=True, indent=1) + "\n")
    for c in clients:
        print(f"client {c.client_id}: {len(c.train)} train / {len(c.test)} test")


def _experiment(cfg: Config, sink: Sink, spec: ExperimentSpec, extra_files: tuple[str, ...]):
    if sink.dry_run:
        sink.planned += [sink.root / f"report.{e}" for e in ("json", "csv", "md")]
        sink.planned += [sink.root / f for f in extra_files]
        return None, None, None
    logs: list = []
    art: dict = {}
    report = run_experiment(spec, _packets(spec), round_logs=logs, artifacts=art)
    _write_report(sink, report)
    print(emit_report(report, "markdown_table").decode("utf-8"), end="")
    return report, logs, art


def cmd_train(cfg: Config, sink: Sink) -> None:
    spec = _spec(cfg)
    if spec.family not in ("centralized", "dtree", "local"):
        raise ConfigInvalid("experiment.family", "train runs centralized, dtree or local; "
                            "use federate or transfer for the others")
    extra = {"centralized": ("model.svm", "coefficients.csv"), "dtree": ("tree.json", "tree.dot"),
             "local": ()}[spec.family]
    _, _, art = _experiment(cfg, sink, spec, extra)
    if art is None:
        return
    if "model" in art:
        sink.write("model.svm", dump_model(art["model"], spec.svm))
        sink.write("coefficients.csv", coefficients_csv(art["model"], art["vocab"], 20))
    if "tree" in art:
        sink.write("tree.json", art["tree"].to_json() + "\n")
        sink.write("tree.dot", art["tree"].to_dot(art["vocab"]))


def cmd_federate(cfg: Config, sink: Sink) -> None:
    spec = _spec(cfg, "federated")
    _, logs, art = _experiment(cfg, sink, spec, ("rounds.jsonl", "model.svm"))
    if art is None:
        return
    timing = bool(cfg["federated"]["log_timing"])
    lines = "".join(json.dumps({"run": r, **l.to_record(timing)}, sort_keys=True) + "\n" for r, l in logs)
    sink.write("rounds.jsonl", lines)
    sink.write("model.svm", dump_model(art["model"], spec.fed.hyper(spec.fed.seed)))


def cmd_transfer(cfg: Config, sink: Sink) -> None:
    spec = _spec(cfg, "knowledge_transfer")
    _, _, art = _experiment(cfg, sink, spec, ("teacher.svm", "student.json", "student.dot"))
    if art is None:
        return
    sink.write("teacher.svm", dump_model(art["model"], spec.svm))
    sink.write("student.json", art["tree"].to_json() + "\n")
    sink.write("student.dot", art["tree"].to_dot(art["vocab"], name="student"))


def _federated_clients(spec: ExperimentSpec):
    _, vocab, examples = featurize(spec, _packets(spec))
    return vocab, client_datasets(spec, examples)


def cmd_sweep(cfg: Config, sink: Sink) -> None:
    spec = _spec(cfg, "federated")
    grid = sweep_grid(cfg)
    if spec.fed.target_f1 is None:
        raise ConfigInvalid("federated.target_f1", "sweep needs a target F1")
    if sink.dry_run:
        sink.planned.append(sink.root / "sweep.csv")
        return
    vocab, clients = _federated_clients(spec)
    rows = rounds_to_target_sweep(clients, spec.fed, len(vocab), grid, int(cfg["sweep"]["runs"]),
                                  vocab.fingerprint)
    text = sweep_csv(rows)
    sink.write("sweep.csv", text)
    print(text, end="")


def cmd_crowdsource(cfg: Config, sink: Sink) -> None:
    spec = _spec(cfg, "federated")
    if sink.dry_run:
        sink.planned.append(sink.root / "crowdsource.csv")
        return
    vocab, clients = _federated_clients(spec)
    clients = sorted(clients, key=lambda c: (c.n_k, c.client_id))
    points = crowdsourcing_curve(clients, spec.fed, len(vocab), int(cfg["crowdsource"]["runs"]),
                                 vocab.fingerprint)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["k", "n_train", "f1_subset", "f1_all"])
    total = 0
    for pt, c in zip(points, clients):
        total += c.n_k
        wr.writerow([pt.k, total, f"{pt.f1_subset:.6f}", f"{pt.f1_all:.6f}"])
    sink.write("crowdsource.csv", buf.getvalue())
    print(buf.getvalue(), end="")


def cmd_report(cfg: Config, sink: Sink) -> None:
    src = cfg.path("report", "input") or sink.root / "report.json"
    fmt = cfg["report"]["format"]
    if fmt not in REPORT_EXT:
        raise ConfigInvalid("report.format", f"must be one of {sorted(REPORT_EXT)}")
    if sink.dry_run:
        return
    try:
        doc = json.loads(Path(src).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigInvalid("report.input", f"{src} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigInvalid("report.input", f"{src} is not JSON: {exc}") from None
    sys.stdout.write(emit_report(ExperimentReport.from_dict(doc), fmt).decode("utf-8"))


COMMANDS = {
    "convert": cmd_convert, "summarize": cmd_summarize, "featurize": cmd_featurize,
    "split": cmd_split, "train": cmd_train, "federate": cmd_federate, "sweep": cmd_sweep,
    "crowdsource": cmd_crowdsource, "transfer": cmd_transfer, "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", required=True, help="experiment TOML file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("--workers", type=int, default=None, help="concurrent client updates")
    common.add_argument("--dry-run", action="store_true", help="validate the config and list outputs only")
    common.add_argument("-v", "--verbose", action="count", default=0)
    ap = argparse.ArgumentParser(prog="fedpkt", description="Federated packet classifiers on HTTP key features.")
    ap.add_argument("--version", action="version", version=f"fedpkt {__version__}")
    sub = ap.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND")
    helps = {
        "convert": "convert a raw capture (or generate a planted corpus) to a canonical trace",
        "summarize": "print dataset statistics",
        "featurize": "build and save the vocabulary",
        "split": "partition into clients and save the split manifest",
        "train": "run a centralized, dtree or local experiment",
        "federate": "run a federated experiment",
        "sweep": "rounds-to-target over a (C, B, E) grid",
        "crowdsource": "federated F1 as more clients join",
        "transfer": "SVM to decision-tree knowledge transfer",
        "report": "re-render a saved report",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return ap


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="fedpkt: %(levelname)s: %(message)s", stream=sys.stderr)
    log.setLevel(level)
    overrides = list(args.overrides)
    if args.workers is not None:
        overrides.append(f"experiment.workers={args.workers}")
    try:
        cfg = load_config(args.config, overrides)
        sink = Sink(cfg.output_dir, args.dry_run)
        COMMANDS[args.subcommand](cfg, sink)
        if args.dry_run:
            print(f"config OK; {args.subcommand} would write:")
            for p in sink.planned:
                print(f"  {p}")
    except ValidationError as exc:
        _diag(exc)
        return 1
    except (DataError, OSError, UnicodeDecodeError) as exc:
        _diag(exc)
        return 2
    except FedpktError as exc:  # pragma: no cover
        _diag(exc)
        return 1
    return 0


def _diag(exc: BaseException) -> None:
    msg = " ".join(str(exc).split()) or type(exc).__name__
    print(f"fedpkt: error: {msg}", file=sys.stderr)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
