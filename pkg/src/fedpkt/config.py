"""Experiment config files.

A config is TOML with the sections below; every key is optional.  Relative
paths resolve against the config file's directory.  ``FEDPKT_SEED`` in the
environment replaces ``experiment.seed``; ``section.key=value`` overrides
from the command line are applied last (values parse as TOML literals, bare
words as strings).

    [experiment]  name, family, runs, seed, output, workers
    [data]        path, task, mode, file_request, standard_headers, strictness
    [split]       k, mode, min_frac, train_frac, balance, balance_test
    [svm]         eta, lambda, batch_size, passes
    [federated]   K, C, B, E, R_max, target_f1, eval_set, aggregation, log_timing
    [tree]        max_depth, min_samples_leaf
    [sweep]       C, B, E, runs
    [crowdsource] runs
    [report]      input, format
    [convert]     input, output, format, n, noise, seed

``B`` and ``batch_size`` accept ``"inf"``; ``max_depth`` accepts ``"inf"``
(grow until pure).
"""

from __future__ import annotations

import copy
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigInvalid
from .experiment import ExperimentSpec
from .federated import FedConfig
from .partition import SplitSpec
from .svm import Hyperparams
from .tree import TreeParams

DEFAULTS: dict[str, dict] = {
    "experiment": {"name": "experiment", "family": "centralized", "runs": 5, "seed": 0,
                   "output": "out", "workers": 1},
    "data": {"path": "", "task": "pii", "mode": "http_keys", "file_request": True,
             "standard_headers": "", "strictness": "strict"},
    "split": {"k": 5, "mode": "even", "min_frac": 0.3, "train_frac": 0.8, "balance": True,
              "balance_test": False},
    "svm": {"eta": 0.1, "lambda": 0.0, "batch_size": 10, "passes": 5},
    "federated": {"K": 0, "C": 1.0, "B": 10, "E": 5, "R_max": 800, "target_f1": -1.0,
                  "eval_set": "union_test", "aggregation": "participants", "log_timing": False},
    "tree": {"max_depth": "inf", "min_samples_leaf": 1},
    "sweep": {"C": [1.0, 0.5, 0.2], "B": [10], "E": [1, 5], "runs": 5},
    "crowdsource": {"runs": 5},
    "report": {"input": "", "format": "markdown_table"},
    "convert": {"input": "", "output": "trace.jsonl", "format": "canonical", "n": 5000,
                "noise": 0.0, "seed": 0},
}
PATH_KEYS = {("experiment", "output"), ("data", "path"), ("data", "standard_headers"),
             ("report", "input"), ("convert", "input"), ("convert", "output")}


@dataclass
class Config:
    values: dict[str, dict]
    base_dir: Path

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def path(self, section: str, key: str) -> Path | None:
        raw = self.values[section][key]
        if not raw:
            return None
        p = Path(raw)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def output_dir(self) -> Path:
        return self.path("experiment", "output") or self.base_dir

    @property
    def workers(self) -> int:
        return int(self.values["experiment"]["workers"])

    def experiment_spec(self) -> ExperimentSpec:
        return build_spec(self)


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _check_type(section: str, key: str, value, default):
    field = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigInvalid(field, "must be true or false")
    elif isinstance(default, (int, float)) and not isinstance(default, bool):
        if key in ("B", "batch_size") and value == "inf":
            return
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigInvalid(field, "must be a number")
    elif isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigInvalid(field, "must be a list")
    elif key == "max_depth":
        if value != "inf" and (isinstance(value, bool) or not isinstance(value, int)):
            raise ConfigInvalid(field, "must be an integer or \"inf\"")
    elif not isinstance(value, str):
        raise ConfigInvalid(field, "must be a string")


def merge(raw: dict, overrides: list[str] = ()) -> dict[str, dict]:
    values = copy.deepcopy(DEFAULTS)
    for section, body in raw.items():
        if section not in DEFAULTS:
            raise ConfigInvalid(section, "unknown config section")
        if not isinstance(body, dict):
            raise ConfigInvalid(section, "must be a table")
        for key, value in body.items():
            if key not in DEFAULTS[section]:
                raise ConfigInvalid(f"{section}.{key}", "unknown config key")
            _check_type(section, key, value, DEFAULTS[section][key])
            values[section][key] = value
    env_seed = os.environ.get("FEDPKT_SEED")
    if env_seed:
        try:
            values["experiment"]["seed"] = int(env_seed)
        except ValueError:
            raise ConfigInvalid("FEDPKT_SEED", "must be an integer") from None
    for item in overrides:
        name, eq, text = item.partition("=")
        section, dot, key = name.strip().partition(".")
        if not eq or not dot:
            raise ConfigInvalid(name or item, "override must look like section.key=value")
        if section not in DEFAULTS or key not in DEFAULTS[section]:
            raise ConfigInvalid(name.strip(), "override names an unknown config key")
        value = _parse_value(text.strip())
        _check_type(section, key, value, DEFAULTS[section][key])
        values[section][key] = value
    return values


def load_config(path, overrides: list[str] = ()) -> Config:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigInvalid("--config", f"{path} does not exist") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid("--config", f"{path} is not valid TOML: {exc}") from None
    return Config(merge(raw, overrides), path.resolve().parent)


def _inf_or_int(value, field: str) -> int | None:
    if value == "inf" or (isinstance(value, float) and math.isinf(value)):
        return None
    if isinstance(value, float) and not value.is_integer():
        raise ConfigInvalid(field, "must be an integer or \"inf\"")
    return int(value)


def build_spec(cfg: Config) -> ExperimentSpec:
    e, d, s, v, f, t = (cfg[k] for k in ("experiment", "data", "split", "svm", "federated", "tree"))
    seed = int(e["seed"])
    try:
        split = SplitSpec(k=int(s["k"]), mode=s["mode"], min_frac=float(s["min_frac"]),
                          train_frac=float(s["train_frac"]), balance=s["balance"],
                          balance_test=s["balance_test"], seed=seed)
        split.validate()
    except Exception as exc:
        raise ConfigInvalid("split", str(exc)) from None
    try:
        hyper = Hyperparams(eta=float(v["eta"]), lam=float(v["lambda"]),
                            batch_size=_inf_or_int(v["batch_size"], "svm.batch_size"), seed=seed)
    except ConfigInvalid:
        raise
    except Exception as exc:
        raise ConfigInvalid("svm", str(exc)) from None
    K = int(f["K"]) or split.k
    if f["C"] <= 0 or f["C"] > 1:
        raise ConfigInvalid("federated.C", f"must lie in (0, 1], got {f['C']}")
    target = float(f["target_f1"])
    fed = FedConfig(K=K, C=float(f["C"]), B=_inf_or_int(f["B"], "federated.B"), E=int(f["E"]),
                    R_max=int(f["R_max"]), eta=hyper.eta, lam=hyper.lam, seed=seed,
                    target_f1=None if target < 0 else target, eval_set=f["eval_set"],
                    aggregation=f["aggregation"], workers=cfg.workers)
    try:
        fed.validate()
    except Exception as exc:
        field = str(exc).split(" ", 1)[0]
        raise ConfigInvalid(field if field.startswith("federated.") else "federated", str(exc)) from None
    max_depth = None if t["max_depth"] == "inf" else int(t["max_depth"])
    headers = cfg.path("data", "standard_headers")
    spec = ExperimentSpec(
        dataset=str(cfg.path("data", "path") or ""), task=d["task"], mode=d["mode"],
        file_request=d["file_request"], standard_headers=str(headers) if headers else None,
        strictness=d["strictness"], family=e["family"], split=split, svm=hyper,
        passes=int(v["passes"]), fed=fed, tree=TreeParams(max_depth, int(t["min_samples_leaf"])),
        runs=int(e["runs"]), seed=seed, name=e["name"],
    )
    if d["mode"] not in ("http_keys", "all_words", "recon_words_approx"):
        raise ConfigInvalid("data.mode", f"unknown featurization mode {d['mode']!r}")
    if d["strictness"] not in ("strict", "skip_invalid"):
        raise ConfigInvalid("data.strictness", "must be 'strict' or 'skip_invalid'")
    spec.validate()
    return spec


def sweep_grid(cfg: Config) -> list[tuple[float, int | None, int]]:
    sw = cfg["sweep"]
    grid = [(float(C), _inf_or_int(B, "sweep.B"), int(E)) for C in sw["C"] for B in sw["B"] for E in sw["E"]]
    if not grid:
        raise ConfigInvalid("sweep", "grid is empty")
    for C, _, _ in grid:
        if not 0 < C <= 1:
            raise ConfigInvalid("sweep.C", f"must lie in (0, 1], got {C}")
    return grid
