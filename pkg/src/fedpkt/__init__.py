"""Federated linear SVMs over privacy-minimizing HTTP key features."""

__version__ = "0.1.0"

from .errors import DataError, FedpktError, ValidationError
from .experiment import ExperimentSpec, emit_report, run_experiment
from .features import Featurizer, Vocabulary, encode, extract_http_keys
from .federated import FedConfig, aggregate, run_federated
from .metrics import EvalReport, confusion
from .partition import SplitSpec, make_clients
from .svm import Hyperparams, SvmModel, client_update, train_centralized
from .trace import HttpPacket, parse_trace, summarize
from .tree import knowledge_transfer, predict_tree, train_tree

__all__ = [
    "DataError", "FedpktError", "ValidationError", "ExperimentSpec", "emit_report", "run_experiment",
    "Featurizer", "Vocabulary", "encode", "extract_http_keys", "FedConfig", "aggregate",
    "run_federated", "EvalReport", "confusion", "SplitSpec", "make_clients", "Hyperparams",
    "SvmModel", "client_update", "train_centralized", "HttpPacket", "parse_trace", "summarize",
    "knowledge_transfer", "predict_tree", "train_tree",
]
