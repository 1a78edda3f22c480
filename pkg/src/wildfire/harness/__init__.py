"""Experiment configuration, training/evaluation, transfer study, reports, CLI."""

from .config import ExperimentConfig, config_digest, load_config
from .report import build_report, reconcile_report
from .train import RunArtifacts, evaluate_checkpoint, run
from .transfer import TransferReport, transfer_experiment

__all__ = [
    "ExperimentConfig",
    "RunArtifacts",
    "TransferReport",
    "build_report",
    "config_digest",
    "evaluate_checkpoint",
    "load_config",
    "reconcile_report",
    "run",
    "transfer_experiment",
]
