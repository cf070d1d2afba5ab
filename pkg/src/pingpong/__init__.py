"""Exact simulation of the EPR ping-pong direct-communication protocol with eavesdroppers."""

from .quantum_core import BellLabel, StateVector, DensityMatrix, UnitaryOp, SubsystemLayout
from .protocol import DecodeOutcome, EncodingOp, RoundRecord, run_message, run_round
from .adversary import AncillaAttack, AncillaAttackConfig, InterceptResend, parse_strategy
from .analysis import (
    ExperimentConfig,
    ExperimentStats,
    SurvivalQuery,
    exact_round_distribution,
    run_experiment,
    success_curve,
    survival_probability,
)

__version__ = "0.1.0"
