"""Quantum circuits with quantum control of causal order, their causal-box extensions and fine-grainings."""

from .causalbox import CausalBox, check_causality, from_sequence, loop_compose, parallel_compose
from .extension import (
    grenoble_gate_extension,
    isometric_extension,
    photonic_extension,
    projective_extension,
    verify_extension,
)
from .finegraining import build_decoder, build_encoder, check_acyclicity, signalling_transfer, verify_finegraining
from .qcqc import LocalOperation, QcQc, born, fixed_order_chain, grenoble, process_vector, quantum_switch, validate

__version__ = "0.1.0"

__all__ = [
    "CausalBox",
    "LocalOperation",
    "QcQc",
    "born",
    "build_decoder",
    "build_encoder",
    "check_acyclicity",
    "check_causality",
    "fixed_order_chain",
    "from_sequence",
    "grenoble",
    "grenoble_gate_extension",
    "isometric_extension",
    "loop_compose",
    "parallel_compose",
    "photonic_extension",
    "process_vector",
    "projective_extension",
    "quantum_switch",
    "signalling_transfer",
    "validate",
    "verify_extension",
    "verify_finegraining",
]
