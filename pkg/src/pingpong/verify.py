"""Built-in self-check suite behind ``pingpong verify``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import analysis
from .adversary import AncillaAttackConfig, build_attack_unitary, eve_forward_tap
from .protocol import HOME, TRAVEL, alice_encode
from .quantum_core import (
    ALGEBRA_TOL,
    BELL_ORDER,
    BellLabel,
    SQRT_HALF,
    density_of,
    make_bell,
    partial_trace,
    phase_equivalent,
)


class CheckFailed(AssertionError):
    pass


def _require(condition) -> None:
    if not condition:
        raise CheckFailed("condition not met")


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _bell_algebra() -> str:
    states = [make_bell(b) for b in BELL_ORDER]
    for i, a in enumerate(states):
        _require(abs(a.norm() - 1.0) <= ALGEBRA_TOL)
        for b in states[i + 1:]:
            _require(abs(a.inner(b)) <= ALGEBRA_TOL)
    return "4 unit vectors, pairwise orthogonal"


def _reduced_states() -> str:
    half_identity = 0.5 * np.eye(2)
    for label in BELL_ORDER:
        rho = density_of(make_bell(label))
        for keep in (TRAVEL, HOME):
            _require(np.max(np.abs(partial_trace(rho, [keep]).matrix - half_identity)) <= ALGEBRA_TOL)
    return "every one-qubit marginal is I/2"


def _encoding_map() -> str:
    pairs = [(BellLabel.PsiPlus, BellLabel.PsiMinus), (BellLabel.PhiPlus, BellLabel.PhiMinus)]
    for a, b in pairs:
        for src, dst in ((a, b), (b, a)):
            flipped = alice_encode(1, make_bell(src))
            _require(phase_equivalent(flipped, make_bell(dst)))
            twice = alice_encode(1, flipped).amplitudes
            _require(np.max(np.abs(twice - make_bell(src).amplitudes)) <= ALGEBRA_TOL)
    return "sigma_z maps Psi+<->Psi-, Phi+<->Phi-; involution"


def _full_information_state() -> str:
    cfg = AncillaAttackConfig.orthonormal(0.5)
    joint = eve_forward_tap(cfg, make_bell(BellLabel.PsiPlus))
    # component with home = |1>, as a vector over (travel, ancilla)
    t = joint.tensor_view()[:, 1, :].reshape(-1)
    chi00, chi01 = cfg.chi_states[0], cfg.chi_states[1]
    target = SQRT_HALF * (np.kron([1, 0], chi00) + np.kron([0, 1], chi01))
    conditional = t / np.linalg.norm(t)
    _require(abs(abs(np.vdot(target, conditional)) - 1.0) <= 1e-9)
    u = build_attack_unitary(cfg).matrix
    _require(np.max(np.abs(u @ u.conj().T - np.eye(8))) <= ALGEBRA_TOL)
    return "travel+ancilla given home=|1> is (|0,chi00>+|1,chi01>)/sqrt2"


def _uniform_under_attack() -> str:
    strat = "ancilla:d=0.5"
    for prep in analysis.PREPARATIONS:
        for bit in (0, 1):
            marg = analysis.bell_marginal(analysis.exact_round_distribution(prep, bit, strat))
            _require(max(abs(p - 0.25) for p in marg) <= ALGEBRA_TOL)
    _require(abs(analysis.detection_probability(strat) - 0.5) <= ALGEBRA_TOL)
    _require(abs(analysis.eve_accuracy_exact(strat) - 1.0) <= ALGEBRA_TOL)
    return "Bell outcomes 1/4 each, detection 1/2, Eve certain"


def _no_eve_bit_zero() -> str:
    marg = analysis.bell_marginal(analysis.exact_round_distribution(BellLabel.PsiPlus, 0, None))
    _require(abs(marg[BellLabel.PsiPlus.value] - 1.0) <= ALGEBRA_TOL)
    return "Psi+ with probability 1"


def _no_eve_bit_one() -> str:
    marg = analysis.bell_marginal(analysis.exact_round_distribution(BellLabel.PsiPlus, 1, None))
    _require(abs(marg[BellLabel.PsiMinus.value] - 1.0) <= ALGEBRA_TOL)
    return "Psi- with probability 1"


def _survival_number() -> str:
    log10_d = analysis.survival_probability(analysis.SurvivalQuery(1000, 0.5))
    _require(abs(log10_d + 1000 * math.log10(2.0)) <= 1e-9)
    rendered = analysis.format_log10(log10_d)
    _require(rendered == "9.33e-302")
    return f"D = {rendered}"


CHECKS: list[tuple[str, Callable[[], str]]] = [
    ("bell_algebra", _bell_algebra),
    ("reduced_states_half_identity", _reduced_states),
    ("sigma_z_encoding_map", _encoding_map),
    ("full_information_attack_state", _full_information_state),
    ("uniform_quarter_under_attack", _uniform_under_attack),
    ("no_eve_encoded_0_psi_plus", _no_eve_bit_zero),
    ("no_eve_encoded_1_psi_minus", _no_eve_bit_one),
    ("survival_after_1000_bits", _survival_number),
]


def run_checks() -> list[CheckResult]:
    results = []
    for name, fn in CHECKS:
        try:
            results.append(CheckResult(name, True, fn()))
        except Exception as exc:  # report, don't abort the table
            results.append(CheckResult(name, False, f"{type(exc).__name__}: {exc}"))
    return results
