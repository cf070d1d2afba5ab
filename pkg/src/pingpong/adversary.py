"""Eavesdropping strategies, each packaged as a :class:`ChannelTap`.

The ancilla attack entangles a probe of dimension <= 4 with the travel qubit
on the way to Alice:

    E|0,chi> = sqrt(1-d)|0,chi00> + sqrt(d)|1,chi01>
    E|1,chi> = sqrt(1-d)|1,chi11> + sqrt(d)|0,chi10>

On the way back Eve checks whether (travel, ancilla) still lies in the image
of E applied to {|0,chi>, |1,chi>}: if so Alice did nothing, otherwise she
flipped the phase. At d = 1/2 with orthonormal chi's that test is exact.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .protocol import (
    ANCILLA,
    TRAVEL,
    ChannelTap,
    EncodingOp,
    NO_TAP,
    TapContractError,
    TapHandle,
)
from .quantum_core import (
    ALGEBRA_TOL,
    PAULI_Z,
    SQRT_HALF,
    QuantumError,
    StateVector,
    SubsystemLayout,
    UnitaryOp,
    check_orthonormal,
    complete_basis,
)


class StrategyError(ValueError):
    pass


@dataclass(frozen=True)
class EveRecord:
    pre_encoding_action: str
    measurement_outcome: Optional[int] = None
    inferred_operation: Optional[EncodingOp] = None
    forward_outcome: Optional[int] = None

    @property
    def branch(self) -> tuple:
        """Eve's observed outcomes, in the order she obtained them."""
        return tuple(o for o in (self.forward_outcome, self.measurement_outcome) if o is not None)

    def to_dict(self) -> dict:
        d = {"action": self.pre_encoding_action}
        if self.forward_outcome is not None:
            d["forward_outcome"] = self.forward_outcome
        if self.measurement_outcome is not None:
            d["outcome"] = self.measurement_outcome
        if self.inferred_operation is not None:
            d["inferred"] = self.inferred_operation.name
        return d


def _unit(dim: int, k: int) -> np.ndarray:
    v = np.zeros(dim, dtype=np.complex128)
    v[k] = 1.0
    return v


@dataclass(frozen=True)
class AncillaAttackConfig:
    """Ancilla attack parameters; ``chi_states`` is (chi00, chi01, chi10, chi11)."""

    d: float
    chi_states: tuple
    ancilla_dim: int = 4
    label: str = "custom"

    def __post_init__(self):
        if not (0.0 <= self.d <= 1.0) or math.isnan(self.d):
            raise StrategyError(f"d must lie in [0, 1], got {self.d!r}")
        if not 1 <= self.ancilla_dim <= 4:
            raise StrategyError("ancilla dimension must be between 1 and 4")
        if len(self.chi_states) != 4:
            raise StrategyError("exactly four chi states are required")
        chis = []
        for chi in self.chi_states:
            chi = np.asarray(chi, dtype=np.complex128).reshape(-1)
            if chi.size != self.ancilla_dim:
                raise StrategyError("chi state dimension does not match ancilla_dim")
            if abs(np.linalg.norm(chi) - 1.0) > ALGEBRA_TOL:
                raise StrategyError("chi states must be unit vectors")
            chi.setflags(write=False)
            chis.append(chi)
        object.__setattr__(self, "chi_states", tuple(chis))

    @classmethod
    def orthonormal(cls, d: float) -> "AncillaAttackConfig":
        """chi00..chi11 = e0..e3: the ancilla fully records which branch was taken."""
        return cls(d, tuple(_unit(4, k) for k in range(4)), label="orthonormal")

    @classmethod
    def overlap(cls, d: float, c: float) -> "AncillaAttackConfig":
        """<chi00|chi11> = c, with chi00 = e0 equal to the initial ancilla state.

        c = 0 reproduces :meth:`orthonormal`; c = 1 makes the d = 0 attack a no-op.
        """
        if not 0.0 <= c <= 1.0:
            raise StrategyError(f"overlap must lie in [0, 1], got {c!r}")
        s = math.sqrt(1.0 - c * c)
        chi11 = c * _unit(4, 0) + s * _unit(4, 3)
        return cls(d, (_unit(4, 0), _unit(4, 1), _unit(4, 2), chi11), label=f"overlap:{c:g}")

    @property
    def alpha(self) -> float:
        return math.sqrt(1.0 - self.d)

    @property
    def beta(self) -> float:
        return math.sqrt(self.d)

    @property
    def chi(self) -> np.ndarray:
        """Initial ancilla state."""
        return _unit(self.ancilla_dim, 0)

    def layout(self) -> SubsystemLayout:
        return SubsystemLayout([(TRAVEL, 2), (ANCILLA, self.ancilla_dim)])

    def images(self) -> tuple[np.ndarray, np.ndarray]:
        """E|0,chi> and E|1,chi> as vectors on travel (x) ancilla."""
        chi00, chi01, chi10, chi11 = self.chi_states
        zero, one = np.eye(2, dtype=np.complex128)
        img0 = self.alpha * np.kron(zero, chi00) + self.beta * np.kron(one, chi01)
        img1 = self.alpha * np.kron(one, chi11) + self.beta * np.kron(zero, chi10)
        return img0, img1


def build_attack_unitary(cfg: AncillaAttackConfig) -> UnitaryOp:
    img0, img1 = cfg.images()
    try:
        check_orthonormal([img0, img1])
    except QuantumError:
        raise StrategyError("E|0,chi> and E|1,chi> are not orthonormal; no unitary completion") from None
    dim = 2 * cfg.ancilla_dim
    col0, col1 = 0, cfg.ancilla_dim  # |0,chi> and |1,chi> with chi = e0
    others = complete_basis([img0, img1], dim)[2:]
    cols = []
    rest = iter(others)
    for j in range(dim):
        if j == col0:
            cols.append(img0)
        elif j == col1:
            cols.append(img1)
        else:
            cols.append(next(rest))
    return UnitaryOp(cfg.layout(), np.array(cols).T)


def discrimination_basis(cfg: AncillaAttackConfig) -> list[np.ndarray]:
    """(|0,chi00> +- |1,chi01>)/sqrt2, (|1,chi11> +- |0,chi10>)/sqrt2 on travel (x) ancilla.

    At d = 1/2 these are exactly sigma_z^k applied to E|0,chi>, E|1,chi>.
    """
    chi00, chi01, chi10, chi11 = cfg.chi_states
    zero, one = np.eye(2, dtype=np.complex128)
    a, b = np.kron(zero, chi00), np.kron(one, chi01)
    c, e = np.kron(one, chi11), np.kron(zero, chi10)
    return [SQRT_HALF * (a + b), SQRT_HALF * (a - b), SQRT_HALF * (c + e), SQRT_HALF * (c - e)]


def identity_test_projectors(cfg: AncillaAttackConfig) -> list[np.ndarray]:
    """[P_id, 1 - P_id] with P_id the projector onto span{E|0,chi>, E|1,chi>}."""
    img0, img1 = cfg.images()
    p_id = np.outer(img0, img0.conj()) + np.outer(img1, img1.conj())
    p_flip = np.eye(p_id.shape[0], dtype=np.complex128) - p_id
    for p in (p_id, p_flip):
        p.setflags(write=False)
    return [p_id, p_flip]


class AncillaAttack(ChannelTap):
    name = "ancilla"

    def __init__(self, cfg: AncillaAttackConfig):
        self.cfg = cfg
        self.unitary = build_attack_unitary(cfg)
        self.projectors = identity_test_projectors(cfg)
        self._ancilla_ket = StateVector(SubsystemLayout([(ANCILLA, cfg.ancilla_dim)]), cfg.chi)

    def __repr__(self) -> str:
        return f"AncillaAttack(d={self.cfg.d:g}, chi={self.cfg.label})"

    def on_forward(self, handle: TapHandle, rand) -> None:
        if handle.has(ANCILLA):
            raise TapContractError("ancilla already attached; double attack")
        handle.attach(self._ancilla_ket)
        handle.apply(self.unitary, [TRAVEL, ANCILLA])

    def on_return(self, handle: TapHandle, rand) -> EveRecord:
        if not handle.has(ANCILLA):
            raise TapContractError("return tap ran without an attached ancilla")
        k = handle.measure_projective([TRAVEL, ANCILLA], self.projectors, rand)
        return EveRecord("ancilla_unitary", measurement_outcome=k,
                         inferred_operation=self.infer_operation((k,)))

    @staticmethod
    def infer_operation(branch: tuple) -> EncodingOp:
        """Outcome 0 (still in the image of E) means Alice did nothing."""
        return EncodingOp(branch[0])

    @property
    def descriptor(self) -> str:
        return f"ancilla:d={self.cfg.d:g},chi={self.cfg.label}"


def eve_forward_tap(cfg: AncillaAttackConfig, joint: StateVector) -> StateVector:
    handle = TapHandle(joint)
    AncillaAttack(cfg).on_forward(handle, None)
    return handle.state


def eve_return_tap(cfg: AncillaAttackConfig, joint: StateVector,
                   rand: np.random.Generator) -> tuple[StateVector, EveRecord]:
    handle = TapHandle(joint)
    record = AncillaAttack(cfg).on_return(handle, rand)
    return handle.state, record


_PLUS_MINUS = np.array([[SQRT_HALF, SQRT_HALF], [SQRT_HALF, -SQRT_HALF]], dtype=np.complex128)
_QUBIT_BASES = {
    "computational": np.eye(2, dtype=np.complex128),
    "diagonal": _PLUS_MINUS,
}


def single_qubit_basis(basis: str) -> list[StateVector]:
    try:
        rows = _QUBIT_BASES[basis]
    except KeyError:
        raise StrategyError(f"unknown basis {basis!r}; use computational or diagonal") from None
    layout = SubsystemLayout.qubits(TRAVEL)
    return [StateVector(layout, row) for row in rows]


class InterceptResend(ChannelTap):
    """Measure the travel qubit going out and coming back in one fixed basis.

    Re-preparing the observed basis state is the same as keeping the collapsed
    qubit, so the forward leg is just a measurement. Alice's operation is
    guessed as PhaseFlip iff the two outcomes differ.
    """

    name = "intercept_resend"

    def __init__(self, basis: str = "computational"):
        self.basis_name = basis
        self.basis = single_qubit_basis(basis)

    def __repr__(self) -> str:
        return f"InterceptResend({self.basis_name})"

    def on_forward(self, handle: TapHandle, rand) -> None:
        handle.scratch["forward_outcome"] = handle.measure([TRAVEL], self.basis, rand)

    def on_return(self, handle: TapHandle, rand) -> EveRecord:
        first = handle.scratch.get("forward_outcome")
        if first is None:
            raise TapContractError("return leg ran before the forward leg")
        second = handle.measure([TRAVEL], self.basis, rand)
        return EveRecord(f"measure_resend_{self.basis_name}", measurement_outcome=second,
                         inferred_operation=self.infer_operation((first, second)),
                         forward_outcome=first)

    @staticmethod
    def infer_operation(branch: tuple) -> EncodingOp:
        first, second = branch
        return EncodingOp.PhaseFlip if second != first else EncodingOp.Identity

    @property
    def descriptor(self) -> str:
        return f"intercept_resend:basis={self.basis_name}"


def intercept_resend_tap(basis: str, joint: StateVector,
                         rand: np.random.Generator) -> tuple[StateVector, EveRecord]:
    """Forward-leg intercept only: measure and re-prepare the travel qubit."""
    handle = TapHandle(joint)
    k = handle.measure([TRAVEL], single_qubit_basis(basis), rand)
    return handle.state, EveRecord(f"measure_resend_{basis}", forward_outcome=k)


_STRATEGY_RE = re.compile(r"^\s*([a-z_]+)\s*(?::(.*))?$")


def _parse_params(text: str) -> dict[str, str]:
    params = {}
    if not text:
        return params
    for part in text.split(","):
        key, sep, value = part.partition("=")
        if not sep:
            raise StrategyError(f"malformed strategy parameter {part!r}")
        params[key.strip()] = value.strip()
    return params


def parse_strategy(text: str) -> ChannelTap:
    """Build a tap from ``none``, ``ancilla:d=0.5[,chi=orthonormal|overlap:<c>]``
    or ``intercept_resend[:basis=computational|diagonal]``."""
    m = _STRATEGY_RE.match(text or "")
    if not m:
        raise StrategyError(f"cannot parse strategy {text!r}")
    name, params = m.group(1), _parse_params(m.group(2) or "")
    if name == "none":
        if params:
            raise StrategyError("strategy 'none' takes no parameters")
        return NO_TAP
    if name == "ancilla":
        unknown = set(params) - {"d", "chi"}
        if unknown:
            raise StrategyError(f"unknown ancilla parameters {sorted(unknown)}")
        try:
            d = float(params.get("d", "0.5"))
        except ValueError:
            raise StrategyError(f"d must be a number, got {params['d']!r}") from None
        chi = params.get("chi", "orthonormal")
        if chi == "orthonormal":
            return AncillaAttack(AncillaAttackConfig.orthonormal(d))
        if chi.startswith("overlap:"):
            try:
                c = float(chi.split(":", 1)[1])
            except ValueError:
                raise StrategyError(f"bad overlap value in {chi!r}") from None
            return AncillaAttack(AncillaAttackConfig.overlap(d, c))
        raise StrategyError(f"unknown chi choice {chi!r}")
    if name == "intercept_resend":
        unknown = set(params) - {"basis"}
        if unknown:
            raise StrategyError(f"unknown intercept_resend parameters {sorted(unknown)}")
        return InterceptResend(params.get("basis", "computational"))
    raise StrategyError(f"unknown strategy {name!r}")
