"""Bob/Alice round logic and the tappable quantum channel.

One round: Bob prepares Psi+ or Phi+ at random, sends the travel qubit out,
Alice applies I (bit 0) or sigma_z (bit 1), the qubit comes back and Bob
Bell-measures (travel, home). A measured state from the other Bell family
than the one prepared means someone was on the line.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .quantum_core import (
    BellLabel,
    StateVector,
    UnitaryOp,
    apply_unitary,
    bell_basis,
    make_bell,
    measure_in_basis,
    measure_projective,
    sigma_z,
    tensor,
)

TRAVEL = "travel"
HOME = "home"
ANCILLA = "ancilla"

BOB_BELL_BASIS = bell_basis((TRAVEL, HOME))
_SIGMA_Z = sigma_z(TRAVEL)


class ProtocolError(ValueError):
    pass


class TapContractError(RuntimeError):
    """A channel tap tried to reach Bob's home qubit or otherwise broke the tap rules."""


class EncodingOp(enum.Enum):
    Identity = 0
    PhaseFlip = 1

    @classmethod
    def for_bit(cls, bit: int) -> "EncodingOp":
        if bit not in (0, 1):
            raise ProtocolError(f"bit must be 0 or 1, got {bit!r}")
        return cls(bit)

    @property
    def bit(self) -> int:
        return self.value


@dataclass(frozen=True)
class DecodeOutcome:
    """Either a decoded bit or an intrusion flag (``bit is None``)."""

    bit: Optional[int]

    @classmethod
    def intrusion(cls) -> "DecodeOutcome":
        return cls(None)

    @property
    def is_intrusion(self) -> bool:
        return self.bit is None

    def to_json(self) -> Any:
        return "Intrusion" if self.bit is None else self.bit

    def __repr__(self) -> str:
        return "Intrusion" if self.bit is None else f"Bit({self.bit})"


INTRUSION = DecodeOutcome.intrusion()


class TapHandle:
    """Restricted view of the joint state handed to a channel tap.

    Taps may act on the travel qubit and on subsystems they attach themselves;
    any attempt to name Bob's home qubit is refused.
    """

    def __init__(self, state: StateVector, scratch: Optional[dict] = None):
        self._state = state
        # per-round notes a tap carries from the forward leg to the return leg
        self.scratch = {} if scratch is None else scratch

    @property
    def state(self) -> StateVector:
        return self._state

    @property
    def layout(self):
        return self._state.layout

    def has(self, name: str) -> bool:
        return name in self._state.layout

    def _guard(self, targets: Sequence[str]) -> list[str]:
        targets = list(targets)
        if HOME in targets:
            raise TapContractError("taps have no access to Bob's home qubit")
        return targets

    def attach(self, ket: StateVector) -> None:
        if HOME in ket.layout:
            raise TapContractError("taps cannot attach a subsystem named 'home'")
        self._state = tensor(self._state, ket)

    def apply(self, u: UnitaryOp, targets: Sequence[str]) -> None:
        self._state = apply_unitary(u, self._state, self._guard(targets))

    def measure(self, targets: Sequence[str], basis: Sequence[StateVector],
                rand: np.random.Generator) -> int:
        k, self._state = measure_in_basis(self._state, self._guard(targets), basis, rand)
        return k

    def measure_projective(self, targets: Sequence[str], projectors: Sequence[np.ndarray],
                           rand: np.random.Generator) -> int:
        k, self._state = measure_projective(self._state, self._guard(targets), projectors, rand)
        return k


class ChannelTap:
    """Base tap: passes the travel qubit through untouched in both directions."""

    name = "none"
    descriptor = "none"

    def on_forward(self, handle: TapHandle, rand: np.random.Generator) -> None:
        return None

    def on_return(self, handle: TapHandle, rand: np.random.Generator):
        return None


NO_TAP = ChannelTap()


@dataclass
class RoundRecord:
    round: int
    prepared: BellLabel
    alice_bit: int
    eve: Any
    measured: BellLabel
    decoded: DecodeOutcome

    def to_dict(self) -> dict:
        eve = self.eve.to_dict() if hasattr(self.eve, "to_dict") else self.eve
        return {
            "round": self.round,
            "prepared": self.prepared.name,
            "alice_bit": self.alice_bit,
            "eve": eve if eve is not None else {},
            "measured": self.measured.name,
            "decoded": self.decoded.to_json(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


def bob_prepare(rand: np.random.Generator) -> tuple[BellLabel, StateVector]:
    label = BellLabel.PsiPlus if rand.random() < 0.5 else BellLabel.PhiPlus
    return label, make_bell(label, (TRAVEL, HOME))


def alice_encode(bit: int, joint: StateVector) -> StateVector:
    op = EncodingOp.for_bit(bit)
    if TRAVEL not in joint.layout:
        raise ProtocolError("joint state has no travel subsystem")
    if op is EncodingOp.Identity:
        return joint
    return apply_unitary(_SIGMA_Z, joint, [TRAVEL])


_DECODE = {
    BellLabel.PsiPlus: {BellLabel.PsiPlus: 0, BellLabel.PsiMinus: 1},
    BellLabel.PhiPlus: {BellLabel.PhiPlus: 0, BellLabel.PhiMinus: 1},
}


def bob_decode(prepared: BellLabel, measured: BellLabel) -> DecodeOutcome:
    try:
        table = _DECODE[prepared]
    except KeyError:
        raise ProtocolError(f"Bob never prepares {prepared.name}") from None
    bit = table.get(measured)
    return INTRUSION if bit is None else DecodeOutcome(bit)


def bob_measure(joint: StateVector, rand: np.random.Generator) -> BellLabel:
    k, _ = measure_in_basis(joint, [TRAVEL, HOME], BOB_BELL_BASIS, rand)
    return BellLabel(k)


def run_round(alice_bit: int, tap: Optional[ChannelTap], rand: np.random.Generator,
              round_index: int = 0) -> RoundRecord:
    EncodingOp.for_bit(alice_bit)
    tap = tap or NO_TAP
    prepared, joint = bob_prepare(rand)

    scratch: dict = {}
    handle = TapHandle(joint, scratch)
    tap.on_forward(handle, rand)
    joint = alice_encode(alice_bit, handle.state)

    handle = TapHandle(joint, scratch)
    eve = tap.on_return(handle, rand)
    measured = bob_measure(handle.state, rand)

    return RoundRecord(round_index, prepared, alice_bit, eve, measured,
                       bob_decode(prepared, measured))


def run_message(bits: Iterable[int], tap: Optional[ChannelTap], stop_on_intrusion: bool,
                rand: np.random.Generator) -> list[RoundRecord]:
    records = []
    for i, bit in enumerate(bits):
        rec = run_round(bit, tap, rand, round_index=i)
        records.append(rec)
        if stop_on_intrusion and rec.decoded.is_intrusion:
            break
    return records
