import json

import numpy as np
import pytest

from pingpong.protocol import (
    HOME,
    INTRUSION,
    TRAVEL,
    ChannelTap,
    DecodeOutcome,
    EncodingOp,
    ProtocolError,
    TapContractError,
    TapHandle,
    alice_encode,
    bob_decode,
    bob_measure,
    bob_prepare,
    run_message,
    run_round,
)
from pingpong.quantum_core import BellLabel, PAULI_X, SubsystemLayout, UnitaryOp, make_bell, qubit


class TestEncoding:
    def test_for_bit(self):
        assert EncodingOp.for_bit(0) is EncodingOp.Identity
        assert EncodingOp.for_bit(1) is EncodingOp.PhaseFlip
        with pytest.raises(ProtocolError):
            EncodingOp.for_bit(2)

    @pytest.mark.parametrize("prep,flipped", [(BellLabel.PsiPlus, BellLabel.PsiMinus),
                                              (BellLabel.PhiPlus, BellLabel.PhiMinus)])
    def test_alice_encode(self, prep, flipped, rng):
        joint = make_bell(prep)
        assert bob_measure(alice_encode(0, joint), rng) is prep
        assert bob_measure(alice_encode(1, joint), rng) is flipped


class TestDecode:
    def test_table(self):
        assert bob_decode(BellLabel.PsiPlus, BellLabel.PsiPlus) == DecodeOutcome(0)
        assert bob_decode(BellLabel.PsiPlus, BellLabel.PsiMinus) == DecodeOutcome(1)
        assert bob_decode(BellLabel.PhiPlus, BellLabel.PhiPlus) == DecodeOutcome(0)
        assert bob_decode(BellLabel.PhiPlus, BellLabel.PhiMinus) == DecodeOutcome(1)

    @pytest.mark.parametrize("prep", [BellLabel.PsiPlus, BellLabel.PhiPlus])
    def test_wrong_family_is_intrusion(self, prep):
        for measured in BellLabel:
            if measured.family != prep.family:
                assert bob_decode(prep, measured).is_intrusion

    def test_never_prepared(self):
        with pytest.raises(ProtocolError):
            bob_decode(BellLabel.PsiMinus, BellLabel.PsiMinus)

    def test_json(self):
        assert INTRUSION.to_json() == "Intrusion"
        assert DecodeOutcome(1).to_json() == 1


class TestPrepare:
    def test_only_plus_states(self, rng):
        seen = {bob_prepare(rng)[0] for _ in range(200)}
        assert seen == {BellLabel.PsiPlus, BellLabel.PhiPlus}


class _HomeToucher(ChannelTap):
    def on_forward(self, handle, rand):
        handle.apply(UnitaryOp(SubsystemLayout.qubits(HOME), PAULI_X), [HOME])


class _TravelFlipper(ChannelTap):
    def on_forward(self, handle, rand):
        handle.apply(UnitaryOp(SubsystemLayout.qubits(TRAVEL), PAULI_X), [TRAVEL])


class TestTapHandle:
    def test_home_is_off_limits(self, rng):
        with pytest.raises(TapContractError):
            run_round(0, _HomeToucher(), rng)

    def test_cannot_attach_home(self):
        h = TapHandle(make_bell(BellLabel.PsiPlus))
        with pytest.raises(TapContractError):
            h.attach(qubit(HOME, 0))

    def test_measure_home_refused(self, rng):
        h = TapHandle(make_bell(BellLabel.PsiPlus))
        with pytest.raises(TapContractError):
            h.measure([HOME], [qubit(HOME, 0), qubit(HOME, 1)], rng)

    def test_travel_bit_flip_is_always_detected(self, rng):
        # X on travel swaps Psi <-> Phi families
        recs = [run_round(b % 2, _TravelFlipper(), rng, i) for i, b in enumerate(range(50))]
        assert all(r.decoded.is_intrusion for r in recs)


class TestRound:
    def test_no_eve_is_faithful(self, rng):
        bits = rng.integers(0, 2, 500)
        recs = run_message(bits, None, False, rng)
        assert len(recs) == 500
        assert all(not r.decoded.is_intrusion and r.decoded.bit == r.alice_bit for r in recs)

    def test_stop_on_intrusion(self, rng):
        recs = run_message([0] * 100, _TravelFlipper(), True, rng)
        assert len(recs) == 1

    def test_record_json(self, rng):
        rec = run_round(1, None, rng, round_index=3)
        d = json.loads(rec.to_json())
        assert d["round"] == 3 and d["alice_bit"] == 1 and d["eve"] == {}
        assert d["decoded"] == 1
        assert set(d) == {"round", "prepared", "alice_bit", "eve", "measured", "decoded"}

    def test_bad_bit(self, rng):
        with pytest.raises(ProtocolError):
            run_round(3, None, rng)
