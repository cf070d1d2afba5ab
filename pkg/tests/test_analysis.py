import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pingpong import analysis
from pingpong.analysis import (
    ExperimentConfig,
    ExperimentError,
    SurvivalQuery,
    bell_marginal,
    compare_with_oracle,
    curve_to_csv,
    detection_probability,
    detection_probability_for_d,
    eve_accuracy_exact,
    exact_round_distribution,
    format_log10,
    run_experiment,
    success_curve,
    survival_probability,
    trial_streams,
)
from pingpong.adversary import eve_forward_tap, AncillaAttackConfig
from pingpong.quantum_core import BellLabel, density_of, make_bell, partial_trace

TOL = 1e-12
PSI_P, PSI_M, PHI_P, PHI_M = BellLabel


def marg(prep, bit, strategy):
    return bell_marginal(exact_round_distribution(prep, bit, strategy))


class TestExactOracle:
    @pytest.mark.parametrize("prep", [PSI_P, PHI_P])
    @pytest.mark.parametrize("bit", [0, 1])
    def test_no_eve(self, prep, bit):
        want = [0.0] * 4
        flipped = {PSI_P: PSI_M, PHI_P: PHI_M}[prep]
        want[(prep if bit == 0 else flipped).value] = 1.0
        assert np.allclose(marg(prep, bit, "none"), want, atol=TOL)

    @pytest.mark.parametrize("prep", [PSI_P, PHI_P])
    @pytest.mark.parametrize("bit", [0, 1])
    def test_full_information_uniform(self, prep, bit):
        assert np.allclose(marg(prep, bit, "ancilla:d=0.5"), [0.25] * 4, atol=TOL)

    def test_quarter_attack_values(self):
        # hand-derived for d = 1/4: alpha^2 = 3/4, beta^2 = 1/4
        assert np.allclose(marg(PSI_P, 0, "ancilla:d=0.25"), [0.375, 0.375, 0.125, 0.125], atol=TOL)
        assert np.allclose(marg(PSI_P, 1, "ancilla:d=0.25"),
                           [0.1875, 0.1875, 0.3125, 0.3125], atol=TOL)
        assert abs(detection_probability("ancilla:d=0.25") - 0.4375) < TOL
        assert abs(eve_accuracy_exact("ancilla:d=0.25") - 0.875) < TOL

    def test_intercept_resend_computational_branches(self):
        # forward outcome k w.p. 1/2 leaves |k,1-k> (Psi+) or |k,k> (Phi+); sigma_z only adds a
        # phase so the return outcome repeats k, and Bob sees the two same-family states 1/2 each
        for prep, fam in ((PSI_P, (PSI_P, PSI_M)), (PHI_P, (PHI_P, PHI_M))):
            for bit in (0, 1):
                dist = exact_round_distribution(prep, bit, "intercept_resend")
                nonzero = {k: p for k, p in dist.items() if p > 0}
                want = {((k, k), lab): 0.25 for k in (0, 1) for lab in fam}
                assert set(nonzero) == set(want)
                for key, p in want.items():
                    assert abs(nonzero[key] - p) < TOL
        assert detection_probability("intercept_resend") == 0.0
        assert abs(eve_accuracy_exact("intercept_resend") - 0.5) < TOL

    def test_intercept_resend_diagonal(self):
        assert abs(detection_probability("intercept_resend:basis=diagonal") - 0.5) < TOL
        assert abs(eve_accuracy_exact("intercept_resend:basis=diagonal") - 1.0) < TOL

    def test_distribution_sums_to_one(self):
        for strat in ("none", "ancilla:d=0.3", "ancilla:d=0.7,chi=overlap:0.4",
                      "intercept_resend:basis=diagonal"):
            for prep in (PSI_P, PHI_P):
                for bit in (0, 1):
                    assert abs(sum(exact_round_distribution(prep, bit, strat).values()) - 1) < 1e-12

    def test_d0_overlap_matches_no_eve(self):
        for prep in (PSI_P, PHI_P):
            for bit in (0, 1):
                assert np.allclose(marg(prep, bit, "ancilla:d=0,chi=overlap:1"),
                                   marg(prep, bit, "none"), atol=TOL)

    def test_d0_overlap_leaves_pair_intact(self):
        cfg = AncillaAttackConfig.overlap(0.0, 1.0)
        joint = eve_forward_tap(cfg, make_bell(PSI_P))
        red = partial_trace(density_of(joint), ["travel", "home"]).matrix
        psi = make_bell(PSI_P).amplitudes
        assert np.allclose(red, np.outer(psi, psi.conj()), atol=TOL)

    def test_d0_orthonormal_dephases_without_detection(self):
        # distinct chi00, chi11 tag the travel qubit's value: Bob loses the bit, never sees Phi
        m = marg(PSI_P, 0, "ancilla:d=0")
        assert np.allclose(m, [0.5, 0.5, 0.0, 0.0], atol=TOL)
        assert detection_probability("ancilla:d=0") == 0.0

    def test_never_prepared(self):
        with pytest.raises(ExperimentError):
            exact_round_distribution(PSI_M, 0, "none")

    @settings(max_examples=15, deadline=None)
    @given(st.floats(0.0, 1.0))
    def test_detection_point_symmetric(self, d):
        # the d and 1 - d attacks swap which branch flips the travel qubit
        p = detection_probability_for_d(d)
        assert -1e-12 <= p <= 1.0 + 1e-12
        assert abs(p + detection_probability_for_d(1.0 - d) - 1.0) < 1e-9

    def test_detection_monotone(self):
        ps = [detection_probability_for_d(d) for d in np.linspace(0, 1, 21)]
        assert all(b >= a - 1e-12 for a, b in zip(ps, ps[1:]))
        assert abs(ps[-1] - 1.0) < 1e-12


class TestSurvival:
    def test_thousand_rounds(self):
        v = survival_probability(SurvivalQuery(1000, 0.5))
        assert abs(v - (-1000 * math.log10(2))) < 1e-9
        assert format_log10(v) == "9.33e-302"

    def test_edges(self):
        assert survival_probability(SurvivalQuery(0, 0.7)) == 0.0
        assert survival_probability(SurvivalQuery(5, 0.0)) == 0.0
        assert survival_probability(SurvivalQuery(5, 1.0)) == -math.inf
        assert format_log10(0.0) == "1"
        assert format_log10(-math.inf) == "0"
        assert format_log10(-10 * math.log10(2)) == "9.77e-4"

    def test_mantissa_rollover(self):
        assert format_log10(math.log10(9.999e-5)) == "1.00e-4"

    def test_strictly_decreasing_without_underflow(self):
        vals = [survival_probability(SurvivalQuery(n, 0.5)) for n in (1, 10, 10**3, 10**6)]
        assert all(b < a for a, b in zip(vals, vals[1:]))
        assert math.isfinite(vals[-1]) and format_log10(vals[-1]) != "0"

    @pytest.mark.parametrize("n,p", [(-1, 0.5), (3, 1.5), (2.5, 0.1)])
    def test_invalid(self, n, p):
        with pytest.raises(ExperimentError):
            SurvivalQuery(n, p)

    @given(st.integers(1, 10**6), st.floats(1e-9, 1 - 1e-9))
    def test_matches_direct_power(self, n, p):
        direct = (1 - p) ** n
        if direct > 1e-300:
            assert math.isclose(10 ** survival_probability(SurvivalQuery(n, p)), direct, rel_tol=1e-9)


class TestCurve:
    def test_rows_and_csv(self):
        rows = success_curve([0.0, 0.5], [1, 1000])
        assert [(r.d, r.n) for r in rows] == [(0.0, 1), (0.0, 1000), (0.5, 1), (0.5, 1000)]
        assert rows[0].p_detect == 0.0 and rows[1].log10_survival == 0.0
        assert success_curve([1.0], [3])[0].log10_survival == -math.inf
        text = curve_to_csv(rows)
        lines = text.splitlines()
        assert lines[0] == "d,n,p_detect,log10_survival"
        assert lines[-1] == "0.5,1000,0.500000000000,-301.0299956640"

    def test_rejects_bad_grid(self):
        with pytest.raises(ExperimentError):
            success_curve([1.5], [1])
        with pytest.raises(ExperimentError):
            success_curve([], [1])


class TestExperiment:
    def test_streams_independent_of_trial_count(self):
        a, _ = trial_streams(7, 3)
        b, _ = trial_streams(7, 3)
        c, _ = trial_streams(7, 4)
        x = a.random(5)
        assert np.array_equal(x, b.random(5))
        assert not np.array_equal(x, c.random(5))

    def test_budget(self):
        with pytest.raises(ExperimentError):
            ExperimentConfig(n_rounds=10, trials=10, budget=50).validate()

    @pytest.mark.parametrize("src", ["pattern:", "pattern:012", "bogus"])
    def test_bad_bit_source(self, src):
        with pytest.raises(ExperimentError):
            run_experiment(ExperimentConfig(n_rounds=2, bit_source=src))

    def test_pattern_bits(self):
        seen = []
        run_experiment(ExperimentConfig(n_rounds=5, bit_source="pattern:01"),
                       on_record=lambda t, r: seen.append(r.alice_bit))
        assert seen == [0, 1, 0, 1, 0]

    def test_no_eve_clean(self):
        s = run_experiment(ExperimentConfig(n_rounds=2000, strategy="none", master_seed=1))
        assert s.intrusions == 0 and s.bit_errors == 0 and s.bit_total == 2000
        assert s.eve_accuracy is None

    def test_reproducible(self):
        cfg = ExperimentConfig(n_rounds=300, strategy="ancilla:d=0.3", master_seed=99, trials=2)
        a = run_experiment(cfg).to_json()
        b = run_experiment(cfg).to_json()
        assert a == b
        c = run_experiment(ExperimentConfig(n_rounds=300, strategy="ancilla:d=0.3",
                                            master_seed=100, trials=2)).to_json()
        assert a != c

    def test_trial_prefix_stable(self):
        # trial 0 does not depend on how many trials follow it
        one, two = [], []
        run_experiment(ExperimentConfig(n_rounds=50, strategy="ancilla:d=0.5", trials=1),
                       on_record=lambda t, r: one.append(r.to_json()))
        run_experiment(ExperimentConfig(n_rounds=50, strategy="ancilla:d=0.5", trials=2),
                       on_record=lambda t, r: two.append(r.to_json()) if t == 0 else None)
        assert one == two

    def test_halt_geometric(self):
        """Halt round under p = 1/2 is geometric with mean 2 and variance 2."""
        n = 4000
        s = run_experiment(ExperimentConfig(n_rounds=200, strategy="ancilla:d=0.5",
                                            stop_on_intrusion=True, trials=n, master_seed=5))
        assert s.halted + s.censored == n and s.censored == 0
        assert abs(s.halt_mean - 2.0) <= 3 * math.sqrt(2.0 / n)
        assert s.intrusions == s.halted

    def test_histogram_conservation(self):
        s = run_experiment(ExperimentConfig(n_rounds=300, strategy="ancilla:d=0.5",
                                            stop_on_intrusion=True, trials=20))
        assert sum(s.histogram) == s.rounds == sum(s.cells.values())
        assert s.bit_total + s.intrusions == s.rounds

    def test_censored_trials(self):
        s = run_experiment(ExperimentConfig(n_rounds=5, strategy="none",
                                            stop_on_intrusion=True, trials=3))
        assert s.censored == 3 and s.halt_mean is None

    def test_stats_json_shape(self):
        s = run_experiment(ExperimentConfig(n_rounds=20, strategy="intercept_resend"))
        d = json.loads(s.to_json())
        assert set(d["histogram"]) == {"PsiPlus", "PsiMinus", "PhiPlus", "PhiMinus"}
        assert d["strategy"] == "intercept_resend:basis=computational"


class TestOracleCoherence:
    @pytest.mark.parametrize("strategy", ["ancilla:d=0.25", "intercept_resend:basis=diagonal"])
    def test_small_sample(self, strategy):
        s = run_experiment(ExperimentConfig(n_rounds=8000, strategy=strategy, master_seed=3))
        checks = compare_with_oracle(s, strategy)
        assert checks and all(c.passed for c in checks)

    def test_detects_mismatch(self):
        s = run_experiment(ExperimentConfig(n_rounds=4000, strategy="ancilla:d=0.5", master_seed=3))
        # the sampled ancilla(0.5) data cannot pass as ancilla(0.1)
        assert not all(c.passed for c in compare_with_oracle(s, "ancilla:d=0.1"))

    def test_none_cells_exact(self):
        s = run_experiment(ExperimentConfig(n_rounds=500, strategy="none"))
        checks = compare_with_oracle(s, "none")
        assert {c.mode for c in checks} <= {"exact"}
        assert all(c.passed for c in checks)
