"""Monte Carlo runner, exact branch-enumeration oracle and detection statistics."""

from __future__ import annotations

import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .adversary import AncillaAttack, InterceptResend, parse_strategy
from .protocol import ANCILLA, HOME, NO_TAP, TRAVEL, ChannelTap, RoundRecord, run_round
from .quantum_core import BELL_ORDER, PAULI_Z, BellLabel, make_bell

DEFAULT_SEED = 20021029
DEFAULT_BUDGET = 10**8
PREPARATIONS = (BellLabel.PsiPlus, BellLabel.PhiPlus)
MIN_EXPECTED_FOR_SIGMA = 25.0

StrategyLike = Union[str, ChannelTap, None]


class ExperimentError(ValueError):
    pass


def resolve_strategy(strategy: StrategyLike) -> ChannelTap:
    if strategy is None:
        return NO_TAP
    if isinstance(strategy, str):
        return parse_strategy(strategy)
    return strategy


# ---------------------------------------------------------------------------
# exact oracle

def _lift(op: np.ndarray, dims: Sequence[int], axes: Sequence[int]) -> np.ndarray:
    """Full-space matrix of ``op`` on ``axes`` by explicit index enumeration."""
    n = int(np.prod(dims))
    full = np.zeros((n, n), dtype=np.complex128)
    tdims = [dims[a] for a in axes]
    rest = [i for i in range(len(dims)) if i not in axes]
    multi = list(itertools.product(*(range(d) for d in dims)))
    for r, row in enumerate(multi):
        for c, col in enumerate(multi):
            if any(row[i] != col[i] for i in rest):
                continue
            ti = np.ravel_multi_index([row[a] for a in axes], tdims)
            tj = np.ravel_multi_index([col[a] for a in axes], tdims)
            full[r, c] = op[ti, tj]
    return full


class _Branches:
    """Unnormalized density matrices keyed by Eve's outcome tuple."""

    def __init__(self, rho: np.ndarray, names: list[str], dims: list[int]):
        self.items = {(): rho}
        self.names = names
        self.dims = dims

    def attach(self, name: str, ket: np.ndarray) -> None:
        proj = np.outer(ket, ket.conj())
        self.items = {k: np.kron(r, proj) for k, r in self.items.items()}
        self.names.append(name)
        self.dims.append(len(ket))

    def conjugate(self, op: np.ndarray, targets: Sequence[str]) -> None:
        full = _lift(op, self.dims, [self.names.index(t) for t in targets])
        self.items = {k: full @ r @ full.conj().T for k, r in self.items.items()}

    def measure(self, projectors: Sequence[np.ndarray], targets: Sequence[str]) -> None:
        lifted = [_lift(p, self.dims, [self.names.index(t) for t in targets]) for p in projectors]
        out = {}
        for key, rho in self.items.items():
            for k, p in enumerate(lifted):
                out[key + (k,)] = p @ rho @ p
        self.items = out

    def bob_probabilities(self, key) -> list[float]:
        # travel and home are always the first two subsystems here
        rest = int(np.prod(self.dims[2:]))
        rho = self.items[key].reshape(4, rest, 4, rest)
        rho_ab = np.trace(rho, axis1=1, axis2=3)
        return [float(np.real(np.vdot(b.amplitudes, rho_ab @ b.amplitudes)))
                for b in (make_bell(label, (TRAVEL, HOME)) for label in BELL_ORDER)]


def _bell_density(label: BellLabel) -> np.ndarray:
    v = make_bell(label, (TRAVEL, HOME)).amplitudes
    return np.outer(v, v.conj())


def exact_round_distribution(prepared: BellLabel, alice_bit: int,
                             strategy: StrategyLike) -> dict[tuple, float]:
    """Joint probabilities of (Eve's outcome tuple, Bob's Bell label) for one round.

    Independent of the sampler: evolves density matrices with operators lifted
    by explicit index enumeration and splits every Eve measurement into branches.
    """
    tap = resolve_strategy(strategy)
    if prepared not in PREPARATIONS:
        raise ExperimentError(f"Bob never prepares {prepared.name}")
    if alice_bit not in (0, 1):
        raise ExperimentError("alice_bit must be 0 or 1")
    br = _Branches(_bell_density(prepared), [TRAVEL, HOME], [2, 2])

    if isinstance(tap, AncillaAttack):
        br.attach(ANCILLA, tap.cfg.chi)
        br.conjugate(tap.unitary.matrix, [TRAVEL, ANCILLA])
    elif isinstance(tap, InterceptResend):
        projs = [np.outer(b.amplitudes, b.amplitudes.conj()) for b in tap.basis]
        br.measure(projs, [TRAVEL])
    elif type(tap) is not ChannelTap:
        raise ExperimentError(f"no exact model for strategy {tap!r}")

    if alice_bit == 1:
        br.conjugate(PAULI_Z, [TRAVEL])

    if isinstance(tap, AncillaAttack):
        br.measure(tap.projectors, [TRAVEL, ANCILLA])
    elif isinstance(tap, InterceptResend):
        br.measure(projs, [TRAVEL])

    dist: dict[tuple, float] = {}
    for key in br.items:
        for label, p in zip(BELL_ORDER, br.bob_probabilities(key)):
            dist[(key, label)] = max(p, 0.0) if abs(p) > 1e-15 else 0.0
    return dist


def bell_marginal(dist: dict[tuple, float]) -> list[float]:
    out = [0.0] * 4
    for (_, label), p in dist.items():
        out[label.value] += p
    return out


def wrong_family_probability(prepared: BellLabel, alice_bit: int, strategy: StrategyLike) -> float:
    marg = bell_marginal(exact_round_distribution(prepared, alice_bit, strategy))
    return sum(p for label, p in zip(BELL_ORDER, marg) if label.family != prepared.family)


def detection_probability(strategy: StrategyLike) -> float:
    """Per-round intrusion probability, uniform over Bob's preparation and Alice's bit."""
    tap = resolve_strategy(strategy)
    return sum(wrong_family_probability(prep, bit, tap)
               for prep in PREPARATIONS for bit in (0, 1)) / 4.0


def eve_accuracy_exact(strategy: StrategyLike) -> Optional[float]:
    tap = resolve_strategy(strategy)
    infer = getattr(tap, "infer_operation", None)
    if infer is None:
        return None
    total = 0.0
    for prep in PREPARATIONS:
        for bit in (0, 1):
            for (branch, _), p in exact_round_distribution(prep, bit, tap).items():
                if infer(branch).bit == bit:
                    total += p / 4.0
    return total


def detection_probability_for_d(d: float, chi: str = "orthonormal") -> float:
    return detection_probability(f"ancilla:d={float(d)!r},chi={chi}")


# ---------------------------------------------------------------------------
# survival

@dataclass(frozen=True)
class SurvivalQuery:
    n: int
    p: float

    def __post_init__(self):
        if self.n < 0 or int(self.n) != self.n:
            raise ExperimentError("n must be a non-negative integer")
        if not 0.0 <= self.p <= 1.0:
            raise ExperimentError("p must lie in [0, 1]")


def survival_probability(q: SurvivalQuery) -> float:
    """log10 of (1 - p)^n; ``-inf`` when p = 1 and n > 0."""
    if q.n == 0 or q.p == 0.0:
        return 0.0
    if q.p == 1.0:
        return -math.inf
    return q.n * math.log1p(-q.p) / math.log(10.0)


def format_log10(log10_value: float, digits: int = 3) -> str:
    """Render 10**log10_value in short scientific form, e.g. ``9.33e-302``.

    Exactly 1 renders as ``1`` and an underflowed -inf as ``0``.
    """
    if log10_value == 0.0:
        return "1"
    if log10_value == -math.inf:
        return "0"
    exponent = math.floor(log10_value)
    mantissa = round(10.0 ** (log10_value - exponent), digits - 1)
    if mantissa >= 10.0:
        mantissa /= 10.0
        exponent += 1
    return f"{mantissa:.{digits - 1}f}e{exponent}"


@dataclass(frozen=True)
class CurveRow:
    d: float
    n: int
    p_detect: float
    log10_survival: float

    def csv(self) -> str:
        return f"{self.d:.6g},{self.n},{self.p_detect:.12f},{self.log10_survival:.10f}"


CSV_HEADER = "d,n,p_detect,log10_survival"


def success_curve(d_grid: Sequence[float], n_grid: Sequence[int],
                  chi: str = "orthonormal") -> list[CurveRow]:
    """Undetected-survival surface over (d, n) for the ancilla attack."""
    if not d_grid or not n_grid:
        raise ExperimentError("d and n grids must be nonempty")
    rows = []
    for d in d_grid:
        if not 0.0 <= d <= 1.0:
            raise ExperimentError(f"d={d} outside [0, 1]")
        p = detection_probability_for_d(d, chi)
        # snap oracle round-off so d = 0 and d = 1 land exactly on 0 and 1
        p = 0.0 if p < 1e-15 else 1.0 if p > 1.0 - 1e-15 else p
        for n in n_grid:
            rows.append(CurveRow(d, int(n), p, survival_probability(SurvivalQuery(int(n), p))))
    return rows


def curve_to_csv(rows: Iterable[CurveRow]) -> str:
    return "\n".join([CSV_HEADER, *(r.csv() for r in rows)]) + "\n"


# ---------------------------------------------------------------------------
# Monte Carlo

@dataclass(frozen=True)
class ExperimentConfig:
    n_rounds: int
    strategy: str = "none"
    bit_source: str = "random"  # "random" or "pattern:<0/1 string>", cycled
    stop_on_intrusion: bool = False
    master_seed: int = DEFAULT_SEED
    trials: int = 1
    budget: int = DEFAULT_BUDGET

    def validate(self) -> None:
        if self.n_rounds < 0 or self.trials < 1:
            raise ExperimentError("n_rounds must be >= 0 and trials >= 1")
        if self.n_rounds * self.trials > self.budget:
            raise ExperimentError(
                f"{self.n_rounds * self.trials} round evaluations exceed the budget of {self.budget}"
            )
        if self.bit_source != "random":
            self.pattern()

    def pattern(self) -> list[int]:
        if not self.bit_source.startswith("pattern:"):
            raise ExperimentError(f"unknown bit source {self.bit_source!r}")
        bits = self.bit_source.split(":", 1)[1]
        if not bits or set(bits) - {"0", "1"}:
            raise ExperimentError("bit pattern must be a nonempty string of 0/1")
        return [int(b) for b in bits]


def trial_streams(master_seed: int, trial: int) -> tuple[np.random.Generator, np.random.Generator]:
    """(protocol RNG, bit-source RNG) for one trial; fixed split of the master seed."""
    mk = lambda stream: np.random.default_rng(
        np.random.SeedSequence(master_seed, spawn_key=(trial, stream)))
    return mk(0), mk(1)


@dataclass
class ExperimentStats:
    strategy: str
    trials: int = 0
    rounds: int = 0
    histogram: list = field(default_factory=lambda: [0, 0, 0, 0])
    intrusions: int = 0
    bit_errors: int = 0
    bit_total: int = 0
    eve_rounds: int = 0
    eve_correct: int = 0
    halted: int = 0
    halt_round_sum: int = 0
    halt_round_sumsq: int = 0
    censored: int = 0
    cells: Counter = field(default_factory=Counter)
    decoded_message: Optional[str] = None

    def record(self, rec: RoundRecord) -> None:
        self.rounds += 1
        self.histogram[rec.measured.value] += 1
        branch = ()
        if rec.eve is not None:
            branch = rec.eve.branch
            if rec.eve.inferred_operation is not None:
                self.eve_rounds += 1
                self.eve_correct += rec.eve.inferred_operation.bit == rec.alice_bit
        self.cells[(rec.prepared, rec.alice_bit, branch, rec.measured)] += 1
        if rec.decoded.is_intrusion:
            self.intrusions += 1
        else:
            self.bit_total += 1
            self.bit_errors += rec.decoded.bit != rec.alice_bit

    def record_halt(self, halt_round: Optional[int]) -> None:
        if halt_round is None:
            self.censored += 1
        else:
            self.halted += 1
            self.halt_round_sum += halt_round
            self.halt_round_sumsq += halt_round * halt_round

    def merge(self, other: "ExperimentStats") -> "ExperimentStats":
        out = ExperimentStats(self.strategy)
        for name in ("trials", "rounds", "intrusions", "bit_errors", "bit_total", "eve_rounds",
                     "eve_correct", "halted", "halt_round_sum", "halt_round_sumsq", "censored"):
            setattr(out, name, getattr(self, name) + getattr(other, name))
        out.histogram = [a + b for a, b in zip(self.histogram, other.histogram)]
        out.cells = self.cells + other.cells
        out.decoded_message = self.decoded_message or other.decoded_message
        return out

    @property
    def p_hat(self) -> float:
        return self.intrusions / self.rounds if self.rounds else 0.0

    @property
    def p_hat_se(self) -> float:
        if not self.rounds:
            return 0.0
        p = self.p_hat
        return math.sqrt(p * (1.0 - p) / self.rounds)

    @property
    def bit_error_rate(self) -> Optional[float]:
        return self.bit_errors / self.bit_total if self.bit_total else None

    @property
    def eve_accuracy(self) -> Optional[float]:
        return self.eve_correct / self.eve_rounds if self.eve_rounds else None

    @property
    def halt_mean(self) -> Optional[float]:
        return self.halt_round_sum / self.halted if self.halted else None

    @property
    def halt_std(self) -> Optional[float]:
        if self.halted < 2:
            return None
        mean = self.halt_round_sum / self.halted
        var = (self.halt_round_sumsq - self.halted * mean * mean) / (self.halted - 1)
        return math.sqrt(max(var, 0.0))

    def to_dict(self) -> dict:
        d = {
            "strategy": self.strategy,
            "trials": self.trials,
            "rounds": self.rounds,
            "histogram": dict(zip((b.name for b in BELL_ORDER), self.histogram)),
            "intrusions": self.intrusions,
            "p_hat": self.p_hat,
            "p_hat_se": self.p_hat_se,
            "bit_errors": self.bit_errors,
            "bit_total": self.bit_total,
            "bit_error_rate": self.bit_error_rate,
            "eve_rounds": self.eve_rounds,
            "eve_accuracy": self.eve_accuracy,
            "halt": {
                "halted": self.halted,
                "censored": self.censored,
                "mean": self.halt_mean,
                "std": self.halt_std,
            },
        }
        if self.decoded_message is not None:
            d["decoded_message"] = self.decoded_message
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


RecordSink = Callable[[int, RoundRecord], None]


def run_experiment(cfg: ExperimentConfig, on_record: Optional[RecordSink] = None) -> ExperimentStats:
    """Run ``cfg.trials`` independent repetitions of up to ``cfg.n_rounds`` rounds.

    In stop mode a trial ends at its first intrusion and the 1-based halt round
    is recorded; trials that never see one are counted as censored.
    """
    cfg.validate()
    tap = resolve_strategy(cfg.strategy)
    pattern = cfg.pattern() if cfg.bit_source != "random" else None
    total = ExperimentStats(tap.descriptor)
    for trial in range(cfg.trials):
        rand, bit_rand = trial_streams(cfg.master_seed, trial)
        stats = ExperimentStats(tap.descriptor, trials=1)
        halt = None
        for i in range(cfg.n_rounds):
            bit = pattern[i % len(pattern)] if pattern else int(bit_rand.integers(2))
            rec = run_round(bit, tap, rand, round_index=i)
            stats.record(rec)
            if on_record is not None:
                on_record(trial, rec)
            if cfg.stop_on_intrusion and rec.decoded.is_intrusion:
                halt = i + 1
                break
        if cfg.stop_on_intrusion:
            stats.record_halt(halt)
        total = total.merge(stats)
    return total


# ---------------------------------------------------------------------------
# sampler vs oracle

@dataclass(frozen=True)
class CellCheck:
    prepared: BellLabel
    alice_bit: int
    branch: tuple
    measured: BellLabel
    group_size: int
    expected_p: float
    observed: int
    mode: str  # "sigma" or "exact"
    passed: bool

    @property
    def z(self) -> float:
        mean = self.group_size * self.expected_p
        var = mean * (1.0 - self.expected_p)
        return (self.observed - mean) / math.sqrt(var) if var > 0 else 0.0


def compare_with_oracle(stats: ExperimentStats, strategy: StrategyLike,
                        n_sigma: float = 3.0) -> list[CellCheck]:
    """Check every (prepared, bit, Eve branch, Bell outcome) cell against the oracle.

    Within each (prepared, bit) group the count of a cell is binomial; cells with
    expected count >= 25 are tested at ``n_sigma``, the rest must match exactly
    where the oracle says the probability is zero and are otherwise exempt.
    """
    tap = resolve_strategy(strategy)
    checks = []
    for prep in PREPARATIONS:
        for bit in (0, 1):
            dist = exact_round_distribution(prep, bit, tap)
            group = sum(c for (p, b, _, _), c in stats.cells.items() if p is prep and b == bit)
            keys = set(dist) | {(br, m) for (p, b, br, m) in stats.cells if p is prep and b == bit}
            for branch, measured in sorted(keys, key=lambda k: (k[0], k[1].value)):
                p = dist.get((branch, measured), 0.0)
                obs = stats.cells.get((prep, bit, branch, measured), 0)
                expected = group * p
                if p >= 1.0 - 1e-12:
                    ok, mode = obs == group, "exact"
                elif expected >= MIN_EXPECTED_FOR_SIGMA:
                    sd = math.sqrt(expected * (1.0 - p))
                    ok, mode = abs(obs - expected) <= n_sigma * sd, "sigma"
                elif p == 0.0:
                    ok, mode = obs == 0, "exact"
                else:
                    ok, mode = True, "exempt"
                checks.append(CellCheck(prep, bit, branch, measured, group, p, obs, mode, ok))
    return checks
