import logging
import math

import numpy as np

from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum, StrEnum
from fractions import Fraction
from typing import Any

from .duality_const import (
    BA_POPULATION_CAP,
    DEFAULT_SDE_DT,
    TOL_DUALITY,
    TOL_ENTRY,
    TOL_EXACT,
    TOL_EXTREMAL,
    TOL_LP,
    TOL_PIVOT,
    TOL_REVERSIBLE,
    TOL_ROW,
    TOL_SEMIGROUP,
    TOL_SPECTRAL,
)
from .duality_core import (
    DualityDataError,
    DualityMatrix,
    GeneratorMatrix,
    StochasticMatrix,
    config_to_index,
    index_to_config,
)


_LOGGER = logging.getLogger(__name__)


class DualityStatus(StrEnum):
    EXISTS_STOCHASTIC = "exists_stochastic"
    EXISTS_SIGNED_ONLY = "exists_signed_only"
    NONE = "none"

class TensorKind(StrEnum):
    COALESCING = "coalescing"
    ANNIHILATING = "annihilating"
    Q = "q"
    SUBSET = "subset"

class ReportFormat(StrEnum):
    JSON = "json"
    CSV = "csv"

class MomentChain(StrEnum):
    WRIGHT_FISHER = "wright-fisher"
    KINGMAN = "kingman"


@dataclass(frozen=True)
class Tolerances:
    entry: float = TOL_ENTRY
    row: float = TOL_ROW
    duality: float = TOL_DUALITY
    semigroup: float = TOL_SEMIGROUP
    spectral: float = TOL_SPECTRAL
    lp: float = TOL_LP
    pivot: float = TOL_PIVOT
    extremal: float = TOL_EXTREMAL
    reversible: float = TOL_REVERSIBLE
    exact: float = TOL_EXACT

    def override(self, **kwargs) -> 'Tolerances':
        """Copy with the given non-None values replaced"""
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


DEFAULT_TOLERANCES = Tolerances()


#
# algebra results
#

@dataclass
class GeneratorDualityReport:
    residual: float
    semigroup_residuals: dict[float, float]
    passed: bool


@dataclass
class DualitySolveResult:
    status: DualityStatus
    dual: np.ndarray|None
    residuals: list[float]
    unique: bool
    violating_column: int|None = None


@dataclass
class InvarianceReport:
    invariant: bool
    violating_column: int|None
    certificates: list[list[float]|None]
    residuals: list[float]


@dataclass
class MonotoneReport:
    monotone: bool
    witness: tuple[int, int, int]|None = None


@dataclass
class SiegmundDual:
    matrix: StochasticMatrix
    defect: np.ndarray
    residual: float

    @property
    def cemetery(self) -> int:
        return self.matrix.n_rows - 1

    def restricted(self) -> np.ndarray:
        """Dual kernel on E with the cemetery row and column dropped"""
        return self.matrix.entries[:-1, :-1]


@dataclass
class MeasureDualityData:
    measure: np.ndarray
    support: tuple[int, ...]
    duality: DualityMatrix


@dataclass
class SpectrumReport:
    passed: bool
    max_distance: float
    eigenvalues_p: list[complex]
    eigenvalues_q: list[complex]
    mismatches: list[tuple[complex, complex, float]]


@dataclass
class IntertwiningReport:
    intertwining_residual: float
    reversibility_residual_p: float
    reversibility_residual_q: float
    passed: bool


@dataclass
class UnitaryReport:
    unitarity_residual: float
    conjugation_residual: float
    passed: bool
    unitary: np.ndarray|None = None


@dataclass
class NondegeneracyReport:
    rank: int
    invertible: bool
    right_null_space: np.ndarray|None = None
    left_null_space: np.ndarray|None = None


@dataclass
class ResolventReport:
    residual: float
    weak_residual: float
    passed: bool
    kernel: np.ndarray|None = None


@dataclass
class SepInstance:
    generator: GeneratorMatrix
    duality: DualityMatrix
    link: StochasticMatrix


@dataclass
class SepReport:
    sites: int
    commutation_residual: float
    duality_residual: float
    harmonic_residual: float
    link_residual: float
    passed: bool


#
# cone results
#

@dataclass
class ExtremalStructure:
    columns: np.ndarray
    extremal_indices: tuple[int, ...]
    representatives: tuple[int, ...]
    duplicates: dict[int, tuple[int, ...]]
    simplex: bool|None = None
    kernel: np.ndarray|None = None
    kernel_exact: list[list[Fraction]]|None = None

    @property
    def n_columns(self) -> int:
        return self.columns.shape[1]


@dataclass
class ConeDual:
    extremal_indices: tuple[int, ...]
    kernel: np.ndarray
    R: np.ndarray
    projection: np.ndarray
    dual: np.ndarray
    continuous: bool = False
    lam: int|None = None
    residual: float|None = None
    intertwining_residual: float|None = None


@dataclass
class ContinuousDualResult:
    generator: GeneratorMatrix
    lam: int
    b_pi: np.ndarray
    r_generator: np.ndarray
    projection: np.ndarray
    residual: float
    semigroup_residuals: dict[float, float] = field(default_factory=dict)


#
# pathsim types
#

@dataclass(frozen=True)
class BasicMechanism:
    name: str
    outputs: tuple[tuple[int, int], ...]    # indexed by 2*a + b

    def __call__(self, a: int, b: int) -> tuple[int, int]:
        return self.outputs[2*a + b]

    def as_table(self) -> dict[tuple[int, int], tuple[int, int]]:
        return { (a, b): self.outputs[2*a + b] for a in (0, 1) for b in (0, 1) }

    @staticmethod
    def create(name: str, table: dict|list|tuple) -> 'BasicMechanism':
        if isinstance(table, dict):
            missing = [(a, b) for a in (0, 1) for b in (0, 1) if (a, b) not in table]
            if missing:
                error = f"Mechanism '{name}' is not total: no image for {missing}"
                _LOGGER.debug(error)
                raise DualityDataError(error)
            values = [table[(a, b)] for a in (0, 1) for b in (0, 1)]
        else:
            values = list(table)

        if len(values) != 4 or any(len(v) != 2 or not set(v) <= {0, 1} for v in values):
            error = f"Mechanism '{name}' must map the four pairs of {{0,1}}^2 into {{0,1}}^2, got {values}"
            _LOGGER.debug(error)
            raise DualityDataError(error)

        return BasicMechanism(name=name, outputs=tuple((int(v[0]), int(v[1])) for v in values))


@dataclass(frozen=True)
class QParameter:
    value: Fraction

    def __str__(self) -> str:
        return f"{self.value.numerator}/{self.value.denominator}"

    def __float__(self) -> float:
        return float(self.value)

    def power(self, k: int) -> Fraction:
        """q^k with 0^0 = 1"""
        return Fraction(1) if k == 0 else self.value ** k

    @staticmethod
    def create(q: Any) -> 'QParameter':
        try:
            if isinstance(q, QParameter):
                value = q.value
            elif isinstance(q, str):
                value = Fraction(q.strip())
            elif isinstance(q, float):
                value = Fraction(q).limit_denominator(10**12)
            else:
                value = Fraction(q)
        except (ValueError, ZeroDivisionError, TypeError) as ex:
            error = f"Invalid rational q '{q}': {ex}"
            _LOGGER.debug(error)
            raise DualityDataError(error)

        if not (-1 <= value < 1):
            error = f"q must lie in [-1, 1), got {value}"
            _LOGGER.debug(error)
            raise DualityDataError(error)

        return QParameter(value=value)


@dataclass(frozen=True)
class SpinConfiguration:
    bits: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.bits)

    def count(self) -> int:
        return sum(self.bits)

    def meet(self, other: 'SpinConfiguration') -> 'SpinConfiguration':
        return SpinConfiguration(tuple(a & b for a, b in zip(self.bits, other.bits)))

    def overlap(self, other: 'SpinConfiguration') -> int:
        """|x ∧ y|"""
        return sum(a & b for a, b in zip(self.bits, other.bits))

    def complement(self) -> 'SpinConfiguration':
        return SpinConfiguration(tuple(1 - a for a in self.bits))

    def leq(self, other: 'SpinConfiguration') -> bool:
        return all(a <= b for a, b in zip(self.bits, other.bits))

    def index(self) -> int:
        return config_to_index(self.bits)

    @staticmethod
    def from_index(index: int, n_sites: int) -> 'SpinConfiguration':
        return SpinConfiguration(index_to_config(index, n_sites))

    @staticmethod
    def create(bits: Any) -> 'SpinConfiguration':
        if isinstance(bits, str):
            bits = [int(c) for c in bits if c in "01"]
        values = tuple(int(b) for b in bits)
        if any(b not in (0, 1) for b in values):
            error = f"Spin configuration must be 0/1 valued, got {values}"
            _LOGGER.debug(error)
            raise DualityDataError(error)
        return SpinConfiguration(values)


@dataclass(frozen=True, order=True)
class ArrowEvent:
    time: float
    i: int
    j: int
    label: str


@dataclass(frozen=True)
class RateTable:
    n_sites: int
    rates: dict[tuple[int, int, str], float]

    def labels(self) -> list[str]:
        return sorted({k for (_, _, k) in self.rates})

    def streams(self) -> list[tuple[int, int, str, float]]:
        """Ordered (i, j, label, rate) for every positive rate"""
        return [(i, j, k, r) for (i, j, k), r in sorted(self.rates.items()) if r > 0]

    def total_rate(self) -> float:
        return math.fsum(r for r in self.rates.values())

    def is_symmetric(self) -> bool:
        for (i, j, k), r in self.rates.items():
            if self.rates.get((j, i, k), 0.0) != r:
                return False
        return True

    def transposed(self) -> 'RateTable':
        return RateTable(self.n_sites, { (j, i, k): r for (i, j, k), r in self.rates.items() })

    @staticmethod
    def create(n_sites: int, rates: dict[tuple[int, int, str], float]) -> 'RateTable':
        table = {}
        for (i, j, k), r in rates.items():
            if i == j or not (0 <= i < n_sites) or not (0 <= j < n_sites):
                error = f"Invalid arrow {i}->{j} for {n_sites} sites"
                _LOGGER.debug(error)
                raise DualityDataError(error)
            if not math.isfinite(r) or r < 0:
                error = f"Rate for arrow {i}->{j} '{k}' must be finite and nonnegative, got {r}"
                _LOGGER.debug(error)
                raise DualityDataError(error)
            if r > 0:
                table[(int(i), int(j), str(k))] = float(r)
        return RateTable(n_sites=n_sites, rates=table)


@dataclass(frozen=True)
class GraphicalRepresentation:
    n_sites: int
    horizon: float
    rates: RateTable
    events: tuple[ArrowEvent, ...]
    seed: int|None = None
    time_reversed: bool = False

    def arrows(self) -> list[ArrowEvent]:
        """
        Events in reading order, in this representation's clock.
        A reversed representation reads the stored events from last to first
        as arrows j->i at time horizon - t.
        """
        if not self.time_reversed:
            return list(self.events)
        return [ArrowEvent(self.horizon - e.time, e.j, e.i, e.label) for e in reversed(self.events)]

    def reversed(self) -> 'GraphicalRepresentation':
        return replace(self, time_reversed = not self.time_reversed)


@dataclass(frozen=True)
class TrajectoryDelta:
    time: float
    i: int
    j: int
    label: str
    bit_i: int
    bit_j: int


@dataclass
class Trajectory:
    initial: SpinConfiguration
    final: SpinConfiguration
    deltas: list[TrajectoryDelta]

    def states(self) -> list[SpinConfiguration]:
        """Configuration after each applied event, starting with the initial one"""
        bits = list(self.initial.bits)
        states = [self.initial]
        for d in self.deltas:
            bits[d.i], bits[d.j] = d.bit_i, d.bit_j
            states.append(SpinConfiguration(tuple(bits)))
        return states


@dataclass
class MechanismDualityReport:
    dual: bool
    q: str
    witness: tuple[tuple[int, int], tuple[int, int]]|None = None


@dataclass
class MechanismMonotoneReport:
    monotone: bool
    witness: tuple[tuple[int, int], tuple[int, int]]|None = None


@dataclass
class PathwiseReport:
    passed: bool
    pairs_checked: int
    events: int
    witness: dict|None = None


@dataclass
class WalkPathwiseReport:
    passed: bool
    forward: list[int]
    backward: list[int]
    indicators: list[int]
    order_preserved: bool


#
# scaling specs and reports
#

@dataclass(frozen=True)
class CountChainSpec:
    N: int
    r: float
    b: float
    horizon: float
    k0: int

    @staticmethod
    def create(N: int, r: float, b: float, horizon: float, k0: int) -> 'CountChainSpec':
        if N < 1 or r < 0 or b < 0 or horizon < 0 or not (0 <= k0 <= N):
            error = f"Invalid count chain: N={N}, r={r}, b={b}, T={horizon}, k0={k0}"
            _LOGGER.debug(error)
            raise DualityDataError(error)
        return CountChainSpec(N=int(N), r=float(r), b=float(b), horizon=float(horizon), k0=int(k0))


@dataclass(frozen=True)
class SdeSpec:
    alpha: float
    beta: float
    x0: float
    horizon: float
    dt: float = DEFAULT_SDE_DT

    @staticmethod
    def create(alpha: float, beta: float, x0: float, horizon: float, dt: float = DEFAULT_SDE_DT) -> 'SdeSpec':
        if alpha < 0 or beta < 0 or not (0.0 <= x0 <= 1.0) or dt <= 0 or horizon < 0:
            error = f"Invalid SDE: alpha={alpha}, beta={beta}, x0={x0}, dt={dt}, T={horizon}"
            _LOGGER.debug(error)
            raise DualityDataError(error)
        return SdeSpec(alpha=float(alpha), beta=float(beta), x0=float(x0), horizon=float(horizon), dt=float(dt))


@dataclass(frozen=True)
class BranchingAnnihilatingSpec:
    beta: float
    alpha: float
    n0: int
    horizon: float
    cap: int = BA_POPULATION_CAP

    @staticmethod
    def create(beta: float, alpha: float, n0: int, horizon: float, cap: int = BA_POPULATION_CAP) -> 'BranchingAnnihilatingSpec':
        if beta < 0 or alpha < 0 or n0 < 0 or horizon < 0 or cap < n0:
            error = f"Invalid branching-annihilating chain: beta={beta}, alpha={alpha}, n0={n0}, T={horizon}, cap={cap}"
            _LOGGER.debug(error)
            raise DualityDataError(error)
        return BranchingAnnihilatingSpec(beta=float(beta), alpha=float(alpha), n0=int(n0), horizon=float(horizon), cap=int(cap))


@dataclass
class SimulationReport:
    labels: list[str]
    estimates: list[float]
    standard_errors: list[float]
    replicas: int
    seed: int
    passed: bool
    criterion: str
    elapsed: float|None = field(default=None, compare=False)
    extra: dict[str, Any]|None = None


@dataclass
class ConvergenceRow:
    N: int
    lhs: float
    rhs: float
    gap: float
    se: float
    limit_lhs: float
    limit_rhs: float
    hyp_lhs: float
    hyp_rhs: float
    hyp_gap: float
    hyp_se: float
    limit_gap: float
    limit_se: float


@dataclass
class ConvergenceTable:
    rows: list[ConvergenceRow]
    fitted_c: float
    limit_identity_gap: float
    limit_identity_se: float
    hypotheses: dict[str, str]
    passed: bool
    criterion: str
    replicas: int
    seed: int
    elapsed: float|None = field(default=None, compare=False)


@dataclass
class MonotoneLimitReport:
    chain: MomentChain
    z_grid: list[float]
    low_tail: list[float]
    high_tail: list[float]
    se_low: list[float]
    se_high: list[float]
    ordered: bool
    replicas: int
    seed: int
    witness: float|None = None


#
# diagnostics
#

@dataclass
class RunnerHistoryItem:
    ts: datetime
    op: str
    batch: int
    elapsed: float

    @staticmethod
    def create(timestamp: datetime, context: str, batch: int, elapsed: float) -> 'RunnerHistoryItem':
        return RunnerHistoryItem(ts=timestamp, op=context, batch=batch, elapsed=elapsed)


def jsonable(value: Any) -> Any:
    """Convert numpy, Fraction, complex and enum values into plain JSON types"""
    match value:
        case np.ndarray():
            return [jsonable(v) for v in value.tolist()] if value.ndim else jsonable(value.item())
        case np.generic():
            return jsonable(value.item())
        case bool() | int() | str() | None:
            return value
        case float():
            return value if math.isfinite(value) else str(value)
        case Fraction():
            return f"{value.numerator}/{value.denominator}"
        case complex():
            return [jsonable(value.real), jsonable(value.imag)]
        case Enum():
            return value.value
        case datetime():
            return value.isoformat()
        case dict():
            return { (k if isinstance(k, str) else str(jsonable(k))): jsonable(v) for k, v in value.items() }
        case list() | tuple():
            return [jsonable(v) for v in value]
        case _:
            return str(value)


class DualityDictFactory:
    @staticmethod
    def exclude_none_values(x):
        """
        Usage:
          item = SimulationReport(...)
          item_as_dict = asdict(item, dict_factory=DualityDictFactory.exclude_none_values)
        """
        return { k: jsonable(v) for (k, v) in x if v is not None }
