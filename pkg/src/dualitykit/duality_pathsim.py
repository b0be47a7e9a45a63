"""pathsim.py: graphical representations, basic mechanisms and pathwise duality for spin systems."""

import functools
import itertools
import logging
import math
import zlib

import numpy as np
import scipy.stats

from dataclasses import dataclass, field
from datetime import datetime
from fractions import Fraction
from typing import Any, Iterable

from .duality_const import (
    DEFAULT_N_SE,
    HYPERGEOMETRIC_EXACT_MAX,
    STREAM_ARROWS,
    STREAM_INITIAL,
    STREAM_TYPES,
)
from .duality_core import (
    DualityDataError,
    DualityMatrix,
    DualityPreconditionError,
    GeneratorMatrix,
    index_to_config,
)
from .duality_data import (
    ArrowEvent,
    BasicMechanism,
    GraphicalRepresentation,
    MechanismDualityReport,
    MechanismMonotoneReport,
    PathwiseReport,
    QParameter,
    RateTable,
    SimulationReport,
    SpinConfiguration,
    Trajectory,
    TrajectoryDelta,
    WalkPathwiseReport,
)
from .duality_runner import (
    DualityRunner_Base,
    batch_plan,
    mean_and_se,
)

_LOGGER = logging.getLogger(__name__)

PAIRS = ((0, 0), (0, 1), (1, 0), (1, 1))

MECHANISM_IDENTITY = BasicMechanism.create("I", [(0, 0), (0, 1), (1, 0), (1, 1)])


def standard_mechanisms() -> dict[str, BasicMechanism]:
    """The six basic mechanisms; images listed for inputs (0,0), (0,1), (1,0), (1,1)."""
    return {
        "R":  BasicMechanism.create("R",  [(0, 0), (0, 0), (1, 1), (1, 1)]),   # resampling
        "C":  BasicMechanism.create("C",  [(0, 0), (0, 1), (0, 1), (0, 1)]),   # walk-coalescence
        "A":  BasicMechanism.create("A",  [(0, 0), (0, 1), (0, 1), (0, 0)]),   # walk-annihilation
        "D":  BasicMechanism.create("D",  [(0, 0), (0, 0), (0, 1), (0, 1)]),   # death
        "BC": BasicMechanism.create("BC", [(0, 0), (0, 1), (1, 1), (1, 1)]),   # branching-coalescence
        "BA": BasicMechanism.create("BA", [(0, 0), (0, 1), (1, 1), (1, 0)]),   # branching-annihilation
    }


def resolve_mechanism(name: str|BasicMechanism) -> BasicMechanism:
    if isinstance(name, BasicMechanism):
        return name
    if name == MECHANISM_IDENTITY.name:
        return MECHANISM_IDENTITY

    mechanism = standard_mechanisms().get(name)
    if mechanism is None:
        error = f"Unknown mechanism '{name}'"
        _LOGGER.debug(error)
        raise DualityDataError(error)
    return mechanism


def _dagger(pair: tuple[int, int]) -> tuple[int, int]:
    return (pair[1], pair[0])


def _meet_size(x: tuple[int, int], y: tuple[int, int]) -> int:
    return (x[0] & y[0]) + (x[1] & y[1])


def is_q_dual_mechanism(f: BasicMechanism, g: BasicMechanism, q: QParameter|Any) -> MechanismDualityReport:
    """
    q^{|x ∧ (g(y†))†|} = q^{|f(x) ∧ y|} for all sixteen pairs, compared
    exactly in rational arithmetic with 0^0 = 1.
    """
    q = QParameter.create(q)
    for x in PAIRS:
        for y in PAIRS:
            backward = _dagger(g(*_dagger(y)))
            if q.power(_meet_size(x, backward)) != q.power(_meet_size(f(*x), y)):
                return MechanismDualityReport(dual=False, q=str(q), witness=(x, y))
    return MechanismDualityReport(dual=True, q=str(q))


def mechanism_monotone(f: BasicMechanism) -> MechanismMonotoneReport:
    """x <= y componentwise implies f(x) <= f(y)"""
    def leq(a, b):
        return a[0] <= b[0] and a[1] <= b[1]

    for x in PAIRS:
        for y in PAIRS:
            if leq(x, y) and not leq(f(*x), f(*y)):
                return MechanismMonotoneReport(monotone=False, witness=(x, y))
    return MechanismMonotoneReport(monotone=True)


def complete_graph_rates(N: int, rates: dict[str, float]) -> RateTable:
    """Every ordered pair (i, j), i != j, gets the same rate per label."""
    table = {
        (i, j, label): rate
        for label, rate in rates.items()
        for i in range(N) for j in range(N) if i != j
    }
    return RateTable.create(N, table)


def _stream_key(i: int, j: int, label: str) -> tuple[int, ...]:
    return (STREAM_ARROWS, i, j, zlib.crc32(label.encode("utf-8")))


def _child_seed(seed: int|np.random.SeedSequence, *key: int) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + key)
    return np.random.SeedSequence(seed, spawn_key=key)


def _poisson_times(rate: float, horizon: float, rng: np.random.Generator) -> np.ndarray:
    """Arrival times on [0, horizon] from exponential(rate) gaps"""
    mean = rate * horizon
    chunk = max(16, int(mean + 4.0 * math.sqrt(mean) + 8))
    parts = []
    offset = 0.0
    while True:
        arrivals = offset + np.cumsum(rng.exponential(1.0 / rate, chunk))
        inside = arrivals[arrivals <= horizon]
        parts.append(inside)
        if inside.size < chunk:
            break
        offset = float(arrivals[-1])
    return np.concatenate(parts)


def _merged_events(streams: list[tuple[int, int, str, float]], horizon: float, rng: np.random.Generator) -> list[ArrowEvent]:
    """Superposition: Poisson total count, uniform times, categorical stream choice."""
    if not streams or horizon == 0.0:
        return []
    weights = np.array([r for (_, _, _, r) in streams])
    total = float(weights.sum())

    count = int(rng.poisson(total * horizon))
    times = rng.uniform(0.0, horizon, count)
    chosen = rng.choice(len(streams), size=count, p=weights / total)
    return sorted(
        ArrowEvent(float(t), streams[c][0], streams[c][1], streams[c][2])
        for t, c in zip(times, chosen)
    )


def sample_graphical_representation(
    N: int,
    rates: RateTable,
    horizon: float,
    seed: int|np.random.SeedSequence,
    per_stream: bool = True,
) -> GraphicalRepresentation:
    """
    Independent Poisson arrow processes per (i, j, label), merged and sorted
    by (time, i, j, label). Each stream draws from its own seed derived from
    the master seed and the stream key.
    """
    if horizon < 0:
        error = f"Horizon must be nonnegative, got {horizon}"
        _LOGGER.debug(error)
        raise DualityDataError(error)
    if rates.n_sites != N:
        error = f"Rate table is for {rates.n_sites} sites, expected {N}"
        _LOGGER.debug(error)
        raise DualityDataError(error)

    streams = rates.streams()
    if per_stream:
        events = []
        if horizon > 0:
            for (i, j, label, rate) in streams:
                rng = np.random.default_rng(_child_seed(seed, *_stream_key(i, j, label)))
                events.extend(ArrowEvent(float(t), i, j, label) for t in _poisson_times(rate, horizon, rng))
        events.sort()
    else:
        rng = np.random.default_rng(_child_seed(seed, STREAM_ARROWS))
        events = _merged_events(streams, horizon, rng)

    return GraphicalRepresentation(
        n_sites = N,
        horizon = float(horizon),
        rates = rates,
        events = tuple(events),
        seed = seed if isinstance(seed, int) else None,
    )


def _mechanism_for(mechanisms: dict[str, BasicMechanism], label: str) -> BasicMechanism:
    mechanism = mechanisms.get(label)
    if mechanism is None:
        error = f"No mechanism for arrow label '{label}'"
        _LOGGER.debug(error)
        raise DualityDataError(error)
    return mechanism


def evolve_forward(x0: SpinConfiguration, G: GraphicalRepresentation, mechanisms: dict[str, BasicMechanism]) -> Trajectory:
    """Apply the arrows of G in reading order; arrow i->j labelled k sets (x_i, x_j) to f^k(x_i, x_j)."""
    if x0.n != G.n_sites:
        error = f"Configuration has {x0.n} sites, representation has {G.n_sites}"
        _LOGGER.debug(error)
        raise DualityDataError(error)

    bits = list(x0.bits)
    deltas = []
    for event in G.arrows():
        mechanism = _mechanism_for(mechanisms, event.label)
        bits[event.i], bits[event.j] = mechanism(bits[event.i], bits[event.j])
        deltas.append(TrajectoryDelta(event.time, event.i, event.j, event.label, bits[event.i], bits[event.j]))

    return Trajectory(initial=x0, final=SpinConfiguration(tuple(bits)), deltas=deltas)


def evolve_backward(y0: SpinConfiguration, G: GraphicalRepresentation, dual_mechanisms: dict[str, BasicMechanism]) -> Trajectory:
    """
    Read G from the horizon down with every arrow reversed. Applying g to the
    reversed arrow j->i is the update (y_i, y_j) <- (g(y_j, y_i))†.
    """
    return evolve_forward(y0, G.reversed(), dual_mechanisms)


def _configurations(value: Any, n_sites: int) -> list[SpinConfiguration]:
    if value is None:
        return [SpinConfiguration.from_index(x, n_sites) for x in range(2 ** n_sites)]
    if isinstance(value, SpinConfiguration):
        return [value]
    return [v if isinstance(v, SpinConfiguration) else SpinConfiguration.create(v) for v in value]


def verify_strong_pathwise(
    x0: SpinConfiguration|Iterable|None,
    y0: SpinConfiguration|Iterable|None,
    q: QParameter|Any,
    G: GraphicalRepresentation,
    forward: dict[str, BasicMechanism],
    backward: dict[str, BasicMechanism],
) -> PathwiseReport:
    """
    H(X_s, Ŷ_{T-s}) with H = q^{|x ∧ y|} must be the same at every cut s
    between consecutive events, for every pair of initial configurations
    (None means all of {0,1}^N).
    """
    q = QParameter.create(q)
    for label in G.rates.labels():
        f = _mechanism_for(forward, label)
        g = _mechanism_for(backward, label)
        report = is_q_dual_mechanism(f, g, q)
        if not report.dual:
            error = f"Mechanisms '{f.name}' and '{g.name}' for label '{label}' are not {q}-dual: witness {report.witness}"
            _LOGGER.debug(error)
            raise DualityPreconditionError(error, witness=report.witness)

    if not G.rates.is_symmetric():
        error = f"Pathwise duality needs symmetric rates"
        _LOGGER.debug(error)
        raise DualityPreconditionError(error)

    xs = _configurations(x0, G.n_sites)
    ys = _configurations(y0, G.n_sites)
    backward_states = { y: evolve_backward(y, G, backward).states() for y in ys }

    n_events = len(G.events)
    checked = 0
    for x in xs:
        forward_states = evolve_forward(x, G, forward).states()
        for y in ys:
            states = backward_states[y]
            expected = q.power(x.overlap(states[n_events]))
            for cut in range(n_events + 1):
                value = q.power(forward_states[cut].overlap(states[n_events - cut]))
                if value != expected:
                    witness = {"x0": x.bits, "y0": y.bits, "cut": cut, "value": value, "expected": expected}
                    _LOGGER.info(f"pathwise duality fails at cut {cut} for x0={x.bits}, y0={y.bits}")
                    return PathwiseReport(passed=False, pairs_checked=checked + 1, events=n_events, witness=witness)
            checked += 1

    return PathwiseReport(passed=True, pairs_checked=checked, events=n_events)


def rw_siegmund_pathwise(x: int, y: int, n_steps: int, seed: int) -> WalkPathwiseReport:
    """
    Absorbed walk forward, reflected walk backward, both driven by the same
    fair ±1 steps W_0..W_{n-1}:
      X_{k+1} = X_k + W_k if X_k > 0 else 0
      Y_m = Y_{m-1} − W_{n-m} if Y_{m-1} > 0 else max(Y_{m-1} − W_{n-m}, 0)
    The indicator 1{X_k <= Y_{n-k}} must not depend on k.
    """
    if x < 0 or y < 0 or n_steps < 0:
        error = f"Walk needs nonnegative x, y and step count, got x={x}, y={y}, n={n_steps}"
        _LOGGER.debug(error)
        raise DualityDataError(error)

    rng = np.random.default_rng(seed)
    steps = (2 * rng.integers(0, 2, n_steps) - 1).tolist()

    forward = [x]
    for w in steps:
        forward.append(forward[-1] + w if forward[-1] > 0 else 0)

    backward = [y]
    for m in range(1, n_steps + 1):
        prev, w = backward[-1], steps[n_steps - m]
        backward.append(prev - w if prev > 0 else max(prev - w, 0))

    indicators = [int(forward[k] <= backward[n_steps - k]) for k in range(n_steps + 1)]
    differences = [backward[n_steps - k] - forward[k] for k in range(n_steps + 1)]
    order_preserved = all(d >= 0 for d in differences) or all(d < 0 for d in differences)

    return WalkPathwiseReport(
        passed = len(set(indicators)) == 1,
        forward = forward,
        backward = backward,
        indicators = indicators,
        order_preserved = order_preserved,
    )


def _check_hypergeometric_args(N: int, a: int, b: int):
    if N < 0 or not (0 <= a <= N) or not (0 <= b <= N):
        error = f"Hypergeometric duality needs 0 <= a, b <= N, got N={N}, a={a}, b={b}"
        _LOGGER.debug(error)
        raise DualityDataError(error)


def hypergeometric_duality_exact(N: int, a: int, b: int, q: QParameter|Any) -> Fraction:
    """E[q^Z] for Z ~ Hyp(N, a, b), the overlap of uniform subsets of sizes a and b."""
    _check_hypergeometric_args(N, a, b)
    q = QParameter.create(q)
    total = math.comb(N, b)
    value = sum(
        Fraction(math.comb(a, k) * math.comb(N - a, b - k), total) * q.power(k)
        for k in range(max(0, a + b - N), min(a, b) + 1)
    )
    return Fraction(value)


def hypergeometric_duality_value(N: int, a: int, b: int, q: QParameter|Any) -> float:
    """
    Float E[q^Z]; exact rationals up to N = 30, scipy's hypergeometric pmf
    (log-gamma based) beyond.
    """
    if N <= HYPERGEOMETRIC_EXACT_MAX:
        return float(hypergeometric_duality_exact(N, a, b, q))

    _check_hypergeometric_args(N, a, b)
    qf = float(QParameter.create(q))
    k = np.arange(max(0, a + b - N), min(a, b) + 1)
    pmf = scipy.stats.hypergeom.pmf(k, N, a, b)
    return float(np.sum(pmf * np.power(qf, k)))


def hypergeometric_table(N: int, q: QParameter|Any) -> np.ndarray:
    """H̃_{N,q}(a, b) for all 0 <= a, b <= N"""
    return np.array([[hypergeometric_duality_value(N, a, b, q) for b in range(N + 1)] for a in range(N + 1)])


def spin_system_generator(N: int, rates: RateTable, mechanisms: dict[str, BasicMechanism], backward: bool = False) -> GeneratorMatrix:
    """
    Generator on {0,1}^N: every arrow i->j with label k and rate lam moves x to
    the configuration with (x_i, x_j) replaced by f^k(x_i, x_j). With
    backward=True the arrows are reversed, which is the generator of the
    process read backwards through the graphical representation.
    """
    table = rates.transposed() if backward else rates
    n = 2 ** N
    L = np.zeros((n, n))
    for index in range(n):
        bits = list(index_to_config(index, N))
        for (i, j, label, rate) in table.streams():
            a, b = _mechanism_for(mechanisms, label)(bits[i], bits[j])
            target = bits[:]
            target[i], target[j] = a, b
            target_index = SpinConfiguration(tuple(target)).index()
            if target_index != index:
                L[index, target_index] += rate
                L[index, index] -= rate
    return GeneratorMatrix.create(L)


def moran_pair(N: int, rate: float = 1.0) -> tuple[GeneratorMatrix, GeneratorMatrix, DualityMatrix]:
    """
    Count chains of the voter model (a -> a±1 at rate·a(N−a)) and of coalescing
    walks (b -> b−1 at rate·b(b−1)) on the complete graph, with the
    hypergeometric duality Ĥ_N(a,b) = P(Hyp(N,a,b) = 0).
    """
    LX = np.zeros((N + 1, N + 1))
    LY = np.zeros((N + 1, N + 1))
    for a in range(N + 1):
        flip = rate * a * (N - a)
        if 0 < a < N:
            LX[a, a + 1] += flip
            LX[a, a - 1] += flip
            LX[a, a] -= 2 * flip
        merge = rate * a * (a - 1)
        if a >= 2:
            LY[a, a - 1] += merge
            LY[a, a] -= merge

    H = np.array([[hypergeometric_duality_value(N, a, b, 0) for b in range(N + 1)] for a in range(N + 1)])
    return (GeneratorMatrix.create(LX), GeneratorMatrix.create(LY), DualityMatrix.create(H))


#
# Monte Carlo
#

def _record_counts(bits: list[int], arrows: list[ArrowEvent], mechanisms: dict[str, BasicMechanism], grid: list[float]) -> list[int]:
    """Particle counts at each (ascending) grid time"""
    counts = []
    g = 0
    for event in arrows:
        while g < len(grid) and event.time > grid[g]:
            counts.append(sum(bits))
            g += 1
        bits[event.i], bits[event.j] = mechanisms[event.label](bits[event.i], bits[event.j])
    counts.extend([sum(bits)] * (len(grid) - g))
    return counts


def _reverse_arrows(events: list[ArrowEvent], horizon: float) -> list[ArrowEvent]:
    return [ArrowEvent(horizon - e.time, e.j, e.i, e.label) for e in reversed(events)]


@dataclass(frozen=True)
class _ExchangeableSetup:
    N: int
    a: int
    b: int
    streams: tuple
    forward: dict
    backward: dict
    horizon: float
    grid: tuple[float, ...]
    table: np.ndarray = field(compare=False)


def _exchangeable_batch(setup: _ExchangeableSetup, item: tuple[int, np.random.SeedSequence]) -> np.ndarray:
    size, seed = item
    rng = np.random.default_rng(seed)
    m = len(setup.grid)
    backward_grid = [setup.horizon - s for s in reversed(setup.grid)]

    values = np.empty((size, m))
    for r in range(size):
        A = [0] * setup.N
        B = [0] * setup.N
        for site in rng.choice(setup.N, setup.a, replace=False):
            A[site] = 1
        for site in rng.choice(setup.N, setup.b, replace=False):
            B[site] = 1

        events = _merged_events(list(setup.streams), setup.horizon, rng)
        fwd = _record_counts(A, events, setup.forward, list(setup.grid))
        bwd = _record_counts(B, _reverse_arrows(events, setup.horizon), setup.backward, backward_grid)
        bwd.reverse()
        values[r, :] = setup.table[fwd, bwd]
    return values


async def async_mc_exchangeable_duality(
    runner: DualityRunner_Base,
    N: int,
    a: int,
    b: int,
    q: QParameter|Any,
    rates: RateTable,
    forward: dict[str, BasicMechanism],
    backward: dict[str, BasicMechanism],
    t: float,
    s_grid: list[float],
    replicas: int,
    seed: int,
    n_se: float = DEFAULT_N_SE,
) -> SimulationReport:
    """
    Estimate E[H̃_{N,q}(|A_s|, |B_{t−s}|)] for every s on the grid, with A_0 and
    B_0 uniform subsets of sizes a and b. Forward and backward passes read the
    same arrow realization; passes iff all grid values agree within n_se
    pooled standard errors.
    """
    if not rates.is_symmetric():
        error = f"Exchangeable duality needs symmetric rates"
        _LOGGER.debug(error)
        raise DualityPreconditionError(error)
    if any(s < 0 or s > t for s in s_grid):
        error = f"Grid points must lie in [0, {t}], got {s_grid}"
        _LOGGER.debug(error)
        raise DualityDataError(error)
    _check_hypergeometric_args(N, a, b)

    grid = sorted(float(s) for s in s_grid)
    setup = _ExchangeableSetup(
        N = N,
        a = a,
        b = b,
        streams = tuple(rates.streams()),
        forward = forward,
        backward = backward,
        horizon = float(t),
        grid = tuple(grid),
        table = hypergeometric_table(N, q),
    )

    start = datetime.now()
    plan = batch_plan(replicas, seed, STREAM_INITIAL)
    batches = await runner.async_map(functools.partial(_exchangeable_batch, setup), plan, context="exchangeable")
    samples = np.vstack(batches)

    stats = [mean_and_se(samples[:, g]) for g in range(len(grid))]
    estimates = [s[0] for s in stats]
    errors = [s[1] for s in stats]
    passed = all(
        abs(estimates[i] - estimates[j]) <= n_se * math.sqrt(errors[i]**2 + errors[j]**2)
        for i, j in itertools.combinations(range(len(grid)), 2)
    )

    elapsed = (datetime.now() - start).total_seconds()
    _LOGGER.info(f"exchangeable duality: {replicas} replicas, passed={passed}, elapsed={elapsed:.2f}s")
    return SimulationReport(
        labels = [f"s={s:g}" for s in grid],
        estimates = estimates,
        standard_errors = errors,
        replicas = replicas,
        seed = seed,
        passed = passed,
        criterion = f"all pairwise |E_s − E_s'| <= {n_se:g} * sqrt(se_s^2 + se_s'^2)",
        elapsed = elapsed,
        extra = {"N": N, "a": a, "b": b, "q": str(QParameter.create(q)), "t": t},
    )


class TypeStream:
    """Lazily extended sequence of arrow types (1 or 2) from one generator"""

    def __init__(self, p: float, seed: int):
        self._p = p
        self._rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(STREAM_TYPES,)))
        self._types: list[int] = []

    def types(self, n: int) -> list[int]:
        while len(self._types) < n:
            draws = self._rng.random(64)
            self._types.extend(1 if u < self._p else 2 for u in draws)
        return self._types[:n]


@dataclass(frozen=True)
class RandomizedMechanism:
    first: BasicMechanism
    second: BasicMechanism
    p: float
    first_dual: BasicMechanism
    second_dual: BasicMechanism

    def forward(self, kind: int) -> BasicMechanism:
        return self.first if kind == 1 else self.second

    def backward(self, kind: int) -> BasicMechanism:
        return self.first_dual if kind == 1 else self.second_dual

    def type_stream(self, seed: int) -> TypeStream:
        return TypeStream(self.p, seed)


def randomized_mechanism(
    f1: BasicMechanism,
    f2: BasicMechanism,
    p: float,
    g1: BasicMechanism|None = None,
    g2: BasicMechanism|None = None,
) -> RandomizedMechanism:
    """
    Type 1 (mechanism f1, dual g1) with probability p, type 2 otherwise.
    Duals default to the mechanisms themselves.
    """
    if not (0.0 <= p <= 1.0):
        error = f"Type probability must lie in [0, 1], got {p}"
        _LOGGER.debug(error)
        raise DualityDataError(error)
    return RandomizedMechanism(first=f1, second=f2, p=float(p), first_dual=g1 or f1, second_dual=g2 or f2)


def _apply_typed(bits: list[int], arrows: list[ArrowEvent], mechanisms: list[BasicMechanism]) -> list[int]:
    for event, mechanism in zip(arrows, mechanisms):
        bits[event.i], bits[event.j] = mechanism(bits[event.i], bits[event.j])
    return bits


@dataclass(frozen=True)
class _ConditionalSetup:
    x0: tuple[int, ...]
    y0: tuple[int, ...]
    q: QParameter
    streams: tuple
    mechanism: RandomizedMechanism
    horizon: float
    type_seed: int


def _conditional_batch(setup: _ConditionalSetup, item: tuple[int, np.random.SeedSequence]) -> np.ndarray:
    size, seed = item
    rng = np.random.default_rng(seed)
    stream = setup.mechanism.type_stream(setup.type_seed)
    x0 = SpinConfiguration(setup.x0)
    y0 = SpinConfiguration(setup.y0)

    def h(x: list[int], y: tuple[int, ...]) -> float:
        return float(setup.q.power(sum(a & b for a, b in zip(x, y))))

    values = np.empty((size, 3))
    for r in range(size):
        # forward on one realization, backward on an independent one
        events = _merged_events(list(setup.streams), setup.horizon, rng)
        types = stream.types(len(events))
        X = _apply_typed(list(x0.bits), events, [setup.mechanism.forward(k) for k in types])
        forward_value = h(X, y0.bits)

        other = _merged_events(list(setup.streams), setup.horizon, rng)
        other_types = stream.types(len(other))
        Y = _apply_typed(list(y0.bits), _reverse_arrows(other, setup.horizon), [setup.mechanism.backward(k) for k in reversed(other_types)])
        backward_value = h(Y, x0.bits)

        # same realization read both ways
        Y_same = _apply_typed(list(y0.bits), _reverse_arrows(events, setup.horizon), [setup.mechanism.backward(k) for k in reversed(types)])
        values[r, :] = (forward_value, backward_value, float(h(Y_same, x0.bits) == forward_value))
    return values


async def async_conditional_duality_check(
    runner: DualityRunner_Base,
    N: int,
    x0: SpinConfiguration,
    y0: SpinConfiguration,
    q: QParameter|Any,
    mechanism: RandomizedMechanism,
    rate: float,
    t: float,
    replicas: int,
    seed: int,
    n_se: float = DEFAULT_N_SE,
) -> SimulationReport:
    """
    Conditional duality for randomized mechanisms on the complete graph: the
    type of the n-th arrow is fixed by one type stream, the arrows themselves
    are resampled. E[H(X_t, y0) | types] and E[H(x0, Y_t) | types] are
    estimated from independent realizations and must agree within n_se
    combined standard errors.
    """
    q = QParameter.create(q)
    for kind in (1, 2):
        report = is_q_dual_mechanism(mechanism.forward(kind), mechanism.backward(kind), q)
        if not report.dual:
            error = f"Type {kind} mechanisms are not {q}-dual: witness {report.witness}"
            _LOGGER.debug(error)
            raise DualityPreconditionError(error, witness=report.witness)
    if x0.n != N or y0.n != N:
        error = f"Initial configurations must have {N} sites"
        _LOGGER.debug(error)
        raise DualityDataError(error)

    setup = _ConditionalSetup(
        x0 = x0.bits,
        y0 = y0.bits,
        q = q,
        streams = tuple(complete_graph_rates(N, {"M": rate}).streams()),
        mechanism = mechanism,
        horizon = float(t),
        type_seed = seed,
    )

    start = datetime.now()
    plan = batch_plan(replicas, seed, STREAM_ARROWS)
    batches = await runner.async_map(functools.partial(_conditional_batch, setup), plan, context="conditional")
    samples = np.vstack(batches)

    fwd, fwd_se = mean_and_se(samples[:, 0])
    bwd, bwd_se = mean_and_se(samples[:, 1])
    agreement = float(np.mean(samples[:, 2]))
    passed = abs(fwd - bwd) <= n_se * math.sqrt(fwd_se**2 + bwd_se**2)

    elapsed = (datetime.now() - start).total_seconds()
    _LOGGER.info(f"conditional duality: forward={fwd:.6f}, backward={bwd:.6f}, passed={passed}, elapsed={elapsed:.2f}s")
    return SimulationReport(
        labels = ["forward", "backward"],
        estimates = [fwd, bwd],
        standard_errors = [fwd_se, bwd_se],
        replicas = replicas,
        seed = seed,
        passed = passed,
        criterion = f"|E[H(X_t,y)|types] − E[H(x,Y_t)|types]| <= {n_se:g} * combined se",
        elapsed = elapsed,
        extra = {"pathwise_agreement": agreement, "p": mechanism.p, "q": str(q)},
    )
