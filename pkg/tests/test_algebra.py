import logging
import pytest

import numpy as np

from dualitykit import (
    DualityDataError,
    DualityPreconditionError,
    DualityStatus,
    GeneratorMatrix,
    TensorKind,
    check_duality_discrete,
    check_duality_generators,
    duality_residual_matrix,
    check_v1plus_invariance,
    solve_dual,
    check_monotone,
    siegmund_dual,
    siegmund_duality,
    spectrum_compare,
    reversible_intertwining_check,
    unitary_equivalence,
    build_tensor_duality,
    nondegeneracy_check,
    lift_duality,
    measure_from_diagonal,
    diagonal_from_measure,
    check_measure_duality,
    check_trap,
    resolvent_duality_check,
    symmetry_from_duality,
    duality_from_symmetry,
    time_reversal,
    doob_transform,
    duality_from_intertwining,
    sep_symmetry_check,
    index_to_config,
)

from . import (
    ABSORBED_SRW,
    ABSORBED_SRW_DIAGONAL,
    CONE_H,
    TWO_STATE_L,
    random_monotone,
    random_stochastic,
)

_LOGGER = logging.getLogger(__name__)


def reversible_instance(rng: np.random.Generator, n: int):
    """Random walk on a weighted complete graph, its stationary law and a permuted copy"""
    W = rng.random((n, n)) + 0.1
    W = W + W.T
    P = W / W.sum(axis=1, keepdims=True)
    pi = W.sum(axis=1) / W.sum()

    perm = rng.permutation(n)
    Q = P[np.ix_(perm, perm)]
    nu = pi[perm]
    H = (2 * np.eye(n) + P) @ np.diag(1 / pi) @ np.eye(n)[perm].T
    return (P, pi, Q, nu, H)


def test_absorbed_walk_diagonal_self_duality():
    assert check_duality_discrete(ABSORBED_SRW, ABSORBED_SRW, ABSORBED_SRW_DIAGONAL) == 0.0

    data = measure_from_diagonal(ABSORBED_SRW_DIAGONAL)
    assert data.support == (1, 2)
    assert data.measure.tolist() == [0.0, 1.0, 1.0, 0.0]

    # walk killed outside the support
    killed = ABSORBED_SRW[1:3, 1:3]
    assert check_measure_duality(killed, killed, data.measure[1:3]) == 0.0


def test_check_duality_generators():
    pi = np.array([1/3, 2/3])
    report = check_duality_generators(TWO_STATE_L, TWO_STATE_L, np.diag(1 / pi))

    assert report.passed
    assert report.residual <= 1e-12
    assert set(report.semigroup_residuals) == {0.1, 0.5, 1.0}

    report = check_duality_generators(TWO_STATE_L, TWO_STATE_L, np.eye(2))
    assert not report.passed


def test_duality_residual_shapes():
    with pytest.raises(DualityDataError):
        duality_residual_matrix(np.eye(2), np.eye(3), np.eye(2))


@pytest.mark.parametrize(
    "name, P, H, exp_status, exp_unique, exp_violating",
    [
        ("stochastic", [[0.2, 0.8], [0.8, 0.2]],   np.eye(2),                  DualityStatus.EXISTS_STOCHASTIC,  True,  None),
        ("signed",     [[0.5, 0.5], [0.25, 0.75]], np.eye(2),                  DualityStatus.EXISTS_SIGNED_ONLY, True,  0),
        ("none",       [[0.5, 0.5], [0.5, 0.5]],   [[1.0], [0.0]],             DualityStatus.NONE,               True,  0),
        ("non-unique", [[0.5, 0.5], [0.5, 0.5]],   [[1.0, 1.0], [1.0, 1.0]],   DualityStatus.EXISTS_STOCHASTIC,  False, None),
    ]
)
def test_solve_dual(name, P, H, exp_status, exp_unique, exp_violating):
    result = solve_dual(np.array(P), np.array(H, dtype=float))

    assert result.status == exp_status
    assert result.unique == exp_unique
    assert result.violating_column == exp_violating

    if exp_status == DualityStatus.NONE:
        assert result.dual is None
    else:
        assert check_duality_discrete(np.array(P), result.dual, np.array(H, dtype=float)) <= 1e-9
    if name == "signed":
        assert result.dual == pytest.approx(np.array(P).T, abs=1e-9)


def test_solved_duals_share_spectrum():
    rng = np.random.default_rng(11)
    for _ in range(20):
        P, pi, Q, nu, H = reversible_instance(rng, 4)

        assert nondegeneracy_check(H).invertible
        result = solve_dual(P, H)
        assert result.status == DualityStatus.EXISTS_STOCHASTIC
        assert result.unique
        assert result.dual == pytest.approx(Q, abs=1e-8)

        report = spectrum_compare(P, result.dual)
        assert report.passed
        assert report.max_distance <= 1e-8


def test_spectrum_mismatch():
    report = spectrum_compare(np.eye(2), np.array([[0.0, 1.0], [1.0, 0.0]]))

    assert not report.passed
    assert len(report.mismatches) == 1


def test_v1plus_invariance():
    report = check_v1plus_invariance(np.full((2, 2), 0.5), CONE_H)
    assert report.invariant
    assert report.violating_column is None
    assert all(c is not None for c in report.certificates)

    report = check_v1plus_invariance(np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([[1.0, 0.0], [0.0, 0.0]]))
    assert not report.invariant
    assert report.violating_column == 0


def test_siegmund_round_trip():
    rng = np.random.default_rng(5)
    for i in range(200):
        n = 2 + i % 4
        P = random_monotone(rng, n)

        assert check_monotone(P).monotone
        dual = siegmund_dual(P)
        assert dual.residual <= 1e-12
        assert dual.cemetery == n
        assert dual.matrix.n_rows == n + 1
        assert check_duality_discrete(P, dual.restricted(), siegmund_duality(n)) <= 1e-12
        assert dual.defect == pytest.approx(1.0 - dual.restricted().sum(axis=1), abs=1e-12)


@pytest.mark.parametrize(
    "name, P",
    [
        ("tail round-off",  [[0.5, 0.5], [0.5 + 5e-11, 0.5 - 5e-11]]),
        ("three states",    [[0.2, 0.3, 0.5], [0.2 + 8e-11, 0.3, 0.5 - 8e-11], [0.0, 0.1, 0.9]]),
    ]
)
def test_siegmund_near_monotone(name, P):
    P = np.array(P)
    n = P.shape[0]
    assert check_monotone(P).monotone

    dual = siegmund_dual(P)
    assert dual.matrix.entries.min() >= 0.0
    assert dual.matrix.entries.sum(axis=1) == pytest.approx(np.ones(n + 1), abs=1e-10)
    assert dual.defect.min() >= 0.0
    assert dual.residual <= 1e-10


@pytest.mark.parametrize(
    "name, family, seed",
    [
        ("random h",       "random",   21),
        ("lazy chain",     "lazy",     22),
        ("reversible",     "reversible", 23),
        ("constant h",     "constant", 24),
        ("identity h",     "identity", 26),
    ]
)
def test_solve_dual_matches_v1plus(name, family, seed):
    rng = np.random.default_rng(seed)
    outcomes = set()
    for i in range(40):
        n = 2 + i % 3
        P = random_stochastic(rng, n)
        match family:
            case "random":
                H = rng.random((n, n))
            case "lazy":
                P = 0.9 * np.eye(n) + 0.1 * P
                H = rng.random((n, n)) + np.eye(n)
            case "reversible":
                P, _, _, _, H = reversible_instance(rng, n)
            case "constant":
                H = np.ones((n, n))
            case "identity":
                H = np.eye(n)

        stochastic = solve_dual(P, H).status == DualityStatus.EXISTS_STOCHASTIC
        invariant = check_v1plus_invariance(P, H).invariant
        assert stochastic == invariant
        outcomes.add(invariant)

    if family == "identity":
        assert outcomes == {False}
    if family in ("reversible", "constant"):
        assert outcomes == {True}


@pytest.mark.parametrize(
    "name, P, exp_witness",
    [
        ("swap",     [[0.0, 1.0], [1.0, 0.0]],                    (0, 1, 1)),
        ("three",    [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], (0, 1, 1)),
    ]
)
def test_siegmund_rejects_non_monotone(name, P, exp_witness):
    report = check_monotone(np.array(P))
    assert not report.monotone
    assert report.witness == exp_witness

    with pytest.raises(DualityPreconditionError) as e_info:
        siegmund_dual(np.array(P))
    assert e_info.value.witness == exp_witness


def test_siegmund_rejects_random_non_monotone():
    rng = np.random.default_rng(8)
    rejected = 0
    for _ in range(50):
        P = random_stochastic(rng, 4)
        report = check_monotone(P)
        if report.monotone:
            continue
        x, y, z = report.witness
        tails = np.cumsum(P[:, ::-1], axis=1)[:, ::-1]
        assert x < y and tails[x, z] > tails[y, z]
        with pytest.raises(DualityPreconditionError):
            siegmund_dual(P)
        rejected += 1
    assert rejected > 0


@pytest.mark.parametrize(
    "name, kind, q, exp_value",
    [
        ("coalescing",   TensorKind.COALESCING,   None, lambda k: 1.0 if k == 0 else 0.0),
        ("annihilating", TensorKind.ANNIHILATING, None, lambda k: (-1.0) ** k),
        ("q",            TensorKind.Q,            "1/2", lambda k: 0.5 ** k),
    ]
)
def test_tensor_duality(name, kind, q, exp_value):
    N = 3
    H = build_tensor_duality(kind, N, q)
    assert H.entries.shape == (8, 8)

    for x in range(8):
        for y in range(8):
            overlap = sum(a & b for a, b in zip(index_to_config(x, N), index_to_config(y, N)))
            assert H.entries[x, y] == exp_value(overlap)


def test_tensor_subset():
    H = build_tensor_duality("subset", 2)
    # rows A, columns B: 1{A ⊂ B}
    assert H.entries.tolist() == [
        [1.0, 1.0, 1.0, 1.0],
        [0.0, 1.0, 0.0, 1.0],
        [0.0, 0.0, 1.0, 1.0],
        [0.0, 0.0, 0.0, 1.0],
    ]


@pytest.mark.parametrize(
    "name, kind, N, q, exp_except",
    [
        ("no sites",   "coalescing", 0,  None, DualityDataError),
        ("too many",   "coalescing", 21, None, DualityDataError),
        ("q missing",  "q",          2,  None, DualityDataError),
        ("q invalid",  "q",          2,  "3/2", DualityDataError),
        ("bad kind",   "hexagonal",  2,  None, ValueError),
    ]
)
def test_tensor_duality_errors(name, kind, N, q, exp_except):
    with pytest.raises(exp_except):
        build_tensor_duality(kind, N, q)


def test_nondegeneracy():
    report = nondegeneracy_check(np.ones((2, 2)))
    assert report.rank == 1
    assert not report.invertible
    assert report.right_null_space.shape == (2, 1)
    assert np.ones((2, 2)) @ report.right_null_space == pytest.approx(np.zeros((2, 1)), abs=1e-12)

    report = nondegeneracy_check(np.eye(3))
    assert report.invertible
    assert report.right_null_space is None


def test_lift_duality():
    H = np.array([[1.0, 2.0], [3.0, 4.0]])
    lifted = lift_duality(H, [0, 1, 1])
    assert lifted.entries.tolist() == [[1.0, 2.0, 2.0], [3.0, 4.0, 4.0]]

    with pytest.raises(DualityDataError):
        lift_duality(H, [0, 2])


def test_reversible_intertwining_and_unitary():
    rng = np.random.default_rng(2)
    P, pi, Q, nu, H = reversible_instance(rng, 4)

    report = reversible_intertwining_check(P, Q, H, pi, nu)
    assert report.passed
    assert report.intertwining_residual <= 1e-12

    report = unitary_equivalence(P, Q, H, pi, nu)
    assert report.passed
    assert report.unitarity_residual <= 1e-10
    assert report.conjugation_residual <= 1e-10


def test_reversibility_required():
    cycle = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    uniform = np.full(3, 1/3)

    with pytest.raises(DualityPreconditionError):
        reversible_intertwining_check(cycle, cycle, np.eye(3), uniform, uniform)


def test_measure_round_trip():
    H = diagonal_from_measure([0.0, 2.0, 0.5])
    assert np.diag(H.entries).tolist() == [0.0, 0.5, 2.0]

    data = measure_from_diagonal(H)
    assert data.measure.tolist() == [0.0, 2.0, 0.5]

    with pytest.raises(DualityDataError):
        measure_from_diagonal(np.ones((2, 2)))


@pytest.mark.parametrize(
    "name, trap, exp_trap",
    [
        ("left",   [0],    True),
        ("inner",  [1],    False),
        ("both",   [0, 3], True),
        ("all",    [0, 1, 2, 3], True),
    ]
)
def test_check_trap(name, trap, exp_trap):
    assert check_trap(ABSORBED_SRW, trap) == exp_trap


@pytest.mark.parametrize(
    "name, mu, lam, exp_except",
    [
        ("ok",           [1/3, 2/3], 1.0,  None),
        ("not weak",     [0.5, 0.5], 1.0,  DualityPreconditionError),
        ("bad lambda",   [1/3, 2/3], 0.0,  DualityDataError),
        ("zero measure", [0.0, 1.0], 1.0,  DualityPreconditionError),
    ]
)
def test_resolvent_duality(name, mu, lam, exp_except):
    if exp_except is None:
        report = resolvent_duality_check(TWO_STATE_L, TWO_STATE_L, mu, lam, t=0.5)
        assert report.passed
        assert report.residual <= 1e-10
    else:
        with pytest.raises(exp_except):
            resolvent_duality_check(TWO_STATE_L, TWO_STATE_L, mu, lam, t=0.5)


def test_symmetry_duality_bijection():
    rng = np.random.default_rng(4)
    P, pi, _, _, _ = reversible_instance(rng, 3)
    H = np.diag(1 / pi)
    H_tilde = (2 * np.eye(3) + P) @ H

    S = symmetry_from_duality(H_tilde, H)
    assert S == pytest.approx(2 * np.eye(3) + P, abs=1e-12)
    assert S @ P == pytest.approx(P @ S, abs=1e-12)
    assert duality_from_symmetry(S, H).entries == pytest.approx(H_tilde, abs=1e-12)


def test_time_reversal():
    Q = np.array([[0.5, 0.5], [0.25, 0.75]])
    assert time_reversal(Q, [1/3, 2/3]) == pytest.approx(Q, abs=1e-12)

    cycle = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    assert time_reversal(cycle, np.full(3, 1/3)) == pytest.approx(cycle.T, abs=1e-12)


def test_doob_transform():
    h = np.array([1.0, 2.0, 3.0, 4.0])
    transformed = doob_transform(ABSORBED_SRW, h)
    assert transformed.sum(axis=1) == pytest.approx(np.ones(4), abs=1e-12)

    with pytest.raises(DualityPreconditionError):
        doob_transform(ABSORBED_SRW, np.array([1.0, 1.0, 2.0, 1.0]))

    L = doob_transform(GeneratorMatrix.create(TWO_STATE_L), np.array([1.0, 2.0]))
    assert L.sum(axis=1) == pytest.approx(np.zeros(2), abs=1e-12)


def test_duality_from_intertwining():
    link = np.array([[0.5, 0.5], [0.0, 1.0]])
    H = duality_from_intertwining(link, [0.5, 0.5])
    assert H.entries.tolist() == [[1.0, 1.0], [0.0, 2.0]]

    with pytest.raises(DualityPreconditionError):
        duality_from_intertwining(link, [1.0, 0.0])


@pytest.mark.parametrize("M", [2, 3, 4, 5, 6])
def test_sep_symmetry(M):
    report = sep_symmetry_check(M)

    assert report.passed
    assert report.commutation_residual <= 1e-12
    assert report.duality_residual <= 1e-12
    assert report.harmonic_residual <= 1e-12
    assert report.link_residual <= 1e-12


@pytest.mark.parametrize("M", [1, 11])
def test_sep_bounds(M):
    with pytest.raises(DualityDataError):
        sep_symmetry_check(M)
