"""algebra.py: duality checks and solvers on finite state spaces."""

import logging
import math

import numpy as np
import scipy.linalg
import scipy.optimize

from typing import Any

from .duality_const import (
    SEMIGROUP_SAMPLE_TIMES,
    SEP_MAX_SITES,
    SEP_MIN_SITES,
    TENSOR_MAX_SITES,
)
from .duality_core import (
    DualityDataError,
    DualityMatrix,
    DualityNumericError,
    DualityPreconditionError,
    DualityStructure,
    GeneratorMatrix,
    StochasticMatrix,
    as_array,
    index_to_config,
    transition_matrix,
    eigenvalue_multiset,
)
from .duality_data import (
    DEFAULT_TOLERANCES,
    DualitySolveResult,
    DualityStatus,
    GeneratorDualityReport,
    IntertwiningReport,
    InvarianceReport,
    MeasureDualityData,
    MonotoneReport,
    NondegeneracyReport,
    ResolventReport,
    SepInstance,
    SepReport,
    SiegmundDual,
    SpectrumReport,
    TensorKind,
    Tolerances,
    UnitaryReport,
    QParameter,
)

_LOGGER = logging.getLogger(__name__)


def max_norm(A: np.ndarray) -> float:
    return float(np.max(np.abs(A))) if A.size else 0.0


def _check_shapes(left: np.ndarray, right: np.ndarray, H: np.ndarray):
    n, m = H.shape
    if left.shape != (n, n) or right.shape != (m, m):
        error = f"Dimension mismatch: left {left.shape}, right {right.shape}, duality {H.shape}"
        _LOGGER.debug(error)
        raise DualityDataError(error)


def duality_residual_matrix(left: Any, right: Any, H: Any) -> np.ndarray:
    """Entrywise left·H − H·rightᵀ, for kernels or generators alike"""
    A, B, Hm = as_array(left), as_array(right), as_array(H)
    _check_shapes(A, B, Hm)
    return A @ Hm - Hm @ B.T


def check_duality_discrete(P: StochasticMatrix|Any, Q: StochasticMatrix|Any, H: DualityMatrix|Any) -> float:
    """Max-norm of PH − HQᵀ"""
    return max_norm(duality_residual_matrix(P, Q, H))


def check_duality_generators(
    LX: GeneratorMatrix|Any,
    LY: GeneratorMatrix|Any,
    H: DualityMatrix|Any,
    times: tuple[float, ...] = SEMIGROUP_SAMPLE_TIMES,
    tol: Tolerances = DEFAULT_TOLERANCES,
) -> GeneratorDualityReport:
    """
    Generator duality LX·H = H·LYᵀ, plus its semi-group consequence
    exp(tLX)·H = H·exp(tLY)ᵀ sampled at the given times.
    """
    residual = max_norm(duality_residual_matrix(LX, LY, H))

    semigroup = {}
    for t in times:
        PX = transition_matrix(GeneratorMatrix.create(LX), t)
        PY = transition_matrix(GeneratorMatrix.create(LY), t)
        semigroup[t] = check_duality_discrete(PX, PY, H)

    passed = residual <= tol.duality and all(r <= tol.semigroup for r in semigroup.values())
    _LOGGER.debug(f"generator duality: residual={residual:.3e}, semigroup={semigroup}")
    return GeneratorDualityReport(residual=residual, semigroup_residuals=semigroup, passed=passed)


def convex_combination(columns: Any, target: Any, tol: float = DEFAULT_TOLERANCES.lp) -> tuple[np.ndarray|None, float]:
    """
    Find a probability vector nu with columns·nu = target.

    Solved as nonnegative least squares on the system augmented by a weighted
    row of ones. Returns (nu, residual); nu is None when the best residual
    exceeds tol.
    """
    H = as_array(columns)
    b = np.asarray(target, dtype=float)
    weight = max(1.0, max_norm(H))

    A = np.vstack([H, weight * np.ones((1, H.shape[1]))])
    rhs = np.concatenate([b, [weight]])
    try:
        nu, _ = scipy.optimize.nnls(A, rhs, maxiter=50 * A.shape[1])
    except RuntimeError as ex:
        error = f"Convex feasibility solve did not converge: {ex}"
        _LOGGER.debug(error)
        raise DualityNumericError(error)

    residual = max(max_norm(H @ nu - b), abs(nu.sum() - 1.0))
    if residual > tol:
        return (None, residual)
    return (nu / nu.sum(), residual)


def _signed_solution(H: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, float]:
    q, _, _, _ = scipy.linalg.lstsq(H, target)
    return (q, max_norm(H @ q - target))


def check_v1plus_invariance(P: StochasticMatrix|Any, H: DualityMatrix|Any, tol: Tolerances = DEFAULT_TOLERANCES) -> InvarianceReport:
    """True iff every P·h_y is a convex combination of the columns of H."""
    Pm, Hm = as_array(P), as_array(H)
    if Pm.shape[1] != Hm.shape[0]:
        error = f"Dimension mismatch: P {Pm.shape}, H {Hm.shape}"
        _LOGGER.debug(error)
        raise DualityDataError(error)

    image = Pm @ Hm
    certificates = []
    residuals = []
    violating = None
    for y in range(Hm.shape[1]):
        nu, residual = convex_combination(Hm, image[:, y], tol.lp)
        certificates.append(nu.tolist() if nu is not None else None)
        residuals.append(residual)
        if nu is None and violating is None:
            violating = y

    return InvarianceReport(
        invariant = violating is None,
        violating_column = violating,
        certificates = certificates,
        residuals = residuals,
    )


def solve_dual(P: StochasticMatrix|Any, H: DualityMatrix|Any, tol: Tolerances = DEFAULT_TOLERANCES) -> DualitySolveResult:
    """
    Solve PH = HQᵀ for Q, one row of Q per column of H.

    Every row is tried as a probability vector first, then as a signed vector.
    The dual is unique iff H has a trivial right null space.
    """
    Pm, Hm = as_array(P), as_array(H)
    if Pm.shape[1] != Hm.shape[0]:
        error = f"Dimension mismatch: P {Pm.shape}, H {Hm.shape}"
        _LOGGER.debug(error)
        raise DualityDataError(error)

    m = Hm.shape[1]
    image = Pm @ Hm
    unique = nondegeneracy_check(Hm, tol).rank == m

    stochastic_rows = []
    signed_rows = []
    residuals = []
    first_not_stochastic = None
    first_not_signed = None
    for y in range(m):
        nu, residual = convex_combination(Hm, image[:, y], tol.lp)
        if nu is not None:
            stochastic_rows.append(nu)
            signed_rows.append(nu)
            residuals.append(residual)
            continue

        if first_not_stochastic is None:
            first_not_stochastic = y
        q, residual = _signed_solution(Hm, image[:, y])
        signed_rows.append(q)
        residuals.append(residual)
        if residual > tol.duality and first_not_signed is None:
            first_not_signed = y

    if first_not_stochastic is None:
        status = DualityStatus.EXISTS_STOCHASTIC
        dual = StochasticMatrix.create(np.vstack(stochastic_rows), tol_row=tol.row).entries
        violating = None
    elif first_not_signed is None:
        status = DualityStatus.EXISTS_SIGNED_ONLY
        dual = np.vstack(signed_rows)
        violating = first_not_stochastic
    else:
        status = DualityStatus.NONE
        dual = None
        violating = first_not_signed

    if status != DualityStatus.NONE and not unique:
        _LOGGER.warning(f"Duality function has a nontrivial right null space; returned dual is one of many")

    _LOGGER.info(f"solve_dual: status={status}, unique={unique}, max residual={max(residuals, default=0.0):.3e}")
    return DualitySolveResult(
        status = status,
        dual = dual,
        residuals = residuals,
        unique = unique,
        violating_column = violating,
    )


def _upper_tails(P: np.ndarray) -> np.ndarray:
    """G(x,z) = sum over x' >= z of P(x,x')"""
    return np.cumsum(P[:, ::-1], axis=1)[:, ::-1]


def check_monotone(P: StochasticMatrix|Any, tol: Tolerances = DEFAULT_TOLERANCES) -> MonotoneReport:
    """Stochastic monotonicity in the index order, witness (x, y, z) with x < y and G(x,z) > G(y,z)."""
    G = _upper_tails(as_array(P))
    n = G.shape[0]
    for x in range(n):
        for y in range(x + 1, n):
            for z in range(G.shape[1]):
                if G[x, z] > G[y, z] + tol.row:
                    return MonotoneReport(monotone=False, witness=(x, y, z))
    return MonotoneReport(monotone=True)


def siegmund_dual(P: StochasticMatrix|Any, tol: Tolerances = DEFAULT_TOLERANCES) -> SiegmundDual:
    """
    Siegmund dual for H(x,y) = 1{x >= y}.

    Q(y,x) = G(x,y) − G(x−1,y); the missing mass of row y goes to an absorbing
    cemetery appended after the largest state.
    """
    Pm = as_array(P)
    report = check_monotone(Pm, tol)
    if not report.monotone:
        x, y, z = report.witness
        error = f"Chain is not stochastically monotone: P_{x}(X >= {z}) > P_{y}(X >= {z})"
        _LOGGER.debug(error)
        raise DualityPreconditionError(error, witness=report.witness)

    n = Pm.shape[0]
    G = _upper_tails(Pm)
    lower = np.vstack([np.zeros((1, n)), G[:-1, :]])
    Q = (G - lower).T
    # tail violations up to tol.row are accepted by check_monotone
    Q[(Q < 0.0) & (Q >= -tol.row)] = 0.0
    defect = 1.0 - Q.sum(axis=1)
    defect[(defect < 0.0) & (defect >= -tol.row)] = 0.0

    full = np.zeros((n + 1, n + 1))
    full[:n, :n] = Q
    full[:n, n] = defect
    full[n, n] = 1.0
    matrix = StochasticMatrix.create(full, tol_row=tol.row, tol_entry=tol.row)

    H = siegmund_duality(n)
    restricted = matrix.entries[:n, :n]
    residual = max(
        max_norm(duality_residual_matrix(Pm, restricted, H)),
        max_norm(np.cumsum(restricted, axis=1).T - G),
    )
    return SiegmundDual(matrix=matrix, defect=matrix.entries[:n, n].copy(), residual=residual)


def siegmund_duality(n: int) -> DualityMatrix:
    """H(x,y) = 1{x >= y} on {0,...,n-1}"""
    return DualityMatrix.create(np.tril(np.ones((n, n))), structure=DualityStructure.SIEGMUND)


def spectrum_compare(P: Any, Q: Any, tol: Tolerances = DEFAULT_TOLERANCES) -> SpectrumReport:
    """Optimal matching of the two eigenvalue multisets."""
    ev_p = eigenvalue_multiset(P)
    ev_q = eigenvalue_multiset(Q)
    a = np.array(ev_p)
    b = np.array(ev_q)

    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = scipy.optimize.linear_sum_assignment(cost)

    mismatches = []
    distances = []
    for r, c in zip(rows, cols):
        d = float(cost[r, c])
        distances.append(d)
        if d > tol.spectral:
            mismatches.append((ev_p[r], ev_q[c], d))

    matched_p, matched_q = set(rows.tolist()), set(cols.tolist())
    mismatches += [(ev_p[r], complex(math.nan, math.nan), math.inf) for r in range(len(ev_p)) if r not in matched_p]
    mismatches += [(complex(math.nan, math.nan), ev_q[c], math.inf) for c in range(len(ev_q)) if c not in matched_q]

    max_distance = math.inf if len(ev_p) != len(ev_q) else max(distances, default=0.0)
    return SpectrumReport(
        passed = not mismatches,
        max_distance = max_distance,
        eigenvalues_p = ev_p,
        eigenvalues_q = ev_q,
        mismatches = mismatches,
    )


def _reversibility(M: np.ndarray, mu: np.ndarray) -> tuple[float, tuple[int, int]]:
    flux = mu[:, None] * M
    diff = np.abs(flux - flux.T)
    worst = np.unravel_index(int(np.argmax(diff)), diff.shape)
    return (float(diff[worst]), (int(worst[0]), int(worst[1])))


def _require_reversible(M: np.ndarray, mu: np.ndarray, name: str, tol: Tolerances) -> float:
    residual, pair = _reversibility(M, mu)
    if residual > tol.reversible:
        error = f"Measure is not reversible for {name}: worst pair {pair}, residual {residual:.3e}"
        _LOGGER.debug(error)
        raise DualityPreconditionError(error, witness=pair)
    return residual


def reversible_intertwining_check(P: Any, Q: Any, H: Any, mu: Any, nu: Any, tol: Tolerances = DEFAULT_TOLERANCES) -> IntertwiningReport:
    """Check P·T = T·Q for T = H·diag(nu) when mu, nu are reversible for P, Q."""
    Pm, Qm, Hm = as_array(P), as_array(Q), as_array(H)
    _check_shapes(Pm, Qm, Hm)
    mu_v, nu_v = as_array(mu).ravel(), as_array(nu).ravel()

    rev_p = _require_reversible(Pm, mu_v, "P", tol)
    rev_q = _require_reversible(Qm, nu_v, "Q", tol)

    T = Hm * nu_v[None, :]
    residual = max_norm(Pm @ T - T @ Qm)
    return IntertwiningReport(
        intertwining_residual = residual,
        reversibility_residual_p = rev_p,
        reversibility_residual_q = rev_q,
        passed = residual <= tol.duality,
    )


def unitary_equivalence(P: Any, Q: Any, H: Any, mu: Any, nu: Any, tol: Tolerances = DEFAULT_TOLERANCES) -> UnitaryReport:
    """
    Orthogonal U with Uᵀ·S_P·U = S_Q, where S_P = D_mu^{1/2} P D_mu^{-1/2}.

    U is the orthogonal factor of the polar decomposition of
    D_mu^{1/2}·H·D_nu^{1/2}; requires H invertible and both measures strictly positive.
    """
    Pm, Qm, Hm = as_array(P), as_array(Q), as_array(H)
    _check_shapes(Pm, Qm, Hm)
    mu_v, nu_v = as_array(mu).ravel(), as_array(nu).ravel()

    if Hm.shape[0] != Hm.shape[1] or nondegeneracy_check(Hm, tol).rank != Hm.shape[0]:
        error = f"Unitary equivalence needs an invertible duality matrix"
        _LOGGER.debug(error)
        raise DualityPreconditionError(error)
    if mu_v.min() <= 0 or nu_v.min() <= 0:
        error = f"Unitary equivalence needs strictly positive reversible measures"
        _LOGGER.debug(error)
        raise DualityPreconditionError(error)

    _require_reversible(Pm, mu_v, "P", tol)
    _require_reversible(Qm, nu_v, "Q", tol)

    sm, sn = np.sqrt(mu_v), np.sqrt(nu_v)
    S_P = sm[:, None] * Pm / sm[None, :]
    S_Q = sn[:, None] * Qm / sn[None, :]
    A = sm[:, None] * Hm * sn[None, :]
    U, _ = scipy.linalg.polar(A, side='right')

    unitarity = max_norm(U.T @ U - np.eye(U.shape[1]))
    conjugation = max_norm(U.T @ S_P @ U - S_Q)
    return UnitaryReport(
        unitarity_residual = unitarity,
        conjugation_residual = conjugation,
        passed = unitarity <= tol.duality and conjugation <= tol.duality,
        unitary = U,
    )


def build_tensor_duality(kind: TensorKind|str, N: int, q: QParameter|Any = None) -> DualityMatrix:
    """
    H = h ⊗ ... ⊗ h over N sites, site 0 the most significant bit.

    coalescing h = [[1,1],[1,0]], annihilating [[1,1],[1,-1]],
    q-duality [[1,1],[1,q]], subset [[1,1],[0,1]].
    """
    kind = TensorKind(kind)
    if N < 1 or N > TENSOR_MAX_SITES:
        error = f"Tensor duality needs 1 <= N <= {TENSOR_MAX_SITES}, got {N}"
        _LOGGER.debug(error)
        raise DualityDataError(error)

    match kind:
        case TensorKind.COALESCING:
            h = [[1.0, 1.0], [1.0, 0.0]]
            structure = DualityStructure.TENSOR_COALESCING
        case TensorKind.ANNIHILATING:
            h = [[1.0, 1.0], [1.0, -1.0]]
            structure = DualityStructure.TENSOR_ANNIHILATING
        case TensorKind.Q:
            if q is None:
                error = f"Tensor q-duality needs a q parameter"
                _LOGGER.debug(error)
                raise DualityDataError(error)
            h = [[1.0, 1.0], [1.0, float(QParameter.create(q))]]
            structure = DualityStructure.TENSOR_Q
        case TensorKind.SUBSET:
            h = [[1.0, 1.0], [0.0, 1.0]]
            structure = DualityStructure.TENSOR_SUBSET

    factor = np.array(h)
    H = np.ones((1, 1))
    for _ in range(N):
        H = np.kron(H, factor)

    return DualityMatrix.create(H, structure=structure, factor=factor)


def null_space(M: Any, tol: Tolerances = DEFAULT_TOLERANCES) -> tuple[int, np.ndarray]:
    """
    Rank and right null space basis from QR with column pivoting.
    With M·P = Q·[R11 R12; 0 0] the basis is P·[−R11⁻¹R12; I].
    """
    A = as_array(M)
    n_cols = A.shape[1]
    _, R, perm = scipy.linalg.qr(A, pivoting=True)

    diag = np.abs(np.diag(R))
    scale = max(1.0, float(diag[0])) if diag.size else 1.0
    rank = int(np.count_nonzero(diag > tol.pivot * scale))

    if rank == n_cols:
        return (rank, np.zeros((n_cols, 0)))

    R11 = R[:rank, :rank]
    R12 = R[:rank, rank:]
    top = -scipy.linalg.solve_triangular(R11, R12) if rank else np.zeros((0, n_cols))
    basis_perm = np.vstack([top, np.eye(n_cols - rank)])
    basis = np.zeros_like(basis_perm)
    basis[perm, :] = basis_perm
    return (rank, basis)


def nondegeneracy_check(H: DualityMatrix|Any, tol: Tolerances = DEFAULT_TOLERANCES) -> NondegeneracyReport:
    Hm = as_array(H)
    rank, right = null_space(Hm, tol)
    invertible = Hm.shape[0] == Hm.shape[1] == rank
    if invertible:
        return NondegeneracyReport(rank=rank, invertible=True)

    _, left = null_space(Hm.T, tol)
    return NondegeneracyReport(
        rank = rank,
        invertible = False,
        right_null_space = right if right.shape[1] else None,
        left_null_space = left if left.shape[1] else None,
    )


def lift_duality(H: DualityMatrix|Any, projection: list[int]) -> DualityMatrix:
    """H̃(x,z) = H(x, projection[z])"""
    Hm = as_array(H)
    idx = np.asarray(projection, dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() >= Hm.shape[1]):
        error = f"Projection maps outside the {Hm.shape[1]} columns of H"
        _LOGGER.debug(error)
        raise DualityDataError(error)
    return DualityMatrix.create(Hm[:, idx])


def measure_from_diagonal(H: DualityMatrix|Any) -> MeasureDualityData:
    """mu(x) = 1/|H(x,x)| on the support {x : H(x,x) != 0}, zero elsewhere."""
    Hm = as_array(H)
    if Hm.shape[0] != Hm.shape[1] or np.any(Hm[~np.eye(Hm.shape[0], dtype=bool)] != 0.0):
        error = f"Duality matrix of shape {Hm.shape} is not diagonal"
        _LOGGER.debug(error)
        raise DualityDataError(error)

    d = np.diag(Hm)
    support = tuple(int(x) for x in np.flatnonzero(d != 0.0))
    mu = np.zeros_like(d)
    mu[list(support)] = 1.0 / np.abs(d[list(support)])

    return MeasureDualityData(
        measure = mu,
        support = support,
        duality = DualityMatrix.create(Hm, structure=DualityStructure.DIAGONAL),
    )


def diagonal_from_measure(mu: Any) -> DualityMatrix:
    m = as_array(mu).ravel()
    if np.any(m < 0):
        error = f"Measure must be nonnegative, got min {m.min()}"
        _LOGGER.debug(error)
        raise DualityDataError(error)

    d = np.zeros_like(m)
    support = m != 0.0
    d[support] = 1.0 / m[support]
    return DualityMatrix.create(np.diag(d), structure=DualityStructure.DIAGONAL)


def check_measure_duality(P: Any, Q: Any, mu: Any) -> float:
    """Max over pairs of |mu(x)P(x,y) − mu(y)Q(y,x)|; P, Q may be substochastic."""
    Pm, Qm = as_array(P), as_array(Q)
    m = as_array(mu).ravel()
    if Pm.shape != Qm.shape or Pm.shape[0] != m.shape[0]:
        error = f"Dimension mismatch: P {Pm.shape}, Q {Qm.shape}, mu {m.shape}"
        _LOGGER.debug(error)
        raise DualityDataError(error)
    return max_norm(m[:, None] * Pm - (m[:, None] * Qm).T)


def check_trap(P: Any, trap: Any, tol: Tolerances = DEFAULT_TOLERANCES) -> bool:
    """True iff P(x, E∖T) = 0 for every x in T."""
    Pm = as_array(P)
    inside = np.zeros(Pm.shape[0], dtype=bool)
    inside[list(trap)] = True
    if not inside.any():
        return True
    return bool(np.all(np.abs(Pm[np.ix_(inside, ~inside)]) <= tol.entry))


def resolvent(L: GeneratorMatrix|Any, lam: float) -> np.ndarray:
    """R_lam = (lam·I − L)⁻¹"""
    Lm = as_array(L)
    if lam <= 0:
        error = f"Resolvent parameter must be positive, got {lam}"
        _LOGGER.debug(error)
        raise DualityDataError(error)
    try:
        return scipy.linalg.solve(lam * np.eye(Lm.shape[0]) - Lm, np.eye(Lm.shape[0]))
    except (scipy.linalg.LinAlgError, ValueError) as ex:
        error = f"lam·I − L is singular at lam={lam}: {ex}"
        _LOGGER.debug(error)
        raise DualityNumericError(error)


def resolvent_duality_check(LX: Any, LY: Any, mu: Any, lam: float, t: float, tol: Tolerances = DEFAULT_TOLERANCES) -> ResolventReport:
    """
    For weakly mu-dual generators (mu(x)LX(x,y) = mu(y)LY(y,x)) the kernel
    r(x,y) = R_lam(x,y)/mu(y) is a duality function between the two semi-groups.
    """
    LXm, LYm = as_array(LX), as_array(LY)
    m = as_array(mu).ravel()
    if LXm.shape != LYm.shape or LXm.shape[0] != m.shape[0]:
        error = f"Dimension mismatch: LX {LXm.shape}, LY {LYm.shape}, mu {m.shape}"
        _LOGGER.debug(error)
        raise DualityDataError(error)
    if m.min() <= 0:
        error = f"Resolvent duality needs a strictly positive measure"
        _LOGGER.debug(error)
        raise DualityPreconditionError(error)

    weak = check_measure_duality(LXm, LYm, m)
    if weak > tol.reversible:
        error = f"Generators are not weakly dual with respect to the measure: residual {weak:.3e}"
        _LOGGER.debug(error)
        raise DualityPreconditionError(error)

    r = resolvent(LXm, lam) / m[None, :]
    PX = transition_matrix(GeneratorMatrix.create(LXm), t)
    PY = transition_matrix(GeneratorMatrix.create(LYm), t)
    residual = check_duality_discrete(PX, PY, r)

    return ResolventReport(residual=residual, weak_residual=weak, passed=residual <= tol.semigroup, kernel=r)


def symmetry_from_duality(H_tilde: Any, H: Any) -> np.ndarray:
    """S = H̃·H⁻¹; commutes with P whenever H̃ and H are both dualities of (P, Q)."""
    Ht, Hm = as_array(H_tilde), as_array(H)
    try:
        return scipy.linalg.solve(Hm.T, Ht.T).T
    except (scipy.linalg.LinAlgError, ValueError) as ex:
        error = f"Duality matrix is not invertible: {ex}"
        _LOGGER.debug(error)
        raise DualityPreconditionError(error)


def duality_from_symmetry(S: Any, H: Any) -> DualityMatrix:
    return DualityMatrix.create(as_array(S) @ as_array(H))


def time_reversal(Q: Any, pi: Any) -> np.ndarray:
    """Q̃(y,y') = pi(y')Q(y',y)/pi(y)"""
    Qm = as_array(Q)
    p = as_array(pi).ravel()
    if p.min() <= 0:
        error = f"Time reversal needs a strictly positive measure"
        _LOGGER.debug(error)
        raise DualityPreconditionError(error)
    return (p[:, None] * Qm).T / p[:, None]


def doob_transform(M: StochasticMatrix|GeneratorMatrix|Any, h: Any, tol: Tolerances = DEFAULT_TOLERANCES) -> np.ndarray:
    """
    h-transform M_h(x,y) = M(x,y)h(y)/h(x); generators get the diagonal
    correction −(Lh)(x)/h(x). Kernels need Ph = h.
    """
    Mm = as_array(M)
    hv = as_array(h).ravel()
    if hv.min() <= 0:
        error = f"Doob transform needs a strictly positive function"
        _LOGGER.debug(error)
        raise DualityPreconditionError(error)

    transformed = Mm * hv[None, :] / hv[:, None]
    if isinstance(M, GeneratorMatrix):
        transformed -= np.diag((Mm @ hv) / hv)
    elif max_norm(Mm @ hv - hv) > tol.duality:
        error = f"Function is not harmonic for the kernel: residual {max_norm(Mm @ hv - hv):.3e}"
        _LOGGER.debug(error)
        raise DualityPreconditionError(error)
    return transformed


def intertwining_from_duality(H: Any, pi: Any) -> StochasticMatrix:
    """
    Stochastic link Λ = D_h⁻¹·H·D_pi with h = H·pi, after shifting H to be nonnegative.
    If PH = HQᵀ and pi is stationary for Q, then P_h·Λ = Λ·Q̃ with Q̃ the pi-reversal of Q.
    """
    Hm = as_array(H)
    p = as_array(pi).ravel()
    shift = max(0.0, -float(Hm.min()))
    Hs = Hm + shift
    h = Hs @ p
    if h.min() <= 0:
        error = f"H·pi vanishes at state {int(np.argmin(h))}; no stochastic link"
        _LOGGER.debug(error)
        raise DualityPreconditionError(error)
    return StochasticMatrix.create(Hs * p[None, :] / h[:, None])


def duality_from_intertwining(link: Any, pi: Any) -> DualityMatrix:
    """H(x,y) = Λ(x,y)/pi(y); dual to the pi-reversal of Q whenever P·Λ = Λ·Q."""
    p = as_array(pi).ravel()
    if p.min() <= 0:
        error = f"Intertwining measure must be strictly positive"
        _LOGGER.debug(error)
        raise DualityPreconditionError(error)
    return DualityMatrix.create(as_array(link) / p[None, :])


def sep_generator(M: int) -> GeneratorMatrix:
    """Nearest-neighbour symmetric exclusion on {0,1}^M, swap rate 1 per bond."""
    n = 2 ** M
    L = np.zeros((n, n))
    for x in range(n):
        bits = index_to_config(x, M)
        for i in range(M - 1):
            if bits[i] != bits[i + 1]:
                # swap sites i, i+1: bit for site s has weight 2^(M-1-s)
                y = x ^ ((1 << (M - 1 - i)) | (1 << (M - 2 - i)))
                L[x, y] += 1.0
        L[x, x] = -L[x].sum()
    return GeneratorMatrix.create(L)


def sep_instance(M: int) -> SepInstance:
    if not (SEP_MIN_SITES <= M <= SEP_MAX_SITES):
        error = f"SEP instance needs {SEP_MIN_SITES} <= M <= {SEP_MAX_SITES}, got {M}"
        _LOGGER.debug(error)
        raise DualityDataError(error)

    link = np.ones((1, 1))
    for _ in range(M):
        link = np.kron(link, np.array([[0.5, 0.5], [0.0, 1.0]]))

    return SepInstance(
        generator = sep_generator(M),
        duality = build_tensor_duality(TensorKind.SUBSET, M),
        link = StochasticMatrix.create(link),
    )


def sep_symmetry_check(M: int, tol: Tolerances = DEFAULT_TOLERANCES) -> SepReport:
    """
    Commutation LΛ = ΛL, self-duality LH = HLᵀ for H(A,B) = 1{A⊂B},
    harmonicity of h(A) = 2^{-|A|}, and agreement of Λ with the link derived
    from H and the Bernoulli(1/2) product measure.
    """
    inst = sep_instance(M)
    L = inst.generator.entries
    H = inst.duality.entries
    link = inst.link.entries

    commutation = max_norm(L @ link - link @ L)
    duality = max_norm(duality_residual_matrix(L, L, H))

    counts = np.array([sum(index_to_config(x, M)) for x in range(2 ** M)])
    h = 0.5 ** counts
    harmonic = max_norm(L @ h)

    uniform = np.full(2 ** M, 0.5 ** M)
    derived = intertwining_from_duality(H, uniform).entries
    link_residual = max_norm(derived - link)

    passed = max(commutation, duality, harmonic, link_residual) <= tol.exact
    _LOGGER.info(f"SEP M={M}: commutation={commutation:.3e}, duality={duality:.3e}, passed={passed}")
    return SepReport(
        sites = M,
        commutation_residual = commutation,
        duality_residual = duality,
        harmonic_residual = harmonic,
        link_residual = link_residual,
        passed = passed,
    )
