"""cone.py: constructive cone duality for finite duality matrices."""

import logging

import numpy as np
import scipy.linalg

from fractions import Fraction
from typing import Any

from .duality_const import (
    INVARIANCE_SAMPLE_TIMES,
    LAMBDA_SEARCH_MAX_EXPONENT,
    SEMIGROUP_SAMPLE_TIMES,
)
from .duality_core import (
    DualityNumericError,
    DualityPreconditionError,
    GeneratorMatrix,
    StochasticMatrix,
    as_array,
    matrix_rank,
    transition_matrix,
)
from .duality_data import (
    DEFAULT_TOLERANCES,
    ConeDual,
    ContinuousDualResult,
    ExtremalStructure,
    Tolerances,
)
from .duality_algebra import (
    check_duality_discrete,
    check_duality_generators,
    check_v1plus_invariance,
    convex_combination,
    max_norm,
)

_LOGGER = logging.getLogger(__name__)


def extremal_columns(H: Any, tol: Tolerances = DEFAULT_TOLERANCES) -> ExtremalStructure:
    """
    Extremal points of the convex hull of the columns of H.
    Columns equal within tol are collapsed onto the lowest index first.
    """
    Hm = np.array(as_array(H), dtype=float)
    m = Hm.shape[1]

    representatives = []
    distinct = []
    for y in range(m):
        rep = next((d for d in distinct if max_norm(Hm[:, d] - Hm[:, y]) <= tol.extremal), None)
        if rep is None:
            distinct.append(y)
            rep = y
        representatives.append(rep)

    duplicates = {}
    for y, rep in enumerate(representatives):
        if y != rep:
            duplicates.setdefault(rep, ())
            duplicates[rep] += (y,)

    extremal = []
    for d in distinct:
        others = [o for o in distinct if o != d]
        if not others:
            extremal.append(d)
            continue
        nu, residual = convex_combination(Hm[:, others], Hm[:, d], tol.extremal)
        if nu is None:
            extremal.append(d)
        else:
            _LOGGER.debug(f"column {d} is a mixture of {others}, residual {residual:.3e}")

    return ExtremalStructure(
        columns = Hm,
        extremal_indices = tuple(extremal),
        representatives = tuple(representatives),
        duplicates = duplicates,
    )


def simplex_test(structure: ExtremalStructure, tol: Tolerances = DEFAULT_TOLERANCES) -> bool:
    """Extremal columns affinely independent: rank of differences equals |F1| − 1."""
    E = structure.columns[:, list(structure.extremal_indices)]
    k = E.shape[1]
    if k <= 1:
        structure.simplex = True
    else:
        structure.simplex = matrix_rank(E[:, 1:] - E[:, [0]], tol.pivot) == k - 1
    return structure.simplex


def _as_fraction(value: float) -> Fraction:
    return Fraction(value).limit_denominator(10**12)


def _solve_exact(A: list[list[Fraction]], B: list[list[Fraction]]) -> list[list[Fraction]]:
    """
    Solve A·X = B for a consistent system with full column rank by
    Gauss-Jordan elimination over the rationals.
    """
    rows, cols = len(A), len(A[0])
    aug = [A[r][:] + B[r][:] for r in range(rows)]

    pivot_row = 0
    for c in range(cols):
        pr = next((r for r in range(pivot_row, rows) if aug[r][c] != 0), None)
        if pr is None:
            error = f"Affine system is rank deficient at column {c}"
            _LOGGER.debug(error)
            raise DualityNumericError(error)
        aug[pivot_row], aug[pr] = aug[pr], aug[pivot_row]

        p = aug[pivot_row][c]
        aug[pivot_row] = [v / p for v in aug[pivot_row]]
        for r in range(rows):
            if r != pivot_row and aug[r][c] != 0:
                f = aug[r][c]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[pivot_row])]
        pivot_row += 1

    # remaining rows must read 0 = 0
    for r in range(pivot_row, rows):
        if any(v != 0 for v in aug[r][cols:]):
            error = f"Affine system is inconsistent in row {r}"
            _LOGGER.debug(error)
            raise DualityNumericError(error)

    return [aug[r][cols:] for r in range(cols)]


def _affine_coordinates(E: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, float]:
    """Solve [E; 1ᵀ]·pi = [target; 1] for every target column by least squares."""
    A = np.vstack([E, np.ones((1, E.shape[1]))])
    B = np.vstack([targets, np.ones((1, targets.shape[1]))])
    X, _, _, _ = scipy.linalg.lstsq(A, B)
    return (X, max_norm(A @ X - B))


def _require_simplex(structure: ExtremalStructure, tol: Tolerances):
    if structure.simplex is None:
        simplex_test(structure, tol)
    if not structure.simplex:
        error = f"Extremal columns {list(structure.extremal_indices)} are not affinely independent; the convex hull is not a simplex, use solve_dual instead"
        _LOGGER.debug(error)
        raise DualityPreconditionError(error, witness=list(structure.extremal_indices))


def decomposition_kernel(H: Any, exact: bool = False, tol: Tolerances = DEFAULT_TOLERANCES) -> ExtremalStructure:
    """
    Kernel Pi (|F| x |F1|): row y holds the unique convex weights with
    H(·,y) = Σ_e Pi(y,e)·e. Rows at F1 form an identity block.
    """
    structure = H if isinstance(H, ExtremalStructure) else extremal_columns(H, tol)
    _require_simplex(structure, tol)

    F1 = list(structure.extremal_indices)
    E = structure.columns[:, F1]
    X, residual = _affine_coordinates(E, structure.columns)
    if residual > tol.extremal:
        error = f"Decomposition kernel residual {residual:.3e} exceeds {tol.extremal:.1e}"
        _LOGGER.debug(error)
        raise DualityNumericError(error)

    kernel = X.T
    kernel[np.abs(kernel) <= tol.extremal] = 0.0
    kernel[F1, :] = np.eye(len(F1))
    structure.kernel = StochasticMatrix.create(kernel, tol_entry=tol.extremal).entries

    if exact:
        A = [[_as_fraction(v) for v in row] for row in E.tolist()] + [[Fraction(1)] * len(F1)]
        B = [[_as_fraction(v) for v in row] for row in structure.columns.tolist()] + [[Fraction(1)] * structure.n_columns]
        X_exact = _solve_exact(A, B)
        structure.kernel_exact = [[X_exact[e][y] for e in range(len(F1))] for y in range(structure.n_columns)]

    return structure


def projection_kernel(structure: ExtremalStructure) -> np.ndarray:
    """Pi-hat (|F| x |F|): the columns of Pi placed at F1, zero elsewhere."""
    n = structure.n_columns
    projection = np.zeros((n, n))
    projection[:, list(structure.extremal_indices)] = structure.kernel
    return projection


def jump_dual(R: Any, kernel: Any, extremal_indices: tuple[int, ...]|list[int]) -> np.ndarray:
    """Q = Pi·R·S with S placing F1 coordinates back among all of F."""
    Rm, Pi = as_array(R), as_array(kernel)
    Q = np.zeros((Pi.shape[0], Pi.shape[0]))
    Q[:, list(extremal_indices)] = Pi @ Rm
    return Q


def intertwining_residual(Q: Any, kernel: Any, R: Any) -> float:
    """‖Q·Pi − Pi·R‖"""
    Qm, Pi, Rm = as_array(Q), as_array(kernel), as_array(R)
    return max_norm(Qm @ Pi - Pi @ Rm)


def _is_generator(M: Any) -> bool:
    if isinstance(M, GeneratorMatrix):
        return True
    if isinstance(M, StochasticMatrix):
        return False
    return bool(np.allclose(as_array(M).sum(axis=1), 0.0))


def _require_invariant(L_or_P: Any, H: np.ndarray, continuous: bool, tol: Tolerances):
    if continuous:
        kernels = [transition_matrix(GeneratorMatrix.create(L_or_P), t) for t in INVARIANCE_SAMPLE_TIMES]
    else:
        kernels = [L_or_P]

    for P in kernels:
        report = check_v1plus_invariance(P, H, tol)
        if not report.invariant:
            error = f"Convex hull of the columns is not invariant: column {report.violating_column} leaves it"
            _LOGGER.debug(error)
            raise DualityPreconditionError(error, witness=report.violating_column)


def _offdiagonal_min(M: np.ndarray) -> float:
    off = M[~np.eye(M.shape[0], dtype=bool)]
    return float(off.min()) if off.size else 0.0


def _select_lambda(b_hat: np.ndarray, projection: np.ndarray, tol: Tolerances) -> int:
    """Smallest integer lam >= 1 making b_hat + lam·(projection − I) a Q-matrix."""
    shift = projection - np.eye(projection.shape[0])

    def valid(lam: int) -> bool:
        return _offdiagonal_min(b_hat + lam * shift) >= -tol.entry

    if valid(1):
        return 1

    low = 1
    for exponent in range(1, LAMBDA_SEARCH_MAX_EXPONENT + 1):
        high = 2 ** exponent
        if valid(high):
            break
        low = high
    else:
        error = f"No jump intensity up to 2^{LAMBDA_SEARCH_MAX_EXPONENT} yields a Q-matrix; min off-diagonal {_offdiagonal_min(b_hat + high * shift):.3e}"
        _LOGGER.debug(error)
        raise DualityNumericError(error)

    # valid(high) and not valid(low); validity is monotone in lam
    while high - low > 1:
        mid = (low + high) // 2
        if valid(mid):
            high = mid
        else:
            low = mid
    return high


def continuous_dual_generator(L: GeneratorMatrix|Any, H: Any, tol: Tolerances = DEFAULT_TOLERANCES) -> ContinuousDualResult:
    """
    Q-matrix L̂ on F with L·H = H·L̂ᵀ.

    B is the generator acting on functions of y with B·Hᵀ = Hᵀ·Lᵀ and B·1 = 0.
    Writing Pi = Hᵀ·A + 1·cᵀ gives B·Pi = Hᵀ·Lᵀ·A, and
    L̂ = B·Pi-hat + lam·(Pi-hat − I) for the smallest workable integer lam.
    """
    Lm = as_array(L)
    structure = extremal_columns(H, tol)
    _require_simplex(structure, tol)
    Hm = structure.columns
    _require_invariant(Lm, Hm, True, tol)

    decomposition_kernel(structure, tol=tol)
    F1 = list(structure.extremal_indices)
    Pi = structure.kernel
    projection = projection_kernel(structure)

    m, n = Hm.shape[1], Hm.shape[0]
    design = np.hstack([Hm.T, np.ones((m, 1))])
    coeffs, _, _, _ = scipy.linalg.lstsq(design, Pi)
    fit = max_norm(design @ coeffs - Pi)
    if fit > tol.duality:
        error = f"Pi is not affine in the columns of H (residual {fit:.3e}); B is not determined"
        _LOGGER.debug(error)
        raise DualityNumericError(error)

    A = coeffs[:n, :]
    b_pi = Hm.T @ Lm.T @ A

    b_hat = np.zeros((m, m))
    b_hat[:, F1] = b_pi
    lam = _select_lambda(b_hat, projection, tol)
    _LOGGER.debug(f"jump intensity lam={lam}")

    L_hat = b_hat + lam * (projection - np.eye(m))
    generator = GeneratorMatrix.create(L_hat, tol_row=tol.row)

    report = check_duality_generators(Lm, generator, Hm, times=SEMIGROUP_SAMPLE_TIMES, tol=tol)
    return ContinuousDualResult(
        generator = generator,
        lam = lam,
        b_pi = b_pi,
        r_generator = b_pi[F1, :],
        projection = projection,
        residual = report.residual,
        semigroup_residuals = report.semigroup_residuals,
    )


def cone_dual(L_or_P: Any, H: Any, tol: Tolerances = DEFAULT_TOLERANCES) -> ConeDual:
    """
    Dual on the extremal columns F1. A kernel P gives the one-step matrix R
    and the jump dual on F; a generator gives the generator of R and L̂.
    """
    continuous = _is_generator(L_or_P)
    if continuous:
        result = continuous_dual_generator(L_or_P, H, tol)
        structure = decomposition_kernel(H, tol=tol)
        return ConeDual(
            extremal_indices = structure.extremal_indices,
            kernel = structure.kernel,
            R = result.r_generator,
            projection = result.projection,
            dual = result.generator.entries,
            continuous = True,
            lam = result.lam,
            residual = result.residual,
        )

    Pm = as_array(L_or_P)
    structure = extremal_columns(H, tol)
    _require_simplex(structure, tol)
    _require_invariant(Pm, structure.columns, False, tol)
    decomposition_kernel(structure, tol=tol)

    F1 = list(structure.extremal_indices)
    E = structure.columns[:, F1]
    X, residual = _affine_coordinates(E, Pm @ E)
    if residual > tol.duality:
        error = f"Image of the extremal columns has no affine representation (residual {residual:.3e})"
        _LOGGER.debug(error)
        raise DualityNumericError(error)

    R = X.T
    R[np.abs(R) <= tol.extremal] = 0.0
    R = StochasticMatrix.create(R, tol_entry=tol.extremal).entries
    Q = jump_dual(R, structure.kernel, F1)

    return ConeDual(
        extremal_indices = structure.extremal_indices,
        kernel = structure.kernel,
        R = R,
        projection = projection_kernel(structure),
        dual = Q,
        continuous = False,
        residual = check_duality_discrete(Pm, Q, structure.columns),
        intertwining_residual = intertwining_residual(Q, structure.kernel, R),
    )
