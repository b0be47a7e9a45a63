"""core.py: finite-state matrix substrate for dualitykit."""

import csv
import json
import logging
import math
import os

import numpy as np
import scipy.linalg
import scipy.stats

from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any

from .duality_const import (
    POISSON_TAIL,
    TOL_ENTRY,
    TOL_PIVOT,
    TOL_ROW,
    UNIFORMIZATION_MAX_MEAN,
)

_LOGGER = logging.getLogger(__name__)


class DualityStructure(StrEnum):
    TENSOR_COALESCING = "tensor-coalescing"
    TENSOR_ANNIHILATING = "tensor-annihilating"
    TENSOR_Q = "tensor-q"
    TENSOR_SUBSET = "tensor-subset"
    SIEGMUND = "siegmund"
    DIAGONAL = "diagonal"
    GENERIC = "generic"


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    max_row_deviation: float
    worst_row: int
    min_entry: float
    clamped: int = 0


def _frozen(values: Any, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _require_finite(arr: np.ndarray, what: str):
    if not np.all(np.isfinite(arr)):
        bad = tuple(int(i) for i in np.argwhere(~np.isfinite(arr))[0])
        error = f"Non-finite entry in {what} at {bad}"
        _LOGGER.debug(error)
        raise DualityDataError(error)


def as_array(matrix: Any) -> np.ndarray:
    """Plain float ndarray view of any matrix-like or matrix type"""
    if hasattr(matrix, "entries"):
        return matrix.entries
    return np.asarray(matrix, dtype=float)


@dataclass(frozen=True)
class StochasticMatrix:
    entries: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.entries.shape[0]

    @property
    def n_cols(self) -> int:
        return self.entries.shape[1]

    @staticmethod
    def create(values: Any, tol_entry: float = TOL_ENTRY, tol_row: float = TOL_ROW) -> 'StochasticMatrix':
        arr = np.array(as_array(values), dtype=float)
        if arr.ndim != 2 or arr.size == 0:
            error = f"Stochastic matrix must be a non-empty 2d array, got shape {arr.shape}"
            _LOGGER.debug(error)
            raise DualityDataError(error)

        report = validate_stochastic(arr, tol_entry=tol_entry, tol_row=tol_row)
        if not report.passed:
            error = f"Not a stochastic matrix: row {report.worst_row} deviates by {report.max_row_deviation:.3e}, min entry {report.min_entry:.3e}"
            _LOGGER.debug(error)
            raise DualityDataError(error)

        arr[arr < 0] = 0.0
        return StochasticMatrix(entries=_frozen(arr))


@dataclass(frozen=True)
class GeneratorMatrix:
    entries: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @staticmethod
    def create(values: Any, tol_entry: float = TOL_ENTRY, tol_row: float = TOL_ROW) -> 'GeneratorMatrix':
        arr = np.array(as_array(values), dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.size == 0:
            error = f"Generator must be a non-empty square matrix, got shape {arr.shape}"
            _LOGGER.debug(error)
            raise DualityDataError(error)

        report = validate_generator(arr, tol_entry=tol_entry, tol_row=tol_row)
        if not report.passed:
            error = f"Not a Q-matrix: row {report.worst_row} sums to {report.max_row_deviation:.3e}, min off-diagonal {report.min_entry:.3e}"
            _LOGGER.debug(error)
            raise DualityDataError(error)

        off = ~np.eye(arr.shape[0], dtype=bool)
        arr[off & (arr < 0)] = 0.0
        return GeneratorMatrix(entries=_frozen(arr))


@dataclass(frozen=True)
class ProbabilityVector:
    entries: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @staticmethod
    def create(values: Any, tol_entry: float = TOL_ENTRY, tol_row: float = TOL_ROW) -> 'ProbabilityVector':
        arr = np.array(as_array(values), dtype=float).ravel()
        _require_finite(arr, "probability vector")
        if arr.size == 0 or arr.min() < -tol_entry or abs(arr.sum() - 1.0) > tol_row:
            error = f"Not a probability vector: min {arr.min() if arr.size else math.nan:.3e}, sum {arr.sum():.12f}"
            _LOGGER.debug(error)
            raise DualityDataError(error)
        arr[arr < 0] = 0.0
        return ProbabilityVector(entries=_frozen(arr))


@dataclass(frozen=True)
class SignedVector:
    entries: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @staticmethod
    def create(values: Any) -> 'SignedVector':
        arr = np.array(as_array(values), dtype=float).ravel()
        _require_finite(arr, "signed vector")
        return SignedVector(entries=_frozen(arr))


@dataclass(frozen=True)
class DualityMatrix:
    entries: np.ndarray
    structure: DualityStructure = DualityStructure.GENERIC
    factor: np.ndarray|None = field(default=None, compare=False)

    @property
    def n_rows(self) -> int:
        return self.entries.shape[0]

    @property
    def n_cols(self) -> int:
        return self.entries.shape[1]

    @staticmethod
    def create(values: Any, structure: DualityStructure = DualityStructure.GENERIC, factor: Any = None) -> 'DualityMatrix':
        arr = np.array(as_array(values), dtype=float)
        if arr.ndim != 2 or arr.size == 0:
            error = f"Duality matrix must be a non-empty 2d array, got shape {arr.shape}"
            _LOGGER.debug(error)
            raise DualityDataError(error)
        _require_finite(arr, "duality matrix")

        return DualityMatrix(
            entries = _frozen(arr),
            structure = DualityStructure(structure),
            factor = _frozen(factor) if factor is not None else None,
        )


def validate_stochastic(matrix: Any, tol_entry: float = TOL_ENTRY, tol_row: float = TOL_ROW) -> ValidationReport:
    """
    Check nonnegativity and unit row sums.
    Entries in [-tol_entry, 0) count as clamped and do not fail the check.
    """
    arr = as_array(matrix)
    _require_finite(arr, "matrix")

    deviations = np.abs(arr.sum(axis=1) - 1.0)
    worst_row = int(np.argmax(deviations))
    min_entry = float(arr.min())
    clamped = int(np.count_nonzero((arr < 0) & (arr >= -tol_entry)))

    passed = bool(deviations[worst_row] <= tol_row and min_entry >= -tol_entry)
    return ValidationReport(
        passed = passed,
        max_row_deviation = float(deviations[worst_row]),
        worst_row = worst_row,
        min_entry = min_entry,
        clamped = clamped,
    )


def validate_generator(matrix: Any, tol_entry: float = TOL_ENTRY, tol_row: float = TOL_ROW) -> ValidationReport:
    """Check zero row sums and nonnegative off-diagonal entries."""
    arr = as_array(matrix)
    _require_finite(arr, "generator")

    deviations = np.abs(arr.sum(axis=1))
    worst_row = int(np.argmax(deviations))
    off = arr[~np.eye(arr.shape[0], dtype=bool)]
    min_entry = float(off.min()) if off.size else 0.0
    clamped = int(np.count_nonzero((off < 0) & (off >= -tol_entry)))

    passed = bool(deviations[worst_row] <= tol_row and min_entry >= -tol_entry)
    return ValidationReport(
        passed = passed,
        max_row_deviation = float(deviations[worst_row]),
        worst_row = worst_row,
        min_entry = min_entry,
        clamped = clamped,
    )


def transition_matrix(generator: GeneratorMatrix|Any, t: float) -> StochasticMatrix:
    """
    exp(tL) by uniformization.

    With rate = max_i |L_ii| and P~ = I + L/rate, exp(tL) is the Poisson(rate*t)
    mixture of the powers of P~. Large rate*t is split into equal pieces whose
    product is taken afterwards.
    """
    if t < 0:
        error = f"Time must be nonnegative, got {t}"
        _LOGGER.debug(error)
        raise DualityDataError(error)

    L = as_array(generator)
    n = L.shape[0]
    rate = float(np.max(np.abs(np.diag(L)))) if n else 0.0
    if rate == 0.0 or t == 0.0:
        return StochasticMatrix.create(np.eye(n))

    mean = rate * t
    pieces = max(1, math.ceil(mean / UNIFORMIZATION_MAX_MEAN))
    piece_mean = mean / pieces

    # Truncation depth where the Poisson tail drops below POISSON_TAIL
    depth = int(scipy.stats.poisson.isf(POISSON_TAIL, piece_mean)) + 1
    weights = scipy.stats.poisson.pmf(np.arange(depth + 1), piece_mean)

    jump = np.eye(n) + L / rate
    power = np.eye(n)
    piece = weights[0] * power
    for k in range(1, depth + 1):
        power = power @ jump
        piece += weights[k] * power

    result = np.linalg.matrix_power(piece, pieces) if pieces > 1 else piece
    _LOGGER.debug(f"uniformization: rate={rate:.6g}, t={t:.6g}, pieces={pieces}, depth={depth}")

    return StochasticMatrix.create(result)


def stationary_distribution(chain: StochasticMatrix|GeneratorMatrix|Any, tol_row: float = TOL_ROW) -> ProbabilityVector:
    """
    Solve pi P = pi (or pi L = 0) together with sum(pi) = 1 by least squares.
    A GeneratorMatrix instance, or any square matrix with zero row sums, is treated as a generator.
    """
    M = as_array(chain)
    n = M.shape[0]
    is_generator = isinstance(chain, GeneratorMatrix) or (
        not isinstance(chain, StochasticMatrix) and np.allclose(M.sum(axis=1), 0.0)
    )

    A = M.T if is_generator else (M.T - np.eye(n))
    A = np.vstack([A, np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0

    try:
        pi, _, _, _ = scipy.linalg.lstsq(A, b)
    except (scipy.linalg.LinAlgError, ValueError) as ex:
        error = f"Stationary solve failed: {ex}"
        _LOGGER.debug(error)
        raise DualityNumericError(error)

    residual = float(np.max(np.abs(pi @ M))) if is_generator else float(np.max(np.abs(pi @ M - pi)))
    if residual > tol_row or pi.min() < -tol_row:
        error = f"Stationary solve did not converge: residual {residual:.3e}, min entry {pi.min():.3e}"
        _LOGGER.debug(error)
        raise DualityNumericError(error)

    pi = np.clip(pi, 0.0, None)
    return ProbabilityVector.create(pi / pi.sum())


def eigenvalue_multiset(matrix: Any) -> list[complex]:
    """
    Eigenvalues with algebraic multiplicity, sorted by (real, imag).
    LAPACK geev: Hessenberg reduction followed by shifted QR.
    """
    M = as_array(matrix)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        error = f"Eigenvalues need a square matrix, got shape {M.shape}"
        _LOGGER.debug(error)
        raise DualityDataError(error)
    _require_finite(M, "matrix")

    try:
        values = scipy.linalg.eigvals(M)
    except scipy.linalg.LinAlgError as ex:
        error = f"Eigenvalue iteration failed for {M.shape[0]}x{M.shape[0]} matrix: {ex}"
        _LOGGER.debug(error)
        raise DualityNumericError(error)

    return [complex(v) for v in np.sort_complex(values)]


def matrix_rank(matrix: Any, tol: float = TOL_PIVOT) -> int:
    """Rank from QR with column pivoting; pivots below tol (relative to the first) count as zero."""
    M = as_array(matrix)
    if M.size == 0:
        return 0
    R = scipy.linalg.qr(M, mode='r', pivoting=True)[0]
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return 0
    return int(np.count_nonzero(diag > tol * max(1.0, diag[0])))


def config_to_index(bits: Any) -> int:
    """Index of a {0,1}^N configuration; site 0 is the most significant bit."""
    index = 0
    for bit in bits:
        index = (index << 1) | int(bit)
    return index


def index_to_config(index: int, n_sites: int) -> tuple[int, ...]:
    return tuple((index >> (n_sites - 1 - site)) & 1 for site in range(n_sites))


def load_matrix(path: str) -> np.ndarray:
    """
    Read a dense matrix from JSON (array of arrays) or CSV (row-major, no header).
    Ragged rows and non-numeric cells raise DualityDataError naming file and row.
    """
    ext = os.path.splitext(path)[1].lower()
    rows: list[list[float]] = []

    with open(path, "r", encoding="utf-8") as fh:
        if ext == ".json":
            try:
                data = json.load(fh)
            except json.JSONDecodeError as ex:
                error = f"{path}:{ex.lineno}: invalid JSON: {ex.msg}"
                _LOGGER.debug(error)
                raise DualityDataError(error)
            if not isinstance(data, list) or not all(isinstance(r, list) for r in data):
                error = f"{path}: expected a JSON array of arrays"
                _LOGGER.debug(error)
                raise DualityDataError(error)
            source = enumerate(data, start=1)
        else:
            source = enumerate((r for r in csv.reader(fh) if r), start=1)

        for row_no, row in source:
            try:
                values = [float(cell) for cell in row]
            except (TypeError, ValueError):
                error = f"{path}: row {row_no}: non-numeric entry in {row}"
                _LOGGER.debug(error)
                raise DualityDataError(error)
            if rows and len(values) != len(rows[0]):
                error = f"{path}: row {row_no}: has {len(values)} columns, expected {len(rows[0])}"
                _LOGGER.debug(error)
                raise DualityDataError(error)
            rows.append(values)

    if not rows:
        error = f"{path}: empty matrix"
        _LOGGER.debug(error)
        raise DualityDataError(error)

    arr = np.array(rows, dtype=float)
    _require_finite(arr, path)
    return arr


def save_matrix(path: str, matrix: Any):
    arr = as_array(matrix)
    ext = os.path.splitext(path)[1].lower()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if ext == ".json":
            json.dump(arr.tolist(), fh)
        else:
            writer = csv.writer(fh)
            for row in arr:
                writer.writerow([f"{v:.17g}" for v in row])


class DualityError(Exception):
    """Exception to indicate generic failure."""

    def __init__(self, message: str = "", witness: Any = None):
        super().__init__(message)
        self.witness = witness

class DualityDataError(DualityError):
    """Exception to indicate malformed input data."""

class DualityPreconditionError(DualityError):
    """Exception to indicate that a documented precondition does not hold."""

class DualityNumericError(DualityError):
    """Exception to indicate a numerical failure."""
