"""Thin SVD, energy-based rank selection and orthogonal projectors."""

import logging
from dataclasses import dataclass
from typing import Sequence
import numpy as np
from app.errors import SubspaceError

logger = logging.getLogger(__name__)

PINV_RTOL = 1e-12


@dataclass(frozen=True)
class SvdResult:
    """M = U diag(sigma) V^T with orthonormal columns in U and V."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.U * self.sigma) @ self.V.T


@dataclass(frozen=True)
class SourceBasis:
    """Principal subspace of the row-centred source magnitudes."""

    S: np.ndarray
    d: int
    energy_fraction: float
    row_mean: np.ndarray

    def project_out(self, matrix: np.ndarray) -> np.ndarray:
        """matrix - S S^T matrix."""
        return matrix - self.S @ (self.S.T @ matrix)


def thin_svd(matrix: np.ndarray) -> SvdResult:
    """Economy-size SVD with r = min(rows, cols) singular triplets."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.size == 0:
        raise SubspaceError(f"expected a non-empty 2-D matrix, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise SubspaceError("matrix contains non-finite entries")
    U, sigma, Vt = np.linalg.svd(matrix, full_matrices=False)
    return SvdResult(U=U, sigma=sigma, V=Vt.T)


def energy_rank(sigma: np.ndarray, fraction: float) -> int:
    """Smallest d whose leading singular values hold `fraction` of the energy."""
    if not 0.0 < fraction <= 1.0:
        raise SubspaceError(f"fraction must lie in (0, 1], got {fraction}")
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.size == 0 or np.any(sigma < 0):
        raise SubspaceError("sigma must be a non-empty non-negative vector")
    cumulative = np.cumsum(sigma**2)
    total = cumulative[-1]
    if total <= 0.0:
        raise SubspaceError("zero-energy matrix")
    return int(np.argmax(cumulative >= fraction * total)) + 1


def source_basis(Ys: np.ndarray, fraction: float = 0.95) -> SourceBasis:
    """Leading left singular vectors of Ys after removing each bin's mean."""
    Ys = np.asarray(Ys, dtype=np.float64)
    if Ys.ndim != 2 or Ys.size == 0:
        raise SubspaceError(f"expected a non-empty 2-D matrix, got shape {Ys.shape}")
    row_mean = Ys.mean(axis=1)
    svd = thin_svd(Ys - row_mean[:, np.newaxis])
    d = energy_rank(svd.sigma, fraction)
    logger.debug(f"Source subspace rank {d} of {svd.sigma.size} at fraction {fraction}")
    return SourceBasis(
        S=svd.U[:, :d], d=d, energy_fraction=fraction, row_mean=row_mean
    )


def find_orth(Ys: np.ndarray, Yn: np.ndarray, fraction: float = 0.95) -> np.ndarray:
    """Component of the interferer Yn orthogonal to the source subspace of Ys."""
    Ys = np.asarray(Ys, dtype=np.float64)
    Yn = np.asarray(Yn, dtype=np.float64)
    if Ys.ndim != 2 or Yn.ndim != 2 or Ys.shape[0] != Yn.shape[0]:
        raise SubspaceError(
            f"row mismatch: source {Ys.shape} vs interferer {Yn.shape}"
        )
    return source_basis(Ys, fraction).project_out(Yn)


def span_basis(columns: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the column span, truncated at the relative threshold."""
    U, sigma, _ = np.linalg.svd(columns, full_matrices=False)
    if sigma.size == 0 or sigma[0] == 0.0:
        raise SubspaceError("basis vectors are all zero")
    tolerance = max(columns.shape) * sigma[0] * PINV_RTOL
    rank = int(np.sum(sigma > tolerance))
    if rank < columns.shape[1]:
        logger.warning(f"Rank-deficient basis: rank {rank} of {columns.shape[1]}")
    return U[:, :rank]


def project_onto_span(
    basis_vectors: Sequence[np.ndarray], target: np.ndarray
) -> np.ndarray:
    """Orthogonal projection of `target` onto span(basis_vectors)."""
    if len(basis_vectors) == 0:
        raise SubspaceError("at least one basis vector is required")
    target = np.asarray(target, dtype=np.float64)
    lengths = {np.asarray(v).shape for v in basis_vectors} | {target.shape}
    if len(lengths) != 1 or target.ndim != 1:
        raise SubspaceError(f"length mismatch: {sorted(lengths)}")
    Q = span_basis(np.column_stack(basis_vectors).astype(np.float64))
    return Q @ (Q.T @ target)
