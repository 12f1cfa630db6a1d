"""Subspace-fitting inversion: truncated SVD, Kronecker projector, and
extraction of the full family of least-eigenvalue candidate solutions.

Given a symmetric M x M statistic matrix of rank d, the d dominant right
singular vectors R span the signal subspace. An M x d matrix A fits the
data iff its columns lie in span(R), i.e. iff vec(A) lies in the range of
``B = I_d (x) R`` under column-stacking vectorization (``vec(R C) =
(I (x) R) vec(C)``; column stacking is the convention used throughout
this package). The orthogonal projector onto the complement,

    Q = I - B (B^T B)^{-1} B^T,

therefore has exactly d**2 zero eigenvalues, and unvectorizing their
eigenvectors yields d**2 mutually orthogonal exact minimizers of the fit
residual. That the whole family fits equally well is precisely the
non-uniqueness of single-injection subspace inversion; picking one member
requires outside information.

All operations here are pure; the eigenvector sign is fixed so outputs
are deterministic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, FormatError, NumericalError
from .statistics import CorrelationMatrix, MeasurementEnsemble, correlation

ORTHONORMALITY_TOL = 1e-8
GAP_FACTOR = 1e-10


@dataclass(frozen=True, eq=False)
class SubspaceDecomposition:
    """Rank-d truncated SVD of a symmetric matrix plus the orthonormal
    complement G of the right singular subspace.

    ``ill_conditioned`` is set when the singular-value gap at the
    truncation boundary is below ``1e-10 * sigma[0]``, i.e. when the split
    between signal and complement is numerically ambiguous.
    """

    U: np.ndarray
    sigma: np.ndarray
    R: np.ndarray
    G: np.ndarray
    ill_conditioned: bool

    @property
    def channel_count(self) -> int:
        return self.U.shape[0]

    @property
    def rank(self) -> int:
        return self.U.shape[1]


@dataclass(frozen=True, eq=False)
class ProjectorQ:
    """Orthogonal projector Q onto the complement of range(B), with the
    Kronecker basis factor B = I_d (x) R of shape (M d, d**2)."""

    Q: np.ndarray
    B: np.ndarray

    @property
    def channel_count(self) -> int:
        return self.B.shape[0] // self.rank

    @property
    def rank(self) -> int:
        d2 = self.B.shape[1]
        return int(round(d2 ** 0.5))


@dataclass(frozen=True, eq=False)
class CandidateSet:
    """The d**2 unvectorized least-eigenvalue solutions.

    Each candidate is M x d with unit Frobenius norm; candidates are
    pairwise orthogonal under the trace inner product. ``null_count`` is a
    diagnostic: how many projector eigenvalues fall below 1e-8. It never
    changes the number of returned candidates, which is fixed at d**2.
    """

    candidates: tuple[np.ndarray, ...]
    eigenvalues: np.ndarray
    channel_count: int
    rank: int
    null_count: int


def _as_symmetric_matrix(Y) -> np.ndarray:
    if isinstance(Y, CorrelationMatrix):
        Y = Y.matrix
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[0] != Y.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {Y.shape}")
    scale = float(np.max(np.abs(Y))) or 1.0
    if float(np.max(np.abs(Y - Y.T))) > 1e-8 * scale:
        raise DomainError("input matrix is not symmetric")
    return Y


def truncated_svd(Y, d: int) -> SubspaceDecomposition:
    """Rank-d truncated SVD of a symmetric statistic matrix.

    Parameters
    ----------
    Y : (M, M) array or CorrelationMatrix
        Symmetric input.
    d : int
        Signal-subspace dimension, ``1 <= d < M``.
    """
    Y = _as_symmetric_matrix(Y)
    m = Y.shape[0]
    if not (isinstance(d, int) and 1 <= d):
        raise DimensionError(f"rank d must be a positive integer, got {d!r}")
    if d >= m:
        raise DimensionError(f"rank d must satisfy d < M, got d={d}, M={m}")

    U, s, Vt = np.linalg.svd(Y)
    gap = float(s[d - 1] - s[d])
    return SubspaceDecomposition(
        U=U[:, :d],
        sigma=s[:d],
        R=Vt[:d].T,
        G=Vt[d:].T,
        ill_conditioned=bool(gap < GAP_FACTOR * s[0]),
    )


def build_projector(R: np.ndarray, d: int) -> ProjectorQ:
    """Projector onto the complement of the vectorized subspace-consistent
    matrices: ``Q = I_{Md} - B (B^T B)^{-1} B^T`` with ``B = I_d (x) R``.

    ``R`` must have orthonormal columns (within 1e-8). For orthonormal R
    the projector spectrum is exactly {0 (x d**2), 1 (x Md - d**2)}.
    """
    R = np.asarray(R, dtype=float)
    if R.ndim != 2:
        raise DimensionError(f"R must be an M x d matrix, got shape {R.shape}")
    m, cols = R.shape
    if cols != d:
        raise DimensionError(f"R has {cols} columns but d={d}")
    if d < 1 or d > m:
        raise DimensionError(f"need 1 <= d <= M, got d={d}, M={m}")
    gram = R.T @ R
    if float(np.max(np.abs(gram - np.eye(d)))) > ORTHONORMALITY_TOL:
        raise DomainError("columns of R must be orthonormal within 1e-8")

    B = np.kron(np.eye(d), R)
    BtB = B.T @ B
    sv = np.linalg.svd(BtB, compute_uv=False)
    if sv[-1] < 1e-12 * sv[0]:
        raise NumericalError("normal equations B^T B are numerically singular")
    try:
        X = np.linalg.solve(BtB, B.T)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"normal equations solve failed: {exc}") from exc
    Q = np.eye(m * d) - B @ X
    Q = 0.5 * (Q + Q.T)
    return ProjectorQ(Q=Q, B=B)


def extract_candidates(projector: ProjectorQ, M: int, d: int) -> CandidateSet:
    """All d**2 least-eigenvalue solutions of the projector.

    The d**2 eigenvectors with smallest eigenvalues are unvectorized
    column-major into M x d matrices. Signs are fixed by making each
    candidate's largest-magnitude entry positive, so results are
    deterministic.
    """
    if projector.B.shape != (M * d, d * d):
        raise DimensionError(
            f"projector was built for shape {projector.B.shape}, not (M d, d^2) = ({M * d}, {d * d})"
        )
    try:
        w, V = np.linalg.eigh(projector.Q)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc

    count = d * d
    mats = []
    for k in range(count):
        vec = V[:, k]
        peak = int(np.argmax(np.abs(vec)))
        if vec[peak] < 0:
            vec = -vec
        mat = vec.reshape((M, d), order="F")
        mat.setflags(write=False)
        mats.append(mat)
    return CandidateSet(
        candidates=tuple(mats),
        eigenvalues=w[:count].copy(),
        channel_count=M,
        rank=d,
        null_count=int(np.count_nonzero(w < 1e-8)),
    )


def fitting_residual(A: np.ndarray, basis) -> float:
    """Distance of A from the signal subspace: ``min_C |A - R C|_F``.

    The minimizing coefficient is ``C* = R^T A``, so the residual equals
    ``|(I - R R^T) A|_F``; it is zero iff the columns of A lie in span(R).

    Parameters
    ----------
    A : (M, d) array
        Candidate matrix.
    basis : SubspaceDecomposition, MeasurementEnsemble, square statistic
        matrix, or an (M, d) orthonormal matrix R
        Where the signal subspace comes from. Ensembles use the raw
        (uncentered) correlation; square matrices are decomposed at
        rank ``A.shape[1]``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise DimensionError(f"A must be an M x d matrix, got shape {A.shape}")
    m, d = A.shape

    if isinstance(basis, SubspaceDecomposition):
        R = basis.R
    elif isinstance(basis, MeasurementEnsemble):
        R = truncated_svd(correlation(basis).matrix, d).R
    else:
        arr = np.asarray(basis, dtype=float)
        if arr.ndim == 2 and arr.shape == (m, d) and m != d:
            R = arr
            gram = R.T @ R
            if float(np.max(np.abs(gram - np.eye(d)))) > ORTHONORMALITY_TOL:
                raise DomainError("direct basis R must have orthonormal columns")
        else:
            R = truncated_svd(arr, d).R
    if R.shape[0] != m:
        raise DimensionError(f"basis has {R.shape[0]} rows, A has {m}")
    return float(np.linalg.norm(A - R @ (R.T @ A)))


def save_candidates(cset: CandidateSet, path, header_lines: tuple[str, ...] = ()) -> None:
    """Write a candidate set as blank-line separated CSV blocks, one M x d
    matrix per block, with a header carrying M, d and the eigenvalues."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for h in header_lines:
            fh.write(f"# {h}\n")
        fh.write(f"# M,{cset.channel_count}\n")
        fh.write(f"# d,{cset.rank}\n")
        fh.write("# eigenvalues," + ",".join(f"{v:.17g}" for v in cset.eigenvalues) + "\n")
        for idx, mat in enumerate(cset.candidates):
            if idx:
                fh.write("\n")
            for row in mat:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_candidates(path) -> CandidateSet:
    """Read a candidate-set file written by :func:`save_candidates`."""
    m = d = None
    eigenvalues: np.ndarray | None = None
    blocks: list[list[list[float]]] = [[]]
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if stripped.startswith("#"):
                body = stripped[1:].strip()
                if body.startswith("M,"):
                    m = int(body[2:])
                elif body.startswith("d,"):
                    d = int(body[2:])
                elif body.startswith("eigenvalues,"):
                    eigenvalues = np.array([float(v) for v in body.split(",")[1:]])
                continue
            if not stripped:
                if blocks[-1]:
                    blocks.append([])
                continue
            try:
                blocks[-1].append([float(v) for v in next(csv.reader([stripped]))])
            except ValueError as exc:
                raise FormatError(f"bad float: {exc}", line_no=line_no) from None
    if blocks and not blocks[-1]:
        blocks.pop()
    if m is None or d is None or eigenvalues is None:
        raise FormatError("candidate file is missing its M/d/eigenvalues header")
    if len(blocks) != d * d:
        raise FormatError(f"expected {d * d} candidate blocks, found {len(blocks)}")
    mats = []
    for block in blocks:
        arr = np.array(block)
        if arr.shape != (m, d):
            raise FormatError(f"candidate block has shape {arr.shape}, expected ({m}, {d})")
        arr.setflags(write=False)
        mats.append(arr)
    return CandidateSet(
        candidates=tuple(mats),
        eigenvalues=eigenvalues,
        channel_count=m,
        rank=d,
        null_count=int(np.count_nonzero(eigenvalues < 1e-8)),
    )
