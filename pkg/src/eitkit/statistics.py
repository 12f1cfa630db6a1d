"""Second-order correlation and third-order cumulant estimation.

Third-order cumulants are the noise-suppression workhorse: every third
cumulant of a Gaussian process (white or colored) is zero, so for
``y = signal + independent zero-mean Gaussian noise`` the estimated
cumulant matrices converge to those of the signal alone as the sample
count grows.

Both statistics use biased ``1/T`` normalization. Estimation over samples
is associative: :class:`MomentAccumulator` lets chunks be accumulated
independently (possibly concurrently) and merged, with the merged result
matching a single pass over the concatenated data.

Ensemble file format: CSV, one time sample per row, header ``y0..y{M-1}``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, FormatError, SampleSizeError


@dataclass(frozen=True, eq=False)
class MeasurementEnsemble:
    """T x M array of voltage samples: T time samples of an M-channel vector."""

    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 2:
            raise DimensionError(f"ensemble must be a T x M array, got shape {samples.shape}")
        if samples.shape[0] < 2:
            raise SampleSizeError(f"need at least 2 samples, got {samples.shape[0]}")
        if samples.shape[1] < 1:
            raise DimensionError("ensemble needs at least one channel")
        if not np.all(np.isfinite(samples)):
            raise DomainError("ensemble contains non-finite entries")
        samples = samples.copy()
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def sample_count(self) -> int:
        return self.samples.shape[0]

    @property
    def channel_count(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """M x M symmetric second-moment matrix (volts squared)."""

    matrix: np.ndarray
    centered: bool

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def channel_count(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class CumulantMatrixSet:
    """All M third-cumulant matrices as one symmetric M x M x M tensor.

    ``tensor[i, j, k] = cum(y_j, y_k, y_i)``; the tensor is symmetric in
    all three indices exactly, by construction, since the matrices are
    slices of one symmetric third-order tensor.
    """

    tensor: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.tensor, dtype=float)
        t.setflags(write=False)
        object.__setattr__(self, "tensor", t)

    @property
    def channel_count(self) -> int:
        return self.tensor.shape[0]

    def matrix(self, i: int) -> np.ndarray:
        """The i-th cumulant matrix ``C_i[j, k] = cum(y_j, y_k, y_i)``."""
        return self.tensor[i]

    def pooled(self, weights=None) -> np.ndarray:
        """Weighted sum ``sum_i w_i C_i`` of the cumulant matrices (unit
        weights by default); a symmetric aggregate usable wherever a single
        slice is. This is an extension beyond picking one index."""
        if weights is None:
            return self.tensor.sum(axis=0)
        w = np.asarray(weights, dtype=float)
        if w.shape != (self.channel_count,):
            raise DimensionError(
                f"need {self.channel_count} weights, got shape {w.shape}"
            )
        return np.tensordot(w, self.tensor, axes=(0, 0))


def _symmetric_second_moment(z: np.ndarray) -> np.ndarray:
    """(1/T) z^T z computed pairwise so the result is exactly symmetric."""
    t, m = z.shape
    out = np.empty((m, m))
    for i in range(m):
        for j in range(i, m):
            v = float(np.dot(z[:, i], z[:, j])) / t
            out[i, j] = v
            out[j, i] = v
    return out


def _symmetric_third_moment(z: np.ndarray) -> np.ndarray:
    """(1/T) sum_t z_i z_j z_k as an exactly symmetric (M, M, M) tensor."""
    t, m = z.shape
    out = np.empty((m, m, m))
    for i in range(m):
        for j in range(i, m):
            zij = z[:, i] * z[:, j]
            for k in range(j, m):
                v = float(np.dot(zij, z[:, k])) / t
                out[i, j, k] = out[i, k, j] = out[j, i, k] = v
                out[j, k, i] = out[k, i, j] = out[k, j, i] = v
    return out


def correlation(ensemble: MeasurementEnsemble, center: bool = False) -> CorrelationMatrix:
    """Sample correlation ``(1/T) sum_t y(t) y(t)^T``.

    With ``center`` set the sample mean is removed first (covariance).
    The default is the raw second moment, which is what deterministic
    noise-free ensembles feed into the subspace decomposition.
    """
    if ensemble.sample_count < 2:
        raise SampleSizeError("correlation needs at least 2 samples")
    z = ensemble.samples
    if center:
        z = z - z.mean(axis=0)
    return CorrelationMatrix(matrix=_symmetric_second_moment(z), centered=center)


def third_cumulants(ensemble: MeasurementEnsemble) -> CumulantMatrixSet:
    """Sample third-cumulant matrices ``C_i[j,k] = (1/T) sum_t ~y_j ~y_k ~y_i``.

    The sample mean is always removed first; for zero-mean data the third
    cumulant equals the third moment.
    """
    if ensemble.sample_count < 3:
        raise SampleSizeError("third cumulants need at least 3 samples")
    z = ensemble.samples - ensemble.samples.mean(axis=0)
    return CumulantMatrixSet(tensor=_symmetric_third_moment(z))


class MomentAccumulator:
    """Mergeable raw-moment sums for chunked/concurrent estimation.

    Accumulates ``n``, ``sum y``, ``sum y y^T`` and ``sum y x y x y`` so that
    ``merge`` over chunks followed by a finalizer equals the one-shot
    estimate on the concatenated data within 1e-12.
    """

    def __init__(self, channel_count: int):
        if channel_count < 1:
            raise DimensionError("need at least one channel")
        self.channel_count = channel_count
        self.n = 0
        self.s1 = np.zeros(channel_count)
        self.s2 = np.zeros((channel_count, channel_count))
        self.s3 = np.zeros((channel_count, channel_count, channel_count))

    def update(self, samples) -> "MomentAccumulator":
        z = np.asarray(samples, dtype=float)
        if z.ndim != 2 or z.shape[1] != self.channel_count:
            raise DimensionError(
                f"expected (T, {self.channel_count}) samples, got shape {z.shape}"
            )
        if not np.all(np.isfinite(z)):
            raise DomainError("samples contain non-finite entries")
        t = z.shape[0]
        self.n += t
        self.s1 += z.sum(axis=0)
        self.s2 += t * _symmetric_second_moment(z)
        self.s3 += t * _symmetric_third_moment(z)
        return self

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        """Combined accumulator; both inputs are left untouched."""
        if other.channel_count != self.channel_count:
            raise DimensionError("cannot merge accumulators with different channel counts")
        out = MomentAccumulator(self.channel_count)
        out.n = self.n + other.n
        out.s1 = self.s1 + other.s1
        out.s2 = self.s2 + other.s2
        out.s3 = self.s3 + other.s3
        return out

    def correlation(self, center: bool = False) -> CorrelationMatrix:
        if self.n < 2:
            raise SampleSizeError("correlation needs at least 2 samples")
        raw2 = self.s2 / self.n
        if center:
            m = self.s1 / self.n
            raw2 = raw2 - np.outer(m, m)
            raw2 = 0.5 * (raw2 + raw2.T)
        return CorrelationMatrix(matrix=raw2, centered=center)

    def third_cumulants(self) -> CumulantMatrixSet:
        if self.n < 3:
            raise SampleSizeError("third cumulants need at least 3 samples")
        m = self.s1 / self.n
        raw2 = self.s2 / self.n
        raw3 = self.s3 / self.n
        mc = self.channel_count
        out = np.empty((mc, mc, mc))
        # central third moment from raw moments, filled for i<=j<=k so the
        # tensor is exactly symmetric
        for i in range(mc):
            for j in range(i, mc):
                for k in range(j, mc):
                    v = (
                        raw3[i, j, k]
                        - m[i] * raw2[j, k]
                        - m[j] * raw2[i, k]
                        - m[k] * raw2[i, j]
                        + 2.0 * m[i] * m[j] * m[k]
                    )
                    out[i, j, k] = out[i, k, j] = out[j, i, k] = v
                    out[j, k, i] = out[k, i, j] = out[k, j, i] = v
        return CumulantMatrixSet(tensor=out)


def save_ensemble(ensemble: MeasurementEnsemble, path, header_lines: tuple[str, ...] = ()) -> None:
    """Write an ensemble as CSV with a ``y0..y{M-1}`` header row."""
    m = ensemble.channel_count
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for h in header_lines:
            fh.write(f"# {h}\n")
        writer = csv.writer(fh)
        writer.writerow([f"y{k}" for k in range(m)])
        for row in ensemble.samples:
            writer.writerow([f"{v:.17g}" for v in row])


def load_ensemble(path) -> MeasurementEnsemble:
    """Read an ensemble CSV written by :func:`save_ensemble`."""
    rows: list[list[float]] = []
    header: list[str] | None = None
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            fields = next(csv.reader([stripped]))
            if header is None:
                header = [f.strip() for f in fields]
                expected = [f"y{k}" for k in range(len(header))]
                if header != expected:
                    raise FormatError(
                        f"expected header {','.join(expected)}, got {stripped!r}", line_no=line_no
                    )
                continue
            if len(fields) != len(header):
                raise FormatError(
                    f"expected {len(header)} columns, got {len(fields)}", line_no=line_no
                )
            try:
                rows.append([float(f) for f in fields])
            except ValueError as exc:
                raise FormatError(f"bad float: {exc}", line_no=line_no) from None
    if header is None:
        raise FormatError("ensemble file has no header row")
    if len(rows) < 2:
        raise SampleSizeError(f"ensemble file holds {len(rows)} samples, need at least 2")
    return MeasurementEnsemble(np.array(rows))
