"""FEM forward problem: assemble the conductivity stiffness system and solve
for nodal potentials under injected boundary currents.

The discretization is the classical linear triangle: each element
contributes ``sigma_e * area * B^T B`` with ``B`` the constant gradient
matrix of the three barycentric shape functions. The assembled matrix is
symmetric, has zero row sums, and is positive semidefinite with a
one-dimensional null space (the constant potential) on a connected mesh;
fixing one reference node to zero potential makes it positive definite.

``assemble`` and ``solve_forward`` are pure functions; independent drive
patterns on the same (mesh, field) may be solved concurrently. Use
:class:`ForwardFactorization` to factor once and solve many loads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from .errors import (
    CompatibilityError,
    DimensionError,
    DomainError,
    GeometryError,
    MeshValidationError,
    NumericalError,
    UnknownElectrodeError,
)
from .mesh import Mesh, validate

ZERO_SUM_TOL = 1e-12
DEGENERACY_FACTOR = 1e-14
RESIDUAL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ConductivityField:
    """Per-element conductivity in S/m; every value finite and > 0."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise DimensionError(f"conductivity field must be 1-d, got shape {values.shape}")
        if values.size == 0:
            raise DimensionError("conductivity field is empty")
        if not np.all(np.isfinite(values)):
            raise DomainError("conductivity values must be finite")
        if not np.all(values > 0.0):
            bad = int(np.argmin(values))
            raise DomainError(f"conductivity must be positive everywhere (element {bad}: {values[bad]})")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


def uniform_field(mesh: Mesh, value: float) -> ConductivityField:
    return ConductivityField(np.full(mesh.n_elements, float(value)))


@dataclass(frozen=True)
class CurrentPattern:
    """Signed injected currents keyed by electrode id, in amperes.

    Entries must sum to zero within ``1e-12`` (discrete solvability of the
    current-flux boundary condition) and at least two must be nonzero.
    """

    currents: dict[int, float]

    def __post_init__(self):
        fixed = {int(k): float(v) for k, v in self.currents.items()}
        object.__setattr__(self, "currents", fixed)
        vals = np.array(list(fixed.values()), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise DomainError("pattern currents must be finite")
        if np.count_nonzero(vals) < 2:
            raise DomainError("a drive pattern needs at least two nonzero currents")
        total = float(vals.sum())
        if abs(total) > ZERO_SUM_TOL:
            raise CompatibilityError(
                f"injected currents must sum to zero within {ZERO_SUM_TOL:g}; got {total:g}"
            )


@dataclass(eq=False)
class StiffnessSystem:
    """System matrix ``S`` and load ``F``; ``ground_node`` is None before
    the gauge is fixed."""

    S: np.ndarray
    F: np.ndarray
    ground_node: int | None = None

    @property
    def grounded(self) -> bool:
        return self.ground_node is not None

    @property
    def n(self) -> int:
        return self.S.shape[0]


@dataclass(frozen=True, eq=False)
class VoltageSolution:
    """Nodal potentials in volts; the ground node is pinned to zero and
    the recorded residual satisfies ``|S phi - F|_inf <= 1e-9 (1 + |F|_inf)``."""

    phi: np.ndarray
    ground_node: int
    residual_inf: float


def element_stiffness(vertex_coords, sigma_e: float, scale: float | None = None) -> np.ndarray:
    """Local 3x3 stiffness of a linear triangle with conductivity ``sigma_e``.

    Parameters
    ----------
    vertex_coords : array-like, shape (3, 2)
        Triangle vertices in meters; orientation does not matter.
    sigma_e : float
        Element conductivity, > 0.
    scale : float, optional
        Length used for the degeneracy test ``area > 1e-14 * scale**2``;
        defaults to the triangle's own bounding-box diagonal. Assembly
        passes the mesh bounding-box diagonal for scale-invariant detection.

    Returns
    -------
    ndarray, shape (3, 3)
        Symmetric positive-semidefinite matrix with zero row sums.
    """
    pts = np.asarray(vertex_coords, dtype=float)
    if pts.shape != (3, 2):
        raise DimensionError(f"expected three 2-d vertices, got shape {pts.shape}")
    if not (np.isfinite(sigma_e) and sigma_e > 0.0):
        raise DomainError(f"sigma_e must be positive and finite, got {sigma_e!r}")

    (x1, y1), (x2, y2), (x3, y3) = pts
    area2 = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)
    area = 0.5 * abs(area2)
    if scale is None:
        span = pts.max(axis=0) - pts.min(axis=0)
        scale = math.hypot(span[0], span[1])
    if not area > DEGENERACY_FACTOR * scale * scale:
        raise GeometryError(
            f"degenerate triangle (area {area:g}, threshold {DEGENERACY_FACTOR * scale * scale:g})",
            vertices=[(x1, y1), (x2, y2), (x3, y3)],
        )

    b = np.array([y2 - y3, y3 - y1, y1 - y2])
    c = np.array([x3 - x2, x1 - x3, x2 - x1])
    return (sigma_e / (4.0 * area)) * (np.outer(b, b) + np.outer(c, c))


def assemble(mesh: Mesh, conductivity) -> StiffnessSystem:
    """Assemble the global stiffness matrix for a conductivity field.

    The result is pre-gauge: row sums are zero within 1e-12 and the load
    vector is initialized to zero. The matrix is linear in the field, so
    scaling the field by ``c`` scales the matrix by exactly ``c``.
    """
    sigma = conductivity.values if isinstance(conductivity, ConductivityField) else None
    if sigma is None:
        sigma = ConductivityField(np.asarray(conductivity, dtype=float)).values
    if sigma.size != mesh.n_elements:
        raise DimensionError(
            f"field length {sigma.size} does not match element count {mesh.n_elements}"
        )
    report = validate(mesh)
    if not report.ok:
        raise MeshValidationError(report)

    n = mesh.n_nodes
    scale = mesh.bounding_box_diagonal
    S = np.zeros((n, n))
    tri = mesh.triangles
    coords = mesh.coords
    for e in range(mesh.n_elements):
        idx = tri[e]
        Ke = element_stiffness(coords[idx], sigma[e], scale=scale)
        S[np.ix_(idx, idx)] += Ke
    return StiffnessSystem(S=S, F=np.zeros(n), ground_node=None)


def _nodal_load(mesh: Mesh, pattern: CurrentPattern) -> np.ndarray:
    F = np.zeros(mesh.n_nodes)
    emap = mesh.electrode_map
    for eid, current in pattern.currents.items():
        if eid not in emap:
            raise UnknownElectrodeError(f"electrode {eid} is not on the mesh")
        F[mesh.node_index[emap[eid]]] += current
    return F


def ground_system(S: np.ndarray, F: np.ndarray, ground_pos: int) -> tuple[np.ndarray, np.ndarray]:
    """Pin one node to zero potential by symmetric row/column elimination.

    Keeps the matrix symmetric and, on a connected mesh, positive definite.
    """
    Sg = S.copy()
    Fg = F.copy()
    Sg[ground_pos, :] = 0.0
    Sg[:, ground_pos] = 0.0
    Sg[ground_pos, ground_pos] = 1.0
    Fg[ground_pos] = 0.0
    return Sg, Fg


def apply_pattern(system: StiffnessSystem, mesh: Mesh, pattern, ground_node: int) -> StiffnessSystem:
    """Enter a drive pattern into the load vector and fix the gauge.

    ``pattern`` may be a :class:`CurrentPattern` or a plain electrode->current
    mapping; raw mappings are validated here, so a pattern whose currents do
    not cancel raises :class:`CompatibilityError` (the discrete solvability
    condition) before any algebra happens.
    """
    if not isinstance(pattern, CurrentPattern):
        pattern = CurrentPattern(dict(pattern))
    if ground_node not in mesh.node_index:
        raise DomainError(f"ground node {ground_node} is not a mesh node")
    if system.S.shape != (mesh.n_nodes, mesh.n_nodes):
        raise DimensionError(
            f"system size {system.S.shape} does not match mesh node count {mesh.n_nodes}"
        )

    F = _nodal_load(mesh, pattern)
    Sg, Fg = ground_system(system.S, F, mesh.node_index[ground_node])
    return StiffnessSystem(S=Sg, F=Fg, ground_node=ground_node)


class ForwardFactorization:
    """Cholesky factorization of a grounded system, reusable across loads.

    The factor is computed once and never mutated, so it is safe to share
    across concurrent solves.
    """

    def __init__(self, system: StiffnessSystem):
        if not system.grounded:
            raise DomainError("system must be grounded (positive definite) before factorization")
        self.ground_node = system.ground_node
        self._S = system.S.copy()  # residual checks must not see later mutation
        factor, info = lapack.dpotrf(system.S, lower=1)
        if info != 0:
            raise NumericalError(
                "Cholesky factorization failed: matrix is not positive definite",
                pivot_index=int(info),
            )
        self._factor = factor

    def solve(self, F: np.ndarray) -> VoltageSolution:
        F = np.asarray(F, dtype=float)
        phi, info = lapack.dpotrs(self._factor, F, lower=1)
        if info != 0:
            raise NumericalError("triangular solve failed", pivot_index=int(info))
        residual = float(np.max(np.abs(self._S @ phi - F)))
        bound = RESIDUAL_TOL * (1.0 + float(np.max(np.abs(F))))
        if residual > bound:
            raise NumericalError(
                f"solve residual {residual:g} exceeds bound {bound:g}"
            )
        return VoltageSolution(phi=phi, ground_node=self.ground_node, residual_inf=residual)


def solve_forward(system: StiffnessSystem) -> VoltageSolution:
    """Solve the grounded system by direct symmetric (Cholesky) factorization."""
    return ForwardFactorization(system).solve(system.F)


def measure(solution: VoltageSolution, mesh: Mesh, reference_electrode: int) -> np.ndarray:
    """Differential electrode voltages against one reference electrode.

    Returns the potential at each non-reference electrode minus the
    potential at the reference, ordered by electrode id. Adding a constant
    to all potentials leaves the measurement unchanged.
    """
    emap = mesh.electrode_map
    if reference_electrode not in emap:
        raise UnknownElectrodeError(f"reference electrode {reference_electrode} is not on the mesh")
    ref_phi = solution.phi[mesh.node_index[emap[reference_electrode]]]
    out = [
        solution.phi[mesh.node_index[emap[eid]]] - ref_phi
        for eid in sorted(emap)
        if eid != reference_electrode
    ]
    return np.array(out)
