"""Multi-injection stacking and direct recovery of the stiffness matrix
and the per-element conductivity.

The route to a unique reconstruction: stack the nodal potentials and load
vectors of N injections into ``S [phi_1 .. phi_N] = [F_1 .. F_N]`` and,
when the potential stack has full row rank, solve for the symmetric S in
least squares and invert the (linear) assembly map for the conductivity.
A single injection can never make the stack full rank, which is exactly
the non-uniqueness failure the subspace route exhibits; diversity must
come from extra drive patterns and/or frequency-dependent tissue response.

Two practical points about rank:

* Injected currents always cancel, so the load columns span at most an
  (n-1)-dimensional space, and potentials solved against one fixed
  reference node all lie in one hyperplane. Full row rank therefore
  requires the reference node to vary across injections
  (``SweepConfig.ground = "rotate"``); the drive patterns address mesh
  nodes directly.
* The simulator evaluates the tissue dispersion law per frequency, so the
  reconstruction-side assumption of one frequency-independent matrix is
  deliberately violated in proportion to the dispersion strength. With
  strength zero the assumption holds exactly; with nonzero strength the
  recovered field is an effective compromise, and the per-element spread
  of sigma(omega) across the sweep quantifies how hard the assumption was
  broken.

Sweep config file format (``#`` starts a comment)::

    [frequencies]
    <hertz, one per line>
    [patterns]
    <id>: <amps>, <id>: <amps>, ...        electrode-addressed pattern
    node <id>: <amps>, node <id>: <amps>   node-addressed pattern
    [model]
    sigma0 = <S/m>         uniform dispersion parameters
    sigma_inf = <S/m>
    tau = <seconds>
    element <id>: <sigma0> <sigma_inf> <tau>   per-element override
    [sweep]
    pairing = cross | zip
    ground = rotate | <node id>
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    CompatibilityError,
    DimensionError,
    DomainError,
    FormatError,
    IdentifiabilityError,
    RankDeficiencyError,
)
from .forward import (
    ZERO_SUM_TOL,
    CurrentPattern,
    ForwardFactorization,
    StiffnessSystem,
    _nodal_load,
    assemble,
    element_stiffness,
    ground_system,
)
from .mesh import Mesh

RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class TissueModel:
    """Per-element single-dispersion conductivity magnitude response:

        sigma_e(f) = sigma_inf_e + (sigma0_e - sigma_inf_e) / (1 + (2 pi f tau_e)^2)

    ``sigma0`` is the low-frequency limit, ``sigma_inf`` the high-frequency
    limit, ``tau`` the relaxation time. Setting ``sigma0 == sigma_inf``
    gives a frequency-independent medium exactly.
    """

    sigma0: np.ndarray
    sigma_inf: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        s0 = np.asarray(self.sigma0, dtype=float)
        si = np.asarray(self.sigma_inf, dtype=float)
        tau = np.asarray(self.tau, dtype=float)
        if not (s0.shape == si.shape == tau.shape) or s0.ndim != 1:
            raise DimensionError("sigma0, sigma_inf and tau must be equal-length 1-d arrays")
        for name, arr in (("sigma0", s0), ("sigma_inf", si)):
            if not np.all(np.isfinite(arr)) or not np.all(arr > 0):
                raise DomainError(f"{name} must be positive and finite everywhere")
        if not np.all(np.isfinite(tau)) or not np.all(tau >= 0):
            raise DomainError("tau must be non-negative and finite everywhere")
        for name, arr in (("sigma0", s0), ("sigma_inf", si), ("tau", tau)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_elements(self) -> int:
        return self.sigma0.size

    @property
    def dispersion_strength(self) -> float:
        return float(np.max(np.abs(self.sigma0 - self.sigma_inf)))

    def sigma_at(self, frequency: float) -> np.ndarray:
        omega_tau = 2.0 * np.pi * frequency * self.tau
        return self.sigma_inf + (self.sigma0 - self.sigma_inf) / (1.0 + omega_tau**2)

    def spread(self, frequencies) -> np.ndarray:
        """Per-element relative spread of sigma(f) across the given
        frequencies: (max - min) / mean. Zero iff the constant-matrix
        assumption holds exactly over the sweep."""
        table = np.stack([self.sigma_at(f) for f in frequencies])
        return (table.max(axis=0) - table.min(axis=0)) / table.mean(axis=0)

    @classmethod
    def uniform(cls, n_elements: int, sigma0: float, sigma_inf: float, tau: float) -> "TissueModel":
        return cls(
            np.full(n_elements, float(sigma0)),
            np.full(n_elements, float(sigma_inf)),
            np.full(n_elements, float(tau)),
        )

    @classmethod
    def dispersionless(cls, sigma) -> "TissueModel":
        """Frequency-independent medium with the given per-element field."""
        sigma = np.asarray(sigma, dtype=float)
        return cls(sigma.copy(), sigma.copy(), np.zeros_like(sigma))


@dataclass(frozen=True)
class SweepConfig:
    """Injection plan: which frequencies, which drive patterns, how they
    pair up, and which node is the per-injection potential reference.

    patterns
        Each entry is a :class:`~eitkit.forward.CurrentPattern`
        (electrode-addressed) or a length-n nodal current vector summing to
        zero. Nodal patterns exist because electrode-addressed injections
        alone can never span enough directions for a full-rank stack.
    pairing
        ``cross`` runs every frequency against every pattern (frequency
        major); ``zip`` pairs them one-to-one and requires equal lengths.
    ground
        ``rotate`` uses node ``k mod n`` for injection k; an integer pins
        one reference node for every injection.
    """

    frequencies: tuple[float, ...]
    patterns: tuple
    pairing: str = "cross"
    ground: int | str = 0

    def __post_init__(self):
        freqs = tuple(float(f) for f in self.frequencies)
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "patterns", tuple(self.patterns))
        if not freqs:
            raise DomainError("sweep needs at least one frequency")
        if not self.patterns:
            raise DomainError("sweep needs at least one drive pattern")
        if not all(np.isfinite(f) and f > 0 for f in freqs):
            raise DomainError("frequencies must be positive and finite")
        if len(set(freqs)) != len(freqs):
            raise DomainError("frequencies must be distinct")
        if self.pairing not in ("cross", "zip"):
            raise DomainError(f"pairing must be 'cross' or 'zip', got {self.pairing!r}")
        if self.pairing == "zip" and len(freqs) != len(self.patterns):
            raise DomainError(
                f"zip pairing needs equal counts, got {len(freqs)} frequencies "
                f"and {len(self.patterns)} patterns"
            )
        if not (self.ground == "rotate" or isinstance(self.ground, int)):
            raise DomainError(f"ground must be 'rotate' or a node id, got {self.ground!r}")

    def injections(self):
        """(frequency, pattern_index) pairs in fixed stacking order."""
        if self.pairing == "zip":
            return [(f, k) for k, f in enumerate(self.frequencies)]
        return [(f, k) for f in self.frequencies for k in range(len(self.patterns))]


@dataclass(frozen=True, eq=False)
class StackedSystem:
    """Stacked nodal potentials and pre-gauge load vectors.

    ``Phi`` and ``F`` are n x N; each load column sums to zero. ``labels``
    records (frequency, pattern index, ground node) per column in stacking
    order. ``sigma_spread`` is the worst per-element relative spread of the
    simulated conductivity across the sweep frequencies (0 when the
    constant-matrix assumption held exactly).
    """

    Phi: np.ndarray
    F: np.ndarray
    labels: tuple[tuple[float, int, int], ...]
    sigma_spread: float = 0.0

    def __post_init__(self):
        if self.Phi.shape != self.F.shape:
            raise DimensionError(
                f"Phi {self.Phi.shape} and F {self.F.shape} must have equal shapes"
            )
        colsums = np.abs(self.F.sum(axis=0))
        if colsums.size and float(colsums.max()) > ZERO_SUM_TOL:
            raise CompatibilityError(
                f"a load column sums to {float(colsums.max()):g}; columns must cancel"
            )

    @property
    def n(self) -> int:
        return self.Phi.shape[0]

    @property
    def n_injections(self) -> int:
        return self.Phi.shape[1]


@dataclass(frozen=True, eq=False)
class StackSolveResult:
    """Symmetric least-squares estimate of the stiffness matrix."""

    S_hat: np.ndarray
    residual: float
    phi_singular_values: np.ndarray


@dataclass(frozen=True, eq=False)
class RecoveredField:
    """Per-element conductivity estimate with per-stage diagnostics.

    Negative estimates are flagged in ``negative_elements``, never clipped.
    ``sensitivity`` bounds the propagation of matrix error into the field:
    ``|delta sigma|_2 <= sensitivity * |delta S|_F``.
    """

    sigma: np.ndarray
    negative_elements: tuple[int, ...]
    fit_residual: float
    sensitivity: float
    operator_condition: float
    solve_residual: float | None = None


def _resolve_nodal_pattern(mesh: Mesh, pattern) -> np.ndarray:
    if isinstance(pattern, CurrentPattern):
        return _nodal_load(mesh, pattern)
    f = np.asarray(pattern, dtype=float)
    if f.shape != (mesh.n_nodes,):
        raise DimensionError(
            f"nodal pattern must have length {mesh.n_nodes}, got shape {f.shape}"
        )
    if not np.all(np.isfinite(f)):
        raise DomainError("nodal pattern contains non-finite entries")
    if np.count_nonzero(f) < 2:
        raise DomainError("a drive pattern needs at least two nonzero currents")
    total = float(f.sum())
    if abs(total) > ZERO_SUM_TOL:
        raise CompatibilityError(
            f"injected currents must sum to zero within {ZERO_SUM_TOL:g}; got {total:g}"
        )
    return f.copy()


def simulate_sweep(mesh: Mesh, tissue: TissueModel, config: SweepConfig) -> StackedSystem:
    """Run every injection of the sweep and stack potentials and loads.

    For each (frequency, pattern) the tissue law gives the per-element
    conductivity, the system is assembled, gauged at the injection's
    reference node and solved; the grounded potential and the pre-gauge
    load are stacked in config order. Forward errors are re-raised with
    the (frequency, pattern) index prepended. Per-injection solves are
    independent; factorizations are cached per (frequency, ground).
    """
    if tissue.n_elements != mesh.n_elements:
        raise DimensionError(
            f"tissue model covers {tissue.n_elements} elements, mesh has {mesh.n_elements}"
        )
    n = mesh.n_nodes
    if isinstance(config.ground, int) and config.ground not in mesh.node_index:
        raise DomainError(f"ground node {config.ground} is not a mesh node")

    injections = config.injections()
    Phi = np.zeros((n, len(injections)))
    F = np.zeros((n, len(injections)))
    labels = []
    factor_cache: dict[tuple[float, int], ForwardFactorization] = {}
    system_cache: dict[float, StiffnessSystem] = {}

    for col, (freq, p_idx) in enumerate(injections):
        ground_pos = (col % n) if config.ground == "rotate" else mesh.node_index[config.ground]
        ground_id = mesh.nodes[ground_pos].id
        try:
            load = _resolve_nodal_pattern(mesh, config.patterns[p_idx])
            if freq not in system_cache:
                system_cache[freq] = assemble(mesh, tissue.sigma_at(freq))
            key = (freq, ground_pos)
            if key not in factor_cache:
                Sg, _ = ground_system(system_cache[freq].S, np.zeros(n), ground_pos)
                factor_cache[key] = ForwardFactorization(
                    StiffnessSystem(S=Sg, F=np.zeros(n), ground_node=ground_id)
                )
            _, load_g = ground_system(system_cache[freq].S, load, ground_pos)
            solution = factor_cache[key].solve(load_g)
        except Exception as exc:
            exc.args = (
                f"injection {col} (frequency {freq:g} Hz, pattern {p_idx}): {exc}",
            ) + exc.args[1:]
            raise
        Phi[:, col] = solution.phi
        F[:, col] = load
        labels.append((freq, p_idx, ground_id))

    spread = tissue.spread(config.frequencies)
    return StackedSystem(
        Phi=Phi,
        F=F,
        labels=tuple(labels),
        sigma_spread=float(spread.max()) if spread.size else 0.0,
    )


def stack_condition(stacked: StackedSystem) -> float:
    """Smallest-singular-value-based condition estimate of the stack:
    ``1 / sigma_min(Phi)`` over the n row directions.

    Returns ``inf`` whenever the stack falls below the rank tolerance that
    :func:`stack_solve` enforces (the computed sigma_min is pure noise
    there). Appending an injection never increases the estimate; it is the
    guidance metric for choosing frequencies and patterns.
    """
    n = stacked.n
    s = np.linalg.svd(stacked.Phi, compute_uv=False)
    if s.size < n or s[0] == 0.0 or s[n - 1] < RANK_TOL * s[0]:
        return float("inf")
    return float(1.0 / s[n - 1])


def stack_solve(stacked: StackedSystem, observed_nodes=None) -> StackSolveResult:
    """Least-squares stiffness estimate ``argmin_S |S Phi - F|_F`` over
    symmetric matrices.

    Symmetry is built into the parameterization (upper-triangle unknowns),
    not imposed afterwards. Requires the potential stack to have full row
    rank: if the smallest of the n singular values of Phi falls below
    ``1e-10`` times the largest, :class:`RankDeficiencyError` reports the
    numerical rank -- the signature failure of a single-injection stack.

    ``observed_nodes`` selects boundary-only observation: when the listed
    node positions do not cover every node, the equation rows at
    unobserved nodes are unknown and the symmetric block coupling the
    unobserved nodes is structurally undetermined. That mode reports the
    identifiability gap immediately instead of attempting a regularized
    completion.
    """
    Phi, F = stacked.Phi, stacked.F
    n, N = Phi.shape
    if observed_nodes is not None:
        observed = np.unique(np.asarray(observed_nodes, dtype=int))
        if observed.size and (observed.min() < 0 or observed.max() >= n):
            raise DimensionError(f"observed node positions must lie in 0..{n - 1}")
        hidden = n - observed.size
        if hidden > 0:
            raise IdentifiabilityError(
                f"partial observation of {observed.size}/{n} nodes leaves the "
                f"{hidden}x{hidden} symmetric block over unobserved nodes undetermined",
                rank_gap=hidden * (hidden + 1) // 2,
            )
    s = np.linalg.svd(Phi, compute_uv=False)
    smax = float(s[0]) if s.size else 0.0
    rank = int(np.count_nonzero(s >= RANK_TOL * smax)) if smax > 0 else 0
    if rank < n:
        raise RankDeficiencyError(
            "potential stack does not have full row rank; add independent injections",
            numerical_rank=rank,
            required_rank=n,
        )

    pairs = [(a, b) for a in range(n) for b in range(a, n)]
    design = np.zeros((n * N, len(pairs)))
    for p, (a, b) in enumerate(pairs):
        design[a * N : (a + 1) * N, p] += Phi[b, :]
        if a != b:
            design[b * N : (b + 1) * N, p] += Phi[a, :]
    coeffs, *_ = np.linalg.lstsq(design, F.ravel(), rcond=None)

    S_hat = np.zeros((n, n))
    for p, (a, b) in enumerate(pairs):
        S_hat[a, b] = S_hat[b, a] = coeffs[p]
    residual = float(np.linalg.norm(S_hat @ Phi - F))
    return StackSolveResult(S_hat=S_hat, residual=residual, phi_singular_values=s)


def _assembly_operator(mesh: Mesh) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray], np.ndarray]:
    """Linear map from per-element conductivity to the weighted upper
    triangle of the stiffness matrix (off-diagonal weight sqrt(2), so the
    2-norm of the image equals the Frobenius norm of the matrix)."""
    n = mesh.n_nodes
    iu = np.triu_indices(n)
    weights = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
    scale = mesh.bounding_box_diagonal
    design = np.zeros((iu[0].size, mesh.n_elements))
    for e in range(mesh.n_elements):
        idx = mesh.triangles[e]
        Ke = element_stiffness(mesh.coords[idx], 1.0, scale=scale)
        Se = np.zeros((n, n))
        Se[np.ix_(idx, idx)] = Ke
        design[:, e] = weights * Se[iu]
    return design, iu, weights


def recover_conductivity(S_hat: np.ndarray, mesh: Mesh, solve_residual: float | None = None) -> RecoveredField:
    """Invert the assembly map: ``argmin_sigma |assemble(mesh, sigma) - S_hat|_F``.

    The assembly map is linear in the per-element conductivity, so this is
    plain linear least squares over the symmetric entries. The element
    count must not exceed the number of independent matrix entries, and
    the assembly operator must have full column rank; otherwise the field
    is not identifiable and the rank gap is reported.
    """
    S_hat = np.asarray(S_hat, dtype=float)
    n = mesh.n_nodes
    if S_hat.shape != (n, n):
        raise DimensionError(f"S_hat has shape {S_hat.shape}, mesh implies ({n}, {n})")
    scale = float(np.linalg.norm(S_hat)) or 1.0
    if float(np.linalg.norm(S_hat - S_hat.T)) > 1e-6 * scale:
        raise DomainError("S_hat must be symmetric within 1e-6 relative")

    independent_entries = n * (n + 1) // 2
    if mesh.n_elements > independent_entries:
        raise IdentifiabilityError(
            f"{mesh.n_elements} elements exceed the {independent_entries} independent matrix entries",
            rank_gap=mesh.n_elements - independent_entries,
        )

    design, iu, weights = _assembly_operator(mesh)
    sv = np.linalg.svd(design, compute_uv=False)
    rank = int(np.count_nonzero(sv >= RANK_TOL * sv[0])) if sv.size else 0
    if rank < mesh.n_elements:
        raise IdentifiabilityError(
            "assembly operator is rank deficient; conductivity is not identifiable",
            rank_gap=mesh.n_elements - rank,
        )

    target = weights * (0.5 * (S_hat + S_hat.T))[iu]
    sigma, *_ = np.linalg.lstsq(design, target, rcond=None)

    # design rows cover the full weighted upper triangle, so this 2-norm is
    # the Frobenius distance between assemble(mesh, sigma) and sym(S_hat)
    fit_residual = float(np.linalg.norm(design @ sigma - target))
    negative = tuple(int(e) for e in np.flatnonzero(~(sigma > 0.0)))
    return RecoveredField(
        sigma=sigma,
        negative_elements=negative,
        fit_residual=fit_residual,
        sensitivity=float(1.0 / sv[rank - 1]),
        operator_condition=float(sv[0] / sv[rank - 1]),
        solve_residual=solve_residual,
    )


def save_stacked_system(stacked: StackedSystem, phi_path, f_path) -> None:
    """Serialize the stack as a pair of CSV matrices (potentials, loads),
    one node per row, one injection per column. Injection labels and the
    dispersion spread ride along as comment lines on the potentials file."""
    def write_matrix(path, matrix, comments=()):
        with open(path, "w", encoding="utf-8") as fh:
            for line in comments:
                fh.write(f"# {line}\n")
            for row in matrix:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    comments = [f"sigma_spread,{stacked.sigma_spread:.17g}"]
    comments += [
        f"label,{freq:.17g},{p_idx},{ground}" for freq, p_idx, ground in stacked.labels
    ]
    write_matrix(phi_path, stacked.Phi, comments)
    write_matrix(f_path, stacked.F)


def load_stacked_system(phi_path, f_path) -> StackedSystem:
    """Read a stack written by :func:`save_stacked_system`."""
    def read_matrix(path):
        rows = []
        comments = []
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                stripped = line.strip()
                if not stripped:
                    continue
                if stripped.startswith("#"):
                    comments.append(stripped[1:].strip())
                    continue
                try:
                    rows.append([float(v) for v in stripped.split(",")])
                except ValueError as exc:
                    raise FormatError(f"bad float: {exc}", line_no=line_no) from None
        if not rows:
            raise FormatError(f"{path} holds no matrix rows")
        widths = {len(r) for r in rows}
        if len(widths) != 1:
            raise FormatError(f"{path} has ragged rows (widths {sorted(widths)})")
        return np.array(rows), comments

    Phi, comments = read_matrix(phi_path)
    F, _ = read_matrix(f_path)
    if Phi.shape != F.shape:
        raise FormatError(f"potential {Phi.shape} and load {F.shape} matrices disagree")
    sigma_spread = 0.0
    labels = []
    for comment in comments:
        if comment.startswith("sigma_spread,"):
            sigma_spread = float(comment.split(",")[1])
        elif comment.startswith("label,"):
            _, freq, p_idx, ground = comment.split(",")
            labels.append((float(freq), int(p_idx), int(ground)))
    if labels and len(labels) != Phi.shape[1]:
        raise FormatError(f"{len(labels)} labels for {Phi.shape[1]} injections")
    return StackedSystem(Phi=Phi, F=F, labels=tuple(labels), sigma_spread=sigma_spread)


def save_sweep_config(config: SweepConfig, tissue: TissueModel, path, header_lines: tuple[str, ...] = ()) -> None:
    """Write a sweep config file (see module docstring for the format)."""
    lines: list[str] = [f"# {h}" for h in header_lines]
    lines.append("[frequencies]")
    lines += [f"{f:.17g}" for f in config.frequencies]
    lines.append("[patterns]")
    for pattern in config.patterns:
        if isinstance(pattern, CurrentPattern):
            lines.append(
                ", ".join(f"{eid}: {amp:.17g}" for eid, amp in sorted(pattern.currents.items()))
            )
        else:
            entries = [(int(k), float(v)) for k, v in enumerate(np.asarray(pattern)) if v != 0.0]
            lines.append(", ".join(f"node {k}: {v:.17g}" for k, v in entries))
    lines.append("[model]")
    if (
        np.all(tissue.sigma0 == tissue.sigma0[0])
        and np.all(tissue.sigma_inf == tissue.sigma_inf[0])
        and np.all(tissue.tau == tissue.tau[0])
    ):
        lines.append(f"sigma0 = {tissue.sigma0[0]:.17g}")
        lines.append(f"sigma_inf = {tissue.sigma_inf[0]:.17g}")
        lines.append(f"tau = {tissue.tau[0]:.17g}")
    else:
        lines.append(f"sigma0 = {float(np.median(tissue.sigma0)):.17g}")
        lines.append(f"sigma_inf = {float(np.median(tissue.sigma_inf)):.17g}")
        lines.append(f"tau = {float(np.median(tissue.tau)):.17g}")
        for e in range(tissue.n_elements):
            lines.append(
                f"element {e}: {tissue.sigma0[e]:.17g} {tissue.sigma_inf[e]:.17g} {tissue.tau[e]:.17g}"
            )
    lines.append("[sweep]")
    lines.append(f"pairing = {config.pairing}")
    lines.append(f"ground = {config.ground}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_sweep_config(path, mesh: Mesh) -> tuple[SweepConfig, TissueModel]:
    """Parse a sweep config file against a mesh (the mesh fixes the element
    count for the model and the node count for nodal patterns)."""
    frequencies: list[float] = []
    patterns: list = []
    model_uniform: dict[str, float] = {}
    model_overrides: dict[int, tuple[float, float, float]] = {}
    sweep_opts: dict[str, str] = {}
    section = None

    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("["):
                section = line.lower()
                if section not in ("[frequencies]", "[patterns]", "[model]", "[sweep]"):
                    raise FormatError(f"unknown section {line!r}", line_no=line_no)
                continue
            if section == "[frequencies]":
                try:
                    frequencies.append(float(line))
                except ValueError:
                    raise FormatError(f"bad frequency {line!r}", line_no=line_no) from None
            elif section == "[patterns]":
                patterns.append(_parse_pattern_line(line, mesh, line_no))
            elif section == "[model]":
                if line.lower().startswith("element"):
                    body = line[len("element"):].strip()
                    eid_str, _, triple = body.partition(":")
                    try:
                        eid = int(eid_str)
                        s0, si, tau = (float(v) for v in triple.split())
                    except ValueError:
                        raise FormatError(f"bad element override {line!r}", line_no=line_no) from None
                    model_overrides[eid] = (s0, si, tau)
                else:
                    key, _, value = line.partition("=")
                    key = key.strip()
                    if key not in ("sigma0", "sigma_inf", "tau"):
                        raise FormatError(f"unknown model key {key!r}", line_no=line_no)
                    try:
                        model_uniform[key] = float(value.strip())
                    except ValueError:
                        raise FormatError(f"bad value for {key}", line_no=line_no) from None
            elif section == "[sweep]":
                key, _, value = line.partition("=")
                sweep_opts[key.strip()] = value.strip()
            else:
                raise FormatError("data before any section header", line_no=line_no)

    for key in ("sigma0", "sigma_inf", "tau"):
        if key not in model_uniform:
            raise FormatError(f"[model] section is missing {key!r}")
    n_e = mesh.n_elements
    sigma0 = np.full(n_e, model_uniform["sigma0"])
    sigma_inf = np.full(n_e, model_uniform["sigma_inf"])
    tau = np.full(n_e, model_uniform["tau"])
    for eid, (s0, si, t) in model_overrides.items():
        if not 0 <= eid < n_e:
            raise FormatError(f"element override {eid} outside 0..{n_e - 1}")
        sigma0[eid], sigma_inf[eid], tau[eid] = s0, si, t
    tissue = TissueModel(sigma0, sigma_inf, tau)

    ground: int | str = sweep_opts.get("ground", "0")
    if ground != "rotate":
        try:
            ground = int(ground)
        except ValueError:
            raise FormatError(f"ground must be 'rotate' or a node id, got {ground!r}") from None
    config = SweepConfig(
        frequencies=tuple(frequencies),
        patterns=tuple(patterns),
        pairing=sweep_opts.get("pairing", "cross"),
        ground=ground,
    )
    return config, tissue


def _parse_pattern_line(line: str, mesh: Mesh, line_no: int):
    """One pattern per line: comma-separated ``id: amps`` entries.

    Bare ids address electrodes; a ``node`` prefix addresses mesh nodes
    directly. A line mixing the two resolves everything to nodes.
    """
    electrode_entries: dict[int, float] = {}
    nodal = np.zeros(mesh.n_nodes)
    has_nodal = False
    for chunk in line.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        target, _, amp_str = chunk.partition(":")
        target = target.strip()
        try:
            amp = float(amp_str.strip())
        except ValueError:
            raise FormatError(f"bad current in {chunk!r}", line_no=line_no) from None
        if target.lower().startswith("node"):
            has_nodal = True
            try:
                node_id = int(target[4:].strip())
            except ValueError:
                raise FormatError(f"bad node id in {chunk!r}", line_no=line_no) from None
            if node_id not in mesh.node_index:
                raise FormatError(f"unknown node {node_id}", line_no=line_no)
            nodal[mesh.node_index[node_id]] += amp
        else:
            try:
                eid = int(target)
            except ValueError:
                raise FormatError(f"bad electrode id in {chunk!r}", line_no=line_no) from None
            electrode_entries[eid] = electrode_entries.get(eid, 0.0) + amp
    if has_nodal:
        for eid, amp in electrode_entries.items():
            if eid not in mesh.electrode_map:
                raise FormatError(f"unknown electrode {eid}", line_no=line_no)
            nodal[mesh.node_index[mesh.electrode_map[eid]]] += amp
        return nodal
    if not electrode_entries:
        raise FormatError("empty pattern line", line_no=line_no)
    return CurrentPattern(electrode_entries)
