"""Grids and sparse Hermitian operators for the confined particle.

Two kinds of grids are used.  Full-space grids cover a box in the plane with
axes named ``x1``/``x2`` and Dirichlet walls.  Normal-bundle grids use the
arclength ``s`` (periodic) and the scaled normal coordinate ``y = lambda*n``
(Dirichlet).  Values are stored with shape ``(count1, count2)`` and flattened
in C order, so the flat index is ``i1 * count2 + i2``.

Every operator here acts in the flat inner product
``<a, b> = sum(weight * conj(a) * b) * h1 * h2``.  The normal-bundle operators
are written after conjugation with ``a**(1/2)`` so that the tube volume element
is absorbed into the wave function.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import Curve, TubeParams, geometric_potential, tube_coordinates

__all__ = [
    "Axis",
    "Grid2D",
    "fullspace_grid",
    "normal_bundle_grid",
    "ConfinementProfile",
    "OperatorMatrix",
    "Region",
    "smoothstep",
    "discrete_laplacian",
    "build_fullspace_hamiltonian",
    "build_dirichlet_hamiltonian",
    "build_normalbundle_hamiltonian",
    "build_effective_hamiltonian",
    "build_tangential_observable",
    "cutoff_multiplier",
    "region_mask",
    "tangential_hamiltonian_1d",
    "oscillator_1d",
    "forward_difference",
]

MIN_COUNT = 16
HERMITIAN_TOL = 1e-12


def smoothstep(x):
    """``3x^2 - 2x^3`` on [0, 1], clamped to 0 below and 1 above."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


@dataclass(frozen=True)
class Axis:
    name: str
    lo: float
    hi: float
    count: int
    boundary: str = "dirichlet"

    def __post_init__(self):
        if self.boundary not in ("periodic", "dirichlet"):
            raise ValueError(f"axis {self.name}: unknown boundary {self.boundary!r}")
        if self.count < MIN_COUNT:
            raise ValueError(f"axis {self.name}: count must be >= {MIN_COUNT}, got {self.count}")
        if not self.hi > self.lo:
            raise ValueError(f"axis {self.name}: need hi > lo")

    @property
    def spacing(self) -> float:
        if self.boundary == "periodic":
            return (self.hi - self.lo) / self.count
        # interior nodes only; the walls sit at lo and hi
        return (self.hi - self.lo) / (self.count + 1)

    @property
    def points(self) -> np.ndarray:
        h = self.spacing
        offset = 0 if self.boundary == "periodic" else 1
        return self.lo + h * (np.arange(self.count) + offset)


@dataclass(frozen=True, eq=False)
class Grid2D:
    axis1: Axis
    axis2: Axis
    weight: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.weight is not None:
            w = np.asarray(self.weight, dtype=float)
            if w.shape != self.shape:
                raise ValueError(f"weight has shape {w.shape}, grid is {self.shape}")
            if not np.all(w > 0):
                raise ValueError("grid weight must be positive everywhere")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.axis1.count, self.axis2.count)

    @property
    def size(self) -> int:
        return self.axis1.count * self.axis2.count

    @property
    def cell(self) -> float:
        return self.axis1.spacing * self.axis2.spacing

    @cached_property
    def weights(self) -> np.ndarray:
        if self.weight is None:
            return np.ones(self.shape)
        return np.asarray(self.weight, dtype=float)

    @property
    def is_normal_bundle(self) -> bool:
        return (self.axis1.name, self.axis2.name) == ("s", "y")

    @property
    def is_fullspace(self) -> bool:
        return (self.axis1.name, self.axis2.name) == ("x1", "x2")

    def mesh(self):
        return np.meshgrid(self.axis1.points, self.axis2.points, indexing="ij")

    def inner(self, a, b) -> complex:
        return complex(np.sum(self.weights * np.conj(a) * b) * self.cell)

    def norm(self, a) -> float:
        return float(np.sqrt(np.sum(self.weights * np.abs(a) ** 2) * self.cell))

    def spec(self) -> dict:
        return {
            ax.name: {"lo": ax.lo, "hi": ax.hi, "count": ax.count, "boundary": ax.boundary}
            for ax in (self.axis1, self.axis2)
        }

    def tube_coordinates(self, curve: Curve):
        """Cached ``(d, s_star, n)`` fields of a full-space grid, each of grid shape."""
        key = id(curve)
        if key not in self._cache:
            if not self.is_fullspace:
                raise ValueError("tube coordinates are defined on full-space grids only")
            x1, x2 = self.mesh()
            d, s_star, n = tube_coordinates(curve, np.column_stack([x1.ravel(), x2.ravel()]))
            self._cache[key] = (curve, tuple(a.reshape(self.shape) for a in (d, s_star, n)))
        return self._cache[key][1]


def fullspace_grid(half_width: float, count: int, center=(0.0, 0.0)) -> Grid2D:
    """Square box ``center +- half_width`` with ``count`` interior nodes per axis."""
    cx, cy = center
    return Grid2D(
        Axis("x1", cx - half_width, cx + half_width, count, "dirichlet"),
        Axis("x2", cy - half_width, cy + half_width, count, "dirichlet"),
    )


def normal_bundle_grid(curve: Curve, ns: int, ny: int, y_max: float) -> Grid2D:
    """Periodic arclength axis times ``[-y_max, y_max]`` in the scaled normal coordinate."""
    return Grid2D(
        Axis("s", 0.0, curve.length, ns, "periodic"),
        Axis("y", -y_max, y_max, ny, "dirichlet"),
    )


@dataclass(frozen=True)
class ConfinementProfile:
    """Transverse frequency and the tangential potential ``v0*cos(2*pi*s/L)``.

    The confining potential is ``W = omega^2 d^2 / 2`` in the plane and
    ``omega^2 n^2 / 2`` on the normal bundle.
    """

    omega: float = 1.0
    v0: float = 0.5

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")

    def tangential_potential(self, curve: Curve, s):
        return self.v0 * np.cos(2.0 * np.pi * np.asarray(s) / curve.length)

    def confining_potential(self, dist):
        return 0.5 * self.omega**2 * np.asarray(dist) ** 2

    def fullspace_potential(self, curve: Curve, d, s_star):
        """``V`` carried off the curve along normals, cut off before the focal set.

        The cutoff runs from ``reach/2`` to ``3*reach/4`` with
        ``reach = 1/max|curvature|``, where ``s_star`` is still single valued.
        """
        reach = 1.0 / max(curve.max_curvature, 1e-300)
        fade = 1.0 - smoothstep((np.asarray(d) - 0.5 * reach) / (0.25 * reach))
        return self.tangential_potential(curve, s_star) * fade


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Sparse matrix acting on grid functions, Hermitian in the grid's inner product.

    ``active`` marks the rows that carry the physics; inactive rows are
    identity rows decoupled from the rest (used for the Dirichlet tube).
    """

    matrix: sp.csr_matrix
    grid: Grid2D
    name: str = ""
    active: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "matrix", sp.csr_matrix(self.matrix))
        if self.matrix.shape != (self.grid.size, self.grid.size):
            raise ValueError("operator dimension does not match its grid")

    @property
    def dimension(self) -> int:
        return self.grid.size

    @property
    def inner_product(self) -> np.ndarray:
        return self.grid.weights

    def asymmetry(self) -> float:
        """Relative Frobenius asymmetry of ``W H`` (zero for a Hermitian operator)."""
        wh = sp.diags(self.grid.weights.ravel()) @ self.matrix
        denom = spla.norm(wh)
        if denom == 0:
            return 0.0
        return float(spla.norm(wh - wh.conj().T) / denom)

    @cached_property
    def hermitian_flag(self) -> bool:
        diag = self.matrix.diagonal()
        return self.asymmetry() <= HERMITIAN_TOL and bool(np.all(np.abs(np.imag(diag)) == 0))

    def apply(self, values):
        v = getattr(values, "values", values)
        return (self.matrix @ np.ravel(v)).reshape(self.grid.shape)

    def expectation(self, values) -> float:
        v = getattr(values, "values", values)
        return float(np.real(self.grid.inner(v, self.apply(v))))

    def restricted(self):
        """Matrix restricted to the active rows and columns."""
        if self.active is None:
            return self.matrix
        idx = np.flatnonzero(self.active.ravel())
        return self.matrix[idx][:, idx]


def _second_difference(axis: Axis) -> sp.csr_matrix:
    n, h = axis.count, axis.spacing
    main = -2.0 * np.ones(n)
    off = np.ones(n - 1)
    lap = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    if axis.boundary == "periodic":
        lap[0, n - 1] = 1.0
        lap[n - 1, 0] = 1.0
    return sp.csr_matrix(lap) / h**2


def forward_difference(axis: Axis) -> sp.csr_matrix:
    """Forward difference; ``D.T @ D`` is minus the second difference.

    Periodic axes give a square matrix, Dirichlet axes an ``(n+1, n)`` matrix
    that includes the two edges touching the walls.
    """
    n, h = axis.count, axis.spacing
    if axis.boundary == "periodic":
        d = sp.diags([-np.ones(n), np.ones(n - 1)], [0, 1], format="lil")
        d[n - 1, 0] = 1.0
        return sp.csr_matrix(d) / h
    d = sp.diags([np.ones(n), -np.ones(n)], [-1, 0], shape=(n + 1, n))
    return sp.csr_matrix(d) / h


def discrete_laplacian(grid: Grid2D) -> sp.csr_matrix:
    """Five-point Laplacian honouring each axis' boundary condition."""
    i1 = sp.identity(grid.axis1.count, format="csr")
    i2 = sp.identity(grid.axis2.count, format="csr")
    return sp.csr_matrix(sp.kron(_second_difference(grid.axis1), i2) + sp.kron(i1, _second_difference(grid.axis2)))


def _check_lambda(lam: float) -> None:
    if lam < 1:
        raise ValueError(f"lambda must be >= 1, got {lam}")


def _check_fullspace(grid: Grid2D, curve: Curve, profile: ConfinementProfile, lam: float) -> None:
    if not grid.is_fullspace:
        raise ValueError("expected a full-space grid with axes x1, x2")
    _check_lambda(lam)
    width = (lam**2 * profile.omega) ** -0.5
    h_max = width / 6.0
    for ax in (grid.axis1, grid.axis2):
        if ax.spacing > h_max:
            need = int(np.ceil((ax.hi - ax.lo) / h_max)) - 1
            raise ValueError(
                f"grid under-resolved on {ax.name}: spacing {ax.spacing:.4g} exceeds "
                f"(lambda^2 omega)^(-1/2)/6 = {h_max:.4g}; use count >= {need}"
            )
    pos = curve.position(np.linspace(0.0, curve.length, 4 * curve.sample_count, endpoint=False))
    for k, ax in enumerate((grid.axis1, grid.axis2)):
        if pos[:, k].min() <= ax.lo or pos[:, k].max() >= ax.hi:
            raise ValueError(f"box does not contain the curve along {ax.name}")


def build_fullspace_hamiltonian(grid: Grid2D, curve: Curve, profile: ConfinementProfile, lam: float) -> OperatorMatrix:
    """``H = -Laplacian/2 + V + lambda^4 W`` on a box with Dirichlet walls."""
    _check_fullspace(grid, curve, profile, lam)
    d, s_star, _ = grid.tube_coordinates(curve)
    potential = profile.fullspace_potential(curve, d, s_star) + lam**4 * profile.confining_potential(d)
    h = -0.5 * discrete_laplacian(grid) + sp.diags(potential.ravel())
    return OperatorMatrix(h, grid, name="H_lambda")


def build_dirichlet_hamiltonian(
    grid: Grid2D, curve: Curve, profile: ConfinementProfile, lam: float, tube: TubeParams
) -> OperatorMatrix:
    """Same stencil as the full-space operator, restricted to ``d < delta``.

    Points outside the tube get identity rows with no coupling, so state
    components there stay at zero under any function of the operator.
    """
    tube.check(curve)
    pos = curve.position(np.linspace(0.0, curve.length, 4 * curve.sample_count, endpoint=False))
    for k, ax in enumerate((grid.axis1, grid.axis2)):
        if pos[:, k].min() - 3 * tube.delta < ax.lo or pos[:, k].max() + 3 * tube.delta > ax.hi:
            raise ValueError(f"box margin along {ax.name} is below 3*delta")
    full = build_fullspace_hamiltonian(grid, curve, profile, lam)
    d, _, _ = grid.tube_coordinates(curve)
    active = d < tube.delta
    p = sp.diags(active.ravel().astype(float))
    h = p @ full.matrix @ p + sp.diags((~active).ravel().astype(float))
    return OperatorMatrix(h, grid, name="H_lambda_delta", active=active)


def _check_normal_bundle(grid: Grid2D, curve: Curve, profile: ConfinementProfile, lam: float) -> None:
    if not grid.is_normal_bundle:
        raise ValueError("expected a normal-bundle grid with axes s, y")
    _check_lambda(lam)
    s_ax, y_ax = grid.axis1, grid.axis2
    if s_ax.boundary != "periodic" or abs(s_ax.hi - s_ax.lo - curve.length) > 1e-9 * curve.length:
        raise ValueError("the s axis must be periodic over the curve length")
    if y_ax.boundary != "dirichlet":
        raise ValueError("the y axis must carry Dirichlet walls")
    scale = profile.omega**-0.5
    if min(-y_ax.lo, y_ax.hi) < 8.0 * scale:
        raise ValueError(f"y box must cover [-8/sqrt(omega), 8/sqrt(omega)] = +-{8 * scale:.4g}")
    if y_ax.spacing > scale / 8.0:
        need = int(np.ceil((y_ax.hi - y_ax.lo) / (scale / 8.0))) - 1
        raise ValueError(f"y axis under-resolved: need >= 8 points per 1/sqrt(omega); use count >= {need}")


def tangential_hamiltonian_1d(axis: Axis, curve: Curve, profile: ConfinementProfile) -> sp.csr_matrix:
    """``-d_s^2/2 + V(s) - curvature(s)^2/8`` on the periodic arclength axis."""
    s = axis.points
    dfw = forward_difference(axis)
    pot = profile.tangential_potential(curve, s) - curve.curvature(s) ** 2 / 8.0
    return sp.csr_matrix(0.5 * (dfw.T @ dfw) + sp.diags(pot))


def oscillator_1d(axis: Axis, omega: float) -> sp.csr_matrix:
    """``(-d_y^2 + omega^2 y^2)/2`` with Dirichlet walls."""
    y = axis.points
    return sp.csr_matrix(-0.5 * _second_difference(axis) + sp.diags(0.5 * omega**2 * y**2))


def build_normalbundle_hamiltonian(
    grid: Grid2D,
    curve: Curve,
    profile: ConfinementProfile,
    lam: float,
    tube: TubeParams,
    geometric: bool = True,
) -> OperatorMatrix:
    """Flattened tube Hamiltonian in the coordinates ``(s, y = lambda*n)``.

    Assembles ``1/2 D_s^T a^-2 D_s - (lambda^2/2) d_y^2 + V(s)
    + (lambda^2/2) omega^2 y^2 + V_geom`` where ``a = max(1 - kappa*y/lambda, a_min)``
    is evaluated at the half-integer ``s`` nodes of the forward difference and
    ``V_geom`` is :func:`~confined_qdyn.geometry.geometric_potential`.
    ``geometric=False`` sets ``a = 1`` and drops ``V_geom`` (the flat tube).
    """
    _check_normal_bundle(grid, curve, profile, lam)
    s_ax, y_ax = grid.axis1, grid.axis2
    s, y = s_ax.points, y_ax.points
    n = y / lam
    dfw = sp.kron(forward_difference(s_ax), sp.identity(y_ax.count), format="csr")
    i_s = sp.identity(s_ax.count, format="csr")

    if geometric:
        s_mid = s + 0.5 * s_ax.spacing
        a_mid = np.maximum(1.0 - np.outer(curve.curvature(s_mid), n), tube.a_min)
        kappa = curve.curvature(s)
        a = np.maximum(1.0 - np.outer(kappa, n), tube.a_min)
        v_geom = geometric_potential(
            kappa[:, None],
            curve.curvature_derivative(s, 1)[:, None],
            curve.curvature_derivative(s, 2)[:, None],
            n[None, :],
            a,
        )
    else:
        a_mid = np.ones(grid.shape)
        v_geom = np.zeros(grid.shape)

    tangential = 0.5 * dfw.T @ sp.diags(a_mid.ravel() ** -2) @ dfw
    normal = sp.kron(i_s, -0.5 * lam**2 * _second_difference(y_ax))
    potential = (
        profile.tangential_potential(curve, s)[:, None]
        + 0.5 * lam**2 * profile.omega**2 * y[None, :] ** 2
        + v_geom
    )
    h = tangential + normal + sp.diags(potential.ravel())
    return OperatorMatrix(h, grid, name="L_lambda")


def build_effective_hamiltonian(grid: Grid2D, curve: Curve, profile: ConfinementProfile, lam: float) -> OperatorMatrix:
    """``L_0 = H_B (x) 1 + lambda^2 1 (x) H_O`` with ``H_B = -d_s^2/2 + V - kappa^2/8``."""
    _check_normal_bundle(grid, curve, profile, lam)
    s_ax, y_ax = grid.axis1, grid.axis2
    h_b = tangential_hamiltonian_1d(s_ax, curve, profile)
    h_o = oscillator_1d(y_ax, profile.omega)
    h = sp.kron(h_b, sp.identity(y_ax.count)) + lam**2 * sp.kron(sp.identity(s_ax.count), h_o)
    return OperatorMatrix(h, grid, name="L_0_lambda")


@dataclass(frozen=True)
class Region:
    """Region selected by a cutoff.

    kind
        ``"d_ge"``: ``d(x, S) >= value``; ``"d_le"``: its complement
        ``d(x, S) < value`` (full-space grids).  ``"n_lt"``: ``|y|/lambda < value``;
        ``"f3"``: ``|y| < lambda**(1 - value)`` with ``value`` the exponent
        (normal-bundle grids).
    """

    kind: str
    value: float
    lam: float | None = None

    KINDS = ("d_ge", "d_le", "n_lt", "f3")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown region {self.kind!r}; expected one of {self.KINDS}")
        if self.kind in ("n_lt", "f3") and self.lam is None:
            raise ValueError(f"region {self.kind} needs lambda")

    def complement(self) -> "Region":
        pairs = {"d_ge": "d_le", "d_le": "d_ge"}
        if self.kind not in pairs:
            raise ValueError(f"region {self.kind} has no named complement")
        return Region(pairs[self.kind], self.value, self.lam)


def _region_coordinate(grid: Grid2D, region: Region, curve: Curve | None):
    """Scalar field compared against the threshold, threshold, and orientation."""
    if region.kind in ("d_ge", "d_le"):
        if curve is None or not grid.is_fullspace:
            raise ValueError(f"region {region.kind} needs a full-space grid and a curve")
        d, _, _ = grid.tube_coordinates(curve)
        return d, region.value, region.kind == "d_le"
    if not grid.is_normal_bundle:
        raise ValueError(f"region {region.kind} needs a normal-bundle grid")
    _, y = grid.mesh()
    if region.kind == "n_lt":
        return np.abs(y) / region.lam, region.value, True
    return np.abs(y), region.lam ** (1.0 - region.value), True


def region_mask(grid: Grid2D, region: Region, curve: Curve | None = None) -> np.ndarray:
    """Sharp 0/1 indicator of ``region``."""
    coord, threshold, below = _region_coordinate(grid, region, curve)
    inside = coord < threshold if below else coord >= threshold
    return inside.astype(float)


def _smooth_profile(grid, region, curve, width):
    coord, threshold, below = _region_coordinate(grid, region, curve)
    if width is None:
        width = 0.25 * threshold
    # ramps across [threshold - width, threshold]; equals the sharp cutoff elsewhere
    inner = 1.0 - smoothstep((coord - (threshold - width)) / width)
    return inner if below else 1.0 - inner


def cutoff_multiplier(
    grid: Grid2D,
    region: Region,
    smooth: bool = False,
    width: float | None = None,
    curve: Curve | None = None,
) -> OperatorMatrix:
    """Diagonal multiplication by the (sharp or smoothed) indicator of ``region``.

    The smooth version ramps over ``width`` (default a quarter of the
    threshold) just inside the threshold and agrees with the sharp version
    outside that annulus.
    """
    values = _smooth_profile(grid, region, curve, width) if smooth else region_mask(grid, region, curve)
    return OperatorMatrix(sp.diags(values.ravel()), grid, name=f"F[{region.kind}]")


def build_tangential_observable(grid: Grid2D, curve: Curve, tube: TubeParams, lam: float) -> OperatorMatrix:
    """``Qbar = F2 Q F2 + 1`` with ``Q = D_s^* D_s`` and ``F2`` smooth on ``|y|/lambda < epsilon``.

    The closed curve is covered by the single periodic arclength chart, where
    the tangential metric is the identity.
    """
    if not grid.is_normal_bundle:
        raise ValueError("Qbar is defined on normal-bundle grids")
    dfw = sp.kron(forward_difference(grid.axis1), sp.identity(grid.axis2.count), format="csr")
    q = dfw.T @ dfw
    f2 = cutoff_multiplier(grid, Region("n_lt", tube.epsilon, lam), smooth=True).matrix
    h = f2 @ q @ f2 + sp.identity(grid.size)
    return OperatorMatrix(h, grid, name="Qbar")
