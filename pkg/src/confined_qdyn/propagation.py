"""Crank-Nicolson time evolution and the standard initial states."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .diagnostics import TrajectoryRecord
from .geometry import Curve, TubeParams
from .operators import ConfinementProfile, Grid2D, OperatorMatrix, smoothstep

__all__ = [
    "WaveFunction",
    "PropagatorConfig",
    "PropagationError",
    "CrankNicolson",
    "step_crank_nicolson",
    "propagate",
    "propagate_many",
    "make_standard_state",
]

log = logging.getLogger(__name__)

NORM_DRIFT_LIMIT = 1e-6


class PropagationError(RuntimeError):
    """Linear solve failed or the evolution stopped being unitary."""


@dataclass
class WaveFunction:
    values: np.ndarray
    grid: Grid2D
    normalized_flag: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex).reshape(self.grid.shape)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("wave function has non-finite entries")

    def norm(self) -> float:
        return self.grid.norm(self.values)

    def inner(self, other: "WaveFunction") -> complex:
        return self.grid.inner(self.values, other.values)

    def normalized(self) -> "WaveFunction":
        nrm = self.norm()
        if nrm == 0:
            raise ValueError("cannot normalize the zero state")
        return WaveFunction(self.values / nrm, self.grid, True)


@dataclass(frozen=True)
class PropagatorConfig:
    dt: float
    t_final: float
    solver_tol: float = 1e-10
    max_solver_iters: int = 10000
    solver: str = "lu"

    def __post_init__(self):
        if not (self.dt > 0 and self.t_final > 0):
            raise ValueError("dt and t_final must be positive")
        if self.dt > self.t_final * (1 + 1e-12):
            raise ValueError("dt must not exceed t_final")
        if self.solver not in ("lu", "cg"):
            raise ValueError(f"unknown solver {self.solver!r}")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_final / self.dt)))


class CrankNicolson:
    """Cayley step ``(1 + i dt H/2)^-1 (1 - i dt H/2)`` for a fixed operator.

    ``solver="lu"`` factorises the left-hand matrix once.  ``solver="cg"``
    runs conjugate gradients on the normal equations, whose matrix
    ``1 + dt^2 H^2 / 4`` is Hermitian positive definite.  A negative ``dt``
    steps backwards in time.
    """

    def __init__(self, H: OperatorMatrix, dt: float, tol: float = 1e-10, solver: str = "lu", max_iters: int = 10000):
        self.H = H
        self.dt = dt
        self.tol = tol
        self.solver = solver
        self.max_iters = max_iters
        ident = sp.identity(H.dimension, dtype=complex, format="csc")
        half = 0.5j * dt * H.matrix.astype(complex)
        self._lhs = sp.csc_matrix(ident + half)
        self._rhs = sp.csr_matrix(ident - half)
        if solver == "lu":
            # the sparsity pattern is symmetric; minimum degree on A^T+A keeps fill low
            self._lu = spla.splu(self._lhs, permc_spec="MMD_AT_PLUS_A")
        else:
            lhs_h = self._lhs.conj().T.tocsr()
            self._lhs_h = lhs_h
            self._normal = spla.LinearOperator(
                self._lhs.shape, matvec=lambda v: lhs_h @ (self._lhs @ v), dtype=complex
            )

    def step(self, values: np.ndarray) -> np.ndarray:
        psi = np.ravel(values)
        b = self._rhs @ psi
        if self.solver == "lu":
            x = self._lu.solve(b)
        else:
            x, info = spla.cg(self._normal, self._lhs_h @ b, x0=psi, rtol=0.1 * self.tol, atol=0.0, maxiter=self.max_iters)
            if info != 0:
                res = np.linalg.norm(self._lhs @ x - b)
                raise PropagationError(f"CG did not converge in {self.max_iters} iterations; residual {res:.3e}")
        scale = np.linalg.norm(psi)
        res = np.linalg.norm(self._lhs @ x - b)
        if res > self.tol * max(scale, 1e-300):
            raise PropagationError(f"Crank-Nicolson solve residual {res:.3e} exceeds {self.tol:.1e} * |psi|")
        return x.reshape(np.shape(values))


def step_crank_nicolson(H: OperatorMatrix, psi: WaveFunction, dt: float, tol: float = 1e-10) -> WaveFunction:
    """One Crank-Nicolson step of ``psi`` under ``H``."""
    out = CrankNicolson(H, dt, tol).step(psi.values)
    return WaveFunction(out, psi.grid, psi.normalized_flag)


def _check_step(H: OperatorMatrix, dt: float) -> None:
    # crude |H|_inf estimate; large dt*|H| is allowed but loses phase accuracy
    h_inf = abs(H.matrix).sum(axis=1).max()
    if dt * h_inf > 2.0:
        log.debug("dt*|H|_inf = %.3g > 2 for %s", dt * h_inf, H.name)


def propagate_many(
    systems: Mapping[str, tuple[OperatorMatrix, WaveFunction]],
    cfg: PropagatorConfig,
    observers: Sequence[tuple[str, Callable[[dict], float]]] = (),
    metadata: dict | None = None,
    direction: int = 1,
) -> tuple[TrajectoryRecord, dict[str, WaveFunction]]:
    """Evolve several states in lockstep and observe them at every step.

    The first system provides the ``norm`` and ``energy`` columns; further
    systems add ``norm_<name>`` and ``energy_<name>``.  Each observer gets the
    dict of current states.  Returns the record and the final states.
    """
    if not systems:
        raise ValueError("nothing to propagate")
    names = list(systems)
    steppers = {}
    states = {}
    for name, (H, psi0) in systems.items():
        if psi0.grid is not H.grid and psi0.grid.spec() != H.grid.spec():
            raise ValueError(f"system {name}: state and operator live on different grids")
        _check_step(H, cfg.dt)
        steppers[name] = CrankNicolson(H, direction * cfg.dt, cfg.solver_tol, cfg.solver, cfg.max_solver_iters)
        states[name] = psi0

    def suffix(name):
        return "" if name == names[0] else f"_{name}"

    columns = {}
    for name in names:
        columns[f"norm{suffix(name)}"] = []
        columns[f"energy{suffix(name)}"] = []
    for obs_name, _ in observers:
        columns[obs_name] = []

    def observe():
        for name in names:
            H, _ = systems[name]
            psi = states[name]
            columns[f"norm{suffix(name)}"].append(psi.norm())
            columns[f"energy{suffix(name)}"].append(H.expectation(psi))
        for obs_name, fn in observers:
            columns[obs_name].append(float(fn(states)))

    n = cfg.n_steps
    norms0 = {name: states[name].norm() for name in names}
    observe()
    for _ in range(n):
        for name in names:
            psi = states[name]
            states[name] = WaveFunction(steppers[name].step(psi.values), psi.grid, psi.normalized_flag)
        observe()
        for name in names:
            drift = abs(columns[f"norm{suffix(name)}"][-1] - norms0[name])
            if drift > NORM_DRIFT_LIMIT * max(norms0[name], 1e-300):
                raise PropagationError(f"norm drift {drift:.3e} in system {name!r} exceeds {NORM_DRIFT_LIMIT:g}")

    times = direction * cfg.dt * np.arange(n + 1)
    record = TrajectoryRecord(times, {k: np.asarray(v) for k, v in columns.items()}, dict(metadata or {}))
    return record, states


def propagate(
    H: OperatorMatrix,
    psi0: WaveFunction,
    cfg: PropagatorConfig,
    observers: Sequence[tuple[str, Callable[[WaveFunction], float]]] = (),
    metadata: dict | None = None,
) -> TrajectoryRecord:
    """Evolve ``psi0`` under ``H`` up to ``cfg.t_final``, recording every step."""
    wrapped = [(name, (lambda states, fn=fn: fn(states["psi"]))) for name, fn in observers]
    record, _ = propagate_many({"psi": (H, psi0)}, cfg, wrapped, metadata)
    return record


def _tangential_packet(s, length, k0, w_s, s0):
    """Periodised ``exp(i k0 s) exp(-(s - s0)^2 / (4 w_s^2))``."""
    images = int(math.ceil(14.0 * w_s / length)) + 1
    out = np.zeros(np.shape(s), dtype=complex)
    for m in range(-images, images + 1):
        shifted = s + m * length
        out += np.exp(1j * k0 * shifted - (shifted - s0) ** 2 / (4.0 * w_s**2))
    return out


def make_standard_state(
    grid: Grid2D,
    curve: Curve,
    profile: ConfinementProfile,
    lam: float,
    space: str = "normal_bundle",
    k0: float = 2.0,
    w_s: float = 0.5,
    s0: float = 0.0,
    tube: TubeParams | None = None,
) -> WaveFunction:
    """Normalised product of a tangential wave packet and the transverse ground state.

    ``space`` is ``"normal_bundle"`` (grid over ``(s, y)``, transverse factor
    ``exp(-omega y^2/2)``) or ``"fullspace"`` / ``"tube_dirichlet"`` (box grid,
    transverse factor ``exp(-lambda^2 omega n^2/2)`` in the signed normal
    distance, smoothly switched off across ``[3 delta/4, delta]``).
    """
    if not 0.2 <= w_s <= 1.0:
        raise ValueError(f"w_s must lie in [0.2, 1], got {w_s}")
    if abs(k0) > 4:
        raise ValueError(f"|k0| must be <= 4, got {k0}")
    if space == "normal_bundle":
        if not grid.is_normal_bundle:
            raise ValueError("normal_bundle state needs an (s, y) grid")
        if grid.axis2.spacing > profile.omega**-0.5 / 8.0:
            raise ValueError("y axis cannot resolve the transverse ground state")
        s, y = grid.mesh()
        values = _tangential_packet(s, curve.length, k0, w_s, s0) * np.exp(-0.5 * profile.omega * y**2)
    elif space in ("fullspace", "tube_dirichlet"):
        if tube is None:
            raise ValueError(f"{space} state needs tube parameters")
        if not grid.is_fullspace:
            raise ValueError(f"{space} state needs a full-space grid")
        width = (lam**2 * profile.omega) ** -0.5
        if max(grid.axis1.spacing, grid.axis2.spacing) > width / 6.0:
            raise ValueError("grid cannot resolve the transverse width (lambda^2 omega)^(-1/2)")
        d, s_star, n = grid.tube_coordinates(curve)
        cut = 1.0 - smoothstep((d - 0.75 * tube.delta) / (0.25 * tube.delta))
        values = _tangential_packet(s_star, curve.length, k0, w_s, s0) * np.exp(-0.5 * lam**2 * profile.omega * n**2) * cut
        if space == "tube_dirichlet":
            values = values * (d < tube.delta)
    else:
        raise ValueError(f"unknown space {space!r}")
    return WaveFunction(values, grid).normalized()
